from __future__ import annotations

from dataclasses import asdict
from typing import Callable

import numpy as np

from ..core import InvalidArgument, TaskHandle
from .record import Evaluator, RunRecord


class Optimizer:
    """Shared iteration driver.

    Subclasses implement ``start`` (build state) and ``iterate`` (spend
    ``cost`` evaluations, return the evaluated task-unit points and losses).
    All internal state lives in unit-box coordinates.
    """

    name = "optimizer"

    def __init__(self, config):
        self.config = config

    @property
    def cost(self) -> int:
        raise NotImplementedError

    @property
    def iterations(self) -> int:
        return int(self.config.iterations)

    def start(self, task: TaskHandle, rng: np.random.Generator):
        raise NotImplementedError

    def iterate(self, state, ev: Evaluator, t: int, T: int, rng: np.random.Generator):
        raise NotImplementedError

    def metadata(self) -> dict:
        return {"algorithm": self.name, **asdict(self.config)}

    def run(
        self,
        task: TaskHandle,
        rng: np.random.Generator,
        iterations: int | None = None,
        max_evaluations: int | None = None,
        stop: Callable[[RunRecord], bool] | None = None,
        log_points: bool = False,
        seed: int | None = None,
        record: RunRecord | None = None,
        offset: int = 0,
    ) -> RunRecord:
        """Run up to ``iterations``; never starts an iteration that would exceed the budget.

        With ``record``/``offset`` the run appends to an existing record whose
        evaluation counts start at ``offset`` (used by the restart loop).
        """
        T = self.iterations if iterations is None else int(iterations)
        rec = record if record is not None else RunRecord(self.name, seed, self.metadata())
        ev = Evaluator(task, rec, log_points)
        ev.count = offset
        state = self.start(task, rng)
        n0 = rec.iterations
        for t in range(T):
            if max_evaluations is not None and ev.count + self.cost > max_evaluations:
                break
            X, loss = self.iterate(state, ev, t, T, rng)
            rec.close_iteration(X, loss, ev.count)
            if stop is not None and stop(_View(rec, n0)):
                break
        return rec


class _View:
    """The part of a record produced by the current restart."""

    def __init__(self, rec: RunRecord, start: int):
        self.best_loss = _running_min(rec.iteration_loss[start:])

    def stagnated(self, window: int = 10) -> bool:
        return RunRecord.stagnated(self, window)  # type: ignore[arg-type]


def _running_min(values) -> list:
    return list(np.minimum.accumulate(values)) if len(values) else []


def check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise InvalidArgument(f"{k} must be positive, got {v}")
