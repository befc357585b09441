from __future__ import annotations

import numpy as np

from ..core import InvalidArgument, TaskHandle
from .base import Optimizer
from .record import RunRecord

STAGNATION_WINDOW = 10
MAX_RESTART_ITERATIONS = 250


def restart_loop(
    optimizer: Optimizer,
    task: TaskHandle,
    eval_budget: int,
    rng: np.random.Generator,
    window: int = STAGNATION_WINDOW,
    max_iterations: int = MAX_RESTART_ITERATIONS,
    seed: int | None = None,
) -> RunRecord:
    """Fresh restarts until the evaluation budget runs out.

    A restart ends when its best loss has been identical for ``window``
    consecutive iterations or after ``max_iterations``.  A restart is only
    started if at least one of its iterations fits in the remaining budget.
    The merged record's best loss is the global running minimum.
    """
    if eval_budget < optimizer.cost:
        raise InvalidArgument("budget smaller than one iteration")
    rec = RunRecord(optimizer.name, seed, {**optimizer.metadata(), "restart_window": window, "restart_max_iterations": max_iterations, "eval_budget": int(eval_budget)})
    used = 0
    while used + optimizer.cost <= eval_budget:
        rec.restarts.append(rec.iterations)
        optimizer.run(
            task,
            rng,
            iterations=max_iterations,
            max_evaluations=eval_budget,
            stop=lambda view: view.stagnated(window),
            record=rec,
            offset=used,
        )
        used = rec.total_evaluations
    return rec


def merge_restarts(segments: list[list[float]]) -> list[float]:
    """Running minimum over concatenated per-restart iteration losses."""
    flat = [v for seg in segments for v in seg]
    return list(np.minimum.accumulate(flat)) if flat else []
