from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..core import BatchEvaluation, TaskHandle


@dataclass
class RunRecord:
    """Per-iteration history of one optimizer run.

    ``best_loss`` is the running minimum over every evaluation so far,
    ``iteration_loss`` the best loss seen within that iteration alone.
    """

    algorithm: str
    seed: int | None = None
    config: dict = field(default_factory=dict)
    best_loss: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    iteration_loss: list = field(default_factory=list)
    iteration_best_x: list = field(default_factory=list)
    best_x: np.ndarray | None = None
    restarts: list = field(default_factory=list)
    events: list = field(default_factory=list)
    points: list | None = None  # (evaluation_index, loss, x) rows when logging

    @property
    def iterations(self) -> int:
        return len(self.best_loss)

    @property
    def total_evaluations(self) -> int:
        return self.evaluations[-1] if self.evaluations else 0

    @property
    def final_best(self) -> float:
        return self.best_loss[-1] if self.best_loss else float("inf")

    def close_iteration(self, X: np.ndarray, loss: np.ndarray, count: int) -> None:
        i = int(np.argmin(loss))
        it_best = float(loss[i])
        if not self.best_loss or it_best < self.best_loss[-1]:
            self.best_x = np.array(X[i])
            running = it_best
        else:
            running = self.best_loss[-1]
        self.best_loss.append(running)
        self.iteration_loss.append(it_best)
        self.iteration_best_x.append(np.array(X[i]))
        self.evaluations.append(int(count))

    def stagnated(self, window: int = 10) -> bool:
        """Best loss identical over the last ``window`` iterations."""
        return len(self.best_loss) >= window and self.best_loss[-1] == self.best_loss[-window]

    def rows(self):
        for t, (e, b, it) in enumerate(zip(self.evaluations, self.best_loss, self.iteration_loss)):
            yield t, e, b, it

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "evaluations", "best_loss", "iteration_loss"])
        for t, e, b, it in self.rows():
            w.writerow([t, e, repr(float(b)), repr(float(it))])
        return buf.getvalue()

    def points_csv(self, header: str | None = None) -> str:
        if self.points is None:
            raise ValueError("run was not recorded with a points log")
        buf = io.StringIO()
        if header:
            buf.write(header)
        w = csv.writer(buf, lineterminator="\n")
        m = len(self.points[0][2]) if self.points else 0
        w.writerow(["evaluation_index", "loss"] + [f"x{i + 1}" for i in range(m)])
        for idx, loss, x in self.points:
            w.writerow([idx, repr(float(loss))] + [repr(float(v)) for v in x])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "config": self.config,
            "best_loss": [float(v) for v in self.best_loss],
            "evaluations": list(self.evaluations),
            "iteration_loss": [float(v) for v in self.iteration_loss],
            "iteration_best_x": [np.asarray(x).tolist() for x in self.iteration_best_x],
            "best_x": None if self.best_x is None else self.best_x.tolist(),
            "restarts": list(self.restarts),
            "events": list(self.events),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            algorithm=d["algorithm"],
            seed=d.get("seed"),
            config=d.get("config", {}),
            best_loss=list(d["best_loss"]),
            evaluations=list(d["evaluations"]),
            iteration_loss=list(d.get("iteration_loss", d["best_loss"])),
            iteration_best_x=[np.asarray(x) for x in d.get("iteration_best_x", [])],
            best_x=None if d.get("best_x") is None else np.asarray(d["best_x"]),
            restarts=list(d.get("restarts", [])),
            events=list(d.get("events", [])),
        )


class Evaluator:
    """Counts every evaluated row and optionally logs it."""

    def __init__(self, task: TaskHandle, record: RunRecord, log_points: bool = False):
        self.task = task
        self.record = record
        self.count = 0
        if log_points and record.points is None:
            record.points = []

    def _log(self, X, res: BatchEvaluation):
        if self.record.points is not None:
            for k in range(len(X)):
                self.record.points.append((self.count + k, float(res.loss[k]), np.array(X[k])))
        self.count += len(X)

    def loss(self, X) -> BatchEvaluation:
        res = self.task.evaluate_batch(X)
        self._log(X, res)
        return res

    def loss_and_gradient(self, X) -> BatchEvaluation:
        res = self.task.evaluate_with_gradient_batch(X)
        self._log(X, res)
        return res
