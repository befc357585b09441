"""Central finite differences over a task, used as the gradient oracle."""
from __future__ import annotations

import numpy as np

from ..core import InvalidArgument, TaskHandle


def finite_difference_gradient(task: TaskHandle, x, h: float, box: bool = True) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every i.

    With ``box=True`` the step ``h`` and the returned gradient are in unit-box
    coordinates; otherwise in task units.  All 2m probes go through a single
    batch so every probe sees the same environment draws.
    """
    if not h > 0:
        raise InvalidArgument("h must be positive")
    space = task.space
    x = space.check(x)
    m = space.m
    steps = np.eye(m) * h
    if box:
        steps = steps * space.width
    probes = np.concatenate([x + steps, x - steps])
    res = task.evaluate_batch(probes)
    if np.any(res.diverged):
        raise FloatingPointError("finite-difference probe diverged")
    return (res.loss[:m] - res.loss[m:]) / (2.0 * h)
