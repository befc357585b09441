from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import jax
import numpy as np

from ..core import BatchEvaluation, ParameterSpace, TaskHandle, sentinel_fill
from ..diffsim.engine import GRADIENT_LIMIT

SPEC_DIR = Path(__file__).parent / "specs"


def load_spec(name_or_path) -> dict:
    p = Path(name_or_path)
    if not p.suffix:
        p = SPEC_DIR / f"{name_or_path.lower()}.json"
    with open(p) as fh:
        return json.load(fh)


def jax_task(
    name: str,
    space: ParameterSpace,
    loss_fn: Callable,
    steps: int,
    chunk: int,
    metadata: dict | None = None,
) -> TaskHandle:
    """Wrap ``loss_fn(x) -> (loss, diverged_step)`` as a batched task.

    Batches are evaluated in chunks of ``chunk`` rows (bounds adjoint memory).
    Diverged rows get the sentinel loss and a zero gradient; rows whose
    gradient exceeds the overflow limit keep their loss but get a zero gradient.
    """
    fwd = jax.jit(jax.vmap(loss_fn))
    vg = jax.jit(jax.vmap(jax.value_and_grad(loss_fn, has_aux=True)))

    def run(X, with_grad):
        X = space.check(X)
        losses, grads, bad, gbad = [], [], [], []
        for start in range(0, len(X), chunk):
            block = X[start : start + chunk]
            if with_grad:
                (loss, div), g = vg(block)
                g = np.asarray(g)
                grads.append(g)
                gbad.append(np.any(np.abs(g) > GRADIENT_LIMIT, axis=-1))
            else:
                loss, div = fwd(block)
            bad.append(np.asarray(div) < steps)
            losses.append(np.asarray(loss))
        loss, grad, flagged = sentinel_fill(
            np.concatenate(losses),
            np.concatenate(grads) if with_grad else None,
            np.concatenate(bad),
            np.concatenate(gbad) if with_grad else None,
        )
        return BatchEvaluation(loss, grad, flagged)

    return TaskHandle(
        name,
        space,
        lambda X: run(X, False),
        lambda X: run(X, True),
        dict(metadata or {}),
    )
