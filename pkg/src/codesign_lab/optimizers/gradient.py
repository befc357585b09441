"""SGD with momentum and Adam over a batch of independent starts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import InvalidArgument, project_box
from .base import Optimizer


def lr_grid(low: float = 1e-3, high: float = 1e-1, n: int = 9) -> np.ndarray:
    return np.logspace(np.log10(low), np.log10(high), n)


@dataclass(frozen=True)
class SgdConfig:
    lr: float = 1e-2
    momentum: float = 0.9
    batch: int = 250
    iterations: int = 50

    def __post_init__(self):
        if self.lr < 0 or not 0 <= self.momentum < 1 or self.batch < 1:
            raise InvalidArgument("need lr >= 0, 0 <= momentum < 1, batch >= 1")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 250
    iterations: int = 50

    def __post_init__(self):
        if self.lr < 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.batch < 1:
            raise InvalidArgument("need lr >= 0, betas in [0, 1), batch >= 1")


class _GradientDescent(Optimizer):
    @property
    def cost(self) -> int:
        return self.config.batch

    def start(self, task, rng):
        z = rng.random((self.config.batch, task.space.m))
        return {"z": z, "space": task.space, "m": np.zeros_like(z), "v": np.zeros_like(z), "k": 0}

    def iterate(self, state, ev, t, T, rng):
        space = state["space"]
        X = space.from_box(state["z"])
        res = ev.loss_and_gradient(X)
        g = space.gradient_to_box(res.gradient)
        state["z"] = project_box(state["z"] - self.direction(state, g))
        return X, res.loss


class Sgd(_GradientDescent):
    name = "sgd"

    def direction(self, state, g):
        c = self.config
        state["m"] = c.momentum * state["m"] + g
        return c.lr * state["m"]


class Adam(_GradientDescent):
    name = "adam"

    def direction(self, state, g):
        c = self.config
        state["k"] += 1
        k = state["k"]
        state["m"] = c.beta1 * state["m"] + (1 - c.beta1) * g
        state["v"] = c.beta2 * state["v"] + (1 - c.beta2) * g * g
        mhat = state["m"] / (1 - c.beta1**k)
        vhat = state["v"] / (1 - c.beta2**k)
        return c.lr * mhat / (np.sqrt(vhat) + c.eps)


def sgd_run(task, config: SgdConfig, rng, **kw):
    return Sgd(config).run(task, rng, **kw)


def adam_run(task, config: AdamConfig, rng, **kw):
    return Adam(config).run(task, rng, **kw)
