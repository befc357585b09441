from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import InvalidArgument, project_box
from .base import Optimizer


@dataclass(frozen=True)
class GaConfig:
    population: int = 250
    elite_ratio: float = 0.25
    mutation_sigma: float = 0.1
    iterations: int = 50

    def __post_init__(self):
        if self.population < 4:
            raise InvalidArgument("population >= 4 required")
        if not 0 < self.elite_ratio <= 1 or self.mutation_sigma < 0:
            raise InvalidArgument("need 0 < elite_ratio <= 1 and mutation_sigma >= 0")


class Ga(Optimizer):
    """Continuous GA.

    Each generation breeds a full population from the elites of the last one
    (uniform crossover, Gaussian mutation in box units).  The best individual
    found so far survives by replacing the worst child, with its known loss.
    """

    name = "ga"

    @property
    def cost(self) -> int:
        return self.config.population

    def start(self, task, rng):
        return {"space": task.space, "pop": None, "loss": None, "init": rng.random((self.config.population, task.space.m))}

    def iterate(self, s, ev, t, T, rng):
        c = self.config
        space = s["space"]
        if s["pop"] is None:
            children = s.pop("init")
        else:
            k = math.ceil(c.elite_ratio * c.population)
            elite = s["pop"][np.argsort(s["loss"], kind="stable")[:k]]
            a = elite[np.arange(c.population) % k]
            b = elite[rng.integers(0, k, c.population)]
            mask = rng.random(a.shape) < 0.5
            children = np.where(mask, a, b) + c.mutation_sigma * rng.standard_normal(a.shape)
            children = project_box(children)
        X = space.from_box(children)
        loss = ev.loss(X).loss
        pop, kept = children, loss
        if s["pop"] is not None:
            best = int(np.argmin(s["loss"]))
            if s["loss"][best] < loss.min():
                worst = int(np.argmax(loss))
                pop, kept = children.copy(), loss.copy()
                pop[worst], kept[worst] = s["pop"][best], s["loss"][best]
        s["pop"], s["loss"] = pop, kept
        return X, loss


def ga_run(task, config: GaConfig, rng, **kw):
    return Ga(config).run(task, rng, **kw)
