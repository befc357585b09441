"""(mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu updates and CSA."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import InvalidArgument, project_box
from .base import Optimizer

MAX_CONDITION = 1e14


@dataclass(frozen=True)
class CmaesConfig:
    sigma0: float = 0.2
    population: int = 250
    elite_ratio: float = 0.25
    iterations: int = 50

    def __post_init__(self):
        if self.population < 4:
            raise InvalidArgument("population >= 4 required")
        if not 0 < self.elite_ratio <= 1 or self.sigma0 <= 0:
            raise InvalidArgument("need 0 < elite_ratio <= 1 and sigma0 > 0")


class Cmaes(Optimizer):
    name = "cmaes"

    @property
    def cost(self) -> int:
        return self.config.population

    def start(self, task, rng):
        c = self.config
        n = task.space.m
        lam = c.population
        mu = min(lam, math.ceil(c.elite_ratio * lam))
        w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        w = w / w.sum()
        mueff = 1.0 / np.sum(w**2)
        cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        cs = (mueff + 2) / (n + mueff + 5)
        c1 = 2 / ((n + 1.3) ** 2 + mueff)
        cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
        s = {
            "space": task.space, "n": n, "mu": mu, "w": w, "mueff": mueff,
            "cc": cc, "cs": cs, "c1": c1, "cmu": cmu, "damps": damps,
            "chiN": math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n)),
            "mean": rng.random(n),
        }
        self._reset(s)
        return s

    def _reset(self, s):
        n = s["n"]
        s.update(sigma=self.config.sigma0, C=np.eye(n), B=np.eye(n), D=np.ones(n), ps=np.zeros(n), pc=np.zeros(n), gen=0)

    def iterate(self, s, ev, t, T, rng):
        c = self.config
        n, mu, w = s["n"], s["mu"], s["w"]
        zs = rng.standard_normal((c.population, n))
        y = (zs * s["D"]) @ s["B"].T
        z = project_box(s["mean"] + s["sigma"] * y)
        X = s["space"].from_box(z)
        loss = ev.loss(X).loss
        order = np.argsort(loss, kind="stable")[:mu]
        ysel = (z[order] - s["mean"]) / s["sigma"]
        yw = w @ ysel
        s["mean"] = project_box(s["mean"] + s["sigma"] * yw)

        cs, cc, c1, cmu, mueff = s["cs"], s["cc"], s["c1"], s["cmu"], s["mueff"]
        invsqrt = (s["B"] / s["D"]) @ s["B"].T
        s["ps"] = (1 - cs) * s["ps"] + math.sqrt(cs * (2 - cs) * mueff) * (invsqrt @ yw)
        s["gen"] += 1
        norm_ps = np.linalg.norm(s["ps"])
        hsig = norm_ps / math.sqrt(1 - (1 - cs) ** (2 * s["gen"])) / s["chiN"] < 1.4 + 2 / (n + 1)
        s["pc"] = (1 - cc) * s["pc"] + hsig * math.sqrt(cc * (2 - cc) * mueff) * yw
        rank_mu = (ysel * w[:, None]).T @ ysel
        s["C"] = (
            (1 - c1 - cmu + (1 - hsig) * c1 * cc * (2 - cc)) * s["C"]
            + c1 * np.outer(s["pc"], s["pc"])
            + cmu * rank_mu
        )
        s["sigma"] *= math.exp((cs / s["damps"]) * (norm_ps / s["chiN"] - 1))

        C = 0.5 * (s["C"] + s["C"].T)
        ok = np.all(np.isfinite(C)) and math.isfinite(s["sigma"]) and s["sigma"] > 0
        if ok:
            d2, B = np.linalg.eigh(C)
            ok = d2.min() > 0 and d2.max() / d2.min() < MAX_CONDITION
        if ok:
            s["C"], s["B"], s["D"] = C, B, np.sqrt(d2)
        else:
            ev.record.events.append(f"iteration {ev.record.iterations}: covariance degenerate, state reset")
            self._reset(s)
        return X, loss


def cmaes_run(task, config: CmaesConfig, rng, **kw):
    return Cmaes(config).run(task, rng, **kw)
