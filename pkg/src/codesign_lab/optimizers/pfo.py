"""Particle filter optimization, with and without gradient-covariance bias."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..core import InvalidArgument, TaskHandle, project_box
from ..landscape import covariance, eigendecompose
from .base import Optimizer, check_positive

BETA_MODES = ("trace_normalized", "sqrt", "identity")


def anneal_temperature(tau0: float, t: float, T: float) -> float:
    check_positive(tau0=tau0, T=T)
    if not 0 <= t <= T:
        raise InvalidArgument("need 0 <= t <= T")
    return 1.0 / (1.0 + tau0 * (t / T))


def resample_probabilities(losses, tau: float) -> np.ndarray:
    check_positive(tau=tau)
    L = np.asarray(losses, dtype=float)
    w = np.exp(-(L - L.min()) / tau)
    return w / w.sum()


def resample(losses, tau: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Indices drawn i.i.d. from softmax(-L / tau)."""
    p = resample_probabilities(losses, tau)
    n = len(p) if size is None else size
    return rng.choice(len(p), size=n, p=p)


def bias_matrix(V, lam, epsilon: float = 1e-8, mode: str = "trace_normalized") -> np.ndarray:
    """Map from isotropic noise onto the region's dominant directions.

    ``trace_normalized``: V diag(lam / (tr lam + eps)).
    ``sqrt``: V diag(sqrt(lam / (tr lam + eps))).
    """
    lam = np.asarray(lam, dtype=float)
    V = np.asarray(V, dtype=float)
    check_positive(epsilon=epsilon)
    if lam.size and lam.min() < -1e-10 * max(1.0, lam.max()):
        raise InvalidArgument("eigenvalues must be nonnegative")
    lam = np.maximum(lam, 0.0)
    scaled = lam / (lam.sum() + epsilon)
    if mode == "trace_normalized":
        return V * scaled
    if mode == "sqrt":
        return V * np.sqrt(scaled)
    if mode == "identity":
        return np.eye(V.shape[0])
    raise InvalidArgument(f"unknown beta mode {mode!r}")


@dataclass(frozen=True)
class GcPfoConfig:
    R: int = 5
    P: int = 50
    sigma: float = 0.2
    tau0: float = 10.0
    iterations: int = 50
    epsilon: float = 1e-8
    beta_mode: str = "trace_normalized"
    use_gradients: bool = True
    init_sigma: float | None = None  # spread of particles around each region mean; defaults to sigma

    def __post_init__(self):
        if self.P < 2 or self.R < 1:
            raise InvalidArgument("need R >= 1 and P >= 2")
        check_positive(tau0=self.tau0, iterations=self.iterations, epsilon=self.epsilon)
        if self.sigma < 0:
            raise InvalidArgument("sigma must be >= 0")
        if self.beta_mode not in BETA_MODES:
            raise InvalidArgument(f"beta_mode must be one of {BETA_MODES}")
        # identity with use_gradients=True evaluates gradients and ignores them
        if not self.use_gradients and self.beta_mode != "identity":
            raise InvalidArgument("gradient-free runs need beta_mode='identity'")


class ParticleFilter(Optimizer):
    name = "gcpfo"

    def __init__(self, config: GcPfoConfig, name: str | None = None):
        super().__init__(config)
        if name:
            self.name = name

    @property
    def cost(self) -> int:
        return self.config.R * self.config.P

    def start(self, task: TaskHandle, rng):
        c = self.config
        spread = c.sigma if c.init_sigma is None else c.init_sigma
        means = rng.random((c.R, task.space.m))
        noise = rng.standard_normal((c.R, c.P, task.space.m))
        z = project_box(means[:, None, :] + spread * noise)
        return {"z": z, "space": task.space, "beta": [None] * c.R}

    def iterate(self, state, ev, t, T, rng):
        c = self.config
        space = state["space"]
        z = state["z"]
        R, P, m = z.shape
        X = space.from_box(z.reshape(R * P, m))
        if c.use_gradients:
            res = ev.loss_and_gradient(X)
            G = space.gradient_to_box(res.gradient).reshape(R, P, m)
        else:
            res = ev.loss(X)
            G = None
        L = res.loss.reshape(R, P)
        tau = anneal_temperature(c.tau0, t, T)
        new = np.empty_like(z)
        for r in range(R):
            idx = resample(L[r], tau, rng)
            if c.beta_mode == "identity":
                beta = None
            else:
                V, lam = eigendecompose(covariance(G[r].T / math.sqrt(P)))
                beta = bias_matrix(V, lam, c.epsilon, c.beta_mode)
            state["beta"][r] = beta
            eta = c.sigma * rng.standard_normal((P, m))
            step = eta if beta is None else eta @ beta.T
            new[r] = project_box(z[r, idx] + step)
        state["z"] = new
        return X, res.loss


def gcpfo_run(task: TaskHandle, config: GcPfoConfig, rng, **kw):
    return ParticleFilter(config).run(task, rng, **kw)


def pfo_config(config: GcPfoConfig) -> GcPfoConfig:
    return replace(config, beta_mode="identity", use_gradients=False)


def pfo_run(task: TaskHandle, config: GcPfoConfig, rng, **kw):
    """Plain PFO: the GC-PFO loop with identity bias and no gradient evaluations."""
    return ParticleFilter(pfo_config(config), name="pfo").run(task, rng, **kw)
