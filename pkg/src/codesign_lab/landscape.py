"""Gradient-covariance analysis of co-design landscapes.

Gradients are taken in unit-box coordinates so that one sampling sigma and
one covariance are meaningful across parameters of very different scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import InvalidArgument, ParameterSpace, TaskHandle, perturb_gaussian, split

PSD_TOL = 1e-10
SYMMETRY_TOL = 1e-8


class DegenerateSpectrum(ValueError):
    pass


@dataclass(frozen=True)
class GradientMatrix:
    G: np.ndarray  # (m, N), columns are gradients / sqrt(N)
    mean: np.ndarray | None = None
    sigma: float | None = None

    @property
    def N(self) -> int:
        return self.G.shape[1]

    @classmethod
    def from_gradients(cls, gradients, mean=None, sigma=None) -> "GradientMatrix":
        g = np.atleast_2d(np.asarray(gradients, dtype=float))
        if g.shape[0] < 1:
            raise InvalidArgument("need at least one gradient")
        if not np.all(np.isfinite(g)):
            raise InvalidArgument("gradients must be finite")
        return cls(g.T / np.sqrt(g.shape[0]), mean, sigma)


def covariance(G) -> np.ndarray:
    """Uncentered covariance ``G G^T`` (no mean subtraction), symmetrized."""
    G = G.G if isinstance(G, GradientMatrix) else np.asarray(G, dtype=float)
    C = G @ G.T
    return 0.5 * (C + C.T)


def eigendecompose(C) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition with eigenvalues in descending order.

    Each eigenvector is signed so its largest-magnitude entry is positive.
    Eigenvalues slightly below zero (roundoff) are clamped to zero; anything
    more negative than the PSD tolerance raises.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidArgument("C must be square")
    scale = max(1.0, float(np.max(np.abs(C))) if C.size else 1.0)
    if np.max(np.abs(C - C.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise InvalidArgument("C is not symmetric")
    lam, V = np.linalg.eigh(0.5 * (C + C.T))
    order = np.argsort(lam, kind="stable")[::-1]
    lam, V = lam[order], V[:, order]
    if lam.size and lam[-1] < -PSD_TOL * max(1.0, lam[0]):
        raise InvalidArgument(f"C is not positive semidefinite (min eigenvalue {lam[-1]:.3e})")
    lam = np.maximum(lam, 0.0)
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs, lam


def cumulative_explained_variance(lam) -> tuple[np.ndarray, bool]:
    """Prefix sums of the spectrum over its total; ``(ones, True)`` when all zero."""
    lam = np.asarray(lam, dtype=float)
    total = lam.sum()
    if total <= 0:
        return np.ones_like(lam), True
    out = np.minimum(np.cumsum(lam) / total, 1.0)
    out[-1] = 1.0
    return out, False


def effective_dimensionality(lam) -> float:
    """exp of the Shannon entropy of the normalized spectrum."""
    lam = np.asarray(lam, dtype=float)
    total = lam.sum()
    if not total > 0:
        raise DegenerateSpectrum("effective dimensionality of an all-zero spectrum")
    p = lam / total
    p = p[p > 0]  # tiny eigenvalues can underflow to zero after normalization
    return float(np.exp(-np.sum(p * np.log(p))))


def alignment_ratio(gradients, space: ParameterSpace) -> tuple[float, float]:
    """Morphology/control share of gradient norm, each part scaled by 1/sqrt(dim)."""
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    morph, ctrl = split(space, g)
    mt = np.linalg.norm(morph, axis=1) / np.sqrt(space.m_morph)
    ct = np.linalg.norm(ctrl, axis=1) / np.sqrt(space.m_ctrl)
    mbar, cbar = mt.mean(), ct.mean()
    total = mbar + cbar
    if not total > 0:
        raise DegenerateSpectrum("alignment of all-zero gradients")
    align_m = mbar / total
    return float(align_m), float(1.0 - align_m)


@dataclass
class RegionStats:
    C: np.ndarray
    V: np.ndarray
    eigenvalues: np.ndarray
    explained: np.ndarray
    ed: float
    align_m: float
    align_c: float
    best_loss: float
    N: int = 0
    diverged: int = 0
    mean: np.ndarray | None = None
    sigma: float | None = None
    best_x: np.ndarray | None = None
    degenerate: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        lam = self.eigenvalues
        return int(np.sum(lam > PSD_TOL * max(1.0, lam[0]))) if lam.size else 0

    def to_dict(self, full_eigvecs: bool = False) -> dict:
        d = {
            "N": self.N,
            "sigma": self.sigma,
            "best_loss": self.best_loss,
            "effective_dimensionality": self.ed,
            "align_m": self.align_m,
            "align_c": self.align_c,
            "diverged": self.diverged,
            "degenerate": self.degenerate,
            "eigenvalues": self.eigenvalues.tolist(),
            "explained": self.explained.tolist(),
            "mean": None if self.mean is None else np.asarray(self.mean).tolist(),
        }
        if full_eigvecs:
            d["eigenvectors"] = self.V.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegionStats":
        lam = np.asarray(d["eigenvalues"], dtype=float)
        V = np.asarray(d["eigenvectors"], dtype=float) if "eigenvectors" in d else np.empty((lam.size, 0))
        C = V @ np.diag(lam) @ V.T if V.size else np.empty((0, 0))
        return cls(
            C, V, lam, np.asarray(d["explained"]), d["effective_dimensionality"], d["align_m"], d["align_c"],
            d["best_loss"], d.get("N", 0), d.get("diverged", 0),
            None if d.get("mean") is None else np.asarray(d["mean"]), d.get("sigma"),
        )


def region_stats(gradients, space: ParameterSpace, losses=None, mean=None, sigma=None) -> RegionStats:
    """Covariance, spectrum, ED and alignment for one set of box-coordinate gradients."""
    gm = GradientMatrix.from_gradients(gradients, mean, sigma)
    C = covariance(gm)
    V, lam = eigendecompose(C)
    explained, degenerate = cumulative_explained_variance(lam)
    if degenerate:
        ed, am, ac = 1.0, 0.5, 0.5
    else:
        ed = effective_dimensionality(lam)
        am, ac = alignment_ratio(gradients, space)
    best = float(np.min(losses)) if losses is not None and len(losses) else float("nan")
    return RegionStats(C, V, lam, explained, ed, am, ac, best, gm.N, 0, mean, sigma, degenerate=degenerate)


def analyze_region(task: TaskHandle, mean, sigma: float, N: int, rng: np.random.Generator) -> RegionStats:
    """Sample N Gaussian points around ``mean`` and characterize the region.

    Diverged samples carry a zero gradient; they are counted and excluded
    from the covariance, alignment and best_loss.  The box-coordinate
    gradients used are kept in ``extra["gradients"]``.
    """
    if N < 1:
        raise InvalidArgument("N >= 1 required")
    space = task.space
    X = perturb_gaussian(space, mean, sigma, N, rng)
    res = task.evaluate_with_gradient_batch(X)
    keep = ~res.diverged
    if not keep.any():
        raise DegenerateSpectrum("every sample in the region diverged")
    g = space.gradient_to_box(res.gradient[keep])
    stats = region_stats(g, space, res.loss[keep], np.asarray(mean), sigma)
    stats.diverged = int((~keep).sum())
    stats.best_x = X[keep][np.argmin(res.loss[keep])]
    stats.extra["gradients"] = g
    return stats


def slice_grid(task: TaskHandle, center, dir_a, dir_b, half_extent: float, resolution: int = 50):
    """Loss on ``center + alpha dir_a + beta dir_b`` over a square grid.

    Directions and extent are in box coordinates.  Returns
    ``(alphas, betas, losses[resolution, resolution], diverged mask)`` with
    rows indexed by alpha.
    """
    if resolution < 2:
        raise InvalidArgument("resolution >= 2 required")
    space = task.space
    a = np.asarray(dir_a, dtype=float)
    b = np.asarray(dir_b, dtype=float)
    for d in (a, b):
        if abs(np.linalg.norm(d) - 1.0) > 1e-8:
            raise InvalidArgument("directions must be unit vectors")
    t = np.linspace(-half_extent, half_extent, resolution)
    A, B = np.meshgrid(t, t, indexing="ij")
    z = space.to_box(center) + A.reshape(-1, 1) * a + B.reshape(-1, 1) * b
    res = task.evaluate_batch(space.from_box(z))
    return t, t, res.loss.reshape(resolution, resolution), res.diverged.reshape(resolution, resolution)


def harvest_regions(records, count: int, stride: int = 1) -> list[np.ndarray]:
    """Per-iteration best co-designs, round-robin across records.

    Record r contributes its iterations 0, stride, 2*stride, ...; picks
    alternate between records until ``count`` means are collected or every
    record is exhausted.
    """
    if not records or all(len(r.iteration_best_x) == 0 for r in records):
        raise InvalidArgument("need at least one record with one iteration")
    if stride < 1:
        raise InvalidArgument("stride >= 1 required")
    queues = [list(r.iteration_best_x[::stride]) for r in records]
    out: list[np.ndarray] = []
    depth = 0
    while len(out) < count and any(depth < len(q) for q in queues):
        for q in queues:
            if depth < len(q) and len(out) < count:
                out.append(np.asarray(q[depth]))
        depth += 1
    return out
