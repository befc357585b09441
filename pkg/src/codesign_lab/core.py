"""Co-design vector space, bounds and the uniform task contract.

Co-designs are plain ``numpy`` vectors in task units.  Optimizers and region
sampling work in the normalized unit box ``[0, 1]^m``; :class:`ParameterSpace`
converts between the two.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MORPHOLOGY = "morphology"
CONTROL = "control"


class InvalidArgument(ValueError):
    pass


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator addressed by ``(seed, *key)``.

    Every stochastic consumer derives its stream from the master seed plus a
    tuple of indices (run, region, particle, iteration, ...), so results do
    not depend on evaluation order or worker count.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class ParameterSpace:
    lower: np.ndarray
    upper: np.ndarray
    baseline: np.ndarray
    labels: tuple[str, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        baseline = np.asarray(self.baseline, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "labels", tuple(self.labels))
        if not (lower.shape == upper.shape == baseline.shape == (len(self.labels),)):
            raise InvalidArgument("lower, upper, baseline and labels must share length m")
        if set(self.labels) - {MORPHOLOGY, CONTROL}:
            raise InvalidArgument("labels must be 'morphology' or 'control'")
        if np.any(lower >= upper):
            raise InvalidArgument("lower < upper must hold componentwise")
        if np.any(baseline < lower) or np.any(baseline > upper):
            raise InvalidArgument("baseline outside bounds")
        names = tuple(self.names) or tuple(f"x{i}" for i in range(len(self.labels)))
        if len(names) != len(self.labels):
            raise InvalidArgument("names must have length m")
        object.__setattr__(self, "names", names)
        for arr in (lower, upper, baseline):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.labels)

    @property
    def morph_index(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.labels) == MORPHOLOGY)

    @property
    def ctrl_index(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.labels) == CONTROL)

    @property
    def m_morph(self) -> int:
        return len(self.morph_index)

    @property
    def m_ctrl(self) -> int:
        return len(self.ctrl_index)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.m,):
            raise InvalidArgument(f"expected trailing dimension {self.m}, got shape {x.shape}")
        return x

    def to_box(self, x) -> np.ndarray:
        return (self.check(x) - self.lower) / self.width

    def from_box(self, z) -> np.ndarray:
        return self.lower + self.check(z) * self.width

    def gradient_to_box(self, g) -> np.ndarray:
        """Chain rule for a task-unit gradient seen from box coordinates."""
        return self.check(g) * self.width

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "m_morph": self.m_morph,
            "m_ctrl": self.m_ctrl,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "baseline": self.baseline.tolist(),
            "labels": list(self.labels),
            "names": list(self.names),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSpace":
        space = cls(d["lower"], d["upper"], d["baseline"], tuple(d["labels"]), tuple(d.get("names", ())))
        for key in ("m", "m_morph", "m_ctrl"):
            if key in d and d[key] != getattr(space, key):
                raise InvalidArgument(f"{key} does not match labels")
        return space

    @classmethod
    def from_json(cls, text: str) -> "ParameterSpace":
        return cls.from_dict(json.loads(text))


def project(space: ParameterSpace, x) -> np.ndarray:
    """Clamp ``x`` into the box ``[lower, upper]``."""
    return np.clip(space.check(x), space.lower, space.upper)


def project_box(z) -> np.ndarray:
    return np.clip(z, 0.0, 1.0)


def sample_uniform(space: ParameterSpace, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    shape = (space.m,) if n is None else (n, space.m)
    return space.lower + rng.random(shape) * space.width


def split(space: ParameterSpace, v) -> tuple[np.ndarray, np.ndarray]:
    """Morphology and control entries of ``v``, in index order."""
    v = space.check(v)
    return v[..., space.morph_index], v[..., space.ctrl_index]


def join(space: ParameterSpace, morph, ctrl) -> np.ndarray:
    morph = np.asarray(morph, dtype=float)
    ctrl = np.asarray(ctrl, dtype=float)
    out = np.empty(morph.shape[:-1] + (space.m,))
    out[..., space.morph_index] = morph
    out[..., space.ctrl_index] = ctrl
    return out


def perturb_gaussian(space: ParameterSpace, mean, sigma: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` Gaussian draws around ``mean``; ``sigma`` is in box units.

    Draws are clamped into bounds and returned in task units, shape (n, m).
    """
    if sigma <= 0 or n < 1:
        raise InvalidArgument("sigma > 0 and n >= 1 required")
    z = space.to_box(mean) + sigma * rng.standard_normal((n, space.m))
    return space.from_box(project_box(z))


@dataclass(frozen=True)
class Evaluation:
    loss: float
    gradient: np.ndarray | None = None
    diverged: bool = False


@dataclass(frozen=True)
class BatchEvaluation:
    loss: np.ndarray
    gradient: np.ndarray | None
    diverged: np.ndarray

    def __len__(self):
        return len(self.loss)

    def __getitem__(self, i) -> Evaluation:
        g = None if self.gradient is None else self.gradient[i]
        return Evaluation(float(self.loss[i]), g, bool(self.diverged[i]))


@dataclass
class TaskHandle:
    """Uniform task contract consumed by landscape analysis and optimizers.

    ``evaluate_batch`` and ``evaluate_with_gradient_batch`` take an (n, m)
    array of task-unit co-designs.  Gradients are in loss units per task unit;
    use :meth:`ParameterSpace.gradient_to_box` for box coordinates.
    """

    name: str
    space: ParameterSpace
    evaluate_batch: Callable[[np.ndarray], BatchEvaluation]
    evaluate_with_gradient_batch: Callable[[np.ndarray], BatchEvaluation]
    metadata: dict = field(default_factory=dict)

    def evaluate(self, x) -> Evaluation:
        return self.evaluate_batch(self.space.check(x)[None, :])[0]

    def evaluate_with_gradient(self, x) -> Evaluation:
        return self.evaluate_with_gradient_batch(self.space.check(x)[None, :])[0]


def sentinel_fill(loss: np.ndarray, gradient: np.ndarray | None, diverged: np.ndarray | None = None, bad_gradient: np.ndarray | None = None):
    """Apply the divergence policy to a batch.

    Rows whose rollout diverged (or whose loss is not finite) get a sentinel
    loss of ten times the worst finite |loss| in the batch (at least 10) and a
    zero gradient.  Rows with a non-finite or overflowing gradient only get
    their gradient zeroed, so losses agree with and without gradients.
    Returns ``(loss, gradient, flagged)``.
    """
    loss = np.array(loss, dtype=float)
    bad = ~np.isfinite(loss)
    if diverged is not None:
        bad |= diverged
    flagged = bad.copy()
    if bad.any():
        good = loss[~bad]
        worst = float(np.max(np.abs(good))) if good.size else 1.0
        loss[bad] = 10.0 * max(worst, 1.0)
    if gradient is not None:
        gradient = np.array(gradient, dtype=float)
        zero = bad | ~np.all(np.isfinite(gradient), axis=-1)
        if bad_gradient is not None:
            zero |= bad_gradient
        gradient[zero] = 0.0
        flagged |= zero
    return loss, gradient, flagged


def function_task(
    name: str,
    space: ParameterSpace,
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray] | None = None,
) -> TaskHandle:
    """Wrap plain numpy callables as a task (test functions, synthetic landscapes)."""

    def batch(X):
        X = space.check(X)
        loss, _, bad = sentinel_fill(np.array([f(x) for x in X]), None)
        return BatchEvaluation(loss, None, bad)

    def batch_grad(X):
        if grad is None:
            raise InvalidArgument(f"task {name} has no gradient")
        X = space.check(X)
        loss = np.array([f(x) for x in X])
        g = np.array([grad(x) for x in X]).reshape(len(X), space.m)
        loss, g, bad = sentinel_fill(loss, g)
        return BatchEvaluation(loss, g, bad)

    return TaskHandle(name, space, batch, batch_grad)


def box_space(m: int, m_morph: int | None = None, lower: float = 0.0, upper: float = 1.0) -> ParameterSpace:
    m_morph = m if m_morph is None else m_morph
    labels = (MORPHOLOGY,) * m_morph + (CONTROL,) * (m - m_morph)
    lo = np.full(m, float(lower))
    hi = np.full(m, float(upper))
    return ParameterSpace(lo, hi, (lo + hi) / 2, labels)


def as_matrix(xs: Sequence) -> np.ndarray:
    return np.atleast_2d(np.asarray(xs, dtype=float))
