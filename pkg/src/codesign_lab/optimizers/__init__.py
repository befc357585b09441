from __future__ import annotations

from dataclasses import fields

from ..core import InvalidArgument
from .base import Optimizer
from .cmaes import Cmaes, CmaesConfig, cmaes_run
from .ga import Ga, GaConfig, ga_run
from .gradient import Adam, AdamConfig, Sgd, SgdConfig, adam_run, lr_grid, sgd_run
from .pfo import (
    GcPfoConfig,
    ParticleFilter,
    anneal_temperature,
    bias_matrix,
    gcpfo_run,
    pfo_config,
    pfo_run,
    resample,
    resample_probabilities,
)
from .record import Evaluator, RunRecord
from .restart import merge_restarts, restart_loop

ALGORITHMS = {
    "gcpfo": GcPfoConfig,
    "pfo": GcPfoConfig,
    "sgd": SgdConfig,
    "adam": AdamConfig,
    "cmaes": CmaesConfig,
    "ga": GaConfig,
}


def make_optimizer(name: str, params: dict | None = None) -> Optimizer:
    """Build an optimizer from its name and a flat hyperparameter dict."""
    key = name.lower().replace("-", "").replace("_", "")
    if key not in ALGORITHMS:
        raise InvalidArgument(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")
    cls = ALGORITHMS[key]
    params = dict(params or {})
    allowed = {f.name for f in fields(cls)}
    unknown = set(params) - allowed
    if unknown:
        raise InvalidArgument(f"unknown {key} parameters: {sorted(unknown)}")
    if key == "pfo":
        return ParticleFilter(pfo_config(cls(**{**params, "beta_mode": "identity", "use_gradients": False})), name="pfo")
    if key == "gcpfo":
        return ParticleFilter(cls(**params))
    return {"sgd": Sgd, "adam": Adam, "cmaes": Cmaes, "ga": Ga}[key](cls(**params))


__all__ = [
    "ALGORITHMS", "Adam", "AdamConfig", "Cmaes", "CmaesConfig", "Evaluator", "Ga", "GaConfig",
    "GcPfoConfig", "Optimizer", "ParticleFilter", "RunRecord", "Sgd", "SgdConfig",
    "adam_run", "anneal_temperature", "bias_matrix", "cmaes_run", "ga_run", "gcpfo_run",
    "lr_grid", "make_optimizer", "merge_restarts", "pfo_config", "pfo_run", "resample",
    "resample_probabilities", "restart_loop", "sgd_run",
]
