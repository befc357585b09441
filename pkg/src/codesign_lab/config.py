"""Experiment configuration: TOML or JSON documents, validated into plain dicts.

Schema (all keys optional except ``task``)::

    task = "Loc84"            # or a path to a task spec JSON
    seed = 0                  # master seed
    seeds = 5                 # optimizer runs per algorithm
    steps = 1024              # simulation horizon override
    iterations = 50
    evals_per_iteration = 250
    log_points = false

    [[algorithms]]
    name = "gcpfo"            # gcpfo | pfo | sgd | adam | cmaes | ga
    label = "gcpfo"           # output directory name, defaults to name
    params = { sigma = 0.2 }
    budget = 25000            # budget-study only

    [analysis]
    source = "runs"           # runs | uniform
    runs_dir = "out"          # directory written by `optimize`
    regions = 50
    sigma = 0.02
    N = 100
    stride = 1
    full_eigvecs = false

    [landscape]
    center = "baseline"       # baseline | list of numbers | path to record.json
    mode = "axes"             # axes | eigvecs
    dims = [0, 72]
    region_stats = "regions.json"
    region = 0
    eigvecs = [0, 1]
    half_extent = 0.2
    resolution = 50

    [budget_study]
    gcpfo_budget = 25000
    multiplier = 20
    window = 10
    max_iterations = 250

    [render]
    trajectory = "trajectory.csv"   # or task + design
    design = "baseline"
    env = 0
    record_stride = 8
    frame_every = 16
"""
from __future__ import annotations

import copy
import json
import sys
from pathlib import Path

from .core import InvalidArgument

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PER_ITERATION = {"loc84": 250}
DEFAULT_PER_ITERATION = 500
PAPER_REGION_N = {"loc84": 100, "loc155": 200, "mani212": 250, "mani320": 350}

DEFAULTS = {
    "seed": 0,
    "seeds": 5,
    "steps": None,
    "iterations": 50,
    "evals_per_iteration": None,
    "log_points": False,
    "algorithms": [{"name": "gcpfo"}],
    "analysis": {"source": "runs", "runs_dir": None, "regions": 50, "sigma": 0.02, "N": 100, "stride": 1, "full_eigvecs": False},
    "landscape": {"center": "baseline", "mode": "axes", "dims": [0, 1], "region_stats": None, "region": 0, "eigvecs": [0, 1], "half_extent": 0.2, "resolution": 50},
    "budget_study": {"gcpfo_budget": 25000, "multiplier": 20, "window": 10, "max_iterations": 250},
    "render": {"trajectory": None, "design": "baseline", "env": 0, "record_stride": 8, "frame_every": 16},
}

PAPER_SCALE = {
    "analysis": {"regions": 1000},
    "budget_study": {"gcpfo_budget": 50000, "multiplier": 1000},
}


def read_document(path) -> dict:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".json":
        return json.loads(text)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError:
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"{path}: not valid TOML or JSON ({exc})") from None


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(doc: dict | None, overrides: dict | None = None, paper_scale: bool = False) -> dict:
    """Defaults, then the document, then the paper-scale preset, then CLI overrides."""
    cfg = _merge(DEFAULTS, doc or {})
    if paper_scale:
        cfg = _merge(cfg, PAPER_SCALE)
        key = str(cfg.get("task", "")).lower()
        if key in PAPER_REGION_N:
            cfg["analysis"]["N"] = PAPER_REGION_N[key]
    cfg = _merge(cfg, {k: v for k, v in (overrides or {}).items() if v is not None})
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    if not cfg.get("task"):
        raise InvalidArgument("config must name a task")
    for key in ("seeds", "iterations"):
        if int(cfg[key]) < 1:
            raise InvalidArgument(f"{key} must be >= 1")
    if cfg["evals_per_iteration"] is not None and int(cfg["evals_per_iteration"]) < 1:
        raise InvalidArgument("evals_per_iteration must be positive")
    algs = cfg["algorithms"]
    if not isinstance(algs, list) or not algs:
        raise InvalidArgument("algorithms must be a non-empty list")
    labels = [a.get("label", a.get("name")) for a in algs]
    if any(not isinstance(a, dict) or "name" not in a for a in algs):
        raise InvalidArgument("every algorithm needs a name")
    if len(set(labels)) != len(labels):
        raise InvalidArgument("algorithm labels must be unique")
    a = cfg["analysis"]
    if int(a["regions"]) < 1 or int(a["N"]) < 1 or float(a["sigma"]) <= 0 or int(a["stride"]) < 1:
        raise InvalidArgument("analysis needs regions, N, stride >= 1 and sigma > 0")
    if a["source"] not in ("runs", "uniform"):
        raise InvalidArgument("analysis.source must be 'runs' or 'uniform'")
    ls = cfg["landscape"]
    if ls["mode"] not in ("axes", "eigvecs"):
        raise InvalidArgument("landscape.mode must be 'axes' or 'eigvecs'")
    if int(ls["resolution"]) < 2 or float(ls["half_extent"]) <= 0:
        raise InvalidArgument("landscape needs resolution >= 2 and half_extent > 0")
    b = cfg["budget_study"]
    if float(b["gcpfo_budget"]) <= 0 or float(b["multiplier"]) <= 0:
        raise InvalidArgument("budgets must be positive")


def per_iteration(cfg: dict) -> int:
    if cfg["evals_per_iteration"] is not None:
        return int(cfg["evals_per_iteration"])
    return PER_ITERATION.get(str(cfg["task"]).lower(), DEFAULT_PER_ITERATION)


def algorithm_params(cfg: dict, alg: dict) -> dict:
    """Hyperparameters with the per-iteration evaluation budget and iteration count filled in."""
    name = alg["name"].lower().replace("-", "").replace("_", "")
    params = dict(alg.get("params", {}))
    params.setdefault("iterations", int(cfg["iterations"]))
    n = per_iteration(cfg)
    if name in ("gcpfo", "pfo"):
        P = int(params.get("P", 50))
        if "R" not in params:
            if n % P:
                raise InvalidArgument(f"evals_per_iteration {n} is not a multiple of P={P}")
            params["R"] = n // P
    elif name in ("sgd", "adam"):
        params.setdefault("batch", n)
    elif name in ("cmaes", "ga"):
        params.setdefault("population", n)
    return params


def snapshot(cfg: dict) -> str:
    """Canonical JSON of the resolved config (runtime-only keys removed)."""
    clean = {k: v for k, v in cfg.items() if k not in ("workers", "out")}
    return json.dumps(clean, sort_keys=True, separators=(",", ":"), default=str)
