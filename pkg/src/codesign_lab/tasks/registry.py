from __future__ import annotations

from pathlib import Path

from ..core import InvalidArgument, TaskHandle
from .common import load_spec
from .locomotion import LocomotionSpec, build_locomotion_task
from .manipulation import ManipulationSpec, build_manipulation_task

TASKS = ("Loc84", "Loc155", "Mani212", "Mani320")


def spec_for(name: str, steps: int | None = None):
    """Parse a shipped task name or a path to a custom spec JSON."""
    known = {t.lower(): t for t in TASKS}
    if name.lower() in known:
        d = load_spec(name)
    elif Path(name).suffix == ".json" and Path(name).exists():
        d = load_spec(name)
    else:
        raise InvalidArgument(f"unknown task {name!r}; expected one of {', '.join(TASKS)} or a spec file")
    kind = d.get("kind", "locomotion")
    if kind == "locomotion":
        return LocomotionSpec.from_dict(d, steps=steps)
    if kind == "manipulation":
        return ManipulationSpec.from_dict(d, steps=steps)
    raise InvalidArgument(f"unknown task kind {kind!r}")


def build_task(name: str, master_seed: int = 0, steps: int | None = None) -> TaskHandle:
    spec = spec_for(name, steps)
    if isinstance(spec, LocomotionSpec):
        return build_locomotion_task(spec, master_seed)
    return build_manipulation_task(spec, master_seed)
