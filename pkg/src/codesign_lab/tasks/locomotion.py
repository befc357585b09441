"""Voxel walkers: spring lengths/stiffnesses plus sinusoidal actuators."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import jax.numpy as jnp
import numpy as np

from ..core import CONTROL, MORPHOLOGY, ParameterSpace
from ..diffsim.engine import SimConfig, SpringNetwork, center_of_mass, simulate
from .common import jax_task
from .voxels import VoxelTopology, actuator_groups, build_voxels


class ActuationSignal(NamedTuple):
    """a(t) = A sin(w t + phi) per actuator group; rest scale is 1 + a(t)."""

    amplitude: jnp.ndarray
    frequency: jnp.ndarray
    phase: jnp.ndarray
    group: np.ndarray  # per spring, -1 = passive
    dt: float

    def activation(self, t):
        return self.amplitude * jnp.sin(self.frequency * t + self.phase)

    def __call__(self, k):
        a = self.activation(k * self.dt)
        active = self.group >= 0
        return 1.0 + jnp.where(active, a[np.where(active, self.group, 0)], 0.0)


@dataclass(frozen=True)
class LocomotionSpec:
    name: str
    voxels: tuple
    actuators: tuple
    voxel_size: float = 0.1
    node_mass: float = 1.0
    stiffness: float = 1e4
    rest_length_range: float = 0.2
    stiffness_range: float = 0.6
    amplitude: tuple = (0.0, 0.3)
    frequency: tuple = (4.0, 20.0)
    phase: tuple = (-np.pi, np.pi)
    sim: SimConfig = field(default_factory=lambda: SimConfig(steps=1024))
    chunk: int = 64

    @classmethod
    def from_dict(cls, d: dict, steps: int | None = None) -> "LocomotionSpec":
        sim = dict(d.get("sim", {}))
        if "gravity" in sim:
            sim["gravity"] = tuple(sim["gravity"])
        if steps is not None:
            sim["steps"] = int(steps)
        kw = {k: d[k] for k in ("voxel_size", "node_mass", "stiffness", "rest_length_range", "stiffness_range", "chunk") if k in d}
        for k in ("amplitude", "frequency", "phase"):
            if k in d:
                kw[k] = tuple(d[k])
        return cls(
            name=d["name"],
            voxels=tuple(tuple(v) for v in d["voxels"]),
            actuators=tuple({"voxel": tuple(a["voxel"]), "springs": tuple(a["springs"])} for a in d["actuators"]),
            sim=SimConfig(**sim),
            **kw,
        )

    @property
    def topology(self) -> VoxelTopology:
        return build_voxels(self.voxels)

    @property
    def groups(self) -> np.ndarray:
        return actuator_groups(self.topology, self.actuators)

    @property
    def n_springs(self) -> int:
        return self.topology.n_springs

    @property
    def n_groups(self) -> int:
        return len(self.actuators)

    def base_positions(self) -> np.ndarray:
        topo = self.topology
        pos = topo.positions(self.voxel_size)
        pos[:, 0] -= 0.5 * (pos[:, 0].min() + pos[:, 0].max())
        pos[:, 1] += self.sim.ground_height - pos[:, 1].min()
        return pos

    def base_rest_lengths(self) -> np.ndarray:
        pos = self.base_positions()
        s = np.asarray(self.topology.springs)
        return np.linalg.norm(pos[s[:, 1]] - pos[s[:, 0]], axis=1)

    def space(self) -> ParameterSpace:
        ns, ng = self.n_springs, self.n_groups
        rest = self.base_rest_lengths()
        k = np.full(ns, self.stiffness)
        lower = np.concatenate([
            rest * (1 - self.rest_length_range),
            k * (1 - self.stiffness_range),
            np.full(ng, self.amplitude[0]),
            np.full(ng, self.frequency[0]),
            np.full(ng, self.phase[0]),
        ])
        upper = np.concatenate([
            rest * (1 + self.rest_length_range),
            k * (1 + self.stiffness_range),
            np.full(ng, self.amplitude[1]),
            np.full(ng, self.frequency[1]),
            np.full(ng, self.phase[1]),
        ])
        names = (
            [f"rest_length[{i}]" for i in range(ns)]
            + [f"stiffness[{i}]" for i in range(ns)]
            + [f"{p}[{g}]" for p in ("amplitude", "frequency", "phase") for g in range(ng)]
        )
        labels = (MORPHOLOGY,) * (2 * ns) + (CONTROL,) * (3 * ng)
        return ParameterSpace(lower, upper, (lower + upper) / 2, labels, tuple(names))


def decode_locomotion(spec: LocomotionSpec, x) -> tuple[SpringNetwork, ActuationSignal]:
    ns, ng = spec.n_springs, spec.n_groups
    topo = spec.topology
    s = np.asarray(topo.springs)
    pos = spec.base_positions()
    net = SpringNetwork(
        positions=jnp.asarray(pos),
        masses=jnp.full(topo.n_nodes, spec.node_mass),
        i=s[:, 0],
        j=s[:, 1],
        rest_length=x[:ns],
        stiffness=x[ns : 2 * ns],
        actuated=spec.groups >= 0,
        pinned=np.zeros(topo.n_nodes, dtype=bool),
    )
    c = 2 * ns
    act = ActuationSignal(x[c : c + ng], x[c + ng : c + 2 * ng], x[c + 2 * ng : c + 3 * ng], spec.groups, spec.sim.dt)
    return net, act


def encode_locomotion(spec: LocomotionSpec, net: SpringNetwork, act: ActuationSignal) -> np.ndarray:
    return np.concatenate([
        np.asarray(net.rest_length),
        np.asarray(net.stiffness),
        np.asarray(act.amplitude),
        np.asarray(act.frequency),
        np.asarray(act.phase),
    ])


def locomotion_loss(positions, masses) -> jnp.ndarray:
    """Negative horizontal displacement of the center of mass, first to last record."""
    com = center_of_mass(positions, masses)
    return -(com[-1, 0] - com[0, 0])


def build_locomotion_task(spec: LocomotionSpec, seed: int = 0):
    space = spec.space()
    masses = jnp.full(spec.topology.n_nodes, spec.node_mass)

    def loss_fn(x):
        net, act = decode_locomotion(spec, x)
        traj = simulate(net, act, spec.sim)
        return locomotion_loss(traj.positions, masses), traj.diverged_step

    meta = {"kind": "locomotion", "seed": int(seed), "sim": spec.sim.metadata(), "n_springs": spec.n_springs, "n_actuators": spec.n_groups}
    task = jax_task(spec.name, space, loss_fn, spec.sim.steps, spec.chunk, meta)
    task.metadata["spec"] = spec
    return task


def locomotion_trajectory(spec: LocomotionSpec, x, record_stride: int = 8):
    net, act = decode_locomotion(spec, jnp.asarray(x))
    traj = simulate(net, act, spec.sim, record_stride=record_stride)
    return traj, np.asarray(spec.topology.springs)
