"""Two soft fingers rotating an elliptical object.

Each finger is a strip of ``n`` spring cells hanging from a pinned base:
cross springs at every cross-section, an upper and a lower longitudinal
spring per cell and two diagonals per cell, i.e. ``5 n + 1`` springs.

Block geometry (length L and width W per block) is decoupled from the cell
count: cross-section positions along the finger are a fixed linear map of
the block lengths (each block stretches the part of the finger it covers at
nominal geometry), and cross-section widths linearly interpolate block
widths at block centers.  This keeps the parameter counts of both tasks
exact while every geometry parameter stays smooth in its effect.

Curvature acts on rest lengths: in finger half ``h`` during schedule segment
``j`` the upper (inner) longitudinal springs are scaled by ``1 - c`` and the
lower ones by ``1 + c``.  Positive ``c`` curls the finger toward the object.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from ..core import CONTROL, MORPHOLOGY, InvalidArgument, ParameterSpace, substream
from ..diffsim.engine import RigidEllipse, SimConfig, SpringNetwork, merge_networks, simulate
from .common import jax_task

ENV_STREAM = 7


@dataclass(frozen=True)
class EnvironmentDraw:
    x_offset: float
    angle: float
    major_scale: float
    torques: tuple  # one per torque window


@dataclass(frozen=True)
class ManipulationSpec:
    name: str
    cells_per_finger: int
    blocks_per_finger: int
    target_deg: float
    control_mode: str = "full"  # "full" or "shared"
    segments: int = 5
    finger_length: float = 0.3
    finger_width: float = 0.04
    base_height: float = 0.35
    gap: float = 0.3
    offset_range: float = 0.025
    node_mass: float = 1.0
    stiffness: float = 1e4
    stiffness_range: float = 0.33
    length_range: float = 0.25
    width_range: float = 0.1
    curvature_limit: float = 0.25
    n_envs: int = 20
    semi_major: float = 0.08
    semi_minor: float = 0.05
    object_mass: float = 1.0
    x_range: float = 0.02
    angle_range: float = 0.3
    major_scale: tuple = (0.85, 1.15)
    torque_windows: int = 10
    torque_max: float = 0.02
    sim: SimConfig = field(default_factory=lambda: SimConfig(steps=1000))
    chunk: int = 4

    @classmethod
    def from_dict(cls, d: dict, steps: int | None = None, n_envs: int | None = None) -> "ManipulationSpec":
        sim = dict(d.get("sim", {}))
        if "gravity" in sim:
            sim["gravity"] = tuple(sim["gravity"])
        if steps is not None:
            sim["steps"] = int(steps)
        skip = {"name", "kind", "description", "sim", "object", "environment"}
        kw = {k: v for k, v in d.items() if k not in skip}
        kw.update({k: v for k, v in d.get("object", {}).items()})
        env = dict(d.get("environment", {}))
        if "major_scale" in env:
            env["major_scale"] = tuple(env["major_scale"])
        kw.update(env)
        if n_envs is not None:
            kw["n_envs"] = int(n_envs)
        spec = cls(name=d["name"], sim=SimConfig(**sim), **kw)
        if spec.cells_per_finger % 2:
            raise InvalidArgument("cells_per_finger must be even (two finger halves)")
        if spec.control_mode not in ("full", "shared"):
            raise InvalidArgument("control_mode must be 'full' or 'shared'")
        half = spec.sim.steps // 2
        if half % spec.segments or (spec.sim.steps - half) % spec.torque_windows:
            raise InvalidArgument("horizon halves must divide evenly into segments and torque windows")
        return spec

    # -- counts -----------------------------------------------------------
    @property
    def springs_per_finger(self) -> int:
        return 5 * self.cells_per_finger + 1

    @property
    def n_springs(self) -> int:
        return 2 * self.springs_per_finger

    @property
    def n_ctrl(self) -> int:
        if self.control_mode == "full":
            return 2 * 2 * self.segments
        return 2 * 2 + 2 * (self.segments - 1)

    @property
    def n_morph(self) -> int:
        return self.n_springs + 4 * self.blocks_per_finger + 2

    @property
    def target(self) -> float:
        return float(np.deg2rad(self.target_deg))

    # -- fixed linear maps from blocks to cross-sections ---------------------
    def length_weights(self) -> np.ndarray:
        """(n+1, blocks): arclength of section k = weights @ L."""
        n, nb = self.cells_per_finger, self.blocks_per_finger
        f = np.arange(n + 1) / n
        return np.clip(f[:, None] * nb - np.arange(nb)[None, :], 0.0, 1.0)

    def width_weights(self) -> np.ndarray:
        """(n+1, blocks): width of section k = weights @ W (linear interpolation)."""
        n, nb = self.cells_per_finger, self.blocks_per_finger
        f = np.arange(n + 1) / n
        centers = (np.arange(nb) + 0.5) / nb
        w = np.zeros((n + 1, nb))
        for k, fk in enumerate(f):
            if fk <= centers[0]:
                w[k, 0] = 1.0
            elif fk >= centers[-1]:
                w[k, -1] = 1.0
            else:
                b = np.searchsorted(centers, fk) - 1
                t = (fk - centers[b]) / (centers[b + 1] - centers[b])
                w[k, b], w[k, b + 1] = 1.0 - t, t
        return w

    # -- topology -----------------------------------------------------------
    def finger_springs(self) -> np.ndarray:
        """(5n+1, 2) node pairs; node 2k is upper, 2k+1 lower at section k."""
        out = [(0, 1)]
        for k in range(self.cells_per_finger):
            u0, l0, u1, l1 = 2 * k, 2 * k + 1, 2 * k + 2, 2 * k + 3
            out += [(u0, u1), (l0, l1), (l0, u1), (u0, l1), (u1, l1)]
        return np.array(out)

    def spring_roles(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per spring of the merged two-finger network: finger, half, sign.

        sign is -1 for upper longitudinal, +1 for lower longitudinal, 0 otherwise.
        """
        n = self.cells_per_finger
        finger, half, sign = [], [], []
        for f in range(2):
            finger.append(f)
            half.append(0)
            sign.append(0)
            for k in range(n):
                h = 0 if k < n // 2 else 1
                finger += [f] * 5
                half += [h] * 5
                sign += [-1, 1, 0, 0, 0]
        return np.array(finger), np.array(half), np.array(sign, dtype=float)

    def segment_index(self) -> np.ndarray:
        steps = self.sim.steps
        half = steps // 2
        seg_len = half // self.segments
        k = np.arange(steps)
        return np.where(k < half, np.minimum(k // seg_len, self.segments - 1), self.segments - 1)

    # -- parameter space ----------------------------------------------------
    def space(self) -> ParameterSpace:
        ns, nb = self.n_springs, self.blocks_per_finger
        L0 = self.finger_length / nb
        W0 = self.finger_width
        O0 = np.array([-self.gap / 2, self.gap / 2])
        lower = [
            np.full(ns, self.stiffness * (1 - self.stiffness_range)),
            np.full(2 * nb, L0 * (1 - self.length_range)),
            np.full(2 * nb, W0 * (1 - self.width_range)),
            O0 - self.offset_range,
        ]
        upper = [
            np.full(ns, self.stiffness * (1 + self.stiffness_range)),
            np.full(2 * nb, L0 * (1 + self.length_range)),
            np.full(2 * nb, W0 * (1 + self.width_range)),
            O0 + self.offset_range,
        ]
        names = (
            [f"stiffness[{i}]" for i in range(ns)]
            + [f"block_length[{f}][{b}]" for f in range(2) for b in range(nb)]
            + [f"block_width[{f}][{b}]" for f in range(2) for b in range(nb)]
            + ["offset[0]", "offset[1]"]
        )
        c = self.curvature_limit
        if self.control_mode == "full":
            lower.append(np.full(self.n_ctrl, -c))
            upper.append(np.full(self.n_ctrl, c))
            names += [f"curvature[{f}][{h}][{j}]" for f in range(2) for h in range(2) for j in range(self.segments)]
        else:
            lower += [np.full(4, -c), np.full(2 * (self.segments - 1), -1.0)]
            upper += [np.full(4, c), np.full(2 * (self.segments - 1), 1.0)]
            names += [f"curvature[{f}][{h}]" for f in range(2) for h in range(2)]
            names += [f"segment_scale[{f}][{j}]" for f in range(2) for j in range(1, self.segments)]
        lower, upper = np.concatenate(lower), np.concatenate(upper)
        labels = (MORPHOLOGY,) * self.n_morph + (CONTROL,) * self.n_ctrl
        return ParameterSpace(lower, upper, (lower + upper) / 2, labels, tuple(names))

    # -- environments -------------------------------------------------------
    def environment(self, seed: int, index: int) -> EnvironmentDraw:
        rng = substream(seed, ENV_STREAM, index)
        x = rng.uniform(-self.x_range, self.x_range)
        ang = rng.uniform(-self.angle_range, self.angle_range)
        scale = rng.uniform(*self.major_scale)
        tq = rng.uniform(-self.torque_max, self.torque_max, self.torque_windows)
        return EnvironmentDraw(float(x), float(ang), float(scale), tuple(float(t) for t in tq))

    def environments(self, seed: int) -> list[EnvironmentDraw]:
        return [self.environment(seed, e) for e in range(self.n_envs)]

    def torque_schedule(self, draw: EnvironmentDraw) -> np.ndarray:
        steps = self.sim.steps
        half = steps // 2
        win = (steps - half) // self.torque_windows
        out = np.zeros(steps)
        for w, tq in enumerate(draw.torques):
            out[half + w * win : half + (w + 1) * win] = tq
        return out


@dataclass
class ManipulationDesign:
    stiffness: jnp.ndarray  # (n_springs,)
    block_length: jnp.ndarray  # (2, blocks)
    block_width: jnp.ndarray  # (2, blocks)
    offsets: jnp.ndarray  # (2,)
    control: jnp.ndarray  # raw control parameters
    curvature: jnp.ndarray  # (2 fingers, 2 halves, segments)


def unpack(spec: ManipulationSpec, x) -> ManipulationDesign:
    ns, nb = spec.n_springs, spec.blocks_per_finger
    o = 0
    stiff = x[o : o + ns]
    o += ns
    L = x[o : o + 2 * nb].reshape(2, nb)
    o += 2 * nb
    W = x[o : o + 2 * nb].reshape(2, nb)
    o += 2 * nb
    off = x[o : o + 2]
    o += 2
    ctrl = x[o : o + spec.n_ctrl]
    S = spec.segments
    if spec.control_mode == "full":
        curv = ctrl.reshape(2, 2, S)
    else:
        amp = ctrl[:4].reshape(2, 2)
        scale = jnp.concatenate([jnp.ones((2, 1)), ctrl[4:].reshape(2, S - 1)], axis=1)
        curv = amp[:, :, None] * scale[:, None, :]
    return ManipulationDesign(stiff, L, W, off, ctrl, curv)


def pack(spec: ManipulationSpec, design: ManipulationDesign) -> np.ndarray:
    return np.concatenate([
        np.asarray(design.stiffness),
        np.asarray(design.block_length).ravel(),
        np.asarray(design.block_width).ravel(),
        np.asarray(design.offsets),
        np.asarray(design.control),
    ])


def finger_positions(spec: ManipulationSpec, design: ManipulationDesign, f: int):
    s = jnp.asarray(spec.length_weights()) @ design.block_length[f]
    w = jnp.asarray(spec.width_weights()) @ design.block_width[f]
    side = 1.0 if f == 0 else -1.0
    n1 = spec.cells_per_finger + 1
    xs = jnp.stack([design.offsets[f] + side * w / 2, design.offsets[f] - side * w / 2], axis=1).reshape(2 * n1)
    ys = jnp.repeat(spec.base_height - s, 2)
    return jnp.stack([xs, ys], axis=1)


class CurvatureSchedule:
    """Per-step rest-length multipliers for the merged two-finger network."""

    def __init__(self, spec: ManipulationSpec, curvature):
        finger, half, sign = spec.spring_roles()
        self.sign = jnp.asarray(sign)
        self.per_spring = curvature[finger, half]  # (springs, segments)
        self.segment = jnp.asarray(spec.segment_index())

    def __call__(self, k):
        return 1.0 + self.sign * self.per_spring[:, self.segment[k]]


def decode_manipulation(spec: ManipulationSpec, x):
    """Build (fingers, ellipse template, curvature schedule) from a co-design."""
    d = unpack(spec, x)
    springs = spec.finger_springs()
    nps = spec.springs_per_finger
    fingers = []
    for f in range(2):
        pos = finger_positions(spec, d, f)
        rest = jnp.linalg.norm(pos[springs[:, 1]] - pos[springs[:, 0]], axis=1)
        n = pos.shape[0]
        pinned = np.zeros(n, dtype=bool)
        pinned[:2] = True
        fingers.append(
            SpringNetwork(
                positions=pos,
                masses=jnp.full(n, spec.node_mass),
                i=springs[:, 0],
                j=springs[:, 1],
                rest_length=rest,
                stiffness=d.stiffness[f * nps : (f + 1) * nps],
                actuated=np.ones(nps, dtype=bool),
                pinned=pinned,
            )
        )
    template = RigidEllipse(
        center=jnp.array([0.0, 0.0]),
        angle=jnp.asarray(0.0),
        semi_major=jnp.asarray(spec.semi_major),
        semi_minor=jnp.asarray(spec.semi_minor),
        mass=jnp.asarray(spec.object_mass),
        inertia=jnp.asarray(spec.object_mass * (spec.semi_major**2 + spec.semi_minor**2) / 4),
        linear_velocity=jnp.zeros(2),
        angular_velocity=jnp.asarray(0.0),
    )
    return fingers, template, CurvatureSchedule(spec, d.curvature)


def place_object(spec: ManipulationSpec, template: RigidEllipse, draw: EnvironmentDraw) -> RigidEllipse:
    """Apply an environment draw: scaled major axis, pose resting on the ground."""
    a = spec.semi_major * draw.major_scale
    b = spec.semi_minor
    th = draw.angle
    height = np.sqrt(a * a * np.sin(th) ** 2 + b * b * np.cos(th) ** 2)
    return template._replace(
        center=jnp.array([draw.x_offset, spec.sim.ground_height + height]),
        angle=jnp.asarray(th),
        semi_major=jnp.asarray(a),
        inertia=jnp.asarray(spec.object_mass * (a * a + b * b) / 4),
    )


def manipulation_loss(initial_angles, final_angles, target: float):
    """Mean over environments of |rotation - target| (angles are unwrapped)."""
    rot = jnp.asarray(final_angles) - jnp.asarray(initial_angles)
    return jnp.mean(jnp.abs(rot - target))


def _env_arrays(spec: ManipulationSpec, seed: int):
    draws = spec.environments(seed)
    _, template, _ = decode_manipulation(spec, jnp.asarray(spec.space().baseline))
    bodies = [place_object(spec, template, d) for d in draws]
    stacked = jax.tree_util.tree_map(lambda *xs: jnp.stack(xs), *bodies)
    torques = jnp.asarray(np.stack([spec.torque_schedule(d) for d in draws]))
    return draws, stacked, torques


def build_manipulation_task(spec: ManipulationSpec, seed: int = 0):
    space = spec.space()
    draws, bodies, torques = _env_arrays(spec, seed)

    def loss_fn(x):
        fingers, _, schedule = decode_manipulation(spec, x)
        net = merge_networks(*fingers)

        def one(body, torque):
            traj = simulate(net, schedule, spec.sim, body, torque=torque, remat=True)
            return traj.ellipse[0, 2], traj.ellipse[-1, 2], traj.diverged_step

        a0, a1, div = jax.vmap(one)(bodies, torques)
        return manipulation_loss(a0, a1, spec.target), jnp.min(div)

    meta = {
        "kind": "manipulation",
        "seed": int(seed),
        "sim": spec.sim.metadata(),
        "n_springs": spec.n_springs,
        "target_rad": spec.target,
        "n_envs": spec.n_envs,
        "control_mode": spec.control_mode,
        "environments": [d.__dict__ for d in draws],
    }
    task = jax_task(spec.name, space, loss_fn, spec.sim.steps, spec.chunk, meta)
    task.metadata["spec"] = spec
    return task


def manipulation_trajectory(spec: ManipulationSpec, x, seed: int = 0, env: int = 0, record_stride: int = 10):
    fingers, template, schedule = decode_manipulation(spec, jnp.asarray(x))
    net = merge_networks(*fingers)
    draw = spec.environment(seed, env)
    body = place_object(spec, template, draw)
    traj = simulate(net, schedule, spec.sim, body, record_stride=record_stride, torque=jnp.asarray(spec.torque_schedule(draw)))
    return traj, np.stack([np.asarray(net.i), np.asarray(net.j)], axis=1), (float(body.semi_major), float(body.semi_minor))
