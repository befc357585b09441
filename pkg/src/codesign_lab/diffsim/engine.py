"""2D mass-spring engine with penalty contact, written against ``jax.numpy``.

Everything here is a pure function of its inputs so that rollouts can be
``jit``-compiled, ``vmap``-ed over environments or particles, and
differentiated in reverse mode.  Reverse-mode through ``lax.scan`` stores
every step's residuals, i.e. a full-trajectory adjoint sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import jax
import jax.numpy as jnp
import numpy as np

jax.config.update("jax_enable_x64", True)

GRADIENT_LIMIT = 1e12


class SimulationDiverged(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"simulation diverged at step {step}")
        self.step = step


class GradientOverflow(FloatingPointError):
    pass


class SpringNetwork(NamedTuple):
    positions: jnp.ndarray  # (n, 2) m
    masses: jnp.ndarray  # (n,) kg
    i: jnp.ndarray  # (s,) int
    j: jnp.ndarray  # (s,) int
    rest_length: jnp.ndarray  # (s,) m
    stiffness: jnp.ndarray  # (s,) N/m
    actuated: jnp.ndarray  # (s,) bool
    pinned: jnp.ndarray  # (n,) bool

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def n_springs(self) -> int:
        return self.rest_length.shape[0]


class RigidEllipse(NamedTuple):
    center: jnp.ndarray  # (2,)
    angle: jnp.ndarray  # rad
    semi_major: jnp.ndarray
    semi_minor: jnp.ndarray
    mass: jnp.ndarray
    inertia: jnp.ndarray
    linear_velocity: jnp.ndarray
    angular_velocity: jnp.ndarray


class SimState(NamedTuple):
    x: jnp.ndarray
    v: jnp.ndarray
    body: Optional[RigidEllipse] = None


@dataclass(frozen=True)
class SimConfig:
    dt: float = 4e-3
    steps: int = 1024
    gravity: tuple[float, float] = (0.0, -4.8)
    ground: bool = True
    ground_height: float = 0.0
    contact_stiffness: float = 1e4
    contact_damping: float = 100.0
    friction: float = 1.0
    friction_velocity: float = 0.2
    contact_smoothing: float = 1e-3
    spring_damping: float = 30.0
    # per-step external torque on the ellipse, length `steps`; None for no torque
    torque: Optional[tuple] = None

    def __post_init__(self):
        if self.dt <= 0 or self.steps < 1 or self.contact_stiffness < 0:
            raise ValueError("dt > 0, steps >= 1 and contact_stiffness >= 0 required")

    def metadata(self) -> dict:
        d = dict(self.__dict__)
        d["torque"] = None if self.torque is None else list(self.torque)
        return d


def merge_networks(*nets: SpringNetwork) -> SpringNetwork:
    """Disjoint union; indices of later networks are shifted."""
    offsets = np.cumsum([0] + [n.positions.shape[0] for n in nets[:-1]])
    return SpringNetwork(
        positions=jnp.concatenate([n.positions for n in nets]),
        masses=jnp.concatenate([n.masses for n in nets]),
        i=np.concatenate([np.asarray(n.i) + o for n, o in zip(nets, offsets)]),
        j=np.concatenate([np.asarray(n.j) + o for n, o in zip(nets, offsets)]),
        rest_length=jnp.concatenate([n.rest_length for n in nets]),
        stiffness=jnp.concatenate([n.stiffness for n in nets]),
        actuated=np.concatenate([np.asarray(n.actuated) for n in nets]),
        pinned=np.concatenate([np.asarray(n.pinned) for n in nets]),
    )


def validate_network(net: SpringNetwork) -> None:
    i, j = np.asarray(net.i), np.asarray(net.j)
    n = net.positions.shape[0]
    if np.any(i == j) or i.min() < 0 or j.min() < 0 or max(i.max(), j.max()) >= n:
        raise ValueError("spring endpoints must be distinct valid node indices")
    if np.any(np.asarray(net.rest_length) <= 0) or np.any(np.asarray(net.stiffness) < 0):
        raise ValueError("rest lengths must be positive and stiffness nonnegative")
    if np.any(np.asarray(net.masses) <= 0):
        raise ValueError("masses must be positive")
    # connectivity by union-find
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(i, j):
        parent[find(a)] = find(b)
    if len({find(a) for a in range(n)}) != 1:
        raise ValueError("spring network is not connected")


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _perp(a):
    return jnp.stack([-a[..., 1], a[..., 0]], axis=-1)


def spring_forces(x, v, net: SpringNetwork, rest_scale, damping: float):
    d = x[net.j] - x[net.i]
    length = jnp.sqrt(jnp.sum(d * d, axis=-1))
    u = d / length[:, None]
    rest = net.rest_length * rest_scale
    closing = jnp.sum((v[net.j] - v[net.i]) * u, axis=-1)
    f = net.stiffness * (length - rest) + damping * closing
    F = f[:, None] * u
    return jnp.zeros_like(x).at[net.i].add(F).at[net.j].add(-F)


def _penalty(depth, cfg: SimConfig):
    """Smoothed penetration and its contact gate (both C-infinity in depth)."""
    delta = cfg.contact_smoothing
    return delta * jax.nn.softplus(depth / delta), jax.nn.sigmoid(depth / delta)


def ground_forces(x, v, cfg: SimConfig):
    depth = cfg.ground_height - x[:, 1]
    pen, gate = _penalty(depth, cfg)
    fn = cfg.contact_stiffness * pen - cfg.contact_damping * gate * v[:, 1]
    ft = -cfg.friction * cfg.contact_stiffness * pen * jnp.tanh(v[:, 0] / cfg.friction_velocity)
    return jnp.stack([ft, fn], axis=-1)


def ellipse_node_contact(x, v, body: RigidEllipse, cfg: SimConfig):
    """Penalty contact between nodes and the ellipse.

    Returns (forces on nodes, force on ellipse, torque on ellipse); the
    ellipse receives exactly the negated sum of node forces.
    """
    c, s = jnp.cos(body.angle), jnp.sin(body.angle)
    rel = x - body.center
    lx = rel[:, 0] * c + rel[:, 1] * s
    ly = -rel[:, 0] * s + rel[:, 1] * c
    a, b = body.semi_major, body.semi_minor
    g = jnp.sqrt((lx / a) ** 2 + (ly / b) ** 2 + 1e-12)
    gx, gy = lx / (a * a * g), ly / (b * b * g)
    gnorm = jnp.sqrt(gx * gx + gy * gy)
    depth = (1.0 - g) / gnorm
    nlx, nly = gx / gnorm, gy / gnorm
    n = jnp.stack([nlx * c - nly * s, nlx * s + nly * c], axis=-1)
    t = _perp(n)
    pen, gate = _penalty(depth, cfg)
    v_surface = body.linear_velocity + body.angular_velocity * _perp(rel)
    vr = v - v_surface
    vn = jnp.sum(vr * n, axis=-1)
    vt = jnp.sum(vr * t, axis=-1)
    fn = cfg.contact_stiffness * pen - cfg.contact_damping * gate * vn
    ft = -cfg.friction * cfg.contact_stiffness * pen * jnp.tanh(vt / cfg.friction_velocity)
    F = fn[:, None] * n + ft[:, None] * t
    return F, -jnp.sum(F, axis=0), -jnp.sum(_cross(rel, F))


def ellipse_ground_contact(body: RigidEllipse, cfg: SimConfig):
    c, s = jnp.cos(body.angle), jnp.sin(body.angle)
    # support point in direction (0, -1), local frame
    dlx, dly = -s, -c
    a2, b2 = body.semi_major**2, body.semi_minor**2
    h = jnp.sqrt(a2 * dlx * dlx + b2 * dly * dly)
    slx, sly = a2 * dlx / h, b2 * dly / h
    r = jnp.stack([slx * c - sly * s, slx * s + sly * c])
    depth = cfg.ground_height - (body.center[1] + r[1])
    pen, gate = _penalty(depth, cfg)
    vp = body.linear_velocity + body.angular_velocity * _perp(r)
    fn = cfg.contact_stiffness * pen - cfg.contact_damping * gate * vp[1]
    ft = -cfg.friction * cfg.contact_stiffness * pen * jnp.tanh(vp[0] / cfg.friction_velocity)
    F = jnp.stack([ft, fn])
    return F, _cross(r, F)


def step(state: SimState, net: SpringNetwork, rest_scale, cfg: SimConfig, torque=0.0) -> SimState:
    """One semi-implicit Euler step (velocities first, then positions)."""
    x, v, body = state
    g = jnp.asarray(cfg.gravity)
    force = spring_forces(x, v, net, rest_scale, cfg.spring_damping)
    force = force + net.masses[:, None] * g
    if cfg.ground:
        force = force + ground_forces(x, v, cfg)
    if body is not None:
        Fn, Fe, tau = ellipse_node_contact(x, v, body, cfg)
        force = force + Fn
        Fe = Fe + body.mass * g
        tau = tau + torque
        if cfg.ground:
            Fg, tg = ellipse_ground_contact(body, cfg)
            Fe, tau = Fe + Fg, tau + tg
        lv = body.linear_velocity + cfg.dt * Fe / body.mass
        av = body.angular_velocity + cfg.dt * tau / body.inertia
        body = body._replace(
            linear_velocity=lv,
            angular_velocity=av,
            center=body.center + cfg.dt * lv,
            angle=body.angle + cfg.dt * av,
        )
    v = v + cfg.dt * force / net.masses[:, None]
    v = jnp.where(jnp.asarray(net.pinned)[:, None], 0.0, v)
    x = x + cfg.dt * v
    return SimState(x, v, body)


def _finite(state: SimState):
    leaves = jax.tree_util.tree_leaves(state)
    return jnp.all(jnp.stack([jnp.all(jnp.isfinite(leaf)) for leaf in leaves]))


class Trajectory(NamedTuple):
    positions: jnp.ndarray  # (records, n, 2)
    ellipse: Optional[jnp.ndarray]  # (records, 3): x, y, angle
    diverged_step: jnp.ndarray  # == steps when finite throughout
    record_stride: int


def simulate(
    net: SpringNetwork,
    rest_scale: Callable,
    cfg: SimConfig,
    body: Optional[RigidEllipse] = None,
    record_stride: Optional[int] = None,
    torque=None,
    remat: bool = False,
) -> Trajectory:
    """Integrate ``cfg.steps`` steps from rest.

    ``rest_scale(k)`` gives the per-spring rest-length multiplier at step k.
    ``torque`` (length ``steps``) overrides ``cfg.torque`` and may be traced.
    With ``record_stride=None`` only the initial and final states are kept.
    ``remat=True`` recomputes each step in the reverse sweep instead of storing
    its intermediates (adjoint memory drops to one state per step).
    """
    stride = cfg.steps if record_stride is None else int(record_stride)
    if cfg.steps % stride:
        raise ValueError("record_stride must divide steps")
    if torque is None and cfg.torque is not None:
        torque = jnp.asarray(cfg.torque)
    init = SimState(jnp.asarray(net.positions), jnp.zeros_like(net.positions), body)

    def pose(s):
        if s.body is None:
            return None
        return jnp.concatenate([s.body.center, s.body.angle[None]])

    def body_fn(carry, k):
        s, bad = carry
        tq = 0.0 if torque is None else torque[k]
        s = step(s, net, rest_scale(k), cfg, tq)
        bad = jnp.where((bad == cfg.steps) & ~_finite(s), k, bad)
        out = (s.x, pose(s)) if record_stride is not None else None
        return (s, bad), out

    if remat:
        body_fn = jax.checkpoint(body_fn)
    (final, bad), ys = jax.lax.scan(body_fn, (init, jnp.asarray(cfg.steps)), jnp.arange(cfg.steps))
    if record_stride is None:
        xs = jnp.stack([init.x, final.x])
        ps = None if body is None else jnp.stack([pose(init), pose(final)])
    else:
        xs = jnp.concatenate([init.x[None], ys[0][stride - 1 :: stride]])
        ps = None if body is None else jnp.concatenate([pose(init)[None], ys[1][stride - 1 :: stride]])
    return Trajectory(xs, ps, bad, stride)


def rollout(net, rest_scale, cfg, loss_spec, body=None, record_stride=None):
    """Simulate and apply ``loss_spec`` to the trajectory; raises on divergence."""
    traj = simulate(net, rest_scale, cfg, body, record_stride)
    bad = int(traj.diverged_step)
    if bad < cfg.steps:
        raise SimulationDiverged(bad)
    return float(loss_spec(traj)), traj


def rollout_with_gradient(build: Callable, cfg: SimConfig, loss_spec, params):
    """Loss and reverse-mode gradient with respect to ``params``.

    ``build(params)`` returns ``(network, rest_scale, body_or_None)``.
    """

    def f(p):
        net, scale, body = build(p)
        traj = simulate(net, scale, cfg, body)
        return loss_spec(traj), traj.diverged_step

    (loss, bad), grad = jax.value_and_grad(f, has_aux=True)(params)
    if int(bad) < cfg.steps:
        raise SimulationDiverged(int(bad))
    flat = jax.tree_util.tree_leaves(grad)
    if any(bool(jnp.any(jnp.abs(g) > GRADIENT_LIMIT)) for g in flat):
        raise GradientOverflow("gradient entry exceeds 1e12; reduce dt")
    return float(loss), grad


def center_of_mass(positions, masses):
    w = masses / jnp.sum(masses)
    return jnp.tensordot(w, positions, axes=([0], [-2]))


def mechanical_energy(state: SimState, net: SpringNetwork, cfg: SimConfig, rest_scale=1.0) -> float:
    """Kinetic + spring potential + gravitational potential (nodes only)."""
    x, v = state.x, state.v
    ke = 0.5 * jnp.sum(net.masses[:, None] * v * v)
    d = x[net.j] - x[net.i]
    length = jnp.sqrt(jnp.sum(d * d, axis=-1))
    pe = 0.5 * jnp.sum(net.stiffness * (length - net.rest_length * rest_scale) ** 2)
    pg = -jnp.sum(net.masses[:, None] * x * jnp.asarray(cfg.gravity))
    return float(ke + pe + pg)
