"""2D mass-spring simulation of voxel robots on piecewise-linear terrain.

Each non-empty voxel becomes a square of four corner point masses (corners
shared with neighbouring voxels are merged), four edge springs and two
diagonal shear springs. Actuator voxels drive the rest length of their two
axis-aligned edge springs. Integration is semi-implicit Euler; ground contact
is a penalty normal force plus Coulomb-bounded tangential friction.

Horizontal positions are stored relative to `origin_x` (the spawn abscissa),
so dynamics on flat terrain are bit-identical under horizontal translation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalBlowup
from .genome import Genome, VoxelType

HORIZONTAL = "horizontal"
VERTICAL = "vertical"


@dataclass(frozen=True)
class Material:
    stiffness: float   # N/m
    damping: float     # N*s/m


def default_materials() -> dict[int, Material]:
    """Spring constants per voxel code, damped near 10% of critical."""
    # damping c = 2 * zeta * sqrt(k * m) with m ~ one corner share (25 g)
    def mat(k: float, zeta: float = 0.1) -> Material:
        return Material(stiffness=k, damping=2.0 * zeta * np.sqrt(k * 0.025))

    return {
        int(VoxelType.RIGID): mat(6000.0),
        int(VoxelType.SOFT): mat(800.0),
        int(VoxelType.H_ACTUATOR): mat(2000.0),
        int(VoxelType.V_ACTUATOR): mat(2000.0),
    }


@dataclass(frozen=True)
class SimConfig:
    # dt=1e-3 pumps energy at the contact stiffness below; 5e-4 is stable
    dt: float = 5e-4                      # physics substep, s
    substeps_per_control: int = 40
    gravity: float = 9.81                 # m/s^2, downward
    voxel_edge: float = 0.1               # m
    voxel_mass: float = 0.1               # kg
    materials: dict[int, Material] = field(default_factory=default_materials)
    actuation_low: float = 0.6            # rest-length multiplier at action -1
    actuation_high: float = 1.6           # rest-length multiplier at action +1
    contact_stiffness: float = 4e4        # N/m
    contact_damping: float = 100.0        # N*s/m, integrated implicitly
    max_speed: float = 100.0              # m/s safety clamp
    penalty_depth: float = 0.01           # m, acceptable penetration layer
    blowup_position: float = 1e6          # m, |x| beyond this counts as divergence

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (0.0 < self.actuation_low <= 1.0 <= self.actuation_high < 2.0):
            raise ValueError("actuation range must straddle 1 inside (0, 2)")
        if any(m.stiffness <= 0 for m in self.materials.values()):
            raise ValueError("material stiffness must be positive")


@dataclass(frozen=True, eq=False)
class Terrain:
    """Piecewise-linear heightfield h(x); constant beyond the breakpoints."""

    xs: np.ndarray
    hs: np.ndarray
    friction_coefficient: float = 0.8

    def height(self, x):
        return np.interp(x, self.xs, self.hs)

    @classmethod
    def flat(cls, friction_coefficient: float = 0.8) -> "Terrain":
        return cls(
            xs=np.array([-1.0, 1.0]),
            hs=np.array([0.0, 0.0]),
            friction_coefficient=friction_coefficient,
        )


@dataclass(eq=False)
class SoftBody:
    """Mutable point-mass lattice. Positions' x is relative to origin_x."""

    origin_x: float
    pos: np.ndarray            # (N, 2) float64
    vel: np.ndarray            # (N, 2) float64
    mass: np.ndarray           # (N,) float64
    spring_a: np.ndarray       # (M,) int
    spring_b: np.ndarray       # (M,) int
    rest: np.ndarray           # (M,) float64, > 0
    stiffness: np.ndarray      # (M,) float64, > 0
    damping: np.ndarray        # (M,) float64
    spring_actuator: np.ndarray  # (M,) int, -1 for passive springs
    actuator_axes: tuple[str, ...]

    @property
    def n_points(self) -> int:
        return self.pos.shape[0]

    @property
    def n_springs(self) -> int:
        return self.spring_a.shape[0]

    @property
    def n_actuators(self) -> int:
        return len(self.actuator_axes)

    def com(self) -> np.ndarray:
        """Mass-weighted centre of mass in absolute coordinates."""
        c = self.com_local()
        return np.array([c[0] + self.origin_x, c[1]])

    def com_local(self) -> np.ndarray:
        """Centre of mass with x relative to origin_x (translation-exact)."""
        return (self.pos * self.mass[:, None]).sum(axis=0) / self.mass.sum()

    def com_velocity(self) -> np.ndarray:
        return (self.vel * self.mass[:, None]).sum(axis=0) / self.mass.sum()

    def kinetic_energy(self) -> float:
        return float(0.5 * (self.mass * (self.vel ** 2).sum(axis=1)).sum())

    def min_clearance(self, terrain: Terrain) -> float:
        """Smallest y - h(x) over all points; negative means penetration."""
        h = terrain.height(self.pos[:, 0] + self.origin_x)
        return float((self.pos[:, 1] - h).min())

    def copy(self) -> "SoftBody":
        return SoftBody(
            origin_x=self.origin_x,
            pos=self.pos.copy(),
            vel=self.vel.copy(),
            mass=self.mass.copy(),
            spring_a=self.spring_a,
            spring_b=self.spring_b,
            rest=self.rest,
            stiffness=self.stiffness,
            damping=self.damping,
            spring_actuator=self.spring_actuator,
            actuator_axes=self.actuator_axes,
        )


def build_body(g: Genome, config: SimConfig | None = None, spawn_x: float = 0.0,
               terrain: Terrain | None = None) -> SoftBody:
    """Assemble the point lattice for a genome, resting on the terrain.

    Corners shared between voxels are merged; edge springs shared between two
    voxels are created once with averaged material properties. Each actuator
    voxel claims its two axis-aligned edge springs unless an earlier actuator
    (row-major order) already claimed them.
    """
    config = config or SimConfig()
    terrain = terrain or Terrain.flat()
    e = config.voxel_edge
    w, h = g.width, g.height

    node_index: dict[tuple[int, int], int] = {}
    positions: list[tuple[float, float]] = []

    def node(i: int, j: int) -> int:
        key = (i, j)
        if key not in node_index:
            node_index[key] = len(positions)
            positions.append((i * e, j * e))
        return node_index[key]

    springs: dict[tuple[int, int], dict] = {}

    def add_spring(a: int, b: int, rest: float, mat: Material):
        key = (a, b) if a < b else (b, a)
        rec = springs.get(key)
        if rec is None:
            springs[key] = {"rest": rest, "ks": [mat.stiffness], "cs": [mat.damping],
                            "actuator": -1}
        else:
            rec["ks"].append(mat.stiffness)
            rec["cs"].append(mat.damping)

    def claim(a: int, b: int, actuator: int):
        key = (a, b) if a < b else (b, a)
        rec = springs[key]
        if rec["actuator"] < 0:
            rec["actuator"] = actuator

    axes: list[str] = []
    mass = {}
    for r in range(h):
        for c in range(w):
            code = g.at(r, c)
            if code == 0:
                continue
            mat = config.materials[code]
            jb, jt = h - 1 - r, h - r
            bl, br = node(c, jb), node(c + 1, jb)
            tl, tr = node(c, jt), node(c + 1, jt)
            for p in (bl, br, tl, tr):
                mass[p] = mass.get(p, 0.0) + config.voxel_mass / 4.0
            add_spring(bl, br, e, mat)   # bottom
            add_spring(tl, tr, e, mat)   # top
            add_spring(bl, tl, e, mat)   # left
            add_spring(br, tr, e, mat)   # right
            diag = e * np.sqrt(2.0)
            add_spring(bl, tr, diag, mat)
            add_spring(br, tl, diag, mat)
            if code == VoxelType.H_ACTUATOR:
                idx = len(axes)
                axes.append(HORIZONTAL)
                claim(bl, br, idx)
                claim(tl, tr, idx)
            elif code == VoxelType.V_ACTUATOR:
                idx = len(axes)
                axes.append(VERTICAL)
                claim(bl, tl, idx)
                claim(br, tr, idx)

    pos = np.array(positions, dtype=np.float64)
    n = pos.shape[0]
    masses = np.zeros(n)
    for p, m in mass.items():
        masses[p] = m

    order = list(springs.keys())
    spring_a = np.array([k[0] for k in order], dtype=np.int64)
    spring_b = np.array([k[1] for k in order], dtype=np.int64)
    rest = np.array([springs[k]["rest"] for k in order])
    stiffness = np.array([float(np.mean(springs[k]["ks"])) for k in order])
    damping = np.array([float(np.mean(springs[k]["cs"])) for k in order])
    actuator = np.array([springs[k]["actuator"] for k in order], dtype=np.int64)

    # rest the lowest point on the terrain at the spawn abscissa
    ground = terrain.height(pos[:, 0] + spawn_x)
    pos[:, 1] -= (pos[:, 1] - ground).min()

    return SoftBody(
        origin_x=spawn_x,
        pos=pos,
        vel=np.zeros_like(pos),
        mass=masses,
        spring_a=spring_a,
        spring_b=spring_b,
        rest=rest,
        stiffness=stiffness,
        damping=damping,
        spring_actuator=actuator,
        actuator_axes=tuple(axes),
    )


def actuation_multiplier(actions: np.ndarray, config: SimConfig) -> np.ndarray:
    """Map actions in [-1, 1] to rest-length multipliers, 0 mapping exactly to 1.

    Negative actions interpolate [actuation_low, 1], positive ones
    [1, actuation_high]; the two half-ranges may be asymmetric.
    """
    u = np.clip(actions, -1.0, 1.0)
    return np.where(
        u < 0.0,
        1.0 + u * (1.0 - config.actuation_low),
        1.0 + u * (config.actuation_high - 1.0),
    )


def step(body: SoftBody, terrain: Terrain, actions: np.ndarray,
         config: SimConfig | None = None) -> SoftBody:
    """Advance one control step (substeps_per_control semi-implicit Euler substeps).

    Mutates `body` in place and returns it. Raises NumericalBlowup if the state
    leaves the finite range.
    """
    config = config or SimConfig()
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (body.n_actuators,):
        raise DimensionMismatch(
            f"expected {body.n_actuators} actions, got shape {actions.shape}"
        )

    rest_eff = body.rest.copy()
    if body.n_actuators:
        mult = actuation_multiplier(actions, config)
        actuated = body.spring_actuator >= 0
        rest_eff[actuated] *= mult[body.spring_actuator[actuated]]

    # overflow inside the loop is expected on divergence; it is detected and
    # reported below instead of warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _integrate(body, terrain, rest_eff, config)


def _integrate(body: SoftBody, terrain: Terrain, rest_eff: np.ndarray,
               config: SimConfig) -> SoftBody:
    pos, vel = body.pos, body.vel
    ia, ib = body.spring_a, body.spring_b
    k, c = body.stiffness, body.damping
    inv_mass = 1.0 / body.mass
    dt = config.dt
    mu = terrain.friction_coefficient
    g_y = config.gravity

    for _ in range(config.substeps_per_control):
        d = pos[ib] - pos[ia]
        length = np.sqrt((d ** 2).sum(axis=1))
        length = np.maximum(length, 1e-9)
        axis = d / length[:, None]
        rel_v = vel[ib] - vel[ia]
        # damping acts on the full relative velocity (axial plus transverse);
        # axial-only damping leaves bending modes undamped and cantilevered
        # shapes then sway far past any settling budget
        f_spring = (-k * (length - rest_eff))[:, None] * axis - c[:, None] * rel_v

        force = np.zeros_like(pos)
        np.add.at(force, ib, f_spring)
        np.add.at(force, ia, -f_spring)
        force[:, 1] -= body.mass * g_y

        ground = terrain.height(pos[:, 0] + body.origin_x)
        depth = ground - pos[:, 1]
        touching = depth > 0.0
        normal = np.where(touching, config.contact_stiffness * depth, 0.0)
        force[:, 1] += normal

        vel += force * (inv_mass[:, None] * dt)

        if touching.any():
            # normal damping is integrated implicitly so any contact_damping
            # stays stable; friction is an impulse clamped to the Coulomb cone
            damp = 1.0 + config.contact_damping * dt * inv_mass
            vel[:, 1] = np.where(touching, vel[:, 1] / damp, vel[:, 1])
            max_dv = mu * normal * dt * inv_mass
            vel[:, 0] += np.clip(-vel[:, 0], -max_dv, max_dv)

        # hypot avoids overflow in the squared sum for extreme velocities
        speed = np.hypot(vel[:, 0], vel[:, 1])
        fast = speed > config.max_speed
        if fast.any():
            vel[fast] *= (config.max_speed / speed[fast])[:, None]
        pos += vel * dt

    finite = np.isfinite(pos).all() and np.isfinite(vel).all()
    if not finite or np.abs(pos).max() > config.blowup_position:
        raise NumericalBlowup(
            f"diverged after control step (dt={dt}, finite={finite}, "
            f"max|pos|={np.abs(pos[np.isfinite(pos)]).max(initial=0.0):.3g})"
        )
    return body


def observe(body: SoftBody, extras: np.ndarray | None = None) -> np.ndarray:
    """Observation vector: COM velocity, then per-point offsets from the COM,
    then task extras. Length is a pure function of body shape and task."""
    com_v = body.com_velocity()
    com_rel = (body.pos * body.mass[:, None]).sum(axis=0) / body.mass.sum()
    offsets = (body.pos - com_rel).ravel()
    if extras is None or len(extras) == 0:
        return np.concatenate([com_v, offsets])
    return np.concatenate([com_v, offsets, np.asarray(extras, dtype=np.float64)])


def observation_length(g: Genome, n_extras: int) -> int:
    """Observation size for a genome without building the body each time."""
    corners = set()
    for r in range(g.height):
        for c in range(g.width):
            if g.at(r, c) != 0:
                jb, jt = g.height - 1 - r, g.height - r
                corners.update({(c, jb), (c + 1, jb), (c, jt), (c + 1, jt)})
    return 2 + 2 * len(corners) + n_extras
