"""Locomotion evaluation environments: flat walking, goal-switching walking,
and uneven-terrain traversal.

Rewards are pure distance terms in metres. Episodes are deterministic given
(genome, policy, task, seed); the seed only drives the goal schedule of the
bidirectional task (terrain comes from the task's own terrain_seed).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalBlowup
from .genome import Genome
from .physics import SimConfig, SoftBody, Terrain, build_body, observe, observation_length, step

WALKER = "walker"
BIWALKER = "biwalker"
OBSTACLE = "obstacle"
TASK_KINDS = (WALKER, BIWALKER, OBSTACLE)

# number of task-specific observation extras per task
_EXTRAS = {WALKER: 0, BIWALKER: 2, OBSTACLE: 5}

_LOOKAHEAD_SPACING = 0.1
_LOOKAHEAD_SAMPLES = 5

# obstacle course geometry
_COURSE_START = 1.0
_COURSE_END = 60.0
_SEGMENT_LENGTH = (0.3, 0.8)
_SEGMENT_RISE = (-0.15, 0.15)


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    episode_length: int = 500
    terrain_seed: int = 0
    switch_interval: int = 150
    goal_distance_range: tuple[float, float] = (0.5, 1.5)
    goal_arrival_radius: float = 0.1

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task {self.kind!r}; choose from {TASK_KINDS}")
        if self.episode_length <= 0:
            raise ValueError("episode_length must be positive")
        lo, hi = self.goal_distance_range
        if not (0.0 < lo <= hi):
            raise ValueError(f"goal_distance_range must be a positive interval, got {lo}..{hi}")

    @property
    def n_extras(self) -> int:
        return _EXTRAS[self.kind]


@dataclass(frozen=True)
class EpisodeResult:
    fitness: float
    steps_run: int
    final_com: tuple[float, float]
    reward_trace: tuple[float, ...]
    truncated: bool = False
    # optional per-step rows (step, com_x, com_y, com_vx, com_vy, kinetic_energy)
    trajectory: tuple[tuple, ...] | None = None


def make_terrain(task: TaskSpec) -> Terrain:
    """Flat ground for the walking tasks; seeded steps and ramps for traversal."""
    if task.kind in (WALKER, BIWALKER):
        return Terrain.flat()
    rng = np.random.default_rng(task.terrain_seed)
    xs = [-100.0, _COURSE_START]
    hs = [0.0, 0.0]
    x, h = _COURSE_START, 0.0
    while x < _COURSE_END:
        seg = rng.uniform(*_SEGMENT_LENGTH)
        rise = rng.uniform(*_SEGMENT_RISE)
        h = max(0.0, h + rise)
        if rng.random() < 0.5:
            # step: near-vertical jump to the new height, then a flat shelf
            xs.extend([x + 1e-6, x + seg])
            hs.extend([h, h])
        else:
            # ramp: linear grade across the segment
            xs.append(x + seg)
            hs.append(h)
        x += seg
    xs.append(x + 100.0)
    hs.append(h)
    return Terrain(xs=np.array(xs), hs=np.array(hs))


def task_extras(task: TaskSpec, body: SoftBody, terrain: Terrain,
                goal_x: float | None = None) -> np.ndarray:
    """Task-specific observation tail; see each branch for the layout."""
    if task.kind == WALKER:
        return np.empty(0)
    com = body.com()
    if task.kind == BIWALKER:
        delta = goal_x - com[0]
        return np.array([delta, np.sign(delta)])
    ahead = com[0] + _LOOKAHEAD_SPACING * np.arange(1, _LOOKAHEAD_SAMPLES + 1)
    return terrain.height(ahead) - com[1]


class TaskEnv:
    """Step-level episode interface shared by training and evaluation."""

    def __init__(self, genome: Genome, task: TaskSpec,
                 sim_config: SimConfig | None = None, spawn_x: float = 0.0):
        self.genome = genome
        self.task = task
        self.sim_config = sim_config or SimConfig()
        self.spawn_x = spawn_x
        self.terrain = make_terrain(task)
        template = build_body(genome, self.sim_config, spawn_x, self.terrain)
        self._template = template
        self.obs_dim = 2 + 2 * template.n_points + task.n_extras
        self.act_dim = template.n_actuators
        self.body: SoftBody | None = None

    def reset(self, seed: int = 0) -> np.ndarray:
        self.body = self._template.copy()
        self._rng = np.random.default_rng(seed)
        self._steps = 0
        # rewards difference the origin-relative abscissa so flat-ground
        # episodes replay bit-identically under spawn translation
        self._prev_com_x = self.body.com_local()[0]
        if self.task.kind == BIWALKER:
            self._goal_side = 1.0
            self._steps_since_goal = 0
            self._goal_x = self._draw_goal()
        else:
            self._goal_x = None
        return self._observe()

    def _draw_goal(self) -> float:
        """Next goal abscissa, origin-relative, alternating sides."""
        lo, hi = self.task.goal_distance_range
        dist = self._rng.uniform(lo, hi)
        goal = self.body.com_local()[0] + self._goal_side * dist
        self._goal_side = -self._goal_side
        return goal

    def _observe(self) -> np.ndarray:
        goal_abs = None if self._goal_x is None else self._goal_x + self.body.origin_x
        extras = task_extras(self.task, self.body, self.terrain, goal_abs)
        return observe(self.body, extras)

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, dict]:
        """Advance one control step; returns (obs, reward, done, info)."""
        if self.body is None:
            raise RuntimeError("call reset() before step()")
        try:
            step(self.body, self.terrain, action, self.sim_config)
        except NumericalBlowup:
            self._steps += 1
            return np.zeros(self.obs_dim), 0.0, True, {"blowup": True}
        self._steps += 1
        com_x = self.body.com_local()[0]
        if self.task.kind == BIWALKER:
            prev_dist = abs(self._prev_com_x - self._goal_x)
            dist = abs(com_x - self._goal_x)
            reward = prev_dist - dist
            self._steps_since_goal += 1
            if dist < self.task.goal_arrival_radius or \
                    self._steps_since_goal >= self.task.switch_interval:
                self._goal_x = self._draw_goal()
                self._steps_since_goal = 0
        else:
            reward = com_x - self._prev_com_x
        self._prev_com_x = com_x
        done = self._steps >= self.task.episode_length
        return self._observe(), float(reward), done, {"blowup": False}


def run_episode(g: Genome, policy, task: TaskSpec, seed: int = 0,
                sim_config: SimConfig | None = None,
                record_trajectory: bool = False) -> EpisodeResult:
    """One deterministic evaluation episode (policy runs in mean-action mode)."""
    env = TaskEnv(g, task, sim_config)
    if policy.layer_sizes[0] != env.obs_dim or policy.layer_sizes[-1] != env.act_dim:
        raise DimensionMismatch(
            f"policy built for ({policy.layer_sizes[0]}, {policy.layer_sizes[-1]}), "
            f"environment needs ({env.obs_dim}, {env.act_dim})"
        )
    obs = env.reset(seed)
    trace: list[float] = []
    rows: list[tuple] = []
    truncated = False
    done = False
    while not done:
        action = policy.act(obs)
        obs, reward, done, info = env.step(action)
        if info["blowup"]:
            truncated = True
            break
        trace.append(reward)
        if record_trajectory:
            com = env.body.com()
            com_v = env.body.com_velocity()
            rows.append((len(trace), float(com[0]), float(com[1]),
                         float(com_v[0]), float(com_v[1]), env.body.kinetic_energy()))
    com = env.body.com()
    return EpisodeResult(
        fitness=float(sum(trace)),
        steps_run=len(trace),
        final_com=(float(com[0]), float(com[1])),
        reward_trace=tuple(trace),
        truncated=truncated,
        trajectory=tuple(rows) if record_trajectory else None,
    )
