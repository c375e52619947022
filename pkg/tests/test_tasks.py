import numpy as np
import pytest

from voxelforge.errors import DimensionMismatch
from voxelforge.genome import Genome, random_genome
from voxelforge.physics import SimConfig, build_body, observation_length
from voxelforge.policy import Policy
from voxelforge.tasks import (
    BIWALKER, OBSTACLE, WALKER, TaskEnv, TaskSpec, make_terrain, run_episode,
    task_extras,
)


def zero_policy(obs_dim, act_dim, hidden=8):
    """All-zero network: mean action is exactly 0 everywhere."""
    sizes = [obs_dim, hidden, hidden, act_dim]
    zeros = lambda a, b: (np.zeros((a, b)), np.zeros(b))
    layers = [zeros(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
    critic_sizes = sizes[:-1] + [1]
    critic = [zeros(a, b) for a, b in zip(critic_sizes[:-1], critic_sizes[1:])]
    return Policy(sizes, layers, critic, np.zeros(act_dim))


CROSS = Genome(3, 3, (0, 3, 0, 4, 1, 4, 0, 3, 0))


class TestMakeTerrain:
    def test_walker_flat(self):
        terrain = make_terrain(TaskSpec(WALKER))
        xs = np.linspace(-5, 50, 200)
        assert (terrain.height(xs) == 0.0).all()

    def test_biwalker_flat(self):
        terrain = make_terrain(TaskSpec(BIWALKER))
        assert terrain.height(12.3) == 0.0

    def test_obstacle_deterministic(self):
        a = make_terrain(TaskSpec(OBSTACLE, terrain_seed=7))
        b = make_terrain(TaskSpec(OBSTACLE, terrain_seed=7))
        assert (a.xs == b.xs).all() and (a.hs == b.hs).all()
        c = make_terrain(TaskSpec(OBSTACLE, terrain_seed=8))
        assert len(a.xs) != len(c.xs) or (a.hs != c.hs).any()

    def test_obstacle_bounds(self):
        terrain = make_terrain(TaskSpec(OBSTACLE, terrain_seed=3))
        assert (terrain.hs >= 0.0).all()
        rises = np.abs(np.diff(terrain.hs))
        assert (rises <= 0.15 + 1e-12).all()
        gaps = np.diff(terrain.xs[1:-1])  # interior, skip the flat aprons
        real = gaps[gaps > 1e-5]
        assert (real >= 0.3 - 1e-5).all() and (real <= 0.8 + 1e-5).all()

    def test_obstacle_flat_spawn_region(self):
        terrain = make_terrain(TaskSpec(OBSTACLE, terrain_seed=3))
        assert terrain.height(0.0) == 0.0
        assert terrain.height(0.9) == 0.0


class TestTaskExtras:
    def test_walker_empty(self):
        body = build_body(CROSS, SimConfig())
        extras = task_extras(TaskSpec(WALKER), body, make_terrain(TaskSpec(WALKER)))
        assert extras.shape == (0,)

    def test_biwalker_goal_delta_and_sign(self):
        body = build_body(CROSS, SimConfig())
        com_x = body.com()[0]
        extras = task_extras(TaskSpec(BIWALKER), body,
                             make_terrain(TaskSpec(BIWALKER)), goal_x=com_x + 1.0)
        assert extras[0] == pytest.approx(1.0, abs=1e-12)
        assert extras[1] == 1.0

    def test_obstacle_flat_ground_lookahead(self):
        task = TaskSpec(OBSTACLE, terrain_seed=0)
        body = build_body(CROSS, SimConfig())
        flat = make_terrain(TaskSpec(WALKER))
        com_y = body.com()[1]
        extras = task_extras(task, body, flat)
        assert extras.shape == (5,)
        assert extras == pytest.approx(np.full(5, -com_y), abs=1e-12)


class TestEnvDimensions:
    @pytest.mark.parametrize("kind,n_extras", [(WALKER, 0), (BIWALKER, 2), (OBSTACLE, 5)])
    def test_obs_dim_matches_layout(self, kind, n_extras):
        env = TaskEnv(CROSS, TaskSpec(kind, episode_length=5))
        assert env.obs_dim == observation_length(CROSS, n_extras)
        obs = env.reset(0)
        assert obs.shape == (env.obs_dim,)

    def test_policy_dimension_checked(self):
        policy = zero_policy(3, 2)
        with pytest.raises(DimensionMismatch):
            run_episode(CROSS, policy, TaskSpec(WALKER, episode_length=5))


class TestRunEpisode:
    def test_zero_policy_barely_drifts(self):
        task = TaskSpec(WALKER)
        rng = np.random.default_rng(12)
        for genome in (CROSS, random_genome(5, 5, rng)):
            env = TaskEnv(genome, task)
            policy = zero_policy(env.obs_dim, env.act_dim)
            result = run_episode(genome, policy, task, seed=0)
            assert abs(result.fitness) < 0.05
            assert not result.truncated

    def test_deterministic(self):
        task = TaskSpec(BIWALKER, episode_length=60)
        env = TaskEnv(CROSS, task)
        policy = Policy.init_random([env.obs_dim, 8, 8, env.act_dim], 3)
        a = run_episode(CROSS, policy, task, seed=5)
        b = run_episode(CROSS, policy, task, seed=5)
        assert a == b

    def test_fitness_is_trace_sum(self):
        task = TaskSpec(WALKER, episode_length=40)
        env = TaskEnv(CROSS, task)
        policy = Policy.init_random([env.obs_dim, 8, 8, env.act_dim], 1)
        result = run_episode(CROSS, policy, task, seed=0)
        assert result.fitness == sum(result.reward_trace)
        assert result.steps_run == 40

    def test_walker_spawn_translation_invariance(self):
        task = TaskSpec(WALKER, episode_length=50)
        traces = []
        for spawn_x in (0.0, 2.7):
            env = TaskEnv(CROSS, task, spawn_x=spawn_x)
            policy = Policy.init_random([env.obs_dim, 8, 8, env.act_dim], 9)
            obs = env.reset(0)
            trace = []
            done = False
            while not done:
                obs, reward, done, _ = env.step(policy.act(obs))
                trace.append(reward)
            traces.append(trace)
        assert traces[0] == traces[1]

    def test_trajectory_recording(self):
        task = TaskSpec(WALKER, episode_length=10)
        env = TaskEnv(CROSS, task)
        policy = zero_policy(env.obs_dim, env.act_dim)
        result = run_episode(CROSS, policy, task, record_trajectory=True)
        assert len(result.trajectory) == 10
        assert result.trajectory[0][0] == 1
        assert len(result.trajectory[0]) == 6

    def test_blowup_truncates_with_accumulated_fitness(self):
        from voxelforge.physics import Material
        # deliberately unstable integration: the episode must stop early,
        # keep the rewards earned so far and raise the truncation flag
        wild = SimConfig(dt=0.5, substeps_per_control=10, max_speed=1e300,
                         materials={k: Material(1e9, 0.0) for k in (1, 2, 3, 4)})
        task = TaskSpec(WALKER, episode_length=200)
        env = TaskEnv(CROSS, task, sim_config=wild)
        policy = Policy.init_random([env.obs_dim, 8, 8, env.act_dim], 0)
        result = run_episode(CROSS, policy, task, seed=0, sim_config=wild)
        assert result.truncated
        assert result.steps_run < 200
        assert result.fitness == sum(result.reward_trace)


class TestBiwalkerGoals:
    def test_goal_schedule_replays(self):
        task = TaskSpec(BIWALKER, episode_length=80, switch_interval=20)
        env = TaskEnv(CROSS, task)
        policy = Policy.init_random([env.obs_dim, 8, 8, env.act_dim], 2)

        def goals():
            obs = env.reset(seed=4)
            seen = [env._goal_x]
            done = False
            while not done:
                obs, _, done, _ = env.step(policy.act(obs))
                if env._goal_x != seen[-1]:
                    seen.append(env._goal_x)
            return seen

        first, second = goals(), goals()
        assert first == second
        assert len(first) >= 4  # timer forces several switches

    def test_goal_sides_alternate(self):
        task = TaskSpec(BIWALKER, episode_length=90, switch_interval=30)
        env = TaskEnv(CROSS, task)
        obs = env.reset(seed=1)
        com = env.body.com()[0]
        sides = [np.sign(env._goal_x - com)]
        zero = zero_policy(env.obs_dim, env.act_dim)
        done = False
        last_goal = env._goal_x
        while not done:
            obs, _, done, _ = env.step(zero.act(obs))
            if env._goal_x != last_goal:
                sides.append(np.sign(env._goal_x - env.body.com()[0]))
                last_goal = env._goal_x
        assert sides[:3] == [1.0, -1.0, 1.0]
