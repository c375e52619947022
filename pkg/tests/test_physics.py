import numpy as np
import pytest

from voxelforge.errors import DimensionMismatch, NumericalBlowup
from voxelforge.genome import Genome, random_genome
from voxelforge.physics import (
    SimConfig, Terrain, actuation_multiplier, build_body, observation_length,
    observe, step,
)


@pytest.fixture(scope="module")
def cfg():
    return SimConfig()


@pytest.fixture(scope="module")
def flat():
    return Terrain.flat()


def full_grid(width, height, actuator_at=0):
    cells = [1] * (width * height)
    cells[actuator_at] = 3
    return Genome(width, height, tuple(cells))


class TestBuildBody:
    def test_single_voxel_counts(self, cfg):
        body = build_body(Genome(1, 1, (3,)), cfg)
        assert body.n_points == 4
        assert body.n_springs == 6
        assert body.n_actuators == 1

    def test_two_voxel_row_shares_edge(self, cfg):
        body = build_body(Genome(2, 1, (3, 1)), cfg)
        assert body.n_points == 6
        assert body.n_springs == 11

    def test_full_5x5_lattice(self, cfg):
        body = build_body(full_grid(5, 5), cfg)
        assert body.n_points == 36

    def test_mass_conserved(self, cfg):
        genome = full_grid(3, 2)
        body = build_body(genome, cfg)
        assert body.mass.sum() == pytest.approx(6 * cfg.voxel_mass, abs=1e-12)

    def test_rests_on_terrain(self, cfg, flat):
        body = build_body(full_grid(2, 2), cfg, spawn_x=0.0, terrain=flat)
        assert body.min_clearance(flat) == pytest.approx(0.0, abs=1e-12)

    def test_actuator_claims_axis_springs(self, cfg):
        body = build_body(Genome(1, 1, (3,)), cfg)
        claimed = body.spring_actuator >= 0
        assert claimed.sum() == 2
        # horizontal actuator drives the two horizontal edges
        for a, b in zip(body.spring_a[claimed], body.spring_b[claimed]):
            assert body.pos[a][1] == body.pos[b][1]

    def test_vertical_actuator_claims_vertical_edges(self, cfg):
        body = build_body(Genome(1, 1, (4,)), cfg)
        claimed = body.spring_actuator >= 0
        assert claimed.sum() == 2
        for a, b in zip(body.spring_a[claimed], body.spring_b[claimed]):
            assert body.pos[a][0] == body.pos[b][0]


class TestActuationMultiplier:
    def test_zero_action_is_identity(self, cfg):
        assert actuation_multiplier(np.array([0.0]), cfg)[0] == 1.0

    def test_extremes_hit_range_ends(self, cfg):
        out = actuation_multiplier(np.array([-1.0, 1.0]), cfg)
        assert out[0] == cfg.actuation_low
        assert out[1] == cfg.actuation_high

    def test_out_of_range_actions_clipped(self, cfg):
        out = actuation_multiplier(np.array([-3.0, 3.0]), cfg)
        assert out[0] == cfg.actuation_low
        assert out[1] == cfg.actuation_high


class TestStep:
    def test_determinism_bit_exact(self, cfg, flat):
        genome = random_genome(4, 3, 7)
        actions = np.random.default_rng(1).uniform(-1, 1, size=(20,))

        def run():
            body = build_body(genome, cfg, 0.0, flat)
            acts = actions[:body.n_actuators]
            states = []
            for _ in range(30):
                step(body, flat, acts, cfg)
                states.append(body.pos.copy())
            return states

        for a, b in zip(run(), run()):
            assert (a == b).all()

    def test_action_length_checked(self, cfg, flat):
        body = build_body(Genome(1, 1, (3,)), cfg, 0.0, flat)
        with pytest.raises(DimensionMismatch):
            step(body, flat, np.zeros(3), cfg)

    def test_zero_gravity_rest_state_is_fixed_point(self, flat):
        cfg0 = SimConfig(gravity=0.0)
        body = build_body(full_grid(3, 3), cfg0, 0.0, flat)
        body.pos[:, 1] += 0.5  # float free of the ground
        before = body.pos.copy()
        step(body, flat, np.zeros(body.n_actuators), cfg0)
        assert np.abs(body.pos - before).max() < 1e-12

    def test_horizontal_momentum_conserved_without_friction_or_gravity(self):
        cfg0 = SimConfig(gravity=0.0)
        terrain = Terrain.flat(friction_coefficient=0.0)
        body = build_body(full_grid(4, 2), cfg0, 0.0, terrain)
        body.pos[:, 1] += 1.0
        rng = np.random.default_rng(3)
        body.vel[:] = rng.uniform(-0.5, 0.5, size=body.vel.shape)
        before = float((body.mass * body.vel[:, 0]).sum())
        for _ in range(10):
            step(body, terrain, np.zeros(body.n_actuators), cfg0)
            after = float((body.mass * body.vel[:, 0]).sum())
            assert after == pytest.approx(before, abs=1e-9)
            before = after

    def test_passive_settling_and_penetration(self, cfg, flat):
        rng = np.random.default_rng(5)
        for _ in range(3):
            genome = random_genome(5, 5, rng)
            body = build_body(genome, cfg, 0.0, flat)
            body.pos[:, 1] += 0.1
            zero = np.zeros(body.n_actuators)
            for _ in range(250):  # 5 simulated seconds
                step(body, flat, zero, cfg)
            assert body.kinetic_energy() < 1e-4
            assert body.min_clearance(flat) > -cfg.penalty_depth

    def test_drop_does_not_tunnel(self, cfg, flat):
        body = build_body(Genome(2, 2, (3, 1, 1, 1)), cfg, 0.0, flat)
        body.pos[:, 1] += 0.5
        zero = np.zeros(body.n_actuators)
        min_seen = 0.0
        for _ in range(150):
            step(body, flat, zero, cfg)
            min_seen = min(min_seen, body.min_clearance(flat))
        assert min_seen > -cfg.penalty_depth

    def test_blowup_detected(self, flat):
        # absurd stiffness with a huge dt must trip the finite check
        from voxelforge.physics import Material
        wild = SimConfig(
            dt=1.0, substeps_per_control=50, max_speed=1e300,
            materials={k: Material(1e9, 0.0) for k in (1, 2, 3, 4)},
        )
        body = build_body(full_grid(2, 2), wild, 0.0, flat)
        body.pos[0] += 0.3
        with pytest.raises(NumericalBlowup):
            for _ in range(50):
                step(body, flat, np.zeros(body.n_actuators), wild)

    def test_zero_actions_body_barely_drifts(self, cfg, flat):
        body = build_body(full_grid(3, 3), cfg, 0.0, flat)
        start = body.com()[0]
        zero = np.zeros(body.n_actuators)
        for _ in range(500):
            step(body, flat, zero, cfg)
        assert abs(body.com()[0] - start) < 0.05


class TestObserve:
    def test_layout_and_length_1x1(self, cfg, flat):
        body = build_body(Genome(1, 1, (3,)), cfg, 0.0, flat)
        obs = observe(body)
        assert obs.shape == (2 + 4 * 2,)
        assert observation_length(Genome(1, 1, (3,)), 0) == 10

    def test_length_full_5x5(self, cfg):
        genome = full_grid(5, 5)
        assert observation_length(genome, 0) == 2 + 36 * 2
        body = build_body(genome, cfg)
        assert observe(body).shape == (74,)

    def test_translation_invariance(self, cfg, flat):
        genome = full_grid(2, 2)
        a = build_body(genome, cfg, spawn_x=0.0, terrain=flat)
        b = build_body(genome, cfg, spawn_x=3.25, terrain=flat)
        assert (observe(a) == observe(b)).all()

    def test_extras_appended(self, cfg, flat):
        body = build_body(Genome(1, 1, (3,)), cfg, 0.0, flat)
        obs = observe(body, np.array([9.0, -2.0]))
        assert obs.shape == (12,)
        assert obs[-2] == 9.0 and obs[-1] == -2.0
