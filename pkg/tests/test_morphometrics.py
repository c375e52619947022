import math

import numpy as np
import pytest

from voxelforge.genome import Genome, enumerate_all, random_genome
from voxelforge.morphometrics import (
    actuator_dispersion, compute_all, connectivity, dispersion_ceiling,
    heterogeneity, symmetry,
)

from oracles import connectivity_oracle, dispersion_oracle, entropy_oracle, symmetry_oracle


def g(width, height, cells):
    return Genome(width, height, tuple(cells))


class TestHeterogeneity:
    def test_single_material_zero(self):
        assert heterogeneity(g(2, 2, [2, 2, 2, 2])) == 0.0

    def test_two_materials_half(self):
        assert heterogeneity(g(1, 2, [1, 3])) == 0.5

    def test_four_materials_one(self):
        assert heterogeneity(g(2, 2, [1, 2, 3, 4])) == 1.0

    def test_empties_excluded(self):
        # proportions count only non-empty voxels
        assert heterogeneity(g(3, 1, [1, 0, 3])) == pytest.approx(
            heterogeneity(g(1, 2, [1, 3])), abs=0.0
        )

    def test_material_relabel_invariance(self):
        a = g(2, 2, [1, 1, 2, 3])
        relabeled = g(2, 2, [4, 4, 1, 3])  # same multiset of proportions
        assert heterogeneity(a) == pytest.approx(heterogeneity(relabeled), abs=1e-15)


class TestConnectivity:
    def test_single_voxel(self):
        assert connectivity(g(1, 1, [4])) == 0.0

    def test_full_2x2(self):
        assert connectivity(g(2, 2, [1, 3, 1, 1])) == 2.0

    def test_full_3x3(self):
        genome = g(3, 3, [1, 1, 1, 1, 3, 1, 1, 1, 1])
        assert connectivity(genome) == 24 / 9

    def test_empty_cells_carry_no_edges(self):
        genome = g(3, 1, [3, 1, 0])
        assert connectivity(genome) == 1.0


class TestSymmetry:
    def test_mirror_symmetric_grid(self):
        genome = g(3, 2, [1, 2, 1, 3, 0, 3])
        assert symmetry(genome) == 1.0

    def test_1x2_opposed_codes(self):
        assert symmetry(g(2, 1, [0, 4])) == 0.0

    def test_1x3_example(self):
        assert symmetry(g(3, 1, [1, 2, 3])) == pytest.approx(2 / 3, abs=0.0)

    def test_mirror_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            genome = random_genome(4, 3, rng)
            mirrored = g(4, 3, [
                genome.at(r, 3 - c) for r in range(3) for c in range(4)
            ])
            assert symmetry(mirrored) == symmetry(genome)

    def test_horizontal_axis(self):
        genome = g(1, 2, [0, 4])
        assert symmetry(genome, axis="horizontal") == 0.0
        assert symmetry(genome, axis="vertical") == 1.0

    def test_transpose_requires_square(self):
        with pytest.raises(ValueError):
            symmetry(g(2, 1, [3, 1]), axis="transpose")
        assert symmetry(g(2, 2, [1, 3, 3, 1]), axis="transpose") == 1.0

    def test_unknown_axis(self):
        with pytest.raises(ValueError):
            symmetry(g(1, 1, [3]), axis="diagonal")


class TestActuatorDispersion:
    def test_single_actuator_zero(self):
        assert actuator_dispersion(g(2, 2, [3, 1, 1, 1])) == 0.0

    def test_two_actuators_distance_one(self):
        assert actuator_dispersion(g(3, 1, [3, 1, 3])) == 1.0

    def test_corner_actuators_sqrt2(self):
        genome = g(3, 3, [3, 1, 3, 1, 1, 1, 3, 1, 3])
        assert actuator_dispersion(genome) == math.sqrt(2)

    def test_translation_invariance(self):
        # same actuator pattern embedded at a different offset
        small = g(2, 2, [3, 4, 1, 1])
        shifted = g(4, 4, [0] * 5 + [3, 4, 0, 0, 1, 1] + [0] * 5)
        assert actuator_dispersion(shifted) == actuator_dispersion(small)


class TestComputeAll:
    def test_1x1_normalization(self):
        m = compute_all(g(1, 1, [3]))
        assert m.normalized() == (0.0, 0.0, 1.0, 0.0)
        assert m.composite == 0.25

    def test_composite_in_unit_interval(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            m = compute_all(random_genome(5, 5, rng))
            assert 0.0 <= m.composite <= 1.0
            for v in m.normalized():
                assert 0.0 <= v <= 1.0

    def test_hand_computed_composite(self):
        # mirror-symmetric full grid, actuators at the ends of the middle row
        genome = g(3, 3, [1, 2, 1, 3, 2, 3, 1, 2, 1])
        m = compute_all(genome)
        assert m.heterogeneity == entropy_oracle(genome)
        assert m.symmetry == 1.0
        expected = (
            m.het_norm + connectivity_oracle(genome) / 4.0 + 1.0
            + dispersion_oracle(genome) / dispersion_ceiling(3, 3)
        ) / 4.0
        assert m.composite == pytest.approx(expected, abs=1e-15)

    def test_composite_argmax_stable_under_common_scaling(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            a = compute_all(random_genome(4, 4, rng))
            b = compute_all(random_genome(4, 4, rng))
            if a.composite == b.composite:
                continue
            scale = 0.37
            scaled_a = sum(v * scale for v in a.normalized())
            scaled_b = sum(v * scale for v in b.normalized())
            assert (a.composite > b.composite) == (scaled_a > scaled_b)


class TestOracleEquivalence:
    @pytest.mark.parametrize("width,height", [(1, 1), (2, 1), (1, 3), (3, 1),
                                              (2, 2), (3, 2), (2, 3), (1, 6)])
    def test_all_small_genomes_match_naive_oracles(self, width, height):
        for genome in enumerate_all(width, height):
            assert heterogeneity(genome) == pytest.approx(
                entropy_oracle(genome), abs=1e-12)
            assert connectivity(genome) == pytest.approx(
                connectivity_oracle(genome), abs=1e-12)
            for axis in ("vertical", "horizontal"):
                assert symmetry(genome, axis=axis) == pytest.approx(
                    symmetry_oracle(genome, axis=axis), abs=1e-12)
            assert actuator_dispersion(genome) == pytest.approx(
                dispersion_oracle(genome), abs=1e-12)
