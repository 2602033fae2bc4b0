"""Expected-reward table, pseudo-regret and the logarithmic-regret constant."""

import numpy as np
import pytest

from edgebandit.market import (
    PriceLevels,
    PriceVector,
    ProductGrid,
    TruncatedGaussianValuation,
    UniformValuation,
    build_arm_set,
)
from edgebandit.oracle import (
    ArmMeanTable,
    build_mean_table,
    expected_reward,
    pseudo_regret,
    theorem2_asymptote,
)

LADDER20 = PriceLevels(tuple(round(0.05 * i, 10) for i in range(1, 21)))


class TestExpectedReward:
    def test_uniform_ladder_closed_form(self):
        # Single shared price p on every product gives mean p * (1 - p).
        arms = build_arm_set(ProductGrid(3, 3), LADDER20, 20)
        model = UniformValuation()
        for arm in arms:
            p = arm.prices[0]
            assert expected_reward(arm, model) == pytest.approx(
                p * (1.0 - p), abs=1e-15
            )

    def test_gaussian_quadrature_matches_oracle(self):
        # 0.3 * S(0.3) with S from a 40-digit mpmath normal-cdf computation.
        arm = PriceVector(0, (0.3, 0.3, 0.3))
        model = TruncatedGaussianValuation(mean=0.2, std=0.2)
        assert expected_reward(arm, model) == pytest.approx(
            0.3 * 0.36669567693061056, abs=1e-9
        )

    def test_mixed_price_vector_averages_products(self):
        arm = PriceVector(0, (0.2, 0.6))
        model = UniformValuation()
        expect = (0.2 * 0.8 + 0.6 * 0.4) / 2
        assert expected_reward(arm, model) == pytest.approx(expect, abs=1e-15)


class TestArmMeanTable:
    def test_best_arm_and_gaps(self):
        table = ArmMeanTable.from_means([0.1, 0.4, 0.25])
        assert table.best_arm_id == 1
        assert table.best_mean == 0.4
        assert table.gaps == pytest.approx([0.3, 0.0, 0.15])
        assert table.num_arms == 3

    def test_ties_pick_the_lowest_id(self):
        assert ArmMeanTable.from_means([0.2, 0.5, 0.5]).best_arm_id == 1

    def test_arrays_are_frozen(self):
        table = ArmMeanTable.from_means([0.1, 0.2])
        with pytest.raises(ValueError):
            table.means[0] = 0.9

    def test_validation(self):
        with pytest.raises(ValueError):
            ArmMeanTable.from_means([])
        with pytest.raises(ValueError):
            ArmMeanTable.from_means([[0.1, 0.2]])

    def test_build_mean_table_orders_by_arm(self):
        arms = build_arm_set(ProductGrid(1, 2), PriceLevels((0.4, 0.5, 0.6)), 3)
        table = build_mean_table(arms, UniformValuation())
        assert table.means == pytest.approx([0.24, 0.25, 0.24])
        assert table.best_arm_id == 1


class TestPseudoRegret:
    def test_hand_computed_series(self):
        table = ArmMeanTable.from_means([0.5, 0.3])
        series = pseudo_regret([0, 1, 1, 0], table, checkpoints=[1, 2, 4])
        assert series.checkpoints.tolist() == [1, 2, 4]
        assert series.cumulative == pytest.approx([0.0, 0.2, 0.4])

    def test_short_trace_holds_its_final_value(self):
        # A capacity stop freezes regret: later checkpoints repeat it.
        table = ArmMeanTable.from_means([0.5, 0.3])
        series = pseudo_regret([1, 1], table, checkpoints=[1, 2, 50])
        assert series.cumulative == pytest.approx([0.2, 0.4, 0.4])

    def test_optimal_play_accrues_nothing(self):
        table = ArmMeanTable.from_means([0.5, 0.3])
        series = pseudo_regret([0] * 10, table, checkpoints=[10])
        assert series.cumulative[0] == 0.0

    def test_validation(self):
        table = ArmMeanTable.from_means([0.5, 0.3])
        with pytest.raises(ValueError):
            pseudo_regret([0, 1], table, checkpoints=[])
        with pytest.raises(ValueError):
            pseudo_regret([0, 1], table, checkpoints=[3, 2])
        with pytest.raises(ValueError):
            pseudo_regret([0, 1], table, checkpoints=[0, 2])
        with pytest.raises(ValueError):
            pseudo_regret([0, 2], table, checkpoints=[2])


class TestTheorem2Asymptote:
    def test_frozen_value_for_the_reference_instance(self):
        # sum over suboptimal arms of gap / d(mean, 0.5), mpmath at 40 digits.
        table = ArmMeanTable.from_means([0.1, 0.2, 0.3, 0.4, 0.5])
        assert theorem2_asymptote(table) == pytest.approx(
            10.040218415890465, rel=1e-9
        )

    def test_tied_arms_contribute_nothing(self):
        lone = ArmMeanTable.from_means([0.3, 0.5])
        tied = ArmMeanTable.from_means([0.3, 0.5, 0.5, 0.5])
        assert theorem2_asymptote(tied) == pytest.approx(
            theorem2_asymptote(lone), rel=1e-12
        )

    def test_saturated_best_mean_yields_zero(self):
        # d(mean, 1) is infinite, so every term vanishes.
        assert theorem2_asymptote(ArmMeanTable.from_means([1.0, 0.4])) == 0.0

    def test_single_arm_is_zero(self):
        assert theorem2_asymptote(ArmMeanTable.from_means([0.7])) == 0.0
