"""Divergences, confidence indices and the policy state machines.

Reference numbers are frozen from a 40-digit mpmath computation; the
bisection solver carries its documented 1e-9 tolerance on top.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgebandit.policies import (
    DIVERGENCES,
    EG_EXPLOIT_RULES,
    KERNEL_POLICY_CODES,
    KL_BISECTION_TOL,
    POLICY_KINDS,
    ArmStats,
    EpsilonGreedyPolicy,
    KLUCBPolicy,
    MOSSPolicy,
    NullPolicy,
    PolicyConfig,
    ThompsonPolicy,
    UCBPolicy,
    _kl_ucb_solve,
    _moss_bonus,
    bernoulli_kl,
    exploration_value,
    exponential_kl,
    kl_ucb_index,
    make_policy,
    moss_index,
    ucb_index,
)
from edgebandit.market import ConfigurationError


def rng(seed=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


class TestBernoulliKL:
    def test_frozen_values(self):
        assert bernoulli_kl(0.2, 0.8) == pytest.approx(
            0.83177661667193437, rel=1e-12
        )
        assert bernoulli_kl(0.0, 0.5) == pytest.approx(
            0.69314718055994531, rel=1e-12
        )
        assert bernoulli_kl(0.4, 0.5) == pytest.approx(
            0.020135513550688873, rel=1e-12
        )

    def test_zero_iff_equal(self):
        assert bernoulli_kl(0.3, 0.3) == 0.0
        assert bernoulli_kl(0.0, 0.0) == 0.0
        assert bernoulli_kl(1.0, 1.0) == 0.0
        assert bernoulli_kl(0.3, 0.31) > 0.0

    def test_infinite_when_support_vanishes(self):
        assert bernoulli_kl(0.3, 0.0) == math.inf
        assert bernoulli_kl(0.3, 1.0) == math.inf
        assert bernoulli_kl(0.0, 1.0) == math.inf

    def test_domain(self):
        with pytest.raises(ValueError):
            bernoulli_kl(-0.1, 0.5)
        with pytest.raises(ValueError):
            bernoulli_kl(0.5, 1.1)

    @given(
        u=st.floats(0.001, 0.999),
        v=st.floats(0.001, 0.999),
    )
    def test_nonnegative(self, u, v):
        assert bernoulli_kl(u, v) >= 0.0


class TestExponentialKL:
    def test_frozen_values(self):
        assert exponential_kl(2.0, 1.0) == pytest.approx(
            0.19314718055994531, rel=1e-12
        )
        assert exponential_kl(1.0, 2.0) == pytest.approx(
            0.30685281944005469, rel=1e-12
        )

    def test_zero_iff_equal(self):
        assert exponential_kl(0.7, 0.7) == 0.0

    @given(
        u=st.floats(0.01, 10.0),
        v=st.floats(0.01, 10.0),
    )
    def test_nonnegative(self, u, v):
        assert exponential_kl(u, v) >= 0.0

    def test_increasing_above_the_mean(self):
        values = [exponential_kl(0.4, v) for v in (0.4, 0.5, 0.7, 0.9)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_domain(self):
        with pytest.raises(ValueError):
            exponential_kl(0.0, 1.0)
        with pytest.raises(ValueError):
            exponential_kl(1.0, -2.0)


class TestExplorationValue:
    def test_frozen_values(self):
        assert exploration_value(1.0) == 0.0
        assert exploration_value(math.e, 2.0) == pytest.approx(1.0, abs=1e-15)
        assert exploration_value(10.0, 3.0) == pytest.approx(
            4.8046824287379131, rel=1e-12
        )

    def test_log_log_term_is_floored_at_zero(self):
        # log log 2 < 0, so gamma must not reduce the budget.
        assert exploration_value(2.0, 5.0) == math.log(2.0)

    def test_domain(self):
        with pytest.raises(ValueError):
            exploration_value(0.5)


class TestKLUCBIndex:
    def test_frozen_root(self):
        # n=1, mean=0, f(t)=1: largest q with -log(1-q) <= 1 is 1 - 1/e.
        idx = kl_ucb_index(ArmStats(1, 0.0), t=math.e)
        assert idx == pytest.approx(0.63212055882855768, abs=2e-9)

    def test_mean_one_saturates(self):
        assert kl_ucb_index(ArmStats(3, 3.0), t=100.0) == 1.0

    def test_never_below_the_mean(self):
        idx = kl_ucb_index(ArmStats(50, 35.0), t=1000.0)
        assert 0.7 <= idx <= 1.0

    def test_monotone_in_t(self):
        stats = ArmStats(20, 9.0)
        values = [kl_ucb_index(stats, t=t) for t in (2.0, 10.0, 100.0, 1e5)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_exponential_divergence_saturation(self):
        # At mean 0.9 one pull and a large budget leave q=1 feasible.
        idx = kl_ucb_index(ArmStats(1, 0.9), t=1e6, divergence="exponential")
        assert idx == 1.0

    def test_exponential_divergence_mean_zero_degenerates(self):
        assert kl_ucb_index(ArmStats(3, 0.0), t=100.0, divergence="exponential") == 0.0

    def test_requires_a_pull(self):
        with pytest.raises(ValueError):
            kl_ucb_index(ArmStats(0, 0.0), t=5.0)

    def test_unknown_divergence(self):
        with pytest.raises(ValueError):
            kl_ucb_index(ArmStats(1, 0.5), t=5.0, divergence="gaussian")

    @given(
        mean=st.floats(0.0, 0.999),
        pulls=st.integers(1, 10_000),
        f_value=st.floats(0.0, 20.0),
    )
    def test_solver_contract(self, mean, pulls, f_value):
        q = _kl_ucb_solve(mean, pulls, f_value, 0)
        assert mean <= q < 1.0
        # Feasible up to bisection tolerance.
        assert pulls * bernoulli_kl(mean, q) <= f_value + 1e-6 * max(1.0, pulls)

    @given(
        mean=st.floats(0.0, 0.999),
        pulls=st.integers(1, 10_000),
        f_lo=st.floats(0.0, 10.0),
        f_extra=st.floats(0.0, 10.0),
    )
    def test_solver_monotone_in_budget(self, mean, pulls, f_lo, f_extra):
        lo = _kl_ucb_solve(mean, pulls, f_lo, 0)
        hi = _kl_ucb_solve(mean, pulls, f_lo + f_extra, 0)
        assert hi >= lo - KL_BISECTION_TOL

    @given(mean=st.floats(0.001, 0.998), q_frac=st.floats(0.001, 0.999))
    def test_hoisted_divergence_matches_plain_form(self, mean, q_frac):
        # The kernels evaluate d(mean, q) with the mean-entropy term hoisted
        # out of the bisection loop; both forms must agree to 1e-9.
        q = mean + (1.0 - mean) * q_frac
        omu = 1.0 - mean
        c = mean * math.log(mean) + omu * math.log(omu)
        hoisted = c - mean * math.log(q) - omu * math.log(1.0 - q)
        assert hoisted == pytest.approx(bernoulli_kl(mean, q), abs=1e-9)


class TestMOSSIndex:
    def test_frozen_value(self):
        idx = moss_index(ArmStats(1, 0.3), horizon=5000, num_arms=1)
        assert idx == pytest.approx(3.2184230658724306, rel=1e-12)

    def test_bonus_vanishes_after_fair_share(self):
        # n >= T/K makes log(T/(K n)) <= 0, clamped to zero.
        assert moss_index(ArmStats(100, 30.0), horizon=1000, num_arms=10) == 0.3
        assert moss_index(ArmStats(500, 150.0), horizon=1000, num_arms=10) == 0.3

    def test_validation(self):
        with pytest.raises(ValueError):
            moss_index(ArmStats(0, 0.0), horizon=100, num_arms=5)
        with pytest.raises(ValueError):
            moss_index(ArmStats(1, 0.5), horizon=3, num_arms=5)


class TestUCBIndex:
    def test_frozen_value(self):
        idx = ucb_index(ArmStats(4, 2.0), t=100.0)
        assert idx == pytest.approx(1.5729830131446736, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            ucb_index(ArmStats(0, 0.0), t=10.0)
        with pytest.raises(ValueError):
            ucb_index(ArmStats(1, 0.5), t=0.5)

    @given(
        pulls=st.integers(1, 100_000),
        reward_frac=st.floats(0.0, 1.0),
        t=st.floats(1.0, 1e7),
    )
    def test_hoisted_evaluation_matches_plain_form(self, pulls, reward_frac, t):
        # UCBPolicy computes mean + sqrt(log t) * cached 1/sqrt(n).
        stats = ArmStats(pulls, pulls * reward_frac)
        mean = stats.reward_sum / stats.pulls
        hoisted = mean + math.sqrt(math.log(t)) * (1.0 / math.sqrt(pulls))
        assert hoisted == pytest.approx(ucb_index(stats, t), abs=1e-9)


class TestArmStats:
    def test_empirical_mean(self):
        assert ArmStats(4, 3.0).empirical_mean == 0.75
        with pytest.raises(ValueError):
            ArmStats(0, 0.0).empirical_mean


def play(policy, arm_rewards, rounds, generator=None):
    """Run select/update cycles feeding each arm a fixed reward."""
    g = generator if generator is not None else rng(17)
    picks = []
    for _ in range(rounds):
        arm = policy.select_arm(g)
        picks.append(arm)
        policy.update(arm, arm_rewards[arm], g)
    return picks


class TestIndexPolicyBehaviour:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda k: KLUCBPolicy(k, gamma=3.0),
            lambda k: MOSSPolicy(k, horizon=100),
            lambda k: UCBPolicy(k),
        ],
    )
    def test_plays_every_arm_once_in_id_order(self, factory):
        policy = factory(6)
        picks = play(policy, [0.9, 0.1, 0.5, 0.2, 0.7, 0.3], rounds=6)
        assert picks == [0, 1, 2, 3, 4, 5]
        assert policy.pulls == [1] * 6

    def test_ties_break_toward_lowest_arm_id(self):
        policy = UCBPolicy(3)
        play(policy, [0.4, 0.4, 0.4], rounds=3)
        assert policy.select_arm() == 0

    def test_exploits_a_clear_winner(self):
        policy = KLUCBPolicy(4)
        picks = play(policy, [0.05, 0.9, 0.1, 0.05], rounds=120)
        assert picks[-1] == 1
        assert policy.pulls[1] > 80

    def test_moss_cache_is_bit_identical_to_recomputation(self):
        policy = MOSSPolicy(5, horizon=200)
        play(policy, [0.3, 0.8, 0.1, 0.6, 0.4], rounds=60)
        for k in range(5):
            assert policy._bonus[k] == _moss_bonus(policy.pulls[k], 200, 5)

    def test_update_validation(self):
        policy = UCBPolicy(2)
        with pytest.raises(ValueError):
            policy.update(2, 0.5)
        with pytest.raises(ValueError):
            policy.update(0, 1.5)
        with pytest.raises(ValueError):
            policy.update(0, -0.1)

    def test_moss_needs_horizon_at_least_num_arms(self):
        with pytest.raises(ConfigurationError):
            MOSSPolicy(10, horizon=5)


class TestThompsonPolicy:
    def test_selection_replays_beta_draws_in_arm_order(self):
        policy = ThompsonPolicy(4)
        policy.alpha = [2.0, 1.0, 5.0, 1.0]
        policy.beta = [1.0, 3.0, 1.0, 1.0]
        got = policy.select_arm(rng(42))
        mirror = rng(42)
        draws = [mirror.beta(a, b) for a, b in zip(policy.alpha, policy.beta)]
        assert got == int(np.argmax(draws))

    def test_binarized_update_is_exact_at_the_endpoints(self):
        policy = ThompsonPolicy(1)
        for _ in range(10):
            policy.update(0, 1.0, rng(1))
        assert policy.alpha[0] == 11.0 and policy.beta[0] == 1.0
        for _ in range(10):
            policy.update(0, 0.0, rng(1))
        assert policy.alpha[0] == 11.0 and policy.beta[0] == 11.0

    def test_fractional_reward_consumes_one_uniform(self):
        policy = ThompsonPolicy(1)
        g = rng(7)
        mirror = rng(7)
        policy.update(0, 0.4, g)
        expect_alpha = mirror.random() < 0.4
        assert policy.alpha[0] == (2.0 if expect_alpha else 1.0)
        # Streams stayed in lockstep.
        assert g.random() == mirror.random()


class TestEpsilonGreedyPolicy:
    def test_pure_exploration_replays_the_uniform_stream(self):
        policy = EpsilonGreedyPolicy(7, epsilon=1.0)
        g, mirror = rng(13), rng(13)
        picks = play(policy, [0.5] * 7, rounds=40, generator=g)
        expected = []
        for _ in range(40):
            mirror.random()  # the coin
            expected.append(int(mirror.random() * 7))
        assert picks == expected

    def test_greedy_exploits_empirical_means(self):
        policy = EpsilonGreedyPolicy(3, epsilon=0.0)
        policy.update(1, 0.9)
        policy.update(2, 0.4)
        assert policy.select_arm(rng(0)) == 1

    def test_greedy_treats_unplayed_means_as_zero(self):
        policy = EpsilonGreedyPolicy(3, epsilon=0.0)
        policy.update(1, 0.0)  # played, mean 0, tied with unplayed arms
        assert policy.select_arm(rng(0)) == 0

    def test_ucb_exploit_prefers_unplayed_arms(self):
        policy = EpsilonGreedyPolicy(3, epsilon=0.0, exploit_rule="ucb_index")
        assert policy.select_arm(rng(0)) == 0
        policy.update(0, 0.9)
        assert policy.select_arm(rng(0)) == 1

    def test_ucb_exploit_matches_the_hoisted_index(self):
        policy = EpsilonGreedyPolicy(3, epsilon=0.0, exploit_rule="ucb_index")
        play(policy, [0.2, 0.8, 0.5], rounds=30)
        scale = math.sqrt(math.log(policy.t + 1.0))
        indices = [
            policy.mean[k] + scale / math.sqrt(policy.pulls[k]) for k in range(3)
        ]
        assert policy.select_arm(rng(0)) == int(np.argmax(indices))

    def test_exploration_rate(self):
        policy = EpsilonGreedyPolicy(5, epsilon=0.25)
        picks = play(policy, [0.0, 0.0, 0.0, 0.9, 0.0], rounds=4000, generator=rng(3))
        explored = sum(1 for p in picks if p != 3)
        # Roughly eps * (K-1)/K of rounds leave the greedy arm.
        assert 600 < explored < 1000


class TestNullPolicy:
    def test_always_plays_arm_zero(self):
        policy = NullPolicy(4)
        assert [policy.select_arm() for _ in range(5)] == [0] * 5


class TestPolicyConfig:
    def test_defaults_and_label(self):
        cfg = PolicyConfig(kind="thompson")
        assert cfg.resolved_label == "thompson"
        assert PolicyConfig(kind="ucb", label="ucb_b").resolved_label == "ucb_b"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "softmax"},
            {"kind": "ucb", "gamma": -1.0},
            {"kind": "epsilon_greedy", "epsilon": 1.5},
            {"kind": "kl_ucb", "divergence": "gaussian"},
            {"kind": "epsilon_greedy", "eg_exploit_rule": "greedy"},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            PolicyConfig(**kwargs)

    def test_make_policy_dispatch(self):
        assert isinstance(make_policy(PolicyConfig(kind="kl_ucb"), 4), KLUCBPolicy)
        assert isinstance(
            make_policy(PolicyConfig(kind="moss", horizon=50), 4), MOSSPolicy
        )
        assert isinstance(make_policy(PolicyConfig(kind="ucb"), 4), UCBPolicy)
        assert isinstance(make_policy(PolicyConfig(kind="thompson"), 4), ThompsonPolicy)
        eg = make_policy(
            PolicyConfig(kind="epsilon_greedy", epsilon=0.2, eg_exploit_rule="ucb_index"),
            4,
        )
        assert isinstance(eg, EpsilonGreedyPolicy)
        assert eg.epsilon == 0.2 and eg.exploit_code == 1

    def test_make_policy_needs_num_arms(self):
        with pytest.raises(ConfigurationError):
            make_policy(PolicyConfig(kind="ucb"))

    def test_make_policy_moss_needs_horizon(self):
        with pytest.raises(ConfigurationError):
            make_policy(PolicyConfig(kind="moss"), 4)


class TestKernelCodes:
    def test_codes_follow_kind_order(self):
        assert POLICY_KINDS == ("kl_ucb", "moss", "ucb", "thompson", "epsilon_greedy")
        for i, kind in enumerate(POLICY_KINDS):
            assert KERNEL_POLICY_CODES[kind] == i
        assert KERNEL_POLICY_CODES["null"] == 5
        assert DIVERGENCES == ("bernoulli", "exponential")
        assert EG_EXPLOIT_RULES == ("empirical_mean", "ucb_index")
