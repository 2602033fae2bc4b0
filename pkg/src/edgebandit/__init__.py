"""Online posted-price simulation for heterogeneous edge resources.

A platform posts per-product prices to a stream of buyers and learns
which price vector earns the most, treating each candidate vector as a
bandit arm. The package provides the market model, five selection
policies, exact expected-reward and regret oracles, a paired-episode
experiment runner with a compiled kernel, and a CLI harness.
"""

from ._accel import active_backend_name, available_backends, get_backend
from .market import (
    ARM_SCHEMES,
    BernoulliValuation,
    CapacityLedger,
    ConfigurationError,
    Outcome,
    PriceLevels,
    PriceVector,
    ProductGrid,
    TruncatedExponentialValuation,
    TruncatedGaussianValuation,
    UniformValuation,
    ValuationModel,
    build_arm_set,
    buyer_utility,
    make_valuation_model,
    purchase,
    sample_valuations,
    settle,
)
from .oracle import (
    ArmMeanTable,
    RegretSeries,
    build_mean_table,
    expected_reward,
    pseudo_regret,
    theorem2_asymptote,
)
from .policies import (
    DIVERGENCES,
    EG_EXPLOIT_RULES,
    POLICY_KINDS,
    ArmStats,
    EpsilonGreedyPolicy,
    KLUCBPolicy,
    MOSSPolicy,
    Policy,
    PolicyConfig,
    ThompsonPolicy,
    UCBPolicy,
    bernoulli_kl,
    exponential_kl,
    exploration_value,
    kl_ucb_index,
    make_policy,
    moss_index,
    ucb_index,
)
from .runner import (
    BernoulliArmsEnvironment,
    EpisodeTrace,
    ExperimentConfig,
    ExperimentMetrics,
    MarketEnvironment,
    PolicyMetrics,
    geometric_checkpoints,
    run_episode,
    run_experiment,
    stream_generator,
)

__version__ = "0.1.0"

__all__ = [
    "ARM_SCHEMES",
    "ArmMeanTable",
    "ArmStats",
    "BernoulliArmsEnvironment",
    "BernoulliValuation",
    "CapacityLedger",
    "ConfigurationError",
    "DIVERGENCES",
    "EG_EXPLOIT_RULES",
    "EpisodeTrace",
    "EpsilonGreedyPolicy",
    "ExperimentConfig",
    "ExperimentMetrics",
    "KLUCBPolicy",
    "MOSSPolicy",
    "MarketEnvironment",
    "Outcome",
    "POLICY_KINDS",
    "Policy",
    "PolicyConfig",
    "PolicyMetrics",
    "PriceLevels",
    "PriceVector",
    "ProductGrid",
    "RegretSeries",
    "ThompsonPolicy",
    "TruncatedExponentialValuation",
    "TruncatedGaussianValuation",
    "UCBPolicy",
    "UniformValuation",
    "ValuationModel",
    "active_backend_name",
    "available_backends",
    "bernoulli_kl",
    "build_arm_set",
    "build_mean_table",
    "buyer_utility",
    "expected_reward",
    "exploration_value",
    "exponential_kl",
    "geometric_checkpoints",
    "get_backend",
    "kl_ucb_index",
    "make_policy",
    "make_valuation_model",
    "moss_index",
    "pseudo_regret",
    "purchase",
    "run_episode",
    "run_experiment",
    "sample_valuations",
    "settle",
    "stream_generator",
    "theorem2_asymptote",
    "ucb_index",
    "__version__",
]
