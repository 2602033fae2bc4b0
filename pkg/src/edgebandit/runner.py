"""Experiment orchestration.

An experiment plays every configured policy against the same stream of
environments: episode e draws its valuations (or reward uniforms) from
a stream keyed by (master_seed, "environment", e), independent of how
many policies run, while each policy's own randomness comes from
(master_seed, policy kind, e). Seeds go through named counter-based
streams, so adding a policy or raising the episode count never perturbs
existing draws, and results are independent of the parallelism degree:
episodes are reduced in a fixed order whatever the thread interleaving.

Episode traces are summarized (checkpoint statistics, selection counts,
decision time) inside each episode job and then aggregated across
episodes; use :func:`run_episode` directly when the full trace matters.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _accel
from .market import (
    CapacityLedger,
    ConfigurationError,
    PriceLevels,
    PriceVector,
    ProductGrid,
    ValuationModel,
    build_arm_set,
    sample_valuations,
)
from .oracle import ArmMeanTable, build_mean_table
from .policies import (
    DIVERGENCES,
    EG_EXPLOIT_RULES,
    KERNEL_POLICY_CODES,
    PolicyConfig,
)

ENVIRONMENT_STREAM = "environment"
ARM_STREAM = "arms"


def _stream_tag(name: str) -> int:
    """Stable 64-bit tag for a named stream, independent of session or platform."""
    return int.from_bytes(
        hashlib.blake2s(name.encode("utf-8"), digest_size=8).digest(), "little"
    )


def stream_generator(
    master_seed: int, stream: str, episode_index: int
) -> np.random.Generator:
    """Counter-based generator for one (seed, stream, episode) cell."""
    seq = np.random.SeedSequence((master_seed, _stream_tag(stream), episode_index))
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class MarketEnvironment:
    """Posted-price market instance: catalog, arm scheme and buyer model."""

    grid: ProductGrid
    levels: PriceLevels
    num_arms: int
    valuation: ValuationModel
    arm_scheme: str = "uniform_ladder"
    arm_seed: int | None = None
    capacity: int | Sequence[int] | None = None

    mode = "market"

    def resolved_arm_seed(self, master_seed: int) -> int:
        if self.arm_seed is not None:
            return self.arm_seed
        # Derive from the master seed so distinct experiments get distinct
        # grids by default while staying reproducible from the manifest.
        return int(
            np.random.SeedSequence(
                (master_seed, _stream_tag(ARM_STREAM))
            ).generate_state(1, np.uint64)[0]
        )

    def build_arms(self, master_seed: int) -> list[PriceVector]:
        return build_arm_set(
            self.grid,
            self.levels,
            self.num_arms,
            scheme=self.arm_scheme,
            seed=self.resolved_arm_seed(master_seed),
        )

    def capacity_array(self) -> np.ndarray | None:
        if self.capacity is None:
            return None
        ledger = CapacityLedger.limited(self.capacity, self.grid.num_products)
        return ledger.remaining


@dataclass
class BernoulliArmsEnvironment:
    """Synthetic instance: arm k pays 1 with its fixed rate, else 0.

    All arms share the round's environment uniform, so policies facing
    the same episode see coupled rewards. Used by calibration studies
    and the timing benchmark, where exact per-arm means matter.
    """

    means: Sequence[float]

    mode = "bernoulli_arms"

    def __post_init__(self) -> None:
        arr = np.asarray(self.means, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ConfigurationError("means must be a non-empty 1-d sequence")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ConfigurationError("Bernoulli arm means must lie in [0, 1]")
        self.means = arr

    @property
    def num_arms(self) -> int:
        return int(self.means.size)


Environment = Union[MarketEnvironment, BernoulliArmsEnvironment]


def geometric_checkpoints(horizon: int) -> np.ndarray:
    """Powers of two up to the horizon, plus the horizon itself."""
    if horizon < 1:
        raise ConfigurationError("horizon must be positive")
    points = []
    c = 1
    while c < horizon:
        points.append(c)
        c *= 2
    points.append(horizon)
    return np.asarray(points, dtype=np.int64)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce an experiment bit for bit."""

    environment: Environment
    policies: list[PolicyConfig]
    horizon: int
    episodes: int
    master_seed: int
    checkpoints: Sequence[int] | str = "geometric"

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigurationError("horizon must be a positive integer")
        if self.episodes < 1:
            raise ConfigurationError("episodes must be a positive integer")
        if self.master_seed < 0:
            raise ConfigurationError("master seed must be non-negative")
        if not self.policies:
            raise ConfigurationError("at least one policy is required")
        num_arms = self.environment.num_arms
        if self.horizon < num_arms:
            raise ConfigurationError(
                f"horizon ({self.horizon}) must be at least the number of arms "
                f"({num_arms}) so every arm can be played once"
            )
        labels = [p.resolved_label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(
                "policy labels must be unique; give duplicated kinds explicit labels"
            )
        self.resolved_checkpoints()

    @property
    def num_arms(self) -> int:
        return self.environment.num_arms

    def resolved_checkpoints(self) -> np.ndarray:
        if isinstance(self.checkpoints, str):
            if self.checkpoints != "geometric":
                raise ConfigurationError(
                    f"unknown checkpoint spec {self.checkpoints!r}"
                )
            return geometric_checkpoints(self.horizon)
        cps = np.asarray(list(self.checkpoints), dtype=np.int64)
        if cps.size == 0:
            raise ConfigurationError("checkpoints must be non-empty")
        if cps[0] < 1 or np.any(np.diff(cps) <= 0) or cps[-1] > self.horizon:
            raise ConfigurationError(
                "checkpoints must be strictly increasing in [1, horizon]"
            )
        return cps


@dataclass
class EpisodeTrace:
    """Raw outcome of one (policy, episode) run."""

    policy_label: str
    episode_index: int
    selections: np.ndarray
    rewards: np.ndarray
    stop_round: int
    decision_seconds: float
    pulls: np.ndarray
    reward_sum: np.ndarray
    round_times: np.ndarray | None = None
    capacity_remaining: np.ndarray | None = None


def _policy_code(config: PolicyConfig) -> int:
    return KERNEL_POLICY_CODES[config.kind]


def _run_kernel(
    kernel,
    policy: PolicyConfig,
    horizon: int,
    master_seed: int,
    episode_index: int,
    env_payload: dict,
    collect_round_times: bool,
) -> dict:
    policy_rng = stream_generator(master_seed, policy.kind, episode_index)
    common = dict(
        policy_code=_policy_code(policy),
        horizon=horizon,
        gamma=policy.gamma,
        epsilon=policy.epsilon,
        divergence_code=DIVERGENCES.index(policy.divergence),
        eg_exploit_code=EG_EXPLOIT_RULES.index(policy.eg_exploit_rule),
        policy_rng=policy_rng,
        collect_round_times=collect_round_times,
    )
    if "valuations" in env_payload:
        return kernel.run_market_episode(
            prices=env_payload["prices"],
            valuations=env_payload["valuations"],
            capacity=env_payload["capacity"],
            **common,
        )
    return kernel.run_bernoulli_episode(
        arm_means=env_payload["arm_means"],
        env_uniforms=env_payload["env_uniforms"],
        **common,
    )


def _environment_payload(
    config: ExperimentConfig, episode_index: int, prices: np.ndarray | None
) -> dict:
    env = config.environment
    env_rng = stream_generator(config.master_seed, ENVIRONMENT_STREAM, episode_index)
    if isinstance(env, MarketEnvironment):
        valuations = sample_valuations(
            env.valuation, env.grid, env_rng, rounds=config.horizon
        )
        return {
            "prices": prices,
            "valuations": valuations,
            "capacity": env.capacity_array(),
        }
    return {
        "arm_means": env.means,
        "env_uniforms": env_rng.random(config.horizon),
    }


def run_episode(
    config: ExperimentConfig,
    policy: PolicyConfig,
    episode_index: int,
    backend: str | None = None,
    collect_round_times: bool = False,
    arms: Sequence[PriceVector] | None = None,
) -> EpisodeTrace:
    """Play a single (policy, episode) pair and keep the full trace."""
    if not (0 <= episode_index < config.episodes):
        raise ValueError("episode_index out of range")
    kernel = _accel.get_backend(backend)
    prices = None
    if isinstance(config.environment, MarketEnvironment):
        if arms is None:
            arms = config.environment.build_arms(config.master_seed)
        prices = np.asarray([a.prices for a in arms], dtype=np.float64)
    payload = _environment_payload(config, episode_index, prices)
    res = _run_kernel(
        kernel,
        policy,
        config.horizon,
        config.master_seed,
        episode_index,
        payload,
        collect_round_times,
    )
    return EpisodeTrace(
        policy_label=policy.resolved_label, episode_index=episode_index, **res
    )


@dataclass
class PolicyMetrics:
    """Aggregated results for one policy across all episodes."""

    label: str
    kind: str
    mean_cum_reward: np.ndarray
    se_cum_reward: np.ndarray
    mean_pseudo_regret: np.ndarray
    se_pseudo_regret: np.ndarray
    mean_selection_counts: np.ndarray
    final_cum_reward: np.ndarray
    final_pseudo_regret: np.ndarray
    total_decision_seconds: float
    median_round_decision_seconds: float
    mean_stop_round: float
    episodes_stopped_early: int


@dataclass
class ExperimentMetrics:
    """Everything the CLI serializes: oracle table plus per-policy statistics.

    All statistical fields are byte-for-byte reproducible for a given
    (config, master seed), whatever the parallelism; the two wall-clock
    decision-time fields necessarily vary run to run and are excluded
    from that guarantee.
    """

    config: ExperimentConfig
    checkpoints: np.ndarray
    table: ArmMeanTable
    policies: dict[str, PolicyMetrics]
    arms: list[PriceVector] | None = None


def _summarize_episode(
    res: dict, table: ArmMeanTable, checkpoints: np.ndarray, num_arms: int
) -> dict:
    sel = res["selections"]
    stop = res["stop_round"]
    cum_reward = np.cumsum(res["rewards"])
    cum_regret = np.cumsum(table.gaps[sel])
    idx = np.minimum(checkpoints, stop) - 1
    rt = res["round_times"]
    return {
        "reward_at": cum_reward[idx],
        "regret_at": cum_regret[idx],
        "counts": np.bincount(sel, minlength=num_arms).astype(np.int64),
        "decision_seconds": res["decision_seconds"],
        "stop_round": stop,
        "median_round_seconds": float(np.median(rt)) if rt is not None else None,
    }


def run_experiment(
    config: ExperimentConfig,
    parallelism: int = 1,
    backend: str | None = None,
) -> ExperimentMetrics:
    """Run every configured policy over paired episodes and aggregate.

    ``parallelism`` threads split the episodes; the compiled kernel
    releases the GIL so threads genuinely overlap. Results are reduced
    in (policy, episode) order regardless.
    """
    if parallelism < 1:
        raise ConfigurationError("parallelism must be a positive integer")
    kernel = _accel.get_backend(backend)
    env = config.environment
    arms: list[PriceVector] | None = None
    if isinstance(env, MarketEnvironment):
        arms = env.build_arms(config.master_seed)
        prices = np.asarray([a.prices for a in arms], dtype=np.float64)
        table = build_mean_table(arms, env.valuation)
    else:
        prices = None
        table = ArmMeanTable.from_means(env.means)
    checkpoints = config.resolved_checkpoints()
    num_arms = config.num_arms

    def episode_job(episode_index: int) -> dict[str, dict]:
        payload = _environment_payload(config, episode_index, prices)
        out: dict[str, dict] = {}
        for policy in config.policies:
            res = _run_kernel(
                kernel,
                policy,
                config.horizon,
                config.master_seed,
                episode_index,
                payload,
                collect_round_times=(episode_index == 0),
            )
            out[policy.resolved_label] = _summarize_episode(
                res, table, checkpoints, num_arms
            )
        return out

    if parallelism == 1:
        episode_results = [episode_job(e) for e in range(config.episodes)]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            episode_results = list(pool.map(episode_job, range(config.episodes)))

    policies: dict[str, PolicyMetrics] = {}
    E = config.episodes
    for policy in config.policies:
        label = policy.resolved_label
        rows = [episode_results[e][label] for e in range(E)]
        reward_at = np.stack([r["reward_at"] for r in rows])
        regret_at = np.stack([r["regret_at"] for r in rows])
        counts = np.stack([r["counts"] for r in rows]).astype(np.float64)
        stops = np.asarray([r["stop_round"] for r in rows], dtype=np.int64)
        se_div = np.sqrt(float(E))
        se_reward = (
            reward_at.std(axis=0, ddof=1) / se_div if E > 1 else np.zeros(checkpoints.size)
        )
        se_regret = (
            regret_at.std(axis=0, ddof=1) / se_div if E > 1 else np.zeros(checkpoints.size)
        )
        policies[label] = PolicyMetrics(
            label=label,
            kind=policy.kind,
            mean_cum_reward=reward_at.mean(axis=0),
            se_cum_reward=se_reward,
            mean_pseudo_regret=regret_at.mean(axis=0),
            se_pseudo_regret=se_regret,
            mean_selection_counts=counts.mean(axis=0),
            final_cum_reward=reward_at[:, -1].copy(),
            final_pseudo_regret=regret_at[:, -1].copy(),
            total_decision_seconds=float(
                sum(r["decision_seconds"] for r in rows)
            ),
            median_round_decision_seconds=float(rows[0]["median_round_seconds"]),
            mean_stop_round=float(stops.mean()),
            episodes_stopped_early=int(np.sum(stops < config.horizon)),
        )

    return ExperimentMetrics(
        config=config,
        checkpoints=checkpoints,
        table=table,
        policies=policies,
        arms=arms,
    )
