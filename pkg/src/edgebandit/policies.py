"""Arm-selection policies for posted-price bandits.

Five interchangeable policies over a fixed arm set: a bisection-based
KL upper-confidence rule (Bernoulli or exponential divergence), the
horizon-aware minimax index, the classic square-root-bonus index,
Thompson sampling with Beta posteriors, and epsilon-greedy. The three
index policies play every arm once (lowest arm id first) before scoring;
Thompson and epsilon-greedy randomize from the first round.

The ``Policy`` classes double as the pure-Python episode kernel, so
their arithmetic mirrors the compiled kernel operation for operation:
scalar libm calls in a fixed order, cached per-arm quantities updated
only when the arm is pulled, and ties broken toward the lowest arm id
by strict ``>`` comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .market import ConfigurationError

POLICY_KINDS = ("kl_ucb", "moss", "ucb", "thompson", "epsilon_greedy")
DIVERGENCES = ("bernoulli", "exponential")
EG_EXPLOIT_RULES = ("empirical_mean", "ucb_index")

# Integer codes shared by the compiled and pure-Python episode kernels.
# "null" is an internal diagnostic (constant arm, no index work) used to
# measure loop overhead; it is not a configurable policy kind.
KERNEL_POLICY_CODES = {kind: i for i, kind in enumerate(POLICY_KINDS)}
KERNEL_POLICY_CODES["null"] = 5

KL_BISECTION_TOL = 1e-9
KL_BISECTION_MAX_ITERS = 100


def bernoulli_kl(u: float, v: float) -> float:
    """KL divergence between Bernoulli(u) and Bernoulli(v).

    Uses the conventions 0*log(0) = 0 and d(u, v) = +inf when v puts no
    mass where u does (v = 0 with u > 0, or v = 1 with u < 1).
    """
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise ValueError(f"bernoulli_kl needs u, v in [0, 1], got ({u!r}, {v!r})")
    d = 0.0
    if u > 0.0:
        if v == 0.0:
            return math.inf
        d += u * math.log(u / v)
    if u < 1.0:
        if v == 1.0:
            return math.inf
        d += (1.0 - u) * math.log((1.0 - u) / (1.0 - v))
    return d


def exponential_kl(u: float, v: float) -> float:
    """Divergence between exponential reward models with means u and v.

    Non-negative, zero iff u == v, increasing and strictly convex in v
    on [u, inf). Both means must be positive.
    """
    if u <= 0.0 or v <= 0.0:
        raise ValueError(f"exponential_kl needs positive means, got ({u!r}, {v!r})")
    r = v / u
    return r - 1.0 - math.log(r)


def exploration_value(t: float, gamma: float = 0.0) -> float:
    """Confidence budget f(t) = log t + gamma * log log t (second term floored at 0)."""
    if t < 1.0:
        raise ValueError("t must be at least 1")
    lt = math.log(t)
    if gamma == 0.0 or lt <= 0.0:
        return lt
    llt = math.log(lt)
    if llt < 0.0:
        llt = 0.0
    return lt + gamma * llt


def _kl_ucb_solve(mean: float, pulls: int, f_value: float, divergence_code: int) -> float:
    """Largest q in [mean, 1] with pulls * d(mean, q) <= f_value, by bisection.

    Mirrors the compiled kernel exactly (same constants, same branch
    order). divergence_code: 0 = Bernoulli, 1 = exponential. The
    exponential divergence is undefined at mean 0, where the index
    degenerates to the mean itself.
    """
    if mean >= 1.0:
        return 1.0
    thr = f_value / pulls
    if divergence_code == 0:
        omu = 1.0 - mean
        c = 0.0
        if mean > 0.0:
            c += mean * math.log(mean)
        c += omu * math.log(omu)
    else:
        if mean <= 0.0:
            return mean
        r = 1.0 / mean
        if r - 1.0 - math.log(r) <= thr:
            return 1.0
    lo = mean
    hi = 1.0
    for _ in range(KL_BISECTION_MAX_ITERS):
        if hi - lo <= KL_BISECTION_TOL:
            break
        mid = (lo + hi) * 0.5
        if divergence_code == 0:
            d = c - mean * math.log(mid) - omu * math.log(1.0 - mid)
        else:
            r = mid / mean
            d = r - 1.0 - math.log(r)
        if d <= thr:
            lo = mid
        else:
            hi = mid
    return lo


def _moss_bonus(pulls: int, horizon: int, num_arms: int) -> float:
    arg = horizon / (num_arms * pulls)
    lg = math.log(arg)
    if lg < 0.0:
        lg = 0.0
    return math.sqrt(lg / pulls)


@dataclass
class ArmStats:
    """Pull count and reward total for one arm."""

    pulls: int = 0
    reward_sum: float = 0.0

    @property
    def empirical_mean(self) -> float:
        if self.pulls < 1:
            raise ValueError("empirical mean undefined before the first pull")
        return self.reward_sum / self.pulls


def kl_ucb_index(
    stats: ArmStats, t: float, gamma: float = 0.0, divergence: str = "bernoulli"
) -> float:
    """Most optimistic mean consistent with the arm's history at budget f(t).

    Solves max{q in [mean, 1] : pulls * d(mean, q) <= f(t)} by bisection
    to absolute tolerance 1e-9. Never falls below the empirical mean;
    equals 1.0 exactly when the constraint is still slack at q = 1.
    """
    if stats.pulls < 1:
        raise ValueError("arm must be played before it can be indexed")
    if divergence not in DIVERGENCES:
        raise ValueError(f"unknown divergence {divergence!r}")
    mean = stats.reward_sum / stats.pulls
    if divergence == "bernoulli" and not (0.0 <= mean <= 1.0):
        raise ValueError(f"empirical mean outside [0, 1]: {mean!r}")
    return _kl_ucb_solve(
        mean, stats.pulls, exploration_value(t, gamma), DIVERGENCES.index(divergence)
    )


def moss_index(stats: ArmStats, horizon: int, num_arms: int) -> float:
    """Empirical mean plus sqrt(max(log(T / (K n)), 0) / n).

    The bonus is exactly zero once the arm has at least T/K pulls.
    """
    if stats.pulls < 1:
        raise ValueError("arm must be played before it can be indexed")
    if num_arms < 1:
        raise ValueError("num_arms must be positive")
    if horizon < num_arms:
        raise ValueError("horizon must be at least num_arms")
    return stats.reward_sum / stats.pulls + _moss_bonus(stats.pulls, horizon, num_arms)


def ucb_index(stats: ArmStats, t: float) -> float:
    """Empirical mean plus sqrt(log t / n)."""
    if stats.pulls < 1:
        raise ValueError("arm must be played before it can be indexed")
    if t < 1.0:
        raise ValueError("t must be at least 1")
    return stats.reward_sum / stats.pulls + math.sqrt(math.log(t) / stats.pulls)


@dataclass
class PolicyConfig:
    """Declarative description of one policy instance.

    ``label`` names the policy in outputs (defaults to ``kind``); the
    runner fills ``num_arms``/``horizon`` from the experiment when left
    unset. ``gamma`` tunes the KL confidence budget, ``epsilon`` the
    exploration rate, ``eg_exploit_rule`` how epsilon-greedy exploits.
    """

    kind: str
    label: str | None = None
    gamma: float = 0.0
    epsilon: float = 0.1
    divergence: str = "bernoulli"
    eg_exploit_rule: str = "empirical_mean"
    num_arms: int | None = None
    horizon: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ConfigurationError(
                f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}"
            )
        if self.gamma < 0.0:
            raise ConfigurationError("gamma must be non-negative")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ConfigurationError("epsilon must lie in [0, 1]")
        if self.divergence not in DIVERGENCES:
            raise ConfigurationError(
                f"unknown divergence {self.divergence!r}; expected one of {DIVERGENCES}"
            )
        if self.eg_exploit_rule not in EG_EXPLOIT_RULES:
            raise ConfigurationError(
                f"unknown exploit rule {self.eg_exploit_rule!r}; "
                f"expected one of {EG_EXPLOIT_RULES}"
            )

    @property
    def resolved_label(self) -> str:
        return self.label if self.label is not None else self.kind


class Policy:
    """Sequential arm-selection state machine; one instance per episode.

    Subclasses implement ``select_arm``; ``update`` maintains the shared
    statistics (pulls, reward sums, cached means) and dispatches to
    ``_after_update`` for per-policy caches. Rewards must lie in [0, 1].
    """

    kind = ""

    def __init__(self, num_arms: int):
        if num_arms < 1:
            raise ConfigurationError("num_arms must be positive")
        self.num_arms = num_arms
        self.t = 0
        self.pulls = [0] * num_arms
        self.reward_sum = [0.0] * num_arms
        self.mean = [0.0] * num_arms
        self._unplayed = num_arms

    def select_arm(self, rng) -> int:
        raise NotImplementedError

    def update(self, arm_id: int, reward: float, rng=None) -> None:
        if not (0 <= arm_id < self.num_arms):
            raise ValueError(f"arm_id out of range: {arm_id}")
        if not (0.0 <= reward <= 1.0):
            raise ValueError(f"reward outside [0, 1]: {reward!r}")
        if self.pulls[arm_id] == 0:
            self._unplayed -= 1
        self.pulls[arm_id] += 1
        self.reward_sum[arm_id] += reward
        self.mean[arm_id] = self.reward_sum[arm_id] / self.pulls[arm_id]
        self.t += 1
        self._after_update(arm_id, reward, rng)

    def _after_update(self, arm_id: int, reward: float, rng) -> None:
        pass

    def arm_stats(self, arm_id: int) -> ArmStats:
        return ArmStats(self.pulls[arm_id], self.reward_sum[arm_id])

    def _first_unplayed(self) -> int:
        for k in range(self.num_arms):
            if self.pulls[k] == 0:
                return k
        raise AssertionError("no unplayed arm")


class _IndexPolicy(Policy):
    """Shared forced-exploration preamble for the deterministic index policies."""

    def select_arm(self, rng=None) -> int:
        if self._unplayed > 0:
            return self._first_unplayed()
        return self._best_index_arm()

    def _best_index_arm(self) -> int:
        raise NotImplementedError


class KLUCBPolicy(_IndexPolicy):
    kind = "kl_ucb"

    def __init__(self, num_arms: int, gamma: float = 0.0, divergence: str = "bernoulli"):
        super().__init__(num_arms)
        self.gamma = gamma
        self.divergence_code = DIVERGENCES.index(divergence)

    def _best_index_arm(self) -> int:
        f = exploration_value(self.t + 1.0, self.gamma)
        best = -1.0
        best_k = 0
        for k in range(self.num_arms):
            idx = _kl_ucb_solve(self.mean[k], self.pulls[k], f, self.divergence_code)
            if idx > best:
                best = idx
                best_k = k
        return best_k


class MOSSPolicy(_IndexPolicy):
    kind = "moss"

    def __init__(self, num_arms: int, horizon: int):
        super().__init__(num_arms)
        if horizon < num_arms:
            raise ConfigurationError("horizon must be at least num_arms")
        self.horizon = horizon
        self._bonus = [0.0] * num_arms

    def _after_update(self, arm_id: int, reward: float, rng) -> None:
        self._bonus[arm_id] = _moss_bonus(self.pulls[arm_id], self.horizon, self.num_arms)

    def _best_index_arm(self) -> int:
        best = -1.0
        best_k = 0
        for k in range(self.num_arms):
            idx = self.mean[k] + self._bonus[k]
            if idx > best:
                best = idx
                best_k = k
        return best_k


class UCBPolicy(_IndexPolicy):
    kind = "ucb"

    def __init__(self, num_arms: int):
        super().__init__(num_arms)
        self._inv_sqrt = [0.0] * num_arms

    def _after_update(self, arm_id: int, reward: float, rng) -> None:
        self._inv_sqrt[arm_id] = 1.0 / math.sqrt(self.pulls[arm_id])

    def _best_index_arm(self) -> int:
        scale = math.sqrt(math.log(self.t + 1.0))
        best = -1.0
        best_k = 0
        for k in range(self.num_arms):
            idx = self.mean[k] + scale * self._inv_sqrt[k]
            if idx > best:
                best = idx
                best_k = k
        return best_k


class ThompsonPolicy(Policy):
    kind = "thompson"

    def __init__(self, num_arms: int):
        super().__init__(num_arms)
        self.alpha = [1.0] * num_arms
        self.beta = [1.0] * num_arms

    def select_arm(self, rng) -> int:
        best = -1.0
        best_k = 0
        for k in range(self.num_arms):
            x = rng.beta(self.alpha[k], self.beta[k])
            if x > best:
                best = x
                best_k = k
        return best_k

    def _after_update(self, arm_id: int, reward: float, rng) -> None:
        # Binarization keeps the Beta posterior conjugate for fractional rewards.
        if rng.random() < reward:
            self.alpha[arm_id] += 1.0
        else:
            self.beta[arm_id] += 1.0


class EpsilonGreedyPolicy(Policy):
    kind = "epsilon_greedy"

    def __init__(
        self,
        num_arms: int,
        epsilon: float = 0.1,
        exploit_rule: str = "empirical_mean",
    ):
        super().__init__(num_arms)
        self.epsilon = epsilon
        self.exploit_code = EG_EXPLOIT_RULES.index(exploit_rule)
        self._inv_sqrt = [0.0] * num_arms

    def select_arm(self, rng) -> int:
        if rng.random() < self.epsilon:
            return int(rng.random() * self.num_arms)
        best = -1.0
        best_k = 0
        if self.exploit_code == 1:
            scale = math.sqrt(math.log(self.t + 1.0))
            for k in range(self.num_arms):
                if self.pulls[k] == 0:
                    idx = math.inf
                else:
                    idx = self.mean[k] + scale * self._inv_sqrt[k]
                if idx > best:
                    best = idx
                    best_k = k
        else:
            # Unplayed arms carry their initialized mean of 0.0.
            for k in range(self.num_arms):
                if self.mean[k] > best:
                    best = self.mean[k]
                    best_k = k
        return best_k

    def _after_update(self, arm_id: int, reward: float, rng) -> None:
        if self.exploit_code == 1:
            self._inv_sqrt[arm_id] = 1.0 / math.sqrt(self.pulls[arm_id])


class NullPolicy(Policy):
    """Always plays arm 0; isolates loop overhead for timing diagnostics."""

    kind = "null"

    def select_arm(self, rng=None) -> int:
        return 0


def make_policy(config: PolicyConfig, num_arms: int | None = None) -> Policy:
    """Instantiate the policy described by ``config``.

    ``num_arms`` overrides the config's value; MOSS additionally needs
    ``config.horizon``.
    """
    k = num_arms if num_arms is not None else config.num_arms
    if k is None:
        raise ConfigurationError(f"policy {config.resolved_label!r} needs num_arms")
    if config.kind == "kl_ucb":
        return KLUCBPolicy(k, gamma=config.gamma, divergence=config.divergence)
    if config.kind == "moss":
        if config.horizon is None:
            raise ConfigurationError(
                f"policy {config.resolved_label!r} needs a known horizon"
            )
        return MOSSPolicy(k, horizon=config.horizon)
    if config.kind == "ucb":
        return UCBPolicy(k)
    if config.kind == "thompson":
        return ThompsonPolicy(k)
    if config.kind == "epsilon_greedy":
        return EpsilonGreedyPolicy(
            k, epsilon=config.epsilon, exploit_rule=config.eg_exploit_rule
        )
    raise ConfigurationError(f"unknown policy kind {config.kind!r}")
