"""Pure-Python episode kernel.

Fallback used when the compiled extension is unavailable. Produces
bit-identical traces to the compiled kernel: the policy classes perform
the same scalar libm operations in the same order, random draws go
through the same generator methods, and the market arithmetic below
accumulates payments product by product exactly as the C loop does.

Decision time (the select and update calls, excluding environment
sampling) is measured per round with the monotonic clock.
"""

from __future__ import annotations

import time

import numpy as np

from . import policies as _pol


def _build_policy(
    policy_code: int,
    num_arms: int,
    horizon: int,
    gamma: float,
    epsilon: float,
    divergence_code: int,
    eg_exploit_code: int,
) -> _pol.Policy:
    if policy_code == 0:
        return _pol.KLUCBPolicy(
            num_arms, gamma=gamma, divergence=_pol.DIVERGENCES[divergence_code]
        )
    if policy_code == 1:
        return _pol.MOSSPolicy(num_arms, horizon=horizon)
    if policy_code == 2:
        return _pol.UCBPolicy(num_arms)
    if policy_code == 3:
        return _pol.ThompsonPolicy(num_arms)
    if policy_code == 4:
        return _pol.EpsilonGreedyPolicy(
            num_arms,
            epsilon=epsilon,
            exploit_rule=_pol.EG_EXPLOIT_RULES[eg_exploit_code],
        )
    if policy_code == 5:
        return _pol.NullPolicy(num_arms)
    raise ValueError(f"unknown policy code {policy_code}")


def _package(
    policy: _pol.Policy,
    selections: list[int],
    rewards: list[float],
    stop_round: int,
    decision_ns: int,
    round_ns: list[int] | None,
    capacity: list[int] | None,
) -> dict:
    return {
        "selections": np.asarray(selections, dtype=np.int32),
        "rewards": np.asarray(rewards, dtype=np.float64),
        "stop_round": stop_round,
        "decision_seconds": decision_ns * 1e-9,
        "pulls": np.asarray(policy.pulls, dtype=np.int64),
        "reward_sum": np.asarray(policy.reward_sum, dtype=np.float64),
        "round_times": (
            np.asarray(round_ns, dtype=np.float64) * 1e-9
            if round_ns is not None
            else None
        ),
        "capacity_remaining": (
            np.asarray(capacity, dtype=np.int64) if capacity is not None else None
        ),
    }


def run_market_episode(
    policy_code: int,
    prices: np.ndarray,
    valuations: np.ndarray,
    capacity: np.ndarray | None,
    horizon: int,
    gamma: float,
    epsilon: float,
    divergence_code: int,
    eg_exploit_code: int,
    policy_rng: np.random.Generator,
    collect_round_times: bool = False,
) -> dict:
    """Play one posted-price episode and return its trace and statistics."""
    prices = np.ascontiguousarray(prices, dtype=np.float64)
    valuations = np.ascontiguousarray(valuations, dtype=np.float64)
    num_arms, num_products = prices.shape
    if valuations.shape != (horizon, num_products):
        raise ValueError("valuations must have shape (horizon, num_products)")

    policy = _build_policy(
        policy_code, num_arms, horizon, gamma, epsilon, divergence_code, eg_exploit_code
    )
    price_rows = prices.tolist()
    value_rows = valuations.tolist()
    cap = None
    remaining_total = 0
    if capacity is not None:
        cap = [int(c) for c in capacity]
        if len(cap) != num_products:
            raise ValueError("capacity must have one entry per product")
        remaining_total = sum(cap)

    selections: list[int] = []
    rewards: list[float] = []
    round_ns: list[int] | None = [] if collect_round_times else None
    decision_ns = 0
    stop_round = horizon
    clock = time.perf_counter_ns

    for t in range(horizon):
        t0 = clock()
        arm = policy.select_arm(policy_rng)
        t1 = clock()

        raw = 0.0
        vrow = value_rows[t]
        prow = price_rows[arm]
        if cap is None:
            for j in range(num_products):
                if vrow[j] >= prow[j]:
                    raw += prow[j]
        else:
            for j in range(num_products):
                if vrow[j] >= prow[j]:
                    if cap[j] > 0:
                        cap[j] -= 1
                        remaining_total -= 1
                        raw += prow[j]
        reward = raw / num_products
        selections.append(arm)
        rewards.append(reward)

        t2 = clock()
        policy.update(arm, reward, policy_rng)
        t3 = clock()
        spent = (t1 - t0) + (t3 - t2)
        decision_ns += spent
        if round_ns is not None:
            round_ns.append(spent)
        if cap is not None and remaining_total == 0:
            stop_round = t + 1
            break

    return _package(policy, selections, rewards, stop_round, decision_ns, round_ns, cap)


def run_bernoulli_episode(
    policy_code: int,
    arm_means: np.ndarray,
    env_uniforms: np.ndarray,
    horizon: int,
    gamma: float,
    epsilon: float,
    divergence_code: int,
    eg_exploit_code: int,
    policy_rng: np.random.Generator,
    collect_round_times: bool = False,
) -> dict:
    """Play one episode against fixed per-arm Bernoulli reward rates.

    The round-t reward for arm k is 1 when the shared environment
    uniform u_t falls below the arm's rate, so different policies facing
    the same environment stream see coupled outcomes.
    """
    arm_means = np.ascontiguousarray(arm_means, dtype=np.float64)
    env_uniforms = np.ascontiguousarray(env_uniforms, dtype=np.float64)
    num_arms = arm_means.shape[0]
    if env_uniforms.shape != (horizon,):
        raise ValueError("env_uniforms must have shape (horizon,)")

    policy = _build_policy(
        policy_code, num_arms, horizon, gamma, epsilon, divergence_code, eg_exploit_code
    )
    means_list = arm_means.tolist()
    u_list = env_uniforms.tolist()

    selections: list[int] = []
    rewards: list[float] = []
    round_ns: list[int] | None = [] if collect_round_times else None
    decision_ns = 0
    clock = time.perf_counter_ns

    for t in range(horizon):
        t0 = clock()
        arm = policy.select_arm(policy_rng)
        t1 = clock()

        reward = 1.0 if u_list[t] < means_list[arm] else 0.0
        selections.append(arm)
        rewards.append(reward)

        t2 = clock()
        policy.update(arm, reward, policy_rng)
        t3 = clock()
        spent = (t1 - t0) + (t3 - t2)
        decision_ns += spent
        if round_ns is not None:
            round_ns.append(spent)

    return _package(policy, selections, rewards, horizon, decision_ns, round_ns, None)
