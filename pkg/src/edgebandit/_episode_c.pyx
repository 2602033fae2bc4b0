# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled episode kernel.

Plays whole episodes (select, environment, update, per-round timing)
without touching the interpreter, holding the policy generator's lock
and releasing the GIL. Bit-identical to the pure-Python kernel in
``_episode_py``: identical libm calls in identical order, and random
draws pulled from the same numpy BitGenerator primitives the Generator
methods use (one uniform per Thompson binarization, one beta variate
per arm per Thompson selection, and so on).

Keep the arithmetic in this file in lockstep with ``policies.py`` and
``_episode_py.py``; the cross-backend equivalence tests enforce it.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, log, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_beta, random_standard_uniform
from posix.time cimport CLOCK_MONOTONIC, clock_gettime, timespec

cdef double KL_TOL = 1e-9
cdef int KL_MAX_ITERS = 100


cdef struct KernelState:
    int kind
    int K
    long long t
    long long horizon
    double gamma
    double epsilon
    int divergence
    int eg_exploit
    int unplayed
    long long *pulls
    double *reward_sum
    double *mean
    double *moss_bonus
    double *inv_sqrt
    double *ts_alpha
    double *ts_beta
    bitgen_t *rng


cdef double _exploration_value(double t, double gamma) noexcept nogil:
    cdef double lt = log(t)
    cdef double llt
    if gamma == 0.0 or lt <= 0.0:
        return lt
    llt = log(lt)
    if llt < 0.0:
        llt = 0.0
    return lt + gamma * llt


cdef double _kl_ucb_solve(double mean, long long pulls, double f_value,
                          int divergence) noexcept nogil:
    cdef double thr, lo, hi, mid, d, c, omu, r
    cdef int it
    if mean >= 1.0:
        return 1.0
    thr = f_value / <double>pulls
    omu = 1.0 - mean
    c = 0.0
    if divergence == 0:
        if mean > 0.0:
            c += mean * log(mean)
        c += omu * log(omu)
    else:
        if mean <= 0.0:
            return mean
        r = 1.0 / mean
        if r - 1.0 - log(r) <= thr:
            return 1.0
    lo = mean
    hi = 1.0
    for it in range(KL_MAX_ITERS):
        if hi - lo <= KL_TOL:
            break
        mid = (lo + hi) * 0.5
        if divergence == 0:
            d = c - mean * log(mid) - omu * log(1.0 - mid)
        else:
            r = mid / mean
            d = r - 1.0 - log(r)
        if d <= thr:
            lo = mid
        else:
            hi = mid
    return lo


cdef double _moss_bonus(long long pulls, long long horizon, int num_arms) noexcept nogil:
    cdef double arg = <double>horizon / <double>(num_arms * pulls)
    cdef double lg = log(arg)
    if lg < 0.0:
        lg = 0.0
    return sqrt(lg / <double>pulls)


cdef int _select_arm(KernelState *s) noexcept nogil:
    cdef int k, best_k
    cdef double best, idx, f, scale, x, u
    if s.kind <= 2 and s.unplayed > 0:
        for k in range(s.K):
            if s.pulls[k] == 0:
                return k
    if s.kind == 0:
        f = _exploration_value(<double>(s.t + 1), s.gamma)
        best = -1.0
        best_k = 0
        for k in range(s.K):
            idx = _kl_ucb_solve(s.mean[k], s.pulls[k], f, s.divergence)
            if idx > best:
                best = idx
                best_k = k
        return best_k
    elif s.kind == 1:
        best = -1.0
        best_k = 0
        for k in range(s.K):
            idx = s.mean[k] + s.moss_bonus[k]
            if idx > best:
                best = idx
                best_k = k
        return best_k
    elif s.kind == 2:
        scale = sqrt(log(<double>(s.t + 1)))
        best = -1.0
        best_k = 0
        for k in range(s.K):
            idx = s.mean[k] + scale * s.inv_sqrt[k]
            if idx > best:
                best = idx
                best_k = k
        return best_k
    elif s.kind == 3:
        best = -1.0
        best_k = 0
        for k in range(s.K):
            x = random_beta(s.rng, s.ts_alpha[k], s.ts_beta[k])
            if x > best:
                best = x
                best_k = k
        return best_k
    elif s.kind == 4:
        u = random_standard_uniform(s.rng)
        if u < s.epsilon:
            return <int>(random_standard_uniform(s.rng) * s.K)
        best = -1.0
        best_k = 0
        if s.eg_exploit == 1:
            scale = sqrt(log(<double>(s.t + 1)))
            for k in range(s.K):
                if s.pulls[k] == 0:
                    idx = INFINITY
                else:
                    idx = s.mean[k] + scale * s.inv_sqrt[k]
                if idx > best:
                    best = idx
                    best_k = k
        else:
            for k in range(s.K):
                if s.mean[k] > best:
                    best = s.mean[k]
                    best_k = k
        return best_k
    else:
        return 0


cdef void _update(KernelState *s, int arm, double reward) noexcept nogil:
    if s.pulls[arm] == 0:
        s.unplayed -= 1
    s.pulls[arm] += 1
    s.reward_sum[arm] += reward
    s.mean[arm] = s.reward_sum[arm] / <double>s.pulls[arm]
    s.t += 1
    if s.kind == 1:
        s.moss_bonus[arm] = _moss_bonus(s.pulls[arm], s.horizon, s.K)
    elif s.kind == 2:
        s.inv_sqrt[arm] = 1.0 / sqrt(<double>s.pulls[arm])
    elif s.kind == 3:
        if random_standard_uniform(s.rng) < reward:
            s.ts_alpha[arm] += 1.0
        else:
            s.ts_beta[arm] += 1.0
    elif s.kind == 4 and s.eg_exploit == 1:
        s.inv_sqrt[arm] = 1.0 / sqrt(<double>s.pulls[arm])


cdef long long _elapsed_ns(timespec *a, timespec *b) noexcept nogil:
    return (b.tv_sec - a.tv_sec) * <long long>1000000000 + (b.tv_nsec - a.tv_nsec)


def run_market_episode(
    int policy_code,
    object prices,
    object valuations,
    object capacity,
    long long horizon,
    double gamma,
    double epsilon,
    int divergence_code,
    int eg_exploit_code,
    object policy_rng,
    bint collect_round_times=False,
):
    """Play one posted-price episode and return its trace and statistics."""
    prices_arr = np.ascontiguousarray(prices, dtype=np.float64)
    valuations_arr = np.ascontiguousarray(valuations, dtype=np.float64)
    cdef double[:, ::1] prices_mv = prices_arr
    cdef double[:, ::1] val_mv = valuations_arr
    cdef int K = <int>prices_mv.shape[0]
    cdef int P = <int>prices_mv.shape[1]
    if val_mv.shape[0] != horizon or val_mv.shape[1] != P:
        raise ValueError("valuations must have shape (horizon, num_products)")
    if policy_code == 1 and horizon < K:
        raise ValueError("horizon must be at least num_arms")

    cdef bint has_capacity = capacity is not None
    if has_capacity:
        cap_arr = np.array(capacity, dtype=np.int64)
        if cap_arr.shape != (P,):
            raise ValueError("capacity must have one entry per product")
    else:
        cap_arr = np.zeros(1, dtype=np.int64)
    cdef long long[::1] cap_mv = cap_arr
    cdef long long remaining_total = 0
    cdef int j0
    if has_capacity:
        for j0 in range(P):
            remaining_total += cap_mv[j0]

    pulls = np.zeros(K, dtype=np.int64)
    reward_sum = np.zeros(K, dtype=np.float64)
    mean = np.zeros(K, dtype=np.float64)
    moss_bonus = np.zeros(K, dtype=np.float64)
    inv_sqrt = np.zeros(K, dtype=np.float64)
    ts_alpha = np.ones(K, dtype=np.float64)
    ts_beta = np.ones(K, dtype=np.float64)
    selections = np.zeros(horizon, dtype=np.int32)
    rewards = np.zeros(horizon, dtype=np.float64)
    round_times = np.zeros(horizon if collect_round_times else 1, dtype=np.float64)

    cdef long long[::1] pulls_mv = pulls
    cdef double[::1] rsum_mv = reward_sum
    cdef double[::1] mean_mv = mean
    cdef double[::1] moss_mv = moss_bonus
    cdef double[::1] isq_mv = inv_sqrt
    cdef double[::1] tsa_mv = ts_alpha
    cdef double[::1] tsb_mv = ts_beta
    cdef int[::1] sel_mv = selections
    cdef double[::1] rew_mv = rewards
    cdef double[::1] rt_mv = round_times

    bit_generator = policy_rng.bit_generator
    lock = bit_generator.lock
    cdef bitgen_t *rng_state = <bitgen_t *>PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator"
    )

    cdef KernelState s
    s.kind = policy_code
    s.K = K
    s.t = 0
    s.horizon = horizon
    s.gamma = gamma
    s.epsilon = epsilon
    s.divergence = divergence_code
    s.eg_exploit = eg_exploit_code
    s.unplayed = K
    s.pulls = &pulls_mv[0]
    s.reward_sum = &rsum_mv[0]
    s.mean = &mean_mv[0]
    s.moss_bonus = &moss_mv[0]
    s.inv_sqrt = &isq_mv[0]
    s.ts_alpha = &tsa_mv[0]
    s.ts_beta = &tsb_mv[0]
    s.rng = rng_state

    cdef long long t, stop_round = horizon
    cdef long long decision_ns = 0, spent
    cdef timespec ts0, ts1, ts2, ts3
    cdef int arm, j
    cdef double raw, reward

    with lock:
        with nogil:
            for t in range(horizon):
                clock_gettime(CLOCK_MONOTONIC, &ts0)
                arm = _select_arm(&s)
                clock_gettime(CLOCK_MONOTONIC, &ts1)

                raw = 0.0
                if has_capacity:
                    for j in range(P):
                        if val_mv[t, j] >= prices_mv[arm, j]:
                            if cap_mv[j] > 0:
                                cap_mv[j] -= 1
                                remaining_total -= 1
                                raw += prices_mv[arm, j]
                else:
                    for j in range(P):
                        if val_mv[t, j] >= prices_mv[arm, j]:
                            raw += prices_mv[arm, j]
                reward = raw / P
                sel_mv[t] = arm
                rew_mv[t] = reward

                clock_gettime(CLOCK_MONOTONIC, &ts2)
                _update(&s, arm, reward)
                clock_gettime(CLOCK_MONOTONIC, &ts3)
                spent = _elapsed_ns(&ts0, &ts1) + _elapsed_ns(&ts2, &ts3)
                decision_ns += spent
                if collect_round_times:
                    rt_mv[t] = spent * 1e-9
                if has_capacity and remaining_total == 0:
                    stop_round = t + 1
                    break

    stop = int(stop_round)
    return {
        "selections": selections[:stop],
        "rewards": rewards[:stop],
        "stop_round": stop,
        "decision_seconds": decision_ns * 1e-9,
        "pulls": pulls,
        "reward_sum": reward_sum,
        "round_times": round_times[:stop] if collect_round_times else None,
        "capacity_remaining": cap_arr if has_capacity else None,
    }


def run_bernoulli_episode(
    int policy_code,
    object arm_means,
    object env_uniforms,
    long long horizon,
    double gamma,
    double epsilon,
    int divergence_code,
    int eg_exploit_code,
    object policy_rng,
    bint collect_round_times=False,
):
    """Play one episode against fixed per-arm Bernoulli reward rates."""
    means_arr = np.ascontiguousarray(arm_means, dtype=np.float64)
    uniforms_arr = np.ascontiguousarray(env_uniforms, dtype=np.float64)
    cdef double[::1] means_mv = means_arr
    cdef double[::1] u_mv = uniforms_arr
    cdef int K = <int>means_mv.shape[0]
    if u_mv.shape[0] != horizon:
        raise ValueError("env_uniforms must have shape (horizon,)")
    if policy_code == 1 and horizon < K:
        raise ValueError("horizon must be at least num_arms")

    pulls = np.zeros(K, dtype=np.int64)
    reward_sum = np.zeros(K, dtype=np.float64)
    mean = np.zeros(K, dtype=np.float64)
    moss_bonus = np.zeros(K, dtype=np.float64)
    inv_sqrt = np.zeros(K, dtype=np.float64)
    ts_alpha = np.ones(K, dtype=np.float64)
    ts_beta = np.ones(K, dtype=np.float64)
    selections = np.zeros(horizon, dtype=np.int32)
    rewards = np.zeros(horizon, dtype=np.float64)
    round_times = np.zeros(horizon if collect_round_times else 1, dtype=np.float64)

    cdef long long[::1] pulls_mv = pulls
    cdef double[::1] rsum_mv = reward_sum
    cdef double[::1] mean_mv = mean
    cdef double[::1] moss_mv = moss_bonus
    cdef double[::1] isq_mv = inv_sqrt
    cdef double[::1] tsa_mv = ts_alpha
    cdef double[::1] tsb_mv = ts_beta
    cdef int[::1] sel_mv = selections
    cdef double[::1] rew_mv = rewards
    cdef double[::1] rt_mv = round_times

    bit_generator = policy_rng.bit_generator
    lock = bit_generator.lock
    cdef bitgen_t *rng_state = <bitgen_t *>PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator"
    )

    cdef KernelState s
    s.kind = policy_code
    s.K = K
    s.t = 0
    s.horizon = horizon
    s.gamma = gamma
    s.epsilon = epsilon
    s.divergence = divergence_code
    s.eg_exploit = eg_exploit_code
    s.unplayed = K
    s.pulls = &pulls_mv[0]
    s.reward_sum = &rsum_mv[0]
    s.mean = &mean_mv[0]
    s.moss_bonus = &moss_mv[0]
    s.inv_sqrt = &isq_mv[0]
    s.ts_alpha = &tsa_mv[0]
    s.ts_beta = &tsb_mv[0]
    s.rng = rng_state

    cdef long long t
    cdef long long decision_ns = 0, spent
    cdef timespec ts0, ts1, ts2, ts3
    cdef int arm
    cdef double reward

    with lock:
        with nogil:
            for t in range(horizon):
                clock_gettime(CLOCK_MONOTONIC, &ts0)
                arm = _select_arm(&s)
                clock_gettime(CLOCK_MONOTONIC, &ts1)

                reward = 1.0 if u_mv[t] < means_mv[arm] else 0.0
                sel_mv[t] = arm
                rew_mv[t] = reward

                clock_gettime(CLOCK_MONOTONIC, &ts2)
                _update(&s, arm, reward)
                clock_gettime(CLOCK_MONOTONIC, &ts3)
                spent = _elapsed_ns(&ts0, &ts1) + _elapsed_ns(&ts2, &ts3)
                decision_ns += spent
                if collect_round_times:
                    rt_mv[t] = spent * 1e-9

    return {
        "selections": selections,
        "rewards": rewards,
        "stop_round": int(horizon),
        "decision_seconds": decision_ns * 1e-9,
        "pulls": pulls,
        "reward_sum": reward_sum,
        "round_times": round_times if collect_round_times else None,
        "capacity_remaining": None,
    }
