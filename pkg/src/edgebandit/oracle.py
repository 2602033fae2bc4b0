"""Ground-truth quantities for a market instance.

Given the valuation model, every price vector has a closed expected
per-round reward: the price-weighted survival probabilities averaged
over the catalog. From those means come the optimality gaps, the
pseudo-regret of a selection trace, and the asymptotic regret constant
sum(gap / d(mean, best_mean)) that calibrates the KL-UCB guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .market import PriceVector, ValuationModel
from .policies import bernoulli_kl


def expected_reward(arm: PriceVector, model: ValuationModel) -> float:
    """Mean per-round reward of a price vector: avg_j p_j * Pr[v >= p_j]."""
    total = 0.0
    for j, p in enumerate(arm.prices):
        total += p * model.survival(p, product=j)
    return total / len(arm.prices)


@dataclass(frozen=True)
class ArmMeanTable:
    """Per-arm expected rewards with the derived best arm and gaps.

    The best arm is the lowest-id maximizer, matching the policies' own
    tie-breaking.
    """

    means: np.ndarray
    best_arm_id: int
    best_mean: float
    gaps: np.ndarray

    @classmethod
    def from_means(cls, means) -> "ArmMeanTable":
        arr = np.asarray(means, dtype=np.float64).copy()
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("means must be a non-empty 1-d array")
        best = int(np.argmax(arr))
        best_mean = float(arr[best])
        gaps = best_mean - arr
        arr.setflags(write=False)
        gaps.setflags(write=False)
        return cls(means=arr, best_arm_id=best, best_mean=best_mean, gaps=gaps)

    @property
    def num_arms(self) -> int:
        return int(self.means.size)


def build_mean_table(arms: Sequence[PriceVector], model: ValuationModel) -> ArmMeanTable:
    """Expected reward for every arm under the valuation model."""
    return ArmMeanTable.from_means(
        [expected_reward(arm, model) for arm in arms]
    )


@dataclass(frozen=True)
class RegretSeries:
    """Cumulative pseudo-regret evaluated at each checkpoint round."""

    checkpoints: np.ndarray
    cumulative: np.ndarray


def pseudo_regret(
    selections: np.ndarray,
    table: ArmMeanTable,
    checkpoints: Sequence[int] | np.ndarray,
) -> RegretSeries:
    """Sum of optimality gaps along a selection trace.

    Computed as a running sum of per-round gaps, which is exact and
    numerically stable (never a difference of two large totals). A trace
    shorter than a checkpoint (capacity stop) contributes its final
    value from there on: no more regret accrues once the market closes.
    """
    sel = np.asarray(selections)
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0:
        raise ValueError("need at least one checkpoint")
    if np.any(cps < 1) or np.any(np.diff(cps) <= 0):
        raise ValueError("checkpoints must be positive and strictly increasing")
    if sel.size and (sel.min() < 0 or sel.max() >= table.num_arms):
        raise ValueError("selection trace references an unknown arm")
    running = np.cumsum(table.gaps[sel])
    idx = np.minimum(cps, sel.size) - 1
    values = running[idx] if sel.size else np.zeros(cps.size)
    return RegretSeries(checkpoints=cps, cumulative=values.astype(np.float64))


def theorem2_asymptote(table: ArmMeanTable) -> float:
    """Asymptotic constant sum over suboptimal arms of gap / d(mean, best).

    Uses the Bernoulli divergence of each suboptimal mean from the best
    mean. Arms tied with the best contribute nothing; a best mean of 1
    makes every divergence infinite, so the constant is 0 (rewards are
    learned instantly there).
    """
    total = 0.0
    for mean, gap in zip(table.means, table.gaps):
        if gap <= 0.0:
            continue
        d = bernoulli_kl(float(mean), table.best_mean)
        total += float(gap) / d
    return total
