"""Posted-price market for heterogeneous edge resources.

The platform offers a catalog of products, one per (VM type, edge node)
pair. Each round it posts one price per product, a buyer arrives holding
a private valuation for every product, and the buyer purchases exactly
the products whose valuation meets the posted price. Sales of exhausted
products are cancelled. The platform's per-round reward is its total
payment normalized by the catalog size, so rewards live in [0, 1]
whenever prices do.

A "price vector" (one price per product) is the unit the pricing
policies select between; this module also builds those candidate
vectors from a shared ladder of price levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, ClassVar, Sequence

import numpy as np
from scipy import integrate


class ConfigurationError(ValueError):
    """Raised when a market or experiment configuration is unsatisfiable."""


@dataclass(frozen=True)
class ProductGrid:
    """Catalog shape: ``num_vm_types`` VM flavors sold at ``num_edge_nodes`` sites.

    Products are indexed row-major: product ``i * num_edge_nodes + j`` is
    VM type ``i`` at edge node ``j``.
    """

    num_vm_types: int
    num_edge_nodes: int

    def __post_init__(self) -> None:
        if self.num_vm_types < 1:
            raise ConfigurationError("num_vm_types must be a positive integer")
        if self.num_edge_nodes < 1:
            raise ConfigurationError("num_edge_nodes must be a positive integer")

    @property
    def num_products(self) -> int:
        return self.num_vm_types * self.num_edge_nodes

    def product_index(self, vm_type: int, edge_node: int) -> int:
        if not (0 <= vm_type < self.num_vm_types):
            raise ValueError(f"vm_type out of range: {vm_type}")
        if not (0 <= edge_node < self.num_edge_nodes):
            raise ValueError(f"edge_node out of range: {edge_node}")
        return vm_type * self.num_edge_nodes + edge_node


@dataclass(frozen=True)
class PriceLevels:
    """Shared, strictly increasing ladder of admissible prices in (0, 1]."""

    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.levels) == 0:
            raise ConfigurationError("price_levels must be non-empty")
        for i, x in enumerate(self.levels):
            if not (0.0 < x <= 1.0):
                raise ConfigurationError(
                    f"price levels must lie in (0, 1], got {x!r}"
                )
            if i > 0 and x <= self.levels[i - 1]:
                raise ConfigurationError("price levels must be strictly increasing")

    @property
    def num_levels(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class PriceVector:
    """One candidate action: a posted price for every product."""

    arm_id: int
    prices: tuple[float, ...]

    @property
    def num_products(self) -> int:
        return len(self.prices)


class ValuationModel:
    """Distribution of a buyer's private value for one product, supported on [0, 1].

    Subclasses provide i.i.d. sampling and the survival function
    Pr[v >= x] used by the expected-reward oracle. Models whose natural
    support exceeds [0, 1] are truncated by rejection (renormalized),
    never clipped, so no probability mass piles up at the endpoints.
    """

    kind: ClassVar[str] = ""

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def survival(self, x: float, product: int = 0) -> float:
        """Pr[v >= x] for the given product (continuous models ignore it)."""
        raise NotImplementedError


def _rejection_sample(rng: np.random.Generator, draw: Callable, n: int) -> np.ndarray:
    """Fill ``n`` slots with draws accepted into [0, 1].

    Chunk sizes depend only on how many slots remain, so the consumed
    random stream, and therefore the output, is deterministic per rng
    state.
    """
    out = np.empty(n, dtype=np.float64)
    filled = 0
    while filled < n:
        need = n - filled
        cand = draw(max(2 * need, 64))
        kept = cand[(cand >= 0.0) & (cand <= 1.0)]
        take = min(kept.size, need)
        out[filled : filled + take] = kept[:take]
        filled += take
    return out


@dataclass
class UniformValuation(ValuationModel):
    """v ~ Uniform[0, 1]."""

    kind: ClassVar[str] = "uniform"

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.random(size)

    def survival(self, x: float, product: int = 0) -> float:
        if x <= 0.0:
            return 1.0
        if x > 1.0:
            return 0.0
        return 1.0 - x


@dataclass
class TruncatedGaussianValuation(ValuationModel):
    """Gaussian(mean, std) restricted to [0, 1] by rejection."""

    mean: float = 0.2
    std: float = 0.2
    kind: ClassVar[str] = "truncated_gaussian"

    def __post_init__(self) -> None:
        if self.std <= 0.0:
            raise ConfigurationError("truncated_gaussian std must be positive")

    def _density_unnorm(self, x: float) -> float:
        z = (x - self.mean) / self.std
        return math.exp(-0.5 * z * z)

    @cached_property
    def _mass(self) -> float:
        mass, _ = integrate.quad(
            self._density_unnorm, 0.0, 1.0, epsabs=1e-14, epsrel=1e-10
        )
        return mass

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        shape = size if isinstance(size, tuple) else (int(size),)
        n = int(np.prod(shape)) if shape else 1
        flat = _rejection_sample(
            rng, lambda m: rng.normal(self.mean, self.std, m), n
        )
        return flat.reshape(shape)

    def survival(self, x: float, product: int = 0) -> float:
        if x <= 0.0:
            return 1.0
        if x >= 1.0:
            return 0.0
        tail, _ = integrate.quad(
            self._density_unnorm, x, 1.0, epsabs=1e-14, epsrel=1e-10
        )
        return tail / self._mass


@dataclass
class TruncatedExponentialValuation(ValuationModel):
    """Exponential with the given pre-truncation mean, restricted to [0, 1]."""

    mean: float = 2.0
    kind: ClassVar[str] = "truncated_exponential"

    def __post_init__(self) -> None:
        if self.mean <= 0.0:
            raise ConfigurationError("truncated_exponential mean must be positive")

    def _density_unnorm(self, x: float) -> float:
        return math.exp(-x / self.mean)

    @cached_property
    def _mass(self) -> float:
        mass, _ = integrate.quad(
            self._density_unnorm, 0.0, 1.0, epsabs=1e-14, epsrel=1e-10
        )
        return mass

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        shape = size if isinstance(size, tuple) else (int(size),)
        n = int(np.prod(shape)) if shape else 1
        flat = _rejection_sample(rng, lambda m: rng.exponential(self.mean, m), n)
        return flat.reshape(shape)

    def survival(self, x: float, product: int = 0) -> float:
        if x <= 0.0:
            return 1.0
        if x >= 1.0:
            return 0.0
        tail, _ = integrate.quad(
            self._density_unnorm, x, 1.0, epsabs=1e-14, epsrel=1e-10
        )
        return tail / self._mass


@dataclass
class BernoulliValuation(ValuationModel):
    """v in {0, 1}: the buyer values a product fully or not at all.

    ``success_prob`` is a scalar shared by all products or a per-product
    sequence.
    """

    success_prob: float | Sequence[float] = 1.0
    kind: ClassVar[str] = "bernoulli"

    def __post_init__(self) -> None:
        probs = np.atleast_1d(np.asarray(self.success_prob, dtype=np.float64))
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ConfigurationError("bernoulli success_prob must lie in [0, 1]")
        self._probs = probs

    def _prob_of(self, product: int) -> float:
        probs = self._probs
        return float(probs[0] if probs.size == 1 else probs[product])

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        probs = self._probs
        draws = rng.random(size)
        if probs.size == 1:
            return (draws < probs[0]).astype(np.float64)
        if draws.shape[-1] != probs.size:
            raise ConfigurationError(
                "per-product success_prob length does not match the catalog size"
            )
        return (draws < probs).astype(np.float64)

    def survival(self, x: float, product: int = 0) -> float:
        if x <= 0.0:
            return 1.0
        if x > 1.0:
            return 0.0
        return self._prob_of(product)


_MODEL_KINDS = {
    "uniform": UniformValuation,
    "truncated_gaussian": TruncatedGaussianValuation,
    "truncated_exponential": TruncatedExponentialValuation,
    "bernoulli": BernoulliValuation,
}


def make_valuation_model(kind: str, **params) -> ValuationModel:
    """Build a valuation model from a config-style (kind, params) pair."""
    cls = _MODEL_KINDS.get(kind)
    if cls is None:
        raise ConfigurationError(
            f"unknown valuation kind {kind!r}; expected one of {sorted(_MODEL_KINDS)}"
        )
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for valuation {kind!r}: {exc}") from exc


ARM_SCHEMES = ("uniform_ladder", "random_grid")


def build_arm_set(
    grid: ProductGrid,
    levels: PriceLevels,
    num_arms: int,
    scheme: str = "uniform_ladder",
    seed: int = 0,
) -> list[PriceVector]:
    """Construct the candidate price vectors the policies choose between.

    ``uniform_ladder`` gives arm k the k-th ladder level on every product
    (so K <= number of levels). ``random_grid`` draws each product's level
    independently, rejecting duplicate vectors, deterministically for a
    given seed (so K <= levels**products).
    """
    if num_arms < 1:
        raise ConfigurationError("num_arms must be a positive integer")
    P = grid.num_products
    V = levels.num_levels
    if scheme == "uniform_ladder":
        if num_arms > V:
            raise ConfigurationError(
                f"uniform_ladder needs one level per arm: num_arms={num_arms} "
                f"exceeds {V} price levels"
            )
        return [
            PriceVector(k, (levels.levels[k],) * P) for k in range(num_arms)
        ]
    if scheme == "random_grid":
        space = V**P
        if num_arms > space:
            raise ConfigurationError(
                f"random_grid can build at most {space} distinct arms "
                f"({V} levels ** {P} products), got num_arms={num_arms}"
            )
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        seen: set[tuple[int, ...]] = set()
        arms: list[PriceVector] = []
        while len(arms) < num_arms:
            pick = tuple(int(i) for i in rng.integers(0, V, size=P))
            if pick in seen:
                continue
            seen.add(pick)
            arms.append(
                PriceVector(len(arms), tuple(levels.levels[i] for i in pick))
            )
        return arms
    raise ConfigurationError(
        f"unknown arm scheme {scheme!r}; expected one of {ARM_SCHEMES}"
    )


def sample_valuations(
    model: ValuationModel,
    grid: ProductGrid,
    rng: np.random.Generator,
    rounds: int | None = None,
) -> np.ndarray:
    """Draw one buyer's valuations (shape (P,)) or a batch (shape (rounds, P))."""
    if rounds is None:
        return model.sample(rng, grid.num_products)
    if rounds < 1:
        raise ValueError("rounds must be positive")
    return model.sample(rng, (rounds, grid.num_products))


def purchase(valuations: np.ndarray, arm: PriceVector) -> np.ndarray:
    """Buyer's demand under posted prices: buys product j iff v_j >= p_j.

    Ties buy. Returns an int8 0/1 vector; capacity is settled separately.
    """
    v = np.asarray(valuations, dtype=np.float64)
    p = np.asarray(arm.prices, dtype=np.float64)
    if v.shape != p.shape:
        raise ValueError(
            f"valuation/price length mismatch: {v.shape} vs {p.shape}"
        )
    return (v >= p).astype(np.int8)


@dataclass
class CapacityLedger:
    """Remaining sellable units per product; ``None`` means unlimited."""

    remaining: np.ndarray | None = None

    @classmethod
    def unlimited(cls) -> "CapacityLedger":
        return cls(None)

    @classmethod
    def limited(cls, capacity, num_products: int) -> "CapacityLedger":
        arr = np.asarray(capacity, dtype=np.int64)
        if arr.ndim == 0:
            arr = np.full(num_products, int(arr), dtype=np.int64)
        if arr.shape != (num_products,):
            raise ConfigurationError(
                f"capacity must be a scalar or one entry per product, got shape {arr.shape}"
            )
        if np.any(arr < 0):
            raise ConfigurationError("capacity entries must be non-negative")
        return cls(arr)

    def exhausted(self) -> bool:
        """True when every product is sold out (never true when unlimited)."""
        return self.remaining is not None and not bool(self.remaining.any())


@dataclass(frozen=True)
class Outcome:
    """Settled result of one round: normalized reward plus the realized sales."""

    reward: float
    consumption: np.ndarray
    raw_payment: float


def settle(arm: PriceVector, consumption: np.ndarray, ledger: CapacityLedger) -> Outcome:
    """Apply capacity to a demand vector and collect payment.

    A sale of a product with zero remaining units is cancelled (no
    payment, no decrement); every other sale decrements its product.
    Reward is the collected payment divided by the catalog size.
    """
    c = np.asarray(consumption, dtype=np.int8).copy()
    p = np.asarray(arm.prices, dtype=np.float64)
    if c.shape != p.shape:
        raise ValueError(f"consumption/price length mismatch: {c.shape} vs {p.shape}")
    if ledger.remaining is not None:
        if ledger.remaining.shape != p.shape:
            raise ValueError("ledger does not match the catalog size")
        for j in range(c.size):
            if c[j]:
                if ledger.remaining[j] > 0:
                    ledger.remaining[j] -= 1
                else:
                    c[j] = 0
    raw = float(np.dot(p, c.astype(np.float64)))
    return Outcome(reward=raw / p.size, consumption=c, raw_payment=raw)


def buyer_utility(
    valuations: np.ndarray, arm: PriceVector, consumption: np.ndarray
) -> float:
    """Buyer surplus: sum of (v_j - p_j) over settled purchases."""
    v = np.asarray(valuations, dtype=np.float64)
    p = np.asarray(arm.prices, dtype=np.float64)
    c = np.asarray(consumption, dtype=np.float64)
    if not (v.shape == p.shape == c.shape):
        raise ValueError("valuations, prices and consumption must share a shape")
    return float(np.dot(v - p, c))
