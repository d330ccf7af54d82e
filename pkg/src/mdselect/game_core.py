"""Coalitions, the matched prior, and exact valuations of small coalitional games.

Coalitions are bitmasks over feature indices ``0..n-1``. A game is a payoff
``v`` on those masks, wrapped in :class:`GameOracle` which memoizes every
evaluation. Everything in this module enumerates subsets (or orderings), so it
is only meant for small ``n``; larger games go through
:mod:`mdselect.mc_valuation`.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "MAX_FEATURES",
    "MAX_EXACT_N",
    "MAX_CARRIER_N",
    "MAX_ORDERING_N",
    "CapacityError",
    "FeatureSet",
    "MatchedPrior",
    "GameOracle",
    "prior_mass",
    "log_prior_mass",
    "lambda_weights",
    "shapley_weights",
    "exact_lambda",
    "exact_shapley",
    "expected_payoff",
    "verify_matching",
    "verify_expected_shapley",
    "verify_ordering_representation",
]

MAX_FEATURES = 63
# Full subset tables cost 2^n payoff evaluations (33M at n=25).
MAX_EXACT_N = 25
# The carrier-game check enumerates 2^n carriers, each over 2^n coalitions.
MAX_CARRIER_N = 12
# All n! orderings are walked; 8! = 40320.
MAX_ORDERING_N = 8


class CapacityError(ValueError):
    """Raised when an enumeration would be too large; use Monte Carlo instead."""


def _check_capacity(n: int, limit: int, what: str) -> None:
    if n > limit:
        raise CapacityError(
            f"{what} enumerates too much at n={n} (limit {limit}); "
            "use mdselect.mc_valuation.estimate for larger games"
        )


@dataclass(frozen=True)
class FeatureSet:
    """A coalition of candidate features stored as a bitmask."""

    bits: int
    n: int

    def __post_init__(self) -> None:
        if not 1 <= self.n <= MAX_FEATURES:
            raise ValueError(f"feature count must be in 1..{MAX_FEATURES}, got {self.n}")
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"bitmask {self.bits:#x} has bits outside 0..{self.n - 1}")

    @classmethod
    def from_indices(cls, indices: Iterable[int], n: int) -> FeatureSet:
        bits = 0
        for i in indices:
            if not 0 <= i < n:
                raise ValueError(f"feature index {i} outside 0..{n - 1}")
            bits |= 1 << i
        return cls(bits, n)

    @classmethod
    def empty(cls, n: int) -> FeatureSet:
        return cls(0, n)

    @classmethod
    def full(cls, n: int) -> FeatureSet:
        return cls((1 << n) - 1, n)

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.bits >> i & 1)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices())

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __contains__(self, i: object) -> bool:
        return isinstance(i, (int, np.integer)) and 0 <= i < self.n and bool(self.bits >> int(i) & 1)

    def _coerce(self, other: FeatureSet) -> int:
        if other.n != self.n:
            raise ValueError(f"feature sets over different ground sets ({self.n} vs {other.n})")
        return other.bits

    def __or__(self, other: FeatureSet) -> FeatureSet:
        return FeatureSet(self.bits | self._coerce(other), self.n)

    def __and__(self, other: FeatureSet) -> FeatureSet:
        return FeatureSet(self.bits & self._coerce(other), self.n)

    def __sub__(self, other: FeatureSet) -> FeatureSet:
        return FeatureSet(self.bits & ~self._coerce(other), self.n)

    def with_feature(self, i: int) -> FeatureSet:
        return FeatureSet(self.bits | 1 << i, self.n)

    def __repr__(self) -> str:
        return f"FeatureSet({set(self.indices()) or '{}'}, n={self.n})"


def log_prior_mass(t: int, n: int) -> float:
    """Log of ``t!(n-t)!/(n+1)!``, the matched mass of any single size-``t`` coalition."""
    if n < 1 or n > MAX_FEATURES:
        raise ValueError(f"feature count must be in 1..{MAX_FEATURES}, got {n}")
    if not 0 <= t <= n:
        raise ValueError(f"coalition size {t} outside 0..{n}")
    return math.lgamma(t + 1) + math.lgamma(n - t + 1) - math.lgamma(n + 2)


def prior_mass(t: int, n: int) -> float:
    """Probability that the random true set equals one particular size-``t`` coalition."""
    return math.exp(log_prior_mass(t, n))


def lambda_weights(n: int) -> np.ndarray:
    """Weights ``t!(n-t)!/(n+1)!`` for ``t = 0..n`` (indexed by coalition size)."""
    return np.array([prior_mass(t, n) for t in range(n + 1)])


def shapley_weights(n: int) -> np.ndarray:
    """Shapley weights ``t!(n-t-1)!/n!`` for ``t = 0..n-1``."""
    return np.array(
        [math.exp(math.lgamma(t + 1) + math.lgamma(n - t) - math.lgamma(n + 1)) for t in range(n)]
    )


class MatchedPrior:
    """The size-exchangeable prior on coalitions that satisfies the matching identity.

    Mass depends only on coalition size, so the table holds ``n + 1`` entries.
    """

    def __init__(self, n: int):
        self.n = n
        self.log_mass = tuple(log_prior_mass(t, n) for t in range(n + 1))

    def mass(self, t: int) -> float:
        return math.exp(self.log_mass[t])

    def masses(self) -> np.ndarray:
        return np.exp(np.array(self.log_mass))

    def size_marginal(self, t: int) -> float:
        """Probability that the random coalition has exactly ``t`` members."""
        return math.exp(math.lgamma(self.n + 1) - math.lgamma(t + 1) - math.lgamma(self.n - t + 1)
                        + self.log_mass[t])

    def total(self) -> float:
        return math.fsum(math.comb(self.n, t) * self.mass(t) for t in range(self.n + 1))


class GameOracle:
    """Memoized payoff ``v`` over coalitions of ``n`` features.

    The cache is guarded by a lock so several threads may evaluate the same
    game. Since ``v`` is a pure function of the coalition, a value computed
    twice by racing threads is identical and either copy may be kept.

    ``carrier(S)`` returns the game ``T -> v(S & T)``. It intersects the mask
    before touching the cache, so the carrier and the original share storage.
    """

    def __init__(self, n: int, payoff: Callable[[int], float], *, _cache=None, _lock=None,
                 _mask: int | None = None, _base: GameOracle | None = None):
        if not 1 <= n <= MAX_FEATURES:
            raise ValueError(f"feature count must be in 1..{MAX_FEATURES}, got {n}")
        self.n = n
        self.payoff = payoff
        self._cache: dict[int, float] = {} if _cache is None else _cache
        self._lock = threading.Lock() if _lock is None else _lock
        self.mask = (1 << n) - 1 if _mask is None else _mask
        self._base = _base
        self.evaluations = 0
        self.requests = 0

    @classmethod
    def from_table(cls, values: Sequence[float]) -> GameOracle:
        """Game given by its full value table, indexed by bitmask."""
        table = np.asarray(values, dtype=float)
        n = int(round(math.log2(len(table))))
        if len(table) != 1 << n:
            raise ValueError(f"value table length {len(table)} is not a power of two")
        game = cls(n, lambda bits: float(table[bits]))
        game._table = table
        return game

    def __call__(self, coalition: int | FeatureSet) -> float:
        bits = coalition.bits if isinstance(coalition, FeatureSet) else int(coalition)
        if bits < 0 or bits >> self.n:
            raise ValueError(f"coalition {bits:#x} outside ground set of {self.n} features")
        bits &= self.mask
        root = self._root()
        with root._lock:
            root.requests += 1
            value = root._cache.get(bits)
        if value is None:
            value = float(root.payoff(bits))
            with root._lock:
                if bits not in root._cache:
                    root._cache[bits] = value
                    root.evaluations += 1
                value = root._cache[bits]
        return value

    def _root(self) -> GameOracle:
        return self if self._base is None else self._base

    def carrier(self, support: int | FeatureSet) -> GameOracle:
        bits = support.bits if isinstance(support, FeatureSet) else int(support)
        root = self._root()
        return GameOracle(self.n, root.payoff, _cache=root._cache, _lock=root._lock,
                          _mask=self.mask & bits, _base=root)

    def table(self) -> np.ndarray:
        """Values for all ``2**n`` coalitions in ascending bitmask order."""
        _check_capacity(self.n, MAX_EXACT_N, "a full payoff table")
        root = self._root()
        base = getattr(root, "_table", None)
        if base is None:
            base = np.array([root(m) for m in range(1 << self.n)])
            root._table = base
        if self.mask == (1 << self.n) - 1:
            return base
        return base[np.arange(1 << self.n) & self.mask]

    def values(self, masks: np.ndarray) -> np.ndarray:
        """Evaluate many coalitions at once; table-backed games skip the Python loop."""
        masks = np.asarray(masks, dtype=np.int64) & self.mask
        root = self._root()
        table = getattr(root, "_table", None)
        if table is not None:
            with root._lock:
                root.requests += masks.size
            return table[masks]
        flat = [self(int(m)) for m in masks.ravel()]
        return np.array(flat, dtype=float).reshape(masks.shape)

    def cache_size(self) -> int:
        return len(self._root()._cache)


def _sizes(n: int) -> np.ndarray:
    return np.bitwise_count(np.arange(1 << n, dtype=np.uint64)).astype(np.int64)


def _weighted_marginals(table: np.ndarray, n: int, i: int, weight_by_size: np.ndarray) -> float:
    masks = np.arange(1 << n, dtype=np.int64)
    without = masks[(masks >> i & 1) == 0]
    diffs = table[without | (1 << i)] - table[without]
    sizes = np.bitwise_count(without.astype(np.uint64)).astype(np.int64)
    # fsum of exact zeros is exactly zero, which keeps dummy players at 0.0
    return math.fsum((weight_by_size[sizes] * diffs).tolist())


def _check_feature(game: GameOracle, i: int) -> None:
    if not 0 <= i < game.n:
        raise ValueError(f"feature index {i} outside 0..{game.n - 1}")


def exact_lambda(game: GameOracle, i: int, *, masses: Sequence[float] | None = None) -> float:
    """Expected marginal effect of feature ``i`` under the matched prior.

    ``masses`` overrides the per-size coalition mass (length ``n + 1``); it
    exists so a deliberately wrong prior can be fed to the verifiers.
    """
    _check_capacity(game.n, MAX_EXACT_N, "exact_lambda")
    _check_feature(game, i)
    w = lambda_weights(game.n) if masses is None else np.asarray(masses, dtype=float)
    return _weighted_marginals(game.table(), game.n, i, w)


def exact_shapley(game: GameOracle, i: int) -> float:
    _check_capacity(game.n, MAX_EXACT_N, "exact_shapley")
    _check_feature(game, i)
    return _weighted_marginals(game.table(), game.n, i, shapley_weights(game.n))


def expected_payoff(game: GameOracle, *, masses: Sequence[float] | None = None) -> float:
    """``E v(S)`` with ``S`` drawn from the matched prior."""
    _check_capacity(game.n, MAX_EXACT_N, "expected_payoff")
    w = lambda_weights(game.n) if masses is None else np.asarray(masses, dtype=float)
    return math.fsum((w[_sizes(game.n)] * game.table()).tolist())


def verify_matching(game: GameOracle, *, masses: Sequence[float] | None = None) -> float:
    """Residual ``sum_i lambda_i - (E v(S) - v(empty))``; zero for every game."""
    _check_capacity(game.n, MAX_EXACT_N, "verify_matching")
    lams = [exact_lambda(game, i, masses=masses) for i in range(game.n)]
    ev = expected_payoff(game, masses=masses)
    return math.fsum(lams + [-ev, game(0)])


def verify_expected_shapley(game: GameOracle) -> float:
    """Max deviation between prior-averaged carrier-game Shapley values and lambda."""
    n = game.n
    _check_capacity(n, MAX_CARRIER_N, "verify_expected_shapley")
    log_mass = [log_prior_mass(t, n) for t in range(n + 1)]
    sw = shapley_weights(n)
    worst = 0.0
    for i in range(n):
        terms = []
        for z in range(1 << n):
            if not z >> i & 1:
                continue  # i is a dummy in this carrier game
            psi = _weighted_marginals(game.carrier(z).table(), n, i, sw)
            terms.append(math.exp(log_mass[z.bit_count()]) * psi)
        worst = max(worst, abs(math.fsum(terms) - exact_lambda(game, i)))
    return worst


def verify_ordering_representation(game: GameOracle) -> float:
    """Max deviation between the all-orderings average of weighted increments and lambda."""
    n = game.n
    _check_capacity(n, MAX_ORDERING_N, "verify_ordering_representation")
    contributions: list[list[float]] = [[] for _ in range(n)]
    for tau in itertools.permutations(range(n)):
        prefix = 0
        before = game(prefix)
        for pos, i in enumerate(tau):
            prefix |= 1 << i
            after = game(prefix)
            contributions[i].append((n - pos) / (n + 1) * (after - before))
            before = after
    count = math.factorial(n)
    return max(abs(math.fsum(c) / count - exact_lambda(game, i))
               for i, c in enumerate(contributions))
