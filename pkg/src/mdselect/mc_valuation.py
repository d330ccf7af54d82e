"""Monte Carlo valuation of every feature from random orderings, plus the z-test.

One ordering walks the prefix chain ``{} -> {i1} -> ... -> N`` once, so it
costs ``n + 1`` payoff calls and yields a weighted increment for every feature
at the same time. The feature at 0-based position ``p`` receives
``(n - p) / (n + 1) * [v(prefix + i) - v(prefix)]``; the mean of these over
uniformly random orderings is the feature's valuation.

Orderings are drawn in fixed-size chunks. Chunk ``c`` of stream ``s`` uses its
own generator seeded from ``(seed, s, c)``, so the estimate does not depend on
how many threads process the chunks.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from mdselect.game_core import GameOracle

__all__ = [
    "CHUNK_SIZE",
    "OrderingSampleConfig",
    "ValuationEstimate",
    "critical_value",
    "sample_ordering",
    "weighted_increments",
    "estimate",
    "decide",
]

CHUNK_SIZE = 64


@dataclass(frozen=True)
class OrderingSampleConfig:
    gamma: int = 100
    seed: int = 0
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if self.gamma < 2:
            raise ValueError(f"gamma must be at least 2, got {self.gamma}")
        if self.gamma < 100:
            warnings.warn(f"gamma={self.gamma} is below the recommended 100 orderings", stacklevel=3)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True, eq=False)
class ValuationEstimate:
    """Per-feature estimates; arrays are indexed by the game's feature index."""

    lambda_hat: np.ndarray
    sigma_hat: np.ndarray
    z: np.ndarray
    samples: int

    @property
    def n(self) -> int:
        return len(self.lambda_hat)


def critical_value(alpha: float) -> float:
    """Two-sided standard normal critical value ``z_{1 - alpha/2}``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def sample_ordering(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniformly random permutation of ``0..n-1`` (Fisher-Yates via numpy)."""
    if n < 1:
        raise ValueError(f"need at least one feature, got n={n}")
    return rng.permutation(n)


def _position_weights(n: int) -> np.ndarray:
    return (n - np.arange(n)) / (n + 1)


def weighted_increments(game: GameOracle, tau) -> np.ndarray:
    """Weighted sequential marginal effects of all features along ordering ``tau``."""
    tau = np.asarray(tau, dtype=np.int64)
    n = game.n
    if tau.shape != (n,) or not np.array_equal(np.sort(tau), np.arange(n)):
        raise ValueError(f"tau must be a permutation of 0..{n - 1}")
    return _chain_increments(game, tau[None, :])[0]


def _chain_increments(game: GameOracle, taus: np.ndarray) -> np.ndarray:
    """Increments for a batch of orderings (rows of ``taus``), indexed by feature."""
    m, n = taus.shape
    prefixes = np.zeros((m, n + 1), dtype=np.int64)
    # bits are disjoint along a chain, so a cumulative sum is a cumulative OR
    np.cumsum(np.left_shift(1, taus), axis=1, out=prefixes[:, 1:])
    chain = game.values(prefixes)
    weighted = np.diff(chain, axis=1) * _position_weights(n)
    out = np.empty_like(weighted)
    np.put_along_axis(out, taus, weighted, axis=1)
    return out


def _chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, chunk)))


def _chunk_moments(game: GameOracle, cfg: OrderingSampleConfig, stream: int, chunk: int):
    """Count, mean and centred sum of squares of one chunk's increments."""
    start = chunk * CHUNK_SIZE
    count = min(CHUNK_SIZE, cfg.gamma - start)
    rng = _chunk_rng(cfg.seed, stream, chunk)
    taus = np.stack([sample_ordering(rng, game.n) for _ in range(count)])
    inc = _chain_increments(game, taus)
    # shifting by the first row keeps constant columns exactly constant
    shifted = inc - inc[0]
    mean = shifted.mean(axis=0)
    dev = shifted - mean
    return count, inc[0] + mean, (dev * dev).sum(axis=0)


def estimate(game: GameOracle, cfg: OrderingSampleConfig, *, stream: int = 0,
             threads: int = 1) -> ValuationEstimate:
    """Estimate every feature's valuation and standard error from ``cfg.gamma`` orderings.

    ``stream`` selects an independent family of random orderings for the same
    seed (the sequential selector uses one per round). The standard error is
    sqrt(mean of squares - squared mean) / sqrt(gamma); chunk moments are merged
    in chunk order with the pairwise update, which avoids cancellation.
    """
    n_chunks = -(-cfg.gamma // CHUNK_SIZE)
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _chunk_moments(game, cfg, stream, c), range(n_chunks)))
    else:
        parts = [_chunk_moments(game, cfg, stream, c) for c in range(n_chunks)]
    count, lam, m2 = parts[0]
    for nb, mean_b, m2_b in parts[1:]:
        total = count + nb
        delta = mean_b - lam
        lam = lam + delta * (nb / total)
        m2 = m2 + m2_b + delta * delta * (count * nb / total)
        count = total
    sigma = np.sqrt(m2 / cfg.gamma) / math.sqrt(cfg.gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, lam / np.where(sigma > 0, sigma, 1.0), np.copysign(np.inf, lam))
    z = np.where((sigma == 0) & (lam == 0), 0.0, z)
    return ValuationEstimate(lam, sigma, z, cfg.gamma)


def decide(est: ValuationEstimate, alpha: float) -> np.ndarray:
    """Boolean mask of features whose valuation is significantly non-zero."""
    return np.abs(est.z) >= critical_value(alpha)
