"""Sequential acceptance of significant features.

Each round values the remaining candidates in a fresh game in which the
features accepted so far are fixed regressors, then moves every candidate with
a significant z-statistic into the accepted set. The loop stops when a round
accepts nothing or no candidates remain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from mdselect.game_core import FeatureSet
from mdselect.linmodel import Dataset, PayoffKind, PayoffSpec, payoff_game
from mdselect.mc_valuation import (
    OrderingSampleConfig,
    ValuationEstimate,
    critical_value,
    decide,
    estimate,
)

__all__ = ["RoundRecord", "SelectionReport", "sequential_select"]


@dataclass(eq=False)
class RoundRecord:
    remaining: tuple[int, ...]  # original feature indices, in game order
    estimate: ValuationEstimate
    accepted_batch: tuple[int, ...]
    critical: float

    def to_dict(self, names: tuple[str, ...] | None = None) -> dict:
        rows = []
        for pos, i in enumerate(self.remaining):
            row = {
                "feature": i,
                "lambda": float(self.estimate.lambda_hat[pos]),
                "sigma": float(self.estimate.sigma_hat[pos]),
                "z": float(self.estimate.z[pos]),
            }
            if names is not None:
                row["name"] = names[i]
            rows.append(row)
        return {
            "remaining": list(self.remaining),
            "estimates": rows,
            "accepted_batch": list(self.accepted_batch),
            "critical": self.critical,
        }

    @classmethod
    def from_dict(cls, d: dict, samples: int) -> RoundRecord:
        est = ValuationEstimate(
            np.array([r["lambda"] for r in d["estimates"]], dtype=float),
            np.array([r["sigma"] for r in d["estimates"]], dtype=float),
            np.array([r["z"] for r in d["estimates"]], dtype=float),
            samples,
        )
        return cls(tuple(d["remaining"]), est, tuple(d["accepted_batch"]), float(d["critical"]))


@dataclass(eq=False)
class SelectionReport:
    accepted: FeatureSet
    rounds: list[RoundRecord]
    payoff: PayoffSpec
    gamma: int
    alpha: float
    seed: int
    evaluations: int = 0
    feature_names: tuple[str, ...] = field(default=())

    def accepted_names(self) -> list[str]:
        return [self.feature_names[i] for i in self.accepted]

    def to_dict(self) -> dict:
        names = self.feature_names or None
        out = {
            "accepted": list(self.accepted.indices()),
            "rounds": [r.to_dict(names) for r in self.rounds],
            "payoff": self.payoff.kind.value,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "seed": self.seed,
            "n": self.accepted.n,
            "evaluations": self.evaluations,
        }
        if self.payoff.kind is PayoffKind.RMSE:
            out["split_fraction"] = self.payoff.split_fraction
            out["split_seed"] = self.payoff.split_seed
        if names:
            out["feature_names"] = list(names)
            out["accepted_names"] = self.accepted_names()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> SelectionReport:
        spec = PayoffSpec(
            d["payoff"],
            split_fraction=d.get("split_fraction", 0.8),
            split_seed=d.get("split_seed", 0),
        )
        return cls(
            accepted=FeatureSet.from_indices(d["accepted"], d["n"]),
            rounds=[RoundRecord.from_dict(r, d["gamma"]) for r in d["rounds"]],
            payoff=spec,
            gamma=d["gamma"],
            alpha=d["alpha"],
            seed=d["seed"],
            evaluations=d.get("evaluations", 0),
            feature_names=tuple(d.get("feature_names", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> SelectionReport:
        return cls.from_dict(json.loads(text))


def sequential_select(data: Dataset, spec: PayoffSpec, cfg: OrderingSampleConfig, *,
                      threads: int = 1) -> SelectionReport:
    """Accept features round by round until no remaining candidate is significant.

    Round ``r`` (0-based) draws its orderings from stream ``r`` of ``cfg.seed``,
    so the first round reproduces :func:`estimate` on the unrestricted game.
    Exceptions from payoff evaluation are re-raised with the round attached.
    """
    remaining = list(range(data.n))
    accepted: list[int] = []
    rounds: list[RoundRecord] = []
    crit = critical_value(cfg.alpha)
    evaluations = 0
    r = 0
    while remaining:
        game = payoff_game(data.restrict(remaining, accepted), spec)
        try:
            est = estimate(game, cfg, stream=r, threads=threads)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise type(exc)(f"round {r}: {exc}") from exc
        evaluations += game.evaluations
        significant = decide(est, cfg.alpha)
        batch = tuple(i for i, hit in zip(remaining, significant) if hit)
        rounds.append(RoundRecord(tuple(remaining), est, batch, crit))
        if not batch:
            break
        accepted.extend(batch)
        remaining = [i for i in remaining if i not in batch]
        r += 1
    return SelectionReport(
        accepted=FeatureSet.from_indices(accepted, data.n),
        rounds=rounds,
        payoff=spec,
        gamma=cfg.gamma,
        alpha=cfg.alpha,
        seed=cfg.seed,
        evaluations=evaluations,
        feature_names=data.feature_names,
    )
