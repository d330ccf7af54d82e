"""Simulation study: synthetic regressions, baseline selectors and discrepancy tallies.

Each trial draws a dataset whose true regressors are ``{0, ..., true_size-1}``,
runs one selection method on it and records how many true features were
missed (under-fit) and how many irrelevant ones were picked (over-fit).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats

from mdselect.game_core import FeatureSet
from mdselect.linmodel import (
    RSS_FLOOR_REL,
    Dataset,
    PayoffEvaluator,
    PayoffKind,
    PayoffSpec,
)
from mdselect.mc_valuation import OrderingSampleConfig
from mdselect.selector import sequential_select

__all__ = [
    "TRANSFORMS",
    "SimConfig",
    "Discrepancy",
    "DiscrepancyTally",
    "TrialRecord",
    "StudyResult",
    "generate_dataset",
    "classify",
    "stepwise_baseline",
    "best_subset_ic",
    "register_method",
    "METHODS",
    "run_study",
]

TRANSFORMS = ("exp", "square", "cube", "log_abs")
CATEGORIES = ("exact", "under1", "under2plus", "over1", "over2plus")
CATEGORY_LABELS = {
    "exact": "S_hat = S",
    "under1": "|S \\ S_hat| = 1",
    "under2plus": "|S \\ S_hat| >= 2",
    "over1": "|S_hat \\ S| = 1",
    "over2plus": "|S_hat \\ S| >= 2",
}


@dataclass(frozen=True)
class SimConfig:
    n: int = 20
    true_size: int = 4
    t_obs: int = 100
    trials: int = 200
    seed: int = 0
    method: str = "lambda"
    payoff: PayoffSpec = field(default_factory=PayoffSpec)
    gamma: int = 100
    alpha: float = 0.05
    coef_low: float = 0.5
    coef_high: float = 3.0
    noise_r2_target: float = 0.7
    exp_clip: float = 20.0
    log_floor: float = 1e-8
    p_enter: float = 0.05
    p_remove: float = 0.10

    def __post_init__(self) -> None:
        if not 1 <= self.true_size <= self.n:
            raise ValueError(f"true_size must be in 1..n, got {self.true_size} with n={self.n}")
        if self.trials < 1:
            raise ValueError(f"trials must be positive, got {self.trials}")
        if not 0.0 < self.noise_r2_target <= 1.0:
            raise ValueError(f"noise_r2_target must be in (0, 1], got {self.noise_r2_target}")
        if not 0.0 <= self.coef_low <= self.coef_high:
            raise ValueError("need 0 <= coef_low <= coef_high")
        if self.t_obs < 3:
            raise ValueError(f"t_obs too small: {self.t_obs}")
        if not 0.0 < self.p_enter <= self.p_remove < 1.0:
            raise ValueError("need 0 < p_enter <= p_remove < 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["payoff"] = {
            "kind": self.payoff.kind.value,
            "split_fraction": self.payoff.split_fraction,
            "split_seed": self.payoff.split_seed,
        }
        return d


def _trial_seed(seed: int, trial: int, purpose: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(trial, purpose))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _transform(X: np.ndarray, which: str, cfg: SimConfig) -> np.ndarray:
    if which == "exp":
        return np.exp(np.clip(X, -cfg.exp_clip, cfg.exp_clip))
    if which == "square":
        return X * X
    if which == "cube":
        return X * X * X
    return np.log(np.maximum(np.abs(X), cfg.log_floor))


def generate_dataset(cfg: SimConfig, trial: int) -> tuple[Dataset, FeatureSet]:
    """Synthetic dataset for one trial and its true feature set ``{0..true_size-1}``.

    Independent normals are mixed by a random square matrix, passed through one
    nonlinear transform and standardized. The noise scale is chosen so that the
    signal explains ``noise_r2_target`` of the variance of y in the sample.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(trial, 0)))
    raw = rng.standard_normal((cfg.t_obs, cfg.n))
    mixed = raw @ rng.standard_normal((cfg.n, cfg.n))
    which = TRANSFORMS[rng.integers(len(TRANSFORMS))]
    X = _transform(mixed, which, cfg)
    sd = X.std(axis=0)
    X = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)

    s = cfg.true_size
    beta = rng.uniform(cfg.coef_low, cfg.coef_high, s) * rng.choice([-1.0, 1.0], s)
    intercept = rng.standard_normal()
    signal = X[:, :s] @ beta
    eps = rng.standard_normal(cfg.t_obs)
    if cfg.noise_r2_target < 1.0:
        scale = math.sqrt(signal.var() * (1.0 - cfg.noise_r2_target) / cfg.noise_r2_target)
    else:
        scale = 0.0
    y = intercept + signal + scale * eps
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = Dataset(y, X)
    return data, FeatureSet.from_indices(range(s), cfg.n)


@dataclass(frozen=True)
class Discrepancy:
    under: int
    over: int

    @property
    def exact(self) -> bool:
        return self.under == 0 and self.over == 0


def classify(s_hat: FeatureSet, s_true: FeatureSet) -> Discrepancy:
    return Discrepancy(under=len(s_true - s_hat), over=len(s_hat - s_true))


@dataclass
class DiscrepancyTally:
    exact: int = 0
    under1: int = 0
    under2plus: int = 0
    over1: int = 0
    over2plus: int = 0
    failures: int = 0

    def add(self, d: Discrepancy) -> None:
        if d.exact:
            self.exact += 1
        if d.under == 1:
            self.under1 += 1
        elif d.under >= 2:
            self.under2plus += 1
        if d.over == 1:
            self.over1 += 1
        elif d.over >= 2:
            self.over2plus += 1

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


@dataclass
class TrialRecord:
    trial: int
    s_true: list[int]
    s_hat: list[int] | None
    under: int | None
    over: int | None
    error: str | None = None

    def to_dict(self) -> dict:
        d = {"trial": self.trial, "s_true": self.s_true, "s_hat": self.s_hat,
             "under": self.under, "over": self.over}
        if self.error is not None:
            d["error"] = self.error
        return d


@dataclass
class StudyResult:
    config: SimConfig
    tally: DiscrepancyTally
    per_trial: list[TrialRecord]

    @property
    def exact_rate(self) -> float:
        return self.tally.exact / self.config.trials

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "tally": self.tally.as_dict(),
            "per_trial": [r.to_dict() for r in self.per_trial],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        """Summary with one row per discrepancy category."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true_size", "discrepancy", "count", "rate"])
        for cat in CATEGORIES:
            count = getattr(self.tally, cat)
            w.writerow([self.config.true_size, CATEGORY_LABELS[cat], count,
                        f"{count / self.config.trials:.4f}"])
        return buf.getvalue()


def _rss_table(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """rss and coefficient count for every subset of candidates."""
    ev = PayoffEvaluator(data, PayoffSpec(PayoffKind.R2))
    out = [ev.rss(m) for m in range(1 << data.n)]
    return np.array([r for r, _ in out]), np.array([k for _, k in out])


def _partial_f_pvalue(rss_small: float, rss_big: float, df_resid: int) -> float:
    if df_resid <= 0:
        return 1.0
    if rss_big <= 0:
        return 0.0
    f = max(rss_small - rss_big, 0.0) / (rss_big / df_resid)
    return float(stats.f.sf(f, 1, df_resid))


def stepwise_baseline(data: Dataset, p_enter: float = 0.05, p_remove: float = 0.10) -> FeatureSet:
    """Classic forward-backward stepwise regression driven by partial F-test p-values."""
    if not 0.0 < p_enter <= p_remove < 1.0:
        raise ValueError("need 0 < p_enter <= p_remove < 1")
    ev = PayoffEvaluator(data, PayoffSpec(PayoffKind.R2))
    cache: dict[int, tuple[float, int]] = {}

    def fit(bits: int) -> tuple[float, int]:
        if bits not in cache:
            cache[bits] = ev.rss(bits)
        return cache[bits]

    current = 0
    visited = {current}
    while True:
        changed = False
        rss0, _ = fit(current)
        best_p, best_i = 1.0, None
        for i in range(data.n):
            if current >> i & 1:
                continue
            rss1, k1 = fit(current | 1 << i)
            p = _partial_f_pvalue(rss0, rss1, data.t_obs - k1)
            if p < best_p:
                best_p, best_i = p, i
        if best_i is not None and best_p < p_enter and (current | 1 << best_i) not in visited:
            current |= 1 << best_i
            visited.add(current)
            changed = True
        rss_full, k_full = fit(current)
        worst_p, worst_i = 0.0, None
        for i in range(data.n):
            if not current >> i & 1:
                continue
            rss_drop, _ = fit(current & ~(1 << i))
            p = _partial_f_pvalue(rss_drop, rss_full, data.t_obs - k_full)
            if p > worst_p:
                worst_p, worst_i = p, i
        if worst_i is not None and worst_p > p_remove and (current & ~(1 << worst_i)) not in visited:
            current &= ~(1 << worst_i)
            visited.add(current)
            changed = True
        if not changed:
            return FeatureSet(current, data.n)


def _criterion(rss: np.ndarray, k: np.ndarray, t_obs: int, tss: float, which: str) -> np.ndarray:
    floor = RSS_FLOOR_REL * tss if tss > 0 else np.finfo(float).tiny
    fit = t_obs * np.log(np.maximum(rss, floor) / t_obs)
    penalty = 2.0 * k if which == "aic" else k * math.log(t_obs)
    return fit + penalty


def best_subset_ic(data: Dataset, criterion: str = "bic") -> FeatureSet:
    """Exhaustive search for the subset minimizing AIC or BIC.

    Ties go to the smaller subset, then to the lower bitmask.
    """
    criterion = criterion.lower()
    if criterion not in ("aic", "bic"):
        raise ValueError(f"criterion must be 'aic' or 'bic', got {criterion!r}")
    if data.n > 20:
        raise ValueError(f"best-subset search limited to n <= 20, got {data.n}")
    if data.n > 16:
        warnings.warn(f"best-subset search over 2^{data.n} subsets is slow", stacklevel=2)
    rss, k = _rss_table(data)
    tss = float(np.sum((data.y - data.y.mean()) ** 2))
    ic = _criterion(rss, k, data.t_obs, tss, criterion)
    sizes = np.bitwise_count(np.arange(1 << data.n, dtype=np.uint64)).astype(np.int64)
    # lexsort: last key is primary
    order = np.lexsort((np.arange(1 << data.n), sizes, ic))
    return FeatureSet(int(order[0]), data.n)


Method = Callable[[Dataset, SimConfig, int, FeatureSet], FeatureSet]
METHODS: dict[str, Method] = {}


def register_method(name: str) -> Callable[[Method], Method]:
    """Register a selector ``f(data, cfg, trial, s_true) -> FeatureSet`` for run_study."""
    def deco(fn: Method) -> Method:
        METHODS[name] = fn
        return fn
    return deco


@register_method("lambda")
def _lambda_method(data: Dataset, cfg: SimConfig, trial: int, s_true: FeatureSet) -> FeatureSet:
    spec = cfg.payoff
    if spec.kind is PayoffKind.RMSE:
        spec = replace(spec, split_seed=_trial_seed(cfg.seed, trial, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ocfg = OrderingSampleConfig(cfg.gamma, _trial_seed(cfg.seed, trial, 1), cfg.alpha)
    return sequential_select(data, spec, ocfg).accepted


@register_method("stepwise")
def _stepwise_method(data, cfg, trial, s_true):
    return stepwise_baseline(data, cfg.p_enter, cfg.p_remove)


@register_method("aic")
def _aic_method(data, cfg, trial, s_true):
    return best_subset_ic(data, "aic")


@register_method("bic")
def _bic_method(data, cfg, trial, s_true):
    return best_subset_ic(data, "bic")


@register_method("oracle")
def _oracle_method(data, cfg, trial, s_true):
    return s_true


def _run_trial(cfg: SimConfig, method: Method, trial: int) -> TrialRecord:
    data, s_true = generate_dataset(cfg, trial)
    try:
        s_hat = method(data, cfg, trial, s_true)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return TrialRecord(trial, list(s_true), None, None, None, error=f"{type(exc).__name__}: {exc}")
    d = classify(s_hat, s_true)
    return TrialRecord(trial, list(s_true), list(s_hat), d.under, d.over)


def run_study(cfg: SimConfig, *, threads: int = 1,
              progress: Callable[[int], None] | None = None) -> StudyResult:
    """Run ``cfg.trials`` independent trials and tally their discrepancies.

    Trial ``k`` draws its data from stream ``(seed, k)``, so the datasets are
    the same for every method and the result does not depend on ``threads``.
    Trials whose method raises are counted under ``failures``.
    """
    if cfg.method not in METHODS:
        raise ValueError(f"unknown method {cfg.method!r}; choose from {sorted(METHODS)}")
    method = METHODS[cfg.method]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda k: _run_trial(cfg, method, k), range(cfg.trials)))
    else:
        records = []
        for k in range(cfg.trials):
            records.append(_run_trial(cfg, method, k))
            if progress is not None:
                progress(k)
    tally = DiscrepancyTally()
    for rec in records:
        if rec.error is not None:
            tally.failures += 1
        else:
            tally.add(Discrepancy(rec.under, rec.over))
    return StudyResult(cfg, tally, records)
