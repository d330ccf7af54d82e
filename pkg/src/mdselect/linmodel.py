"""Least-squares fits and regression payoffs ``v(T)`` over a dataset.

Every fit regresses ``y`` on an intercept, the candidate columns in ``T`` and
the fixed block ``Z``. Columns are laid out as ``[1 | Z | X_T]`` with ``X_T`` in
ascending index order, and a column that is (numerically) a linear combination
of the columns before it is dropped. Dropping is what makes an exact
duplicate of an already-present column leave the residual sum of squares
bit-for-bit unchanged.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import lapack, solve_triangular

from mdselect.game_core import FeatureSet, GameOracle

__all__ = [
    "DataError",
    "PayoffDomainError",
    "Dataset",
    "FitResult",
    "PayoffKind",
    "PayoffSpec",
    "PayoffEvaluator",
    "RSS_FLOOR_REL",
    "DEPENDENT_TOL",
    "ols_fit",
    "payoff",
    "payoff_game",
    "read_csv",
]

# rss is floored at this fraction of tss wherever a log or a division by rss
# appears (BIC payoff, F payoff, information criteria). A perfect fit then
# scores a large finite constant instead of inf.
RSS_FLOOR_REL = 1e-12
# A column whose component orthogonal to the preceding columns is below this
# fraction of its norm is treated as linearly dependent and dropped.
DEPENDENT_TOL = 1e-9


class DataError(ValueError):
    """Malformed input data: non-finite values, bad shapes, unparsable CSV."""


class PayoffDomainError(ArithmeticError):
    """A payoff is undefined for this coalition (e.g. no residual degrees of freedom)."""


def _as_bits(coalition: int | FeatureSet) -> int:
    return coalition.bits if isinstance(coalition, FeatureSet) else int(coalition)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dependent variable, candidate features and fixed regressors.

    The intercept is implicit and always fitted.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None
    fixed_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        Z = np.empty((len(y), 0)) if self.Z is None else np.asarray(self.Z, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Z.ndim == 1:
            Z = Z[:, None]
        if y.ndim != 1 or X.ndim != 2 or Z.ndim != 2:
            raise DataError("y must be a vector and X, Z matrices")
        if X.shape[0] != len(y) or Z.shape[0] != len(y):
            raise DataError(f"row counts differ: y {len(y)}, X {X.shape[0]}, Z {Z.shape[0]}")
        if X.shape[1] < 1:
            raise DataError("at least one candidate feature is required")
        for name, arr in (("y", y), ("X", X), ("Z", Z)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite entries")
        names = self.feature_names
        if names is None:
            names = tuple(f"x{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
        fixed = self.fixed_names
        if fixed is None:
            fixed = tuple(f"z{j}" for j in range(Z.shape[1]))
        for attr, value in (("y", y), ("X", X), ("Z", Z)):
            value.setflags(write=False)
            object.__setattr__(self, attr, value)
        object.__setattr__(self, "feature_names", tuple(names))
        object.__setattr__(self, "fixed_names", tuple(fixed))
        if self.t_obs < self.n + self.q + 2:
            warnings.warn(
                f"{self.t_obs} observations for {self.n} candidates and {self.q} fixed "
                "regressors; some payoffs are undefined for large coalitions",
                stacklevel=2,
            )

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def t_obs(self) -> int:
        return len(self.y)

    def restrict(self, remaining: Sequence[int], fixed: Sequence[int] = ()) -> Dataset:
        """Dataset over candidates ``remaining`` with candidates ``fixed`` appended to Z."""
        remaining = list(remaining)
        fixed = list(fixed)
        Z = np.column_stack([self.Z, self.X[:, fixed]]) if fixed else self.Z
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return Dataset(
                self.y,
                self.X[:, remaining],
                Z,
                feature_names=tuple(self.feature_names[i] for i in remaining),
                fixed_names=self.fixed_names + tuple(self.feature_names[i] for i in fixed),
            )


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: np.ndarray  # intercept, X columns in T (ascending), Z columns
    residuals: np.ndarray
    rss: float
    tss: float
    k: int  # estimated coefficients after dropping dependent columns
    columns: tuple[int, ...] = field(default=())


class PayoffKind(str, enum.Enum):
    R2 = "r2"
    AR2 = "ar2"
    F = "f"
    BIC = "bic"
    RMSE = "rmse"


@dataclass(frozen=True)
class PayoffSpec:
    kind: PayoffKind = PayoffKind.AR2
    split_fraction: float = 0.8
    split_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PayoffKind(self.kind))
        if self.kind is PayoffKind.RMSE and not 0.0 < self.split_fraction < 1.0:
            raise ValueError(f"split_fraction must be in (0, 1), got {self.split_fraction}")


def _design(data: Dataset, bits: int) -> tuple[np.ndarray, tuple[int, ...]]:
    cols = tuple(i for i in range(data.n) if bits >> i & 1)
    if bits >> data.n:
        raise ValueError(f"coalition {bits:#x} has bits beyond the {data.n} candidates")
    A = np.column_stack([np.ones(data.t_obs), data.Z, data.X[:, list(cols)]])
    return A, cols


def _qr_r(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Square R factor of the Householder QR of ``[A | y]`` (zero-padded if short)."""
    m, p = A.shape
    M = np.empty((m, p + 1), order="F")
    M[:, :-1] = A
    M[:, -1] = y
    qr, _, _, info = lapack.dgeqrf(M, overwrite_a=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgeqrf failed with info={info}")
    R = np.zeros((p + 1, p + 1))
    rows = min(m, p + 1)
    R[:rows] = np.triu(qr[:rows])
    return R


def _independent_columns(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mask of columns independent of the ones before them, and R of ``[A[:, keep] | y]``.

    The last diagonal entry of R is the residual norm of the fit.
    """
    R = _qr_r(A, y)
    p = A.shape[1]
    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    diag = np.abs(np.diag(R)[:p])
    keep = diag > DEPENDENT_TOL * np.maximum(norms, np.finfo(float).tiny)
    if not keep.all():
        R = _qr_r(A[:, keep], y)
    return keep, R


def ols_fit(data: Dataset, coalition: int | FeatureSet) -> FitResult:
    """Least-squares fit of y on the intercept, ``X[:, T]`` and ``Z``.

    Coefficients are the minimum-norm solution over the full design; dependent
    columns simply share weight with the columns they duplicate.
    """
    bits = _as_bits(coalition)
    A, cols = _design(data, bits)
    coef, *_ = np.linalg.lstsq(A, data.y, rcond=None)
    # reorder to intercept, X_T, Z
    q = data.q
    coef = np.concatenate([coef[:1], coef[1 + q:], coef[1:1 + q]])
    fitted = np.column_stack([np.ones(data.t_obs), data.X[:, list(cols)], data.Z]) @ coef
    resid = data.y - fitted
    keep, _ = _independent_columns(A, data.y)
    tss = float(np.sum((data.y - data.y.mean()) ** 2))
    return FitResult(coef, resid, float(resid @ resid), tss, int(keep.sum()), cols)


class PayoffEvaluator:
    """``v(T)`` for one dataset and payoff choice; a pure function of ``T``.

    For the RMSE payoff the train/test split is drawn once here from
    ``spec.split_seed`` and reused for every coalition.
    """

    def __init__(self, data: Dataset, spec: PayoffSpec):
        self.data = data
        self.spec = spec
        y = data.y
        self.tss = float(np.sum((y - y.mean()) ** 2))
        self.rss_floor = RSS_FLOOR_REL * self.tss if self.tss > 0 else np.finfo(float).tiny
        if spec.kind is PayoffKind.RMSE:
            order = np.random.default_rng(spec.split_seed).permutation(data.t_obs)
            n_train = int(round(spec.split_fraction * data.t_obs))
            if not 1 <= n_train < data.t_obs:
                raise PayoffDomainError(f"split leaves no train or test rows ({n_train}/{data.t_obs})")
            self.train = np.sort(order[:n_train])
            self.test = np.sort(order[n_train:])

    def rss(self, coalition: int | FeatureSet) -> tuple[float, int]:
        """Residual sum of squares and coefficient count for coalition ``T``."""
        A, _ = _design(self.data, _as_bits(coalition))
        keep, R = _independent_columns(A, self.data.y)
        k = int(keep.sum())
        return float(R[k, k] ** 2), k

    def __call__(self, coalition: int | FeatureSet) -> float:
        kind = self.spec.kind
        if kind is PayoffKind.RMSE:
            return self._neg_rmse(_as_bits(coalition))
        rss, k = self.rss(coalition)
        t_obs = self.data.t_obs
        tss = self.tss
        if kind is PayoffKind.BIC:
            rss = max(rss, self.rss_floor)
            return -(t_obs * math.log(rss / t_obs) + k * math.log(t_obs))
        if tss <= 0:
            raise PayoffDomainError("y is constant; R-squared based payoffs are undefined")
        if kind is PayoffKind.R2:
            return 1.0 - rss / tss
        if t_obs <= k:
            raise PayoffDomainError(
                f"{k} coefficients leave no residual degrees of freedom with {t_obs} observations"
            )
        if kind is PayoffKind.AR2:
            return 1.0 - (rss / tss) * (t_obs - 1) / (t_obs - k)
        if k == 1:
            return 0.0
        rss = max(rss, self.rss_floor)
        return ((tss - rss) / (k - 1)) / (rss / (t_obs - k))

    def _neg_rmse(self, bits: int) -> float:
        A, _ = _design(self.data, bits)
        y = self.data.y
        keep, R = _independent_columns(A[self.train], y[self.train])
        k = int(keep.sum())
        if len(self.train) < k:
            raise PayoffDomainError(f"{k} coefficients but only {len(self.train)} training rows")
        coef = solve_triangular(R[:k, :k], R[:k, k])
        err = y[self.test] - A[self.test][:, keep] @ coef
        return -math.sqrt(float(err @ err) / len(self.test))


def payoff(data: Dataset, spec: PayoffSpec, coalition: int | FeatureSet) -> float:
    return PayoffEvaluator(data, spec)(coalition)


def payoff_game(data: Dataset, spec: PayoffSpec) -> GameOracle:
    """Memoized game whose players are the candidate columns of ``data``."""
    return GameOracle(data.n, PayoffEvaluator(data, spec))


def read_csv(path: str | Path, target: str) -> Dataset:
    """Load a dataset from a headed CSV.

    The ``target`` column is y, columns named ``fixed:<name>`` form Z, and the
    remaining columns are candidates in header order. Raises ``DataError`` on
    unparsable content and ``KeyError`` when the target column is missing.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if target not in header:
        raise KeyError(target)
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{r}: expected {len(header)} fields, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                values[r - 2, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}:{r}: column '{header[c]}' has non-numeric value {cell!r}") from None
    for c, name in enumerate(header):
        if not np.all(np.isfinite(values[:, c])):
            raise DataError(f"{path}: column '{name}' contains non-finite values")
    t = header.index(target)
    fixed = [c for c, h in enumerate(header) if h.startswith("fixed:") and c != t]
    cand = [c for c in range(len(header)) if c != t and c not in fixed]
    if not cand:
        raise DataError(f"{path}: no candidate feature columns besides '{target}'")
    return Dataset(
        values[:, t],
        values[:, cand],
        values[:, fixed] if fixed else None,
        feature_names=tuple(header[c] for c in cand),
        fixed_names=tuple(header[c][len("fixed:"):] for c in fixed),
    )
