import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdselect.game_core import FeatureSet
from mdselect.linmodel import Dataset, PayoffSpec, payoff
from mdselect.simlab import (
    METHODS,
    Discrepancy,
    DiscrepancyTally,
    SimConfig,
    best_subset_ic,
    classify,
    generate_dataset,
    register_method,
    run_study,
    stepwise_baseline,
)


def fs(idx, n=6):
    return FeatureSet.from_indices(idx, n)


def quiet(y, X):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Dataset(y, X)


def enumerate_ic(data, criterion):
    """Independent oracle: plain lstsq over itertools.combinations."""
    T = data.t_obs
    tss = float(np.sum((data.y - data.y.mean()) ** 2))
    best = None
    for size in range(data.n + 1):
        for cols in itertools.combinations(range(data.n), size):
            A = np.column_stack([np.ones(T), data.X[:, list(cols)]])
            coef, *_ = np.linalg.lstsq(A, data.y, rcond=None)
            r = data.y - A @ coef
            rss = max(float(r @ r), 1e-12 * tss)
            k = np.linalg.matrix_rank(A)
            pen = 2 * k if criterion == "aic" else k * math.log(T)
            val = T * math.log(rss / T) + pen
            if best is None or val < best[0] - 1e-9:
                best = (val, cols)
    return set(best[1])


# --- classification -----------------------------------------------------------

@pytest.mark.parametrize("s_hat,s_true,under,over", [
    ([0, 1], [0, 1], 0, 0),
    ([0], [0, 1], 1, 0),
    ([1, 2, 3], [0, 1], 1, 2),
    ([], [0, 1, 2], 3, 0),
])
def test_classify(s_hat, s_true, under, over):
    d = classify(fs(s_hat), fs(s_true))
    assert (d.under, d.over) == (under, over)
    assert d.exact == (under == 0 and over == 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 63), st.integers(0, 63)), min_size=1, max_size=40))
def test_tally_conservation(pairs):
    tally = DiscrepancyTally()
    wrong = 0
    for a, b in pairs:
        d = classify(FeatureSet(a, 6), FeatureSet(b, 6))
        tally.add(d)
        wrong += not d.exact
    assert tally.exact + wrong == len(pairs)
    under = sum(len(FeatureSet(b, 6) - FeatureSet(a, 6)) > 0 for a, b in pairs)
    assert tally.under1 + tally.under2plus == under


def test_trial_can_hit_under_and_over_rows():
    tally = DiscrepancyTally()
    tally.add(Discrepancy(1, 1))
    assert tally.as_dict() == dict(exact=0, under1=1, under2plus=0, over1=1, over2plus=0, failures=0)


# --- data generation ---------------------------------------------------------------

def test_dataset_is_deterministic():
    cfg = SimConfig(trials=1, seed=4)
    (a, sa), (b, sb) = generate_dataset(cfg, 3), generate_dataset(cfg, 3)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert sa == sb == FeatureSet.from_indices(range(4), 20)
    c, _ = generate_dataset(cfg, 4)
    assert not np.array_equal(a.y, c.y)


def test_columns_are_standardized():
    data, _ = generate_dataset(SimConfig(seed=1), 0)
    np.testing.assert_allclose(data.X.mean(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(data.X.std(axis=0), 1, atol=1e-10)


def test_mixing_induces_dependence():
    cfg = SimConfig(seed=2)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0, 0)))
    raw = rng.standard_normal((cfg.t_obs, cfg.n))  # same first draw as the generator
    data, _ = generate_dataset(cfg, 0)

    def mean_abs_offdiag(M):
        c = np.corrcoef(M, rowvar=False)
        return np.abs(c[~np.eye(len(c), dtype=bool)]).mean()

    assert mean_abs_offdiag(data.X) > mean_abs_offdiag(raw)


def test_noiseless_truth_gives_perfect_fit():
    for trial in range(5):
        cfg = SimConfig(seed=3, noise_r2_target=1.0)
        data, s_true = generate_dataset(cfg, trial)
        assert payoff(data, PayoffSpec("r2"), s_true) == pytest.approx(1.0, abs=1e-9)


def test_noise_level_tracks_target():
    cfg = SimConfig(seed=5, t_obs=2000, noise_r2_target=0.7)
    r2 = [payoff(generate_dataset(cfg, k)[0], PayoffSpec("r2"), (1 << 4) - 1) for k in range(10)]
    assert np.mean(r2) == pytest.approx(0.7, abs=0.03)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n=3, true_size=4)
    with pytest.raises(ValueError):
        SimConfig(trials=0)
    with pytest.raises(ValueError):
        SimConfig(p_enter=0.2, p_remove=0.1)


# --- baselines ---------------------------------------------------------------------

def test_stepwise_noise_bound():
    rng = np.random.default_rng(0)
    d = quiet(rng.standard_normal(100), rng.standard_normal((100, 10)))
    assert len(stepwise_baseline(d)) <= 10


def test_stepwise_strong_signal():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((80, 6))
    d = quiet(3 * X[:, 0] + 0.01 * rng.standard_normal(80), X)
    assert 0 in stepwise_baseline(d)


def test_stepwise_single_noise_candidate():
    empty = 0
    runs = 400
    for s in range(runs):
        rng = np.random.default_rng(s)
        d = quiet(rng.standard_normal(50), rng.standard_normal((50, 1)))
        empty += len(stepwise_baseline(d, 0.05, 0.10)) == 0
    # binomial(400, 0.95): 3 standard errors is about 13
    assert abs(empty - 0.95 * runs) <= 14


@pytest.mark.parametrize("criterion", ["aic", "bic"])
@pytest.mark.parametrize("seed", range(4))
def test_best_subset_matches_reenumeration(criterion, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 10))
    y = X[:, :3] @ [1.0, -0.7, 0.4] + rng.standard_normal(40)
    d = quiet(y, X)
    assert set(best_subset_ic(d, criterion).indices()) == enumerate_ic(d, criterion)


def test_bic_rejects_pure_noise_at_large_sample():
    empty = 0
    for s in range(20):
        rng = np.random.default_rng(s)
        d = quiet(1.0 + rng.standard_normal(500), rng.standard_normal((500, 6)))
        empty += len(best_subset_ic(d, "bic")) == 0
    assert empty >= 18


def test_zero_noise_tie_break_picks_truth():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((30, 6))
    d = quiet(1 + X[:, 0] - 2 * X[:, 1], X)
    assert best_subset_ic(d, "bic").indices() == (0, 1)
    assert best_subset_ic(d, "aic").indices() == (0, 1)


def test_best_subset_rejects_bad_input():
    d = quiet(np.arange(30.0), np.random.default_rng(0).standard_normal((30, 3)))
    with pytest.raises(ValueError):
        best_subset_ic(d, "hqic")


# --- studies -----------------------------------------------------------------------

def test_oracle_study_is_exact():
    res = run_study(SimConfig(trials=1, method="oracle"))
    assert res.tally.as_dict() == dict(exact=1, under1=0, under2plus=0, over1=0, over2plus=0, failures=0)


def test_study_reproducible_and_thread_invariant():
    cfg = SimConfig(n=8, true_size=2, trials=6, seed=3, method="lambda")
    a = run_study(cfg).to_json()
    assert run_study(cfg).to_json() == a
    assert run_study(cfg, threads=4).to_json() == a


def test_study_conservation_and_csv():
    res = run_study(SimConfig(n=8, true_size=3, trials=8, seed=1, method="stepwise"))
    t = res.tally
    wrong = sum(1 for r in res.per_trial if r.error is None and (r.under or r.over))
    assert t.exact + wrong + t.failures == 8
    rows = res.to_csv().strip().splitlines()
    assert rows[0] == "true_size,discrepancy,count,rate" and len(rows) == 6


def test_failures_are_counted():
    @register_method("boom")
    def boom(data, cfg, trial, s_true):
        if trial % 2:
            raise ArithmeticError("bad trial")
        return s_true

    try:
        res = run_study(SimConfig(n=5, true_size=2, trials=4, method="boom"))
    finally:
        METHODS.pop("boom")
    assert res.tally.failures == 2 and res.tally.exact == 2
    assert "bad trial" in res.per_trial[1].error


def test_true_sets_do_not_depend_on_method():
    base = dict(n=8, true_size=3, trials=4, seed=9)
    a = run_study(SimConfig(method="lambda", payoff=PayoffSpec("r2"), **base))
    b = run_study(SimConfig(method="lambda", payoff=PayoffSpec("bic"), **base))
    assert [r.s_true for r in a.per_trial] == [r.s_true for r in b.per_trial]


def test_unknown_method():
    with pytest.raises(ValueError):
        run_study(SimConfig(trials=1, method="lasso"))
