import numpy as np
import pytest

from mospca.baselines import pca, rrr
from mospca.data import center
from mospca.grassmann import chordal_distance, orthonormality_error, random_point
from mospca.models import ModelParams, fit_multinomial, nll, solve_beta_ls
from mospca.solvers import FitConfig, FitResult, fit, fit_alternating, fit_substitution

from conftest import classification_data, regression_data
from oracles import logistic_oracle, ols_fitted, top_right_singular

ALGS = ["alternating", "substitution"]


def assert_monotone(trace):
    for a, b in zip(trace, trace[1:]):
        assert b <= a + 1e-10 * abs(a)


@pytest.mark.parametrize("algorithm", ALGS)
def test_large_lambda_gives_pca(rng, algorithm):
    ds = regression_data(rng, n=40, p=8, q=1)
    res = fit(ds, FitConfig(algorithm=algorithm, r=2, lam=1e9))
    assert chordal_distance(res.params.L, top_right_singular(ds.X, 2)) <= 1e-3


@pytest.mark.parametrize("algorithm", ALGS)
def test_small_lambda_gives_rrr(rng, algorithm):
    ds = regression_data(rng, n=60, p=6, q=2)
    res = fit(ds, FitConfig(algorithm=algorithm, r=2, lam=1e-9))
    L_rrr, _ = rrr(ds.X, ds.Y, 2)
    assert chordal_distance(res.params.L, L_rrr) <= 1e-2


@pytest.mark.parametrize("algorithm", ALGS)
def test_full_rank_reproduces_ols(rng, algorithm):
    ds = regression_data(rng, n=30, p=4, q=2)
    res = fit(ds, FitConfig(algorithm=algorithm, r=4, lam=1.0))
    pred = res.predict(ds.raw_x()).values
    np.testing.assert_allclose(pred, ols_fitted(ds.X, ds.Y) + ds.column_means_y, atol=1e-6)


def test_full_rank_reproduces_logistic(rng):
    ds = classification_data(rng, n=60, p=3, q=3, scale=0.5)
    res = fit(ds, FitConfig(method="lrpca", r=3, lam=1.0))
    W, _ = logistic_oracle(ds.X, ds.Y)
    F = ds.X @ W
    P = np.exp(F - F.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(res.predict(ds.raw_x()).proba, P, atol=1e-6)


def test_zero_response_gives_pca(rng):
    X = rng.standard_normal((40, 6)) @ np.diag(np.linspace(3, 0.5, 6))
    ds = center(X, np.zeros(40), "regression")
    res = fit_substitution(ds, FitConfig(algorithm="substitution", r=2, lam=1.0))
    assert chordal_distance(res.params.L, top_right_singular(ds.X, 2)) <= 1e-6


@pytest.mark.parametrize("mode", ["cv", "mle"])
def test_algorithms_agree(rng, mode):
    ds = regression_data(rng, n=50, p=6, q=1, noise=0.3)
    a = fit_alternating(ds, FitConfig(algorithm="alternating", mode=mode, r=2, lam=0.5))
    b = fit_substitution(ds, FitConfig(algorithm="substitution", mode=mode, r=2, lam=0.5))
    assert a.nll_trace[-1] == pytest.approx(b.nll_trace[-1], rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("method,algorithm", [("lspca", "alternating"), ("lspca", "substitution"), ("lrpca", "alternating")])
@pytest.mark.parametrize("mode", ["cv", "mle"])
def test_monotone_trace_and_orthonormal_iterates(rng, method, algorithm, mode):
    ds = regression_data(rng, n=40, p=6, q=2) if method == "lspca" else classification_data(rng, n=60, p=6, q=3, scale=0.4)
    seen = []
    cfg = FitConfig(
        method=method, algorithm=algorithm, mode=mode, r=2, lam=0.3,
        callback=lambda k, L, b, v: seen.append(orthonormality_error(L)),
    )
    res = fit(ds, cfg)
    assert_monotone(res.nll_trace)
    assert max(seen) <= 1e-8
    np.testing.assert_allclose(res.Z, ds.X @ res.params.L, atol=1e-12)


def test_mle_mode_keeps_parameter_formulas(rng):
    ds = regression_data(rng, n=60, p=6, q=1, noise=0.3)
    res = fit(ds, FitConfig(mode="mle", r=2))
    p = res.params
    assert p.gamma == pytest.approx(1 - np.sqrt(p.sigma_x2 / (p.sigma_x2 + p.alpha)), abs=1e-12)
    assert p.lam == pytest.approx(p.sigma_y2 / p.sigma_x2, abs=1e-12)


def test_cv_mode_keeps_lambda_and_gamma(rng):
    ds = regression_data(rng)
    res = fit(ds, FitConfig(r=2, lam=0.7, gamma=1.0))
    assert res.params.lam == 0.7 and res.params.gamma == 1.0


def test_deterministic(rng):
    ds = classification_data(rng, n=50, p=5, q=3, scale=0.4)
    cfg = FitConfig(method="lrpca", mode="mle", r=2)
    a, b = fit(ds, cfg), fit(ds, cfg)
    np.testing.assert_array_equal(a.params.L, b.params.L)
    np.testing.assert_array_equal(a.params.beta, b.params.beta)
    assert a.nll_trace == b.nll_trace


def test_pca_initialization_beats_random_starts(rng):
    wins = 0
    for _ in range(20):
        ds = regression_data(rng, n=30, p=6, q=1)
        L0 = pca(ds.X, 2)
        base = nll(ModelParams(L0, solve_beta_ls(ds.X, ds.Y, L0), 1.0), ds)
        others = [
            nll(ModelParams(L, solve_beta_ls(ds.X, ds.Y, L), 1.0), ds)
            for L in (random_point(6, 2, rng) for _ in range(10))
        ]
        wins += base <= min(others)
    assert wins > 10


def test_config_validation(rng):
    reg = regression_data(rng, n=20, p=4, q=1)
    cls = classification_data(rng, n=20, p=4, q=2)
    with pytest.raises(ValueError):
        fit(cls, FitConfig(method="lrpca", algorithm="substitution"))
    with pytest.raises(ValueError):
        fit(reg, FitConfig(method="lrpca"))
    with pytest.raises(ValueError):
        fit(reg, FitConfig(mode="mle", r=4))
    with pytest.raises(ValueError):
        fit(reg, FitConfig(lam=0.0))
    with pytest.raises(ValueError):
        fit(reg, FitConfig(r=5))


def test_result_transform_uses_training_centering(rng):
    ds = regression_data(rng, n=30, p=5, q=1)
    res = fit(ds, FitConfig(r=2, lam=1.0))
    assert isinstance(res, FitResult)
    np.testing.assert_allclose(res.transform(ds.raw_x()), res.Z, atol=1e-12)


def test_logistic_separable_needs_reg(rng):
    Z = rng.standard_normal((30, 2))
    labels = (Z[:, 0] > 0).astype(int)
    Z[:, 0] += np.where(labels, 2.0, -2.0)
    W = fit_multinomial(Z, np.eye(2)[labels], reg=1.0)
    assert np.all(np.isfinite(W))


@pytest.mark.slow
def test_substitution_is_not_slower(rng):
    # soft benchmark; reported rather than enforced
    ds = regression_data(rng, n=200, p=50, q=1)
    alt = fit(ds, FitConfig(algorithm="alternating", r=5, lam=1.0, max_outer=1))
    sub = fit(ds, FitConfig(algorithm="substitution", r=5, lam=1.0, max_outer=1))
    print(f"one outer iteration: alternating {alt.wall_time:.3f}s, substitution {sub.wall_time:.3f}s")
