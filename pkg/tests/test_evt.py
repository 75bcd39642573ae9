import math

import numpy as np
import pytest
from scipy import optimize, stats

from roacert.errors import DegenerateDataError, HeavyTailError
from roacert.evt import (
    GevParams,
    GEVEstimator,
    bootstrap_upper_ci,
    endpoint,
    fit_gev_batch,
    fit_gev_mle,
    gev_cdf,
    gev_logpdf,
    gev_ppf,
    gev_sample,
    kolmogorov_sf,
    ks_statistic,
    ks_test,
)
from roacert.optim import nelder_mead_batch


def test_cdf_reversed_exponential():
    p = GevParams(-1.0, 0.0, 1.0)
    assert gev_cdf(p, 1.0) == 1.0
    assert gev_cdf(p, 0.0) == pytest.approx(math.exp(-1))
    assert gev_cdf(p, 5.0) == 1.0


def test_cdf_gumbel_mode():
    assert gev_cdf(GevParams(0.0, 0.0, 1.0), 0.0) == pytest.approx(0.36787944117144233)


@pytest.mark.parametrize("xi", [-1.0, -0.5, 0.0, 0.3])
def test_cdf_limits(xi):
    p = GevParams(xi, 0.0, 1.0)
    assert gev_cdf(p, -1e6) == pytest.approx(0.0, abs=1e-12)
    assert gev_cdf(p, 1e6) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("xi", [-0.8, -0.3, 0.0, 0.2])
def test_matches_scipy_genextreme(xi):
    # scipy's shape parameter is c = -xi
    p = GevParams(xi, 0.4, 1.7)
    y = np.linspace(-3, 3, 41)
    ref = stats.genextreme(-xi, loc=0.4, scale=1.7)
    np.testing.assert_allclose(gev_cdf(p, y), ref.cdf(y), atol=1e-12)
    ok = np.isfinite(ref.logpdf(y))
    np.testing.assert_allclose(gev_logpdf(p, y)[ok], ref.logpdf(y)[ok], rtol=1e-10)
    q = np.linspace(0.01, 0.99, 9)
    np.testing.assert_allclose(gev_ppf(p, q), ref.ppf(q), rtol=1e-10)


@pytest.mark.parametrize("xi", [-1.0, -0.5, -0.2])
def test_parameter_recovery(xi):
    y = gev_sample(GevParams(xi, 0.0, 1.0), 10_000, np.random.default_rng(5))
    shape, loc, scale = fit_gev_mle(y).params.as_tuple()
    assert abs(shape - xi) <= 0.06
    assert abs(loc) <= 0.05
    assert abs(scale - 1.0) <= 0.05


def test_uniform_block_maxima_are_weibull_class():
    y = np.random.default_rng(1).random((300, 1000)).max(axis=1)
    assert -1.15 <= fit_gev_mle(y).params.shape <= -0.85


def test_agrees_with_scipy_nelder_mead():
    y = gev_sample(GevParams(-0.3, 1.0, 0.5), 400, np.random.default_rng(2))
    ours = fit_gev_mle(y)

    def nll(t):
        try:
            v = -np.sum(gev_logpdf(GevParams(t[0], t[1], t[2]), y))
        except ValueError:
            return np.inf
        return v if np.isfinite(v) else np.inf

    ref = optimize.minimize(nll, ours.params.as_tuple(), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12})
    assert -ours.log_likelihood <= ref.fun + 1e-6
    np.testing.assert_allclose(ours.params.as_tuple(), ref.x, atol=1e-3)


def test_constant_data_is_degenerate():
    with pytest.raises(DegenerateDataError):
        fit_gev_mle(np.full(50, -2.0))


def test_too_few_samples():
    with pytest.raises(ValueError):
        fit_gev_mle(np.arange(5.0), min_samples=20)


def test_batch_fit_rows_are_independent():
    rng = np.random.default_rng(3)
    Y = gev_sample(GevParams(-0.4, 0.0, 1.0), (4, 200), rng)
    out = fit_gev_batch(Y)
    single = fit_gev_batch(Y[2:3])
    assert out["shape"][2] == pytest.approx(single["shape"][0], abs=1e-6)


@pytest.mark.parametrize("params, z", [((-0.5, 0.0, 1.0), 2.0), ((-1.0, 3.0, 2.0), 5.0)])
def test_endpoint_formula(params, z):
    assert endpoint(GevParams(*params)) == z


def test_endpoint_rejects_heavy_tail():
    with pytest.raises(HeavyTailError):
        endpoint(GevParams(0.1, 0.0, 1.0))


def test_kolmogorov_sf_matches_scipy():
    for lam in (0.3, 0.8, 1.0, 1.36, 2.5):
        assert kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-12)


def test_ks_single_point():
    p = GevParams(-0.5, 0.0, 1.0)
    F = gev_cdf(p, 0.3)
    assert ks_statistic([0.3], p) == pytest.approx(max(F, 1 - F))


def test_ks_statistic_matches_scipy():
    p = GevParams(-0.5, 0.0, 1.0)
    y = gev_sample(p, 200, np.random.default_rng(4))
    ref = stats.kstest(y, lambda t: gev_cdf(p, t))
    assert ks_statistic(y, p) == pytest.approx(ref.statistic, rel=1e-12)


def test_ks_passes_under_the_null():
    passed = 0
    for seed in range(100):
        y = gev_sample(GevParams(-0.5, 0.0, 1.0), 500, np.random.default_rng(seed))
        passed += ks_test(y, fit_gev_mle(y).params).p_value >= 0.01
    assert passed >= 98


def test_ks_rejects_gumbel_against_reversed_exponential():
    y = stats.gumbel_r.rvs(size=500, random_state=np.random.default_rng(8))
    assert ks_test(y, GevParams(-1.0, 0.0, 1.0)).p_value < 0.01


def test_ks_parametric_bootstrap_mode():
    y = gev_sample(GevParams(-0.5, 0.0, 1.0), 200, np.random.default_rng(9))
    r = ks_test(y, fit_gev_mle(y).params, mode="parametric_bootstrap", n_boot=100, rng=np.random.default_rng(0))
    assert r.mode == "parametric_bootstrap"
    assert 0 < r.p_value <= 1


def test_bootstrap_bound_covers_the_true_endpoint():
    # m-out-of-n resampling keeps the bound above the truth at the nominal rate
    p = GevParams(-0.5, 0.0, 1.0)
    covered = 0
    for seed in range(30):
        y = gev_sample(p, 200, np.random.default_rng(100 + seed))
        fit = fit_gev_mle(y)
        ci = bootstrap_upper_ci(y, 300, 0.05, np.random.default_rng(seed), fit=fit).ci_upper
        covered += ci >= endpoint(p)
        assert ci >= endpoint(fit.params) - 1e-9
    assert covered >= 26


def test_bootstrap_bound_is_tight_for_sharp_data():
    p = GevParams(-0.5, 0.0, 1.0)
    y = gev_sample(p, 5000, np.random.default_rng(12))
    fit = fit_gev_mle(y)
    z = endpoint(fit.params)
    ci = bootstrap_upper_ci(y, 200, 0.01, np.random.default_rng(0), fit=fit).ci_upper
    assert z <= ci <= z + 0.5 * fit.params.scale


def test_bootstrap_median_and_single_resample():
    y = gev_sample(GevParams(-0.5, 0.0, 1.0), 200, np.random.default_rng(13))
    r = bootstrap_upper_ci(y, 101, 0.5, np.random.default_rng(1))
    assert r.ci_upper == pytest.approx(np.median(r.endpoint_samples)) or r.n_failed > 0
    one = bootstrap_upper_ci(y, 1, 0.01, np.random.default_rng(2))
    assert one.endpoint_samples.size == 1
    assert one.ci_upper == one.endpoint_samples[0]


def test_bootstrap_flags_heavy_tails():
    y = stats.genpareto.rvs(0.5, size=200, random_state=np.random.default_rng(0))
    try:
        r = bootstrap_upper_ci(y, 100, 0.01, np.random.default_rng(0))
    except HeavyTailError:
        return
    assert r.unreliable


def test_bootstrap_is_reproducible():
    y = gev_sample(GevParams(-0.4, 0.0, 1.0), 100, np.random.default_rng(14))
    a = bootstrap_upper_ci(y, 200, 0.01, np.random.default_rng(7))
    b = bootstrap_upper_ci(y, 200, 0.01, np.random.default_rng(7))
    assert a.ci_upper == b.ci_upper


def test_estimator_api():
    y = gev_sample(GevParams(-0.5, 0.0, 1.0), 2000, np.random.default_rng(15))
    est = GEVEstimator().fit(y)
    assert est.shape_ < 0
    assert est.endpoint() == pytest.approx(est.location_ - est.scale_ / est.shape_)
    assert est.goodness_of_fit().passed
    assert est.get_params() == {"min_samples": 20, "ks_alpha": 0.05, "ks_mode": "asymptotic"}
    assert est.sample(10, random_state=0).shape == (10,)


def test_batched_nelder_mead_on_quadratics():
    centers = np.array([[1.0, -2.0], [0.5, 3.0], [-4.0, 0.0]])

    def f(X, rows):
        return np.sum((X - centers[rows]) ** 2, axis=1)

    res = nelder_mead_batch(f, np.zeros((3, 2)), xatol=1e-9, fatol=1e-14)
    assert res.converged.all()
    np.testing.assert_allclose(res.x, centers, atol=1e-6)
