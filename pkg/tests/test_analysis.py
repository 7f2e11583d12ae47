import math
import warnings

import numpy as np
import pytest

from ratiocross import analysis as an
from ratiocross import analytic
from ratiocross.analytic import CrossoverParam
from ratiocross.ensembles import GaussianCrossoverConfig, derive_seed, ensemble_levels
from ratiocross.spectra import RatioSample, histogram, pooled_ratios, rtilde_of

# D(GOE, GUE) on the default grids, densities taken at bin centres
KLD_R_GRID = 0.11049592647974799
KLD_RTILDE_GRID = 0.11371274140233985


def analytic_sample(lam, n, seed):
    return RatioSample(an.RatioSampler(CrossoverParam.from_lambda(lam)).sample(n, np.random.default_rng(seed)))


# ---------------------------------------------------------------- means


def test_mean_of_sample():
    assert an.mean_of_sample(RatioSample([1.0, 1.0, 1.0])) == (1.0, 0.0)
    m, se = an.mean_of_sample([1.0, 3.0])
    assert m == 2.0 and se == pytest.approx(1.0)
    with pytest.raises(ValueError):
        an.mean_of_sample([])


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_pooled_3x3_means(alpha):
    n = 100_000
    rs = pooled_ratios(ensemble_levels(GaussianCrossoverConfig(3, CrossoverParam(alpha), seed=8, count=n)))
    # <r> has infinite variance at the GOE end; r-tilde is bounded, so test that
    m, se = an.mean_of_sample(rtilde_of(rs))
    assert abs(m - analytic.mean_rtilde(alpha)) < 3 * se


# ---------------------------------------------------------------- KLD


def test_kld_identity_and_symmetry():
    rng = np.random.default_rng(0)
    p, q = rng.random(50), rng.random(50)
    assert an.kld_symmetric(p, p, 0.1) == 0.0
    assert an.kld_symmetric(p, q, 0.1) == an.kld_symmetric(q, p, 0.1)
    assert an.kld_symmetric(p, q, 0.1) > 0


def test_kld_shape_mismatch():
    with pytest.raises(ValueError):
        an.kld_symmetric(np.ones(3), np.ones(4), 0.1)


def test_kld_goe_gue_reference():
    h = histogram(RatioSample([1.0]))
    d = an.kld_symmetric(
        an.reference_density("r", "goe")(h.centers), an.reference_density("r", "gue")(h.centers), h.bin_width
    )
    assert d == pytest.approx(KLD_R_GRID, rel=1e-12)
    assert abs(d - 0.1091) <= 0.003
    ht = histogram(RatioSample([0.5], "rtilde"))
    dt = an.kld_symmetric(
        an.reference_density("rtilde", "goe")(ht.centers),
        an.reference_density("rtilde", "gue")(ht.centers),
        ht.bin_width,
    )
    assert dt == pytest.approx(KLD_RTILDE_GRID, rel=1e-12)
    assert abs(dt - 0.1137) <= 0.003


def test_kld_report_orders_classes():
    rs = analytic_sample(0.0, 200_000, 1)
    k = an.kld_report(rs)
    assert k.d_goe < 0.02 < k.d_gue
    assert k.d_goe_tilde < 0.02 < k.d_gue_tilde
    assert k.grid["r"]["bin_width"] == 0.06
    with pytest.raises(ValueError):
        an.kld_report(rtilde_of(rs))


def test_reference_density_unknown():
    with pytest.raises(ValueError):
        an.reference_density("r", "cue")


# ---------------------------------------------------------------- fitting


def test_mle_recovers_lambda_1e5():
    fit = an.fit_lambda_eff(analytic_sample(0.3, 100_000, 10), "mle")
    assert abs(fit.lambda_eff - 0.3) <= 0.02
    assert fit.converged and fit.method == "mle" and fit.n_samples == 100_000
    assert fit.stderr is not None and fit.stderr < 0.01
    assert fit.alpha_eff == pytest.approx(0.3 / math.hypot(1, 0.3), abs=0.02)


# the MLE spread grows fast with lambda (about 0.017 at 0.6 for 1e5 draws),
# so the three-point check uses 1e6 draws to make +-0.02 a >3 sigma band
@pytest.mark.parametrize("lam0", [0.1, 0.3, 0.6])
def test_mle_recovers_lambda(lam0):
    fit = an.fit_lambda_eff(analytic_sample(lam0, 1_000_000, 10), "mle")
    assert abs(fit.lambda_eff - lam0) <= 0.02
    assert 3 * fit.stderr < 0.02


def test_lsq_recovers_lambda():
    fit = an.fit_lambda_eff(analytic_sample(0.3, 200_000, 11), "histogram-lsq")
    assert abs(fit.lambda_eff - 0.3) <= 0.03
    assert fit.stderr is None


def test_fit_3x3_goe_end():
    n = 50_000
    rs = pooled_ratios(ensemble_levels(GaussianCrossoverConfig(3, CrossoverParam(0.0), seed=4, count=n)))
    assert an.fit_lambda_eff(rs).lambda_eff <= 0.02


def test_fit_monotone():
    fits = [an.fit_lambda_eff(analytic_sample(l, 50_000, 20 + k)) for k, l in enumerate([0.1, 0.2, 0.4, 0.8])]
    for a, b in zip(fits, fits[1:]):
        assert b.lambda_eff > a.lambda_eff - a.stderr


def test_fit_rejects():
    with pytest.raises(ValueError):
        an.fit_lambda_eff(RatioSample([]))
    with pytest.raises(ValueError):
        an.fit_lambda_eff(RatioSample([0.5], "rtilde"))
    with pytest.raises(ValueError):
        an.fit_lambda_eff(analytic_sample(0.2, 2000, 0), "chi-by-eye")


def test_fit_warns_on_small_sample():
    with pytest.warns(RuntimeWarning):
        an.fit_lambda_eff(analytic_sample(0.2, 200, 0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        an.fit_lambda_eff(analytic_sample(0.2, 2000, 0))


def test_minimize_lambda_quadratic():
    lam, val, ok, _ = an.minimize_lambda(lambda l: (l - 3.7) ** 2)
    assert ok and lam == pytest.approx(3.7, abs=1e-3) and val < 1e-6
    # a minimum on the boundary is found exactly
    assert an.minimize_lambda(lambda l: l)[0] == 0.0


def test_sampler_normalization():
    s = an.RatioSampler(0.5)
    assert s.mass == pytest.approx(1.0, abs=1e-6)
    x = s.sample(100_000, np.random.default_rng(0))
    assert np.all(x >= 0)
    assert np.mean(x < 1) == pytest.approx(0.5, abs=0.005)


# ---------------------------------------------------------------- sweeps


def test_scaled_param():
    assert an.scaled_param("gauss-crossover", 100, 0.03) == pytest.approx(0.3)
    assert an.scaled_param("qkr", 25, 0.2) == pytest.approx(25.0)
    for e in ("gauss-crossover", "wishart-crossover", "qkr"):
        assert an.raw_from_scaled(e, 49, an.scaled_param(e, 49, 0.123)) == pytest.approx(0.123)


def test_sweep_spec_grid_and_validation():
    spec = an.SweepSpec.from_dict(
        {"ensemble": "gauss-crossover", "grid": {"N": [100, 400], "scaled": [0.0, 1.0]}, "seed": 3}
    )
    assert spec.resolved_points() == [(100, 0.0), (100, 0.1), (400, 0.0), (400, 0.05)]
    with pytest.raises(ValueError):
        an.SweepSpec("gauss", [{"N": 10, "raw_param": 0.1}])
    with pytest.raises(ValueError):
        an.SweepSpec("qkr", [])
    with pytest.raises(ValueError):
        an.SweepSpec("qkr", [{"N": 11}])
    with pytest.raises(ValueError):
        an.SweepSpec.from_dict({"ensemble": "qkr", "points": [{"N": 11, "raw_param": 0}], "colour": 1})


def test_realizations_for():
    assert an.realizations_for(1000, 3, "line") == 1000
    assert an.realizations_for(1000, 12, "line") == 100
    assert an.realizations_for(1000, 11, "circle") == 91
    assert an.realizations_for(1000, 100, "line", "bulk:12") == 100


def test_crossover_report_goe_end():
    spec = an.SweepSpec("gauss-crossover", [{"N": 100, "scaled_param": 0.0}], target_samples=150_000, seed=3)
    (pt,) = an.crossover_report(spec)
    assert pt.lambda_eff <= 0.02
    assert pt.n_samples >= 150_000
    assert pt.kld.d_goe < pt.kld.d_gue
    d = pt.to_dict()
    assert list(d) == an.REPORT_FIELDS
    assert d["seed"] == derive_seed(3, 0)


def test_crossover_report_deterministic():
    spec = an.SweepSpec("qkr", [{"N": 11, "raw_param": 0.5}], target_samples=3000, seed=1)
    a = [p.to_dict() for p in an.crossover_report(spec)]
    b = [p.to_dict() for p in an.crossover_report(spec)]
    assert a == b


def test_regression_slope():
    slope, icpt, r2 = an.regression_slope([0, 1, 2, 3], [1, 3, 5, 7])
    assert slope == pytest.approx(2) and icpt == pytest.approx(1) and r2 == pytest.approx(1)
