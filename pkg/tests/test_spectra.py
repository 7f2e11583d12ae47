import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ratiocross import spectra as sp
from ratiocross.analytic import CrossoverParam
from ratiocross.ensembles import GaussianCrossoverConfig, Spectrum, ensemble_levels
from ratiocross.spectra import RatioSample

sorted_levels = st.tuples(
    st.floats(-1e3, 1e3), st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=40)
).map(lambda t: [t[0]] + list(t[0] + np.cumsum(t[1])))


def test_spacings_and_ratios_line():
    s = Spectrum([1.0, 2.0, 4.0])
    assert np.array_equal(sp.spacings(s), [1.0, 2.0])
    assert np.array_equal(sp.ratios(s).values, [2.0])
    assert np.array_equal(sp.ratios(Spectrum([0.0, 1.0, 3.0])).values, [2.0])
    assert np.array_equal(sp.ratios(Spectrum([0.0, 1.0, 2.0, 4.0])).values, [1.0, 2.0])


def test_circle_wraps():
    s = Spectrum([-math.pi / 2, 0.0, math.pi / 2], "circle")
    assert np.allclose(sp.spacings(s), [math.pi / 2, math.pi / 2, math.pi])
    r = sp.ratios(s).values
    assert len(r) == 3
    assert np.allclose(np.sort(r), [0.5, 1.0, 2.0])
    assert np.array_equal(sp.ratios(s, wrap=False).values, [1.0])


@given(sorted_levels)
def test_reversal_inverts_ratios(levels):
    fwd = sp.ratios(Spectrum(levels)).values
    rev = sp.ratios(Spectrum([-x for x in reversed(levels)])).values
    assert np.allclose(fwd * rev[::-1], 1.0, rtol=1e-9)


@given(sorted_levels)
def test_rtilde_is_min_of_r_and_inverse(levels):
    rs = sp.ratios(Spectrum(levels))
    rt = sp.rtilde_of(rs)
    assert rt.kind == "rtilde"
    assert np.all((rt.values >= 0) & (rt.values <= 1))
    assert np.allclose(rt.values, np.minimum(rs.values, 1 / rs.values))


def test_degenerate_levels_tallied():
    rs = sp.ratios(Spectrum([0.0, 1.0, 1.0, 2.0, 3.0]))
    assert rs.degenerate_pairs == 2
    assert np.array_equal(rs.values, [1.0])


def test_too_short():
    with pytest.raises(ValueError):
        sp.ratios(Spectrum([0.0, 1.0]))
    with pytest.raises(ValueError):
        sp.spacings(Spectrum([0.0]))


def test_ratio_sample_validation():
    with pytest.raises(ValueError):
        RatioSample([-1.0])
    with pytest.raises(ValueError):
        RatioSample([1.5], "rtilde")
    with pytest.raises(ValueError):
        RatioSample([1.0], "q")
    with pytest.raises(ValueError):
        sp.rtilde_of(RatioSample([0.5], "rtilde"))
    pooled = RatioSample.pool([RatioSample([1.0], degenerate_pairs=1), RatioSample([2.0, 3.0])])
    assert len(pooled) == 3 and pooled.degenerate_pairs == 1
    with pytest.raises(ValueError):
        RatioSample.pool([RatioSample([0.5]), RatioSample([0.5], "rtilde")])


# ---------------------------------------------------------------- slicing


def test_slices():
    s = Spectrum([1.0, 2.0, 3.0, 4.0])
    (bulk,) = sp.slice_spectrum(s, "bulk:2")
    assert np.array_equal(bulk.levels, [2.0, 3.0])
    lo, hi = sp.slice_spectrum(s, "edges:2")
    assert np.array_equal(lo.levels, [1.0]) and np.array_equal(hi.levels, [4.0])
    assert sp.slice_spectrum(s, "full") == [s]
    assert sp.slice_spectrum(s, ("bulk", 4))[0].levels.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_circle_slices_do_not_wrap():
    s = Spectrum(np.linspace(-3.0, 3.0, 9), "circle")
    (bulk,) = sp.slice_spectrum(s, "bulk:5")
    assert bulk.kind == "line"
    assert len(sp.ratios(bulk).values) == 3


@pytest.mark.parametrize("mode", ["edges:3", "bulk:0", "bulk:x", "middle:2", "bulk:9"])
def test_bad_slices(mode):
    with pytest.raises(ValueError):
        sp.slice_spectrum(Spectrum(np.arange(8.0)), mode)


def test_pooled_ratios_match_per_spectrum():
    rng = np.random.default_rng(0)
    levels = np.sort(rng.random((5, 12)), axis=1)
    for mode in ("full", "bulk:6", "edges:8"):
        pooled = sp.pooled_ratios(levels, "line", mode)
        parts = [
            sp.ratios(piece).values
            for row in levels
            for piece in sp.slice_spectrum(Spectrum(row), mode)
        ]
        # row-wise pooling orders the edge slices differently; compare as multisets
        assert np.allclose(np.sort(pooled.values), np.sort(np.concatenate(parts)))
        assert len(pooled) == 5 * sp.ratios_per_spectrum(12, "line", mode)


def test_pooled_ratios_circle_counts():
    levels = np.sort(np.random.default_rng(1).uniform(-math.pi, math.pi, (4, 9)), axis=1)
    assert len(sp.pooled_ratios(levels, "circle")) == 36
    assert len(sp.pooled_ratios(levels, "circle", wrap=False)) == 28
    assert sp.ratios_per_spectrum(9, "circle") == 9
    with pytest.raises(ValueError):
        sp.pooled_ratios(levels, "line", "edges:4")


def test_pooled_3x3_symmetry():
    # r and 1/r are equally likely, so P(r < 1) = 1/2
    n = 40_000
    cfg = GaussianCrossoverConfig(3, CrossoverParam(0.5), seed=2, count=n)
    r = sp.pooled_ratios(ensemble_levels(cfg)).values
    frac = np.mean(r < 1)
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / n)


# ---------------------------------------------------------------- histograms


def test_histogram_single_sample():
    h = sp.histogram(np.array([0.03]))
    assert h.densities[0] == pytest.approx(1 / 0.06)
    assert h.densities[1:].sum() == 0
    assert h.total == 1 and h.out_of_domain == 0


def test_histogram_defaults():
    h = sp.histogram(RatioSample([0.5]))
    assert h.domain == (0.0, 30.0) and h.bin_width == 0.06 and len(h.counts) == 500
    ht = sp.histogram(RatioSample([0.5], "rtilde"))
    assert ht.domain == (0.0, 1.0) and ht.bin_width == 0.002 and len(ht.counts) == 500


def test_histogram_uniform_and_mass():
    x = np.random.default_rng(3).random(200_000)
    h = sp.histogram(x, (0.0, 1.0), 0.05)
    assert np.allclose(h.densities, 1.0, atol=0.03)
    assert h.densities.sum() * h.bin_width == pytest.approx(1.0)
    h2 = sp.histogram(np.concatenate([x, [5.0, 7.0]]), (0.0, 1.0), 0.05)
    assert h2.out_of_domain == 2
    assert h2.in_domain_fraction == pytest.approx(200_000 / 200_002)


def test_histogram_rejects():
    with pytest.raises(ValueError):
        sp.histogram(np.array([]))
    with pytest.raises(ValueError):
        sp.histogram(np.array([1.0]), (0.0, 1.0), 0.3)
    with pytest.raises(ValueError):
        sp.histogram(np.array([1.0]), (1.0, 0.0), 0.1)
    with pytest.raises(ValueError):
        sp.histogram(np.array([1.0]), (0.0, 1.0), 0.0)
