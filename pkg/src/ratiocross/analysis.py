"""Fitting the effective crossover parameter, symmetrized KL divergences and sweeps."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from . import analytic
from .analytic import CrossoverParam
from .ensembles import (
    GaussianCrossoverConfig,
    QkrConfig,
    WishartCrossoverConfig,
    derive_seed,
    ensemble_levels,
)
from .spectra import (
    HistogramDensity,
    RatioSample,
    histogram,
    pooled_ratios,
    ratios_per_spectrum,
    rtilde_of,
)

log = logging.getLogger(__name__)

KLD_EPS = 1e-12
LAMBDA_MAX = 100.0
FIT_TOL = 1e-4
FIT_MAX_ITER = 200
MIN_FIT_SAMPLES = 1000
DEFAULT_TARGET_SAMPLES = 150_000

# log(lambda + _LOG_SHIFT) is the search coordinate for the coarse bracket
_LOG_SHIFT = 1e-3
_BRACKET_POINTS = 41


@dataclass
class FitResult:
    lambda_eff: float
    objective_value: float
    method: str
    n_samples: int
    converged: bool
    iterations: int = 0
    stderr: Optional[float] = None

    @property
    def alpha_eff(self) -> float:
        return CrossoverParam.from_lambda(self.lambda_eff).alpha


@dataclass
class KldResult:
    d_goe: float
    d_gue: float
    d_goe_tilde: float
    d_gue_tilde: float
    grid: dict = field(default_factory=dict)


@dataclass
class ScalingPoint:
    ensemble: str
    N: int
    raw_param: float
    scaled_param: float
    lambda_eff: float
    mean_r: float
    se_r: float
    mean_rtilde: float
    se_rtilde: float
    kld: KldResult
    n_samples: int
    seed: int
    config: dict = field(default_factory=dict)
    fit_converged: bool = True

    def to_dict(self) -> dict:
        return {
            "ensemble": self.ensemble,
            "N": self.N,
            "raw_param": self.raw_param,
            "scaled_param": self.scaled_param,
            "lambda_eff": self.lambda_eff,
            "mean_r": self.mean_r,
            "se_r": self.se_r,
            "mean_rtilde": self.mean_rtilde,
            "se_rtilde": self.se_rtilde,
            "d_goe": self.kld.d_goe,
            "d_gue": self.kld.d_gue,
            "d_goe_tilde": self.kld.d_goe_tilde,
            "d_gue_tilde": self.kld.d_gue_tilde,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


REPORT_FIELDS = [
    "ensemble", "N", "raw_param", "scaled_param", "lambda_eff", "mean_r", "se_r",
    "mean_rtilde", "se_rtilde", "d_goe", "d_gue", "d_goe_tilde", "d_gue_tilde",
    "n_samples", "seed",
]


# ---------------------------------------------------------------------------
# sample statistics


def mean_of_sample(rs) -> Tuple[float, float]:
    """Arithmetic mean and its standard error std / sqrt(n)."""
    v = rs.values if isinstance(rs, RatioSample) else np.asarray(rs, dtype=float)
    n = v.size
    if n == 0:
        raise ValueError("empty sample")
    sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
    return float(np.mean(v)), sd / math.sqrt(n)


# ---------------------------------------------------------------------------
# Kullback-Leibler


def kld_symmetric(p1, p2, bin_width: float, eps: float = KLD_EPS) -> float:
    """Discretized D(p1||p2) + D(p2||p1) with ``eps`` added to both densities."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError(f"grid mismatch: {p1.shape} vs {p2.shape}")
    if np.any(p1 < 0) or np.any(p2 < 0):
        raise ValueError("densities must be >= 0")
    a = p1 + eps
    b = p2 + eps
    # (a - b) log(a / b) is the two directed sums merged; each term is >= 0
    return float(np.sum((a - b) * np.log(a / b)) * bin_width)


def reference_density(kind: str, which: str) -> Callable:
    """Analytic density for a ratio kind ('r'/'rtilde') and a reference class."""
    table = {
        ("r", "goe"): analytic.ratio_pdf_goe,
        ("r", "gue"): analytic.ratio_pdf_gue,
        ("rtilde", "goe"): lambda x: analytic.rtilde_pdf(x, 0.0),
        ("rtilde", "gue"): lambda x: analytic.rtilde_pdf(x, 1.0),
        ("r", "loe3"): lambda x: analytic.laguerre3_pdf(x, 1),
        ("r", "lue3"): lambda x: analytic.laguerre3_pdf(x, 2),
        ("rtilde", "loe3"): lambda x: analytic.laguerre3_rtilde_pdf(x, 1),
        ("rtilde", "lue3"): lambda x: analytic.laguerre3_rtilde_pdf(x, 2),
    }
    try:
        return table[(kind, which)]
    except KeyError:
        raise ValueError(f"no reference density {which!r} for {kind!r}") from None


def kld_histogram(h: HistogramDensity, density: Callable) -> float:
    """KLD between an empirical histogram and an analytic density taken at the bin centres."""
    return kld_symmetric(h.densities, density(h.centers), h.bin_width)


def kld_report(rs: RatioSample) -> KldResult:
    """D_GOE, D_GUE and their r-tilde versions on the default grids."""
    if rs.kind != "r":
        raise ValueError("kld_report expects an r sample")
    hr = histogram(rs)
    ht = histogram(rtilde_of(rs))
    return KldResult(
        d_goe=kld_histogram(hr, reference_density("r", "goe")),
        d_gue=kld_histogram(hr, reference_density("r", "gue")),
        d_goe_tilde=kld_histogram(ht, reference_density("rtilde", "goe")),
        d_gue_tilde=kld_histogram(ht, reference_density("rtilde", "gue")),
        grid={"r": {"domain": list(hr.domain), "bin_width": hr.bin_width},
              "rtilde": {"domain": list(ht.domain), "bin_width": ht.bin_width}},
    )


# ---------------------------------------------------------------------------
# fitting


def _alpha(lam: float) -> CrossoverParam:
    return CrossoverParam.from_lambda(lam)


def _nll(values: np.ndarray) -> Callable[[float], float]:
    tiny = np.finfo(float).tiny

    def f(lam: float) -> float:
        p = analytic.ratio_pdf(values, _alpha(lam))
        return float(-np.sum(np.log(np.maximum(p, tiny))))

    return f


def _lsq(rs: RatioSample) -> Callable[[float], float]:
    h = histogram(rs)
    centers = h.centers

    def f(lam: float) -> float:
        resid = h.densities - analytic.ratio_pdf(centers, _alpha(lam))
        return float(np.sum(resid * resid))

    return f


def minimize_lambda(objective: Callable[[float], float], lam_max: float = LAMBDA_MAX,
                    tol: float = FIT_TOL, max_iter: int = FIT_MAX_ITER):
    """Coarse scan on log(lambda + shift), then bounded Brent on the bracketing cell.

    Returns ``(lambda, value, converged, iterations)``.
    """
    t = np.linspace(math.log(_LOG_SHIFT), math.log(lam_max + _LOG_SHIFT), _BRACKET_POINTS)
    lam_grid = np.clip(np.exp(t) - _LOG_SHIFT, 0.0, lam_max)
    lam_grid[0] = 0.0
    vals = np.array([objective(l) for l in lam_grid])
    if not np.all(np.isfinite(vals)):
        raise ArithmeticError("objective not finite on the search grid")
    i = int(np.argmin(vals))
    i_lo, i_hi = max(i - 1, 0), min(i + 1, len(lam_grid) - 1)
    lo, hi = lam_grid[i_lo], lam_grid[i_hi]
    res = optimize.minimize_scalar(
        objective, bounds=(lo, hi), method="bounded",
        options={"xatol": tol, "maxiter": max_iter},
    )
    lam, val = float(res.x), float(res.fun)
    # the bounded search never evaluates the bracket ends themselves
    for j in (i_lo, i_hi):
        if vals[j] < val:
            lam, val = float(lam_grid[j]), float(vals[j])
    return lam, val, bool(res.success), int(res.nfev)


def fit_lambda_eff(rs: RatioSample, method: str = "mle", lam_max: float = LAMBDA_MAX,
                   tol: float = FIT_TOL, max_iter: int = FIT_MAX_ITER) -> FitResult:
    """Effective lambda of the 3x3 crossover density that best describes an r-sample.

    ``mle`` maximizes the likelihood of the raw ratios; ``histogram-lsq``
    least-squares fits the default histogram (r in [0, 30], bin 0.06).
    """
    if rs.kind != "r":
        raise ValueError("fit needs an r sample")
    n = len(rs)
    if n == 0:
        raise ValueError("empty sample")
    if n < MIN_FIT_SAMPLES:
        warnings.warn(f"fitting only {n} ratios", RuntimeWarning, stacklevel=2)
    if method == "mle":
        objective = _nll(rs.values)
    elif method == "histogram-lsq":
        objective = _lsq(rs)
    else:
        raise ValueError(f"unknown fit method {method!r}")
    lam, val, ok, nit = minimize_lambda(objective, lam_max, tol, max_iter)
    if not ok:
        raise ArithmeticError(f"{method} fit did not converge in {max_iter} iterations")
    se = _curvature_stderr(objective, lam) if method == "mle" else None
    return FitResult(lam, val, method, n, ok and math.isfinite(val), nit, se)


def _curvature_stderr(nll: Callable[[float], float], lam: float) -> Optional[float]:
    """1 / sqrt(d^2 NLL / d lambda^2) from a central difference."""
    h = max(1e-3, 1e-2 * lam)
    x = max(lam, h)
    curv = (nll(x + h) - 2.0 * nll(x) + nll(x - h)) / (h * h)
    return 1.0 / math.sqrt(curv) if curv > 0 else None


# ---------------------------------------------------------------------------
# inverse-CDF sampling of the analytic density


class RatioSampler:
    """Draws r from ``ratio_pdf(., alpha)`` by inverting a tabulated CDF.

    The CDF is tabulated in u = r / (1 + r) on [0, 1), where the density
    stays bounded, and inverted by linear (monotone) interpolation.
    """

    def __init__(self, p, grid_size: int = 400_001):
        self.param = analytic.as_param(p)
        u = np.linspace(0.0, 1.0, grid_size)[:-1]
        r = u / (1.0 - u)
        dens = np.asarray(analytic.ratio_pdf(r, self.param)) / (1.0 - u) ** 2
        cdf = integrate.cumulative_trapezoid(dens, u, initial=0.0)
        self.mass = float(cdf[-1])
        self._u = u
        self._cdf = cdf / cdf[-1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = np.interp(rng.random(n), self._cdf, self._u)
        return u / (1.0 - u)


# ---------------------------------------------------------------------------
# sweeps

ENSEMBLES = ("gauss-crossover", "wishart-crossover", "qkr")


def scaled_param(ensemble: str, N: int, raw: float) -> float:
    """sqrt(N) * lambda for the Gaussian/Wishart models, N^(3/2) * gamma for QKR."""
    if ensemble == "qkr":
        return N**1.5 * raw
    return math.sqrt(N) * raw


def raw_from_scaled(ensemble: str, N: int, scaled: float) -> float:
    if ensemble == "qkr":
        return scaled / N**1.5
    return scaled / math.sqrt(N)


@dataclass
class SweepSpec:
    ensemble: str
    points: List[dict]
    target_samples: int = DEFAULT_TARGET_SAMPLES
    seed: int = 0
    slice: str = "full"
    method: str = "mle"
    threads: int = 1
    wrap: bool = True
    kick: float = 20000.0
    kick_jitter: float = 50.0
    M_extra: int = 0

    def __post_init__(self):
        if self.ensemble not in ENSEMBLES:
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        if not self.points:
            raise ValueError("sweep has no points")
        if self.target_samples < 1:
            raise ValueError("target_samples must be >= 1")
        for p in self.points:
            if "N" not in p or not ("raw_param" in p or "scaled_param" in p):
                raise ValueError(f"sweep point needs N and raw_param or scaled_param: {p}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        points = list(d.pop("points", []))
        grid = d.pop("grid", None)
        if grid:
            key = "scaled_param" if "scaled" in grid else "raw_param"
            values = grid.get("scaled", grid.get("raw", []))
            points += [{"N": int(n), key: float(x)} for n in grid["N"] for x in values]
        known = {f for f in cls.__dataclass_fields__} - {"points"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(points=points, **d)

    def resolved_points(self) -> List[Tuple[int, float]]:
        out = []
        for p in self.points:
            n = int(p["N"])
            raw = p.get("raw_param")
            if raw is None:
                raw = raw_from_scaled(self.ensemble, n, float(p["scaled_param"]))
            out.append((n, float(raw)))
        return out


def make_config(ensemble: str, N: int, raw: float, seed: int, count: int, *,
                M: Optional[int] = None, kick: float = 20000.0, kick_jitter: float = 50.0):
    """Ensemble config for one sweep point; ``raw`` is lambda (Gaussian, Wishart) or gamma (QKR)."""
    if ensemble == "gauss-crossover":
        return GaussianCrossoverConfig(N, CrossoverParam.from_lambda(raw), seed=seed, count=count)
    if ensemble == "wishart-crossover":
        return WishartCrossoverConfig(N, N if M is None else M, CrossoverParam.from_lambda(raw),
                                      seed=seed, count=count)
    if ensemble == "qkr":
        return QkrConfig(N, kick=kick, gamma=raw, seed=seed, count=count, kick_jitter=kick_jitter)
    raise ValueError(f"unknown ensemble {ensemble!r}")


def realizations_for(target: int, N: int, kind: str, mode: str = "full", wrap: bool = True) -> int:
    per = ratios_per_spectrum(N, kind, mode, wrap)
    if per < 1:
        raise ValueError("slice produces no ratios")
    return max(1, math.ceil(target / per))


def analyze_sample(rs: RatioSample, method: str = "mle"):
    """Means, fitted lambda_eff and KLDs of one pooled r-sample."""
    rt = rtilde_of(rs)
    m_r, se_r = mean_of_sample(rs)
    m_t, se_t = mean_of_sample(rt)
    fit = fit_lambda_eff(rs, method)
    return fit, (m_r, se_r), (m_t, se_t), kld_report(rs)


def crossover_report(spec: SweepSpec) -> List[ScalingPoint]:
    """Run every sweep point: simulate, pool ratios, fit, and measure KLDs."""
    out = []
    for k, (N, raw) in enumerate(spec.resolved_points()):
        seed = derive_seed(spec.seed, k)
        kind = "circle" if spec.ensemble == "qkr" else "line"
        count = realizations_for(spec.target_samples, N, kind, spec.slice, spec.wrap)
        cfg = make_config(spec.ensemble, N, raw, seed, count,
                          M=N + spec.M_extra, kick=spec.kick, kick_jitter=spec.kick_jitter)
        log.info("sweep point %d: %s N=%d raw=%g count=%d", k, spec.ensemble, N, raw, count)
        levels = ensemble_levels(cfg, threads=spec.threads)
        rs = pooled_ratios(levels, kind, spec.slice, spec.wrap)
        fit, (m_r, se_r), (m_t, se_t), kld = analyze_sample(rs, spec.method)
        out.append(ScalingPoint(
            ensemble=spec.ensemble, N=N, raw_param=raw,
            scaled_param=scaled_param(spec.ensemble, N, raw),
            lambda_eff=fit.lambda_eff, mean_r=m_r, se_r=se_r,
            mean_rtilde=m_t, se_rtilde=se_t, kld=kld, n_samples=len(rs),
            seed=seed, config=cfg.to_dict(), fit_converged=fit.converged,
        ))
    return out


def regression_slope(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """Least-squares line y = slope * x + intercept; returns (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
