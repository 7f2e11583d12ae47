"""Closed-form spacing-ratio densities for the GOE-GUE crossover.

Everything here is a pure function of its arguments. The crossover parameter
can be passed either as a :class:`CrossoverParam` or as a bare ``alpha``
float; ``r`` arguments broadcast like numpy ufuncs.

The quadrature helpers at the bottom (``ratio_pdf_spacing_quad``,
``ratio_pdf_eigen_quad``, ``ratio_pdf_three_arctan``) evaluate the same
density by routes that never touch the single-arctan formula; they are slow
and exist to cross-check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, special

# ratio_pdf switches to the exact GOE/GUE formulas outside (ALPHA_GOE_SWITCH,
# ALPHA_GUE_SWITCH). The single-arctan form is O(alpha^2) away from the GOE
# curve at the lower switch and O(1e-10) away from GUE at the upper one.
ALPHA_GOE_SWITCH = 1e-6
ALPHA_GUE_SWITCH = 1.0 - 1e-6

# <r> approaches 7/4 like alpha*log(alpha), so the averages keep the closed
# form down to a much smaller alpha than the densities do.
MEAN_GOE_SWITCH = 1e-12

MEAN_R_GOE = 1.75
MEAN_R_GUE = 27.0 * math.sqrt(3.0) / (8.0 * math.pi) - 0.5
MEAN_RTILDE_GOE = 4.0 - 2.0 * math.sqrt(3.0)
MEAN_RTILDE_GUE = 2.0 * math.sqrt(3.0) / math.pi - 0.5

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class CrossoverParam:
    """Symmetry-breaking parameter, stored as ``alpha`` in [0, 1].

    ``lam`` is the equivalent parameter of the ``H1/sqrt(1+l^2) + l*H2/sqrt(1+l^2)``
    model and is ``inf`` at ``alpha == 1``. ``comp`` carries sqrt(1 - alpha^2)
    computed from whichever convention the value was built from, so neither
    view loses digits near alpha = 1.
    """

    alpha: float
    comp: Optional[float] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 <= a <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)
        if self.comp is None:
            object.__setattr__(self, "comp", math.sqrt((1.0 - a) * (1.0 + a)))

    @classmethod
    def from_alpha(cls, alpha: float) -> "CrossoverParam":
        return cls(alpha)

    @classmethod
    def from_lambda(cls, lam: float) -> "CrossoverParam":
        lam = float(lam)
        if not lam >= 0.0:
            raise ValueError(f"lambda must be >= 0, got {lam!r}")
        if math.isinf(lam):
            return cls(1.0, 0.0)
        if lam > 1e150:
            return cls(1.0, 1.0 / lam)
        c = 1.0 / math.sqrt(1.0 + lam * lam)
        return cls(min(lam * c, 1.0), c)

    @property
    def lam(self) -> float:
        if self.comp == 0.0:
            return math.inf
        return self.alpha / self.comp

    @property
    def one_minus_alpha2(self) -> float:
        return self.comp * self.comp

    @property
    def b(self) -> float:
        """sqrt((1 - alpha^2) / (8 alpha^2)); infinite at alpha == 0."""
        if self.alpha == 0.0:
            return math.inf
        return self.comp / (math.sqrt(8.0) * self.alpha)


ParamLike = Union[CrossoverParam, float]


def as_param(p: ParamLike) -> CrossoverParam:
    if isinstance(p, CrossoverParam):
        return p
    return CrossoverParam(p)


@dataclass(frozen=True)
class SurmiseConstants:
    """The pair (a, b) entering the 3x3 ratio density at a given r and alpha."""

    a: float
    b: float

    @classmethod
    def at(cls, r: float, p: ParamLike) -> "SurmiseConstants":
        if r < 0:
            raise ValueError("r must be >= 0")
        return cls(math.sqrt((r * r + r + 1.0) / 6.0), as_param(p).b)


@dataclass
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        return float(integrate.trapezoid(self.values, self.grid))


def density_curve(func: Callable, grid) -> DensityCurve:
    grid = np.asarray(grid, dtype=float)
    return DensityCurve(grid, np.asarray(func(grid), dtype=float))


# ---------------------------------------------------------------------------
# special functions


def erf(x):
    """Error function, accurate to a few ulp (Cephes rational approximations)."""
    return special.erf(x)


def g_integral(eta, zeta):
    """Closed form of (4 sqrt(pi)/v^5) int_0^inf x^4 exp(-eta^2 x^2/v^2) erf(zeta x/v) dx.

    The result does not depend on ``v``. ``zeta = inf`` gives the limit
    ``3 pi / (2 eta^5)``.
    """
    eta = np.asarray(eta, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if np.any(eta <= 0):
        raise ValueError("eta must be > 0")
    if np.any(zeta < 0):
        raise ValueError("zeta must be >= 0")
    eta2 = eta * eta
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        z2 = zeta * zeta
        rational = zeta * (5 * eta2 + 3 * z2) / (eta2 * eta2 * (eta2 + z2) ** 2)
        rational = np.where(np.isinf(zeta), 0.0, rational)
        # for zeta beyond ~1e100 the squares overflow; the rational part is ~3/(eta^4 zeta)
        rational = np.where(np.isnan(rational), 3.0 / (eta2 * eta2 * zeta), rational)
    out = rational + 3.0 / eta**5 * np.arctan(zeta / eta)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# ratio densities


def _check_r(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise ValueError("r must be >= 0")
    return r


def _scalar_or_array(x: np.ndarray):
    return x if x.ndim else float(x)


def ratio_pdf_goe(r):
    r = _check_r(r)
    with np.errstate(over="ignore", invalid="ignore"):
        q = r * r + r + 1.0
        out = 27.0 / 8.0 * r * (r + 1.0) / q**2.5
    return _scalar_or_array(np.where(np.isinf(r), 0.0, out))


def ratio_pdf_gue(r):
    r = _check_r(r)
    with np.errstate(over="ignore", invalid="ignore"):
        q = r * r + r + 1.0
        out = 81.0 * _SQRT3 / (4.0 * math.pi) * (r * (r + 1.0)) ** 2 / q**4
    return _scalar_or_array(np.where(np.isinf(r), 0.0, out))


def _rational_part(a2, z):
    return z * (5 * a2 + 3 * z * z) / (a2 * a2 * (a2 + z * z) ** 2)


def ratio_pdf(r, p: ParamLike):
    """Density of r = s_n / s_{n-1} for the 3x3 GOE-GUE crossover ensemble.

    Uses the form in which the three arctangents are merged into one, so no
    cancellation happens in the angular part as ``b -> 0``. Outside
    ``[ALPHA_GOE_SWITCH, ALPHA_GUE_SWITCH]`` the exact GOE/GUE densities are
    returned.
    """
    p = as_param(p)
    alpha = p.alpha
    r = _check_r(r)
    if alpha < ALPHA_GOE_SWITCH:
        return ratio_pdf_goe(r)
    if alpha > ALPHA_GUE_SWITCH:
        return ratio_pdf_gue(r)
    b = p.b
    one_m_a2 = p.one_minus_alpha2
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        q = r * r + r + 1.0
        a2 = q / 6.0
        a = np.sqrt(a2)
        rational = (
            _rational_part(a2, b)
            + _rational_part(a2, b * r)
            - _rational_part(a2, b * (r + 1.0))
        )
        angle = np.arctan(b**3 * r * (r + 1.0) / (a**3 + a * b * b * q))
        bracket = rational + 3.0 / a**5 * angle
        out = r * (r + 1.0) / (16.0 * math.sqrt(6.0) * math.pi * one_m_a2**1.5) * bracket
    out = np.where(np.isinf(r), 0.0, out)
    return _scalar_or_array(np.maximum(out, 0.0))


def ratio_pdf_three_arctan(r, p: ParamLike):
    """Same density written as g(a,b) + g(a,br) - g(a,br+b); cross-check path only.

    Loses accuracy as alpha -> 1 because the three g terms cancel.
    """
    p = as_param(p)
    alpha = p.alpha
    if not 0.0 < alpha < 1.0:
        raise ValueError("three-arctan form needs 0 < alpha < 1")
    r = _check_r(r)
    b = p.b
    a = np.sqrt((r * r + r + 1.0) / 6.0)
    bracket = g_integral(a, b) + g_integral(a, b * r) - g_integral(a, b * (r + 1.0))
    one_m_a2 = p.one_minus_alpha2
    out = r * (r + 1.0) / (16.0 * math.sqrt(6.0) * math.pi * one_m_a2**1.5) * bracket
    return _scalar_or_array(np.asarray(out))


def rtilde_pdf(rt, p: ParamLike):
    """Density of min(r, 1/r) on [0, 1], built as p(rt) + p(1/rt)/rt^2."""
    rt = np.asarray(rt, dtype=float)
    if np.any(rt < 0) or np.any(rt > 1) or np.any(np.isnan(rt)):
        raise ValueError("rtilde must lie in [0, 1]")
    safe = np.where(rt > 0, rt, 1.0)
    out = ratio_pdf(rt, p) + np.asarray(ratio_pdf(1.0 / safe, p)) / safe**2
    return _scalar_or_array(np.where(rt > 0, out, 0.0))


def rtilde_pdf_symmetric(rt, p: ParamLike):
    """2 p(rt) on [0, 1]; valid because the 3x3 spacing density is exchange symmetric."""
    rt = np.asarray(rt, dtype=float)
    if np.any(rt < 0) or np.any(rt > 1):
        raise ValueError("rtilde must lie in [0, 1]")
    return _scalar_or_array(2.0 * np.asarray(ratio_pdf(rt, p)))


def _alpha_in_range(p: ParamLike) -> float:
    return as_param(p).alpha


def mean_r(p: ParamLike) -> float:
    """Exact <r> for the 3x3 crossover ensemble."""
    a = _alpha_in_range(p)
    if a < MEAN_GOE_SWITCH:
        return MEAN_R_GOE
    if a > ALPHA_GUE_SWITCH:
        return MEAN_R_GUE
    a2 = a * a
    s = (1.0 - a) * (1.0 + a)
    return (
        9.0 * _SQRT3 * a / (2.0 * math.pi * (3.0 + a2))
        - 0.75
        + (5.0 + a2) / (math.pi * s) * math.atan((3.0 - a2) / (2.0 * _SQRT3 * a))
        - (7.0 + 5.0 * a2) / (2.0 * math.pi * s) * math.atan(a / _SQRT3)
    )


def mean_rtilde(p: ParamLike) -> float:
    """Exact <min(r, 1/r)> for the 3x3 crossover ensemble."""
    a = _alpha_in_range(p)
    if a < MEAN_GOE_SWITCH:
        return MEAN_RTILDE_GOE
    if a > ALPHA_GUE_SWITCH:
        return MEAN_RTILDE_GUE
    a2 = a * a
    s = (1.0 - a) * (1.0 + a)
    s32 = s**1.5
    return (
        4.0 * (2.0 + a2) / (math.pi * s) * math.atan(_SQRT3 * (1.0 + a2) / (2.0 * a))
        - 4.0 * _SQRT3 / (math.pi * s32) * math.atan(s32 / (a * (3.0 + a2)))
        - (17.0 + 7.0 * a2) / (math.pi * s) * math.atan(a / _SQRT3)
        - math.atan(_SQRT3 * a) / math.pi
    )


def laguerre3_pdf(r, beta: int):
    """3x3 Laguerre ratio density: beta=1 is A A^T with N=3, M=4; beta=2 is A A^dag, N=M=3."""
    r = _check_r(r)
    with np.errstate(over="ignore", invalid="ignore"):
        if beta == 1:
            out = 32.0 * (r * r + r) / (r + 2.0) ** 5
        elif beta == 2:
            out = 420.0 * (r * r + r) ** 2 / (r + 2.0) ** 8
        else:
            raise ValueError(f"beta must be 1 or 2, got {beta!r}")
    return _scalar_or_array(np.where(np.isinf(r), 0.0, out))


def laguerre3_rtilde_pdf(rt, beta: int):
    """min(r, 1/r) density for the 3x3 Laguerre cases (not 2 p(rt): no exchange symmetry)."""
    rt = np.asarray(rt, dtype=float)
    if np.any(rt < 0) or np.any(rt > 1):
        raise ValueError("rtilde must lie in [0, 1]")
    safe = np.where(rt > 0, rt, 1.0)
    out = laguerre3_pdf(rt, beta) + np.asarray(laguerre3_pdf(1.0 / safe, beta)) / safe**2
    return _scalar_or_array(np.where(rt > 0, out, 0.0))


# ---------------------------------------------------------------------------
# level densities


def semicircle_density(x, N: int):
    """Semicircle of radius sqrt(2N); integrates to N."""
    x = np.asarray(x, dtype=float)
    out = np.sqrt(np.clip(2.0 * N - x * x, 0.0, None)) / math.pi
    return _scalar_or_array(out)


def mp_density(x, N: int):
    """Square-case Marchenko-Pastur density on [0, 2N]; integrates to N."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x <= 2.0 * N)
    safe = np.where(inside, x, 1.0)
    out = np.where(inside, np.sqrt(np.clip(2.0 * N - safe, 0.0, None) / safe) / math.pi, 0.0)
    return _scalar_or_array(out)


# ---------------------------------------------------------------------------
# joint densities of the 3x3 model


def _f_err(u, p: CrossoverParam, v: float):
    return special.erf(p.b * u / v)


def joint_eigen_pdf3(x1, x2, x3, p: ParamLike, v: float = 1.0, mode: str = "crossover"):
    """Joint eigenvalue density of the 3x3 crossover matrix (symmetric in its arguments).

    ``mode="goe"`` / ``"gue"`` evaluate the invariant-class densities and
    ignore ``p``; ``"crossover"`` needs ``0 < alpha < 1``.
    """
    if v <= 0:
        raise ValueError("v must be > 0")
    x1, x2, x3 = (np.asarray(t, dtype=float) for t in (x1, x2, x3))
    d12, d23, d13 = x1 - x2, x2 - x3, x1 - x3
    gauss = np.exp(-(x1 * x1 + x2 * x2 + x3 * x3) / (4.0 * v * v))
    vander = d12 * d23 * d13
    if mode == "goe":
        out = np.abs(vander) * gauss / (48.0 * math.sqrt(2.0) * math.pi * v**6)
    elif mode == "gue":
        out = vander**2 * gauss / (768.0 * math.pi**1.5 * v**9)
    elif mode == "crossover":
        p = as_param(p)
        if not 0.0 < p.alpha < 1.0:
            raise ValueError("crossover mode needs 0 < alpha < 1; use mode='goe' or 'gue'")
        s32 = p.comp**3
        f = lambda u: _f_err(u, p, v)  # noqa: E731
        bracket = f(d12) - f(d13) + f(d23)
        out = bracket * vander * gauss / (48.0 * math.sqrt(2.0) * math.pi * v**6 * s32)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _scalar_or_array(np.asarray(out))


def joint_spacing_pdf(x, y, p: ParamLike, v: float = 1.0):
    """Joint density of the two consecutive spacings of the 3x3 crossover matrix."""
    if v <= 0:
        raise ValueError("v must be > 0")
    p = as_param(p)
    if not 0.0 < p.alpha < 1.0:
        raise ValueError("joint_spacing_pdf needs 0 < alpha < 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y < 0):
        raise ValueError("spacings must be >= 0")
    s32 = p.comp**3
    bracket = _f_err(x, p, v) + _f_err(y, p, v) - _f_err(x + y, p, v)
    out = (
        x * y * (x + y) * bracket
        * np.exp(-(x * x + x * y + y * y) / (6.0 * v * v))
        / (4.0 * math.sqrt(6.0 * math.pi) * v**5 * s32)
    )
    return _scalar_or_array(np.asarray(out))


# ---------------------------------------------------------------------------
# quadrature


def integrate_halfline(f: Callable[[float], float], split: float = 1.0,
                       epsabs: float = 1e-12, epsrel: float = 1e-12) -> float:
    """int_0^inf f, with [split, inf) mapped to (0, 1/split] by r = 1/u.

    Under the map the algebraic tails r^-k (k >= 2) of the ratio densities
    become bounded integrands, so no truncation error is left.
    """
    head = integrate.quad(f, 0.0, split, epsabs=epsabs, epsrel=epsrel, limit=400)[0]

    def tail(u):
        if u == 0.0:
            return 0.0
        return f(1.0 / u) / (u * u)

    rest = integrate.quad(tail, 0.0, 1.0 / split, epsabs=epsabs, epsrel=epsrel, limit=400)[0]
    return head + rest


def ratio_pdf_spacing_quad(r: float, p: ParamLike, v: float = 1.0) -> float:
    """p(r) = int_0^inf x P(x, r x) dx with P the joint spacing density."""
    if r < 0:
        raise ValueError("r must be >= 0")
    if r == 0:
        return 0.0
    scale = v * math.sqrt(6.0 / (r * r + r + 1.0))
    return integrate.quad(
        lambda x: x * joint_spacing_pdf(x, r * x, p, v),
        0.0, 12.0 * scale, epsabs=1e-13, epsrel=1e-11, limit=200,
    )[0]


def ratio_pdf_eigen_quad(r: float, p: ParamLike, v: float = 1.0) -> float:
    """p(r) from the 3x3 joint eigenvalue density, integrating out the middle level
    and the lower spacing numerically (the delta function fixes the upper spacing)."""
    if r <= 0:
        return 0.0
    xmax = 12.0 * v * math.sqrt(6.0 / (r * r + r + 1.0))
    zmax = 12.0 * v

    def integrand(x2, x):
        return 6.0 * x * joint_eigen_pdf3(x2 - x, x2, x2 + r * x, p, v)

    return integrate.dblquad(
        integrand, 0.0, xmax, -zmax, zmax, epsabs=1e-11, epsrel=1e-9
    )[0]
