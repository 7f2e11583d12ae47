"""Spacings, spacing ratios and binned densities of ordered spectra.

The single-spectrum functions take a :class:`Spectrum`; ``pooled_ratios`` does
the same work row-wise on a 2-D array of spectra from one ensemble, which is
the path the simulation pipeline uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .ensembles import Spectrum

R_DOMAIN = (0.0, 30.0)
R_BIN_WIDTH = 0.06
RTILDE_DOMAIN = (0.0, 1.0)
RTILDE_BIN_WIDTH = 0.002

TWO_PI = 2.0 * math.pi


@dataclass
class RatioSample:
    values: np.ndarray
    kind: str = "r"
    degenerate_pairs: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.kind not in ("r", "rtilde"):
            raise ValueError(f"unknown ratio kind {self.kind!r}")
        if np.any(self.values < 0) or np.any(np.isnan(self.values)):
            raise ValueError("ratios must be >= 0")
        if self.kind == "rtilde" and np.any(self.values > 1):
            raise ValueError("rtilde values must be <= 1")

    def __len__(self):
        return self.values.size

    @classmethod
    def pool(cls, samples: Sequence["RatioSample"]) -> "RatioSample":
        if not samples:
            raise ValueError("nothing to pool")
        kinds = {s.kind for s in samples}
        if len(kinds) != 1:
            raise ValueError("cannot pool r and rtilde samples")
        return cls(
            np.concatenate([s.values for s in samples]),
            kinds.pop(),
            sum(s.degenerate_pairs for s in samples),
            dict(samples[0].provenance),
        )


@dataclass
class HistogramDensity:
    domain: Tuple[float, float]
    bin_width: float
    edges: np.ndarray
    densities: np.ndarray
    counts: np.ndarray
    total: int
    out_of_domain: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def in_domain_fraction(self) -> float:
        return float(self.counts.sum()) / self.total


# ---------------------------------------------------------------------------
# spacings and ratios


def _row_spacings(levels: np.ndarray, kind: str, wrap: bool) -> np.ndarray:
    s = np.diff(levels, axis=-1)
    if kind == "circle" and wrap:
        gap = TWO_PI + levels[..., :1] - levels[..., -1:]
        s = np.concatenate([s, gap], axis=-1)
    return s


def spacings(s: Spectrum, wrap: bool = True) -> np.ndarray:
    """Consecutive level spacings; circle spectra include the wrap-around gap unless ``wrap=False``."""
    if len(s) < 2:
        raise ValueError("need at least two levels")
    return _row_spacings(s.levels, s.kind, wrap)


def _row_ratios(sp: np.ndarray, cyclic: bool) -> Tuple[np.ndarray, int]:
    if cyclic:
        num, den = sp, np.roll(sp, 1, axis=-1)
    else:
        num, den = sp[..., 1:], sp[..., :-1]
    ok = (num > 0) & (den > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num[ok] / den[ok]
    return r, int(ok.size - np.count_nonzero(ok))


def ratios(s: Spectrum, wrap: bool = True) -> RatioSample:
    """r_n = s_n / s_{n-1}. Ratios touching a zero spacing are dropped and tallied."""
    if len(s) < 3:
        raise ValueError("need at least three levels")
    cyclic = s.kind == "circle" and wrap
    r, bad = _row_ratios(_row_spacings(s.levels, s.kind, wrap), cyclic)
    return RatioSample(r, "r", bad)


def rtilde_of(rs: RatioSample) -> RatioSample:
    """Elementwise min(r, 1/r)."""
    if rs.kind != "r":
        raise ValueError("rtilde_of expects an r sample")
    v = rs.values
    with np.errstate(divide="ignore", over="ignore"):
        inv = np.where(v > 0, 1.0 / np.where(v > 0, v, 1.0), np.inf)
    return RatioSample(np.minimum(v, inv), "rtilde", rs.degenerate_pairs, dict(rs.provenance))


# ---------------------------------------------------------------------------
# slicing

SliceMode = Union[str, Tuple[str, int]]


def parse_slice_mode(mode: SliceMode) -> Tuple[str, int]:
    """Accepts ``"full"``, ``"bulk:100"``, ``"edges:100"`` or a ``(name, k)`` tuple."""
    if isinstance(mode, tuple):
        name, k = mode
    elif mode == "full":
        name, k = "full", 0
    else:
        name, _, ks = str(mode).partition(":")
        try:
            k = int(ks)
        except ValueError:
            raise ValueError(f"bad slice mode {mode!r}") from None
    if name not in ("full", "bulk", "edges"):
        raise ValueError(f"bad slice mode {mode!r}")
    if name != "full" and k < 1:
        raise ValueError("slice size must be >= 1")
    if name == "edges" and k % 2:
        raise ValueError("edges(k) needs even k")
    return name, int(k)


def _slice_bounds(n: int, mode: SliceMode) -> List[Tuple[int, int]]:
    name, k = parse_slice_mode(mode)
    if name == "full":
        return [(0, n)]
    if k > n:
        raise ValueError(f"slice of {k} levels from a spectrum of {n}")
    if name == "bulk":
        start = (n - k) // 2
        return [(start, start + k)]
    return [(0, k // 2), (n - k // 2, n)]


def slice_spectrum(s: Spectrum, mode: SliceMode = "full") -> List[Spectrum]:
    """Contiguous sub-spectra. ``edges`` yields two independent slices.

    A circle spectrum stays periodic only under ``"full"``; its slices are
    returned as ``line`` spectra so no spacing wraps around.
    """
    bounds = _slice_bounds(len(s), mode)
    if bounds == [(0, len(s))]:
        return [s]
    return [Spectrum(s.levels[a:b], "line", dict(s.meta)) for a, b in bounds]


def pooled_ratios(levels: np.ndarray, kind: str = "line", mode: SliceMode = "full",
                  wrap: bool = True) -> RatioSample:
    """r-sample pooled over the rows of ``levels`` (one sorted spectrum per row)."""
    levels = np.atleast_2d(np.asarray(levels, dtype=float))
    n = levels.shape[1]
    bounds = _slice_bounds(n, mode)
    parts, bad = [], 0
    for a, b in bounds:
        sub = levels[:, a:b]
        full = (a, b) == (0, n)
        sub_kind = kind if full else "line"
        if sub.shape[1] < 3:
            raise ValueError("slice too short to form ratios")
        cyclic = sub_kind == "circle" and wrap
        r, nbad = _row_ratios(_row_spacings(sub, sub_kind, wrap), cyclic)
        parts.append(r)
        bad += nbad
    return RatioSample(np.concatenate(parts), "r", bad)


def ratios_per_spectrum(n: int, kind: str = "line", mode: SliceMode = "full",
                        wrap: bool = True) -> int:
    total = 0
    for a, b in _slice_bounds(n, mode):
        m = b - a
        if (a, b) == (0, n) and kind == "circle" and wrap:
            total += m
        else:
            total += max(m - 2, 0)
    return total


# ---------------------------------------------------------------------------
# histograms


def default_binning(kind: str) -> Tuple[Tuple[float, float], float]:
    if kind == "r":
        return R_DOMAIN, R_BIN_WIDTH
    return RTILDE_DOMAIN, RTILDE_BIN_WIDTH


def bin_edges(domain: Tuple[float, float], bin_width: float) -> np.ndarray:
    lo, hi = map(float, domain)
    if not hi > lo:
        raise ValueError("domain must have hi > lo")
    if not bin_width > 0:
        raise ValueError("bin_width must be > 0")
    nbins = int(round((hi - lo) / bin_width))
    if nbins < 1 or not math.isclose(nbins * bin_width, hi - lo, rel_tol=1e-9):
        raise ValueError("domain length must be a whole number of bins")
    return lo + bin_width * np.arange(nbins + 1)


def histogram(rs: Union[RatioSample, np.ndarray], domain: Optional[Tuple[float, float]] = None,
              bin_width: Optional[float] = None) -> HistogramDensity:
    """Counts and densities counts / (total * bin_width); the total includes out-of-domain samples."""
    if isinstance(rs, RatioSample):
        values, kind = rs.values, rs.kind
    else:
        values, kind = np.asarray(rs, dtype=float).ravel(), "r"
    if values.size == 0:
        raise ValueError("empty sample")
    d_domain, d_width = default_binning(kind)
    domain = d_domain if domain is None else domain
    bin_width = d_width if bin_width is None else bin_width
    edges = bin_edges(domain, bin_width)
    counts, _ = np.histogram(values, bins=edges)
    total = int(values.size)
    return HistogramDensity(
        domain=(float(edges[0]), float(edges[-1])),
        bin_width=float(bin_width),
        edges=edges,
        densities=counts / (total * bin_width),
        counts=counts,
        total=total,
        out_of_domain=total - int(counts.sum()),
    )
