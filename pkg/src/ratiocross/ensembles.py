"""Seeded samplers for the Gaussian crossover, Wishart crossover and kicked-rotor models.

Every realization draws from its own generator, seeded from
``(seed, index, part)`` through :class:`numpy.random.SeedSequence`. A given
realization therefore comes out the same whatever order it is generated in
and however many threads share the work.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .analytic import CrossoverParam

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-8

# elements per batch handed to LAPACK; bounds peak memory for big N
_CHUNK_ELEMENTS = 4_000_000


def realization_rng(seed: int, index: int, part: int = 0) -> np.random.Generator:
    """Independent generator for one realization (and one sub-draw ``part`` of it)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index), int(part)))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, key: int) -> int:
    """63-bit seed for a sub-run (e.g. one point of a sweep)."""
    ss = np.random.SeedSequence([int(seed), int(key)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _param_dict(p: CrossoverParam) -> dict:
    lam = p.lam
    return {"alpha": p.alpha, "lambda": None if math.isinf(lam) else lam}


@dataclass(frozen=True)
class GaussianCrossoverConfig:
    N: int
    param: CrossoverParam
    v: Optional[float] = None
    seed: int = 0
    count: int = 1

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.v is None:
            # semicircle of radius sqrt(2N) for every alpha
            object.__setattr__(self, "v", math.sqrt(1.0 / (2.0 * (1.0 + self.param.alpha**2))))
        if not self.v > 0:
            raise ValueError("v must be > 0")

    kind = "line"

    def to_dict(self) -> dict:
        return {"ensemble": "gauss-crossover", "N": self.N, **_param_dict(self.param),
                "v": self.v, "seed": self.seed, "count": self.count}


@dataclass(frozen=True)
class WishartCrossoverConfig:
    N: int
    M: int
    param: CrossoverParam
    seed: int = 0
    count: int = 1

    def __post_init__(self):
        if not 2 <= self.N <= self.M:
            raise ValueError("need 2 <= N <= M")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    kind = "line"

    def to_dict(self) -> dict:
        return {"ensemble": "wishart-crossover", "N": self.N, "M": self.M,
                **_param_dict(self.param), "seed": self.seed, "count": self.count}


@dataclass(frozen=True)
class QkrConfig:
    N: int
    kick: float = 20000.0
    gamma: float = 0.0
    theta0: Optional[float] = None
    seed: int = 0
    count: int = 1
    kick_jitter: float = 50.0

    def __post_init__(self):
        if self.N < 3 or self.N % 2 == 0:
            raise ValueError("QKR dimension N must be odd and >= 3")
        if not self.kick > 0:
            raise ValueError("kick must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.kick_jitter < 0:
            raise ValueError("kick_jitter must be >= 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.theta0 is None:
            object.__setattr__(self, "theta0", math.pi / (2 * self.N))

    kind = "circle"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ensemble"] = "qkr"
        d["kick_distribution"] = "uniform[kick - kick_jitter, kick + kick_jitter]"
        return d


EnsembleConfig = Union[GaussianCrossoverConfig, WishartCrossoverConfig, QkrConfig]


@dataclass
class Spectrum:
    """Ordered levels of one realization; ``kind="circle"`` holds eigenangles in [-pi, pi)."""

    levels: np.ndarray
    kind: str = "line"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if self.levels.ndim != 1:
            raise ValueError("levels must be one-dimensional")
        if self.kind not in ("line", "circle"):
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if np.any(np.diff(self.levels) < 0):
            raise ValueError("levels must be nondecreasing")
        if self.kind == "circle" and self.levels.size and (
            self.levels[0] < -math.pi or self.levels[-1] >= math.pi
        ):
            raise ValueError("eigenangles must lie in [-pi, pi)")

    def __len__(self):
        return self.levels.size


# ---------------------------------------------------------------------------
# matrix samplers


def sample_goe(N: int, v: float, rng: np.random.Generator) -> np.ndarray:
    """Real symmetric matrix: diagonal N(0, 2v^2), off-diagonal N(0, v^2)."""
    a = rng.standard_normal((N, N)) * v
    return (a + a.T) / math.sqrt(2.0)


def sample_gue(N: int, v: float, rng: np.random.Generator) -> np.ndarray:
    """Hermitian matrix: diagonal N(0, 2v^2), off-diagonal re and im parts N(0, v^2)."""
    b = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) * v
    return (b + b.conj().T) / math.sqrt(2.0)


def sample_crossover_gaussian(cfg: GaussianCrossoverConfig, index: int) -> np.ndarray:
    """sqrt(1 - alpha^2) H1 + alpha H2 with H1 from GOE and H2 from GUE.

    H1 uses sub-stream 0 of the realization and H2 sub-stream 1, so the
    alpha = 1 draw is exactly ``sample_gue(N, v, realization_rng(seed, index, 1))``.
    Returns a real array when alpha == 0.
    """
    alpha = cfg.param.alpha
    if alpha == 1.0:
        return sample_gue(cfg.N, cfg.v, realization_rng(cfg.seed, index, 1))
    h1 = sample_goe(cfg.N, cfg.v, realization_rng(cfg.seed, index, 0))
    if alpha == 0.0:
        return h1
    h2 = sample_gue(cfg.N, cfg.v, realization_rng(cfg.seed, index, 1))
    return cfg.param.comp * h1 + alpha * h2


def sample_ginibre(N: int, M: int, beta: int, rng: np.random.Generator) -> np.ndarray:
    """N x M Ginibre block with density ~ exp(-beta/2 tr A A^dag)."""
    if beta == 1:
        return rng.standard_normal((N, M))
    if beta == 2:
        return (rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))) / math.sqrt(2.0)
    raise ValueError("beta must be 1 or 2")


def sample_crossover_wishart(cfg: WishartCrossoverConfig, index: int) -> np.ndarray:
    """W = A A^dag with A = (A1 + lambda A2) / sqrt(1 + lambda^2)."""
    alpha = cfg.param.alpha
    if alpha == 1.0:
        a = sample_ginibre(cfg.N, cfg.M, 2, realization_rng(cfg.seed, index, 1))
    else:
        a = sample_ginibre(cfg.N, cfg.M, 1, realization_rng(cfg.seed, index, 0))
        if alpha > 0.0:
            a2 = sample_ginibre(cfg.N, cfg.M, 2, realization_rng(cfg.seed, index, 1))
            a = cfg.param.comp * a + alpha * a2
    return a @ a.conj().T


def qkr_kick(cfg: QkrConfig, index: int) -> float:
    if cfg.kick_jitter == 0:
        return cfg.kick
    rng = realization_rng(cfg.seed, index, 0)
    return float(rng.uniform(cfg.kick - cfg.kick_jitter, cfg.kick + cfg.kick_jitter))


def qkr_floquet_matrix(N: int, kick: float, gamma: float, theta0: float) -> np.ndarray:
    """Position-basis Floquet operator of the kicked rotor on an N-site torus."""
    if N % 2 == 0 or N < 3:
        raise ValueError("QKR dimension N must be odd and >= 3")
    half = (N - 1) // 2
    idx = np.arange(-half, half + 1)
    fourier = np.exp(-2j * math.pi * np.outer(idx, idx) / N)
    free = np.exp(-1j * (idx * idx / 2.0 - gamma * idx))
    propagator = (fourier * free) @ fourier.conj().T / N
    kick_phase = np.exp(-1j * kick * np.cos(2.0 * math.pi * idx / N + theta0))
    return kick_phase[:, None] * propagator


def qkr_floquet(cfg: QkrConfig, index: int) -> np.ndarray:
    """Floquet matrix of realization ``index``; its kick is drawn around ``cfg.kick``."""
    return qkr_floquet_matrix(cfg.N, qkr_kick(cfg, index), cfg.gamma, cfg.theta0)


def sample_matrix(cfg: EnsembleConfig, index: int) -> np.ndarray:
    if isinstance(cfg, GaussianCrossoverConfig):
        return sample_crossover_gaussian(cfg, index)
    if isinstance(cfg, WishartCrossoverConfig):
        return sample_crossover_wishart(cfg, index)
    if isinstance(cfg, QkrConfig):
        return qkr_floquet(cfg, index)
    raise TypeError(f"unsupported config {type(cfg).__name__}")


# ---------------------------------------------------------------------------
# eigenvalues


def hermiticity_defect(h: np.ndarray) -> float:
    return float(np.max(np.abs(h - np.swapaxes(h, -1, -2).conj()), initial=0.0))


def unitarity_defect(u: np.ndarray) -> float:
    n = u.shape[-1]
    prod = np.swapaxes(u, -1, -2).conj() @ u
    return float(np.max(np.abs(prod - np.eye(n)), initial=0.0))


def _check_hermitian(h: np.ndarray) -> None:
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if hermiticity_defect(h) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")


def eigenvalues_hermitian(matrix) -> Spectrum:
    """Ascending real eigenvalues (LAPACK divide-and-conquer via numpy)."""
    h = np.asarray(matrix)
    _check_hermitian(h)
    try:
        w = np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigensolver failed: {exc}") from exc
    return Spectrum(w, "line")


def _angles(eig: np.ndarray) -> np.ndarray:
    if np.any(np.abs(np.abs(eig) - 1.0) > UNITARY_TOL):
        raise ValueError("eigenvalue off the unit circle")
    phi = np.angle(eig)
    phi = np.where(phi >= math.pi, phi - 2.0 * math.pi, phi)
    return np.sort(phi, axis=-1)


def eigenangles_unitary(matrix) -> Spectrum:
    """Sorted eigenangles in [-pi, pi) of a unitary matrix (general complex eigensolver)."""
    u = np.asarray(matrix, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("matrix must be square")
    if unitarity_defect(u) > UNITARY_TOL:
        raise ValueError("matrix is not unitary")
    try:
        eig = np.linalg.eigvals(u)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigensolver failed: {exc}") from exc
    return Spectrum(_angles(eig), "circle")


def _levels_for(cfg: EnsembleConfig, indices: Sequence[int]) -> np.ndarray:
    mats = np.stack([sample_matrix(cfg, i) for i in indices])
    if cfg.kind == "circle":
        if unitarity_defect(mats) > UNITARY_TOL:
            raise ArithmeticError("Floquet matrix lost unitarity")
        return _angles(np.linalg.eigvals(mats))
    _check_hermitian(mats)
    return np.linalg.eigvalsh(mats)


def ensemble_levels(cfg: EnsembleConfig, indices: Optional[Iterable[int]] = None,
                    threads: int = 1) -> np.ndarray:
    """Sorted spectra of the requested realizations, one row each.

    Defaults to ``range(cfg.count)``. Rows are in index order for any ``threads``.
    """
    idx = list(range(cfg.count) if indices is None else indices)
    n = cfg.N
    chunk = max(1, _CHUNK_ELEMENTS // (n * n))
    chunks = [idx[i:i + chunk] for i in range(0, len(idx), chunk)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _levels_for(cfg, c), chunks))
    else:
        parts = [_levels_for(cfg, c) for c in chunks]
    if not parts:
        return np.empty((0, n))
    return np.concatenate(parts, axis=0)


def ensemble_spectra(cfg: EnsembleConfig, indices: Optional[Iterable[int]] = None,
                     threads: int = 1) -> list:
    return [Spectrum(row, cfg.kind) for row in ensemble_levels(cfg, indices, threads)]
