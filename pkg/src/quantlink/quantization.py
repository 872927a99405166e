"""Scalar ADC models and the additive quantization noise model (AQNM).

Each complex sample is quantized as two independent real dimensions by the
same unit-variance codebook, after scaling by the per-chain power (ideal
automatic gain control).  Under the AQNM a ``b``-bit ADC pair acts as

    z = alpha * y + q,    alpha = 1 - beta(b),
    E[|q|^2] = alpha * (1 - alpha) * E[|y|^2],

where ``beta(b)`` is the normalized mean squared error of the Lloyd-Max
quantizer for a Gaussian source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .errors import UnsupportedSizeError

__all__ = [
    "MAX_BITS",
    "ScalarCodebook",
    "DistortionTable",
    "AqnmModel",
    "lloyd_max",
    "uniform_quantizer",
    "distortion_table",
    "beta",
    "quantize",
    "quantize_real",
    "aqnm_linearize",
    "measured_msqe",
]

MAX_BITS = 12
_TOL = 1e-10
_MAX_ITER = 200_000

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ScalarCodebook:
    """Quantizer for a unit-variance real input.

    ``thresholds`` has ``2**bits - 1`` entries, ``levels`` has ``2**bits``.
    """

    bits: int
    thresholds: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        if len(lv) != 2**self.bits or len(t) != len(lv) - 1:
            raise ValueError("codebook sizes do not match its bit count")
        if len(t) and not np.all((lv[:-1] < t) & (t < lv[1:])):
            raise ValueError("levels must strictly interleave thresholds")
        t.setflags(write=False)
        lv.setflags(write=False)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "levels", lv)

    def indices(self, x) -> np.ndarray:
        """Cell index of every real input."""
        return np.searchsorted(self.thresholds, x, side="right")

    def __call__(self, x) -> np.ndarray:
        return self.levels[self.indices(x)]


def _pdf(x):
    return _INV_SQRT2PI * np.exp(-0.5 * x * x)


def _cell_moments(edges: np.ndarray):
    """Probability, first and second moments of N(0,1) on each cell."""
    upper_tail = special.ndtr(-edges)  # P(X > edge), accurate for large positive edges
    prob = upper_tail[:-1] - upper_tail[1:]
    # Cells in the lower half lose precision through upper_tail; use the CDF there.
    cdf = special.ndtr(edges)
    low = edges[1:] <= 0
    prob = np.where(low, cdf[1:] - cdf[:-1], prob)
    finite = np.isfinite(edges)
    safe = np.where(finite, edges, 0.0)
    dens = np.where(finite, _pdf(safe), 0.0)
    first = dens[:-1] - dens[1:]
    xd = safe * dens
    second = prob + xd[:-1] - xd[1:]
    return prob, first, second


def _distortion(thresholds: np.ndarray, levels: np.ndarray) -> float:
    edges = np.concatenate(([-np.inf], thresholds, [np.inf]))
    prob, first, second = _cell_moments(edges)
    return float(np.sum(second - 2.0 * levels * first + levels**2 * prob))


def _initial_levels(n: int) -> np.ndarray:
    # Asymptotically optimal point density is proportional to pdf**(1/3),
    # i.e. the quantiles of N(0, 3).
    u = (np.arange(n) + 0.5) / n
    return math.sqrt(3.0) * special.ndtri(u)


def _lloyd_step(levels: np.ndarray) -> np.ndarray:
    edges = np.concatenate(([-np.inf], 0.5 * (levels[:-1] + levels[1:]), [np.inf]))
    prob, first, _ = _cell_moments(edges)
    new = first / prob
    # Enforce odd symmetry against round-off drift.
    return 0.5 * (new - new[::-1])


def _newton_polish(levels: np.ndarray, iters: int = 8) -> np.ndarray:
    """Newton iterations on ``c - centroid(midpoints(c)) = 0``.

    Each centroid depends only on its two neighbours, so the Jacobian is
    tridiagonal.
    """
    n = len(levels)
    for _ in range(iters):
        edges = np.concatenate(([-np.inf], 0.5 * (levels[:-1] + levels[1:]), [np.inf]))
        prob, first, _ = _cell_moments(edges)
        cent = first / prob
        finite = np.isfinite(edges)
        dens = np.where(finite, _pdf(np.where(finite, edges, 0.0)), 0.0)
        lo, hi = edges[:-1], edges[1:]
        d_lo = np.where(np.isfinite(lo), dens[:-1] * (cent - np.where(np.isfinite(lo), lo, 0.0)) / prob, 0.0)
        d_hi = np.where(np.isfinite(hi), dens[1:] * (np.where(np.isfinite(hi), hi, 0.0) - cent) / prob, 0.0)
        bands = np.zeros((3, n))
        bands[1] = 1.0 - 0.5 * (d_lo + d_hi)
        bands[0, 1:] = -0.5 * d_hi[:-1]
        bands[2, :-1] = -0.5 * d_lo[1:]
        delta = solve_banded((1, 1), bands, levels - cent)
        levels = levels - delta
        levels = 0.5 * (levels - levels[::-1])
        if np.max(np.abs(delta)) < 1e-13:
            break
    return levels


@lru_cache(maxsize=None)
def lloyd_max(bits: int):
    """Lloyd-Max quantizer for a standard Gaussian source.

    Iterates the nearest-neighbour / centroid conditions until no level
    moves by more than 1e-10.

    Returns
    -------
    codebook : ScalarCodebook
    beta : float
        Normalized mean squared error ``E[(X - Q(X))^2]``.
    """
    if int(bits) != bits or bits < 0:
        raise ValueError(f"bits must be a non-negative integer, got {bits}")
    if bits > MAX_BITS:
        raise UnsupportedSizeError(f"Lloyd-Max table covers 0..{MAX_BITS} bits, got {bits}")
    bits = int(bits)
    if bits == 0:
        return ScalarCodebook(0, np.empty(0), np.zeros(1)), 1.0

    levels = _initial_levels(2**bits)
    for it in range(_MAX_ITER):
        new = _lloyd_step(levels)
        step = np.max(np.abs(new - levels))
        levels = new
        if step < _TOL:
            break
        if it >= 20 and step < 1e-3:
            # Plain Lloyd converges slowly for many levels; polish with Newton.
            levels = _newton_polish(levels)
    else:
        raise RuntimeError(f"Lloyd-Max did not converge for {bits} bits")
    thresholds = 0.5 * (levels[:-1] + levels[1:])
    return ScalarCodebook(bits, thresholds, levels), _distortion(thresholds, levels)


@lru_cache(maxsize=None)
def uniform_quantizer(bits: int):
    """MSE-optimal uniform mid-rise quantizer for a standard Gaussian source.

    Returns ``(codebook, beta)`` like :func:`lloyd_max`.
    """
    if int(bits) != bits or bits < 0:
        raise ValueError(f"bits must be a non-negative integer, got {bits}")
    if bits > MAX_BITS:
        raise UnsupportedSizeError(f"uniform table covers 0..{MAX_BITS} bits, got {bits}")
    bits = int(bits)
    if bits == 0:
        return ScalarCodebook(0, np.empty(0), np.zeros(1)), 1.0
    n = 2**bits
    k = np.arange(n) - (n - 1) / 2.0

    def mse(step):
        levels = k * step
        return _distortion(0.5 * (levels[:-1] + levels[1:]), levels)

    # Step scales roughly like sqrt(bits) * 2**(1 - bits) * 2.
    guess = 4.0 * math.sqrt(bits) / n + 1e-3
    res = minimize_scalar(mse, bounds=(guess / 8, guess * 4), method="bounded",
                          options={"xatol": 1e-12})
    levels = k * res.x
    thresholds = 0.5 * (levels[:-1] + levels[1:])
    return ScalarCodebook(bits, thresholds, levels), float(res.fun)


_QUANTIZERS = {"lloyd_max": lloyd_max, "uniform": uniform_quantizer}


def _codebook_factory(kind: str):
    try:
        return _QUANTIZERS[kind]
    except KeyError:
        raise ValueError(f"unknown quantizer {kind!r}; expected one of {sorted(_QUANTIZERS)}") from None


@dataclass(frozen=True)
class DistortionTable:
    """Distortion factors ``beta(b)`` for b = 0..MAX_BITS."""

    betas: tuple
    kind: str = "lloyd_max"

    def beta(self, bits) -> np.ndarray:
        """Vectorized lookup; ``inf`` bits means perfect quantization (beta = 0)."""
        b = np.asarray(bits, dtype=float)
        if np.any(np.isnan(b) | np.isneginf(b)):
            raise UnsupportedSizeError(f"bit counts must be finite or +inf, got {bits!r}")
        out = np.zeros(b.shape)
        finite = np.isfinite(b)
        if np.any(finite):
            bf = b[finite]
            if np.any((bf < 0) | (bf != np.floor(bf)) | (bf > MAX_BITS)):
                raise UnsupportedSizeError(
                    f"bit counts must be integers in 0..{MAX_BITS} (or inf), got {bits!r}"
                )
            out[finite] = np.asarray(self.betas)[bf.astype(int)]
        return out if out.ndim else float(out)

    def alpha(self, bits):
        return 1.0 - self.beta(bits)


@lru_cache(maxsize=None)
def distortion_table(kind: str = "lloyd_max") -> DistortionTable:
    factory = _codebook_factory(kind)
    return DistortionTable(tuple(factory(b)[1] for b in range(MAX_BITS + 1)), kind)


def beta(bits, kind: str = "lloyd_max"):
    """Distortion factor for integer bit counts (``inf`` -> 0)."""
    b = np.asarray(bits, dtype=float)
    # Avoid building the full table for small lookups.
    if b.ndim == 0 and np.isfinite(b) and 0 <= b <= MAX_BITS and b == int(b):
        return _codebook_factory(kind)(int(b))[1]
    return distortion_table(kind).beta(bits)


def quantize_real(x, codebook: ScalarCodebook, scale: float) -> np.ndarray:
    """Quantize real samples with a codebook stretched by ``scale`` (input std)."""
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    x = np.asarray(x, dtype=float)
    return scale * codebook(x / scale)


def quantize(samples, codebook: ScalarCodebook, chain_power: float) -> np.ndarray:
    """Quantize complex samples of one RF chain with an ADC pair.

    Real and imaginary parts each see ``sqrt(chain_power / 2) * Q(x / sqrt(chain_power / 2))``.
    """
    if not chain_power > 0:
        raise ValueError(f"chain_power must be > 0, got {chain_power}")
    y = np.asarray(samples, dtype=complex)
    scale = math.sqrt(chain_power / 2.0)
    return quantize_real(y.real, codebook, scale) + 1j * quantize_real(y.imag, codebook, scale)


@dataclass(frozen=True)
class AqnmModel:
    """Linearized ADC bank: ``z = diag(alpha) y + q`` with diagonal ``Cov(q)``."""

    alpha_diag: np.ndarray
    quant_noise_var: np.ndarray

    @property
    def gain_matrix(self) -> np.ndarray:
        return np.diag(self.alpha_diag)

    @property
    def noise_covariance(self) -> np.ndarray:
        return np.diag(self.quant_noise_var)


def aqnm_linearize(bits: Sequence, chain_powers: Sequence, kind: str = "lloyd_max") -> AqnmModel:
    b = np.asarray(bits, dtype=float)
    p = np.asarray(chain_powers, dtype=float)
    if b.shape != p.shape:
        raise ValueError(f"bits has shape {b.shape} but chain_powers has {p.shape}")
    if np.any(p < 0):
        raise ValueError("chain powers must be non-negative")
    alpha = 1.0 - np.atleast_1d(distortion_table(kind).beta(b))
    alpha = alpha.reshape(b.shape)
    return AqnmModel(alpha, alpha * (1.0 - alpha) * p)


def measured_msqe(samples, bits: Sequence, kind: str = "lloyd_max") -> float:
    """Total empirical MSQE over chains.

    Parameters
    ----------
    samples : array_like, shape (n_chains, n_samples)
        Complex ADC inputs, one row per RF chain.
    bits : sequence of int
        Resolution of each ADC pair.

    Each chain is gain-matched to its own sample power before quantization.
    """
    y = np.atleast_2d(np.asarray(samples, dtype=complex))
    b = np.asarray(bits)
    if y.size == 0:
        raise ValueError("samples are empty")
    if b.shape != (y.shape[0],):
        raise ValueError(f"need one bit count per chain: {y.shape[0]} chains, bits shape {b.shape}")
    factory = _codebook_factory(kind)
    total = 0.0
    for row, bi in zip(y, b):
        power = float(np.mean(np.abs(row) ** 2))
        if power == 0.0:
            continue
        codebook, _ = factory(int(bi))
        err = row - quantize(row, codebook, power)
        total += float(np.mean(np.abs(err) ** 2))
    return total
