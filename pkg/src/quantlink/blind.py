"""Learning-based blind detection from coarsely quantized observations.

The receiver never estimates the channel.  During training every joint
user-symbol tuple ``k`` is sent ``n_tr`` times and the receiver tabulates,
per real output dimension ``j``, how often each quantizer bin occurs.  The
table is then used as a likelihood for maximum-likelihood detection, or
turned into codewords plus reliability weights for weighted minimum
distance (WMD) decoding.

Observations are integer bin indices laid out as
``[Re y_0, Im y_0, Re y_1, Im y_1, ...]``; for one-bit ADCs bin 1 means a
non-negative sample.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import UnsupportedSizeError

__all__ = [
    "SymbolCodebook",
    "qpsk",
    "qam",
    "LikelihoodTable",
    "DitherConfig",
    "BlindLink",
    "real_dims",
    "one_bit",
    "train_empirical",
    "train_dithered",
    "true_likelihood",
    "detect_ml",
    "build_wmd",
    "detect_wmd",
    "detect_hamming",
    "evaluate_ser",
]

_CHUNK = 8192


def qpsk() -> np.ndarray:
    return np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)


def qam(order: int) -> np.ndarray:
    """Square QAM with unit average energy."""
    m = int(round(np.sqrt(order)))
    if m * m != order or m < 2:
        raise ValueError(f"QAM order must be a perfect square >= 4, got {order}")
    axis = np.arange(m) * 2 - (m - 1)
    pts = (axis[None, :] + 1j * axis[:, None]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


@dataclass(frozen=True)
class SymbolCodebook:
    """Per-user constellation and the ``M**N_u`` joint symbols in lexicographic order."""

    constellation: np.ndarray
    num_users: int
    joint_symbols: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.constellation, dtype=complex)
        if pts.ndim != 1 or len(pts) < 1:
            raise ValueError("constellation must be a non-empty 1-D array")
        if abs(np.mean(np.abs(pts) ** 2) - 1.0) > 1e-12:
            raise ValueError("constellation must have unit average energy")
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")
        joint = np.array(list(itertools.product(pts, repeat=self.num_users)), dtype=complex)
        object.__setattr__(self, "constellation", pts)
        object.__setattr__(self, "joint_symbols", joint)

    @property
    def order(self) -> int:
        return len(self.constellation)

    @property
    def size(self) -> int:
        """Number of joint symbols K."""
        return len(self.joint_symbols)


def real_dims(y) -> np.ndarray:
    """Interleave real and imaginary parts along the last axis."""
    y = np.asarray(y, dtype=complex)
    out = np.empty(y.shape[:-1] + (2 * y.shape[-1],))
    out[..., 0::2] = y.real
    out[..., 1::2] = y.imag
    return out


def one_bit(y) -> np.ndarray:
    """One-bit ADC bins of complex samples, shape ``(..., 2 N_r)``."""
    return (real_dims(y) >= 0).astype(np.int8)


@dataclass
class BlindLink:
    """Block-fading uplink ``y = sqrt(snr) H x + n`` with ``n ~ CN(0, I)``.

    Counts every transmission so training cost can be audited.
    """

    channel: np.ndarray
    codebook: SymbolCodebook
    snr: float
    transmissions: int = 0

    def __post_init__(self):
        self.channel = np.asarray(self.channel, dtype=complex)
        if self.channel.shape[1] != self.codebook.num_users:
            raise ValueError("channel columns must match the number of users")

    @property
    def noise_sigma(self) -> float:
        """Noise standard deviation per real dimension."""
        return np.sqrt(0.5)

    @property
    def num_dims(self) -> int:
        return 2 * self.channel.shape[0]

    def noiseless(self, k) -> np.ndarray:
        """Noise-free received samples for joint-symbol indices ``k``."""
        x = self.codebook.joint_symbols[np.asarray(k)]
        return np.sqrt(self.snr) * x @ self.channel.T

    def __call__(self, k, rng: np.random.Generator) -> np.ndarray:
        k = np.asarray(k)
        clean = self.noiseless(k)
        noise = (rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)) * self.noise_sigma
        self.transmissions += k.size
        return clean + noise


@dataclass(frozen=True)
class LikelihoodTable:
    """``probs[j, k, bin]`` = estimated P(bin at dimension j | joint symbol k)."""

    probs: np.ndarray
    n_tr: int
    clamp_eps: float

    @property
    def num_dims(self) -> int:
        return self.probs.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.probs.shape[1]

    @property
    def num_bins(self) -> int:
        return self.probs.shape[2]

    def log_probs(self) -> np.ndarray:
        return np.log(self.probs)


@dataclass(frozen=True)
class DitherConfig:
    sigma_d: float = 1.0
    invert: bool = True

    def __post_init__(self):
        if not np.isfinite(self.sigma_d) or self.sigma_d < 0:
            raise ValueError(f"sigma_d must be finite and >= 0, got {self.sigma_d}")


def _default_eps(n_tr: int) -> float:
    return min(1.0 / (2 * n_tr), 0.25)


def _clamp(probs: np.ndarray, eps: float) -> np.ndarray:
    if not 0 < eps < 0.5:
        raise ValueError(f"clamp_eps must be in (0, 1/2), got {eps}")
    p = np.clip(probs, eps, 1.0 - eps)
    if p.shape[-1] > 2:
        p = p / p.sum(axis=-1, keepdims=True)
    return p


def train_empirical(observations, codebook: SymbolCodebook, clamp_eps: float | None = None,
                    num_bins: int = 2) -> LikelihoodTable:
    """Empirical likelihoods from training observations.

    Parameters
    ----------
    observations : array_like of int, shape (K, n_tr, J)
        Quantizer bins observed for each joint symbol and repetition.
    codebook : SymbolCodebook
    clamp_eps : float, optional
        Probability floor; defaults to ``1 / (2 n_tr)``, at most 1/4.
    num_bins : int
        Number of quantizer output bins (2 for one-bit ADCs).
    """
    obs = np.asarray(observations)
    if obs.ndim != 3 or obs.shape[0] != codebook.size:
        raise ValueError(
            f"observations must have shape (K={codebook.size}, n_tr, J), got {obs.shape}"
        )
    n_tr = obs.shape[1]
    if n_tr < 1:
        raise ValueError("need at least one training repetition")
    if obs.min() < 0 or obs.max() >= num_bins:
        raise ValueError(f"observed bins outside 0..{num_bins - 1}")
    eps = _default_eps(n_tr) if clamp_eps is None else clamp_eps
    # counts[j, k, bin]
    onehot = obs[..., None] == np.arange(num_bins)
    counts = onehot.sum(axis=1).transpose(1, 0, 2)
    return LikelihoodTable(_clamp(counts / n_tr, eps), n_tr, eps)


def _training_indices(codebook: SymbolCodebook, n_tr: int) -> np.ndarray:
    return np.repeat(np.arange(codebook.size), n_tr)


def train_dithered(link: Callable, codebook: SymbolCodebook, dither: DitherConfig,
                   noise_sigma: float, n_tr: int, rng: np.random.Generator,
                   clamp_eps: float | None = None) -> LikelihoodTable:
    """One-bit training with Gaussian dither added before the ADCs.

    With ``dither.invert`` the empirical probability ``p_d`` of a positive
    sign is mapped back to the noise-free mean
    ``mu = sqrt(noise_sigma**2 + sigma_d**2) * Phi^{-1}(p_d)`` and the stored
    likelihood is ``Phi(mu / noise_sigma)``, i.e. the likelihood the ADC sees
    without dither.  ``p_d`` is first clamped to ``[1/(2 n_tr), 1 - 1/(2 n_tr)]``.

    By default the table floor ``clamp_eps`` is the smallest likelihood the
    inversion can produce from that clamped range, so the stored values are
    exactly ``Phi(mu / noise_sigma)``.  Without inversion, or for a
    noiseless channel, the floor is the empirical default ``1 / (2 n_tr)``.
    """
    if n_tr < 1:
        raise ValueError("n_tr must be >= 1")
    if not noise_sigma >= 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if dither.invert and dither.sigma_d <= 0:
        raise ValueError("dither inversion needs sigma_d > 0")
    eps = clamp_eps
    if eps is None:
        eps = _default_eps(n_tr)
        if dither.invert and noise_sigma > 0:
            spread = np.hypot(noise_sigma, dither.sigma_d) / noise_sigma
            eps = min(eps, float(special.ndtr(spread * special.ndtri(1.0 / (2 * n_tr)))))
            eps = max(eps, np.finfo(float).tiny)
    k = _training_indices(codebook, n_tr)
    samples = real_dims(link(k, rng))
    if dither.sigma_d > 0:
        samples = samples + dither.sigma_d * rng.standard_normal(samples.shape)
    bins = (samples >= 0).reshape(codebook.size, n_tr, -1)
    p_pos = bins.mean(axis=1).T  # [j, k]
    if dither.invert:
        floor = 1.0 / (2 * n_tr)
        p_pos = np.clip(p_pos, floor, 1.0 - floor)
        mu = np.hypot(noise_sigma, dither.sigma_d) * special.ndtri(p_pos)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = mu / noise_sigma
        # noiseless limit: the sign of mu decides, mu = 0 stays uninformative
        p_pos = special.ndtr(np.where(np.isnan(z), 0.0, z))
    probs = np.stack([1.0 - p_pos, p_pos], axis=-1)
    return LikelihoodTable(_clamp(probs, eps), n_tr, eps)


def true_likelihood(link: BlindLink, clamp_eps: float = 1e-300) -> LikelihoodTable:
    """Exact one-bit likelihoods ``Phi(+-mu / sigma)`` from the true channel."""
    mu = real_dims(link.noiseless(np.arange(link.codebook.size))).T  # [j, k]
    z = mu / link.noise_sigma
    probs = np.stack([special.ndtr(-z), special.ndtr(z)], axis=-1)
    return LikelihoodTable(np.clip(probs, clamp_eps, 1.0), 0, clamp_eps)


def _as_obs(observation, num_dims: int) -> np.ndarray:
    obs = np.asarray(observation)
    if obs.shape[-1] != num_dims:
        raise ValueError(f"observation has {obs.shape[-1]} dimensions, table has {num_dims}")
    return obs


def detect_ml(observation, table: LikelihoodTable) -> np.ndarray:
    """Joint-symbol index maximizing ``sum_j log P(obs_j | k)``; ties go to the lowest k.

    ``observation`` is one bin vector of length J or a batch of shape (n, J).
    """
    obs = _as_obs(observation, table.num_dims)
    if obs.size and (obs.min() < 0 or obs.max() >= table.num_bins):
        raise ValueError(f"observation bins must lie in 0..{table.num_bins - 1}")
    single = obs.ndim == 1
    obs = np.atleast_2d(obs)
    logp = table.log_probs()
    out = np.empty(len(obs), dtype=int)
    if table.num_bins == 2:
        base = logp[:, :, 0].sum(axis=0)
        diff = logp[:, :, 1] - logp[:, :, 0]
        for s in range(0, len(obs), _CHUNK):
            score = base + obs[s:s + _CHUNK] @ diff
            out[s:s + _CHUNK] = np.argmax(score, axis=1)
    else:
        j = np.arange(table.num_dims)
        for s in range(0, len(obs), _CHUNK // 8):
            chunk = obs[s:s + _CHUNK // 8]
            score = logp[j[None, :], :, chunk].sum(axis=1)
            out[s:s + len(chunk)] = np.argmax(score, axis=1)
    return int(out[0]) if single else out


def build_wmd(table: LikelihoodTable):
    """Codewords and reliability weights for weighted minimum distance decoding.

    Returns
    -------
    codewords : ndarray of int, shape (J, K)
        Most likely bin of every dimension for every joint symbol.
    weights : ndarray, shape (J, K)
        ``log((1 - eps) / eps)`` with ``eps`` the estimated transition probability.
    """
    if table.num_bins != 2:
        raise UnsupportedSizeError("WMD decoding is defined for one-bit tables only")
    codewords = (table.probs[:, :, 1] > table.probs[:, :, 0]).astype(np.int8)
    eps = 1.0 - np.take_along_axis(table.probs, codewords[..., None].astype(int), axis=-1)[..., 0]
    eps = np.clip(eps, table.clamp_eps, 0.5)
    return codewords, np.log((1.0 - eps) / eps)


def detect_wmd(observation, codewords, weights) -> np.ndarray:
    """Index minimizing ``sum_j w[j, k] * [obs_j != c[j, k]]``; ties go to the lowest k."""
    c = np.asarray(codewords)
    w = np.asarray(weights, dtype=float)
    if c.shape != w.shape:
        raise ValueError("codewords and weights must have the same shape")
    obs = _as_obs(observation, c.shape[0])
    single = obs.ndim == 1
    if w.size and w.flat[0] > 0 and np.all(w == w.flat[0]):
        # equal weights: integer Hamming counts, so float rounding cannot split ties
        out = _hamming(np.atleast_2d(obs), c)
        return int(out[0]) if single else out
    obs = np.atleast_2d(obs).astype(float)
    # mismatch = o + c - 2 o c for binary o, c
    base = (w * c).sum(axis=0)
    slope = w * (1 - 2 * c)
    out = np.empty(len(obs), dtype=int)
    for s in range(0, len(obs), _CHUNK):
        out[s:s + _CHUNK] = np.argmin(base + obs[s:s + _CHUNK] @ slope, axis=1)
    return int(out[0]) if single else out


def _hamming(obs: np.ndarray, c: np.ndarray) -> np.ndarray:
    ones = c.sum(axis=0).astype(np.int64)
    slope = (1 - 2 * c).astype(np.int64)
    out = np.empty(len(obs), dtype=int)
    for s in range(0, len(obs), _CHUNK):
        out[s:s + _CHUNK] = np.argmin(ones + obs[s:s + _CHUNK].astype(np.int64) @ slope, axis=1)
    return out


def detect_hamming(observation, codewords) -> np.ndarray:
    """Unweighted minimum Hamming distance decoding; ties go to the lowest k."""
    c = np.asarray(codewords)
    obs = _as_obs(observation, c.shape[0])
    out = _hamming(np.atleast_2d(obs), c)
    return int(out[0]) if obs.ndim == 1 else out


def evaluate_ser(detector: Callable, link: Callable, codebook: SymbolCodebook,
                 num_trials: int, rng: np.random.Generator, batch: int = 65536) -> float:
    """Monte Carlo joint-symbol error rate on fresh one-bit payload observations.

    ``detector`` maps a batch of bin vectors to joint-symbol indices.  The
    payload symbols and noise depend only on ``rng``, so two detectors
    evaluated with identically seeded generators see the same observations.
    """
    if num_trials < 1:
        raise ValueError("num_trials must be >= 1")
    errors = 0
    done = 0
    while done < num_trials:
        n = min(batch, num_trials - done)
        k = rng.integers(codebook.size, size=n)
        obs = one_bit(link(k, rng))
        errors += int(np.count_nonzero(np.asarray(detector(obs)) != k))
        done += n
    return errors / num_trials
