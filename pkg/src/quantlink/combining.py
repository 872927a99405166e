"""Constant-modulus analog combiners and the two-stage architecture.

The first stage collects beam-domain energy from the array onto ``N_RF``
chains; the optional second stage is a fixed ``N_RF x N_RF`` unitary with
equal-magnitude entries that spreads that energy evenly over the chains.
Since the second stage is unitary it leaves the total power (and hence the
total quantization error under equal bits) unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import MultiUserChannel
from .errors import UnsupportedSizeError

__all__ = [
    "AnalogCombiner",
    "dft_codebook",
    "hadamard",
    "select_beams",
    "beam_scores",
    "svd_first_stage",
    "second_stage",
    "compose_two_stage",
    "chain_power_profile",
]

STAGE_TAGS = ("single", "first", "second", "composed")
_TOL = 1e-9


def _as_matrix(channel) -> np.ndarray:
    if isinstance(channel, MultiUserChannel):
        return channel.matrix
    return np.asarray(channel, dtype=complex)


@dataclass(frozen=True)
class AnalogCombiner:
    """Analog combining matrix.

    ``modulus`` is the required magnitude of every entry; 0 means the
    matrix is not constant-modulus (e.g. an ideal SVD first stage).
    """

    matrix: np.ndarray
    stage_tag: str = "single"
    modulus: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2:
            raise ValueError("combiner matrix must be 2-D")
        if self.stage_tag not in STAGE_TAGS:
            raise ValueError(f"stage_tag must be one of {STAGE_TAGS}, got {self.stage_tag!r}")
        if self.modulus < 0:
            raise ValueError("modulus must be >= 0")
        if self.modulus > 0 and not np.allclose(np.abs(m), self.modulus, rtol=0, atol=_TOL):
            raise ValueError("constant modulus condition violated")
        if self.stage_tag == "second":
            if m.shape[0] != m.shape[1]:
                raise ValueError("second-stage combiner must be square")
            if np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0])) > _TOL * m.shape[0]:
                raise ValueError("second-stage combiner must be unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_rf(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.matrix.shape[0]


def dft_codebook(n: int) -> np.ndarray:
    """Unitary ``n``-point DFT matrix, entry (m, k) = exp(-2j pi m k / n) / sqrt(n)."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def hadamard(n: int) -> np.ndarray:
    """Normalized Sylvester Hadamard matrix; ``n`` must be a power of two."""
    if int(n) != n or n < 1 or (n & (n - 1)) != 0:
        raise UnsupportedSizeError(
            f"Hadamard second stage needs n_rf to be a power of two (Sylvester construction), got {n}"
        )
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h / np.sqrt(n)


def beam_scores(channel) -> np.ndarray:
    """Aggregated gain ``||f^H H||^2`` of every DFT codebook column."""
    h = _as_matrix(channel)
    f = dft_codebook(h.shape[0])
    return np.sum(np.abs(f.conj().T @ h) ** 2, axis=1)


def select_beams(channel, n_rf: int) -> AnalogCombiner:
    """Pick the ``n_rf`` strongest columns of the N_r-point DFT codebook.

    Columns are ordered by descending aggregated gain, ties going to the
    lower codebook index.
    """
    h = _as_matrix(channel)
    n_r = h.shape[0]
    if int(n_rf) != n_rf or not 1 <= n_rf <= n_r:
        raise ValueError(f"n_rf must be in [1, {n_r}], got {n_rf}")
    scores = beam_scores(h)
    chosen = np.argsort(-scores, kind="stable")[:n_rf]
    return AnalogCombiner(dft_codebook(n_r)[:, chosen], "first", 1.0 / np.sqrt(n_r))


def svd_first_stage(channel, n_rf: int) -> AnalogCombiner:
    """Ideal first stage from the left-singular vectors of the channel.

    When ``n_rf`` exceeds the channel rank the basis is completed with
    further left-singular vectors of the full SVD, which span only noise.
    """
    h = _as_matrix(channel)
    n_r = h.shape[0]
    if int(n_rf) != n_rf or not 1 <= n_rf <= n_r:
        raise ValueError(f"n_rf must be in [1, {n_r}], got {n_rf}")
    u, _, _ = np.linalg.svd(h, full_matrices=True)
    return AnalogCombiner(u[:, :n_rf], "first", 0.0)


def second_stage(n_rf: int, kind: str = "dft") -> AnalogCombiner:
    if kind == "dft":
        m = dft_codebook(n_rf)
    elif kind == "hadamard":
        m = hadamard(n_rf)
    else:
        raise ValueError(f"unknown second-stage kind {kind!r}; expected 'dft' or 'hadamard'")
    return AnalogCombiner(m, "second", 1.0 / np.sqrt(n_rf))


def compose_two_stage(first: AnalogCombiner, second: AnalogCombiner) -> AnalogCombiner:
    if second.matrix.shape[0] != second.matrix.shape[1]:
        raise ValueError("second stage must be square")
    if first.n_rf != second.matrix.shape[0]:
        raise ValueError(
            f"first stage has {first.n_rf} outputs but second stage expects {second.matrix.shape[0]}"
        )
    modulus = 0.0
    if first.modulus > 0 and second.modulus > 0 and first.n_rf == 1:
        modulus = first.modulus * second.modulus
    return AnalogCombiner(first.matrix @ second.matrix, "composed", modulus)


def chain_power_profile(combiner, channel, snr: float, include_noise: bool = True) -> np.ndarray:
    """Average input power of every RF chain, ``diag(W^H (snr H H^H + I) W)``.

    With ``include_noise=False`` only the signal part ``snr diag(W^H H H^H W)``
    is returned.
    """
    w = combiner.matrix if isinstance(combiner, AnalogCombiner) else np.asarray(combiner, dtype=complex)
    h = _as_matrix(channel)
    if snr <= 0:
        raise ValueError(f"snr must be > 0, got {snr}")
    if w.shape[0] != h.shape[0]:
        raise ValueError(f"combiner has {w.shape[0]} inputs but channel has {h.shape[0]} antennas")
    eff = w.conj().T @ h
    power = snr * np.sum(np.abs(eff) ** 2, axis=1)
    if include_noise:
        power = power + np.sum(np.abs(w) ** 2, axis=0)
    return power
