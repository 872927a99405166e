"""Spectral efficiency under the AQNM, receiver power and energy efficiency."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from .combining import AnalogCombiner, chain_power_profile
from .channel import MultiUserChannel
from .quantization import aqnm_linearize

__all__ = [
    "ARCH_TAGS",
    "PowerModel",
    "OperatingPoint",
    "sinr",
    "spectral_efficiency",
    "adc_power",
    "receiver_power",
    "energy_efficiency",
    "dominates",
    "pareto_frontier",
]

ARCH_TAGS = ("dbf", "hbf_one_stage", "hbf_two_stage", "hbf_adaptive")


@dataclass(frozen=True)
class PowerModel:
    """Receiver component powers in milliwatts; ADC figure of merit in J/step."""

    p_lna: float = 39.0
    p_ps: float = 2.0
    p_mixer: float = 16.8
    p_lo: float = 5.0
    p_lpf: float = 14.0
    p_bbamp: float = 5.0
    adc_fom: float = 494e-15
    sampling_rate: float = 1e9
    second_stage_powered: bool = False
    power_off_zero_bit_chains: bool = True
    adc_off_at_zero_bits: bool = True

    def __post_init__(self):
        for name in ("p_lna", "p_ps", "p_mixer", "p_lo", "p_lpf", "p_bbamp", "adc_fom"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not self.sampling_rate > 0:
            raise ValueError(f"sampling_rate must be > 0, got {self.sampling_rate}")

    @property
    def p_rf_chain(self) -> float:
        """Mixer + low-pass filter + baseband amplifier, in mW."""
        return self.p_mixer + self.p_lpf + self.p_bbamp


@dataclass(frozen=True)
class OperatingPoint:
    se: float
    power: float
    ee: float
    arch_tag: str
    n_rf: int
    bits_descriptor: object = None


def _matrix(x):
    if isinstance(x, (AnalogCombiner, MultiUserChannel)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def sinr(channel, combiner, bits, snr: float, digital: str = "zf",
         kind: str = "lloyd_max") -> np.ndarray:
    """Per-user SINR after analog combining, AQNM quantization and a linear digital combiner.

    ``bits`` may contain ``inf`` for ideal ADCs.  ``digital`` is ``"zf"``
    (pseudo-inverse), ``"mrc"`` (matched filter) or ``"mmse"`` (LMMSE with
    the quantization noise in the covariance).  Only ``"mmse"`` is
    guaranteed not to lose SINR when a chain gains resolution.
    """
    h = _matrix(channel)
    w = _matrix(combiner)
    b = np.broadcast_to(np.asarray(bits, dtype=float), (w.shape[1],))
    if w.shape[0] != h.shape[0]:
        raise ValueError(f"combiner has {w.shape[0]} inputs but channel has {h.shape[0]} antennas")
    if not snr > 0:
        raise ValueError(f"snr must be > 0, got {snr}")
    aqnm = aqnm_linearize(b, chain_power_profile(w, h, snr), kind)
    alpha = aqnm.alpha_diag
    g = alpha[:, None] * (w.conj().T @ h)
    noise = np.diag(aqnm.quant_noise_var) + alpha[:, None] * (w.conj().T @ w) * alpha[None, :]

    if digital == "mrc":
        d = g
    elif digital == "zf":
        d = np.linalg.pinv(g).conj().T
    elif digital == "mmse":
        cov = snr * g @ g.conj().T + noise
        d = np.linalg.pinv(cov, hermitian=True) @ g
    else:
        raise ValueError(f"unknown digital combiner {digital!r}; expected 'mrc', 'zf' or 'mmse'")

    cross = np.abs(d.conj().T @ g) ** 2  # [u, v] = |d_u^H g_v|^2
    signal = snr * np.diag(cross)
    interference = snr * (cross.sum(axis=1) - np.diag(cross))
    thermal = np.real(np.einsum("iu,ij,ju->u", d.conj(), noise, d))
    denom = interference + thermal
    out = np.zeros_like(signal)
    ok = signal > 0
    out[ok] = signal[ok] / denom[ok]
    return out


def spectral_efficiency(channel, combiner, bits, snr: float, digital: str = "zf",
                        kind: str = "lloyd_max") -> float:
    """Sum rate ``sum_u log2(1 + SINR_u)`` in bits/s/Hz."""
    return float(np.sum(np.log2(1.0 + sinr(channel, combiner, bits, snr, digital, kind))))


def adc_power(bits, model: PowerModel) -> np.ndarray:
    """Power of one ADC in watts, ``fom * f_s * 2**b``."""
    b = np.asarray(bits, dtype=float)
    p = model.adc_fom * model.sampling_rate * np.exp2(b)
    if model.adc_off_at_zero_bits:
        p = np.where(b > 0, p, 0.0)
    return p


def receiver_power(arch_tag: str, n_rf: int, bits, model: PowerModel, n_antennas: int) -> float:
    """Total receiver power in watts for one architecture.

    ``bits`` is one resolution per RF chain (or a scalar for uniform bits);
    for ``dbf`` every antenna has its own chain and ``n_rf`` is ignored.
    """
    if arch_tag not in ARCH_TAGS:
        raise ValueError(f"unknown architecture {arch_tag!r}; expected one of {ARCH_TAGS}")
    if n_antennas < 1 or n_rf < 1:
        raise ValueError("n_antennas and n_rf must be positive")
    n_chains = n_antennas if arch_tag == "dbf" else n_rf
    b = np.broadcast_to(np.asarray(bits, dtype=float), (n_chains,))
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ValueError("bits must be finite and non-negative")

    mw = n_antennas * model.p_lna + model.p_lo
    active = np.ones(n_chains, dtype=bool)
    if arch_tag == "hbf_adaptive" and model.power_off_zero_bit_chains:
        active = b > 0
    if arch_tag != "dbf":
        mw += n_antennas * n_rf * model.p_ps
        if arch_tag == "hbf_two_stage" and model.second_stage_powered:
            mw += n_rf * n_rf * model.p_ps
    mw += np.count_nonzero(active) * model.p_rf_chain
    adc = 2.0 * float(np.sum(adc_power(b, model)[active]))
    return mw * 1e-3 + adc


def energy_efficiency(se: float, power: float, model: PowerModel) -> float:
    """Bits per joule, ``f_s * se / power``."""
    if not power > 0:
        raise ValueError(f"power must be > 0, got {power}")
    return model.sampling_rate * se / power


def dominates(a: OperatingPoint, b: OperatingPoint) -> bool:
    """True if ``a`` is at least as good as ``b`` in SE and EE and better in one."""
    return a.se >= b.se and a.ee >= b.ee and (a.se > b.se or a.ee > b.ee)


def pareto_frontier(points: Iterable[OperatingPoint]) -> List[OperatingPoint]:
    """Non-dominated points in (SE, EE), ordered by descending SE (stable)."""
    pts = list(points)
    keep = [p for p in pts if not any(dominates(q, p) for q in pts)]
    return sorted(keep, key=lambda p: -p.se)
