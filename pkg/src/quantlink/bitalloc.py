"""Resolution-adaptive ADC bit allocation.

With ADC power proportional to ``2**b`` and the high-resolution distortion
model ``beta(b) ~ beta0 * 2**(-2b)``, minimizing the total MSQE
``sum_i beta(b_i) g_i`` subject to ``sum_i 2**b_i = N_RF * 2**bbar`` gives
``2**(3 b_i)`` proportional to ``g_i``, i.e.

    b_i = bbar + log2(N_RF * g_i**(1/3) / sum_j g_j**(1/3)).

The real solution is floored, clamped to ``[0, b_max]`` and refilled
greedily.  An ADC pair with zero bits is switched off and draws no power.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, UnsupportedSizeError
from .quantization import MAX_BITS, distortion_table

__all__ = [
    "PowerBudget",
    "BitAllocation",
    "adc_cost",
    "aggregated_gains",
    "allocate_real",
    "round_allocation",
    "adaptive_allocation",
    "allocation_msqe",
    "brute_force_allocation",
]


@dataclass(frozen=True)
class PowerBudget:
    """ADC power budget of ``n_rf`` pairs at a fixed ``constraint_bits`` resolution."""

    constraint_bits: int
    n_rf: int

    def __post_init__(self):
        if int(self.constraint_bits) != self.constraint_bits or self.constraint_bits < 1:
            raise ValueError(f"constraint_bits must be a positive integer, got {self.constraint_bits}")
        if int(self.n_rf) != self.n_rf or self.n_rf < 1:
            raise ValueError(f"n_rf must be a positive integer, got {self.n_rf}")

    @property
    def budget(self) -> int:
        return self.n_rf * 2**self.constraint_bits


@dataclass(frozen=True)
class BitAllocation:
    real_bits: np.ndarray
    int_bits: np.ndarray

    @property
    def active_mask(self) -> np.ndarray:
        return self.int_bits > 0

    @property
    def cost(self) -> int:
        return int(adc_cost(self.int_bits).sum())


def adc_cost(bits) -> np.ndarray:
    """Relative ADC pair power ``2**b``, zero for a switched-off (0-bit) pair."""
    b = np.asarray(bits, dtype=int)
    return np.where(b > 0, 2**b, 0)


def aggregated_gains(effective_channel, snr: float | None = None) -> np.ndarray:
    """Row energy of the analog-combined channel ``W^H H``.

    If ``snr`` is given, returns the SNR-weighted variant ``snr * g + 1``
    (the chain input power with unit noise) instead.
    """
    g = np.sum(np.abs(np.atleast_2d(np.asarray(effective_channel))) ** 2, axis=1)
    if snr is not None:
        return snr * g + 1.0
    return g


def allocate_real(gains, budget: PowerBudget) -> np.ndarray:
    """Closed-form real-valued bit allocation; zero gain gives ``-inf`` bits."""
    g = np.asarray(gains, dtype=float)
    if g.shape != (budget.n_rf,):
        raise ValueError(f"expected {budget.n_rf} gains, got shape {g.shape}")
    if np.any(g < 0):
        raise ValueError("gains must be non-negative")
    if not np.any(g > 0):
        raise DegenerateInputError("all aggregated gains are zero")
    cube = np.cbrt(g)
    with np.errstate(divide="ignore"):
        return budget.constraint_bits + np.log2(cube * budget.n_rf / cube.sum())


def round_allocation(real_bits, budget: PowerBudget, b_max: int = MAX_BITS,
                     chain_powers=None, kind: str = "lloyd_max") -> BitAllocation:
    """Integer bits from the real solution: floor, clamp, then greedy refill.

    The refill repeatedly adds one bit to the chain with the largest MSQE
    decrease per unit of extra ADC power that still fits the budget.  Only
    chains with a positive real allocation take part, so a chain the closed
    form switches off stays off.  The MSQE weights are ``chain_powers`` if
    given, otherwise ``2**(3 b)`` of the real solution (proportional to the
    gains it was derived from).
    """
    real = np.asarray(real_bits, dtype=float)
    if b_max > MAX_BITS:
        raise UnsupportedSizeError(f"b_max must be <= {MAX_BITS}")
    bits = np.clip(np.floor(np.nan_to_num(real, neginf=-1.0)), 0, b_max).astype(int)
    if chain_powers is None:
        with np.errstate(over="ignore"):
            weights = np.exp2(3.0 * np.minimum(real - real[np.isfinite(real)].max(initial=0.0), 0.0))
        weights = np.where(np.isfinite(real), weights, 0.0)
    else:
        weights = np.asarray(chain_powers, dtype=float)
        if weights.shape != real.shape:
            raise ValueError("chain_powers must match real_bits")
    betas = np.asarray(distortion_table(kind).betas)

    eligible = real > 0
    headroom = budget.budget - int(adc_cost(bits).sum())
    while True:
        room = eligible & (bits < b_max)
        step_cost = np.where(room, adc_cost(np.minimum(bits + 1, b_max)) - adc_cost(bits), 0)
        fits = room & (step_cost <= headroom) & (step_cost > 0)
        if not np.any(fits):
            break
        gain = (betas[bits] - betas[np.minimum(bits + 1, b_max)]) * weights
        score = np.where(fits, gain / np.where(fits, step_cost, 1), -np.inf)
        i = int(np.argmax(score))
        bits[i] += 1
        headroom -= int(step_cost[i])
    return BitAllocation(real, bits)


def adaptive_allocation(gains, budget: PowerBudget, chain_powers=None,
                        b_max: int = MAX_BITS, kind: str = "lloyd_max") -> BitAllocation:
    """Real allocation followed by rounding; see :func:`allocate_real`."""
    return round_allocation(allocate_real(gains, budget), budget, b_max, chain_powers, kind)


def allocation_msqe(alloc, chain_powers, kind: str = "lloyd_max") -> float:
    """Total analytic MSQE ``sum_i beta(b_i) p_i``; a 0-bit chain loses all of ``p_i``."""
    bits = alloc.int_bits if isinstance(alloc, BitAllocation) else np.asarray(alloc)
    p = np.asarray(chain_powers, dtype=float)
    if bits.shape != p.shape:
        raise ValueError(f"{bits.shape[0]} bit counts for {p.shape} chain powers")
    return float(np.sum(distortion_table(kind).beta(bits) * p))


def brute_force_allocation(gains, chain_powers, budget: PowerBudget, b_max: int = 4,
                           kind: str = "lloyd_max") -> BitAllocation:
    """Exact MSQE-minimizing integer allocation by enumeration.

    Limited to ``n_rf <= 8`` and ``b_max <= 4``.  Among equal minimizers the
    lexicographically smallest bit vector is returned.
    """
    n = budget.n_rf
    if n > 8 or b_max > 4:
        raise UnsupportedSizeError(f"exhaustive search limited to n_rf <= 8 and b_max <= 4 (got {n}, {b_max})")
    p = np.asarray(chain_powers, dtype=float)
    if p.shape != (n,):
        raise ValueError(f"expected {n} chain powers, got shape {p.shape}")
    betas = np.asarray(distortion_table(kind).betas)[: b_max + 1]
    cand = np.array(list(itertools.product(range(b_max + 1), repeat=n)), dtype=int)
    feasible = adc_cost(cand).sum(axis=1) <= budget.budget
    cand = cand[feasible]
    msqe = (betas[cand] * p).sum(axis=1)
    # product() is lexicographic, and argmin returns the first minimizer.
    best = cand[int(np.argmin(msqe))]
    real = np.full(n, np.nan)
    g = np.asarray(gains, dtype=float)
    if np.any(g > 0):
        real = allocate_real(g, budget)
    return BitAllocation(real, best)
