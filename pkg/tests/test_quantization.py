import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import integrate, stats

from quantlink.errors import UnsupportedSizeError
from quantlink.quantization import (
    MAX_BITS,
    aqnm_linearize,
    beta,
    distortion_table,
    lloyd_max,
    measured_msqe,
    quantize,
    uniform_quantizer,
)

from conftest import crandn

# Lloyd-Max distortion of a unit Gaussian, from the classical tables
REFERENCE_BETA = {1: 0.3634, 2: 0.1175, 3: 0.03454, 4: 0.009497, 5: 0.002499}


def test_zero_bits():
    cb, b = lloyd_max(0)
    np.testing.assert_array_equal(cb.levels, [0.0])
    assert b == 1.0
    np.testing.assert_array_equal(quantize(crandn(np.random.default_rng(0), 100), cb, 1.0), 0)


def test_one_bit_closed_form():
    cb, b = lloyd_max(1)
    np.testing.assert_allclose(cb.levels, [-np.sqrt(2 / np.pi), np.sqrt(2 / np.pi)], atol=1e-9)
    assert abs(b - (1 - 2 / np.pi)) < 1e-9


@pytest.mark.parametrize("bits", sorted(REFERENCE_BETA))
def test_reference_distortion(bits):
    assert abs(lloyd_max(bits)[1] - REFERENCE_BETA[bits]) < 1e-3


@pytest.mark.parametrize("bits", [2, 3, 6])
def test_fixed_point_conditions(bits):
    cb, b = lloyd_max(bits)
    edges = np.concatenate([[-np.inf], cb.thresholds, [np.inf]])
    pdf = stats.norm.pdf
    for i, level in enumerate(cb.levels):
        mass = stats.norm.cdf(edges[i + 1]) - stats.norm.cdf(edges[i])
        mean = integrate.quad(lambda x: x * pdf(x), edges[i], edges[i + 1])[0] / mass
        assert abs(mean - level) < 1e-8
    np.testing.assert_allclose(cb.thresholds, 0.5 * (cb.levels[1:] + cb.levels[:-1]))
    mse = sum(integrate.quad(lambda x: (x - lv) ** 2 * pdf(x), edges[i], edges[i + 1])[0]
              for i, lv in enumerate(cb.levels))
    assert abs(mse - b) < 1e-8


def test_table_monotone_and_six_db_law():
    betas = np.array(distortion_table().betas)
    assert np.all(np.diff(betas) < 0)
    alphas = distortion_table().alpha(np.arange(MAX_BITS + 1))
    assert np.all(np.diff(alphas) > 0)
    ratios = betas[5:] / betas[4:-1]
    assert np.all(np.abs(ratios - 0.25) < 0.025)


def test_uniform_quantizer_is_worse_than_lloyd_max():
    for b in range(1, 8):
        assert uniform_quantizer(b)[1] >= lloyd_max(b)[1] - 1e-12
    assert abs(uniform_quantizer(1)[1] - lloyd_max(1)[1]) < 1e-9


def test_beta_lookup_rules():
    assert beta(np.inf) == 0.0
    np.testing.assert_allclose(beta([1, np.inf, 0]), [lloyd_max(1)[1], 0.0, 1.0])
    for bad in (13, -1, 1.5, np.nan, -np.inf):
        with pytest.raises(UnsupportedSizeError):
            distortion_table().beta(bad)
    with pytest.raises(UnsupportedSizeError):
        lloyd_max(13)
    with pytest.raises(ValueError):
        beta(2, kind="cubic")


def test_empirical_msqe_three_bits():
    rng = np.random.default_rng(9)
    x = crandn(rng, 1_000_000)
    cb, b = lloyd_max(3)
    err = np.mean(np.abs(quantize(x, cb, 1.0) - x) ** 2)
    assert abs(err / b - 1) < 0.02


@given(st.integers(0, 8), st.floats(1e-3, 1e3), st.integers(0, 2**32))
def test_idempotent(bits, power, seed):
    cb, _ = lloyd_max(bits)
    x = np.sqrt(power) * crandn(np.random.default_rng(seed), 64)
    q = quantize(x, cb, power)
    np.testing.assert_array_equal(quantize(q, cb, power), q)


@given(st.integers(1, 8), st.floats(-20, 20))
def test_odd_symmetry(bits, x):
    cb, _ = lloyd_max(bits)
    # thresholds are the only points where a mid-rise quantizer cannot be odd
    assume(np.all(cb.thresholds != x))
    assert cb(np.array([-x]))[0] == -cb(np.array([x]))[0]


def test_quantize_rejects_bad_power():
    with pytest.raises(ValueError):
        quantize(np.ones(3), lloyd_max(1)[0], 0.0)


def test_aqnm_examples():
    m = aqnm_linearize(np.full(3, np.inf), np.ones(3))
    np.testing.assert_array_equal(m.gain_matrix, np.eye(3))
    np.testing.assert_array_equal(m.quant_noise_var, 0)
    assert aqnm_linearize([0], [5.0]).alpha_diag[0] == 0
    one = aqnm_linearize([1], [2.0])
    a = one.alpha_diag[0]
    assert abs(a - 2 / np.pi) < 1e-9
    assert abs(one.quant_noise_var[0] - (2 / np.pi) * (1 - 2 / np.pi) * 2) < 1e-8
    assert abs(one.quant_noise_var[0] - 0.4625) < 1e-3
    with pytest.raises(ValueError):
        aqnm_linearize([1, 2], [1.0])


def test_aqnm_noise_peaks_at_half():
    a = np.linspace(0, 1, 1001)
    v = a * (1 - a) * 3.0
    assert a[np.argmax(v)] == 0.5


def test_measured_msqe_all_zero_bits():
    rng = np.random.default_rng(1)
    p = np.array([1.0, 4.0, 0.5])
    y = np.sqrt(p)[:, None] * crandn(rng, 3, 20_000)
    total = measured_msqe(y, [0, 0, 0])
    assert abs(total - p.sum()) / p.sum() < 0.03


def test_measured_msqe_sixteen_chains():
    rng = np.random.default_rng(2)
    y = crandn(rng, 16, 50_000)
    assert abs(measured_msqe(y, np.full(16, 2)) / (16 * 0.1175) - 1) < 0.05


def test_measured_msqe_scale_equivariance():
    rng = np.random.default_rng(3)
    y = crandn(rng, 4, 50_000)
    a = measured_msqe(y, [1, 2, 3, 4])
    b = measured_msqe(np.sqrt(2) * y, [1, 2, 3, 4])
    assert abs(b / a - 2) < 0.04


@pytest.mark.parametrize("bits", range(1, 9))
def test_measured_matches_analytic(bits):
    rng = np.random.default_rng(100 + bits)
    p = np.array([0.5, 2.0, 7.0])
    y = np.sqrt(p)[:, None] * crandn(rng, 3, 200_000)
    emp = measured_msqe(y, np.full(3, bits))
    assert abs(emp / (beta(bits) * p.sum()) - 1) < 0.05
