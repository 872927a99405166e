"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary, or directly when this file is run as a script.
"""

import hashlib
import os
import sys

import numpy as np
import pytest

from quantlink.bitalloc import PowerBudget, adaptive_allocation, aggregated_gains, allocation_msqe, brute_force_allocation
from quantlink.blind import (
    BlindLink,
    DitherConfig,
    SymbolCodebook,
    build_wmd,
    detect_hamming,
    detect_ml,
    detect_wmd,
    evaluate_ser,
    one_bit,
    qpsk,
    train_dithered,
    train_empirical,
    true_likelihood,
)
from quantlink.channel import ArrayGeometry, ChannelEnsembleConfig, draw_channel, trial_rng
from quantlink.combining import chain_power_profile, compose_two_stage, second_stage, select_beams, svd_first_stage
from quantlink.config import parse_config
from quantlink.experiments import format_csv, run_experiment
from quantlink.metrics import dominates, pareto_frontier
from quantlink.metrics import spectral_efficiency as se
from quantlink.quantization import lloyd_max, quantize_real

RESULTS = {}

BASE = """[experiment]
name = {name}
trials = {trials}
seed = 0

[system]
n_antennas = 128
n_rf_list = 16
n_users = 4
avg_paths = 2.0
snr_db = 10.0
"""
SNR = 10.0
REFERENCE_BETA = [0.3634, 0.1175, 0.03454, 0.009497, 0.002499]
REFERENCE_HIST = [27.5, 47.7, 23.54, 1.25]


def record(number, passed, detail):
    RESULTS[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def _fig_config_channels(trials, seed=0):
    cfg = ChannelEnsembleConfig(ArrayGeometry(128), 4, 2.0, seed)
    for t in range(trials):
        yield draw_channel(cfg, trial_rng(seed, t))


def _equal_sigma_channel(rng, n_r, n_u):
    z = rng.standard_normal((n_r, n_u)) + 1j * rng.standard_normal((n_r, n_u))
    q, _ = np.linalg.qr(z)
    v, _ = np.linalg.qr(rng.standard_normal((n_u, n_u)) + 1j * rng.standard_normal((n_u, n_u)))
    return np.sqrt(n_r) * q @ v.conj().T


def test_criterion_1_msqe_reduction():
    t = run_experiment(parse_config(BASE.format(name="msqe", trials=500)), workers=1)
    ratios = []
    for b in range(1, 6):
        fixed = t.where(arch="one_stage_fixed", bits=b)[0]["msqe"]
        ratios.append(t.where(arch="adaptive", bits=b)[0]["msqe"] / fixed)
    ok = all(r <= 0.70 for r in ratios)
    record(1, ok, "adaptive/fixed MSQE for bbar=1..5: " + ", ".join(f"{r:.3f}" for r in ratios) + " (need <= 0.70)")
    assert ok


def test_criterion_2_bit_histogram():
    text = BASE.format(name="bitalloc_hist", trials=1000) + "\n[quantization]\nbits_list = 1\n"
    t = run_experiment(parse_config(text), workers=1)
    got = [100 * t.where(bits=b)[0]["fraction"] for b in range(4)]
    err = [abs(g - r) for g, r in zip(got, REFERENCE_HIST)]
    ok = max(err) <= 8.0
    record(2, ok, "percent at 0..3 bits: " + ", ".join(f"{g:.2f}" for g in got)
           + " vs " + ", ".join(f"{r}" for r in REFERENCE_HIST) + f" (max dev {max(err):.2f} pp, need <= 8)")
    assert ok


def test_criterion_3_power_spreading():
    v = second_stage(16)
    wins = 0
    worst_svd = 0.0
    trials = 500
    for h in _fig_config_channels(trials):
        w1 = select_beams(h, 16)
        p1 = chain_power_profile(w1, h, SNR)
        p2 = chain_power_profile(compose_two_stage(w1, v), h, SNR)
        wins += p2.max() / p2.min() < p1.max() / p1.min()
        ps = chain_power_profile(compose_two_stage(svd_first_stage(h, 16), v), h, SNR)
        worst_svd = max(worst_svd, ps.max() / ps.min() - 1)
    frac = wins / trials
    ok = frac >= 0.95 and worst_svd < 1e-9
    record(3, ok, f"two-stage spread smaller in {100 * frac:.1f}% of trials (need >= 95%); "
                  f"SVD first stage max ratio - 1 = {worst_svd:.1e} (need < 1e-9)")
    assert ok


def test_criterion_4_scaling_law():
    rng = np.random.default_rng(0)
    n_r, n_u, k = 64, 4, 8
    d_one = d_two = 0.0
    channels = 20
    for _ in range(channels):
        h = _equal_sigma_channel(rng, n_r, n_u)

        def two(n):
            return se(h, compose_two_stage(svd_first_stage(h, n), second_stage(n)), 1, SNR)

        d_one += se(h, svd_first_stage(h, 2 * k), 1, SNR) - se(h, svd_first_stage(h, k), 1, SNR)
        d_two += two(2 * k) - two(k)
    d_one /= channels
    d_two /= channels
    ok = d_two > 3 * d_one and d_two > 0
    record(4, ok, f"SE gain from N_RF=8 to 16: two-stage {d_two:.4f}, one-stage {d_one:.2e} bits/s/Hz "
                  "(need two-stage > 3x one-stage)")
    assert ok


def test_criterion_5_quantizer_oracle():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(1_000_000)
    worst_beta = 0.0
    worst_emp = 0.0
    for b, ref in enumerate(REFERENCE_BETA, start=1):
        cb, beta = lloyd_max(b)
        worst_beta = max(worst_beta, abs(beta - ref))
        p = 3.7
        y = np.sqrt(p) * x
        err = np.mean((quantize_real(y, cb, np.sqrt(p)) - y) ** 2)
        worst_emp = max(worst_emp, abs(err / (beta * p) - 1))
    ok = worst_beta <= 1e-3 and worst_emp <= 0.02
    record(5, ok, f"max |beta - reference| = {worst_beta:.2e} (need <= 1e-3); "
                  f"max empirical/analytic MSQE deviation = {100 * worst_emp:.2f}% (need <= 2%)")
    assert ok


def test_criterion_6_integer_allocation():
    cfg = ChannelEnsembleConfig(ArrayGeometry(128), 4, 2.0, 0)
    ratios = []
    for t in range(200):
        rng = trial_rng(0, t)
        n_rf = int(rng.integers(1, 7))
        bbar = int(rng.integers(1, 4))
        h = draw_channel(cfg, rng)
        w = select_beams(h, n_rf)
        p = chain_power_profile(w, h, SNR)
        g = aggregated_gains(w.matrix.conj().T @ h.matrix)
        budget = PowerBudget(bbar, n_rf)
        heur = adaptive_allocation(g, budget, p, b_max=4)
        opt = brute_force_allocation(g, p, budget, b_max=4)
        ratios.append(allocation_msqe(heur, p) / allocation_msqe(opt, p))
    ratios = np.array(ratios)
    ok = ratios.max() <= 1.05
    record(6, ok, f"rounded/optimal MSQE over 200 instances: max {ratios.max():.4f}, "
                  f"mean {ratios.mean():.4f}, {np.count_nonzero(ratios > 1.05)} above 1.05 (need max <= 1.05)")
    assert ok


def _blind_toy(seed):
    cb = SymbolCodebook(qpsk(), 2)
    rng = trial_rng(seed, 0)
    h = draw_channel(ChannelEnsembleConfig(ArrayGeometry(16), 2, 2.0, seed), rng)
    return BlindLink(h.matrix, cb, SNR), cb, rng


def _train_pair(link, cb, n_tr, rng):
    k = np.repeat(np.arange(cb.size), n_tr)
    plain = train_empirical(one_bit(link(k, rng)).reshape(cb.size, n_tr, -1), cb)
    dithered = train_dithered(link, cb, DitherConfig(0.5), link.noise_sigma, n_tr, rng)
    return plain, dithered


def test_criterion_7a_dithered_training():
    seeds, payload = 100, 10_000
    wins = 0
    for seed in range(seeds):
        link, cb, rng = _blind_toy(seed)
        plain, dithered = _train_pair(link, cb, 20, rng)
        s_plain = evaluate_ser(lambda o: detect_ml(o, plain), link, cb, payload, trial_rng(seed, 1))
        s_dith = evaluate_ser(lambda o: detect_ml(o, dithered), link, cb, payload, trial_rng(seed, 1))
        wins += s_dith <= s_plain
    ok = wins >= 0.9 * seeds
    record("7a", ok, f"dithered ML SER <= undithered in {wins}/{seeds} seeds (need >= 90)")
    assert ok


def test_criterion_7b_learned_vs_true_likelihood():
    channels, payload = 20, 20_000
    learned = exact = 0.0
    for seed in range(channels):
        link, cb, rng = _blind_toy(seed)
        k = np.repeat(np.arange(cb.size), 10_000)
        table = train_empirical(one_bit(link(k, rng)).reshape(cb.size, 10_000, -1), cb)
        truth = true_likelihood(link)
        learned += evaluate_ser(lambda o: detect_ml(o, table), link, cb, payload, trial_rng(seed, 1))
        exact += evaluate_ser(lambda o: detect_ml(o, truth), link, cb, payload, trial_rng(seed, 1))
    rel = abs(learned - exact) / exact
    ok = rel <= 0.10
    record("7b", ok, f"learned-table SER {learned / channels:.5f} vs true-likelihood SER {exact / channels:.5f}, "
                     f"relative gap {100 * rel:.2f}% (need <= 10%)")
    assert ok


def test_criterion_7c_wmd_equal_weights_is_hamming():
    mismatches = decisions = 0
    for seed in range(20):
        link, cb, rng = _blind_toy(seed)
        plain, _ = _train_pair(link, cb, 20, rng)
        codewords, _ = build_wmd(plain)
        k = rng.integers(cb.size, size=5000)
        obs = one_bit(link(k, rng))
        a = detect_wmd(obs, codewords, np.full(codewords.shape, 0.7))
        b = detect_hamming(obs, codewords)
        mismatches += int(np.count_nonzero(a != b))
        decisions += len(obs)
    ok = mismatches == 0
    record("7c", ok, f"{mismatches} differing decisions out of {decisions} (need 0)")
    assert ok


def test_criterion_8_se_ee_dominance():
    text = (BASE.format(name="se_ee", trials=200).replace("n_rf_list = 16", "n_rf_list = 12, 16, 20")
            + "\n[quantization]\nbits_list = 3, 4, 5, 6, 7\n")
    t = run_experiment(parse_config(text), workers=1)
    cols = t.columns

    def points(arch):
        from quantlink.metrics import OperatingPoint

        return [OperatingPoint(r["se_bps_hz"], r["power_w"], r["ee_bits_per_j"], arch, r["n_rf"], r["bits"])
                for r in (dict(zip(cols, row)) for row in t.rows) if r["arch"] == arch]

    frontier = pareto_frontier(points("hbf_adaptive"))
    one_stage = points("hbf_one_stage")
    violations = [(q, p) for p in frontier for q in one_stage if dominates(q, p)]
    ok = not violations
    record(8, ok, f"{len(frontier)} adaptive frontier points, {len(violations)} dominated by a one-stage point (need 0)")
    assert ok


DETERMINISM = {
    "sigpow": "[system]\nn_antennas = 64\nn_rf_list = 8, 12\n",
    "msqe": "[system]\nn_antennas = 64\nn_rf_list = 8\n",
    "bitalloc_hist": "[system]\nn_antennas = 64\nn_rf_list = 8\n[quantization]\nbits_list = 1, 2\n",
    "se_ee": "[system]\nn_antennas = 64\nn_rf_list = 8, 12\n[quantization]\nbits_list = 3, 4\n",
    "blind_ser": "[system]\nn_antennas = 16\nn_users = 2\n[blind]\npayload_trials = 2000\n",
}


def test_criterion_9_determinism(monkeypatch):
    bad = []
    for name, body in DETERMINISM.items():
        cfg = parse_config(f"[experiment]\nname = {name}\ntrials = 6\nseed = 11\n" + body)
        digests = set()
        for threads in ("1", "1", "2", "4", "0"):
            monkeypatch.setenv("QUANTLINK_THREADS", threads)
            digests.add(hashlib.sha256(format_csv(run_experiment(cfg)).encode()).hexdigest())
        if len(digests) != 1:
            bad.append(name)
    ok = not bad
    record(9, ok, "identical CSV bytes for 1, 2, 4 and auto workers and reruns in all five experiments"
           if ok else f"differing output for {bad}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
