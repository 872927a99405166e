"""Monte Carlo experiment drivers and CSV output.

Each trial draws its channel from an independent generator derived from
``(seed, trial)``, and per-trial results are reduced in trial order, so a
run is bit-identical whatever the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, List, Sequence

import numpy as np

from . import blind
from .bitalloc import PowerBudget, adaptive_allocation, aggregated_gains, allocation_msqe
from .channel import ArrayGeometry, ChannelEnsembleConfig, draw_channel, trial_rng
from .combining import (
    chain_power_profile,
    compose_two_stage,
    second_stage,
    select_beams,
    svd_first_stage,
)
from .config import ExperimentConfig, config_hash
from .errors import UnsupportedSizeError
from .metrics import (
    OperatingPoint,
    energy_efficiency,
    pareto_frontier,
    receiver_power,
    spectral_efficiency,
)

__all__ = [
    "SCHEMAS",
    "ResultTable",
    "run_experiment",
    "write_csv",
    "format_csv",
    "worker_count",
]

SCHEMAS = {
    "sigpow": ("arch", "n_rf", "chain", "mean_power"),
    "msqe": ("arch", "n_rf", "bits", "msqe"),
    "bitalloc_hist": ("n_rf", "constraint_bits", "bits", "fraction"),
    "se_ee": ("arch", "n_rf", "bits", "se_bps_hz", "power_w", "ee_bits_per_j", "pareto"),
    "blind_ser": ("training", "n_tr", "detector", "ser"),
}


@dataclass
class ResultTable:
    experiment: str
    columns: tuple
    rows: List[tuple] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    skipped: List[dict] = field(default_factory=list)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def where(self, **match) -> List[dict]:
        out = []
        for r in self.rows:
            d = dict(zip(self.columns, r))
            if all(d[k] == v for k, v in match.items()):
                out.append(d)
        return out


def worker_count() -> int:
    """Worker processes from ``QUANTLINK_THREADS`` (unset or 0 means one per CPU)."""
    raw = os.environ.get("QUANTLINK_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("QUANTLINK_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _map_trials(fn: Callable, trials: int, workers: int) -> list:
    if workers <= 1 or trials <= 1:
        return [fn(t) for t in range(trials)]
    with ProcessPoolExecutor(max_workers=min(workers, trials)) as pool:
        return list(pool.map(fn, range(trials), chunksize=max(1, trials // (4 * workers))))


def _ordered_mean(results: Sequence) -> np.ndarray:
    total = np.zeros_like(np.asarray(results[0], dtype=float))
    for r in results:
        total = total + np.asarray(r, dtype=float)
    return total / len(results)


def _ensemble(config: ExperimentConfig, n_antennas: int | None = None) -> ChannelEnsembleConfig:
    s = config.system
    return ChannelEnsembleConfig(
        ArrayGeometry(n_antennas or s.n_antennas, s.element_spacing), s.n_users, s.avg_paths, config.seed
    )


def _channel(config: ExperimentConfig, trial: int):
    return draw_channel(_ensemble(config), trial_rng(config.seed, trial))


def _first_stage(config: ExperimentConfig, h, n_rf: int):
    if config.system.first_stage == "svd":
        return svd_first_stage(h, n_rf)
    return select_beams(h, n_rf)


def _second_stage_or_reason(config: ExperimentConfig, n_rf: int):
    try:
        return second_stage(n_rf, config.system.second_stage), None
    except UnsupportedSizeError as exc:
        return None, str(exc)


def _allocation_gains(config: ExperimentConfig, eff, powers):
    if config.system.gain_model == "chain_power":
        return powers
    return aggregated_gains(eff)


# --- sigpow -----------------------------------------------------------------

def _sigpow_trial(config: ExperimentConfig, trial: int):
    h = _channel(config, trial)
    out = []
    for n_rf in config.system.n_rf_list:
        w1 = _first_stage(config, h, n_rf)
        one = chain_power_profile(w1, h, config.snr)
        v, _ = _second_stage_or_reason(config, n_rf)
        two = chain_power_profile(compose_two_stage(w1, v), h, config.snr) if v is not None else np.zeros(n_rf)
        out.append(np.concatenate([one, two]))
    return np.concatenate(out)


def _run_sigpow(config, workers, table):
    mean = _ordered_mean(_map_trials(partial(_sigpow_trial, config), config.trials, workers))
    pos = 0
    for n_rf in config.system.n_rf_list:
        one, two = mean[pos:pos + n_rf], mean[pos + n_rf:pos + 2 * n_rf]
        pos += 2 * n_rf
        _, reason = _second_stage_or_reason(config, n_rf)
        for i in range(n_rf):
            table.rows.append(("one_stage", n_rf, i, float(one[i])))
        if reason:
            table.skipped.append({"arch": "two_stage", "n_rf": n_rf, "reason": reason})
            continue
        for i in range(n_rf):
            table.rows.append(("two_stage", n_rf, i, float(two[i])))


# --- msqe -------------------------------------------------------------------

def _msqe_trial(config: ExperimentConfig, trial: int):
    h = _channel(config, trial)
    q = config.quantization
    out = []
    for n_rf in config.system.n_rf_list:
        w1 = _first_stage(config, h, n_rf)
        p1 = chain_power_profile(w1, h, config.snr)
        v, _ = _second_stage_or_reason(config, n_rf)
        p2 = chain_power_profile(compose_two_stage(w1, v), h, config.snr) if v is not None else p1
        gains = _allocation_gains(config, w1.matrix.conj().T @ h.matrix, p1)
        for b in q.bits_list:
            fixed = np.full(n_rf, b)
            alloc = adaptive_allocation(gains, PowerBudget(b, n_rf), p1, q.b_max, q.quantizer)
            out.extend([
                allocation_msqe(fixed, p1, q.quantizer),
                allocation_msqe(fixed, p2, q.quantizer),
                allocation_msqe(alloc, p1, q.quantizer),
            ])
    return np.array(out)


def _run_msqe(config, workers, table):
    _check_bits(config.quantization.bits_list, config.quantization.b_max)
    mean = _ordered_mean(_map_trials(partial(_msqe_trial, config), config.trials, workers))
    it = iter(mean)
    for n_rf in config.system.n_rf_list:
        _, reason = _second_stage_or_reason(config, n_rf)
        for b in config.quantization.bits_list:
            one, two, adaptive = next(it), next(it), next(it)
            table.rows.append(("one_stage_fixed", n_rf, b, float(one)))
            if reason:
                table.skipped.append({"arch": "two_stage_fixed", "n_rf": n_rf, "bits": b, "reason": reason})
            else:
                table.rows.append(("two_stage_fixed", n_rf, b, float(two)))
            table.rows.append(("adaptive", n_rf, b, float(adaptive)))


# --- bitalloc_hist ----------------------------------------------------------

def _hist_trial(config: ExperimentConfig, trial: int):
    h = _channel(config, trial)
    q = config.quantization
    out = []
    for n_rf in config.system.n_rf_list:
        w1 = _first_stage(config, h, n_rf)
        p1 = chain_power_profile(w1, h, config.snr)
        gains = _allocation_gains(config, w1.matrix.conj().T @ h.matrix, p1)
        for b in q.bits_list:
            alloc = adaptive_allocation(gains, PowerBudget(b, n_rf), p1, q.b_max, q.quantizer)
            out.append(np.bincount(alloc.int_bits, minlength=q.b_max + 1) / n_rf)
    return np.concatenate(out)


def _run_hist(config, workers, table):
    q = config.quantization
    _check_bits(q.bits_list, q.b_max)
    mean = _ordered_mean(_map_trials(partial(_hist_trial, config), config.trials, workers))
    mean = mean.reshape(-1, q.b_max + 1)
    row = 0
    for n_rf in config.system.n_rf_list:
        for b in q.bits_list:
            for bits, frac in enumerate(mean[row]):
                table.rows.append((n_rf, b, bits, float(frac)))
            row += 1


# --- se_ee ------------------------------------------------------------------

def _se_ee_trial(config: ExperimentConfig, trial: int):
    """Per trial: [se, power] for every (arch, n_rf, bits) in a fixed order."""
    h = _channel(config, trial)
    s, q, pm = config.system, config.quantization, config.power
    snr = config.snr

    def se_bits(b):
        return np.inf if q.perfect else b

    out = []
    eye = np.eye(s.n_antennas)
    for b in q.bits_list:
        out += [spectral_efficiency(h, eye, se_bits(b), snr, s.digital, q.quantizer),
                receiver_power("dbf", s.n_antennas, b, pm, s.n_antennas)]
    for n_rf in s.n_rf_list:
        w1 = _first_stage(config, h, n_rf)
        v, _ = _second_stage_or_reason(config, n_rf)
        w12 = compose_two_stage(w1, v) if v is not None else None
        p1 = chain_power_profile(w1, h, snr)
        gains = _allocation_gains(config, w1.matrix.conj().T @ h.matrix, p1)
        for b in q.bits_list:
            out += [spectral_efficiency(h, w1, se_bits(b), snr, s.digital, q.quantizer),
                    receiver_power("hbf_one_stage", n_rf, b, pm, s.n_antennas)]
            if w12 is not None:
                out += [spectral_efficiency(h, w12, se_bits(b), snr, s.digital, q.quantizer),
                        receiver_power("hbf_two_stage", n_rf, b, pm, s.n_antennas)]
            else:
                out += [0.0, 0.0]
            alloc = adaptive_allocation(gains, PowerBudget(b, n_rf), p1, q.b_max, q.quantizer)
            ad_bits = np.where(alloc.int_bits > 0, np.inf, 0.0) if q.perfect else alloc.int_bits
            out += [spectral_efficiency(h, w1, ad_bits, snr, s.digital, q.quantizer),
                    receiver_power("hbf_adaptive", n_rf, alloc.int_bits, pm, s.n_antennas)]
    return np.array(out)


def _run_se_ee(config, workers, table):
    s, q, pm = config.system, config.quantization, config.power
    _check_bits(q.bits_list, q.b_max)
    mean = _ordered_mean(_map_trials(partial(_se_ee_trial, config), config.trials, workers))
    it = iter(mean.reshape(-1, 2))
    points: List[OperatingPoint] = []

    def add(arch, n_rf, b, se, power):
        points.append(OperatingPoint(float(se), float(power), energy_efficiency(se, power, pm), arch, n_rf, b))

    for b in q.bits_list:
        add("dbf", s.n_antennas, b, *next(it))
    for n_rf in s.n_rf_list:
        _, reason = _second_stage_or_reason(config, n_rf)
        for b in q.bits_list:
            add("hbf_one_stage", n_rf, b, *next(it))
            two = next(it)
            if reason:
                table.skipped.append({"arch": "hbf_two_stage", "n_rf": n_rf, "bits": b, "reason": reason})
            else:
                add("hbf_two_stage", n_rf, b, *two)
            add("hbf_adaptive", n_rf, b, *next(it))

    on_frontier = set()
    for arch in ("dbf", "hbf_one_stage", "hbf_two_stage", "hbf_adaptive"):
        on_frontier.update(id(p) for p in pareto_frontier(p for p in points if p.arch_tag == arch))
    for p in points:
        table.rows.append((p.arch_tag, p.n_rf, p.bits_descriptor, p.se, p.power, p.ee,
                           int(id(p) in on_frontier)))


# --- blind_ser --------------------------------------------------------------

_CONSTELLATIONS = {"qpsk": blind.qpsk, "16qam": lambda: blind.qam(16), "64qam": lambda: blind.qam(64)}


def _blind_codebook(config: ExperimentConfig):
    return blind.SymbolCodebook(_CONSTELLATIONS[config.system.constellation](), config.system.n_users)


def _blind_trial(config: ExperimentConfig, trial: int):
    """SERs in row order: true-ML, then per n_tr: empirical ML/WMD, dithered ML/WMD."""
    b = config.blind
    codebook = _blind_codebook(config)
    rng = trial_rng(config.seed, trial)
    h = draw_channel(_ensemble(config), rng)
    link = blind.BlindLink(h.matrix, codebook, config.snr)

    def ser(detector, stream):
        return blind.evaluate_ser(detector, link, codebook, b.payload_trials,
                                  trial_rng(config.seed, 2**32 + 4 * trial + stream))

    exact = blind.true_likelihood(link)
    out = [ser(lambda o: blind.detect_ml(o, exact), 0)]
    for n_tr in b.n_tr_list:
        idx = np.repeat(np.arange(codebook.size), n_tr)
        obs = blind.one_bit(link(idx, rng)).reshape(codebook.size, n_tr, -1)
        tables = [blind.train_empirical(obs, codebook)]
        dither = blind.DitherConfig(b.sigma_d, invert=b.sigma_d > 0)
        tables.append(blind.train_dithered(link, codebook, dither, link.noise_sigma, n_tr, rng))
        for tab in tables:
            cw, wt = blind.build_wmd(tab)
            out.append(ser(lambda o: blind.detect_ml(o, tab), 0))
            out.append(ser(lambda o: blind.detect_wmd(o, cw, wt), 0))
    return np.array(out)


def _run_blind(config, workers, table):
    codebook_size = len(_CONSTELLATIONS[config.system.constellation]()) ** config.system.n_users
    if codebook_size > config.blind.max_joint_symbols:
        table.skipped.append({
            "experiment": "blind_ser", "joint_symbols": codebook_size,
            "reason": f"{codebook_size} joint symbols exceeds blind.max_joint_symbols="
                      f"{config.blind.max_joint_symbols}",
        })
        return
    mean = _ordered_mean(_map_trials(partial(_blind_trial, config), config.trials, workers))
    it = iter(mean)
    table.rows.append(("true", 0, "ml", float(next(it))))
    for n_tr in config.blind.n_tr_list:
        for training in ("empirical", "dithered"):
            table.rows.append((training, n_tr, "ml", float(next(it))))
            table.rows.append((training, n_tr, "wmd", float(next(it))))


def _check_bits(bits_list, b_max):
    bad = [b for b in bits_list if b > b_max]
    if bad:
        raise UnsupportedSizeError(f"bits {bad} exceed b_max={b_max}")


_RUNNERS = {
    "sigpow": _run_sigpow,
    "msqe": _run_msqe,
    "bitalloc_hist": _run_hist,
    "se_ee": _run_se_ee,
    "blind_ser": _run_blind,
}


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ResultTable:
    """Run the experiment named in ``config`` and collect its result rows."""
    workers = worker_count() if workers is None else workers
    table = ResultTable(
        config.name,
        SCHEMAS[config.name],
        metadata={"experiment": config.name, "config_hash": config_hash(config),
                  "seed": config.seed, "trials": config.trials},
    )
    _RUNNERS[config.name](config, workers, table)
    return table


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def format_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    meta = " ".join(f"{k}={v}" for k, v in table.metadata.items())
    buf.write(f"# quantlink {meta}\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_fmt(v) for v in row])
    for skip in table.skipped:
        buf.write("# skipped " + " ".join(f"{k}={v}" for k, v in skip.items()) + "\r\n")
    return buf.getvalue()


def write_csv(table: ResultTable, path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(format_csv(table))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
