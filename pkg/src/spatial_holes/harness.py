"""Monte-Carlo experiment runner.

Seeding
-------
Trial ``t`` draws everything (active set, symbols, channel, unit-variance
noise) from ``numpy.random.default_rng(SeedSequence(master_seed,
spawn_key=(t,)))``. The same draws are reused at every SNR point, with the
noise scaled by ``sigma_n``, so SNR curves use common random numbers.
Records depend only on ``(config, t)``; aggregation sorts them first, which
makes results independent of the number of worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import MultipathProfile, StructuredChannel
from .detector import (EXACT, FALSE_ALARM, MISDETECTION, MIXED, ActivityVector, SolverFailure,
                       classify_outcome, detect_cs, detect_mmse_baseline)
from .mmse import decode_cs_mmse, decode_cs_standalone, decode_mmse_standalone, symbol_errors
from .signal import ConfigurationError, assemble_transmit, extend, make_alphabet, sample_symbols
from .solver import GroupSparseProblem, epsilon_for

logger = logging.getLogger(__name__)

Z95 = 1.959963984540054
DETECTORS = ("cs", "mmse")
DECODERS = ("cs", "mmse", "cs_mmse")


@dataclass(frozen=True)
class ExperimentConfig:
    n_users: int = 8
    n_rx: int = 4
    n_bs: int = 8
    n_active: int = 2
    n_subcarriers: int = 72
    alphabet: str = "QPSK"
    n_taps: int = 10
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    n_trials: int = 2000
    master_seed: int = 42
    solver: str = "fista"
    epsilon_mode: str = "rms"
    min_epsilon: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "alphabet", self.alphabet.upper())
        if not 0 <= self.n_active <= self.n_users:
            raise ConfigurationError("n_active must lie in [0, n_users]")
        if self.n_bs < self.n_users:
            raise ConfigurationError("n_bs must be >= n_users")
        if self.n_rx < 1 or self.n_users < 1:
            raise ConfigurationError("n_rx and n_users must be positive")
        if self.n_subcarriers < self.n_taps or self.n_taps < 1:
            raise ConfigurationError("need 1 <= n_taps <= n_subcarriers")
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")
        if self.solver not in ("fista", "constrained-fista", "omp", "block-omp"):
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        if self.epsilon_mode not in ("rms", "paper-literal"):
            raise ConfigurationError(f"unknown epsilon mode {self.epsilon_mode!r}")
        make_alphabet(self.alphabet)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    snr_db: float
    valid: bool
    truth_mask: str
    cs_mask: str
    mmse_mask: str
    cs_class: str
    mmse_class: str
    solver_status: str
    solver_iterations: int
    n_symbols: int
    err_cs: int
    err_mmse: int
    err_cs_mmse: int


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial_index,)))


def draw_trial(config: ExperimentConfig, trial_index: int):
    """Random ingredients of one trial: truth, transmit vector, channel, unit noise."""
    rng = trial_rng(config.master_seed, trial_index)
    alph = make_alphabet(config.alphabet)
    L = config.n_subcarriers
    active = np.sort(rng.choice(config.n_users, size=config.n_active, replace=False))
    truth = ActivityVector.from_pattern(active, config.n_users)
    x = assemble_transmit(truth, [sample_symbols(alph, L, rng) for _ in active], L)
    channel = StructuredChannel.random(config.n_rx, config.n_users, L,
                                       MultipathProfile.uniform(config.n_taps), rng)
    g = rng.standard_normal((config.n_rx * L, 2))
    unit_noise = (g[:, 0] + 1j * g[:, 1]) / np.sqrt(2.0)
    return truth, x, channel, unit_noise


def sigma_sq(snr_db: float) -> float:
    return 0.0 if math.isinf(snr_db) else 10.0 ** (-snr_db / 10.0)


def run_trial(config: ExperimentConfig, trial_index: int, snr_db: float | None = None,
              ingredients=None):
    """Run one trial at one SNR (or every grid SNR when ``snr_db`` is None)."""
    if ingredients is None:
        ingredients = draw_trial(config, trial_index)
    if snr_db is None:
        return [run_trial(config, trial_index, s, ingredients) for s in config.snr_grid_db]
    truth, x, channel, unit_noise = ingredients
    alph = make_alphabet(config.alphabet)
    ext = extend(alph)
    s2 = sigma_sq(snr_db)
    y = channel.apply(x) + np.sqrt(s2) * unit_noise
    eps = max(epsilon_for(s2, config.n_rx, config.n_subcarriers, config.epsilon_mode),
              config.min_epsilon)
    n_sym = config.n_subcarriers * config.n_active
    try:
        cs_act, x_tilde, rep = detect_cs(GroupSparseProblem(channel, y, eps), ext, config.solver)
    except SolverFailure as exc:
        logger.warning("trial %d at %g dB invalid: %s", trial_index, snr_db, exc)
        return TrialRecord(trial_index, snr_db, False, truth.mask, "", "", "", "",
                           exc.report.status, exc.report.iterations, n_sym, 0, 0, 0)
    mmse_act, _ = detect_mmse_baseline(channel, y, s2, ext)
    d_cs = decode_cs_standalone(x_tilde, cs_act.pattern, alph)
    d_mmse = decode_mmse_standalone(channel, y, s2, ext)
    d_csm = decode_cs_mmse(channel, y, s2, cs_act, alph)
    return TrialRecord(
        trial=trial_index, snr_db=snr_db, valid=True,
        truth_mask=truth.mask, cs_mask=cs_act.mask, mmse_mask=mmse_act.mask,
        cs_class=classify_outcome(truth, cs_act).kind,
        mmse_class=classify_outcome(truth, mmse_act).kind,
        solver_status=rep.status, solver_iterations=rep.iterations, n_symbols=n_sym,
        err_cs=symbol_errors(d_cs, x, truth.pattern),
        err_mmse=symbol_errors(d_mmse, x, truth.pattern),
        err_cs_mmse=symbol_errors(d_csm, x, truth.pattern),
    )


def _run_chunk(args):
    config, indices = args
    out = []
    for t in indices:
        out.extend(run_trial(config, t))
    return out


@dataclass
class PointMetrics:
    snr_db: float
    n_trials: int = 0
    n_valid: int = 0
    counts: dict = field(default_factory=dict)
    err_sum: dict = field(default_factory=dict)
    err_sq_sum: dict = field(default_factory=dict)
    n_symbols: int = 0

    @property
    def invalid(self) -> int:
        return self.n_trials - self.n_valid

    def prob(self, detector: str, kind: str) -> float:
        if self.n_valid == 0:
            return float("nan")
        if kind == "error":
            c = sum(self.counts.get((detector, k), 0) for k in (FALSE_ALARM, MISDETECTION, MIXED))
        else:
            c = self.counts.get((detector, kind), 0)
        return c / self.n_valid

    def prob_halfwidth(self, detector: str, kind: str) -> float:
        p = self.prob(detector, kind)
        if self.n_valid == 0:
            return float("nan")
        return Z95 * math.sqrt(p * (1.0 - p) / self.n_valid)

    def ser(self, decoder: str) -> float:
        if self.n_valid == 0 or self.n_symbols == 0:
            return float("nan")
        return self.err_sum.get(decoder, 0) / (self.n_valid * self.n_symbols)

    def ser_halfwidth(self, decoder: str) -> float:
        """Normal-approximation half-width over per-trial SER samples."""
        n, m = self.n_valid, self.n_symbols
        if n == 0 or m == 0:
            return float("nan")
        mean = self.err_sum.get(decoder, 0) / (n * m)
        second = self.err_sq_sum.get(decoder, 0) / (n * m * m)
        var = max(second - mean * mean, 0.0)
        return Z95 * math.sqrt(var / n)


@dataclass
class MetricsAggregate:
    points: list

    def point(self, snr_db: float) -> PointMetrics:
        for p in self.points:
            if p.snr_db == float(snr_db):
                return p
        raise KeyError(snr_db)

    def rows(self):
        """Rows ``(snr_db, subject, metric, value, ci_halfwidth, n_valid)``."""
        out = []
        for p in self.points:
            for det in DETECTORS:
                for kind, name in (("error", "p_activity_error"), (FALSE_ALARM, "p_false_alarm"),
                                   (MISDETECTION, "p_misdetection"), (MIXED, "p_mixed")):
                    out.append((p.snr_db, det, name, p.prob(det, kind),
                                p.prob_halfwidth(det, kind), p.n_valid))
            for dec in DECODERS:
                out.append((p.snr_db, dec, "ser", p.ser(dec), p.ser_halfwidth(dec), p.n_valid))
            out.append((p.snr_db, "all", "invalid_trials", float(p.invalid), 0.0, p.n_valid))
        return out


def aggregate(records, snr_grid) -> MetricsAggregate:
    points = {float(s): PointMetrics(float(s)) for s in snr_grid}
    for r in sorted(records, key=lambda r: (r.snr_db, r.trial)):
        p = points[r.snr_db]
        p.n_trials += 1
        if not r.valid:
            continue
        p.n_valid += 1
        p.n_symbols = r.n_symbols
        for det, kind in (("cs", r.cs_class), ("mmse", r.mmse_class)):
            p.counts[(det, kind)] = p.counts.get((det, kind), 0) + 1
        for dec, e in (("cs", r.err_cs), ("mmse", r.err_mmse), ("cs_mmse", r.err_cs_mmse)):
            p.err_sum[dec] = p.err_sum.get(dec, 0) + e
            p.err_sq_sum[dec] = p.err_sq_sum.get(dec, 0) + e * e
    return MetricsAggregate([points[float(s)] for s in snr_grid])


def run_records(config: ExperimentConfig, workers: int = 1, chunk: int = 50) -> list:
    indices = list(range(config.n_trials))
    chunks = [(config, indices[i:i + chunk]) for i in range(0, len(indices), chunk)]
    if workers <= 1:
        parts = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    return [r for part in parts for r in part]


def run_experiment(config: ExperimentConfig, workers: int = 1):
    """Run every trial at every SNR point; returns ``(aggregate, records)``."""
    records = run_records(config, workers)
    return aggregate(records, config.snr_grid_db), records


def config_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["snr_grid_db"] = list(config.snr_grid_db)
    return d
