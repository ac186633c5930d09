"""Acceptance checks shared by the test suite and the ``selftest`` command.

Each ``check_*`` function returns a :class:`CheckResult`. Expensive Monte-Carlo
runs are memoized per process so that criteria sharing a configuration reuse
one run.
"""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .channel import StructuredChannel
from .detector import ActivityVector, SolverFailure, detect_cs
from .harness import ExperimentConfig, draw_trial, run_experiment, sigma_sq
from .mmse import decode_cs_mmse, decode_mmse_standalone, mmse_subset
from .report import write_metrics
from .signal import BlockVec, extend, make_alphabet
from .solver import GroupSparseProblem, epsilon_for, exhaustive_oracle, solve_constrained

# 2 of 8 users active, 4 receive antennas, QPSK over 72 subcarriers
REFERENCE = ExperimentConfig(n_users=8, n_rx=4, n_active=2, n_subcarriers=72, alphabet="QPSK",
                             n_taps=10, snr_grid_db=(0, 5, 10, 15, 20, 25, 30), n_trials=2000,
                             master_seed=42, solver="fista", epsilon_mode="rms")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn=None, *, limit: float | None = None):
    """Record wall time on the result; fail it when ``limit`` seconds are exceeded."""
    if fn is None:
        return lambda f: _timed(f, limit=limit)

    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        if limit is not None and res.seconds > limit:
            res.passed = False
            res.detail += f"; runtime {res.seconds:.0f}s > {limit:.0f}s"
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_small_problem(rng, max_users=4, max_sub=4):
    """Underdetermined tiny instance with a sparse truth and mild noise."""
    ns = int(rng.integers(2, 4))
    npu = int(rng.integers(ns + 1, max_users + 1))
    L = int(rng.integers(2, max_sub + 1))
    ch = StructuredChannel(_cgauss(rng, (ns, npu, L)))
    x = np.zeros((npu, L), dtype=complex)
    k = int(rng.integers(1, npu))
    x[rng.choice(npu, k, replace=False)] = _cgauss(rng, (k, L))
    s2 = 0.05
    y = ch.apply(BlockVec(x)) + np.sqrt(s2) * _cgauss(rng, ns * L)
    return GroupSparseProblem(ch, y, epsilon_for(s2, ns, L))


@_timed(limit=60)
def check_oracle_equivalence(n_instances: int = 50, seed: int = 2024) -> CheckResult:
    """Criterion 1: constrained solver objective vs support enumeration, 1e-6 relative."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        prob = random_small_problem(rng)
        ours = solve_constrained(prob, tol=1e-7, max_iter=200_000, residual_tol=1e-7)
        ref = exhaustive_oracle(prob)
        rel = abs(ours.objective - ref.objective) / max(ref.objective, 1e-300)
        worst = max(worst, rel)
    return CheckResult("1 oracle equivalence", worst <= 1e-6,
                       f"max relative objective gap {worst:.2e} over {n_instances} instances (tol 1e-6)")


@_timed(limit=60)
def check_adjoint_structure(n_adjoint: int = 100, n_mmse: int = 20, seed: int = 7) -> CheckResult:
    """Criterion 2: adjoint identity at 1e-10 and per-subcarrier MMSE vs dense at 1e-9."""
    rng = np.random.default_rng(seed)
    worst_adj = 0.0
    for _ in range(n_adjoint):
        ns, npu, L = (int(v) for v in rng.integers(1, [9, 9, 65]))
        ch = StructuredChannel(_cgauss(rng, (ns, npu, L)))
        x = BlockVec(_cgauss(rng, (npu, L)))
        r = _cgauss(rng, ns * L)
        lhs = np.vdot(r, ch.apply(x))
        rhs = np.vdot(ch.apply_adjoint(r).data, x.data)
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    worst_mmse = 0.0
    for _ in range(n_mmse):
        npu = int(rng.integers(1, 9))
        L = int(rng.integers(1, 1024 // npu + 1))
        ns = int(rng.integers(1, 9))
        ch = StructuredChannel(_cgauss(rng, (ns, npu, L)))
        k = int(rng.integers(1, npu + 1))
        S = np.sort(rng.choice(npu, k, replace=False))
        y = _cgauss(rng, ns * L)
        s2 = float(10 ** rng.uniform(-3, 0))
        fast = mmse_subset(ch, S, y, s2).reshape(-1)
        H = ch.dense()
        Hs = H[:, np.concatenate([np.arange(i * L, (i + 1) * L) for i in S])]
        dense = np.linalg.solve(Hs.conj().T @ Hs + s2 * np.eye(k * L), Hs.conj().T @ y)
        worst_mmse = max(worst_mmse, np.linalg.norm(fast - dense) / np.linalg.norm(dense))
    ok = worst_adj <= 1e-10 and worst_mmse <= 1e-9
    return CheckResult("2 adjoint/structure", ok,
                       f"adjoint max rel {worst_adj:.1e} (tol 1e-10), "
                       f"MMSE vs dense max rel {worst_mmse:.1e} (tol 1e-9)")


@_timed(limit=300)
def check_noiseless_recovery(n_trials: int = 500, seed: int = 11) -> CheckResult:
    """Criterion 3: exact activity recovery >= 99% for both solver variants."""
    cfg = replace(REFERENCE, n_trials=n_trials, master_seed=seed, snr_grid_db=(float("inf"),))
    ext = extend(make_alphabet(cfg.alphabet))
    rates = {}
    for solver in ("fista", "omp"):
        hits = 0
        for t in range(n_trials):
            truth, x, ch, _ = draw_trial(cfg, t)
            prob = GroupSparseProblem(ch, ch.apply(x), 1e-8)
            try:
                act, _, _ = detect_cs(prob, ext, solver)
            except SolverFailure:
                continue
            hits += act == truth
        rates[solver] = hits / n_trials
    ok = all(r >= 0.99 for r in rates.values())
    return CheckResult("3 noiseless recovery", ok,
                       ", ".join(f"{k} {v:.3f}" for k, v in rates.items()) + " (need >= 0.99)")


@lru_cache(maxsize=None)
def _run(config: ExperimentConfig, workers: int = 1):
    t0 = time.perf_counter()
    agg, _ = run_experiment(config, workers)
    return agg, time.perf_counter() - t0


@_timed
def check_activity_ordering(config: ExperimentConfig = REFERENCE) -> CheckResult:
    """Criterion 4: CS activity error below MMSE; MMSE plateau."""
    agg, secs = _run(config)
    bad = []
    for p in agg.points:
        cs, mm = p.prob("cs", "error"), p.prob("mmse", "error")
        hcs, hmm = p.prob_halfwidth("cs", "error"), p.prob_halfwidth("mmse", "error")
        if p.snr_db >= 5 and not cs < mm:
            bad.append(f"{p.snr_db:g}dB cs {cs:.4f} !< mmse {mm:.4f}")
        if p.snr_db >= 10 and not cs + hcs < mm - hmm:
            bad.append(f"{p.snr_db:g}dB intervals overlap")
    m15 = agg.point(15).prob("mmse", "error")
    m30 = agg.point(30).prob("mmse", "error")
    if not m30 > 0.5 * m15:
        bad.append(f"no plateau: mmse 30dB {m30:.4f} <= half of 15dB {m15:.4f}")
    if secs > 30 * 60:
        bad.append(f"runtime {secs:.0f}s > 1800s")
    summary = " ".join(f"{p.snr_db:g}:{p.prob('cs', 'error'):.3f}/{p.prob('mmse', 'error'):.3f}"
                       for p in agg.points)
    return CheckResult("4 activity-error ordering", not bad,
                       f"cs/mmse {summary}; run {secs:.0f}s" + ("; " + "; ".join(bad) if bad else ""))


@_timed
def check_error_decomposition(config: ExperimentConfig = REFERENCE) -> CheckResult:
    """Criterion 5: CS false alarms >= misdetections; FA + MD + mixed = total."""
    agg, _ = _run(config)
    bad = []
    for p in agg.points:
        fa, md, mx = (p.prob("cs", k) for k in ("false_alarm", "misdetection", "mixed"))
        tot = p.prob("cs", "error")
        if abs(fa + md + mx - tot) > 1e-12:
            bad.append(f"{p.snr_db:g}dB sum mismatch")
        if not fa >= md:
            bad.append(f"{p.snr_db:g}dB FA {fa:.4f} < MD {md:.4f} (mixed {mx:.4f})")
    return CheckResult("5 false-alarm/misdetection split", not bad,
                       "; ".join(bad) if bad else "FA >= MD at every point, sums exact")


@_timed
def check_ser_ordering(seed: int = 42, n_trials: int = 2000) -> CheckResult:
    """Criterion 6: CS-MMSE SER no worse than either stand-alone decoder."""
    bad = []
    summary = []
    for n_active in (2, 4):
        cfg = replace(REFERENCE, n_active=n_active, master_seed=seed, n_trials=n_trials)
        if n_active == 4:
            cfg = replace(cfg, snr_grid_db=(10, 15, 20, 25, 30))
        agg, _ = _run(cfg)
        for p in agg.points:
            if p.snr_db < 10:
                continue
            csm, hcsm = p.ser("cs_mmse"), p.ser_halfwidth("cs_mmse")
            summary.append(f"{n_active}/8@{p.snr_db:g}dB csm {csm:.2e} cs {p.ser('cs'):.2e} "
                           f"mmse {p.ser('mmse'):.2e}")
            for other in ("mmse", "cs"):
                o, ho = p.ser(other), p.ser_halfwidth(other)
                if not csm <= o:
                    bad.append(f"{n_active}/8 {p.snr_db:g}dB cs_mmse {csm:.3e} > {other} {o:.3e}")
                # interval check: upper 95% bounds keep the same order
                if p.snr_db >= 15 and not csm + hcsm <= o + ho:
                    bad.append(f"{n_active}/8 {p.snr_db:g}dB upper bound cs_mmse > {other}")
    return CheckResult("6 SER ordering", not bad, "; ".join(bad or summary))


@_timed
def check_full_load_collapse(n_trials: int = 200, snr_db: float = 20.0, seed: int = 5) -> CheckResult:
    """Criterion 7: identical decisions for CS-MMSE and MMSE at full load."""
    cfg = replace(REFERENCE, n_rx=8, n_active=8, n_trials=n_trials, master_seed=seed,
                  snr_grid_db=(snr_db,))
    alph = make_alphabet(cfg.alphabet)
    ext = extend(alph)
    full = ActivityVector((1,) * cfg.n_users)
    s2 = sigma_sq(snr_db)
    compared = mismatched = 0
    for t in range(n_trials):
        truth, x, ch, noise = draw_trial(cfg, t)
        y = ch.apply(x) + np.sqrt(s2) * noise
        cs_act, _, _ = detect_cs(GroupSparseProblem(ch, y, epsilon_for(s2, cfg.n_rx, cfg.n_subcarriers)), ext)
        a = decode_cs_mmse(ch, y, s2, full, alph)
        b = decode_mmse_standalone(ch, y, s2, ext)
        if cs_act != full:
            continue
        compared += 1
        mismatched += not np.array_equal(a.blocks, b.blocks)
    ok = compared == n_trials and mismatched == 0
    return CheckResult("7 full-load collapse", ok,
                       f"{compared}/{n_trials} trials with full detection, {mismatched} differ")


@_timed
def check_determinism(config: ExperimentConfig = REFERENCE) -> CheckResult:
    """Criterion 8: byte-identical metrics.csv on re-run and with 8 workers."""
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        first, _ = _run(config)
        write_metrics(first, tmp / "a.csv")
        again, _ = run_experiment(config, workers=1)
        write_metrics(again, tmp / "b.csv")
        par, _ = run_experiment(config, workers=8)
        write_metrics(par, tmp / "c.csv")
        a, b, c = ((tmp / n).read_bytes() for n in ("a.csv", "b.csv", "c.csv"))
    ok = a == b == c
    return CheckResult("8 determinism", ok,
                       f"re-run identical: {a == b}, 1 vs 8 workers identical: {a == c}")


FAST_CHECKS = (check_oracle_equivalence, check_adjoint_structure)
ALL_CHECKS = (check_oracle_equivalence, check_adjoint_structure, check_noiseless_recovery,
              check_activity_ordering, check_error_decomposition, check_ser_ordering,
              check_full_load_collapse, check_determinism)
