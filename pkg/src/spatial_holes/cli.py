"""Command line entry point: ``spatial-holes simulate | plot | selftest``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .signal import ConfigurationError

SOLVER_ALIASES = {"fista": "fista", "constrained-fista": "fista", "omp": "omp", "block-omp": "omp"}


def parse_snr(spec: str) -> tuple:
    """``"0:30:5"`` (inclusive range) or ``"0,10,20"``."""
    if ":" in spec:
        parts = [float(p) for p in spec.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError(f"bad SNR range {spec!r}; use start:stop:step")
        start, stop, step = parts
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + i * step) for i in range(n))
    try:
        return tuple(float(p) for p in spec.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {spec!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spatial-holes",
                                description="Spatial activity detection Monte-Carlo tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a Monte-Carlo experiment and write outputs")
    s.add_argument("--users", type=int, default=8)
    s.add_argument("--rx", type=int, default=4)
    s.add_argument("--bs", type=int, default=8, help="primary BS antennas (recorded only)")
    s.add_argument("--active", type=int, default=2)
    s.add_argument("--subcarriers", type=int, default=72)
    s.add_argument("--alphabet", default="qpsk", choices=["qpsk", "16qam", "64qam"])
    s.add_argument("--taps", type=int, default=10)
    s.add_argument("--snr", type=parse_snr, default=parse_snr("0:30:5"))
    s.add_argument("--trials", type=int, default=2000)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--solver", default="fista", choices=sorted(SOLVER_ALIASES))
    s.add_argument("--epsilon-mode", default="rms", choices=["rms", "paper-literal"])
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--dump-trials", action="store_true", help="also write trials.csv.gz")
    s.add_argument("--no-plots", action="store_true")
    s.add_argument("--out", type=Path, required=True)

    pl = sub.add_parser("plot", help="overlay figures from several run directories")
    pl.add_argument("runs", nargs="+", type=Path, help="directories holding metrics.csv")
    pl.add_argument("--out", type=Path, required=True)

    st = sub.add_parser("selftest", help="run the acceptance checks")
    st.add_argument("--full", action="store_true",
                    help="include the Monte-Carlo criteria (tens of minutes)")
    return p


def _simulate(args) -> int:
    from .harness import ExperimentConfig, run_experiment
    from .report import emit_outputs

    config = ExperimentConfig(
        n_users=args.users, n_rx=args.rx, n_bs=args.bs, n_active=args.active,
        n_subcarriers=args.subcarriers, alphabet=args.alphabet, n_taps=args.taps,
        snr_grid_db=args.snr, n_trials=args.trials, master_seed=args.seed,
        solver=SOLVER_ALIASES[args.solver], epsilon_mode=args.epsilon_mode,
    )
    t0 = time.perf_counter()
    agg, records = run_experiment(config, workers=args.workers)
    paths = emit_outputs(agg, args.out, config=config,
                         records=records if args.dump_trials else None,
                         workers=args.workers, plots=not args.no_plots)
    print(f"{config.n_trials} trials x {len(config.snr_grid_db)} SNR points "
          f"in {time.perf_counter() - t0:.1f}s")
    for p in agg.points:
        print(f"  {p.snr_db:5.1f} dB  P_err cs={p.prob('cs', 'error'):.4f} "
              f"mmse={p.prob('mmse', 'error'):.4f}  SER cs={p.ser('cs'):.2e} "
              f"mmse={p.ser('mmse'):.2e} cs_mmse={p.ser('cs_mmse'):.2e}  invalid={p.invalid}")
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return 0


def _plot(args) -> int:
    import json

    from .plotting import plot_run

    runs = []
    for d in args.runs:
        label = d.name
        cfg = d / "config.json"
        if cfg.exists():
            label = f"N_S={json.loads(cfg.read_text())['config']['n_rx']}"
        runs.append((label, d / "metrics.csv"))
    args.out.mkdir(parents=True, exist_ok=True)
    for name, path in plot_run(runs, args.out).items():
        print(f"wrote {name}: {path}")
    return 0


def _selftest(args) -> int:
    from . import acceptance

    checks = acceptance.ALL_CHECKS if args.full else acceptance.FAST_CHECKS
    failed = 0
    for check in checks:
        res = check()
        print(res.line(), flush=True)
        failed += not res.passed
    return 1 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"simulate": _simulate, "plot": _plot, "selftest": _selftest}[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
