"""Output files for an experiment run: metrics CSV, raw trial dump, config echo, figures.

``metrics.csv`` has the frozen header::

    snr_db,subject,metric,value,ci_halfwidth,n_valid

``subject`` is ``cs`` / ``mmse`` for the activity metrics (``p_activity_error``,
``p_false_alarm``, ``p_misdetection``, ``p_mixed``), ``cs`` / ``mmse`` /
``cs_mmse`` for ``ser``, and ``all`` for ``invalid_trials``.
"""

from __future__ import annotations

import csv
import gzip
import json
from dataclasses import astuple, fields
from pathlib import Path

import numpy as np

from . import __version__
from .harness import MetricsAggregate, TrialRecord, config_dict

METRICS_HEADER = ("snr_db", "subject", "metric", "value", "ci_halfwidth", "n_valid")
TRIALS_HEADER = tuple(f.name for f in fields(TrialRecord))


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if v != v else f"{v:.12g}"
    return str(v)


def write_metrics(aggregate: MetricsAggregate | None, path) -> Path:
    path = Path(path)
    rows = aggregate.rows() if aggregate is not None else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_metrics(path) -> dict:
    """``{(subject, metric): (snr array, value array, halfwidth array)}``."""
    table: dict = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            key = (r["subject"], r["metric"])
            table.setdefault(key, []).append(
                (float(r["snr_db"]), float(r["value"]), float(r["ci_halfwidth"]))
            )
    return {k: tuple(np.array(c) for c in zip(*sorted(v))) for k, v in table.items()}


def write_trials(records, path) -> Path:
    path = Path(path)
    recs = sorted(records, key=lambda r: (r.snr_db, r.trial))
    # mtime=0 keeps the gzip bytes reproducible
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
        lines = [",".join(TRIALS_HEADER)]
        lines += [",".join(_fmt(v) for v in astuple(r)) for r in recs]
        gz.write(("\n".join(lines) + "\n").encode())
    return path


def write_config(config, path, workers: int = 1) -> Path:
    path = Path(path)
    d = {"config": config_dict(config), "version": __version__, "workers": workers,
         "seeding": "SeedSequence(master_seed, spawn_key=(trial,))"}
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return path


def emit_outputs(aggregate, out_dir, config=None, records=None, workers: int = 1,
                 plots: bool = True) -> dict:
    """Write everything for one run into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {"metrics": write_metrics(aggregate, out / "metrics.csv")}
    if records is not None:
        paths["trials"] = write_trials(records, out / "trials.csv.gz")
    if config is not None:
        paths["config"] = write_config(config, out / "config.json", workers)
    if plots and aggregate is not None and aggregate.points:
        from .plotting import plot_run

        label = f"N_S={config.n_rx}" if config is not None else ""
        paths.update(plot_run([(label, paths["metrics"])], out))
    return paths
