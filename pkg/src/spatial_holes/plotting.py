"""Figures rendered from one or more ``metrics.csv`` files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.35,
    "legend.fontsize": 7,
    "lines.markersize": 4,
    "savefig.dpi": 150,
}

_DET_LABEL = {"cs": r"$\ell_2/\ell_1$ CS", "mmse": "MMSE"}
_DEC_LABEL = {"cs": r"$\ell_2/\ell_1$ CS", "mmse": "MMSE", "cs_mmse": "CS-MMSE"}
_MARK = {"cs": "o", "mmse": "s", "cs_mmse": "^"}


def _semilogy(ax, snr, val, hw, **kw):
    # zeros cannot be drawn on a log axis
    v = np.where(val > 0, val, np.nan)
    ax.semilogy(snr, v, **kw)
    lo = np.clip(val - hw, 1e-6, None)
    ax.fill_between(snr, np.where(val > 0, lo, np.nan), np.where(val > 0, val + hw, np.nan),
                    alpha=0.15, color=ax.lines[-1].get_color())


def _finish(fig, ax, path, ylabel):
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel(ylabel)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_run(runs, out_dir) -> dict:
    """``runs`` is a list of ``(label, metrics_csv_path)``; one curve set per run."""
    from .report import read_metrics

    out = Path(out_dir)
    tables = [(label, read_metrics(p)) for label, p in runs]
    paths = {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, t in tables:
            for det in ("cs", "mmse"):
                snr, val, hw = t[(det, "p_activity_error")]
                _semilogy(ax, snr, val, hw, marker=_MARK[det],
                          label=f"{_DET_LABEL[det]} {label}".strip())
        paths["fig_activity"] = _finish(fig, ax, out / "fig_activity_error.png",
                                        "P(activity error)")

        fig, ax = plt.subplots()
        for label, t in tables:
            for metric, name in (("p_activity_error", "total"), ("p_false_alarm", "false alarm"),
                                 ("p_misdetection", "misdetection"), ("p_mixed", "mixed")):
                snr, val, hw = t[("cs", metric)]
                _semilogy(ax, snr, val, hw, marker="o", label=f"{name} {label}".strip())
        paths["fig_fa_md"] = _finish(fig, ax, out / "fig_false_alarm_misdetection.png",
                                     "probability (CS detector)")

        fig, ax = plt.subplots()
        for label, t in tables:
            for dec in ("cs", "mmse", "cs_mmse"):
                snr, val, hw = t[(dec, "ser")]
                _semilogy(ax, snr, val, hw, marker=_MARK[dec],
                          label=f"{_DEC_LABEL[dec]} {label}".strip())
        paths["fig_ser"] = _finish(fig, ax, out / "fig_ser.png", "SER")
    return paths
