"""Report rendering: delimited records, aligned text tables, and figures.

Every delimited file starts with the effective run configuration as '#'
comment lines, so results stay traceable to the settings that produced
them. Figures are rendered to files next to the delimited output.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import SummaryReport
from .training import EpochStats


def _fmt(value: float) -> str:
    if np.isposinf(value):
        return "inf"
    if np.isneginf(value):
        return "-inf"
    return f"{value:.6f}"


def _config_comment(config_text: str) -> str:
    return "".join(f"# {line}\n" for line in config_text.strip().splitlines())


def write_eval_report(report: SummaryReport, path: Path, config_text: str = "") -> None:
    """Tab-separated rows: one per track plus a trailing median summary row."""
    lines = [_config_comment(config_text)] if config_text else []
    lines.append("track_id\tsdr_db\tsir_db\n")
    for s in report.scores:
        lines.append(f"{s.track_id}\t{_fmt(s.sdr)}\t{_fmt(s.sir)}\n")
    lines.append(f"median\t{_fmt(report.median_sdr)}\t{_fmt(report.median_sir)}\n")
    Path(path).write_text("".join(lines))


def format_eval_table(report: SummaryReport) -> str:
    """Aligned plain-text table: per-track medians, higher is better."""
    rows = [(s.track_id, _fmt(s.sdr), _fmt(s.sir)) for s in report.scores]
    rows.append(("median (over tracks)", _fmt(report.median_sdr),
                 _fmt(report.median_sir)))
    width = max(len("Track"), *(len(r[0]) for r in rows))
    header = f"{'Track':<{width}}  {'SDR':>10}  {'SIR':>10}"
    ruler = "-" * len(header)
    body = "\n".join(f"{r[0]:<{width}}  {r[1]:>10}  {r[2]:>10}" for r in rows)
    return f"{header}\n{ruler}\n{body}"


def save_eval_figure(report: SummaryReport, path: Path) -> None:
    """Per-track SDR/SIR bars with dashed median lines."""
    track_ids = [s.track_id or str(i) for i, s in enumerate(report.scores)]
    sdr = np.array([s.sdr for s in report.scores])
    sir = np.array([s.sir for s in report.scores])
    sdr_plot = np.where(np.isfinite(sdr), sdr, np.nan)
    sir_plot = np.where(np.isfinite(sir), sir, np.nan)
    x = np.arange(len(track_ids))
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(track_ids)), 4.0))
    ax.bar(x - 0.2, sdr_plot, width=0.4, label="SDR")
    ax.bar(x + 0.2, sir_plot, width=0.4, label="SIR")
    if np.isfinite(report.median_sdr):
        ax.axhline(report.median_sdr, color="C0", linestyle="--", linewidth=1,
                   label="median SDR")
    if np.isfinite(report.median_sir):
        ax.axhline(report.median_sir, color="C1", linestyle="--", linewidth=1,
                   label="median SIR")
    ax.set_xticks(x)
    ax.set_xticklabels(track_ids, rotation=30, ha="right")
    ax.set_ylabel("dB")
    ax.set_title("Separation quality per track")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def metrics_header(config_text: str = "") -> str:
    head = _config_comment(config_text) if config_text else ""
    return head + "epoch\tmean_loss\tmean_lambda_rec\tmean_ri_iterations\n"


def metrics_line(stats: EpochStats) -> str:
    return (f"{stats.epoch}\t{_fmt(stats.mean_loss)}\t"
            f"{_fmt(stats.mean_lambda_rec)}\t{_fmt(stats.mean_ri_iterations)}\n")


def save_training_figure(history: Sequence[EpochStats], path: Path) -> None:
    """Loss curve plus gate/iteration diagnostics over epochs."""
    epochs = [s.epoch for s in history]
    fig, (ax_loss, ax_diag) = plt.subplots(2, 1, figsize=(6.5, 6.0), sharex=True)
    ax_loss.plot(epochs, [s.mean_loss for s in history], marker=".")
    ax_loss.set_ylabel("mean loss")
    if all(s.mean_loss > 0 for s in history):
        ax_loss.set_yscale("log")
    ax_diag.plot(epochs, [s.mean_lambda_rec for s in history], marker=".",
                 label="mean gate value")
    ax_diag.plot(epochs, [s.mean_ri_iterations for s in history], marker=".",
                 label="mean inference iterations")
    ax_diag.set_xlabel("epoch")
    ax_diag.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
