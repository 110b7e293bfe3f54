"""Figures for experiment reports, rendered off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from hybridqe.eval import ExperimentReport  # noqa: E402

# No version string or timestamp in the files, so reruns are byte-identical.
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_report_bars(report: ExperimentReport, path) -> Path:
    """Mean rho per configuration as bars, individual repeats as dots."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = range(len(report.rows))
    ax.bar(xs, [r.mean_rho for r in report.rows], color="#8fb3d9", edgecolor="#2b5d8a")
    for x, row in zip(xs, report.rows):
        ax.plot([x] * len(row.per_repeat), row.per_repeat, "o", color="#1f3b57", ms=3)
    ax.set_xticks(list(xs), [r.label for r in report.rows])
    ax.set_ylabel("Spearman rho")
    ax.set_ylim(min(0.0, *(min(r.per_repeat) for r in report.rows)) - 0.05, 1.05)
    ax.axhline(0.0, color="grey", lw=0.5)
    ax.set_title(report.title, fontsize=9)
    return _save(fig, path)


def plot_ngram_sweep(report: ExperimentReport, path) -> Path:
    """Rho and extraction time against max_ngram on twin axes."""
    ns = [int(r.label.split("=")[1]) for r in report.rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ns, [r.mean_rho for r in report.rows], "o-", color="#2b5d8a", label="mean rho")
    ax.set_xlabel("max n-gram")
    ax.set_ylabel("Spearman rho", color="#2b5d8a")
    if report.timing:
        ax2 = ax.twinx()
        ax2.plot(ns, [report.timing[r.label] for r in report.rows], "s--", color="#b5562b")
        ax2.set_ylabel("extraction time (s)", color="#b5562b")
    ax.set_title(report.title, fontsize=9)
    return _save(fig, path)


def plot_confidence(confidence: Mapping[str, float], votes: Mapping[str, int], path) -> Path:
    """Confidence score against number of votes, one point per translation."""
    tids = list(confidence)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([votes.get(t, 0) for t in tids], [confidence[t] for t in tids], "o", color="#2b5d8a", ms=4)
    ax.set_xlabel("votes")
    ax.set_ylabel("confidence")
    ax.set_ylim(0.3, 1.02)
    ax.set_title("model confidence per translation", fontsize=9)
    return _save(fig, path)
