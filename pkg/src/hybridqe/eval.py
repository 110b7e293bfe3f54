"""Evaluation harness: rank correlation, vote splits, ablation and n-gram sweeps."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from hybridqe.aggregate import (
    DEFAULT_LAMBDA,
    DEFAULT_LOG_FLOOR,
    TrainingInstance,
    score_all,
    train_log_linear_weights,
    training_instances,
)
from hybridqe.align import AlignmentIndex
from hybridqe.corpus import JudgmentRecord, ParallelCorpus, TranslationInstance, group_by_translation
from hybridqe.errors import DataWarning, UndefinedCorrelation
from hybridqe.features import AI, CI, FI, FeatureConfig, FeatureVector, extract_features
from hybridqe.infer.engine import ModelConfig, fit_model

TABLE4_MASKS: tuple[tuple[str, ...], ...] = ((AI,), (AI, CI), (AI, FI), (AI, CI, FI))


def mask_label(mask: Sequence[str]) -> str:
    return "+".join(mask)


def spearman_rho(pred_scores: Sequence[float], human_scores: Sequence[float]) -> float:
    """1 - 6 sum d^2 / (n (n^2 - 1)) on average fractional ranks, clamped to [-1, 1]."""
    if len(pred_scores) != len(human_scores):
        raise ValueError(f"length mismatch: {len(pred_scores)} vs {len(human_scores)}")
    n = len(pred_scores)
    if n < 2:
        raise UndefinedCorrelation(f"rank correlation needs at least 2 items, got {n}")
    a = rankdata(np.asarray(pred_scores, dtype=float), method="average")
    b = rankdata(np.asarray(human_scores, dtype=float), method="average")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelation("rank correlation is undefined for a constant list")
    d2 = float(np.sum((a - b) ** 2))
    rho = 1.0 - 6.0 * d2 / (n * (n * n - 1))
    return min(1.0, max(-1.0, rho))


# --- splitting -------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.66
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")


def train_size(n: int, fraction: float) -> int:
    """round-half-up(n * fraction), kept within [1, n - 1]."""
    k = math.floor(n * fraction + 0.5)
    return min(n - 1, max(1, k))


Split = tuple[list[JudgmentRecord], list[JudgmentRecord]]


def split_votes(groups: Mapping[str, Sequence[JudgmentRecord]], spec: SplitSpec) -> list[Split]:
    """Per repeat, split every translation's votes into train and test.

    Translations with fewer than two votes go wholly to train. Within each
    side, votes keep their input order.
    """
    rng = np.random.default_rng(spec.seed)
    short = [tid for tid, votes in groups.items() if len(votes) < 2]
    if short:
        warnings.warn(f"{len(short)} translation(s) with fewer than 2 votes kept in train only "
                      f"(e.g. {short[0]!r})", DataWarning, stacklevel=2)
    out = []
    for _ in range(spec.repeats):
        train, test = [], []
        for votes in groups.values():
            n = len(votes)
            if n < 2:
                train.extend(votes)
                continue
            chosen = set(rng.permutation(n)[:train_size(n, spec.train_fraction)].tolist())
            train.extend(v for k, v in enumerate(votes) if k in chosen)
            test.extend(v for k, v in enumerate(votes) if k not in chosen)
        out.append((train, test))
    return out


def test_truth(test: Sequence[JudgmentRecord]) -> dict[str, float]:
    """Mean test-vote rank per translation."""
    return {tid: sum(v.rank for v in votes) / len(votes) for tid, votes in group_by_translation(test).items()}


# --- reports ---------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    label: str
    mean_rho: float
    per_repeat: tuple[float, ...]

    def __post_init__(self):
        if any(not -1.0 <= r <= 1.0 for r in self.per_repeat):
            raise ValueError(f"rho outside [-1, 1] in row {self.label!r}")


@dataclass
class ExperimentReport:
    title: str
    rows: list[ReportRow] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)

    def row(self, label: str) -> ReportRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def labels(self) -> list[str]:
        return [r.label for r in self.rows]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def format_report_tsv(report: ExperimentReport) -> str:
    repeats = max((len(r.per_repeat) for r in report.rows), default=0)
    out = ["\t".join(["configuration", "mean_rho", *(f"rho_{k + 1}" for k in range(repeats))])]
    for r in report.rows:
        out.append("\t".join([r.label, _fmt(r.mean_rho), *map(_fmt, r.per_repeat)]))
    return "\n".join(out) + "\n"


def format_report_table(report: ExperimentReport) -> str:
    """Plain-text table with aligned columns."""
    repeats = max((len(r.per_repeat) for r in report.rows), default=0)
    header = ["configuration", "mean rho", *(f"rep {k + 1}" for k in range(repeats))]
    body = [[r.label, f"{r.mean_rho:.4f}", *(f"{x:.4f}" for x in r.per_repeat)] for r in report.rows]
    widths = [max(len(row[c]) for row in [header, *body]) for c in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        return "  ".join([first, *(c.rjust(w) for c, w in zip(cells[1:], widths[1:]))]).rstrip()

    rule = "-" * len(line(header))
    return "\n".join([report.title, rule, line(header), rule, *map(line, body), rule]) + "\n"


def format_timing_tsv(report: ExperimentReport) -> str:
    out = ["configuration\textraction_seconds"]
    out.extend(f"{label}\t{seconds:.6f}" for label, seconds in report.timing.items())
    return "\n".join(out) + "\n"


def write_report(report: ExperimentReport, tsv_path, table_path=None, timing_path=None) -> None:
    Path(tsv_path).write_text(format_report_tsv(report), encoding="utf-8")
    if table_path is not None:
        Path(table_path).write_text(format_report_table(report), encoding="utf-8")
    if timing_path is not None and report.timing:
        Path(timing_path).write_text(format_timing_tsv(report), encoding="utf-8")


# --- experiments ---------------------------------------------------------------------

@dataclass
class EvalDataset:
    features: dict[str, FeatureVector]
    judgments: list[JudgmentRecord]
    model_cfg: ModelConfig = field(default_factory=ModelConfig)
    lam: float = DEFAULT_LAMBDA
    log_floor: float = DEFAULT_LOG_FLOOR


@dataclass
class _Repeat:
    model: object
    train: list[JudgmentRecord]
    truth: dict[str, float]


def _prepare(judgments: Sequence[JudgmentRecord], spec: SplitSpec, cfg: ModelConfig) -> list[_Repeat]:
    out = []
    for train, test in split_votes(group_by_translation(judgments), spec):
        model, _ = fit_model(train, cfg)
        out.append(_Repeat(model, train, test_truth(test)))
    return out


def _repeat_rho(features: Mapping[str, FeatureVector], rep: _Repeat, mask: Sequence[str],
                weighting: str, lam: float, log_floor: float) -> float:
    data = training_instances(features, rep.train, rep.model)
    if weighting == "uniform":
        data = [TrainingInstance(d.features, d.target, 1.0, d.translation_id) for d in data]
    elif weighting != "confidence":
        raise ValueError(f"unknown weighting {weighting!r}")
    weights = train_log_linear_weights(data, lam, mask, log_floor)
    scored = score_all({tid: features[tid] for tid in rep.truth if tid in features}, weights)
    tids = list(scored)
    return spearman_rho([scored[t] for t in tids], [rep.truth[t] for t in tids])


def _row(label: str, rhos: list[float]) -> ReportRow:
    return ReportRow(label, float(sum(rhos) / len(rhos)), tuple(rhos))


def run_ablation(dataset: EvalDataset, subsets: Sequence[Sequence[str]] = TABLE4_MASKS,
                 spec: SplitSpec = SplitSpec(), weighting: str = "confidence",
                 _prepared: list[_Repeat] | None = None) -> ExperimentReport:
    """Fit and score every feature mask on each repeat's train votes; correlate with test votes."""
    reps = _prepared if _prepared is not None else _prepare(dataset.judgments, spec, dataset.model_cfg)
    report = ExperimentReport(f"feature ablation ({weighting} weighting, {len(reps)} repeats)")
    for mask in subsets:
        rhos = [_repeat_rho(dataset.features, rep, mask, weighting, dataset.lam, dataset.log_floor)
                for rep in reps]
        report.rows.append(_row(mask_label(mask), rhos))
    return report


def compare_weighting(dataset: EvalDataset, mask: Sequence[str] = (AI, CI, FI),
                      spec: SplitSpec = SplitSpec()) -> ExperimentReport:
    """Confidence-weighted against uniform fitting on the same splits and models."""
    reps = _prepare(dataset.judgments, spec, dataset.model_cfg)
    report = ExperimentReport(f"weighting comparison ({mask_label(mask)}, {len(reps)} repeats)")
    for weighting in ("confidence", "uniform"):
        rhos = [_repeat_rho(dataset.features, rep, mask, weighting, dataset.lam, dataset.log_floor)
                for rep in reps]
        report.rows.append(_row(weighting, rhos))
    return report


def run_ngram_sweep(instances: Sequence[TranslationInstance], corpus: ParallelCorpus, index: AlignmentIndex,
                    judgments: Sequence[JudgmentRecord], ngram_values: Sequence[int],
                    spec: SplitSpec = SplitSpec(), feature_cfg: FeatureConfig = FeatureConfig(),
                    model_cfg: ModelConfig = ModelConfig(), mask: Sequence[str] = (AI, CI, FI),
                    lam: float = DEFAULT_LAMBDA) -> ExperimentReport:
    """Re-extract features for each max_ngram and evaluate; extraction wall time goes to ``timing``."""
    reps = _prepare(judgments, spec, model_cfg)
    report = ExperimentReport(f"n-gram sweep ({mask_label(mask)}, {len(reps)} repeats)")
    for n in ngram_values:
        cfg = FeatureConfig(max_ngram=n, uncertainty_theta=feature_cfg.uncertainty_theta,
                            log_floor=feature_cfg.log_floor)
        start = time.perf_counter()
        feats = extract_features(instances, index, corpus, cfg)
        elapsed = time.perf_counter() - start
        label = f"max_ngram={n}"
        rhos = [_repeat_rho(feats, rep, mask, "confidence", lam, cfg.log_floor) for rep in reps]
        report.rows.append(_row(label, rhos))
        report.timing[label] = elapsed
    return report


def time_extraction(instances: Sequence[TranslationInstance], corpus: ParallelCorpus, index: AlignmentIndex,
                    max_ngram: int) -> float:
    start = time.perf_counter()
    extract_features(instances, index, corpus, FeatureConfig(max_ngram=max_ngram))
    return time.perf_counter() - start
