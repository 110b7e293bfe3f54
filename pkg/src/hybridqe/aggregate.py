"""Confidence-weighted log-linear aggregation of feature values into one score."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from hybridqe.corpus import JudgmentRecord, group_by_translation, read_lines
from hybridqe.errors import DataError
from hybridqe.features import CATEGORIES, FEATURE_NAMES as FEATURE_ORDER, REGISTRY, FeatureVector, names_for

DEFAULT_LAMBDA = 1e-3
DEFAULT_LOG_FLOOR = 1e-6
WEIGHTS_HEADER = "#qe-weights\tv1"
# Normalised confidences are rounded to this many decimals, so a common
# positive rescaling of all confidences cannot change the fit.
_CONFIDENCE_DECIMALS = 10


@dataclass(frozen=True)
class WeightVector:
    w: dict[str, float]
    w0: float
    lam: float = DEFAULT_LAMBDA
    log_floor: float = DEFAULT_LOG_FLOOR

    def __post_init__(self):
        for name, value in self.w.items():
            if name not in REGISTRY:
                raise ValueError(f"unknown feature {name!r} in weights")
            if not math.isfinite(value):
                raise ValueError(f"weight for {name!r} is not finite")
        if not math.isfinite(self.w0):
            raise ValueError("intercept is not finite")

    @property
    def categories(self) -> tuple[str, ...]:
        present = {REGISTRY[n] for n in self.w}
        return tuple(c for c in CATEGORIES if c in present)


@dataclass(frozen=True)
class TrainingInstance:
    features: FeatureVector
    target: float
    confidence: float = 1.0
    translation_id: str = field(default="", compare=False)

    def __post_init__(self):
        if not 0.0 <= self.target <= 1.0:
            raise ValueError(f"target must lie in [0, 1], got {self.target}")
        if not (self.confidence > 0.0 and math.isfinite(self.confidence)):
            raise ValueError(f"confidence must be positive, got {self.confidence}")


def log_features(fv: FeatureVector, names: Sequence[str], log_floor: float) -> np.ndarray:
    return np.array([math.log(max(fv.values.get(n, log_floor), log_floor)) for n in names])


def train_log_linear_weights(data: Sequence[TrainingInstance], lam: float = DEFAULT_LAMBDA,
                             subset: Iterable[str] = CATEGORIES,
                             log_floor: float = DEFAULT_LOG_FLOOR) -> WeightVector:
    """Weighted ridge fit of target ~ w . log f + w0 with an unpenalised intercept.

    ``subset`` holds feature categories and/or individual feature names.
    Confidences act as instance weights; they are divided by their maximum
    first, so ``lam`` is relative to a unit-weight instance.
    """
    subset = tuple(subset)
    if not subset:
        raise ValueError("feature subset must not be empty")
    singles = {n for n in subset if n in REGISTRY}
    chosen = set(names_for(set(subset) - singles)) | singles
    names = tuple(n for n in FEATURE_ORDER if n in chosen)
    if len(data) < 2:
        raise ValueError(f"need at least 2 training instances, got {len(data)}")
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"ridge strength must be a finite value >= 0, got {lam}")

    X = np.array([log_features(d.features, names, log_floor) for d in data])
    y = np.array([d.target for d in data])
    c = np.array([d.confidence for d in data])
    c = np.round(c / c.max(), _CONFIDENCE_DECIMALS)

    Xa = np.hstack([X, np.ones((len(data), 1))])
    A = Xa.T @ (c[:, None] * Xa)
    A[:-1, :-1] += lam * np.eye(len(names))
    rhs = Xa.T @ (c * y)
    if lam == 0.0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise np.linalg.LinAlgError("singular normal equations with lambda = 0; use a positive ridge strength")
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"cannot solve normal equations ({exc}); use a positive ridge strength") from exc
    return WeightVector({n: float(v) for n, v in zip(names, sol[:-1])}, float(sol[-1]), lam, log_floor)


def raw_score(features: FeatureVector, weights: WeightVector) -> float:
    total = weights.w0
    for name, wk in weights.w.items():
        total += wk * math.log(max(features.values.get(name, weights.log_floor), weights.log_floor))
    return total


def aggregate_score(features: FeatureVector, weights: WeightVector) -> float:
    """clamp(w . log f + w0, 0, 1); features absent from the vector count as the log floor."""
    return min(1.0, max(0.0, raw_score(features, weights)))


def score_all(features: Mapping[str, FeatureVector], weights: WeightVector) -> dict[str, float]:
    return {tid: aggregate_score(fv, weights) for tid, fv in features.items()}


# --- building training data -------------------------------------------------------

def majority_rank(votes: Sequence[JudgmentRecord]) -> int:
    """Most frequent rank; ties go to the lowest tied rank."""
    counts = Counter(v.rank for v in votes)
    best = max(counts.values())
    return min(r for r, n in counts.items() if n == best)


def training_instances(features: Mapping[str, FeatureVector], judgments: Sequence[JudgmentRecord],
                       model=None) -> list[TrainingInstance]:
    """One instance per judged translation that has features.

    With a trained trait model the target is the population expected rank / 2
    and the confidence is the model's confidence score; without one the target
    is the majority rank / 2 with confidence 1.
    """
    from hybridqe.infer.engine import confidence_score, posterior_rank_distribution

    out = []
    for tid, votes in group_by_translation(judgments).items():
        if tid not in features:
            continue
        if model is not None and tid in model.translations:
            dist = posterior_rank_distribution(model, tid)
            target, conf = dist.expected_rank / 2.0, confidence_score(model, tid)
        else:
            target, conf = majority_rank(votes) / 2.0, 1.0
        out.append(TrainingInstance(features[tid], min(1.0, max(0.0, target)), conf, tid))
    return out


# --- persistence -------------------------------------------------------------------

def format_weights(weights: WeightVector) -> str:
    out = [WEIGHTS_HEADER,
           f"# lambda = {weights.lam!r}",
           f"# log_floor = {weights.log_floor!r}",
           f"# categories = {','.join(weights.categories)}",
           f"intercept\t{weights.w0!r}"]
    out.extend(f"{n}\t{weights.w[n]!r}" for n in REGISTRY if n in weights.w)
    return "\n".join(out) + "\n"


def save_weights(weights: WeightVector, path) -> None:
    Path(path).write_text(format_weights(weights), encoding="utf-8")


def load_weights(path) -> WeightVector:
    lines = read_lines(path)
    if not lines or lines[0] != WEIGHTS_HEADER:
        raise DataError(f"{path}: not a weights file (missing header)")
    meta: dict[str, str] = {}
    w: dict[str, float] = {}
    w0 = None
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        cols = line.split("\t")
        try:
            if len(cols) != 2:
                raise ValueError("expected two columns")
            if cols[0] == "intercept":
                w0 = float(cols[1])
            elif cols[0] in REGISTRY:
                w[cols[0]] = float(cols[1])
            else:
                raise ValueError(f"unknown feature {cols[0]!r}")
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    if w0 is None:
        raise DataError(f"{path}: missing intercept")
    try:
        return WeightVector(w, w0, float(meta.get("lambda", DEFAULT_LAMBDA)),
                            float(meta.get("log_floor", DEFAULT_LOG_FLOOR)))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def format_scores(scores: Mapping[str, float]) -> str:
    out = ["translation_id\tscore"]
    out.extend(f"{tid}\t{float(s)!r}" for tid, s in scores.items())
    return "\n".join(out) + "\n"


def save_scores(scores: Mapping[str, float], path) -> None:
    Path(path).write_text(format_scores(scores), encoding="utf-8")


def load_scores(path) -> dict[str, float]:
    lines = read_lines(path)
    if not lines or lines[0].split("\t") != ["translation_id", "score"]:
        raise DataError(f"{path}: expected header 'translation_id<TAB>score'")
    out = {}
    for rowno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        try:
            if len(cols) != 2:
                raise ValueError
            out[cols[0]] = float(cols[1])
        except ValueError:
            raise DataError(f"{path}: malformed score row {rowno}: {line!r}") from None
    return out
