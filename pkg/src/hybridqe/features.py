"""Alignment-, coverage- and frequency-based quality indicators.

Directional alignment features are suffixed ``_st`` (source phrases, source->target
matrices) and ``_ts`` (target phrases, target->source matrices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from hybridqe.align import AlignmentIndex, AlignmentMatrix, Direction, link_posterior_matrix
from hybridqe.corpus import ParallelCorpus, Sentence, Side, TranslationInstance, read_lines
from hybridqe.errors import DataError

AI, CI, FI = "AI", "CI", "FI"
CATEGORIES = (AI, CI, FI)

# name -> category, in emission order
REGISTRY: dict[str, str] = {
    "ai_inside_st": AI,
    "ai_inside_ts": AI,
    "ai_outside_st": AI,
    "ai_outside_ts": AI,
    "ai_uncertain_frac_st": AI,
    "ai_uncertain_frac_ts": AI,
    "ci_src_covered": CI,
    "ci_tgt_covered": CI,
    "fi_src_len": FI,
    "fi_tgt_len": FI,
    "fi_src_avg_wordlen": FI,
    "fi_tgt_avg_wordlen": FI,
    "fi_src_occurrence": FI,
    "fi_tgt_occurrence": FI,
}
FEATURE_NAMES = tuple(REGISTRY)


def mirror_name(name: str) -> str:
    """Name of the feature that plays the same role with source and target swapped."""
    if name.endswith("_st"):
        return name[:-3] + "_ts"
    if name.endswith("_ts"):
        return name[:-3] + "_st"
    if "_src_" in name:
        return name.replace("_src_", "_tgt_")
    if "_tgt_" in name:
        return name.replace("_tgt_", "_src_")
    return name


def names_for(categories: Iterable[str]) -> tuple[str, ...]:
    cats = set(categories)
    unknown = cats - set(CATEGORIES)
    if unknown:
        raise ValueError(f"unknown feature categories: {sorted(unknown)}")
    return tuple(n for n in FEATURE_NAMES if REGISTRY[n] in cats)


@dataclass(frozen=True)
class FeatureConfig:
    max_ngram: int = 5
    uncertainty_theta: float = 0.5
    log_floor: float = 1e-6

    def __post_init__(self):
        if not 1 <= self.max_ngram <= 9:
            raise ValueError(f"max_ngram must be in 1..9, got {self.max_ngram}")
        if not 0.0 < self.uncertainty_theta < 1.0:
            raise ValueError(f"uncertainty_theta must be in (0, 1), got {self.uncertainty_theta}")
        if not 0.0 < self.log_floor < 1.0:
            raise ValueError(f"log_floor must be in (0, 1), got {self.log_floor}")


@dataclass(frozen=True)
class PhraseSpan:
    """Inclusive token ranges on both sides of a phrase pair."""

    src_start: int
    src_end: int
    tgt_start: int
    tgt_end: int

    def check(self, rows: int, cols: int, max_ngram: int | None = None) -> None:
        ok = 0 <= self.src_start <= self.src_end < rows and 0 <= self.tgt_start <= self.tgt_end < cols
        if not ok:
            raise ValueError(f"{self} is outside a {rows}x{cols} matrix")
        if max_ngram is not None and max(self.src_end - self.src_start,
                                         self.tgt_end - self.tgt_start) >= max_ngram:
            raise ValueError(f"{self} is longer than {max_ngram} tokens")


@dataclass
class FeatureVector:
    values: dict[str, float]
    no_evidence: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        for name, v in self.values.items():
            if name not in REGISTRY:
                raise ValueError(f"unknown feature {name!r}")
            if not math.isfinite(v):
                raise ValueError(f"feature {name!r} is not finite: {v}")

    def category(self, name: str) -> str:
        return REGISTRY[name]

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def mirrored(self) -> "FeatureVector":
        return FeatureVector({mirror_name(n): v for n, v in self.values.items()},
                             frozenset(mirror_name(n) for n in self.no_evidence))


# --- phrase enumeration & retrieval -------------------------------------------

def enumerate_phrases(s: Sentence | Sequence[str], max_ngram: int) -> list[tuple[int, int]]:
    """All contiguous (start, end) spans of 1..max_ngram tokens, ordered by (start, length)."""
    if max_ngram < 1:
        raise ValueError(f"max_ngram must be positive, got {max_ngram}")
    m = len(s.tokens if isinstance(s, Sentence) else s)
    return [(i, i + n - 1) for i in range(m) for n in range(1, min(max_ngram, m - i) + 1)]


def retrieve_matches(span_tokens: Sequence[str], corpus: ParallelCorpus,
                     side: Side | str) -> list[tuple[int, int]]:
    key = tuple(span_tokens)
    if len(key) > corpus.max_ngram:
        raise ValueError(f"span of {len(key)} tokens exceeds the corpus index limit {corpus.max_ngram}")
    return list(corpus.index(side).get(key, ()))


# --- alignment-based indicators -------------------------------------------------

def _as_array(A) -> np.ndarray:
    return A.p if isinstance(A, AlignmentMatrix) else np.asarray(A, dtype=float)


def _geomean(x: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        return float(np.exp(np.mean(np.log(x))))


def _in_span_best(span: PhraseSpan, p: np.ndarray) -> np.ndarray:
    return p[span.src_start:span.src_end + 1, span.tgt_start:span.tgt_end + 1].max(axis=1)


def inside_alignment_score(span: PhraseSpan, A, log_floor: float = 1e-6) -> float:
    p = _as_array(A)
    span.check(*p.shape)
    best = _in_span_best(span, p)
    return _geomean(np.where(best > 0.0, best, log_floor))


def outside_alignment_score(span: PhraseSpan, A) -> float:
    p = _as_array(A)
    span.check(*p.shape)
    outside = np.r_[0:span.src_start, span.src_end + 1:p.shape[0]]
    if outside.size == 0:
        return 1.0
    best = p[outside, span.tgt_start:span.tgt_end + 1].max(axis=1)
    return _geomean(1.0 - best)


def uncertainty_fraction(span: PhraseSpan, A, theta: float = 0.5) -> float:
    p = _as_array(A)
    span.check(*p.shape)
    best = _in_span_best(span, p)
    return float(np.count_nonzero(best < theta)) / best.size


def coverage_ratios(instance: TranslationInstance, A, theta: float = 0.5,
                    reverse=None) -> tuple[float, float]:
    """Fractions of source / target words with a link of at least ``theta``.

    Target coverage is read from the columns of ``A`` unless a target->source
    matrix is given as ``reverse``, in which case its rows are used.
    """
    p = _as_array(A)
    if p.shape != (len(instance.source), len(instance.target)):
        raise DataError(f"instance {instance.id!r}: alignment shape {p.shape} does not match "
                        f"({len(instance.source)}, {len(instance.target)})")
    src = np.count_nonzero(p.max(axis=1) >= theta) / p.shape[0]
    if reverse is None:
        tgt = np.count_nonzero(p.max(axis=0) >= theta) / p.shape[1]
    else:
        q = _as_array(reverse)
        if q.shape != p.shape[::-1]:
            raise DataError(f"instance {instance.id!r}: reverse alignment shape {q.shape} mismatch")
        tgt = np.count_nonzero(q.max(axis=1) >= theta) / q.shape[0]
    return float(src), float(tgt)


def frequency_indicators(instance: TranslationInstance, corpus: ParallelCorpus) -> dict[str, float]:
    out = {}
    for prefix, sent, side in (("src", instance.source, Side.SOURCE), ("tgt", instance.target, Side.TARGET)):
        n = len(sent.tokens)
        out[f"fi_{prefix}_len"] = float(n)
        out[f"fi_{prefix}_avg_wordlen"] = sum(len(t) for t in sent.tokens) / n
        out[f"fi_{prefix}_occurrence"] = corpus.sentence_count(sent.tokens, side) / len(corpus)
    return out


# --- sentence-level extraction ------------------------------------------------

def project_span(p: np.ndarray, start: int, end: int) -> tuple[int, int] | None:
    """Range of best-link columns for rows start..end; None if those rows have no links."""
    block = p[start:end + 1]
    best = block.max(axis=1)
    linked = best > 0.0
    if not linked.any():
        return None
    cols = block.argmax(axis=1)[linked]
    return int(cols.min()), int(cols.max())


def directional_ai(tokens: Sequence[str], corpus: ParallelCorpus, side: Side,
                   matrices: Sequence[AlignmentMatrix], cfg: FeatureConfig) -> tuple[tuple[float, float, float], int]:
    """Mean (inside, outside, uncertain) over all matched phrase pairs, and the match count."""
    sums = [0.0, 0.0, 0.0]
    count = 0
    for start, end in enumerate_phrases(tokens, cfg.max_ngram):
        n = end - start + 1
        for pair, pos in retrieve_matches(tokens[start:end + 1], corpus, side):
            p = matrices[pair].p
            proj = project_span(p, pos, pos + n - 1)
            if proj is None or proj[1] - proj[0] >= cfg.max_ngram:
                continue
            span = PhraseSpan(pos, pos + n - 1, proj[0], proj[1])
            sums[0] += inside_alignment_score(span, p, cfg.log_floor)
            sums[1] += outside_alignment_score(span, p)
            sums[2] += uncertainty_fraction(span, p, cfg.uncertainty_theta)
            count += 1
    if count == 0:
        return (cfg.log_floor,) * 3, 0
    return (sums[0] / count, sums[1] / count, sums[2] / count), count


def instance_matrices(instance: TranslationInstance, index: AlignmentIndex, corpus: ParallelCorpus,
                      alignment: AlignmentMatrix | None = None,
                      reverse: AlignmentMatrix | None = None) -> tuple[AlignmentMatrix, AlignmentMatrix]:
    """Resolve (st, ts) matrices for an instance.

    Priority: explicit matrices, then the index's lexicon tables, then an
    identical sentence pair already present in the corpus.
    """
    shape = (len(instance.source), len(instance.target))
    if alignment is not None:
        if alignment.p.shape != shape:
            raise DataError(f"instance {instance.id!r}: alignment shape {alignment.p.shape} != {shape}")
        ts = reverse if reverse is not None else alignment.T
        if ts.p.shape != shape[::-1]:
            raise DataError(f"instance {instance.id!r}: reverse alignment shape {ts.p.shape} mismatch")
        return alignment, ts
    if Direction.SRC_TO_TGT in index.tables and Direction.TGT_TO_SRC in index.tables:
        return (link_posterior_matrix(index.tables[Direction.SRC_TO_TGT], instance.source, instance.target),
                link_posterior_matrix(index.tables[Direction.TGT_TO_SRC], instance.target, instance.source))
    for k, (s, t) in enumerate(corpus.pairs):
        if s.tokens == instance.source.tokens and t.tokens == instance.target.tokens:
            return index.st[k], index.ts[k]
    raise DataError(f"instance {instance.id!r}: no alignment available (pass one explicitly "
                    f"or use an index with lexicon tables)")


def extract_feature_vector(instance: TranslationInstance, index: AlignmentIndex, corpus: ParallelCorpus,
                           cfg: FeatureConfig = FeatureConfig(), alignment: AlignmentMatrix | None = None,
                           reverse: AlignmentMatrix | None = None) -> FeatureVector:
    if cfg.max_ngram > corpus.max_ngram:
        raise ValueError(f"max_ngram {cfg.max_ngram} exceeds the corpus index limit {corpus.max_ngram}")
    if len(index) != len(corpus):
        raise DataError(f"alignment index has {len(index)} pairs, corpus has {len(corpus)}")
    st, ts = instance_matrices(instance, index, corpus, alignment, reverse)

    values: dict[str, float] = {}
    missing = set()
    for suffix, tokens, side, mats in (("st", instance.source.tokens, Side.SOURCE, index.st),
                                       ("ts", instance.target.tokens, Side.TARGET, index.ts)):
        (inside, outside, uncertain), count = directional_ai(tokens, corpus, side, mats, cfg)
        values[f"ai_inside_{suffix}"] = inside
        values[f"ai_outside_{suffix}"] = outside
        values[f"ai_uncertain_frac_{suffix}"] = uncertain
        if count == 0:
            missing.update(f"ai_{kind}_{suffix}" for kind in ("inside", "outside", "uncertain_frac"))

    src_cov, tgt_cov = coverage_ratios(instance, st, cfg.uncertainty_theta, reverse=ts)
    values["ci_src_covered"] = src_cov
    values["ci_tgt_covered"] = tgt_cov
    values.update(frequency_indicators(instance, corpus))
    return FeatureVector({n: values[n] for n in FEATURE_NAMES}, frozenset(missing))


def extract_features(instances: Sequence[TranslationInstance], index: AlignmentIndex,
                     corpus: ParallelCorpus, cfg: FeatureConfig = FeatureConfig(),
                     alignments: dict[str, AlignmentMatrix] | None = None) -> dict[str, FeatureVector]:
    alignments = alignments or {}
    return {inst.id: extract_feature_vector(inst, index, corpus, cfg, alignments.get(inst.id))
            for inst in instances}


# --- TSV ----------------------------------------------------------------------

def format_features(features: dict[str, FeatureVector]) -> str:
    out = ["translation_id\t" + "\t".join(FEATURE_NAMES)]
    for tid, fv in features.items():
        out.append(tid + "\t" + "\t".join(repr(float(fv.values[n])) for n in FEATURE_NAMES))
    return "\n".join(out) + "\n"


def save_features(features: dict[str, FeatureVector], path) -> None:
    Path(path).write_text(format_features(features), encoding="utf-8")


def load_features(path) -> dict[str, FeatureVector]:
    lines = read_lines(path)
    if not lines:
        raise DataError(f"{path}: empty feature file")
    header = lines[0].split("\t")
    if header[0] != "translation_id" or any(n not in REGISTRY for n in header[1:]):
        raise DataError(f"{path}: bad feature header")
    out = {}
    for rowno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        if len(cols) != len(header):
            raise DataError(f"{path}: row {rowno} has {len(cols)} columns, expected {len(header)}")
        try:
            out[cols[0]] = FeatureVector({n: float(v) for n, v in zip(header[1:], cols[1:])})
        except ValueError as exc:
            raise DataError(f"{path}: row {rowno}: {exc}") from None
    return out


def format_diagnostics(features: dict[str, FeatureVector]) -> str:
    out = ["translation_id\tno_evidence"]
    for tid, fv in features.items():
        out.append(f"{tid}\t{','.join(sorted(fv.no_evidence)) or '-'}")
    return "\n".join(out) + "\n"
