"""Parallel corpora, translation instances and human judgments.

Text is expected to be pre-tokenized; tokens are runs of non-whitespace.
"""

from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from hybridqe.errors import DataError, DataWarning


class Side(str, Enum):
    SOURCE = "source"
    TARGET = "target"


class Scale(str, Enum):
    ZERO_TWO = "zero_two"
    ONE_FIVE = "one_five"


@dataclass(frozen=True)
class Sentence:
    id: str
    tokens: tuple[str, ...]
    raw: str

    def __post_init__(self):
        if not self.tokens:
            raise DataError(f"sentence {self.id!r} has no tokens")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise DataError(f"sentence {self.id!r}: bad token {tok!r}")
        if " ".join(self.tokens) != " ".join(self.raw.split()):
            raise DataError(f"sentence {self.id!r}: tokens do not match raw text")

    @classmethod
    def from_text(cls, id: str, raw: str) -> "Sentence":
        return cls(id=id, tokens=tuple(raw.split()), raw=raw)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TranslationInstance:
    id: str
    source: Sentence
    target: Sentence
    system_id: str = ""

    def __post_init__(self):
        if self.source.id == self.target.id:
            raise DataError(f"instance {self.id!r}: source and target share id {self.source.id!r}")

    def swapped(self) -> "TranslationInstance":
        """The same instance with source and target exchanged."""
        return TranslationInstance(self.id, self.target, self.source, self.system_id)


@dataclass(frozen=True)
class JudgmentRecord:
    translation_id: str
    judge_id: str
    rank: int

    def __post_init__(self):
        if self.rank not in (0, 1, 2):
            raise DataError(f"rank must be 0, 1 or 2, got {self.rank!r}")


@dataclass(frozen=True)
class CorpusStats:
    num_sentences: int
    num_words: int
    num_distinct_words: int


NGramIndex = dict[tuple[str, ...], list[tuple[int, int]]]


def build_ngram_index(sentences: Sequence[Sentence], max_ngram: int) -> NGramIndex:
    """Map every contiguous n-gram (n = 1..max_ngram) to its (pair, position) occurrences."""
    index: NGramIndex = defaultdict(list)
    for p, sent in enumerate(sentences):
        toks = sent.tokens
        for start in range(len(toks)):
            for n in range(1, min(max_ngram, len(toks) - start) + 1):
                index[toks[start:start + n]].append((p, start))
    return dict(index)


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple[tuple[Sentence, Sentence], ...]
    max_ngram: int
    source_index: NGramIndex = field(repr=False)
    target_index: NGramIndex = field(repr=False)
    source_counts: Counter = field(repr=False)
    target_counts: Counter = field(repr=False)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Sentence, Sentence]], max_ngram: int) -> "ParallelCorpus":
        pairs = tuple(pairs)
        if not pairs:
            raise DataError("parallel corpus is empty")
        if max_ngram < 1:
            raise ValueError(f"max_ngram must be positive, got {max_ngram}")
        src = [s for s, _ in pairs]
        tgt = [t for _, t in pairs]
        return cls(
            pairs=pairs,
            max_ngram=max_ngram,
            source_index=build_ngram_index(src, max_ngram),
            target_index=build_ngram_index(tgt, max_ngram),
            source_counts=Counter(s.tokens for s in src),
            target_counts=Counter(t.tokens for t in tgt),
        )

    @classmethod
    def from_texts(cls, lines: Iterable[tuple[str, str]], max_ngram: int) -> "ParallelCorpus":
        pairs = [
            (Sentence.from_text(f"src:{i}", s), Sentence.from_text(f"tgt:{i}", t))
            for i, (s, t) in enumerate(lines)
        ]
        return cls.from_pairs(pairs, max_ngram)

    def __len__(self) -> int:
        return len(self.pairs)

    def side(self, side: Side | str) -> list[Sentence]:
        k = 0 if Side(side) is Side.SOURCE else 1
        return [pair[k] for pair in self.pairs]

    def index(self, side: Side | str) -> NGramIndex:
        return self.source_index if Side(side) is Side.SOURCE else self.target_index

    def sentence_count(self, tokens: Sequence[str], side: Side | str) -> int:
        counts = self.source_counts if Side(side) is Side.SOURCE else self.target_counts
        return counts.get(tuple(tokens), 0)

    def swapped(self) -> "ParallelCorpus":
        """Corpus with the two sides exchanged (indices are reused, not rebuilt)."""
        return ParallelCorpus(
            pairs=tuple((t, s) for s, t in self.pairs),
            max_ngram=self.max_ngram,
            source_index=self.target_index,
            target_index=self.source_index,
            source_counts=self.target_counts,
            target_counts=self.source_counts,
        )


def read_lines(path: str | Path) -> list[str]:
    """Read a UTF-8 file strictly, one entry per line (trailing newline optional)."""
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: undecodable bytes at byte offset {exc.start}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.rstrip("\r") for line in lines]


def load_parallel_corpus(source_path, target_path, max_ngram: int) -> ParallelCorpus:
    src_lines = read_lines(source_path)
    tgt_lines = read_lines(target_path)
    if len(src_lines) != len(tgt_lines):
        raise DataError(
            f"line count mismatch: {source_path} has {len(src_lines)} lines, "
            f"{target_path} has {len(tgt_lines)}"
        )
    for name, lines in ((source_path, src_lines), (target_path, tgt_lines)):
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                raise DataError(f"{name}: empty line {lineno}")
    return ParallelCorpus.from_texts(zip(src_lines, tgt_lines), max_ngram)


def rescale_rank(r5: int) -> int:
    """Map a 1..5 adequacy score onto the 0..2 rank scale: {1,2}->0, {3}->1, {4,5}->2."""
    if isinstance(r5, bool) or r5 not in (1, 2, 3, 4, 5):
        raise DataError(f"rank {r5!r} is outside the 1..5 scale")
    return 0 if r5 <= 2 else (1 if r5 == 3 else 2)


def parse_judgment_lines(lines: Iterable[str], scale: Scale | str = Scale.ZERO_TWO,
                         origin: str = "<judgments>") -> list[JudgmentRecord]:
    scale = Scale(scale)
    valid = range(0, 3) if scale is Scale.ZERO_TWO else range(1, 6)
    records: dict[tuple[str, str], JudgmentRecord] = {}
    for rowno, line in enumerate(lines, start=1):
        if line.startswith("#") or not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3 or not cols[0] or not cols[1]:
            raise DataError(f"{origin}: malformed row {rowno}: {line!r}")
        try:
            rank = int(cols[2])
        except ValueError:
            raise DataError(f"{origin}: malformed rank in row {rowno}: {cols[2]!r}") from None
        if rank not in valid:
            raise DataError(f"{origin}: rank {rank} in row {rowno} is outside the {scale.value} scale")
        if scale is Scale.ONE_FIVE:
            rank = rescale_rank(rank)
        key = (cols[0], cols[1])
        if key in records:
            warnings.warn(f"{origin}: duplicate judgment for {key} in row {rowno}; keeping the last",
                          DataWarning, stacklevel=2)
        records[key] = JudgmentRecord(cols[0], cols[1], rank)
    return list(records.values())


def load_judgments(path, scale: Scale | str = Scale.ZERO_TWO) -> list[JudgmentRecord]:
    return parse_judgment_lines(read_lines(path), scale, origin=str(path))


def format_judgments(records: Iterable[JudgmentRecord]) -> str:
    out = ["# translation_id\tjudge_id\trank"]
    out.extend(f"{r.translation_id}\t{r.judge_id}\t{r.rank}" for r in records)
    return "\n".join(out) + "\n"


def save_judgments(records: Iterable[JudgmentRecord], path) -> None:
    Path(path).write_text(format_judgments(records), encoding="utf-8")


def group_by_translation(records: Iterable[JudgmentRecord]) -> dict[str, list[JudgmentRecord]]:
    """Group judgments by translation id, preserving first-appearance order."""
    groups: dict[str, list[JudgmentRecord]] = {}
    for r in records:
        groups.setdefault(r.translation_id, []).append(r)
    return groups


def corpus_stats(corpus: ParallelCorpus, side: Side | str) -> CorpusStats:
    sents = corpus.side(side)
    vocab: set[str] = set()
    words = 0
    for s in sents:
        words += len(s.tokens)
        vocab.update(s.tokens)
    return CorpusStats(len(sents), words, len(vocab))


def load_instances(path) -> list[TranslationInstance]:
    """Read translation instances: TSV of id, system_id, source text, target text."""
    out = []
    seen = set()
    for rowno, line in enumerate(read_lines(path), start=1):
        if line.startswith("#") or not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise DataError(f"{path}: malformed instance row {rowno}")
        tid, system, src, tgt = cols
        if tid in seen:
            raise DataError(f"{path}: duplicate instance id {tid!r} in row {rowno}")
        seen.add(tid)
        out.append(TranslationInstance(
            tid, Sentence.from_text(f"{tid}:src", src), Sentence.from_text(f"{tid}:tgt", tgt), system))
    return out
