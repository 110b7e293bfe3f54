"""Word-alignment link probabilities: Pharaoh ingestion and IBM Model 1 EM."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from hybridqe.corpus import ParallelCorpus, Sentence, read_lines
from hybridqe.errors import DataError

NULL = "<NULL>"
FLOOR = 1e-9
DUMP_THRESHOLD = 1e-4
INDEX_HEADER = "#qe-alignment-index\tv1"


class Direction(str, Enum):
    SRC_TO_TGT = "src_to_tgt"
    TGT_TO_SRC = "tgt_to_src"


@dataclass(frozen=True, eq=False)
class AlignmentMatrix:
    """Link probabilities, rows = conditioning-side words, cols = other side."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2:
            raise DataError(f"alignment matrix must be 2-D, got shape {p.shape}")
        if p.size and (not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0):
            raise DataError("alignment probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def rows(self) -> int:
        return self.p.shape[0]

    @property
    def cols(self) -> int:
        return self.p.shape[1]

    @property
    def T(self) -> "AlignmentMatrix":
        return AlignmentMatrix(self.p.T)

    def __eq__(self, other):
        return isinstance(other, AlignmentMatrix) and np.array_equal(self.p, other.p)


@dataclass
class LexiconTable:
    """Translation probabilities t(emitted | conditioning)."""

    direction: Direction
    t: dict[str, dict[str, float]] = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, str]) -> float:
        cond, emitted = key
        return self.t.get(cond, {}).get(emitted, 0.0)

    def prob(self, cond: str, emitted: str) -> float:
        """Like indexing, but unseen pairs get the floor probability."""
        value = self.t.get(cond, {}).get(emitted, 0.0)
        return value if value > 0.0 else FLOOR

    def items(self):
        for cond, row in self.t.items():
            for emitted, value in row.items():
                yield (cond, emitted), value


@dataclass
class AlignmentIndex:
    st: list[AlignmentMatrix]
    ts: list[AlignmentMatrix]
    tables: dict[Direction, LexiconTable] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.st) != len(self.ts):
            raise DataError("alignment index needs one matrix per direction per pair")
        for k, (a, b) in enumerate(zip(self.st, self.ts)):
            if a.p.shape != b.p.T.shape:
                raise DataError(f"pair {k}: direction matrices have inconsistent shapes")

    def __len__(self) -> int:
        return len(self.st)

    def check(self, corpus: ParallelCorpus) -> None:
        if len(self) != len(corpus):
            raise DataError(f"alignment index has {len(self)} pairs, corpus has {len(corpus)}")
        for k, ((src, tgt), a) in enumerate(zip(corpus.pairs, self.st)):
            if a.p.shape != (len(src), len(tgt)):
                raise DataError(f"pair {k}: matrix shape {a.p.shape} does not match "
                                f"sentence lengths ({len(src)}, {len(tgt)})")

    def swapped(self) -> "AlignmentIndex":
        tables = {}
        if Direction.SRC_TO_TGT in self.tables:
            tables[Direction.TGT_TO_SRC] = self.tables[Direction.SRC_TO_TGT]
        if Direction.TGT_TO_SRC in self.tables:
            tables[Direction.SRC_TO_TGT] = self.tables[Direction.TGT_TO_SRC]
        return AlignmentIndex(st=list(self.ts), ts=list(self.st), tables=tables)


# --- Pharaoh ----------------------------------------------------------------

def parse_pharaoh_line(line: str, rows: int, cols: int, lineno: int = 1) -> AlignmentMatrix:
    p = np.zeros((rows, cols))
    for token in line.split():
        i_s, sep, j_s = token.partition("-")
        if not sep or not i_s.isdigit() or not j_s.isdigit():
            raise DataError(f"malformed alignment token {token!r} on line {lineno}")
        i, j = int(i_s), int(j_s)
        if i >= rows or j >= cols:
            raise DataError(f"alignment link {token!r} on line {lineno} is outside a "
                            f"{rows}x{cols} sentence pair")
        p[i, j] = 1.0
    return AlignmentMatrix(p)


def parse_pharaoh(path, corpus: ParallelCorpus) -> AlignmentIndex:
    lines = read_lines(path)
    if len(lines) != len(corpus):
        raise DataError(f"{path}: {len(lines)} alignment lines for {len(corpus)} sentence pairs")
    st = [parse_pharaoh_line(line, len(s), len(t), lineno)
          for lineno, (line, (s, t)) in enumerate(zip(lines, corpus.pairs), start=1)]
    return AlignmentIndex(st=st, ts=[a.T for a in st])


def to_pharaoh(matrix: AlignmentMatrix, threshold: float = 0.5) -> str:
    ii, jj = np.nonzero(matrix.p >= threshold)
    return " ".join(f"{i}-{j}" for i, j in sorted(zip(ii.tolist(), jj.tolist())))


# --- IBM Model 1 --------------------------------------------------------------

def _sides(corpus: ParallelCorpus, direction: Direction):
    direction = Direction(direction)
    for src, tgt in corpus.pairs:
        if direction is Direction.SRC_TO_TGT:
            yield src.tokens, tgt.tokens
        else:
            yield tgt.tokens, src.tokens


def ibm1_log_likelihood(table: LexiconTable, corpus: ParallelCorpus) -> float:
    """Data log-likelihood of the emitted side under Model 1 (uniform alignment prior)."""
    ll = 0.0
    for cond, emitted in _sides(corpus, table.direction):
        conds = (NULL,) + cond
        for e in emitted:
            total = sum(table.prob(c, e) for c in conds)
            ll += math.log(total / len(conds))
    return ll


def ibm1_em(corpus: ParallelCorpus, direction: Direction | str) -> Iterator[LexiconTable]:
    """Yield the lexicon table after each EM iteration, indefinitely."""
    direction = Direction(direction)
    cooc: dict[str, set[str]] = defaultdict(set)
    for cond, emitted in _sides(corpus, direction):
        for c in (NULL,) + cond:
            cooc[c].update(emitted)
    t = {c: dict.fromkeys(sorted(es), 1.0 / len(es)) for c, es in cooc.items()}

    while True:
        counts: dict[str, dict[str, float]] = {c: dict.fromkeys(row, 0.0) for c, row in t.items()}
        for cond, emitted in _sides(corpus, direction):
            conds = (NULL,) + cond
            for e in emitted:
                den = sum(t[c][e] for c in conds)
                for c in conds:
                    counts[c][e] += t[c][e] / den
        t = {}
        for c, row in counts.items():
            total = sum(row.values())
            t[c] = {e: v / total for e, v in row.items()}
        yield LexiconTable(direction, t)


def train_ibm1(corpus: ParallelCorpus, direction: Direction | str, iterations: int) -> LexiconTable:
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    for k, table in enumerate(ibm1_em(corpus, direction), start=1):
        if k == iterations:
            return table
    raise AssertionError("unreachable")


def link_posterior_matrix(table: LexiconTable, cond: Sentence | Sequence[str],
                          emitted: Sentence | Sequence[str]) -> AlignmentMatrix:
    """Model 1 alignment posteriors; rows are conditioning words, cols emitted words.

    Each column plus its NULL share sums to one.
    """
    ctoks = cond.tokens if isinstance(cond, Sentence) else tuple(cond)
    etoks = emitted.tokens if isinstance(emitted, Sentence) else tuple(emitted)
    t = np.array([[table.prob(c, e) for e in etoks] for c in ctoks]).reshape(len(ctoks), len(etoks))
    null = np.array([table.prob(NULL, e) for e in etoks])
    return AlignmentMatrix(t / (null + t.sum(axis=0)))


def build_index_from_tables(corpus: ParallelCorpus, st_table: LexiconTable,
                            ts_table: LexiconTable) -> AlignmentIndex:
    st = [link_posterior_matrix(st_table, s, t) for s, t in corpus.pairs]
    ts = [link_posterior_matrix(ts_table, t, s) for s, t in corpus.pairs]
    return AlignmentIndex(st=st, ts=ts, tables={Direction.SRC_TO_TGT: st_table,
                                                Direction.TGT_TO_SRC: ts_table})


def train_alignment_index(corpus: ParallelCorpus, iterations: int = 5) -> AlignmentIndex:
    return build_index_from_tables(
        corpus,
        train_ibm1(corpus, Direction.SRC_TO_TGT, iterations),
        train_ibm1(corpus, Direction.TGT_TO_SRC, iterations),
    )


# --- persistence --------------------------------------------------------------
#
# #qe-alignment-index<TAB>v1
# pair<TAB>k<TAB>st|ts<TAB>rows<TAB>cols     followed by cell lines i<TAB>j<TAB>p (p >= 1e-4)
# lex<TAB>direction<TAB>conditioning<TAB>emitted<TAB>p

def format_index(index: AlignmentIndex) -> str:
    out = [INDEX_HEADER]
    for k, (a, b) in enumerate(zip(index.st, index.ts)):
        for name, m in (("st", a), ("ts", b)):
            out.append(f"pair\t{k}\t{name}\t{m.rows}\t{m.cols}")
            ii, jj = np.nonzero(m.p >= DUMP_THRESHOLD)
            out.extend(f"{i}\t{j}\t{float(m.p[i, j])!r}" for i, j in zip(ii.tolist(), jj.tolist()))
    for direction in Direction:
        table = index.tables.get(direction)
        if table is None:
            continue
        for (c, e), v in table.items():
            out.append(f"lex\t{direction.value}\t{c}\t{e}\t{float(v)!r}")
    return "\n".join(out) + "\n"


def save_index(index: AlignmentIndex, path) -> None:
    Path(path).write_text(format_index(index), encoding="utf-8")


def load_index(path) -> AlignmentIndex:
    lines = read_lines(path)
    if not lines or lines[0] != INDEX_HEADER:
        raise DataError(f"{path}: not an alignment index (missing header)")
    mats: dict[tuple[int, str], np.ndarray] = {}
    tables: dict[Direction, LexiconTable] = {}
    current = None
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        try:
            if cols[0] == "pair":
                k, name, rows, ncols = int(cols[1]), cols[2], int(cols[3]), int(cols[4])
                current = mats[(k, name)] = np.zeros((rows, ncols))
            elif cols[0] == "lex":
                direction = Direction(cols[1])
                table = tables.setdefault(direction, LexiconTable(direction))
                table.t.setdefault(cols[2], {})[cols[3]] = float(cols[4])
            else:
                current[int(cols[0]), int(cols[1])] = float(cols[2])
        except (IndexError, ValueError, TypeError) as exc:
            raise DataError(f"{path}: malformed line {lineno}: {line!r}") from exc
    n = 1 + max((k for k, _ in mats), default=-1)
    try:
        st = [AlignmentMatrix(mats[(k, "st")]) for k in range(n)]
        ts = [AlignmentMatrix(mats[(k, "ts")]) for k in range(n)]
    except KeyError as exc:
        raise DataError(f"{path}: missing matrix for pair {exc.args[0]}") from None
    return AlignmentIndex(st=st, ts=ts, tables=tables)
