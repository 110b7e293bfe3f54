"""Synthetic judges, votes and corpora drawn from the trait model's generative story."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hybridqe.corpus import JudgmentRecord, ParallelCorpus, Sentence, TranslationInstance


@dataclass(frozen=True)
class SyntheticJudge:
    u: float
    thresholds: tuple[float, float]
    adversarial: bool = False


@dataclass
class SyntheticWorld:
    quality: dict[str, float]
    judges: dict[str, SyntheticJudge]
    bias: float = 0.0
    beta: float = 1.0
    tau: float = 0.25

    def sample_rank(self, tid: str, jid: str, rng: np.random.Generator) -> int:
        judge = self.judges[jid]
        if judge.adversarial:
            return int(rng.integers(3))
        r = judge.u * self.quality[tid] + self.bias + self.beta * rng.standard_normal()
        noisy = np.asarray(judge.thresholds) + self.tau * rng.standard_normal(2)
        return int(np.count_nonzero(r > noisy))


def make_world(n_translations: int, n_judges: int, rng: np.random.Generator, *,
               adversarial_fraction: float = 0.0, quality_sd: float = 1.5, beta: float = 1.0,
               tau: float = 0.25, bias: float = 0.0) -> SyntheticWorld:
    """Latent qualities ~ N(0, quality_sd^2); honest judges have u near 1 and
    thresholds jittered around (-0.5, 0.5); adversarial judges vote uniformly."""
    quality = {f"t{i:04d}": float(q) for i, q in enumerate(rng.normal(0.0, quality_sd, n_translations))}
    n_bad = int(round(adversarial_fraction * n_judges))
    bad = set(rng.choice(n_judges, size=n_bad, replace=False).tolist()) if n_bad else set()
    judges = {}
    for j in range(n_judges):
        u = float(max(0.3, rng.normal(1.0, 0.2)))
        b0, b1 = np.sort(np.array([-0.5, 0.5]) + rng.normal(0.0, 0.15, 2))
        if b1 - b0 < 0.2:
            b0, b1 = (b0 + b1) / 2 - 0.1, (b0 + b1) / 2 + 0.1
        judges[f"j{j:03d}"] = SyntheticJudge(u, (float(b0), float(b1)), j in bad)
    return SyntheticWorld(quality, judges, bias, beta, tau)


def sample_votes(world: SyntheticWorld, votes_per_translation: int,
                 rng: np.random.Generator) -> list[JudgmentRecord]:
    """Each translation is judged by ``votes_per_translation`` distinct judges."""
    jids = list(world.judges)
    if votes_per_translation > len(jids):
        raise ValueError("more votes per translation than judges")
    out = []
    for tid in world.quality:
        for k in sorted(rng.choice(len(jids), size=votes_per_translation, replace=False).tolist()):
            out.append(JudgmentRecord(tid, jids[k], world.sample_rank(tid, jids[k], rng)))
    return out


def flip_extremes(records: list[JudgmentRecord], fraction: float,
                  rng: np.random.Generator) -> tuple[list[JudgmentRecord], set[int]]:
    """Flip round(fraction * len) votes 0 <-> 2, chosen among votes of rank 0 or 2."""
    candidates = [k for k, r in enumerate(records) if r.rank != 1]
    n = min(len(candidates), int(round(fraction * len(records))))
    chosen = set(rng.choice(candidates, size=n, replace=False).tolist()) if n else set()
    out = [JudgmentRecord(r.translation_id, r.judge_id, 2 - r.rank) if k in chosen else r
           for k, r in enumerate(records)]
    return out, chosen


# --- text ----------------------------------------------------------------------

def _vocab(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{k}" for k in range(n)]


def synthetic_corpus(n_pairs: int = 1000, seed: int = 0, *, vocab_size: int = 300,
                     min_len: int = 5, max_len: int = 15, max_ngram: int = 9) -> ParallelCorpus:
    """Source sentences over a Zipf-like vocabulary; targets translate word by
    word (s<k> -> t<k>) with occasional adjacent swaps."""
    rng = np.random.default_rng(seed)
    src_vocab, tgt_vocab = _vocab("s", vocab_size), _vocab("t", vocab_size)
    weights = 1.0 / np.arange(1, vocab_size + 1)
    weights /= weights.sum()
    pairs = []
    for i in range(n_pairs):
        n = int(rng.integers(min_len, max_len + 1))
        ids = rng.choice(vocab_size, size=n, p=weights).tolist()
        tgt = [tgt_vocab[k] for k in ids]
        for pos in range(n - 1):
            if rng.random() < 0.1:
                tgt[pos], tgt[pos + 1] = tgt[pos + 1], tgt[pos]
        pairs.append((Sentence.from_text(f"src:{i}", " ".join(src_vocab[k] for k in ids)),
                      Sentence.from_text(f"tgt:{i}", " ".join(tgt))))
    return ParallelCorpus.from_pairs(pairs, max_ngram)


@dataclass
class SyntheticQEData:
    corpus: ParallelCorpus
    instances: list[TranslationInstance]
    judgments: list[JudgmentRecord]
    world: SyntheticWorld
    corruption: dict[str, float] = field(default_factory=dict)


def make_qe_dataset(n_translations: int = 60, n_judges: int = 20, votes_per_translation: int = 10,
                    *, adversarial_fraction: float = 0.0, corpus_pairs: int = 200, seed: int = 0,
                    max_ngram: int = 9) -> SyntheticQEData:
    """Translation instances whose targets are corrupted in proportion to a
    latent quality, with votes drawn from the generative model.

    The fraction of target words replaced by random words is a logistic
    function of the latent quality, so alignment features carry signal.
    """
    rng = np.random.default_rng(seed)
    corpus = synthetic_corpus(corpus_pairs, seed, max_ngram=max_ngram)
    world = make_world(n_translations, n_judges, rng, adversarial_fraction=adversarial_fraction)
    tgt_words = sorted({t for _, tgt in corpus.pairs for t in tgt.tokens})
    instances, corruption = [], {}
    for k, (tid, q) in enumerate(world.quality.items()):
        src, ref = corpus.pairs[k % len(corpus)]
        frac = float(1.0 / (1.0 + np.exp(1.5 * q)))
        toks = list(ref.tokens)
        for pos in range(len(toks)):
            if rng.random() < frac:
                toks[pos] = tgt_words[int(rng.integers(len(tgt_words)))]
        corruption[tid] = frac
        instances.append(TranslationInstance(
            tid, Sentence.from_text(f"{tid}:src", src.raw), Sentence.from_text(f"{tid}:tgt", " ".join(toks)),
            "synthetic"))
    judgments = sample_votes(world, votes_per_translation, rng)
    return SyntheticQEData(corpus, instances, judgments, world, corruption)
