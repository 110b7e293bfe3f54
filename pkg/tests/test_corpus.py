import pytest
from hypothesis import given, strategies as st

from hybridqe.corpus import (
    JudgmentRecord,
    ParallelCorpus,
    Scale,
    Sentence,
    Side,
    build_ngram_index,
    corpus_stats,
    group_by_translation,
    load_instances,
    load_judgments,
    load_parallel_corpus,
    parse_judgment_lines,
    rescale_rank,
)
from hybridqe.errors import DataError, DataWarning


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_single_pair_index_keys(tmp_path):
    c = load_parallel_corpus(write(tmp_path, "s", "le chat\n"), write(tmp_path, "t", "the cat\n"), 2)
    assert len(c) == 1
    assert set(c.source_index) == {("le",), ("chat",), ("le", "chat")}


def test_line_count_mismatch(tmp_path):
    with pytest.raises(DataError, match="line count"):
        load_parallel_corpus(write(tmp_path, "s", "a\nb\nc\n"), write(tmp_path, "t", "a\nb\n"), 2)


def test_empty_line_rejected(tmp_path):
    with pytest.raises(DataError, match="empty line 2"):
        load_parallel_corpus(write(tmp_path, "s", "a\n \n"), write(tmp_path, "t", "a\nb\n"), 2)


def test_undecodable_bytes(tmp_path):
    bad = tmp_path / "s"
    bad.write_bytes(b"caf\xe9\n")
    with pytest.raises(DataError, match="undecodable"):
        load_parallel_corpus(bad, write(tmp_path, "t", "x\n"), 2)


def test_six_token_sentence_has_twenty_ngrams():
    s = Sentence.from_text("s", "a b c d e f")
    index = build_ngram_index([s], 5)
    assert sum(len(v) for v in index.values()) == 6 + 5 + 4 + 3 + 2


@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=12), st.integers(1, 9))
def test_ngram_occurrences_match_brute_force(tokens, n):
    s = Sentence.from_text("s", " ".join(tokens))
    index = build_ngram_index([s], n)
    m = len(tokens)
    expected = sum(min(n, m - i) for i in range(m))
    assert sum(len(v) for v in index.values()) == expected
    for gram, occ in index.items():
        for _, pos in occ:
            assert tuple(tokens[pos:pos + len(gram)]) == gram


def test_judgment_rows():
    assert parse_judgment_lines(["t1\tj1\t2"]) == [JudgmentRecord("t1", "j1", 2)]
    with pytest.raises(DataError):
        parse_judgment_lines(["t1\tj1\t7"])
    assert parse_judgment_lines(["t1\tj1\t4"], Scale.ONE_FIVE)[0].rank == 2


def test_judgment_comments_and_malformed_rows():
    assert parse_judgment_lines(["# header", "", "t\tj\t0"]) == [JudgmentRecord("t", "j", 0)]
    with pytest.raises(DataError, match="malformed"):
        parse_judgment_lines(["t\tj"])
    with pytest.raises(DataError, match="malformed rank"):
        parse_judgment_lines(["t\tj\tx"])


def test_duplicate_judgment_keeps_last():
    with pytest.warns(DataWarning, match="duplicate"):
        out = parse_judgment_lines(["t\tj\t0", "t\tj\t2"])
    assert out == [JudgmentRecord("t", "j", 2)]


@pytest.mark.parametrize("r5, r3", [(1, 0), (2, 0), (3, 1), (4, 2), (5, 2)])
def test_rescale(r5, r3):
    assert rescale_rank(r5) == r3


@pytest.mark.parametrize("bad", [0, 6, True])
def test_rescale_out_of_range(bad):
    with pytest.raises(DataError):
        rescale_rank(bad)


def test_corpus_stats():
    c = ParallelCorpus.from_texts([("le chat", "the cat")], 2)
    assert tuple(vars(corpus_stats(c, Side.SOURCE)).values()) == (1, 2, 2)
    c = ParallelCorpus.from_texts([("a a", "x"), ("a a", "y")], 2)
    assert tuple(vars(corpus_stats(c, "source")).values()) == (2, 4, 1)


def test_toy_fixture_loads(toy):
    c = load_parallel_corpus(toy / "corpus.src", toy / "corpus.tgt", 5)
    assert len(c) == 10
    assert c.sentence_count(("la", "maison"), Side.SOURCE) == 2
    inst = load_instances(toy / "instances.tsv")
    assert [i.id for i in inst][:2] == ["i01", "i02"]
    judg = load_judgments(toy / "judgments.tsv")
    groups = group_by_translation(judg)
    assert len(groups) == 12 and all(len(v) == 4 for v in groups.values())


def test_duplicate_instance_id(tmp_path):
    p = write(tmp_path, "i.tsv", "a\ts\tx\ty\na\ts\tx\ty\n")
    with pytest.raises(DataError, match="duplicate"):
        load_instances(p)


def test_sentence_validation():
    with pytest.raises(DataError):
        Sentence.from_text("s", "   ")
    with pytest.raises(DataError):
        JudgmentRecord("t", "j", 3)
