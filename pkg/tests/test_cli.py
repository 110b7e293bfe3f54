import re

import pytest

from hybridqe.cli import OPTIONS, SUBCOMMANDS, main


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(toy, out):
    src, tgt = toy / "corpus.src", toy / "corpus.tgt"
    j = toy / "judgments.tsv"
    steps = [
        ("align", "--source", src, "--target", tgt, "--out", out / "index.tsv"),
        ("features", "--source", src, "--target", tgt, "--index", out / "index.tsv",
         "--instances", toy / "instances.tsv", "--out", out / "features.tsv"),
        ("train", "--judgments", j, "--out", out / "model.tsv"),
        ("flag", "--model", out / "model.tsv", "--judgments", j, "--out", out / "flags.tsv"),
        ("fit", "--features", out / "features.tsv", "--judgments", j, "--model", out / "model.tsv",
         "--out", out / "weights.tsv"),
        ("score", "--features", out / "features.tsv", "--weights", out / "weights.tsv", "--out", out / "scores.tsv"),
        ("eval", "--scores", out / "scores.tsv", "--judgments", j, "--seed", 42, "--out", out / "eval.tsv",
         "--table", out / "eval.txt"),
    ]
    for step in steps:
        assert run(*step) == 0, step[0]


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    from conftest import TOY
    out = tmp_path_factory.mktemp("run1")
    pipeline(TOY, out)
    return out


def test_pipeline_reproduces_pinned_rho(toy, toy_run):
    got = (toy_run / "eval.tsv").read_text()
    assert got == (toy / "expected_eval.tsv").read_text()
    assert float(got.splitlines()[1].split("\t")[1]) == pytest.approx(0.867483, abs=5e-7)


def test_every_stage_is_byte_identical_on_rerun(toy, toy_run, tmp_path):
    pipeline(toy, tmp_path)
    for name in ("index.tsv", "features.tsv", "model.tsv", "flags.tsv", "weights.tsv", "scores.tsv",
                 "eval.tsv", "eval.txt"):
        assert (tmp_path / name).read_bytes() == (toy_run / name).read_bytes(), name


def test_eval_to_stdout_is_deterministic(toy, toy_run, capsys):
    args = ("eval", "--scores", toy_run / "scores.tsv", "--judgments", toy / "judgments.tsv", "--seed", 42)
    assert run(*args) == 0
    first = capsys.readouterr().out
    assert run(*args) == 0
    assert capsys.readouterr().out == first == (toy / "expected_eval.tsv").read_text()


def test_report_ablation_outputs(toy, toy_run, tmp_path, capsys):
    args = ("report", "ablation", "--features", toy_run / "features.tsv", "--judgments", toy / "judgments.tsv",
            "--seed", 1, "--repeats", 2)
    assert run(*args, "--prefix", tmp_path / "a" / "abl") == 0
    assert run(*args, "--prefix", tmp_path / "b" / "abl") == 0
    for ext in ("tsv", "txt", "png"):
        assert (tmp_path / "a" / f"abl.{ext}").read_bytes() == (tmp_path / "b" / f"abl.{ext}").read_bytes()
    rows = (tmp_path / "a" / "abl.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in rows[1:]] == ["AI", "AI+CI", "AI+FI", "AI+CI+FI"]
    assert "AI+CI+FI" in capsys.readouterr().out


def test_report_ngram_outputs(toy, toy_run, tmp_path):
    assert run("report", "ngram", "--instances", toy / "instances.tsv", "--source", toy / "corpus.src",
               "--target", toy / "corpus.tgt", "--index", toy_run / "index.tsv", "--judgments", toy / "judgments.tsv",
               "--ngram-values", "3,9", "--repeats", 1, "--prefix", tmp_path / "ng") == 0
    timing = (tmp_path / "ng.timing.tsv").read_text().splitlines()
    assert [t.split("\t")[0] for t in timing[1:]] == ["max_ngram=3", "max_ngram=9"]
    assert all(float(t.split("\t")[1]) > 0 for t in timing[1:])
    assert (tmp_path / "ng.timing.png").exists() and (tmp_path / "ng.png").exists()


def test_pharaoh_import(toy, tmp_path):
    assert run("align", "--source", toy / "corpus.src", "--target", toy / "corpus.tgt",
               "--pharaoh", toy / "corpus.align", "--out", tmp_path / "idx") == 0
    assert (tmp_path / "idx").read_text().startswith("#qe-alignment-index")


def test_unknown_subcommand(capsys):
    assert run("bogus") == 1
    assert "usage:" in capsys.readouterr().err


def test_unknown_flag_and_missing_command(capsys):
    assert run("train", "--nope") == 1
    assert run() == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_required_option(capsys):
    assert run("train") == 1
    assert "--judgments" in capsys.readouterr().err


@pytest.mark.parametrize("name", list(SUBCOMMANDS))
def test_help_documents_every_flag(name, capsys):
    assert main([name, "--help"]) == 0
    text = capsys.readouterr().out
    for key in SUBCOMMANDS[name][1]:
        assert re.search(rf"{re.escape(OPTIONS[key].flag)}\b", text), key
    assert "--config" in text and "--verbose" in text


def test_data_errors_exit_2(toy, tmp_path, capsys):
    assert run("train", "--judgments", tmp_path / "missing.tsv", "--out", tmp_path / "m") == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("t1\tj1\t7\n")
    assert run("train", "--judgments", bad, "--out", tmp_path / "m") == 2
    err = capsys.readouterr().err
    assert "outside" in err and not (tmp_path / "m").exists()


def test_config_precedence(toy, toy_run, tmp_path, capsys):
    cfg = tmp_path / "run.conf"
    cfg.write_text(f"# shared settings\nrepeats = 2\nseed = 42\njudgments = {toy / 'judgments.tsv'}\n")
    assert run("eval", "--config", cfg, "--scores", toy_run / "scores.tsv") == 0
    header = capsys.readouterr().out.splitlines()[0].split("\t")
    assert header[-1] == "rho_2"
    assert run("eval", "--config", cfg, "--scores", toy_run / "scores.tsv", "--repeats", 3) == 0
    assert capsys.readouterr().out.splitlines()[0].split("\t")[-1] == "rho_3"


@pytest.mark.parametrize("text", ["bogus_key = 1\n", "repeats = many\n", "repeats\n", "max_ngram = 12\n"])
def test_bad_config_is_usage_error(tmp_path, text, capsys):
    cfg = tmp_path / "c"
    cfg.write_text(text)
    assert run("train", "--config", cfg, "--judgments", "x", "--out", tmp_path / "m") == 1
    assert "error" in capsys.readouterr().err


def test_invalid_flag_value_is_usage_error(capsys):
    assert run("train", "--judgments", "x", "--out", "y", "--damping", "1.5") == 1
    assert run("eval", "--scores", "x", "--judgments", "y", "--repeats", "two") == 1
