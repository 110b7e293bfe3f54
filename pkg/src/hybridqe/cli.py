"""Command-line entry point: ``qe <subcommand> [options]``.

Every stage reads and writes plain files, so stages can be rerun one at a time.
Options can also come from a ``key = value`` config file given with
``--config``; command-line flags override the file, which overrides defaults.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from hybridqe import __version__
from hybridqe.aggregate import (
    DEFAULT_LAMBDA,
    TrainingInstance,
    load_scores,
    load_weights,
    save_scores,
    save_weights,
    score_all,
    train_log_linear_weights,
    training_instances,
)
from hybridqe.align import load_index, parse_pharaoh, save_index, train_alignment_index
from hybridqe.corpus import Scale, group_by_translation, load_instances, load_judgments, load_parallel_corpus, read_lines
from hybridqe.errors import DataError, QEError
from hybridqe.eval import (
    TABLE4_MASKS,
    EvalDataset,
    ExperimentReport,
    ReportRow,
    SplitSpec,
    format_report_table,
    format_report_tsv,
    format_timing_tsv,
    run_ablation,
    run_ngram_sweep,
    spearman_rho,
    split_votes,
    test_truth,
)
from hybridqe.features import CATEGORIES, REGISTRY, FeatureConfig, extract_features, format_diagnostics, load_features, save_features
from hybridqe.infer import (
    Gaussian1D,
    ModelConfig,
    fit_model,
    flag_inconsistent_judgments,
    held_out_rank_distribution,
    load_model,
    save_model,
)

log = logging.getLogger("hybridqe")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


# --- option table ------------------------------------------------------------------
#
# One table drives both the config file and the flags. Defaults of None mean
# "no default"; a subcommand that needs such a value reports a usage error.

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Option:
    key: str
    parse: Callable[[str], Any]
    default: Any
    help: str
    metavar: str | None = None

    @property
    def flag(self) -> str:
        return "--" + self.key.replace("_", "-")


_M, _F, _S = ModelConfig(), FeatureConfig(), SplitSpec()

OPTIONS = {o.key: o for o in [
    # paths
    Option("source", str, None, "source side of the parallel corpus, one sentence per line", "FILE"),
    Option("target", str, None, "target side of the parallel corpus, one sentence per line", "FILE"),
    Option("pharaoh", str, None, "import these Pharaoh 'i-j' alignments instead of training Model 1", "FILE"),
    Option("index", str, None, "alignment index file", "FILE"),
    Option("instances", str, None, "translation instances TSV: id, system, source text, target text", "FILE"),
    Option("judgments", str, None, "judgments TSV: translation id, judge id, rank", "FILE"),
    Option("features", str, None, "feature TSV", "FILE"),
    Option("model", str, None, "serialized trait model", "FILE"),
    Option("weights", str, None, "aggregation weight file", "FILE"),
    Option("scores", str, None, "scores TSV: translation id, score", "FILE"),
    Option("out", str, None, "output file ('-' or omitted writes to standard output where allowed)", "FILE"),
    Option("diagnostics", str, None, "also write per-translation feature diagnostics here", "FILE"),
    Option("table", str, None, "also write the report as an aligned text table here", "FILE"),
    Option("prefix", str, None, "output prefix for report files (.tsv, .txt, .png, .timing.*)", "PATH"),
    # data
    Option("scale", str, "0-2", "rank scale of the judgments file: 0-2 or 1-5"),
    # alignment
    Option("iterations", int, 5, "Model 1 EM iterations per direction", "N"),
    # features
    Option("max_ngram", int, _F.max_ngram, "longest phrase length, 1..9", "N"),
    Option("uncertainty_theta", float, _F.uncertainty_theta, "link probability below which a link is uncertain", "X"),
    Option("log_floor", float, _F.log_floor, "floor applied before taking logs of feature values", "X"),
    # trait model
    Option("K", int, _M.K, "number of latent trait dimensions", "N"),
    Option("beta", float, _M.beta, "rating noise standard deviation", "X"),
    Option("tau", float, _M.tau, "threshold noise standard deviation", "X"),
    Option("prior_u_mean", float, _M.prior_u.mean, "prior mean of judge traits", "X"),
    Option("prior_u_var", float, _M.prior_u.var, "prior variance of judge traits", "X"),
    Option("prior_v_mean", float, _M.prior_v.mean, "prior mean of translation traits", "X"),
    Option("prior_v_var", float, _M.prior_v.var, "prior variance of translation traits", "X"),
    Option("prior_bias_mean", float, _M.prior_bias.mean, "prior mean of the global bias", "X"),
    Option("prior_bias_var", float, _M.prior_bias.var, "prior variance of the global bias", "X"),
    Option("threshold_prior_means", _floats, _M.threshold_prior_means, "comma-separated threshold prior means",
           "X,X"),
    Option("threshold_prior_var", float, _M.threshold_prior_var, "threshold prior variance", "X"),
    Option("max_sweeps", int, _M.max_sweeps, "maximum message-passing sweeps", "N"),
    Option("convergence_tol", float, _M.convergence_tol, "stop when no posterior mean moves by more than this",
           "X"),
    Option("damping", float, _M.damping, "message damping in [0, 1)", "X"),
    Option("product_scheme", str, _M.product_scheme, "product-factor update: ep or matchbox"),
    # flagging
    Option("epsilon", float, 0.05, "flag votes whose held-out probability is below this", "X"),
    Option("min_votes", int, 3, "only flag on translations with at least this many votes", "N"),
    # aggregation
    Option("lam", float, DEFAULT_LAMBDA, "ridge strength relative to a unit-weight instance", "X"),
    Option("categories", _names, CATEGORIES, "comma-separated feature categories (AI, CI, FI) or feature names to use", "C,C"),
    Option("uniform", _bool, False, "ignore model confidences and weight every instance equally"),
    # evaluation
    Option("seed", int, _S.seed, "seed for every random choice", "N"),
    Option("train_fraction", float, _S.train_fraction, "fraction of each translation's votes used for training",
           "X"),
    Option("repeats", int, _S.repeats, "number of random train/test splits", "N"),
    Option("ngram_values", _ints, (5, 9), "comma-separated max_ngram values for the sweep", "N,N"),
]}

_MODEL_KEYS = ("K", "beta", "tau", "prior_u_mean", "prior_u_var", "prior_v_mean", "prior_v_var",
               "prior_bias_mean", "prior_bias_var", "threshold_prior_means", "threshold_prior_var",
               "max_sweeps", "convergence_tol", "damping", "product_scheme")
_FEATURE_KEYS = ("max_ngram", "uncertainty_theta", "log_floor")
_SPLIT_KEYS = ("seed", "train_fraction", "repeats")


def load_config_file(path) -> dict[str, Any]:
    """Parse ``key = value`` lines; '#' starts a comment. Unknown keys are rejected."""
    out: dict[str, Any] = {}
    try:
        lines = read_lines(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        if key not in OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            out[key] = OPTIONS[key].parse(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


class RunConfig:
    """Resolved settings for one invocation: defaults < config file < flags."""

    def __init__(self, values: dict[str, Any]):
        self.values = values

    @classmethod
    def resolve(cls, file_values: dict[str, Any], flag_values: dict[str, Any]) -> "RunConfig":
        values = {k: o.default for k, o in OPTIONS.items()}
        values.update(file_values)
        values.update({k: v for k, v in flag_values.items() if v is not None})
        cfg = cls(values)
        cfg.validate()
        return cfg

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def require(self, key: str) -> Any:
        value = self.values[key]
        if value is None:
            raise UsageError(f"missing required option {OPTIONS[key].flag}")
        return value

    def model_config(self) -> ModelConfig:
        v = self.values
        try:
            return ModelConfig(
                K=v["K"], beta=v["beta"], tau=v["tau"],
                prior_u=Gaussian1D.from_mean_var(v["prior_u_mean"], v["prior_u_var"]),
                prior_v=Gaussian1D.from_mean_var(v["prior_v_mean"], v["prior_v_var"]),
                prior_bias=Gaussian1D.from_mean_var(v["prior_bias_mean"], v["prior_bias_var"]),
                threshold_prior_means=v["threshold_prior_means"], threshold_prior_var=v["threshold_prior_var"],
                max_sweeps=v["max_sweeps"], convergence_tol=v["convergence_tol"], damping=v["damping"],
                product_scheme=v["product_scheme"])
        except ValueError as exc:
            raise UsageError(f"invalid model setting: {exc}") from None

    def feature_config(self, max_ngram: int | None = None) -> FeatureConfig:
        try:
            return FeatureConfig(max_ngram if max_ngram is not None else self["max_ngram"],
                                 self["uncertainty_theta"], self["log_floor"])
        except ValueError as exc:
            raise UsageError(f"invalid feature setting: {exc}") from None

    def split_spec(self) -> SplitSpec:
        try:
            return SplitSpec(self["train_fraction"], self["repeats"], self["seed"])
        except ValueError as exc:
            raise UsageError(f"invalid split setting: {exc}") from None

    def validate(self) -> None:
        self.model_config()
        self.feature_config()
        self.split_spec()
        for n in self["ngram_values"]:
            self.feature_config(n)
        if self["scale"] not in ("0-2", "1-5"):
            raise UsageError(f"scale must be 0-2 or 1-5, got {self['scale']!r}")
        if self["iterations"] < 1:
            raise UsageError("iterations must be >= 1")
        if not 0.0 < self["epsilon"] < 1.0:
            raise UsageError("epsilon must be in (0, 1)")
        if self["min_votes"] < 1:
            raise UsageError("min_votes must be >= 1")
        if not self["lam"] >= 0.0:
            raise UsageError("lam must be >= 0")
        bad = [c for c in self["categories"] if c not in CATEGORIES and c not in REGISTRY]
        if bad or not self["categories"]:
            raise UsageError(f"categories must be a non-empty list of {','.join(CATEGORIES)} or feature names")


# --- output helpers ------------------------------------------------------------------

def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(path).write_text(text, encoding="utf-8")
        log.info("wrote %s", path)


def _corpus(cfg: RunConfig, max_ngram: int | None = None):
    return load_parallel_corpus(cfg.require("source"), cfg.require("target"),
                                max_ngram if max_ngram is not None else cfg["max_ngram"])


def _judgments(cfg: RunConfig):
    scale = Scale.ZERO_TWO if cfg["scale"] == "0-2" else Scale.ONE_FIVE
    return load_judgments(cfg.require("judgments"), scale)


# --- subcommands ------------------------------------------------------------------

def cmd_align(cfg: RunConfig) -> None:
    corpus = _corpus(cfg)
    if cfg["pharaoh"]:
        index = parse_pharaoh(cfg["pharaoh"], corpus)
    else:
        index = train_alignment_index(corpus, cfg["iterations"])
    save_index(index, cfg.require("out"))
    log.info("alignment index for %d sentence pairs", len(corpus))


def cmd_features(cfg: RunConfig) -> None:
    corpus = _corpus(cfg)
    index = load_index(cfg.require("index"))
    instances = load_instances(cfg.require("instances"))
    feats = extract_features(instances, index, corpus, cfg.feature_config())
    save_features(feats, cfg.require("out"))
    if cfg["diagnostics"]:
        Path(cfg["diagnostics"]).write_text(format_diagnostics(feats), encoding="utf-8")


def cmd_train(cfg: RunConfig) -> None:
    data = _judgments(cfg)
    model, diag = fit_model(data, cfg.model_config())
    save_model(model, cfg.require("out"))
    log.info("%d sweeps, converged=%s, final delta %.3g, %d excluded",
             diag.sweeps, diag.converged, diag.final_delta, len(diag.excluded))


def cmd_flag(cfg: RunConfig) -> None:
    model = load_model(cfg.require("model"))
    data = _judgments(cfg)
    flagged = flag_inconsistent_judgments(model, data, cfg["epsilon"], cfg["min_votes"])
    rows = ["translation_id\tjudge_id\trank\theld_out_probability"]
    for rec in flagged:
        p = held_out_rank_distribution(model, rec)[rec.rank]
        rows.append(f"{rec.translation_id}\t{rec.judge_id}\t{rec.rank}\t{p:.6g}")
    _emit("\n".join(rows) + "\n", cfg["out"])
    log.info("flagged %d of %d judgments", len(flagged), len(data))


def cmd_fit(cfg: RunConfig) -> None:
    feats = load_features(cfg.require("features"))
    data = _judgments(cfg)
    model = load_model(cfg["model"]) if cfg["model"] else None
    if model is None:
        log.info("no --model given: targets are majority ranks with uniform weights")
    instances = training_instances(feats, data, model)
    if cfg["uniform"]:
        instances = [TrainingInstance(d.features, d.target, 1.0, d.translation_id) for d in instances]
    try:
        weights = train_log_linear_weights(instances, cfg["lam"], cfg["categories"], cfg["log_floor"])
    except ValueError as exc:
        raise DataError(str(exc)) from None
    save_weights(weights, cfg.require("out"))


def cmd_score(cfg: RunConfig) -> None:
    feats = load_features(cfg.require("features"))
    weights = load_weights(cfg.require("weights"))
    scores = score_all(feats, weights)
    if cfg["out"] in (None, "-"):
        from hybridqe.aggregate import format_scores
        _emit(format_scores(scores), None)
    else:
        save_scores(scores, cfg["out"])


def eval_scores(scores: dict[str, float], judgments, spec: SplitSpec) -> ExperimentReport:
    """Correlate fixed scores with the test-side vote means of each split."""
    groups = group_by_translation(judgments)
    missing = [tid for tid in groups if tid not in scores]
    if missing:
        raise DataError(f"{len(missing)} judged translation(s) have no score (e.g. {missing[0]!r})")
    rhos = []
    for _, test in split_votes(groups, spec):
        truth = test_truth(test)
        tids = list(truth)
        rhos.append(spearman_rho([scores[t] for t in tids], [truth[t] for t in tids]))
    report = ExperimentReport(f"held-out correlation ({spec.repeats} repeats, seed {spec.seed})")
    report.rows.append(ReportRow("scores", sum(rhos) / len(rhos), tuple(rhos)))
    return report


def cmd_eval(cfg: RunConfig) -> None:
    scores = load_scores(cfg.require("scores"))
    report = eval_scores(scores, _judgments(cfg), cfg.split_spec())
    _emit(format_report_tsv(report), cfg["out"])
    if cfg["table"]:
        Path(cfg["table"]).write_text(format_report_table(report), encoding="utf-8")


def cmd_report(cfg: RunConfig, kind: str) -> None:
    from hybridqe import plotting

    prefix = cfg.require("prefix")
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    spec = cfg.split_spec()
    if kind == "ablation":
        dataset = EvalDataset(load_features(cfg.require("features")), _judgments(cfg), cfg.model_config(),
                              cfg["lam"], cfg["log_floor"])
        report = run_ablation(dataset, TABLE4_MASKS, spec, "uniform" if cfg["uniform"] else "confidence")
        plotting.plot_report_bars(report, f"{prefix}.png")
    else:
        instances = load_instances(cfg.require("instances"))
        corpus = _corpus(cfg, max(cfg["ngram_values"]))
        report = run_ngram_sweep(instances, corpus, load_index(cfg.require("index")), _judgments(cfg),
                                 cfg["ngram_values"], spec, cfg.feature_config(), cfg.model_config(),
                                 cfg["categories"], cfg["lam"])
        plotting.plot_report_bars(report, f"{prefix}.png")
        # Wall-clock numbers differ between runs, so they live in separate files.
        Path(f"{prefix}.timing.tsv").write_text(format_timing_tsv(report), encoding="utf-8")
        plotting.plot_ngram_sweep(report, f"{prefix}.timing.png")
    Path(f"{prefix}.tsv").write_text(format_report_tsv(report), encoding="utf-8")
    table = format_report_table(report)
    Path(f"{prefix}.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)


# --- parser ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


COMMON = ("config", "verbose")

SUBCOMMANDS: dict[str, tuple[str, tuple[str, ...]]] = {
    "align": ("train IBM Model 1 in both directions, or import Pharaoh alignments, into an index file",
              ("source", "target", "pharaoh", "iterations", "max_ngram", "out")),
    "features": ("extract alignment, coverage and frequency features for translation instances",
                 ("source", "target", "index", "instances", "max_ngram", "uncertainty_theta", "log_floor",
                  "out", "diagnostics")),
    "train": ("fit the judge/translation trait model to judgments and save it",
              ("judgments", "scale", *_MODEL_KEYS, "out")),
    "flag": ("list judgments that the trained model finds inconsistent",
             ("model", "judgments", "scale", "epsilon", "min_votes", "out")),
    "fit": ("fit log-linear aggregation weights from features and judgments",
            ("features", "judgments", "scale", "model", "categories", "lam", "log_floor", "uniform", "out")),
    "score": ("score translations with fitted weights",
              ("features", "weights", "out")),
    "eval": ("rank-correlate scores with held-out judgments over seeded splits",
             ("scores", "judgments", "scale", *_SPLIT_KEYS, "out", "table")),
    "report": ("run the feature ablation or the n-gram sweep and write TSV, text table and figures",
               ("features", "instances", "source", "target", "index", "judgments", "scale", "prefix",
                *_SPLIT_KEYS, *_MODEL_KEYS, *_FEATURE_KEYS, "ngram_values", "categories", "lam", "uniform")),
}


def _add_option(p: argparse.ArgumentParser, opt: Option) -> None:
    default = opt.default
    shown = ",".join(map(str, default)) if isinstance(default, tuple) else default
    help_text = opt.help if default is None else f"{opt.help} (default: {shown})"
    if opt.parse is _bool:
        p.add_argument(opt.flag, dest=opt.key, action="store_const", const=True, default=None, help=help_text)
        return
    p.add_argument(opt.flag, dest=opt.key, type=opt.parse, default=None, metavar=opt.metavar, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qe", description="Hybrid translation quality estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (summary, keys) in SUBCOMMANDS.items():
        p = subs.add_parser(name, help=summary, description=summary[0].upper() + summary[1:] + ".")
        if name == "report":
            p.add_argument("kind", choices=("ablation", "ngram"),
                           help="ablation: one row per feature mask; ngram: one row per max_ngram value")
        p.add_argument("--config", metavar="FILE",
                       help="key = value settings file; keys are the long option names with '_' for '-'")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
        for key in keys:
            _add_option(p, OPTIONS[key])
    return parser


_DATA_ERRORS = (QEError, np.linalg.LinAlgError, OSError, ValueError)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("qe: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="qe: %(message)s", force=True)

    def _show(message, category, filename, lineno, file=None, line=None):
        print(f"qe: warning: {message}", file=sys.stderr)

    flags = {k: v for k, v in vars(args).items() if k in OPTIONS}
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        warnings.showwarning = _show
        try:
            file_values = load_config_file(args.config) if args.config else {}
            cfg = RunConfig.resolve(file_values, flags)
            if args.command == "report":
                cmd_report(cfg, args.kind)
            else:
                globals()[f"cmd_{args.command}"](cfg)
        except UsageError as exc:
            parser.print_usage(sys.stderr)
            print(f"qe {args.command}: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except _DATA_ERRORS as exc:
            print(f"qe {args.command}: error: {exc}", file=sys.stderr)
            return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
