"""Versioned text persistence for trained trait models.

Layout (tab separated, one record per line)::

    #qe-trait-model<TAB>v1
    config<TAB>name<TAB>value...
    translation<TAB>id<TAB>description values...
    judge<TAB>id<TAB>description values...
    posterior<TAB>entity<TAB>component<TAB>precision_mean<TAB>precision

Entities are ``bias``, ``translation:<id>`` and ``judge:<id>``; components are
``bias``, ``v<k>``, ``u<k>`` and ``b<i>``. Floats are written with ``repr`` so a
round trip is exact. Cached EP messages are not stored: a loaded model answers
queries but refitting starts from the priors.
"""

from __future__ import annotations

from pathlib import Path

from hybridqe.corpus import read_lines
from hybridqe.errors import DataError
from hybridqe.infer.engine import Judge, ModelConfig, TraitModel, Translation
from hybridqe.infer.gaussian import Gaussian1D

HEADER = "#qe-trait-model\tv1"
_GAUSSIAN_FIELDS = ("prior_u", "prior_v", "prior_bias")
_SCALAR_FIELDS = ("K", "beta", "tau", "threshold_prior_var", "L", "max_sweeps",
                  "convergence_tol", "damping", "product_scheme")


def _g(g: Gaussian1D) -> str:
    return f"{float(g.precision_mean)!r}\t{float(g.precision)!r}"


def format_model(model: TraitModel) -> str:
    cfg = model.cfg
    out = [HEADER]
    for name in _SCALAR_FIELDS:
        value = getattr(cfg, name)
        out.append(f"config\t{name}\t{value if isinstance(value, str) else repr(value)}")
    out.append("config\tthreshold_prior_means\t" + "\t".join(repr(b) for b in cfg.threshold_prior_means))
    for name in _GAUSSIAN_FIELDS:
        out.append(f"config\t{name}\t{_g(getattr(cfg, name))}")
    for tid, t in model.translations.items():
        out.append("translation\t" + "\t".join([tid, *map(repr, t.description)]))
    for jid, j in model.judges.items():
        out.append("judge\t" + "\t".join([jid, *map(repr, j.description)]))
    out.append(f"posterior\tbias\tbias\t{_g(model.bias)}")
    for tid, t in model.translations.items():
        out.extend(f"posterior\ttranslation:{tid}\tv{k}\t{_g(g)}" for k, g in enumerate(t.traits))
    for jid, j in model.judges.items():
        out.extend(f"posterior\tjudge:{jid}\tu{k}\t{_g(g)}" for k, g in enumerate(j.traits))
        out.extend(f"posterior\tjudge:{jid}\tb{i}\t{_g(g)}" for i, g in enumerate(j.thresholds))
    return "\n".join(out) + "\n"


def save_model(model: TraitModel, path) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")


def _parse_scalar(name: str, text: str):
    if name == "product_scheme":
        return text
    if name in ("K", "L", "max_sweeps"):
        return int(text)
    return float(text)


def parse_model(lines: list[str], origin: str = "<model>") -> TraitModel:
    if not lines or lines[0] != HEADER:
        raise DataError(f"{origin}: not a trait model file (missing or unknown header)")
    cfg_kw: dict = {}
    descs: dict[str, dict[str, list[float]]] = {"translation": {}, "judge": {}}
    posts: list[tuple[str, str, Gaussian1D]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        try:
            if cols[0] == "config":
                name = cols[1]
                if name in _GAUSSIAN_FIELDS:
                    cfg_kw[name] = Gaussian1D(float(cols[2]), float(cols[3]))
                elif name == "threshold_prior_means":
                    cfg_kw[name] = tuple(float(c) for c in cols[2:])
                elif name in _SCALAR_FIELDS:
                    cfg_kw[name] = _parse_scalar(name, cols[2])
                else:
                    raise DataError(f"{origin}: unknown config key {name!r} on line {lineno}")
            elif cols[0] in descs:
                descs[cols[0]][cols[1]] = [float(c) for c in cols[2:]]
            elif cols[0] == "posterior":
                posts.append((cols[1], cols[2], Gaussian1D(float(cols[3]), float(cols[4]))))
            else:
                raise DataError(f"{origin}: unknown record {cols[0]!r} on line {lineno}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{origin}: malformed line {lineno}: {line!r}") from exc
    try:
        cfg = ModelConfig(**cfg_kw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{origin}: invalid config block: {exc}") from exc

    model = TraitModel(cfg)
    for tid, desc in descs["translation"].items():
        model.translations[tid] = Translation([cfg.prior_v] * cfg.K, desc)
    for jid, desc in descs["judge"].items():
        model.judges[jid] = Judge([cfg.prior_u] * cfg.K, desc, cfg.threshold_priors())
    for entity, comp, g in posts:
        if not g.proper:
            raise DataError(f"{origin}: improper posterior for {entity} {comp}")
        kind, _, ident = entity.partition(":")
        try:
            idx = int(comp[1:]) if comp != "bias" else 0
            if kind == "bias":
                model.bias = g
            elif kind == "translation" and comp[0] == "v":
                model.translations[ident].traits[idx] = g
            elif kind == "judge" and comp[0] == "u":
                model.judges[ident].traits[idx] = g
            elif kind == "judge" and comp[0] == "b":
                model.judges[ident].thresholds[idx] = g
            else:
                raise DataError(f"{origin}: unknown posterior component {entity} {comp}")
        except (KeyError, IndexError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{origin}: posterior for unknown entity or component {entity} {comp}") from exc
    return model


def load_model(path) -> TraitModel:
    return parse_model(read_lines(path), origin=str(path))
