"""Bilinear trait model with per-judge ordinal thresholds, fitted by message passing.

For a judgment (translation t, judge j, rank a) the factor graph is

    s_k = u_k x_k,  t_k = v_k y_k,  z_k = s_k t_k,
    r~ = sum_k z_k + bias,  r = r~ + N(0, beta^2),
    b~_i = b_i + N(0, tau^2),
    r > b~_i for i < a  and  r < b~_i for i >= a.

Indicator constraints are handled with EP on d_i = r - b~_i; the product
factors with EP messages (see ``gaussian.product_factor_messages``).
Judgments are swept in input order until posterior means stop moving.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from hybridqe.corpus import JudgmentRecord, group_by_translation
from hybridqe.errors import ContradictoryEvidence, DataError, DataWarning, ThresholdOrderError
from hybridqe.infer.gaussian import (
    Gaussian1D,
    add_noise,
    product_factor_messages,
    product_forward,
    scale,
    truncated_gaussian_moments,
)

log = logging.getLogger(__name__)

_INNER_ITERATIONS = 50
_CELL_ITERATIONS = 50
_CELL_TOL = 1e-6
_INNER_TOL = 1e-9
_UNIFORM = Gaussian1D(0.0, 0.0)


def _normal(mean: float, var: float) -> Gaussian1D:
    return Gaussian1D.from_mean_var(mean, var)


@dataclass(frozen=True)
class ModelConfig:
    K: int = 1
    beta: float = 1.0
    tau: float = 0.25
    prior_u: Gaussian1D = field(default_factory=lambda: _normal(1.0, 1.0))
    prior_v: Gaussian1D = field(default_factory=lambda: _normal(0.0, 1.0))
    prior_bias: Gaussian1D = field(default_factory=lambda: _normal(0.0, 1.0))
    threshold_prior_means: tuple[float, ...] = (-0.5, 0.5)
    threshold_prior_var: float = 1.0
    L: int = 3
    max_sweeps: int = 100
    convergence_tol: float = 1e-4
    damping: float = 0.0
    product_scheme: str = "ep"

    def __post_init__(self):
        object.__setattr__(self, "threshold_prior_means", tuple(float(b) for b in self.threshold_prior_means))
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not self.beta > 0 or not self.tau > 0:
            raise ValueError("beta and tau must be positive")
        if self.L != 3:
            raise ValueError("only L = 3 ranks are supported")
        if len(self.threshold_prior_means) != self.L - 1:
            raise ValueError(f"need {self.L - 1} threshold prior means")
        if any(b >= c for b, c in zip(self.threshold_prior_means, self.threshold_prior_means[1:])):
            raise ValueError("threshold prior means must be strictly increasing")
        if not self.threshold_prior_var > 0:
            raise ValueError("threshold_prior_var must be positive")
        for name in ("prior_u", "prior_v", "prior_bias"):
            if not getattr(self, name).proper:
                raise ValueError(f"{name} must be a proper Gaussian")
        if self.max_sweeps < 0 or not self.convergence_tol > 0:
            raise ValueError("max_sweeps must be >= 0 and convergence_tol > 0")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must be in [0, 1), got {self.damping}")
        if self.product_scheme not in ("ep", "matchbox"):
            raise ValueError(f"unknown product_scheme {self.product_scheme!r}")

    def threshold_priors(self) -> list[Gaussian1D]:
        return [_normal(m, self.threshold_prior_var) for m in self.threshold_prior_means]


@dataclass
class Translation:
    traits: list[Gaussian1D]
    description: list[float]


@dataclass
class Judge:
    traits: list[Gaussian1D]
    description: list[float]
    thresholds: list[Gaussian1D]


@dataclass
class _Cell:
    """All judgments one judge gave one translation; they share the latent rating r~.

    ``u``, ``v``, ``bias`` and ``b`` are the messages the cell currently sends
    to shared variables; ``sites`` holds, per judgment, the EP approximations
    of its indicator constraints as (precision_mean, precision) on r~ + n - b_i.
    """

    u: list[Gaussian1D]
    v: list[Gaussian1D]
    bias: Gaussian1D
    b: list[Gaussian1D]
    sites: dict[tuple, list[tuple[float, float]]] = field(default_factory=dict)
    z: list[Gaussian1D] | None = None

    @classmethod
    def fresh(cls, K: int, L: int) -> "_Cell":
        return cls([_UNIFORM] * K, [_UNIFORM] * K, _UNIFORM, [_UNIFORM] * (L - 1))


@dataclass(frozen=True)
class RankPosterior:
    probs: tuple[float, ...]

    def __post_init__(self):
        if any(not 0.0 <= p <= 1.0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"invalid rank distribution {self.probs}")

    def __getitem__(self, a: int) -> float:
        return self.probs[a]

    @property
    def map_rank(self) -> int:
        return max(range(len(self.probs)), key=self.probs.__getitem__)

    @property
    def expected_rank(self) -> float:
        return sum(a * p for a, p in enumerate(self.probs))


@dataclass
class Diagnostics:
    sweeps: int = 0
    final_delta: float = 0.0
    converged: bool = True
    excluded: list[JudgmentRecord] = field(default_factory=list)


class TraitModel:
    """Posterior state of the trait model.

    Entities must be registered before judgments that mention them are observed.
    """

    def __init__(self, cfg: ModelConfig | None = None):
        self.cfg = cfg or ModelConfig()
        self.translations: dict[str, Translation] = {}
        self.judges: dict[str, Judge] = {}
        self.bias: Gaussian1D = self.cfg.prior_bias
        self._cells: dict[tuple[str, str], _Cell] = {}
        self._records: dict[tuple, JudgmentRecord] = {}

    @classmethod
    def from_judgments(cls, data: Iterable[JudgmentRecord], cfg: ModelConfig | None = None) -> "TraitModel":
        model = cls(cfg)
        for rec in data:
            if rec.translation_id not in model.translations:
                model.register_translation(rec.translation_id)
            if rec.judge_id not in model.judges:
                model.register_judge(rec.judge_id)
        return model

    def register_translation(self, tid: str, description: Sequence[float] | None = None) -> None:
        K = self.cfg.K
        desc = [1.0] * K if description is None else [float(d) for d in description]
        if len(desc) != K or any(d == 0.0 or not math.isfinite(d) for d in desc):
            raise ValueError(f"translation {tid!r}: description must be {K} finite non-zero values")
        self.translations[tid] = Translation([self.cfg.prior_v] * K, desc)

    def register_judge(self, jid: str, description: Sequence[float] | None = None) -> None:
        K = self.cfg.K
        desc = [1.0] * K if description is None else [float(d) for d in description]
        if len(desc) != K or any(d == 0.0 or not math.isfinite(d) for d in desc):
            raise ValueError(f"judge {jid!r}: description must be {K} finite non-zero values")
        self.judges[jid] = Judge([self.cfg.prior_u] * K, desc, self.cfg.threshold_priors())

    # -- views ---------------------------------------------------------------

    def posterior_means(self) -> list[float]:
        out = [self.bias.mean]
        for t in self.translations.values():
            out.extend(g.mean for g in t.traits)
        for j in self.judges.values():
            out.extend(g.mean for g in j.traits)
            out.extend(g.mean for g in j.thresholds)
        return out

    def translation_mean(self, tid: str) -> float:
        """Posterior mean of sum_k v_k y_k, the translation's latent quality."""
        t = self._translation(tid)
        return sum(g.mean * y for g, y in zip(t.traits, t.description))

    def _translation(self, tid: str) -> Translation:
        try:
            return self.translations[tid]
        except KeyError:
            raise DataError(f"unknown translation {tid!r}") from None

    def _judge(self, jid: str) -> Judge:
        try:
            return self.judges[jid]
        except KeyError:
            raise DataError(f"unknown judge {jid!r}") from None

    def population_judge(self) -> Judge:
        """Precision-weighted average of all judges (the prior if there are none)."""
        if not self.judges:
            return Judge([self.cfg.prior_u] * self.cfg.K, [1.0] * self.cfg.K, self.cfg.threshold_priors())
        judges = list(self.judges.values())
        n = len(judges)

        def pool(gs: list[Gaussian1D]) -> Gaussian1D:
            prec = sum(g.precision for g in gs)
            return Gaussian1D(sum(g.precision_mean for g in gs) / n, prec / n)

        K, L = self.cfg.K, self.cfg.L
        return Judge(
            [pool([j.traits[k] for j in judges]) for k in range(K)],
            [sum(j.description[k] for j in judges) / n for k in range(K)],
            [pool([j.thresholds[i] for j in judges]) for i in range(L - 1)],
        )

    def check_threshold_order(self) -> None:
        for jid, judge in self.judges.items():
            means = [b.mean for b in judge.thresholds]
            if any(a >= b for a, b in zip(means, means[1:])):
                raise ThresholdOrderError(f"judge {jid!r}: threshold means {means} are not increasing")


# --- message passing ----------------------------------------------------------

def _latent_rating(judge: Judge, trans: Translation, bias: Gaussian1D) -> Gaussian1D:
    """Gaussian message for r~ = sum_k (u_k x_k)(v_k y_k) + bias."""
    mean, var = bias.mean, bias.var
    for u, x, v, y in zip(judge.traits, judge.description, trans.traits, trans.description):
        z = product_forward(scale(u, x), scale(v, y))
        mean += z.mean
        var += z.var
    return _normal(mean, var)


def _constraint_ep(s_prior: Gaussian1D, cav_b: list[Gaussian1D], ranks: list[int],
                   sites: list[list[list[float]]], update: set[int], records: list[JudgmentRecord],
                   cfg: ModelConfig) -> tuple[list[float], list[list[float]]]:
    """EP over the indicator constraints of one cell, with a joint Gaussian on
    x = (S, b_0, .., b_{L-2}, n_1, .., n_V); S = r~ = bias + sum_k z_k and n_k is
    vote k's observation noise.

    Vote k, threshold i contributes I(+-(S + n_k - b_i - e_ki) > 0) with
    e_ki ~ N(0, tau^2); its site is a Gaussian in y = S + n_k - b_i, refreshed
    from the truncated moments of d = y - e. ``sites`` is updated in place for
    the votes listed in ``update``; returns the posterior mean and covariance.
    Cells are small, so plain lists beat numpy here.
    """
    nb = cfg.L - 1
    nv = len(ranks)
    dim = 1 + nb + nv
    var0 = [s_prior.var] + [b.var for b in cav_b] + [cfg.beta ** 2] * nv
    mean0 = [s_prior.mean] + [b.mean for b in cav_b] + [0.0] * nv
    if any(t != 0.0 for site in sites for _, t in site):
        prec = np.diag(1.0 / np.array(var0))
        eta = np.array(mean0) / np.array(var0)
        for k in range(nv):
            for i in range(nb):
                nu, t = sites[k][i]
                a = np.zeros(dim)
                a[0], a[1 + i], a[1 + nb + k] = 1.0, -1.0, 1.0
                prec += t * np.outer(a, a)
                eta += nu * a
        cov_np = np.linalg.inv(prec)
        cov = cov_np.tolist()
        mu = (cov_np @ eta).tolist()
    else:
        cov = [[var0[r] if r == c else 0.0 for c in range(dim)] for r in range(dim)]
        mu = list(mean0)
    tau2 = cfg.tau ** 2
    rows = range(dim)
    for _ in range(_INNER_ITERATIONS):
        change = 0.0
        for k in sorted(update):
            ik = 1 + nb + k
            for i in range(nb):
                ib = 1 + i
                ca = [row[0] - row[ib] + row[ik] for row in cov]
                v_y = ca[0] - ca[ib] + ca[ik]
                m_y = mu[0] - mu[ib] + mu[ik]
                nu_old, t_old = sites[k][i]
                t_cav = 1.0 / v_y - t_old
                if not t_cav > 0.0:
                    continue
                nu_cav = m_y / v_y - nu_old
                s2 = 1.0 / t_cav
                m = nu_cav * s2
                side = "greater" if i < ranks[k] else "less"
                mw, vw = truncated_gaussian_moments(Gaussian1D(m / (s2 + tau2), 1.0 / (s2 + tau2)), 0.0, side,
                                                    judgment=records[k])
                gain = s2 / (s2 + tau2)
                mean_y = m + gain * (mw - m)
                var_y = s2 - gain * gain * (s2 + tau2 - vw)
                t_new = 1.0 / var_y - t_cav
                nu_new = mean_y / var_y - nu_cav
                dt, dnu = t_new - t_old, nu_new - nu_old
                change = max(change, abs(dt), abs(dnu))
                sites[k][i] = [nu_new, t_new]
                denom = 1.0 + dt * v_y
                f = dt / denom
                g = (dnu - dt * m_y) / denom
                for r in rows:
                    car = ca[r]
                    mu[r] += g * car
                    fr = f * car
                    row = cov[r]
                    for c in rows:
                        row[c] -= fr * ca[c]
        if change < _INNER_TOL:
            break
    return mu, cov


def _observe_cell(model: TraitModel, tid: str, jid: str, keys: Sequence[tuple],
                  records: dict[tuple, JudgmentRecord], cfg: ModelConfig) -> None:
    """Refresh the sites of the judgments ``keys`` (all in this cell), then the
    cell's messages to u, v, bias and the judge thresholds."""
    trans = model._translation(tid)
    judge = model._judge(jid)
    cell = model._cells.get((tid, jid))
    if cell is None:
        cell = _Cell.fresh(cfg.K, cfg.L)
    K, nb = cfg.K, cfg.L - 1

    cav_u = [p / m for p, m in zip(judge.traits, cell.u)]
    cav_v = [p / m for p, m in zip(trans.traits, cell.v)]
    cav_bias = model.bias / cell.bias
    cav_b = [p / m for p, m in zip(judge.thresholds, cell.b)]
    if not all(g.proper for g in (*cav_u, *cav_v, cav_bias, *cav_b)):
        log.debug("skipping cell (%s, %s): improper cavity", tid, jid)
        return

    q_s = [scale(u, x) for u, x in zip(cav_u, judge.description)]
    q_t = [scale(v, y) for v, y in zip(cav_v, trans.description)]
    z_fwd = cell.z if cell.z is not None else [product_forward(s, t) for s, t in zip(q_s, q_t)]
    all_keys = list(cell.sites) + [k for k in keys if k not in cell.sites]
    recs = [records[k] if k in records else model._records[k] for k in all_keys]
    sites = [[list(s) for s in cell.sites[k]] if k in cell.sites else [[0.0, 0.0] for _ in range(nb)]
             for k in all_keys]
    update = {all_keys.index(k) for k in keys}
    ranks = [r.rank for r in recs]
    # The constraint EP and the product factors exchange messages about z until
    # the forward messages to z settle; the cavities stay fixed meanwhile.
    for _ in range(_CELL_ITERATIONS):
        zsum = _normal(sum(z.mean for z in z_fwd), sum(z.var for z in z_fwd))
        s_prior = _normal(cav_bias.mean + zsum.mean, cav_bias.var + zsum.var)
        mean, cov = _constraint_ep(s_prior, cav_b, ranks, sites, update, recs, cfg)
        to_s_var = _normal(mean[0], cov[0][0]) / s_prior
        if to_s_var.proper:
            to_sum = _normal(to_s_var.mean - cav_bias.mean, to_s_var.var + cav_bias.var)
        else:
            to_sum = _UNIFORM
        new_u, new_v, new_z = [], [], []
        for k in range(K):
            if to_sum.proper:
                others_mean = sum(z.mean for l, z in enumerate(z_fwd) if l != k)
                others_var = sum(z.var for l, z in enumerate(z_fwd) if l != k)
                msg_z = _normal(to_sum.mean - others_mean, to_sum.var + others_var)
            else:
                msg_z = _UNIFORM
            to_z, to_s, to_t = product_factor_messages(q_s[k], q_t[k], msg_z, cfg.product_scheme)
            new_z.append(to_z)
            new_u.append(scale(to_s, 1.0 / judge.description[k]))
            new_v.append(scale(to_t, 1.0 / trans.description[k]))
        change = max(max(abs(a.mean - b.mean), abs(a.var - b.var)) for a, b in zip(new_z, z_fwd))
        z_fwd = new_z
        if change < _CELL_TOL:
            break
    if to_s_var.proper:
        new_bias = _normal(to_s_var.mean - zsum.mean, to_s_var.var + zsum.var)
    else:
        new_bias = _UNIFORM
    new_b = [_normal(mean[1 + i], cov[1 + i][1 + i]) / cav_b[i] for i in range(nb)]

    d = cfg.damping
    new_u = [n.damped(o, d) for n, o in zip(new_u, cell.u)]
    new_v = [n.damped(o, d) for n, o in zip(new_v, cell.v)]
    new_bias = new_bias.damped(cell.bias, d)
    new_b = [n.damped(o, d) for n, o in zip(new_b, cell.b)]
    posts_u = [c * m for c, m in zip(cav_u, new_u)]
    posts_v = [c * m for c, m in zip(cav_v, new_v)]
    post_bias = cav_bias * new_bias
    posts_b = [c * m for c, m in zip(cav_b, new_b)]
    if not all(p.proper for p in (*posts_u, *posts_v, post_bias, *posts_b)):
        log.debug("skipping cell (%s, %s): update would give an improper posterior", tid, jid)
        return
    judge.traits[:] = posts_u
    trans.traits[:] = posts_v
    model.bias = post_bias
    judge.thresholds[:] = posts_b
    cell.u, cell.v, cell.bias, cell.b = new_u, new_v, new_bias, new_b
    cell.sites = {k: [tuple(s) for s in site] for k, site in zip(all_keys, sites)}
    cell.z = z_fwd
    for k, rec in zip(all_keys, recs):
        model._records[k] = rec
    model._cells[(tid, jid)] = cell


def observe_judgment(model: TraitModel, j: JudgmentRecord, cfg: ModelConfig | None = None,
                     key: tuple | None = None) -> None:
    """Refresh the messages of one judgment and fold them into the posteriors.

    Other judgments already stored for the same (translation, judge) pair keep
    their messages and enter through the shared latent rating.
    """
    key = key if key is not None else (j.translation_id, j.judge_id, 0)
    _observe_cell(model, j.translation_id, j.judge_id, [key], {key: j}, cfg or model.cfg)


def _retract_vote(model: TraitModel, rec: JudgmentRecord, key: tuple) -> None:
    """Forget one judgment; if its cell becomes empty the cell's messages go too."""
    cell = model._cells.get((rec.translation_id, rec.judge_id))
    model._records.pop(key, None)
    if cell is None or key not in cell.sites:
        return
    del cell.sites[key]
    if not cell.sites:
        judge, trans = model.judges[rec.judge_id], model.translations[rec.translation_id]
        judge.traits[:] = [p / m for p, m in zip(judge.traits, cell.u)]
        trans.traits[:] = [p / m for p, m in zip(trans.traits, cell.v)]
        model.bias = model.bias / cell.bias
        judge.thresholds[:] = [p / m for p, m in zip(judge.thresholds, cell.b)]
        del model._cells[(rec.translation_id, rec.judge_id)]


def judgment_keys(data: Sequence[JudgmentRecord]) -> list[tuple]:
    """Message keys: (translation, judge, occurrence number of that pair)."""
    seen: dict[tuple[str, str], int] = {}
    keys = []
    for rec in data:
        pair = (rec.translation_id, rec.judge_id)
        n = seen.get(pair, 0)
        seen[pair] = n + 1
        keys.append((rec.translation_id, rec.judge_id, n))
    return keys


def run_inference(model: TraitModel, data: Sequence[JudgmentRecord],
                  cfg: ModelConfig | None = None) -> tuple[TraitModel, Diagnostics]:
    """Sweep over ``data`` until no posterior mean moves by ``convergence_tol``.

    Each sweep visits the (translation, judge) cells in order of first
    appearance in ``data``, and the judgments inside a cell in input order.
    """
    cfg = cfg or model.cfg
    data = list(data)
    for rec in data:
        model._translation(rec.translation_id)
        model._judge(rec.judge_id)
    diag = Diagnostics()
    if not data:
        return model, diag

    records = dict(zip(judgment_keys(data), data))
    cells: dict[tuple[str, str], list[tuple]] = {}
    for key in records:
        cells.setdefault(key[:2], []).append(key)

    diag.converged = False
    for sweep in range(1, cfg.max_sweeps + 1):
        before = model.posterior_means()
        for (tid, jid), keys in cells.items():
            while keys:
                try:
                    _observe_cell(model, tid, jid, keys, records, cfg)
                    break
                except ContradictoryEvidence as exc:
                    bad = next(k for k in keys if records[k] is exc.judgment)
                    keys.remove(bad)
                    _retract_vote(model, records[bad], bad)
                    diag.excluded.append(records[bad])
                    warnings.warn(f"excluding contradictory judgment {records[bad]}", DataWarning, stacklevel=2)
        model.check_threshold_order()
        after = model.posterior_means()
        diag.sweeps = sweep
        diag.final_delta = max((abs(a - b) for a, b in zip(after, before)), default=0.0)
        log.debug("sweep %d: max |delta mean| = %.3g", sweep, diag.final_delta)
        if diag.final_delta < cfg.convergence_tol:
            diag.converged = True
            break
    if not diag.converged:
        log.warning("inference stopped after %d sweeps (delta %.3g)", diag.sweeps, diag.final_delta)
    return model, diag


def fit_model(data: Sequence[JudgmentRecord], cfg: ModelConfig | None = None) -> tuple[TraitModel, Diagnostics]:
    """Register every entity in ``data`` on a fresh model and run inference."""
    model = TraitModel.from_judgments(data, cfg)
    return run_inference(model, data, model.cfg)


# --- predictions --------------------------------------------------------------

def _rank_distribution(r: Gaussian1D, thresholds: list[Gaussian1D], tau: float) -> RankPosterior:
    lo, hi = thresholds[0], thresholds[-1]
    p0 = float(ndtr((lo.mean - r.mean) / math.sqrt(r.var + lo.var + tau * tau)))
    p2 = float(ndtr((r.mean - hi.mean) / math.sqrt(r.var + hi.var + tau * tau)))
    p1 = max(0.0, 1.0 - p0 - p2)
    total = p0 + p1 + p2
    return RankPosterior((p0 / total, p1 / total, p2 / total))


def posterior_rank_distribution(model: TraitModel, translation_id: str,
                                judge_id: str | None = None) -> RankPosterior:
    """Predictive rank distribution of a new vote; ``judge_id=None`` is the population judge."""
    trans = model._translation(translation_id)
    judge = model.population_judge() if judge_id is None else model._judge(judge_id)
    r = add_noise(_latent_rating(judge, trans, model.bias), model.cfg.beta ** 2)
    return _rank_distribution(r, judge.thresholds, model.cfg.tau)


def confidence_score(model: TraitModel, translation_id: str) -> float:
    """Probability the model assigns to its own most likely rank for this translation."""
    return max(posterior_rank_distribution(model, translation_id).probs)


def held_out_rank_distribution(model: TraitModel, rec: JudgmentRecord) -> RankPosterior:
    """Predictive rank distribution for ``rec``'s judge and translation with the
    messages of that (translation, judge) cell divided out, i.e. the EP cavity.

    Without the division a lone judgment largely explains itself through its
    own judge's thresholds.
    """
    trans = model._translation(rec.translation_id)
    judge = model._judge(rec.judge_id)
    cell = model._cells.get((rec.translation_id, rec.judge_id))
    if cell is None:
        return posterior_rank_distribution(model, rec.translation_id, rec.judge_id)
    cav = Judge([p / m for p, m in zip(judge.traits, cell.u)], judge.description,
                [p / m for p, m in zip(judge.thresholds, cell.b)])
    cav_t = Translation([p / m for p, m in zip(trans.traits, cell.v)], trans.description)
    cav_bias = model.bias / cell.bias
    if not all(g.proper for g in (*cav.traits, *cav.thresholds, *cav_t.traits, cav_bias)):
        return posterior_rank_distribution(model, rec.translation_id, rec.judge_id)
    r = add_noise(_latent_rating(cav, cav_t, cav_bias), model.cfg.beta ** 2)
    return _rank_distribution(r, cav.thresholds, model.cfg.tau)


def flag_inconsistent_judgments(model: TraitModel, data: Sequence[JudgmentRecord],
                                epsilon: float = 0.05, min_votes: int = 3) -> list[JudgmentRecord]:
    """Judgments whose held-out predictive probability is below ``epsilon``,
    on translations with at least ``min_votes`` votes, in input order."""
    flagged = []
    for tid, votes in group_by_translation(data).items():
        if len(votes) < min_votes:
            continue
        for rec in votes:
            if held_out_rank_distribution(model, rec)[rec.rank] < epsilon:
                flagged.append(rec)
    order = {id(r): k for k, r in enumerate(data)}
    return sorted(flagged, key=lambda r: order[id(r)])
