import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import norm

from hybridqe.corpus import JudgmentRecord as J
from hybridqe.errors import DataError
from hybridqe.infer import (
    Gaussian1D,
    ModelConfig,
    TraitModel,
    confidence_score,
    fit_model,
    flag_inconsistent_judgments,
    format_model,
    held_out_rank_distribution,
    load_model,
    parse_model,
    posterior_rank_distribution,
    save_model,
)
from hybridqe.infer.engine import _latent_rating, _rank_distribution, Judge, Translation
from oracles import single_pair_posterior

N = Gaussian1D.from_mean_var


def votes(ranks, tid="t", judge=None):
    return [J(tid, judge or f"j{k}", r) for k, r in enumerate(ranks)]


# --- messages ---------------------------------------------------------------------

def test_sum_of_products_message():
    eps = 1e-12
    judge = Judge([N(1.0, eps), N(1.0, eps)], [1.0, 1.0], [])
    trans = Translation([N(1.0, 1.0), N(2.0, 4.0)], [1.0, 1.0])
    r = _latent_rating(judge, trans, N(0.0, 1.0))
    assert r.mean == pytest.approx(3.0) and r.var == pytest.approx(6.0, abs=1e-9)


def _rank_oracle(m, v, thresholds, tau):
    """P(l) for l = #{i : r > b_i + e_i} with independent Gaussian thresholds, by quadrature."""
    sds = [math.sqrt(b.var + tau * tau) for b in thresholds]

    def probs(r):
        above = [norm.cdf((r - b.mean) / s) for b, s in zip(thresholds, sds)]
        p0 = (1 - above[0]) * (1 - above[1])
        p2 = above[0] * above[1]
        return p0, 1 - p0 - p2, p2

    sd = math.sqrt(v)
    return [integrate.quad(lambda r: norm.pdf(r, m, sd) * probs(r)[k], m - 12 * sd, m + 12 * sd)[0]
            for k in range(3)]


def test_rank_distribution_examples():
    pt = _rank_distribution(N(1.2, 1e-12), [N(-0.5, 1e-12), N(0.5, 1e-12)], 1e-6)
    assert pt[2] == pytest.approx(1.0)
    sym = _rank_distribution(N(0.0, 0.7), [N(-0.5, 0.2), N(0.5, 0.2)], 0.25)
    assert sym[0] == pytest.approx(sym[2], abs=1e-15)
    th = [N(-0.5, 0.1), N(0.5, 0.1)]
    got = _rank_distribution(N(0.3, 0.5), th, 0.25)
    assert list(got.probs) == pytest.approx(_rank_oracle(0.3, 0.5, th, 0.25), abs=0.02)


@given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(-3, 0), st.floats(0.01, 3), st.floats(0.01, 3),
       st.floats(0.01, 1))
def test_rank_distribution_is_a_distribution(m, v, lo, gap, vb, tau):
    d = _rank_distribution(N(m, v), [N(lo, vb), N(lo + gap, vb)], tau)
    assert sum(d.probs) == pytest.approx(1.0, abs=1e-12)
    assert all(0.0 <= p <= 1.0 for p in d.probs)


# --- fitting ----------------------------------------------------------------------

def test_empty_data_leaves_priors():
    model, diag = fit_model([])
    assert diag.sweeps == 0 and model.bias == ModelConfig().prior_bias


@pytest.mark.parametrize("rank, direction", [(2, 1), (0, -1)])
def test_single_vote_moves_translation_trait(rank, direction):
    model, _ = fit_model([J("t", "j", rank)])
    shift = model.translation_mean("t") - ModelConfig().prior_v.mean
    assert shift * direction > 0
    oracle = single_pair_posterior([rank])
    assert (oracle.mean["v"] - 0.0) * direction > 0


@pytest.mark.parametrize("ranks", [[2], [1], [0, 2]])
def test_small_graphs_match_grid_oracle(ranks):
    model, _ = fit_model([J("t", "j", r) for r in ranks])
    j, t = model.judges["j"], model.translations["t"]
    got = {"u": j.traits[0], "v": t.traits[0], "bias": model.bias, "b0": j.thresholds[0], "b1": j.thresholds[1]}
    want = single_pair_posterior(ranks)
    for name, g in got.items():
        assert g.mean == pytest.approx(want.mean[name], abs=0.05), name
        assert g.var == pytest.approx(want.var[name], rel=0.2), name


def _mixed_votes(seed=0):
    rng = random.Random(seed)
    return [J(f"t{t}", f"j{j}", (t + rng.choice([0, 0, 1])) % 3) for t in range(6) for j in range(4)
            if rng.random() < 0.8]


def test_shuffle_order_stability():
    data = _mixed_votes()
    cfg = ModelConfig(convergence_tol=1e-5, max_sweeps=400)
    a, _ = fit_model(data, cfg)
    shuffled = list(data)
    random.Random(1).shuffle(shuffled)
    b, _ = fit_model(shuffled, cfg)
    for tid in a.translations:
        assert a.translation_mean(tid) == pytest.approx(b.translation_mean(tid), abs=10 * 1e-4)


def test_unjudged_translation_is_symmetric():
    model = TraitModel(ModelConfig())
    model.register_translation("t")
    d = posterior_rank_distribution(model, "t")
    assert d[0] == pytest.approx(d[2], abs=1e-12)
    assert confidence_score(model, "t") == max(d.probs)


def test_confidence_grows_with_agreeing_votes():
    tol = ModelConfig().convergence_tol
    for n in [*range(1, 10), 20, 50, 99]:
        a = confidence_score(fit_model(votes([2] * n))[0], "t")
        b = confidence_score(fit_model(votes([2] * (n + 1)))[0], "t")
        assert b >= a - tol, n


def test_unknown_ids_are_data_errors():
    model, _ = fit_model([J("t", "j", 1)])
    with pytest.raises(DataError):
        posterior_rank_distribution(model, "nope")


# --- flagging ------------------------------------------------------------------------

def test_lone_dissenter_is_flagged():
    data = votes([2] * 99 + [0])
    model, _ = fit_model(data)
    assert flag_inconsistent_judgments(model, data) == [data[-1]]
    assert held_out_rank_distribution(model, data[-1])[0] < 0.05


def test_unanimous_votes_not_flagged():
    data = votes([1] * 8)
    model, _ = fit_model(data)
    assert flag_inconsistent_judgments(model, data) == []


def test_two_vote_translations_never_flagged():
    data = votes([2, 0], "a") + votes([0, 2], "b")
    model, _ = fit_model(data)
    assert flag_inconsistent_judgments(model, data, epsilon=0.999) == []


# --- persistence and configuration --------------------------------------------------

def test_model_round_trip(tmp_path):
    data = _mixed_votes(3)
    model, _ = fit_model(data, ModelConfig(product_scheme="matchbox", damping=0.2))
    save_model(model, tmp_path / "m")
    again = load_model(tmp_path / "m")
    assert format_model(again) == format_model(model)
    for tid in model.translations:
        assert posterior_rank_distribution(again, tid) == posterior_rank_distribution(model, tid)


@pytest.mark.parametrize("text", ["", "#qe-trait-model\tv9", "#qe-trait-model\tv1\nconfig\tK\tx"])
def test_bad_model_files(text):
    with pytest.raises(DataError):
        parse_model(text.splitlines(), "m")


@pytest.mark.parametrize("kwargs", [{"K": 0}, {"beta": 0.0}, {"L": 4}, {"threshold_prior_means": (0.5, -0.5)},
                                    {"damping": 1.0}, {"product_scheme": "vmp"},
                                    {"prior_u": Gaussian1D.uniform()}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ModelConfig(**kwargs)
