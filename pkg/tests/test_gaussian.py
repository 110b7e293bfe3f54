import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridqe.errors import ContradictoryEvidence
from hybridqe.infer.gaussian import (
    Gaussian1D,
    gaussian_divide,
    gaussian_multiply,
    product_factor_messages,
    product_forward,
    truncated_gaussian_moments,
)
from oracles import truncated_moments_quad

N = Gaussian1D.from_mean_var
means = st.floats(-20, 20)
variances = st.floats(1e-3, 50)


def test_multiply_examples():
    g = gaussian_multiply(N(0, 1), N(0, 1))
    assert (g.mean, g.var) == (0.0, 0.5)
    g = N(1, 1) * N(3, 1)
    assert g.mean == pytest.approx(2.0) and g.var == pytest.approx(0.5)


@given(means, variances, means, variances)
def test_multiply_divide_round_trip(m1, v1, m2, v2):
    a, b = N(m1, v1), N(m2, v2)
    back = gaussian_divide(gaussian_multiply(a, b), b)
    assert back.mean == pytest.approx(a.mean, rel=1e-9, abs=1e-9)
    assert back.var == pytest.approx(a.var, rel=1e-9)


def test_improper_views_raise():
    with pytest.raises(ValueError):
        Gaussian1D.uniform().mean
    with pytest.raises(ValueError):
        N(0, 0)


def test_truncation_examples():
    m, v = truncated_gaussian_moments(N(0, 1), 0.0, "greater")
    assert m == pytest.approx(0.79788, abs=1e-5) and v == pytest.approx(0.36338, abs=1e-5)
    far = truncated_gaussian_moments(N(5, 1), 0.0, "greater")
    assert far == pytest.approx((5.0, 1.0), abs=1e-4)
    m2, v2 = truncated_gaussian_moments(N(0, 1), 0.0, "less")
    assert m2 == pytest.approx(-0.7978845608, abs=1e-9) and v2 == pytest.approx(v, abs=1e-4)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(0.05, 10), st.floats(-5, 5), st.sampled_from(["greater", "less"]))
def test_truncation_matches_quadrature(mean, var, bound, side):
    sd = math.sqrt(var)
    psi = (mean - bound) / sd * (1 if side == "greater" else -1)
    if psi < -7:
        return
    m, v = truncated_gaussian_moments(N(mean, var), bound, side)
    qm, qv = truncated_moments_quad(mean, var, bound, side)
    assert m == pytest.approx(qm, abs=1e-6 * max(1.0, sd))
    assert v == pytest.approx(qv, abs=1e-6 * max(1.0, var))


@given(st.floats(-5, 5), st.floats(0.05, 10), st.floats(-5, 5))
def test_truncation_shrinks_variance_and_moves_mean(mean, var, bound):
    if (mean - bound) / math.sqrt(var) < -7:
        return
    m, v = truncated_gaussian_moments(N(mean, var), bound, "greater")
    assert m > bound - 1e-9 and m >= mean - 1e-9
    assert 0.0 < v <= var * (1 + 1e-12)


def test_vanishing_truncation_mass_is_contradictory():
    with pytest.raises(ContradictoryEvidence):
        truncated_gaussian_moments(N(0, 1), 60.0, "greater")


def test_product_examples():
    z = product_forward(N(1, 0.25), N(2, 0.25))
    assert z.mean == pytest.approx(2.0) and z.var == pytest.approx(1.3125)
    rng = np.random.default_rng(0)
    s = rng.normal(1, 0.5, 2_000_000) * rng.normal(2, 0.5, 2_000_000)
    assert s.mean() == pytest.approx(2.0, abs=0.005) and s.var() == pytest.approx(1.3125, rel=0.01)


def test_product_identity_pass_through():
    z = product_forward(N(0.7, 2.0), N(1.0, 1e-14))
    assert z.mean == pytest.approx(0.7) and z.var == pytest.approx(2.0)


@given(st.floats(0.1, 5), st.floats(-3, 3), st.floats(0.1, 5))
def test_product_zero_mean_symmetry(vs, mt, vt):
    assert product_forward(N(0, vs), N(mt, vt)).mean == 0.0
    assert product_forward(N(mt, vt), N(0, vs)).mean == 0.0


@pytest.mark.parametrize("scheme", ["ep", "matchbox"])
def test_product_messages_shapes(scheme):
    to_z, to_s, to_t = product_factor_messages(N(1, 0.5), N(0.5, 1.0), N(2.0, 1.0), scheme)
    assert to_z.proper
    assert to_s.proper or to_s.precision == 0.0
    with pytest.raises(ValueError):
        product_factor_messages(N(1, 1), N(1, 1), N(1, 1), "bogus")
