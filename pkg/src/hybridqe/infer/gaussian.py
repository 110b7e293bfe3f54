"""One-dimensional Gaussians in natural parameters, plus the EP primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from hybridqe.errors import ContradictoryEvidence

MIN_TRUNCATION_MASS = 1e-12
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(32)
_GH_LOGW = np.log(_GH_W)


@dataclass(frozen=True, slots=True)
class Gaussian1D:
    """N(mean, var) stored as (precision * mean, precision).

    Precision 0 is the improper uniform message. Negative precision can show up
    in transient EP messages; only proper Gaussians have a mean/variance view.
    """

    precision_mean: float = 0.0
    precision: float = 0.0

    @classmethod
    def from_mean_var(cls, mean: float, var: float) -> "Gaussian1D":
        if not var > 0.0:
            raise ValueError(f"variance must be positive, got {var}")
        return cls(mean / var, 1.0 / var)

    @classmethod
    def uniform(cls) -> "Gaussian1D":
        return cls(0.0, 0.0)

    @property
    def proper(self) -> bool:
        return self.precision > 0.0

    @property
    def mean(self) -> float:
        if not self.precision > 0.0:
            raise ValueError(f"mean of an improper Gaussian (precision {self.precision})")
        return self.precision_mean / self.precision

    @property
    def var(self) -> float:
        if not self.precision > 0.0:
            raise ValueError(f"variance of an improper Gaussian (precision {self.precision})")
        return 1.0 / self.precision

    @property
    def second_moment(self) -> float:
        m = self.mean
        return m * m + self.var

    def __mul__(self, other: "Gaussian1D") -> "Gaussian1D":
        return Gaussian1D(self.precision_mean + other.precision_mean, self.precision + other.precision)

    def __truediv__(self, other: "Gaussian1D") -> "Gaussian1D":
        return Gaussian1D(self.precision_mean - other.precision_mean, self.precision - other.precision)

    def damped(self, old: "Gaussian1D", damping: float) -> "Gaussian1D":
        if damping == 0.0:
            return self
        keep = 1.0 - damping
        return Gaussian1D(keep * self.precision_mean + damping * old.precision_mean,
                          keep * self.precision + damping * old.precision)

    def __repr__(self) -> str:
        if self.precision > 0.0:
            return f"N(mean={self.mean:.6g}, var={self.var:.6g})"
        return f"Gaussian1D(precision_mean={self.precision_mean!r}, precision={self.precision!r})"


def gaussian_multiply(a: Gaussian1D, b: Gaussian1D) -> Gaussian1D:
    return a * b


def gaussian_divide(a: Gaussian1D, b: Gaussian1D) -> Gaussian1D:
    return a / b


def add_noise(g: Gaussian1D, noise_var: float) -> Gaussian1D:
    """Message through x' = x + N(0, noise_var); uniform stays uniform."""
    if not g.precision > 0.0:
        return Gaussian1D.uniform()
    return Gaussian1D.from_mean_var(g.mean, g.var + noise_var)


def scale(g: Gaussian1D, c: float) -> Gaussian1D:
    """Distribution of c * x for x ~ g (c != 0)."""
    return Gaussian1D(g.precision_mean / c, g.precision / (c * c))


def inverse_mills(psi: float) -> float:
    """phi(psi) / Phi(psi), stable for very negative psi."""
    return math.exp(-0.5 * psi * psi - _LOG_SQRT_2PI - float(log_ndtr(psi)))


def truncated_gaussian_moments(cavity: Gaussian1D, bound: float, side: str = "greater",
                               judgment=None) -> tuple[float, float]:
    """Mean and variance of ``cavity`` restricted to x > bound (or x < bound)."""
    if side not in ("greater", "less"):
        raise ValueError(f"side must be 'greater' or 'less', got {side!r}")
    m, v = cavity.mean, cavity.var
    sd = math.sqrt(v)
    sign = 1.0 if side == "greater" else -1.0
    psi = sign * (m - bound) / sd
    if float(ndtr(psi)) < MIN_TRUNCATION_MASS:
        raise ContradictoryEvidence(
            f"contradictory evidence: truncation mass {float(ndtr(psi)):.3g} below "
            f"{MIN_TRUNCATION_MASS} for judgment {judgment}", judgment)
    lam = inverse_mills(psi)
    new_var = v * (1.0 - lam * (lam + psi))
    return m + sign * sd * lam, new_var


def product_forward(q_s: Gaussian1D, q_t: Gaussian1D) -> Gaussian1D:
    """Moment-matched Gaussian for z = s * t with independent s and t."""
    ms, mt = q_s.mean, q_t.mean
    var = q_s.second_moment * q_t.second_moment - ms * ms * mt * mt
    return Gaussian1D.from_mean_var(ms * mt, var)


def _matchbox_backward(q_t: Gaussian1D, msg_z: Gaussian1D, var_floor: float) -> Gaussian1D:
    t2 = q_t.second_moment
    if t2 == 0.0 or not msg_z.precision > 0.0:
        return Gaussian1D.uniform()
    return Gaussian1D.from_mean_var(msg_z.mean * q_t.mean / t2, (msg_z.var + var_floor) / t2)


def _tilted_nodes(q_s: Gaussian1D, q_t: Gaussian1D, msg_z: Gaussian1D):
    """Quadrature nodes and normalised weights for s under the tilted density
    q_s(s) N(m_z; s m_t, v_z + s^2 v_t), or None when no proposal exists.

    Nodes are placed around q_s times the matchbox message, which makes the
    rule exact when t is deterministic.
    """
    if not msg_z.precision > 0.0:
        return None
    guide = _matchbox_backward(q_t, msg_z, 0.0)
    proposal = q_s * guide
    if not proposal.precision > 0.0:
        return None
    pm, pv = proposal.mean, proposal.var
    s = pm + math.sqrt(pv) * _GH_X
    mz, vz = msg_z.mean, msg_z.var
    mt, vt = q_t.mean, q_t.var
    lik_var = vz + s * s * vt
    log_f = -0.5 * (mz - s * mt) ** 2 / lik_var - 0.5 * np.log(lik_var)
    log_prior = -0.5 * q_s.precision * (s - q_s.mean) ** 2
    log_prop = -0.5 * (s - pm) ** 2 / pv
    logw = _GH_LOGW + log_f + log_prior - log_prop
    w = np.exp(logw - logw.max())
    return s, w / w.sum()


def _ep_forward(q_s: Gaussian1D, q_t: Gaussian1D, msg_z: Gaussian1D) -> Gaussian1D:
    """EP message to z from z = s * t; falls back to moment matching without feedback."""
    nodes = _tilted_nodes(q_s, q_t, msg_z)
    if nodes is None:
        return product_forward(q_s, q_t)
    s, w = nodes
    mz, vz = msg_z.mean, msg_z.var
    a = s * s * q_t.var
    post_var = a * vz / (a + vz)
    post_mean = (s * q_t.mean * vz + mz * a) / (a + vz)
    mean = float(w @ post_mean)
    var = float(w @ (post_var + (post_mean - mean) ** 2))
    if not var > 0.0:
        return product_forward(q_s, q_t)
    out = Gaussian1D.from_mean_var(mean, var) / msg_z
    return out if out.precision > 0.0 else product_forward(q_s, q_t)


def _ep_backward(q_s: Gaussian1D, q_t: Gaussian1D, msg_z: Gaussian1D) -> Gaussian1D:
    """EP message to s from z = s * t, integrating t out exactly."""
    nodes = _tilted_nodes(q_s, q_t, msg_z)
    if nodes is None:
        return Gaussian1D.uniform()
    s, w = nodes
    guide = _matchbox_backward(q_t, msg_z, 0.0)
    mean = float(w @ s)
    var = float(w @ (s - mean) ** 2)
    if not var > 0.0:
        return guide
    return Gaussian1D.from_mean_var(mean, var) / q_s


def product_factor_messages(q_s: Gaussian1D, q_t: Gaussian1D, msg_to_z: Gaussian1D,
                            scheme: str = "ep", var_floor: float = 0.0):
    """Messages (to z, to s, to t) for the factor z = s * t.

    ``q_s``/``q_t`` are the incoming (cavity) messages of s and t, ``msg_to_z``
    is the message arriving at z from the rest of the graph.
    """
    if scheme == "ep":
        return (_ep_forward(q_s, q_t, msg_to_z), _ep_backward(q_s, q_t, msg_to_z),
                _ep_backward(q_t, q_s, msg_to_z))
    if scheme == "matchbox":
        return product_forward(q_s, q_t), _matchbox_backward(q_t, msg_to_z, var_floor), _matchbox_backward(q_s, msg_to_z, var_floor)
    raise ValueError(f"unknown product scheme {scheme!r}")
