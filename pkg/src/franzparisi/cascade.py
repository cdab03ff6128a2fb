"""Hierarchical Gaussian averages via the cascade log-moment recursion.

Averages of tree-indexed Gaussian functionals against hierarchical random
weights reduce to a finite recursion: evaluate the integrand on sums of
independent Gaussian increments, then fold level p through

    X_p = (1/zeta_p) log E_{z_{p+1}} exp(zeta_p X_{p+1}),

from the deepest level down to the root.  Expectations are tensorized
Gauss-Hermite sums, so each fold is a log-sum-exp contraction along one axis
of the increment lattice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import QuadratureRule, gauss_hermite_rule
from .config import R_MAX_HARD_CAP
from .measures import DiscretePrior

__all__ = [
    "RSBSequence",
    "RSBPoint",
    "cascade_x0",
    "cascade_expectation",
    "y_term",
    "rpc_average",
]

_MAX_LATTICE = 2 * 10**7  # innermost evaluations across all levels


@dataclass(frozen=True)
class RSBSequence:
    """Order parameters of an r-level symmetry-breaking ansatz.

    zeta: r weight exponents, strictly increasing inside (0, 1).
    q: r+1 overlap values, nondecreasing from 0 to s_cap.
    """

    r: int
    zeta: np.ndarray
    q: np.ndarray
    s_cap: float

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("need at least one level")
        if self.zeta.shape != (self.r,) or self.q.shape != (self.r + 1,):
            raise ValueError("zeta must have r entries and q must have r+1 entries")
        z = self.zeta
        if not (np.all(z > 0) and np.all(z < 1) and np.all(np.diff(z) > 0)):
            raise ValueError("zeta must satisfy 0 < zeta_0 < ... < zeta_{r-1} < 1")
        if abs(self.q[0]) > 1e-14:
            raise ValueError("q[0] must be 0")
        if np.any(np.diff(self.q) < -1e-12):
            raise ValueError("q must be nondecreasing")
        if abs(self.q[-1] - self.s_cap) > 1e-10:
            raise ValueError("q[r] must equal s_cap")


@dataclass(frozen=True)
class RSBPoint:
    """A full variational point: tilt parameters plus the RSB sequences."""

    lam: float
    mu: float
    rsb: RSBSequence

    def __post_init__(self):
        if not (math.isfinite(self.lam) and math.isfinite(self.mu)):
            raise ValueError("lam and mu must be finite")


def _check_rule(hermite: QuadratureRule):
    if hermite.kind != "hermite_gaussian":
        raise ValueError("cascade recursion needs a hermite_gaussian rule")
    if len(hermite.nodes) < 8:
        raise ValueError("need at least 8 Hermite nodes")


def _fold(f_vec, increments, zeta, hermite: QuadratureRule) -> float:
    """Evaluate f on the increment lattice and fold back to the root.

    f_vec maps an array of field values (sums of increments) to the deepest
    level values X_r; increments[k] is the variance added by level k+1.
    """
    nodes = hermite.nodes
    logw = np.log(hermite.weights)
    levels = []
    size = 1
    s = np.zeros(1)
    for v in increments:
        if v > 1e-15:
            zk, lwk = nodes * math.sqrt(v), logw
        else:
            zk, lwk = np.zeros(1), np.zeros(1)  # degenerate level: single node
        size *= len(zk)
        if size > _MAX_LATTICE:
            raise ValueError(
                f"increment lattice exceeds {_MAX_LATTICE} points; "
                "reduce hermite nodes or the number of levels"
            )
        levels.append((zk, lwk))
        s = (s[:, None] + zk[None, :]).ravel()
    x = np.asarray(f_vec(s), dtype=float)
    if x.shape != s.shape:
        raise ValueError("integrand must be vectorized over the field values")
    for k in reversed(range(len(increments))):
        zk, lwk = levels[k]
        zp = zeta[k]
        if zp <= 0:
            raise ValueError("zeta entries must be positive")
        x = logsumexp(lwk[None, :] + zp * x.reshape(-1, len(zk)), axis=1) / zp
    return float(x[0])


def cascade_x0(
    point: RSBPoint,
    beta: float,
    x0: float,
    prior_x: DiscretePrior,
    hermite: QuadratureRule,
) -> float:
    """Root value X_0(lam, mu, Q, zeta)[x0] of the cascade recursion.

    The deepest level is the tilted atom sum
    X_r = log sum_x w exp(beta (z_1+...+z_r) x + lam x^2 + mu x x0)
    with independent z_j of variance Q_j - Q_{j-1}.
    """
    _check_rule(hermite)
    rsb = point.rsb
    if rsb.r > R_MAX_HARD_CAP:
        raise ValueError(f"r exceeds the hard cap {R_MAX_HARD_CAP}")
    x = prior_x.positions
    base = np.log(prior_x.weights) + point.lam * x**2 + point.mu * x * x0

    def deepest(s):
        return logsumexp(base[None, :] + beta * s[:, None] * x[None, :], axis=1)

    return _fold(deepest, np.diff(rsb.q), rsb.zeta, hermite)


def cascade_expectation(
    point: RSBPoint,
    beta: float,
    prior_x: DiscretePrior,
    prior_0: DiscretePrior,
    hermite: QuadratureRule,
) -> float:
    """E_0[X_0]: the root value averaged over the signal prior atoms."""
    vals = [cascade_x0(point, beta, float(x0), prior_x, hermite) for x0 in prior_0.positions]
    return float(prior_0.weights @ np.asarray(vals))


def y_term(rsb: RSBSequence, beta: float) -> float:
    """Closed form of the quadratic cascade average:
    (beta^2/4) sum_k zeta_k (Q_{k+1}^2 - Q_k^2)."""
    q2 = rsb.q**2
    return float(beta**2 / 4.0 * np.sum(rsb.zeta * np.diff(q2)))


def rpc_average(f, cov, rsb: RSBSequence, hermite: QuadratureRule) -> float:
    """Generic recursion for E log sum_a v_a exp(f(g(a))) where the Gaussian
    field g has covariance cov(Q) at tree overlap Q.

    f must be vectorized; cov must be increasing and nonnegative on the
    q-sequence.  Overflow in the folds surfaces as a ValueError suggesting
    smaller zeta or a narrower f.
    """
    _check_rule(hermite)
    cq = np.asarray([cov(q) for q in rsb.q], dtype=float)
    if np.any(cq < 0) or np.any(np.diff(cq) < -1e-12):
        raise ValueError("cov must be nonnegative and increasing on the q sequence")
    try:
        return _fold(lambda s: f(s), np.diff(cq), rsb.zeta, hermite)
    except FloatingPointError as exc:  # pragma: no cover - depends on numpy err state
        raise ValueError("overflow in cascade fold; reduce zeta or narrow f") from exc
