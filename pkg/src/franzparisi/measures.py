"""Atomic priors, the feasible overlap set, and the entropy rate function.

The estimator prior P_X and the signal prior P_0 are finite weighted sums of
point masses on a compact interval.  Everything downstream (log-Laplace
transforms, cascade integrands, exact enumeration) then reduces to finite
sums, so the only numerical error left is quadrature over Gaussian fields.

The central objects here:

  * ``in_constraint_set`` -- membership test for the closed set of overlap
    pairs (S, M) reachable by configurations, via the family of half-plane
    inequalities  E_{x0}[min_x (rho x^2 + t x x0)] <= rho S + t M
    <= E_{x0}[max_x (rho x^2 + t x x0)]  over (rho, t) in [-1,1]^2.
  * ``log_laplace`` -- Lambda(lam, mu) = E_0 log E_X exp(lam x^2 + mu x x0).
  * ``entropy_rate`` -- the Legendre transform
    I(S, M) = sup_{lam,mu} [lam S + mu M - Lambda(lam, mu)],
    the large-deviations cost of the overlaps under the product prior.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import OptimizerConfig

__all__ = [
    "DiscretePrior",
    "OverlapPoint",
    "EntropyNonConvergence",
    "make_discrete_prior",
    "prior_from_json",
    "prior_to_json",
    "rademacher",
    "point_mass",
    "in_constraint_set",
    "log_laplace",
    "log_laplace_grad",
    "entropy_rate",
    "empirical_distance",
]


class EntropyNonConvergence(RuntimeError):
    """Concave ascent ran out of iterations at an interior point.

    Distinct from the +inf divergence sentinel: this is a numerical failure,
    not a statement about the rate function.
    """

    def __init__(self, best_value: float, iterations: int):
        super().__init__(
            f"entropy_rate did not converge within {iterations} iterations "
            f"(best objective {best_value!r})"
        )
        self.best_value = best_value


@dataclass(frozen=True)
class DiscretePrior:
    """Compactly supported probability measure given by weighted atoms."""

    positions: np.ndarray
    weights: np.ndarray
    support_bound: float

    def __post_init__(self):
        if self.positions.ndim != 1 or self.positions.shape != self.weights.shape:
            raise ValueError("positions and weights must be 1-d arrays of equal length")
        if self.positions.size == 0:
            raise ValueError("prior needs at least one atom")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.weights))):
            raise ValueError("prior atoms must be finite")
        if np.any(self.weights <= 0):
            raise ValueError("atom weights must be strictly positive")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("atom weights must sum to 1")
        if np.any(np.abs(self.positions) > self.support_bound + 1e-12):
            raise ValueError("atom outside declared support bound")

    @property
    def mean(self) -> float:
        return float(self.positions @ self.weights)

    @property
    def second_moment(self) -> float:
        return float((self.positions**2) @ self.weights)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.choice(self.positions, size=size, p=self.weights)


@dataclass(frozen=True)
class OverlapPoint:
    """Target pair (s, m) for the self-overlap and the signal overlap."""

    s: float
    m: float

    def __post_init__(self):
        if not (math.isfinite(self.s) and math.isfinite(self.m)):
            raise ValueError("overlap point must be finite")
        if self.s < 0:
            raise ValueError("self-overlap target s must be >= 0")


def make_discrete_prior(atoms) -> DiscretePrior:
    """Build a prior from (position, weight) pairs; weights are renormalized."""
    atoms = list(atoms)
    if not atoms:
        raise ValueError("empty atom list")
    pos = np.asarray([a[0] for a in atoms], dtype=float)
    wts = np.asarray([a[1] for a in atoms], dtype=float)
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(wts))):
        raise ValueError("non-finite atom entries")
    if np.any(wts <= 0):
        raise ValueError("atom weights must be strictly positive")
    # merge duplicate positions so weights stay unambiguous
    order = np.argsort(pos, kind="stable")
    pos, wts = pos[order], wts[order]
    keep_pos, keep_wts = [pos[0]], [wts[0]]
    for p, w in zip(pos[1:], wts[1:]):
        if p == keep_pos[-1]:
            keep_wts[-1] += w
        else:
            keep_pos.append(p)
            keep_wts.append(w)
    pos = np.asarray(keep_pos)
    wts = np.asarray(keep_wts)
    wts = wts / wts.sum()
    return DiscretePrior(pos, wts, support_bound=float(np.max(np.abs(pos))))


def rademacher() -> DiscretePrior:
    return make_discrete_prior([(-1.0, 0.5), (1.0, 0.5)])


def point_mass(c: float) -> DiscretePrior:
    return make_discrete_prior([(c, 1.0)])


def prior_to_json(prior: DiscretePrior) -> str:
    return json.dumps({"atoms": [[float(p), float(w)] for p, w in zip(prior.positions, prior.weights)]})


def prior_from_json(text_or_obj) -> DiscretePrior:
    obj = json.loads(text_or_obj) if isinstance(text_or_obj, str) else text_or_obj
    if not isinstance(obj, dict) or "atoms" not in obj:
        raise ValueError('prior JSON must be {"atoms": [[position, weight], ...]}')
    return make_discrete_prior(obj["atoms"])


def in_constraint_set(
    p: OverlapPoint,
    prior_x: DiscretePrior,
    prior_0: DiscretePrior,
    grid_step: float = 0.05,
    tol: float = 1e-9,
) -> bool:
    """Test (s, m) against the half-plane family defining the feasible set.

    For every (rho, t) on a grid over [-1, 1]^2 the pair must satisfy
    E_{x0}[min_x (rho x^2 + t x x0)] - tol <= rho s + t m
    <= E_{x0}[max_x (rho x^2 + t x x0)] + tol, with min/max over the atoms of
    ``prior_x`` and the expectation over the atoms of ``prior_0``.
    """
    if not (0 < grid_step <= 1):
        raise ValueError("grid_step must lie in (0, 1]")
    if tol < 0:
        raise ValueError("tol must be >= 0")
    n = int(round(2.0 / grid_step))
    axis = np.linspace(-1.0, 1.0, n + 1)
    x = prior_x.positions  # (A,)
    x0 = prior_0.positions  # (B,)
    w0 = prior_0.weights
    # vals[rho_i, t_j, b, a] = rho x_a^2 + t x_a x0_b
    rho = axis[:, None, None, None]
    t = axis[None, :, None, None]
    vals = rho * (x**2)[None, None, None, :] + t * (x0[:, None] * x[None, :])[None, None, :, :]
    lo = (np.min(vals, axis=3) * w0[None, None, :]).sum(axis=2)
    hi = (np.max(vals, axis=3) * w0[None, None, :]).sum(axis=2)
    target = axis[:, None] * p.s + axis[None, :] * p.m
    return bool(np.all(target >= lo - tol) and np.all(target <= hi + tol))


def _tilted_stats(prior_x: DiscretePrior, prior_0: DiscretePrior, lam: float, mu: float):
    """Per-x0-atom log partition and tilted moments, log-sum-exp guarded."""
    x = prior_x.positions
    logw = np.log(prior_x.weights)
    expo = logw[None, :] + lam * (x**2)[None, :] + mu * prior_0.positions[:, None] * x[None, :]
    m = expo.max(axis=1, keepdims=True)
    z = np.exp(expo - m)
    s = z.sum(axis=1)
    logz = m[:, 0] + np.log(s)
    probs = z / s[:, None]
    return logz, probs


def log_laplace(prior_x: DiscretePrior, prior_0: DiscretePrior, lam: float, mu: float) -> float:
    """Lambda(lam, mu) = sum_{x0} w0 log sum_x w exp(lam x^2 + mu x x0)."""
    if not (math.isfinite(lam) and math.isfinite(mu)):
        raise ValueError("lam and mu must be finite")
    logz, _ = _tilted_stats(prior_x, prior_0, lam, mu)
    return float(prior_0.weights @ logz)


def log_laplace_grad(prior_x: DiscretePrior, prior_0: DiscretePrior, lam: float, mu: float):
    """(d Lambda/d lam, d Lambda/d mu): tilted moments of x^2 and x x0."""
    x = prior_x.positions
    _, probs = _tilted_stats(prior_x, prior_0, lam, mu)
    ex2 = probs @ (x**2)
    ex = probs @ x
    w0 = prior_0.weights
    return float(w0 @ ex2), float(w0 @ (prior_0.positions * ex))


def entropy_rate(
    prior_x: DiscretePrior,
    prior_0: DiscretePrior,
    p: OverlapPoint,
    opt: OptimizerConfig = OptimizerConfig(),
) -> float:
    """I(S, M): concave maximization of lam S + mu M - Lambda(lam, mu).

    Gradient ascent with a growing/backtracking step on the analytic gradient
    (S - dLambda/dlam, M - dLambda/dmu).  Returns +inf when the iterate norm
    exceeds ``opt.divergence_bound`` while the objective is still improving
    by more than 1e-10 per step (the supremum diverges: the point lies
    outside the feasible interior).  Suprema attained at infinity with finite
    value (boundary points) converge through the vanishing gradient.

    A second divergence detector uses the a-priori bound I <= -log(min atom
    weight) valid on the whole feasible set (pick one atom per signal value;
    the tilt terms cancel against any supporting half-plane), so an objective
    above that bound certifies divergence immediately.
    """
    s, m = p.s, p.m
    value_bound = -math.log(float(np.min(prior_x.weights))) + 1e-9

    def value(v):
        return v[0] * s + v[1] * m - log_laplace(prior_x, prior_0, v[0], v[1])

    def grad(v):
        gl, gm = log_laplace_grad(prior_x, prior_0, v[0], v[1])
        return np.array([s - gl, m - gm])

    v = np.zeros(2)
    fv = value(v)  # = 0 at the origin; I >= 0 always
    step = 1.0
    for _ in range(opt.max_iter):
        g = grad(v)
        gnorm = float(np.hypot(g[0], g[1]))
        if gnorm <= opt.tol:
            return max(fv, 0.0)
        # Armijo line search; the accepted step seeds the next iteration twice
        # as large so flat directions (suprema at infinity) are traversed fast.
        while True:
            trial = v + step * g
            ft = value(trial)
            if ft >= fv + 1e-4 * step * gnorm**2:
                improvement = ft - fv
                v, fv = trial, ft
                step *= 2.0
                break
            step *= 0.5
            if step < 1e-18:
                # gradient is not a strict ascent direction numerically: done
                return max(fv, 0.0)
        if fv > value_bound:
            return math.inf
        if float(np.hypot(v[0], v[1])) > opt.divergence_bound and improvement > 1e-10:
            return math.inf
        if improvement <= 1e-15:
            return max(fv, 0.0)
    raise EntropyNonConvergence(fv, opt.max_iter)


def empirical_distance(sample, prior: DiscretePrior) -> float:
    """Wasserstein-1 distance between the empirical law of ``sample`` and ``prior``.

    Exact for discrete measures: integrates |F_emp - F_prior| between the
    merged support points (equivalently the sorted-quantile coupling).
    """
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise ValueError("sample must be nonempty")
    pts = np.unique(np.concatenate([sample, prior.positions]))
    emp_cdf = np.searchsorted(np.sort(sample), pts, side="right") / sample.size
    order = np.argsort(prior.positions)
    cum = np.cumsum(prior.weights[order])
    prior_cdf = np.zeros_like(pts)
    idx = np.searchsorted(prior.positions[order], pts, side="right")
    prior_cdf[idx > 0] = cum[idx[idx > 0] - 1]
    return float(np.sum(np.abs(emp_cdf[:-1] - prior_cdf[:-1]) * np.diff(pts)))
