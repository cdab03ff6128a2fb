"""The constrained variational functional, its infimum, and rate surfaces.

For overlap targets (S, M) inside the feasible set, the functional

    E_0[X_0(lam, mu, Q, zeta)] - lam S - mu M
    - (beta^2/4) sum_k zeta_k (Q_{k+1}^2 - Q_k^2)
    + beta_snr M^2/2 + beta_s S^2/4

is minimized over the tilts (lam, mu) and r-level sequences (zeta, Q) with
Q_r = S.  The lam multiplies x^2 and is dual to S; mu multiplies x x0 and is
dual to M.  The infimum phi(S, M) is the exponential growth rate of the
constrained partition function; the rate function of the overlaps is
I(S, M) = sup phi - phi(S, M).
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .cascade import RSBPoint, RSBSequence, cascade_expectation, y_term
from .channel import BetaTriple, QuadratureRule, gauss_hermite_rule
from .config import OptimizerConfig
from .measures import DiscretePrior, OverlapPoint, in_constraint_set
from .rng import stream

__all__ = [
    "ModelSpec",
    "RateSurface",
    "PhiConvergenceError",
    "parisi_objective",
    "phi",
    "phi_rs",
    "rate_function",
    "sup_phi",
    "overlap_minimizer",
    "surface_to_csv",
    "surface_to_json",
]

ZETA_MIN = 1e-3


class PhiConvergenceError(RuntimeError):
    def __init__(self, best_value: float):
        super().__init__(f"variational descent failed to converge on all restarts (best {best_value!r})")
        self.best_value = best_value


@dataclass(frozen=True)
class ModelSpec:
    prior_x: DiscretePrior
    prior_0: DiscretePrior
    betas: BetaTriple

    @property
    def support_bound(self) -> float:
        return max(self.prior_x.support_bound, self.prior_0.support_bound)


@dataclass
class RateSurface:
    """phi evaluated on a grid, with the supremum bookkeeping.

    phi_values[i, j] corresponds to (s_grid[i], m_grid[j]); entries are -inf
    exactly at grid points outside the feasible set.  ``gap`` is the distance
    from the supremum to the best local maximum farther than one refined cell
    from the argmax (inf when there is no such competitor); ``minimizer_unique``
    reports gap > tol and is informational, not asserted.
    """

    s_grid: np.ndarray
    m_grid: np.ndarray
    phi_values: np.ndarray
    sup_phi: float
    argmax: OverlapPoint
    minimizer_unique: bool
    gap: float
    spec: ModelSpec
    cfg: OptimizerConfig
    refined: list = field(default_factory=list)


@lru_cache(maxsize=8)
def _hermite(nodes: int) -> QuadratureRule:
    return gauss_hermite_rule(nodes)


def parisi_objective(
    spec: ModelSpec,
    p: OverlapPoint,
    point: RSBPoint,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> float:
    """Value of the variational functional at one (lam, mu, zeta, Q) point."""
    if abs(point.rsb.s_cap - p.s) > 1e-10:
        raise ValueError("sequence cap must equal the self-overlap target")
    b = spec.betas
    hermite = _hermite(cfg.hermite_nodes)
    avg = cascade_expectation(point, b.beta, spec.prior_x, spec.prior_0, hermite)
    return (
        avg
        - point.lam * p.s
        - point.mu * p.m
        - y_term(point.rsb, b.beta)
        + 0.5 * b.beta_snr * p.m**2
        + 0.25 * b.beta_s * p.s**2
    )


def _theta_to_point(theta: np.ndarray, r: int, s: float) -> RSBPoint:
    """Unconstrained parameters -> feasible variational point.

    Q: squared increments rescaled to end at s. zeta: clamp into
    [ZETA_MIN, 1 - ZETA_MIN], sort, then force strict increase.
    """
    lam, mu = float(theta[0]), float(theta[1])
    inc = theta[2 : 2 + r] ** 2 + 1e-12
    q = np.concatenate([[0.0], np.cumsum(inc)])
    q *= s / q[-1] if q[-1] > 0 else 0.0
    q[-1] = s
    zeta = np.sort(np.clip(theta[2 + r : 2 + 2 * r], ZETA_MIN, 1.0 - ZETA_MIN))
    for k in range(1, r):
        if zeta[k] <= zeta[k - 1]:
            zeta[k] = zeta[k - 1] + 1e-9
    zeta = np.minimum(zeta, 1.0 - ZETA_MIN / 2)
    for k in range(1, r):
        if zeta[k] <= zeta[k - 1]:
            zeta[k] = min(zeta[k - 1] + 1e-12, 1.0 - ZETA_MIN / 4)
    return RSBPoint(lam, mu, RSBSequence(r, zeta, q, s))


def _starts(cfg: OptimizerConfig, r: int):
    """Deterministic start plus seeded random restarts (counter-based splits)."""
    dim = 2 + 2 * r
    first = np.zeros(dim)
    first[2 : 2 + r] = 1.0
    first[2 + r :] = np.linspace(0.25, 0.75, r)
    yield first
    for i in range(cfg.restarts - 1):
        rng = stream(cfg.seed, 91, r, i)
        theta = np.empty(dim)
        theta[:2] = rng.normal(scale=1.0, size=2)
        theta[2 : 2 + r] = rng.normal(scale=1.0, size=r)
        theta[2 + r :] = rng.uniform(ZETA_MIN, 1 - ZETA_MIN, size=r)
        yield theta


def phi(
    spec: ModelSpec,
    p: OverlapPoint,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> tuple[float, Optional[RSBPoint]]:
    """Approximate infimum of the variational functional at (S, M).

    Returns (-inf, None) outside the feasible set.  Levels r = 1..cfg.r_max
    are scanned exhaustively; each level runs cfg.restarts Nelder-Mead
    descents from seeded starts.  Ties within tolerance resolve to the
    smallest r and the first restart that achieved the value.
    """
    if not in_constraint_set(p, spec.prior_x, spec.prior_0):
        return -math.inf, None
    best_val = math.inf
    best_point: Optional[RSBPoint] = None
    any_success = False
    for r in range(1, cfg.r_max + 1):

        def objective(theta, _r=r):
            return parisi_objective(spec, p, _theta_to_point(theta, _r, p.s), cfg)

        for theta0 in _starts(cfg, r):
            res = minimize(
                objective,
                theta0,
                method="Nelder-Mead",
                options={
                    "maxiter": cfg.max_iter,
                    "maxfev": cfg.max_iter,
                    "xatol": 1e-7,
                    "fatol": cfg.tol,
                },
            )
            any_success = any_success or bool(res.success)
            if res.fun < best_val - 1e-12:
                best_val = float(res.fun)
                best_point = _theta_to_point(res.x, r, p.s)
    if not any_success:
        raise PhiConvergenceError(best_val)
    return best_val, best_point


def phi_rs(
    spec: ModelSpec,
    p: OverlapPoint,
    q: float,
    hermite: Optional[QuadratureRule] = None,
) -> float:
    """Replica-symmetric value at overlap q:
    -beta^2 q^2/4 + beta_snr M^2/2 + beta_s S^2/4
    + E_z log sum_x w exp(beta sqrt(q) z x)."""
    if not (0 <= q <= p.s + 1e-12):
        raise ValueError("q must lie in [0, S]")
    hermite = hermite or _hermite(64)
    b = spec.betas
    x = spec.prior_x.positions
    logw = np.log(spec.prior_x.weights)
    z = hermite.nodes[:, None]
    expo = logw[None, :] + b.beta * math.sqrt(max(q, 0.0)) * z * x[None, :]
    mx = expo.max(axis=1, keepdims=True)
    log_inner = mx[:, 0] + np.log(np.exp(expo - mx).sum(axis=1))
    ez = float(hermite.weights @ log_inner)
    return -0.25 * b.beta**2 * q**2 + 0.5 * b.beta_snr * p.m**2 + 0.25 * b.beta_s * p.s**2 + ez


def rate_function(spec: ModelSpec, surface: RateSurface, p: OverlapPoint) -> float:
    """I(S, M) = sup phi - phi(S, M); +inf outside the feasible set."""
    val, _ = phi(spec, p, surface.cfg)
    if val == -math.inf:
        return math.inf
    return surface.sup_phi - val


def _phi_value(args) -> float:
    spec, s, m, cfg = args
    return phi(spec, OverlapPoint(s, m), cfg)[0]


def sup_phi(
    spec: ModelSpec,
    cfg: OptimizerConfig,
    grid: tuple,
    threads: int = 1,
) -> RateSurface:
    """Evaluate phi on the feasible part of a grid and locate its supremum.

    One refinement pass re-evaluates a 3x3 stencil at half the grid step
    around the coarse argmax.  Grid evaluations are independent and may run
    in a process pool; assembly order is fixed, so results do not depend on
    the worker count.
    """
    s_grid = np.asarray(grid[0], dtype=float)
    m_grid = np.asarray(grid[1], dtype=float)
    if s_grid.ndim != 1 or m_grid.ndim != 1 or len(s_grid) == 0 or len(m_grid) == 0:
        raise ValueError("grids must be nonempty 1-d arrays")
    tasks = [(spec, float(s), float(m), cfg) for s in s_grid for m in m_grid]
    feasible = [
        in_constraint_set(OverlapPoint(s, m), spec.prior_x, spec.prior_0)
        for (_, s, m, _) in tasks
    ]
    todo = [t for t, ok in zip(tasks, feasible) if ok]
    if not todo:
        raise ValueError("grid does not intersect the feasible overlap set")
    if threads > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(_phi_value, todo, chunksize=1))
    else:
        vals = [_phi_value(t) for t in todo]
    values = np.full(len(tasks), -math.inf)
    values[np.where(feasible)[0]] = vals
    phi_mat = values.reshape(len(s_grid), len(m_grid))

    flat_arg = int(np.argmax(phi_mat))
    i0, j0 = divmod(flat_arg, len(m_grid))
    sup_val = float(phi_mat[i0, j0])
    best_s, best_m = float(s_grid[i0]), float(m_grid[j0])

    ds = 0.5 * (s_grid[1] - s_grid[0]) if len(s_grid) > 1 else 0.0
    dm = 0.5 * (m_grid[1] - m_grid[0]) if len(m_grid) > 1 else 0.0
    refined = []
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            if a == 0 and b == 0:
                continue
            s, m = best_s + a * ds, best_m + b * dm
            q = OverlapPoint(s, m)
            if not in_constraint_set(q, spec.prior_x, spec.prior_0):
                continue
            v = phi(spec, q, cfg)[0]
            refined.append((s, m, v))
            if v > sup_val:
                sup_val, best_s, best_m = float(v), s, m

    # gap statistic: best competitor among grid local maxima separated from
    # the argmax by more than one refined cell
    gap = math.inf
    cell_s = max(ds, 1e-12)
    cell_m = max(dm, 1e-12)
    for i in range(len(s_grid)):
        for j in range(len(m_grid)):
            v = phi_mat[i, j]
            if not math.isfinite(v):
                continue
            neigh = phi_mat[max(0, i - 1) : i + 2, max(0, j - 1) : j + 2]
            if v < neigh.max():
                continue
            far = abs(s_grid[i] - best_s) > cell_s + 1e-12 or abs(m_grid[j] - best_m) > cell_m + 1e-12
            if far:
                gap = min(gap, sup_val - float(v))
    unique = gap > max(10 * cfg.tol, 1e-9)
    return RateSurface(
        s_grid=s_grid,
        m_grid=m_grid,
        phi_values=phi_mat,
        sup_phi=sup_val,
        argmax=OverlapPoint(best_s, best_m),
        minimizer_unique=unique,
        gap=gap,
        spec=spec,
        cfg=cfg,
        refined=refined,
    )


def overlap_minimizer(surface: RateSurface) -> OverlapPoint:
    """Argmax of phi, i.e. the minimizer of the overlap rate function."""
    return surface.argmax


# ---------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return f"{v:.9g}"


def surface_to_csv(surface: RateSurface, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["S", "M", "phi", "rate"])
        for i, s in enumerate(surface.s_grid):
            for j, m in enumerate(surface.m_grid):
                v = float(surface.phi_values[i, j])
                rate = math.inf if v == -math.inf else surface.sup_phi - v
                writer.writerow([_fmt(float(s)), _fmt(float(m)), _fmt(v), _fmt(rate)])


def surface_to_json(surface: RateSurface, path) -> None:
    spec = surface.spec
    doc = {
        "spec": {
            "prior_x": [[float(p), float(w)] for p, w in zip(spec.prior_x.positions, spec.prior_x.weights)],
            "prior_0": [[float(p), float(w)] for p, w in zip(spec.prior_0.positions, spec.prior_0.weights)],
            "betas": {
                "beta": spec.betas.beta,
                "beta_snr": spec.betas.beta_snr,
                "beta_s": spec.betas.beta_s,
            },
        },
        "cfg": {
            "r_max": surface.cfg.r_max,
            "restarts": surface.cfg.restarts,
            "max_iter": surface.cfg.max_iter,
            "tol": surface.cfg.tol,
            "seed": surface.cfg.seed,
            "hermite_nodes": surface.cfg.hermite_nodes,
        },
        "s_grid": [float(v) for v in surface.s_grid],
        "m_grid": [float(v) for v in surface.m_grid],
        "phi": [[_fmt(float(v)) for v in row] for row in surface.phi_values],
        "sup_phi": _fmt(surface.sup_phi),
        "argmax": {"s": surface.argmax.s, "m": surface.argmax.m},
        "minimizer_unique": surface.minimizer_unique,
        "gap": _fmt(surface.gap),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
