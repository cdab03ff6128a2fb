"""Optimizer configuration shared by the entropy and variational solvers."""
from __future__ import annotations

from dataclasses import dataclass

R_MAX_HARD_CAP = 4


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for the variational searches.

    r_max counts replica-symmetry-breaking levels (scanned exhaustively),
    restarts is the number of seeded multistart descents, max_iter bounds a
    single descent, tol is the convergence tolerance on objective values,
    hermite_nodes sets the Gauss-Hermite resolution per cascade level and
    divergence_bound is the iterate norm beyond which a still-improving
    concave ascent is declared divergent (rate value +inf).
    """

    r_max: int = 1
    restarts: int = 8
    max_iter: int = 4000
    tol: float = 1e-9
    seed: int = 0
    hermite_nodes: int = 32
    divergence_bound: float = 1e4

    def __post_init__(self):
        if not 1 <= self.r_max <= R_MAX_HARD_CAP:
            raise ValueError(f"r_max must be in [1, {R_MAX_HARD_CAP}], got {self.r_max}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.hermite_nodes < 8:
            raise ValueError("hermite_nodes must be >= 8")
        if self.divergence_bound <= 0:
            raise ValueError("divergence_bound must be positive")
