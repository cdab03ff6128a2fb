import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from franzparisi.config import OptimizerConfig
from franzparisi.measures import (
    DiscretePrior,
    EntropyNonConvergence,
    OverlapPoint,
    empirical_distance,
    entropy_rate,
    in_constraint_set,
    log_laplace,
    log_laplace_grad,
    make_discrete_prior,
    point_mass,
    prior_from_json,
    prior_to_json,
    rademacher,
)

RX = rademacher()
D1 = point_mass(1.0)


def closed_form_rate(m: float) -> float:
    # Legendre transform of log cosh: ((1+M)/2) log(1+M) + ((1-M)/2) log(1-M)
    out = 0.0
    if m > -1:
        out += 0.5 * (1 + m) * math.log(1 + m)
    if m < 1:
        out += 0.5 * (1 - m) * math.log(1 - m)
    return out


class TestMakeDiscretePrior:
    def test_rademacher(self):
        p = make_discrete_prior([(1.0, 0.5), (-1.0, 0.5)])
        assert p.support_bound == 1.0
        assert p.weights.sum() == pytest.approx(1.0, abs=1e-15)

    def test_single_atom_renormalized(self):
        p = make_discrete_prior([(1.0, 2.0)])
        assert p.weights[0] == 1.0
        assert p.support_bound == 1.0

    def test_boolean_spin_prior(self):
        p = make_discrete_prior([(0.0, 0.3), (1.0, 0.7)])
        assert p.positions.tolist() == [0.0, 1.0]
        assert p.weights.tolist() == pytest.approx([0.3, 0.7])
        assert p.support_bound == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            make_discrete_prior([])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            make_discrete_prior([(math.nan, 1.0)])
        with pytest.raises(ValueError):
            make_discrete_prior([(1.0, math.inf)])

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ValueError):
            make_discrete_prior([(1.0, 0.0)])

    def test_duplicate_positions_merge(self):
        p = make_discrete_prior([(1.0, 0.25), (1.0, 0.25), (-1.0, 0.5)])
        assert len(p.positions) == 2
        assert p.weights.tolist() == pytest.approx([0.5, 0.5])

    def test_json_round_trip(self):
        p = make_discrete_prior([(0.2, 0.3), (-0.7, 0.7)])
        q = prior_from_json(prior_to_json(p))
        assert np.array_equal(p.positions, q.positions)
        assert np.allclose(p.weights, q.weights)


class TestConstraintSet:
    def test_rademacher_interior(self):
        assert in_constraint_set(OverlapPoint(1.0, 0.5), RX, D1)

    def test_magnetization_exceeds_cauchy_schwarz(self):
        assert not in_constraint_set(OverlapPoint(1.0, 1.5), RX, D1)

    def test_self_overlap_exceeds_support(self):
        assert not in_constraint_set(OverlapPoint(2.0, 0.0), RX, D1)
        assert not in_constraint_set(OverlapPoint(2.0, 0.0), RX, RX)

    def test_rademacher_pins_self_overlap(self):
        assert not in_constraint_set(OverlapPoint(0.5, 0.0), RX, D1)

    def test_boundary_corners(self):
        assert in_constraint_set(OverlapPoint(1.0, 1.0), RX, D1)
        assert in_constraint_set(OverlapPoint(1.0, -1.0), RX, D1)

    def test_boolean_prior_diagonal(self):
        pb = make_discrete_prior([(0.0, 0.5), (1.0, 0.5)])
        # boolean spins against a unit signal: S = M along the diagonal
        assert in_constraint_set(OverlapPoint(0.4, 0.4), pb, D1)
        assert not in_constraint_set(OverlapPoint(0.4, 0.8), pb, D1)

    def test_monotone_in_tol(self):
        edge = OverlapPoint(1.0, 1.0 + 1e-6)
        assert not in_constraint_set(edge, RX, D1, tol=1e-9)
        assert in_constraint_set(edge, RX, D1, tol=1e-3)

    def test_grid_step_validation(self):
        with pytest.raises(ValueError):
            in_constraint_set(OverlapPoint(1.0, 0.0), RX, D1, grid_step=0.0)


class TestLogLaplace:
    def test_zero_point(self):
        assert log_laplace(RX, D1, 0.0, 0.0) == pytest.approx(0.0, abs=1e-14)

    def test_rademacher_closed_form(self):
        for lam, mu in [(0.3, 0.7), (-1.2, 2.0), (0.0, -3.0)]:
            assert log_laplace(RX, D1, lam, mu) == pytest.approx(
                lam + math.log(math.cosh(mu)), abs=1e-12
            )

    def test_point_mass_closed_form(self):
        pc = point_mass(0.7)
        p0 = make_discrete_prior([(0.5, 0.4), (-0.2, 0.6)])
        ex0 = p0.mean
        for lam, mu in [(1.0, -0.5), (-2.0, 3.0)]:
            assert log_laplace(pc, p0, lam, mu) == pytest.approx(
                lam * 0.49 + mu * 0.7 * ex0, abs=1e-12
            )

    def test_large_arguments_guarded(self):
        v = log_laplace(RX, D1, 500.0, 800.0)
        assert math.isfinite(v)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            log_laplace(RX, D1, math.inf, 0.0)

    @given(
        lam=st.floats(-3, 3),
        mu=st.floats(-3, 3),
    )
    @settings(max_examples=40, deadline=None)
    def test_gradient_matches_finite_differences(self, lam, mu):
        p0 = make_discrete_prior([(1.0, 0.6), (-0.5, 0.4)])
        px = make_discrete_prior([(1.0, 0.3), (-1.0, 0.5), (0.2, 0.2)])
        h = 1e-5
        gl, gm = log_laplace_grad(px, p0, lam, mu)
        fd_l = (log_laplace(px, p0, lam + h, mu) - log_laplace(px, p0, lam - h, mu)) / (2 * h)
        fd_m = (log_laplace(px, p0, lam, mu + h) - log_laplace(px, p0, lam, mu - h)) / (2 * h)
        scale = max(1.0, abs(fd_l), abs(fd_m))
        assert abs(gl - fd_l) / scale < 1e-6
        assert abs(gm - fd_m) / scale < 1e-6


class TestEntropyRate:
    def test_zero_at_mean_point(self):
        px = make_discrete_prior([(1.0, 0.25), (-1.0, 0.25), (0.5, 0.5)])
        p0 = make_discrete_prior([(1.0, 0.7), (-1.0, 0.3)])
        p = OverlapPoint(px.second_moment, px.mean * p0.mean)
        assert entropy_rate(px, p0, p) == pytest.approx(0.0, abs=1e-8)

    def test_rademacher_closed_form(self):
        for m in (0.0, 0.3, -0.3, 0.9, -0.9):
            got = entropy_rate(RX, D1, OverlapPoint(1.0, m))
            assert got == pytest.approx(closed_form_rate(m), abs=1e-8)

    def test_rademacher_closed_form_vs_grid_oracle(self):
        # brute-force sup over mu of mu*M - log cosh(mu)
        m = 0.6
        mus = np.linspace(-30, 30, 400001)
        oracle = float((mus * m - np.logaddexp(mus, -mus) + math.log(2)).max())
        assert entropy_rate(RX, D1, OverlapPoint(1.0, m)) == pytest.approx(oracle, abs=1e-7)

    def test_boundary_attained_at_infinity(self):
        assert entropy_rate(RX, D1, OverlapPoint(1.0, 1.0)) == pytest.approx(math.log(2), abs=1e-6)

    def test_divergence_sentinel_off_support(self):
        assert entropy_rate(RX, D1, OverlapPoint(0.5, 0.0)) == math.inf
        assert entropy_rate(RX, D1, OverlapPoint(1.0, 1.2)) == math.inf

    def test_divergent_points_outside_interior(self):
        # sentinel values only occur off the interior of the feasible set;
        # interior means a small ball around the point stays feasible
        def in_interior(s, m, delta=1e-4):
            probes = [(s + a, m + b) for a in (-delta, 0, delta) for b in (-delta, 0, delta)]
            return all(in_constraint_set(OverlapPoint(max(ps, 0.0), pm), RX, D1) for ps, pm in probes)

        for s in (0.25, 0.5, 1.0):
            for m in (-1.2, -0.4, 0.4, 1.2):
                if entropy_rate(RX, D1, OverlapPoint(s, m)) == math.inf:
                    assert not in_interior(s, m)

    def test_nonconvergence_error_distinct_from_sentinel(self):
        with pytest.raises(EntropyNonConvergence):
            entropy_rate(RX, D1, OverlapPoint(1.0, 0.999), OptimizerConfig(max_iter=2))

    def test_nonnegative_everywhere(self):
        px = make_discrete_prior([(0.8, 0.5), (-0.3, 0.5)])
        p0 = make_discrete_prior([(0.9, 0.5), (0.1, 0.5)])
        for s in np.linspace(0.09, 0.64, 5):
            for m in np.linspace(-0.3, 0.7, 5):
                v = entropy_rate(px, p0, OverlapPoint(float(s), float(m)))
                assert v >= 0

    def test_convex_along_segments(self):
        px = make_discrete_prior([(1.0, 0.4), (-1.0, 0.4), (0.0, 0.2)])
        p0 = D1
        rng = np.random.default_rng(8)
        for _ in range(10):
            a = OverlapPoint(float(rng.uniform(0.3, 0.9)), float(rng.uniform(-0.2, 0.2)))
            b = OverlapPoint(float(rng.uniform(0.3, 0.9)), float(rng.uniform(-0.2, 0.2)))
            mid = OverlapPoint(0.5 * (a.s + b.s), 0.5 * (a.m + b.m))
            va, vb, vm = (entropy_rate(px, p0, q) for q in (a, b, mid))
            if math.isfinite(va) and math.isfinite(vb):
                assert vm <= 0.5 * (va + vb) + 1e-6


class TestEmpiricalDistance:
    def test_exact_match_is_zero(self):
        assert empirical_distance([1.0, -1.0], RX) == pytest.approx(0.0, abs=1e-15)
        assert empirical_distance([1, 1, -1, -1], RX) == pytest.approx(0.0, abs=1e-15)

    def test_transport_one_unit(self):
        assert empirical_distance([1.0, 1.0], point_mass(0.0)) == pytest.approx(1.0)

    def test_half_mass_move(self):
        assert empirical_distance([1.0, 0.0], point_mass(1.0)) == pytest.approx(0.5)

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            empirical_distance([], RX)

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=12))
    @settings(max_examples=30, deadline=None)
    def test_triangle_vs_self(self, xs):
        p = make_discrete_prior([(x, 1.0) for x in set(xs)] or [(0.0, 1.0)])
        assert empirical_distance(list(p.positions), p) >= 0
