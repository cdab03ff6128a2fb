import json
import math

import numpy as np
import pytest

from franzparisi.channel import BetaTriple, gaussian_channel
from franzparisi.gibbs import (
    ChainConfig,
    DisorderSample,
    EnumerationCapError,
    OverlapHistogram,
    channel_free_energy,
    default_overlap_bins,
    disorder_to_json,
    draw_disorder,
    empirical_rate,
    enumerate_gibbs,
    ground_state_energy,
    hamiltonian,
    histogram_to_json,
    metropolis_sample,
    rate_table_to_csv,
    tv_distance,
    zero_temperature_check,
)
from franzparisi.measures import OverlapPoint, make_discrete_prior, point_mass, rademacher
from franzparisi.variational import ModelSpec

RX = rademacher()
D1 = point_mass(1.0)
BINS = default_overlap_bins(RX, D1)
ZERO = BetaTriple(0.0, 0.0, 0.0)


class TestHamiltonian:
    def test_zero_couplings(self):
        d = draw_disorder(5, D1, seed=0)
        assert hamiltonian([1, -1, 1, 1, -1], d, ZERO) == 0.0

    def test_two_site_closed_form(self):
        d = draw_disorder(2, D1, seed=1)
        betas = BetaTriple(0.9, 0.5, 0.3)
        want = 0.9 * d.w[0, 1] / math.sqrt(2) + 0.5 / 2 + 0.3 / 4
        assert hamiltonian([1.0, 1.0], d, betas) == pytest.approx(want, abs=1e-14)

    def test_rademacher_self_interaction_constant(self):
        # sum_{i<j} (x_i x_j)^2 = N(N-1)/2 when every x_i^2 = 1
        d = draw_disorder(7, D1, seed=2)
        betas = BetaTriple(0.0, 0.0, 0.6)
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.choice([-1.0, 1.0], size=7)
            assert hamiltonian(x, d, betas) == pytest.approx(0.6 * 6 / 4, abs=1e-12)

    def test_dimension_mismatch(self):
        d = draw_disorder(4, D1, seed=0)
        with pytest.raises(ValueError):
            hamiltonian([1.0, 1.0], d, ZERO)


class TestEnumerateGibbs:
    def test_single_site_normalized(self):
        d = draw_disorder(1, D1, seed=0)
        log_z, hist = enumerate_gibbs(d, RX, BetaTriple(1.0, 1.0, 1.0), BINS)
        assert log_z == pytest.approx(0.0, abs=1e-14)
        assert hist.mass.sum() == pytest.approx(1.0)

    def test_two_site_log_cosh(self):
        d = draw_disorder(2, D1, seed=3)
        beta = 0.8
        log_z, _ = enumerate_gibbs(d, RX, BetaTriple(beta, 0.0, 0.0), BINS)
        assert log_z == pytest.approx(math.log(math.cosh(beta * d.w[0, 1] / math.sqrt(2))), abs=1e-13)

    def test_histogram_total_mass(self):
        d = draw_disorder(6, D1, seed=4)
        _, hist = enumerate_gibbs(d, RX, BetaTriple(0.7, 0.3, -0.2), BINS)
        assert hist.mass.sum() == pytest.approx(1.0, abs=1e-12)

    def test_three_atom_prior(self):
        px = make_discrete_prior([(1.0, 0.3), (0.0, 0.4), (-1.0, 0.3)])
        d = draw_disorder(5, D1, seed=5)
        log_z, hist = enumerate_gibbs(d, px, BetaTriple(0.5, 0.2, 0.1), default_overlap_bins(px, D1))
        # against a direct dense evaluation
        from itertools import product

        total = 0.0
        for xs in product(px.positions, repeat=5):
            x = np.asarray(xs)
            w = np.prod([px.weights[list(px.positions).index(v)] for v in xs])
            total += w * math.exp(hamiltonian(x, d, BetaTriple(0.5, 0.2, 0.1)))
        assert log_z == pytest.approx(math.log(total), abs=1e-10)
        assert hist.mass.sum() == pytest.approx(1.0, abs=1e-12)

    def test_cap_error_suggests_sampler(self):
        d = DisorderSample(n=40, w=np.zeros((40, 40)), x0=np.ones(40), seed=0)
        with pytest.raises(EnumerationCapError, match="metropolis_sample"):
            enumerate_gibbs(d, RX, ZERO, BINS)


class TestMetropolis:
    def test_zero_couplings_product_law(self):
        # acceptance ratio is 1; magnetization bins follow the binomial law
        n = 6
        d = draw_disorder(n, D1, seed=6)
        edges = (np.linspace(0, 1, 3), np.linspace(-1, 1, 2 * n + 2))
        cfg = ChainConfig(sweeps=200_000, burn_in=1000, seed=7)
        hist = metropolis_sample(d, RX, ZERO, cfg, edges)
        m_marginal = hist.mass.sum(axis=0)
        centers = 0.5 * (edges[1][:-1] + edges[1][1:])
        sweeps = cfg.sweeps - cfg.burn_in
        for k in range(n + 1):
            m_val = (2 * k - n) / n
            want = math.comb(n, k) / 2**n
            j = int(np.argmin(np.abs(centers - m_val)))
            got = m_marginal[j]
            sigma = math.sqrt(want * (1 - want) / sweeps) * 25  # autocorrelation slack
            assert abs(got - want) <= 3 * sigma + 1e-3

    def test_matches_enumeration_n12(self):
        d = draw_disorder(12, D1, seed=42)
        betas = BetaTriple(0.5, 0.4, 0.0)
        _, exact = enumerate_gibbs(d, RX, betas, BINS)
        cfg = ChainConfig(sweeps=200_000, burn_in=20_000, seed=42)
        approx = metropolis_sample(d, RX, betas, cfg, BINS)
        assert tv_distance(approx, exact) <= 0.05

    def test_single_atom_prior_degenerate(self):
        pc = point_mass(1.0)
        d = draw_disorder(5, D1, seed=8)
        cfg = ChainConfig(sweeps=2000, burn_in=100, seed=9)
        hist = metropolis_sample(d, pc, BetaTriple(0.5, 0.5, 0.5), cfg, default_overlap_bins(pc, D1))
        assert np.count_nonzero(hist.mass) == 1
        assert hist.mass.max() == pytest.approx(1.0)

    def test_bit_reproducible(self):
        d = draw_disorder(8, D1, seed=10)
        cfg = ChainConfig(sweeps=5000, burn_in=500, chains=2, seed=11)
        a = metropolis_sample(d, RX, BetaTriple(0.6, 0.2, 0.0), cfg, BINS)
        b = metropolis_sample(d, RX, BetaTriple(0.6, 0.2, 0.0), cfg, BINS)
        assert np.array_equal(a.mass, b.mass)

    def test_parallel_tempering_agrees_with_enumeration(self):
        d = draw_disorder(8, D1, seed=12)
        betas = BetaTriple(1.2, 0.3, 0.0)
        _, exact = enumerate_gibbs(d, RX, betas, BINS)
        cfg = ChainConfig(
            sweeps=150_000, burn_in=15_000, chains=1, temperature_ladder=(1.0, 1.6, 2.6), seed=13
        )
        approx = metropolis_sample(d, RX, betas, cfg, BINS)
        assert tv_distance(approx, exact) <= 0.05

    def test_detailed_balance_small_system(self):
        # empirical transition flows between enumerable states at N = 3
        n = 3
        d = draw_disorder(n, D1, seed=14)
        betas = BetaTriple(0.6, 0.2, 0.0)
        cfg = ChainConfig(sweeps=150_000, burn_in=0, seed=15)
        _, trace = metropolis_sample(d, RX, betas, cfg, BINS, trace_states=True)
        counts = np.zeros((8, 8))
        np.add.at(counts, (trace[:-1], trace[1:]), 1.0)
        for i in range(8):
            for j in range(i + 1, 8):
                flow = counts[i, j] + counts[j, i]
                if flow > 100:
                    z = abs(counts[i, j] - counts[j, i]) / math.sqrt(flow)
                    assert z <= 3.5

    def test_ladder_must_start_at_base(self):
        with pytest.raises(ValueError):
            ChainConfig(sweeps=10, temperature_ladder=(2.0, 1.0))


class TestEmpiricalRate:
    def test_whole_range_window_is_free(self):
        spec = ModelSpec(RX, D1, BetaTriple(0.4, 0.1, 0.0))
        rows = empirical_rate(spec, OverlapPoint(0.5, 0.0), eps=2.0, n_list=[4, 6], samples=2, seed=0)
        for row in rows:
            assert row["estimate"] == pytest.approx(0.0, abs=1e-14)
            assert row["infinite_draws"] == 0

    def test_cramer_exact_binomials(self):
        # zero couplings: the estimate is a deterministic prior probability
        spec = ModelSpec(RX, D1, ZERO)
        rows = empirical_rate(spec, OverlapPoint(1.0, 0.5), eps=0.05, n_list=[8, 12], samples=3, seed=1)
        want = {8: -math.log(math.comb(8, 6) / 2**8) / 8, 12: -math.log(math.comb(12, 9) / 2**12) / 12}
        for row in rows:
            assert row["estimate"] == pytest.approx(want[row["n"]], abs=1e-12)
            assert row["stderr"] == pytest.approx(0.0, abs=1e-12)

    def test_empty_window_counts_infinite_draws(self):
        spec = ModelSpec(RX, D1, ZERO)
        # R10 at n=4 takes values in multiples of 1/2; a tiny window at 0.3
        # around an unreachable magnetization is empty for every draw
        rows = empirical_rate(spec, OverlapPoint(1.0, 0.3), eps=0.01, n_list=[4], samples=3, seed=2)
        assert rows[0]["infinite_draws"] == 3
        assert rows[0]["estimate"] == math.inf

    def test_minimizer_trend_to_zero(self):
        spec = ModelSpec(RX, D1, ZERO)
        rows = empirical_rate(spec, OverlapPoint(1.0, 0.0), eps=0.05, n_list=[8, 12, 16], samples=2, seed=3)
        ests = [r["estimate"] for r in rows]
        assert ests[2] < ests[0]
        assert all(e >= 0 for e in ests)
        assert all(r["method"] == "enumeration" for r in rows)

    def test_sampling_fallback_above_cap(self):
        # 2^27 states exceed the enumeration cap; the declared Metropolis
        # fallback should land near the exact prior probability
        spec = ModelSpec(RX, D1, ZERO)
        rows = empirical_rate(
            spec, OverlapPoint(1.0, 0.0), eps=0.1, n_list=[27], samples=2, seed=0, fallback_sweeps=50_000
        )
        assert rows[0]["method"] == "metropolis"
        oracle = -math.log(2 * math.comb(27, 14) / 2**27) / 27
        assert rows[0]["estimate"] == pytest.approx(oracle, abs=0.005)

    def test_csv_serialization(self, tmp_path):
        rows = [
            {"n": 8, "estimate": 0.25, "stderr": 0.001, "infinite_draws": 0},
            {"n": 12, "estimate": math.inf, "stderr": 0.0, "infinite_draws": 2},
        ]
        path = tmp_path / "rate.csv"
        rate_table_to_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "n,estimate,stderr,infinite_draws"
        assert lines[2].startswith("12,+inf")


class TestChannelFreeEnergy:
    def test_single_site_is_zero(self):
        m, s = channel_free_energy(gaussian_channel(1.0), RX, RX, 1, 3, seed=0)
        assert m == 0.0 and s == 0.0

    def test_w_constant_channel_zero(self):
        import numpy as _np

        from franzparisi.channel import ChannelModel

        const = -0.5 * math.log(2 * math.pi)
        ch = ChannelModel(
            assumed_loglik=lambda y, w: -0.5 * _np.asarray(y) ** 2 + const + 0.0 * w,
            true_base_logdensity=lambda y: -0.5 * _np.asarray(y) ** 2 + const,
            true_score_at_zero=lambda y: _np.asarray(y, dtype=float),
            domain=(-12, 12),
            sampler=lambda w, rng, size: rng.standard_normal(size),
        )
        m, s = channel_free_energy(ch, RX, RX, 6, 5, seed=1)
        assert m == pytest.approx(0.0, abs=1e-12)

    def test_matched_gaussian_close_to_equivalent_model(self):
        # the gap to the Gaussian-equivalent model at matched noise is pure
        # Monte Carlo scale; with modest samples it sits within a few sigma
        n, samples = 6, 60
        mg, sg = channel_free_energy(gaussian_channel(1.0), RX, RX, n, samples, seed=2)
        vals = []
        for k in range(samples):
            d = draw_disorder(n, RX, 77, index=k)
            log_z, _ = enumerate_gibbs(d, RX, BetaTriple(1.0, 1.0, -1.0), default_overlap_bins(RX, RX))
            vals.append(log_z / n)
        mh = float(np.mean(vals))
        sh = float(np.std(vals, ddof=1) / math.sqrt(samples))
        assert abs(mg - mh) <= 3 * math.hypot(sg, sh)

    def test_missing_sampler_rejected(self):
        from franzparisi.channel import laplace_channel

        with pytest.raises(ValueError, match="sampler"):
            channel_free_energy(laplace_channel(1.0), RX, RX, 4, 2, seed=0)


class TestZeroTemperature:
    def test_approaches_ground_state(self):
        d = draw_disorder(10, D1, seed=16)
        betas = BetaTriple(0.7, 0.3, 0.0)
        rows = zero_temperature_check(d, RX, betas, [1.0, 100.0, 1000.0])
        gs = ground_state_energy(d, RX, betas)
        gaps = [abs(v - gs) for _, v in rows]
        assert gaps[-1] <= 1e-3
        assert gaps[2] <= gaps[0]

    def test_single_atom_prior_constant(self):
        pc = point_mass(1.0)
        d = draw_disorder(6, D1, seed=17)
        betas = BetaTriple(0.4, 0.2, 0.1)
        h = hamiltonian(np.ones(6), d, betas) / 6
        for _, v in zero_temperature_check(d, pc, betas, [0.5, 5.0, 500.0]):
            assert v == pytest.approx(h, abs=1e-12)

    def test_small_l_near_zero(self):
        d = draw_disorder(8, D1, seed=18)
        rows = zero_temperature_check(d, RX, BetaTriple(0.5, 0.0, 0.0), [1e-6])
        assert abs(rows[0][1]) < 1e-2


class TestSerialization:
    def test_histogram_json(self, tmp_path):
        d = draw_disorder(4, D1, seed=19)
        _, hist = enumerate_gibbs(d, RX, ZERO, BINS)
        path = tmp_path / "hist.json"
        histogram_to_json(hist, path)
        doc = json.loads(path.read_text())
        assert doc["n"] == 4
        assert len(doc["s_edges"]) == len(BINS[0])

    def test_disorder_json(self, tmp_path):
        d = draw_disorder(3, D1, seed=20)
        path = tmp_path / "disorder.json"
        disorder_to_json(d, path)
        doc = json.loads(path.read_text())
        assert doc["n"] == 3 and len(doc["w"]) == 3
