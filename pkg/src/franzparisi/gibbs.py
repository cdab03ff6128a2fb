"""Finite-size ground truth: exact enumeration and Metropolis sampling.

Everything here works at sizes where the configuration space (atoms^N) can
be enumerated or sampled directly, providing the reference values that the
variational formulas are checked against: exact constrained partition
functions, overlap histograms, empirical rate estimates and channel vs
Gaussian-model free-energy gaps.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import BetaTriple, ChannelModel
from .measures import DiscretePrior, OverlapPoint
from .rng import stream
from .variational import ModelSpec

__all__ = [
    "DisorderSample",
    "OverlapHistogram",
    "ChainConfig",
    "EnumerationCapError",
    "draw_disorder",
    "default_overlap_bins",
    "hamiltonian",
    "enumerate_gibbs",
    "metropolis_sample",
    "empirical_rate",
    "channel_free_energy",
    "zero_temperature_check",
    "ground_state_energy",
    "tv_distance",
    "histogram_to_json",
    "disorder_to_json",
    "rate_table_to_csv",
]

ENUMERATION_CAP = 2 * 10**7
_CHUNK_ROWS = 1 << 16


class EnumerationCapError(RuntimeError):
    def __init__(self, states: int):
        super().__init__(
            f"state space has {states} configurations, above the cap "
            f"{ENUMERATION_CAP}; use metropolis_sample instead"
        )
        self.states = states


@dataclass(frozen=True)
class DisorderSample:
    """One realization of the quenched randomness (coupling matrix, signal)."""

    n: int
    w: np.ndarray
    x0: np.ndarray
    seed: int

    def __post_init__(self):
        if self.w.shape != (self.n, self.n):
            raise ValueError("coupling matrix shape mismatch")
        if not np.allclose(self.w, self.w.T):
            raise ValueError("coupling matrix must be symmetric")
        if self.x0.shape != (self.n,):
            raise ValueError("signal vector length mismatch")


@dataclass(frozen=True)
class ChainConfig:
    sweeps: int
    burn_in: int = 0
    chains: int = 1
    temperature_ladder: Optional[tuple] = None
    seed: int = 0

    def __post_init__(self):
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.temperature_ladder is not None:
            ladder = tuple(self.temperature_ladder)
            if len(ladder) == 0 or abs(ladder[0] - 1.0) > 1e-12:
                raise ValueError("temperature ladder must start at 1.0")
            if any(t <= 0 for t in ladder):
                raise ValueError("temperatures must be positive")


@dataclass(frozen=True)
class OverlapHistogram:
    s_edges: np.ndarray
    m_edges: np.ndarray
    mass: np.ndarray
    n: int

    def __post_init__(self):
        if self.mass.shape != (len(self.s_edges) - 1, len(self.m_edges) - 1):
            raise ValueError("mass shape must match the bin edges")
        if np.any(self.mass < -1e-15):
            raise ValueError("bin masses must be nonnegative")
        if abs(float(self.mass.sum()) - 1.0) > 1e-12:
            raise ValueError("bin masses must sum to 1")


def draw_disorder(n: int, prior_0: DiscretePrior, seed: int, index: int = 0) -> DisorderSample:
    """Symmetric iid standard Gaussian couplings plus a signal from prior_0."""
    rng = stream(seed, 17, index)
    upper = rng.standard_normal((n, n))
    w = np.triu(upper, 1)
    w = w + w.T
    x0 = prior_0.sample(rng, n)
    return DisorderSample(n=n, w=w, x0=np.asarray(x0, dtype=float), seed=seed)


def default_overlap_bins(prior_x: DiscretePrior, prior_0: DiscretePrior, count: int = 41):
    c = max(prior_x.support_bound, prior_0.support_bound)
    return np.linspace(0.0, c * c, count + 1), np.linspace(-c * c, c * c, count + 1)


def _hamiltonian_batch(x: np.ndarray, w: np.ndarray, x0: np.ndarray, betas: BetaTriple) -> np.ndarray:
    """Hamiltonian for a batch of configurations (rows of x)."""
    n = x.shape[1]
    pair_w = 0.5 * ((x @ w) * x).sum(axis=1)  # w has zero diagonal
    xx0 = x * x0[None, :]
    s1 = xx0.sum(axis=1)
    pair_snr = 0.5 * (s1**2 - (xx0**2).sum(axis=1))
    t1 = (x**2).sum(axis=1)
    pair_s = 0.5 * (t1**2 - (x**4).sum(axis=1))
    return (
        betas.beta / math.sqrt(n) * pair_w
        + betas.beta_snr / n * pair_snr
        + betas.beta_s / (2 * n) * pair_s
    )


def hamiltonian(x, d: DisorderSample, betas: BetaTriple) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (d.n,):
        raise ValueError(f"configuration length {x.shape} does not match n={d.n}")
    return float(_hamiltonian_batch(x[None, :], d.w, d.x0, betas)[0])


def _iter_index_chunks(n_atoms: int, n: int):
    """Yield configuration index matrices covering atoms^n states in order."""
    total = n_atoms**n
    if total > ENUMERATION_CAP:
        raise EnumerationCapError(total)
    tail = 0
    while n_atoms ** (tail + 1) <= _CHUNK_ROWS and tail + 1 <= n:
        tail += 1
    rows = n_atoms**tail
    grids = np.meshgrid(*[np.arange(n_atoms)] * tail, indexing="ij") if tail else []
    tail_mat = (
        np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
        if tail
        else np.zeros((1, 0), dtype=np.int64)
    )
    head_digits = n - tail
    for head in range(n_atoms**head_digits):
        prefix = np.empty(head_digits, dtype=np.int64)
        h = head
        for pos in range(head_digits - 1, -1, -1):
            prefix[pos] = h % n_atoms
            h //= n_atoms
        chunk = np.empty((rows if tail else 1, n), dtype=np.int64)
        chunk[:, :head_digits] = prefix[None, :]
        if tail:
            chunk[:, head_digits:] = tail_mat
        yield chunk


def _bin_index(vals: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.clip(np.searchsorted(edges, vals, side="right") - 1, 0, len(edges) - 2)


def enumerate_gibbs(
    d: DisorderSample,
    prior_x: DiscretePrior,
    betas: BetaTriple,
    bins: tuple,
) -> tuple[float, OverlapHistogram]:
    """Exact log partition function and exact overlap-bin masses."""
    s_edges = np.asarray(bins[0], dtype=float)
    m_edges = np.asarray(bins[1], dtype=float)
    pos = prior_x.positions
    logw = np.log(prior_x.weights)
    best = -math.inf
    acc_z = 0.0
    acc_hist = np.zeros((len(s_edges) - 1, len(m_edges) - 1))
    for idx in _iter_index_chunks(len(pos), d.n):
        x = pos[idx]
        terms = logw[idx].sum(axis=1) + _hamiltonian_batch(x, d.w, d.x0, betas)
        m = float(terms.max())
        if m > best:
            scale = math.exp(best - m) if best > -math.inf else 0.0
            acc_z *= scale
            acc_hist *= scale
            best = m
        e = np.exp(terms - best)
        acc_z += float(e.sum())
        si = _bin_index((x**2).sum(axis=1) / d.n, s_edges)
        mi = _bin_index((x * d.x0[None, :]).sum(axis=1) / d.n, m_edges)
        np.add.at(acc_hist, (si, mi), e)
    log_z = best + math.log(acc_z)
    mass = acc_hist / acc_z
    mass /= mass.sum()
    return log_z, OverlapHistogram(s_edges, m_edges, mass, d.n)


# ---------------------------------------------------------------------------
# Metropolis sampling

_KERNEL = None


def _get_kernel():
    """Compile the single-site update kernel on first use."""
    global _KERNEL
    if _KERNEL is not None:
        return _KERNEL
    import numba

    @numba.njit(cache=True)
    def mh_chunk(
        xval, xidx, hfield, m0v, s2v, hv,
        w, x0, positions,
        beta, bsnr, bs, gammas,
        prop_atom, prop_u, swap_u,
        hist, rec_from,
        s_lo, s_hi, s_nb, m_lo, m_hi, m_nb,
        trace,
    ):
        n_rep = xval.shape[0]
        n = xval.shape[1]
        sqn = math.sqrt(n)
        n_sweeps = prop_atom.shape[0]
        tpos = 0
        for sw in range(n_sweeps):
            for rep in range(n_rep):
                g = gammas[rep]
                for k in range(n):
                    a = prop_atom[sw, rep, k]
                    new = positions[a]
                    old = xval[rep, k]
                    dlt = new - old
                    dh = (
                        beta / sqn * dlt * hfield[rep, k]
                        + bsnr / n * x0[k] * dlt * (m0v[rep] - old * x0[k])
                        + bs / (2.0 * n) * (new * new - old * old) * (s2v[rep] - old * old)
                    )
                    gdh = g * dh
                    accept = gdh >= 0.0 or prop_u[sw, rep, k] < math.exp(gdh)
                    if accept and dlt != 0.0:
                        xval[rep, k] = new
                        xidx[rep, k] = a
                        for j in range(n):
                            hfield[rep, j] += w[j, k] * dlt
                        m0v[rep] += x0[k] * dlt
                        s2v[rep] += new * new - old * old
                        hv[rep] += dh
                    if trace.shape[0] > 0 and rep == 0:
                        code = 0
                        base = 1
                        for j in range(n):
                            code += xidx[0, j] * base
                            base *= positions.shape[0]
                        trace[tpos] = code
                        tpos += 1
            # replica exchange across adjacent ladder entries
            for t in range(n_rep - 1):
                delta = (gammas[t] - gammas[t + 1]) * (hv[t + 1] - hv[t])
                if delta >= 0.0 or swap_u[sw, t] < math.exp(delta):
                    for j in range(n):
                        tmpv = xval[t, j]
                        xval[t, j] = xval[t + 1, j]
                        xval[t + 1, j] = tmpv
                        tmpi = xidx[t, j]
                        xidx[t, j] = xidx[t + 1, j]
                        xidx[t + 1, j] = tmpi
                        tmph = hfield[t, j]
                        hfield[t, j] = hfield[t + 1, j]
                        hfield[t + 1, j] = tmph
                    m0v[t], m0v[t + 1] = m0v[t + 1], m0v[t]
                    s2v[t], s2v[t + 1] = s2v[t + 1], s2v[t]
                    hv[t], hv[t + 1] = hv[t + 1], hv[t]
            if sw >= rec_from:
                s_val = s2v[0] / n
                m_val = m0v[0] / n
                si = int((s_val - s_lo) / (s_hi - s_lo) * s_nb)
                if si < 0:
                    si = 0
                if si >= s_nb:
                    si = s_nb - 1
                mi = int((m_val - m_lo) / (m_hi - m_lo) * m_nb)
                if mi < 0:
                    mi = 0
                if mi >= m_nb:
                    mi = m_nb - 1
                hist[si, mi] += 1

    _KERNEL = mh_chunk
    return _KERNEL


def metropolis_sample(
    d: DisorderSample,
    prior_x: DiscretePrior,
    betas: BetaTriple,
    cfg: ChainConfig,
    bins: tuple,
    trace_states: bool = False,
):
    """Single-site Metropolis histogram of (R11, R10), optionally tempered.

    Proposals are fresh atom draws from the prior, so the acceptance ratio is
    exp(dH) and the chain is exact for the product prior at zero couplings.
    With a temperature ladder, replicas exchange after every sweep and only
    the base (T = 1) replica is recorded.  Deterministic given cfg.seed.

    When ``trace_states`` is set the encoded base-replica state after every
    single-site update is returned as well (small systems only).
    """
    kernel = _get_kernel()
    s_edges = np.asarray(bins[0], dtype=float)
    m_edges = np.asarray(bins[1], dtype=float)
    if not (np.allclose(np.diff(s_edges), s_edges[1] - s_edges[0]) and np.allclose(np.diff(m_edges), m_edges[1] - m_edges[0])):
        raise ValueError("metropolis histogram needs uniform bins")
    ladder = tuple(cfg.temperature_ladder) if cfg.temperature_ladder else (1.0,)
    gammas = np.array([1.0 / t for t in ladder])
    n_rep = len(gammas)
    pos = prior_x.positions
    cumw = np.cumsum(prior_x.weights)
    hist = np.zeros((len(s_edges) - 1, len(m_edges) - 1), dtype=np.int64)
    traces = []
    if trace_states and d.n * cfg.sweeps > 5 * 10**7:
        raise ValueError("state tracing is restricted to small systems")
    for chain in range(cfg.chains):
        rng = stream(cfg.seed, 23, chain)
        # initial configuration from the prior, one per replica
        xidx = np.searchsorted(cumw, rng.random((n_rep, d.n))).astype(np.int64)
        xidx[xidx >= len(pos)] = len(pos) - 1
        xval = pos[xidx]
        hfield = xval @ d.w.T  # (n_rep, n): field h_k = sum_j w_kj x_j
        m0v = (xval * d.x0[None, :]).sum(axis=1)
        s2v = (xval**2).sum(axis=1)
        hv = _hamiltonian_batch(xval, d.w, d.x0, betas)
        chain_hist = np.zeros_like(hist)
        done = 0
        chunk = max(1, min(cfg.sweeps, (1 << 20) // max(1, n_rep * d.n)))
        while done < cfg.sweeps:
            todo = min(chunk, cfg.sweeps - done)
            prop_atom = np.searchsorted(cumw, rng.random((todo, n_rep, d.n))).astype(np.int64)
            prop_atom[prop_atom >= len(pos)] = len(pos) - 1
            prop_u = rng.random((todo, n_rep, d.n))
            swap_u = rng.random((todo, max(1, n_rep - 1)))
            rec_from = max(0, cfg.burn_in - done)
            trace = (
                np.zeros(todo * d.n, dtype=np.int64)
                if trace_states
                else np.zeros(0, dtype=np.int64)
            )
            kernel(
                xval, xidx, hfield, m0v, s2v, hv,
                d.w, d.x0, pos,
                betas.beta, betas.beta_snr, betas.beta_s, gammas,
                prop_atom, prop_u, swap_u,
                chain_hist, rec_from,
                float(s_edges[0]), float(s_edges[-1]), len(s_edges) - 1,
                float(m_edges[0]), float(m_edges[-1]), len(m_edges) - 1,
                trace,
            )
            if trace_states:
                traces.append(trace)
            done += todo
        hist += chain_hist
    mass = hist.astype(float)
    mass /= mass.sum()
    result = OverlapHistogram(s_edges, m_edges, mass, d.n)
    if trace_states:
        return result, np.concatenate(traces)
    return result


def tv_distance(a: OverlapHistogram, b: OverlapHistogram) -> float:
    if a.mass.shape != b.mass.shape:
        raise ValueError("histograms must share binning")
    return 0.5 * float(np.abs(a.mass - b.mass).sum())


# ---------------------------------------------------------------------------
# rate estimates and channel free energies


def empirical_rate(
    spec: ModelSpec,
    p: OverlapPoint,
    eps: float,
    n_list,
    samples: int,
    seed: int,
    fallback_sweeps: int = 200_000,
):
    """-(1/n) log G_n(|R11 - S| <= eps, |R10 - M| <= eps), disorder-averaged.

    Sizes within the enumeration cap are exact; larger sizes fall back to a
    Metropolis window-mass estimate and the row declares method="metropolis"
    (window resolved to fine uniform bins).  Disorder draws share random
    numbers across the sizes in n_list (prefixes of one master draw per
    sample) so size trends are not washed out by independent noise.  Draws
    with an empty constraint window count separately and are excluded from
    the average.
    """
    n_list = list(n_list)
    n_max = max(n_list)
    pos = spec.prior_x.positions
    logw_atom = np.log(spec.prior_x.weights)
    rows = []
    per_n = {n: [] for n in n_list}
    infinite = {n: 0 for n in n_list}
    methods = {n: "enumeration" if len(pos) ** n <= ENUMERATION_CAP else "metropolis" for n in n_list}
    fine_bins = default_overlap_bins(spec.prior_x, spec.prior_0, count=161)
    for k in range(samples):
        rng = stream(seed, 29, k)
        upper = rng.standard_normal((n_max, n_max))
        w_full = np.triu(upper, 1)
        w_full = w_full + w_full.T
        x0_full = np.asarray(spec.prior_0.sample(rng, n_max), dtype=float)
        for n in n_list:
            w = w_full[:n, :n]
            x0 = x0_full[:n]
            if methods[n] == "metropolis":
                d = DisorderSample(n=n, w=w, x0=x0, seed=seed)
                cfg = ChainConfig(
                    sweeps=fallback_sweeps, burn_in=fallback_sweeps // 10, seed=seed + 7919 * k
                )
                hist = metropolis_sample(d, spec.prior_x, spec.betas, cfg, fine_bins)
                sc = 0.5 * (hist.s_edges[:-1] + hist.s_edges[1:])
                mc = 0.5 * (hist.m_edges[:-1] + hist.m_edges[1:])
                window = (np.abs(sc[:, None] - p.s) <= eps) & (np.abs(mc[None, :] - p.m) <= eps)
                mass = float(hist.mass[window].sum())
                if mass == 0.0:
                    infinite[n] += 1
                else:
                    per_n[n].append(-math.log(mass) / n)
                continue
            best = -math.inf
            acc_all = 0.0
            acc_hit = 0.0
            for idx in _iter_index_chunks(len(pos), n):
                x = pos[idx]
                terms = logw_atom[idx].sum(axis=1) + _hamiltonian_batch(x, w, x0, spec.betas)
                m = float(terms.max())
                if m > best:
                    scale = math.exp(best - m) if best > -math.inf else 0.0
                    acc_all *= scale
                    acc_hit *= scale
                    best = m
                e = np.exp(terms - best)
                acc_all += float(e.sum())
                r11 = (x**2).sum(axis=1) / n
                r10 = (x * x0[None, :]).sum(axis=1) / n
                mask = (np.abs(r11 - p.s) <= eps) & (np.abs(r10 - p.m) <= eps)
                acc_hit += float(e[mask].sum())
            if acc_hit == 0.0:
                infinite[n] += 1
            else:
                per_n[n].append(-(math.log(acc_hit) - math.log(acc_all)) / n)
    for n in n_list:
        vals = np.asarray(per_n[n])
        est = float(vals.mean()) if len(vals) else math.inf
        err = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append(
            {
                "n": n,
                "estimate": est,
                "stderr": err,
                "infinite_draws": infinite[n],
                "method": methods[n],
            }
        )
    return rows


def channel_free_energy(
    ch: ChannelModel,
    prior_x: DiscretePrior,
    prior_0: DiscretePrior,
    n: int,
    samples: int,
    seed: int,
) -> tuple[float, float]:
    """(1/n)(log Z^Y - sum_{i<j} g(Y_ij, 0)) by exact enumeration, averaged
    over draws of the signal and of observations from the true channel."""
    if ch.sampler is None:
        raise ValueError(f"channel kind {ch.kind!r} has no sampler")
    if n < 1:
        raise ValueError("n must be >= 1")
    pos = prior_x.positions
    logw_atom = np.log(prior_x.weights)
    iu = np.triu_indices(n, 1)
    vals = np.empty(samples)
    n_pairs = len(iu[0])
    for k in range(samples):
        rng = stream(seed, 31, k)
        x0 = np.asarray(prior_0.sample(rng, n), dtype=float)
        w0 = (np.outer(x0, x0) / math.sqrt(n))[iu]
        y = np.asarray(ch.sampler(w0, rng, n_pairs), dtype=float)
        # per-edge lookup table over atom pairs
        wprod = np.outer(pos, pos) / math.sqrt(n)  # (A, A)
        table = ch.assumed_loglik(y[:, None, None], wprod[None, :, :])  # (E, A, A)
        base = float(np.sum(ch.assumed_loglik(y, 0.0)))
        best = -math.inf
        acc = 0.0
        for idx in _iter_index_chunks(len(pos), n):
            gsum = np.zeros(idx.shape[0])
            for e in range(n_pairs):
                gsum += table[e, idx[:, iu[0][e]], idx[:, iu[1][e]]]
            terms = logw_atom[idx].sum(axis=1) + gsum
            m = float(terms.max())
            if m > best:
                acc *= math.exp(best - m) if best > -math.inf else 0.0
                best = m
            acc += float(np.exp(terms - best).sum())
        vals[k] = (best + math.log(acc) - base) / n
    err = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return float(vals.mean()), err


def zero_temperature_check(
    d: DisorderSample,
    prior_x: DiscretePrior,
    betas: BetaTriple,
    l_list,
):
    """(1/(L n)) log sum_x w(x) exp(L H(x)) for each L; tends to max H/n."""
    pos = prior_x.positions
    logw_atom = np.log(prior_x.weights)
    h_chunks = []
    w_chunks = []
    for idx in _iter_index_chunks(len(pos), d.n):
        x = pos[idx]
        h_chunks.append(_hamiltonian_batch(x, d.w, d.x0, betas))
        w_chunks.append(logw_atom[idx].sum(axis=1))
    h = np.concatenate(h_chunks)
    lw = np.concatenate(w_chunks)
    out = []
    for L in l_list:
        L = float(L)
        if L == 0:
            raise ValueError("L must be nonzero")
        terms = lw + L * h
        m = float(terms.max())
        val = (m + math.log(float(np.exp(terms - m).sum()))) / (L * d.n)
        out.append((L, val))
    return out


def ground_state_energy(d: DisorderSample, prior_x: DiscretePrior, betas: BetaTriple) -> float:
    """max_x H(x)/n over the support of the product prior."""
    pos = prior_x.positions
    best = -math.inf
    for idx in _iter_index_chunks(len(pos), d.n):
        h = _hamiltonian_batch(pos[idx], d.w, d.x0, betas)
        best = max(best, float(h.max()))
    return best / d.n


# ---------------------------------------------------------------------------
# serialization


def histogram_to_json(hist: OverlapHistogram, path) -> None:
    doc = {
        "n": hist.n,
        "s_edges": [f"{v:.9g}" for v in hist.s_edges],
        "m_edges": [f"{v:.9g}" for v in hist.m_edges],
        "mass": [[f"{v:.9g}" for v in row] for row in hist.mass],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def disorder_to_json(d: DisorderSample, path) -> None:
    doc = {
        "n": d.n,
        "seed": d.seed,
        "w": [[f"{v:.9g}" for v in row] for row in d.w],
        "x0": [f"{v:.9g}" for v in d.x0],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def rate_table_to_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "estimate", "stderr", "infinite_draws"])
        for row in rows:
            est = row["estimate"]
            writer.writerow(
                [
                    row["n"],
                    "+inf" if est == math.inf else f"{est:.9g}",
                    f"{row['stderr']:.9g}",
                    row["infinite_draws"],
                ]
            )
