"""Command-line front end: JSON experiment configs in, CSV/JSON tables out.

Subcommands: coeffs, phi, entropy, rate-grid, simulate, verify, zero-temp.
Each reads a JSON config (--config) and/or inline flags; flags win.  All
outputs use '.' decimals with 9 significant digits and are byte-stable for a
fixed seed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import channel as channel_mod
from . import gibbs, measures, variational
from .channel import ChannelError
from .config import OptimizerConfig
from .measures import EntropyNonConvergence, OverlapPoint
from .variational import ModelSpec, PhiConvergenceError

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "serialize_config", "run", "main"]

COMMANDS = ("coeffs", "phi", "entropy", "rate-grid", "simulate", "verify", "zero-temp")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_RESOURCE = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    payload: dict
    output_path: str | None = None
    seed: int | None = None
    threads: int = 1

    def key(self):
        return (self.command, json.dumps(self.payload, sort_keys=True), self.output_path, self.seed, self.threads)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.key() == other.key()


class _V:
    """Strict walker producing path-qualified messages."""

    def __init__(self, obj, path="config"):
        self.obj = obj
        self.path = path

    def fail(self, msg):
        raise ConfigError(f"{self.path}: {msg}")

    def require_keys(self, required, optional=()):
        if not isinstance(self.obj, dict):
            self.fail(f"expected an object, got {type(self.obj).__name__}")
        unknown = set(self.obj) - set(required) - set(optional)
        if unknown:
            self.fail(f"unknown keys {sorted(unknown)}")
        missing = [k for k in required if k not in self.obj]
        if missing:
            self.fail(f"missing required keys {missing}")

    def child(self, key, default=None):
        return _V(self.obj.get(key, default), f"{self.path}.{key}")

    def number(self, lo=-math.inf, hi=math.inf, integer=False):
        v = self.obj
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail("expected a number")
        if integer and int(v) != v:
            self.fail("expected an integer")
        if not (lo <= v <= hi):
            self.fail(f"value {v} outside range [{lo}, {hi}]")
        return int(v) if integer else float(v)

    def string(self, choices=None):
        if not isinstance(self.obj, str):
            self.fail("expected a string")
        if choices and self.obj not in choices:
            self.fail(f"expected one of {sorted(choices)}, got {self.obj!r}")
        return self.obj

    def array(self, length=None):
        if not isinstance(self.obj, list):
            self.fail("expected an array")
        if length is not None and len(self.obj) != length:
            self.fail(f"expected {length} entries, got {len(self.obj)}")
        return self.obj


def _parse_prior(v: _V):
    v.require_keys(["atoms"])
    atoms = v.child("atoms").array()
    try:
        return measures.make_discrete_prior(atoms)
    except ValueError as exc:
        v.fail(str(exc))


def _parse_betas(v: _V):
    v.require_keys(["beta", "beta_snr", "beta_s"])
    try:
        return channel_mod.BetaTriple(
            v.child("beta").number(lo=0.0),
            v.child("beta_snr").number(),
            v.child("beta_s").number(),
        )
    except ValueError as exc:
        v.fail(str(exc))


def _parse_spec(v: _V) -> ModelSpec:
    v.require_keys(["prior_x", "prior_0", "betas"])
    return ModelSpec(
        prior_x=_parse_prior(v.child("prior_x")),
        prior_0=_parse_prior(v.child("prior_0")),
        betas=_parse_betas(v.child("betas")),
    )


def _parse_cfg(v: _V, seed_override=None) -> OptimizerConfig:
    defaults = OptimizerConfig()
    if v.obj is None:
        base = {}
    else:
        v.require_keys([], optional=["r_max", "restarts", "max_iter", "tol", "seed", "hermite_nodes"])
        base = v.obj
    try:
        return OptimizerConfig(
            r_max=_V(base.get("r_max", defaults.r_max), f"{v.path}.r_max").number(1, 4, integer=True),
            restarts=_V(base.get("restarts", defaults.restarts), f"{v.path}.restarts").number(1, 10**6, integer=True),
            max_iter=_V(base.get("max_iter", defaults.max_iter), f"{v.path}.max_iter").number(1, 10**9, integer=True),
            tol=_V(base.get("tol", defaults.tol), f"{v.path}.tol").number(lo=1e-16),
            seed=seed_override if seed_override is not None else _V(base.get("seed", defaults.seed), f"{v.path}.seed").number(0, 2**64 - 1, integer=True),
            hermite_nodes=_V(base.get("hermite_nodes", defaults.hermite_nodes), f"{v.path}.hermite_nodes").number(8, 512, integer=True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{v.path}: {exc}") from exc


def _parse_grid(v: _V):
    if isinstance(v.obj, list):
        vals = [_V(x, f"{v.path}[{i}]").number() for i, x in enumerate(v.array())]
        if not vals:
            v.fail("grid must be nonempty")
        return np.asarray(vals)
    v.require_keys(["min", "max", "count"])
    lo = v.child("min").number()
    hi = v.child("max").number()
    count = v.child("count").number(1, 10**6, integer=True)
    if hi < lo:
        v.fail("grid max must be >= min")
    return np.linspace(lo, hi, count)


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON experiment config; unknown keys are rejected."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: malformed JSON ({exc})") from exc
    root = _V(obj)
    if not isinstance(obj, dict):
        root.fail("expected a JSON object")
    if "command" not in obj:
        root.fail("missing required keys ['command']")
    command = _V(obj["command"], "config.command").string(choices=COMMANDS)
    common_opt = ["output_path", "seed", "threads"]
    per_command = {
        "coeffs": (["channel"], ["nodes"]),
        "phi": (["spec", "point"], ["cfg"]),
        "entropy": (["prior_x", "prior_0", "point"], ["cfg"]),
        "rate-grid": (["spec", "s_grid", "m_grid"], ["cfg"]),
        "simulate": (["spec", "n", "chain"], ["bins"]),
        "verify": ([], []),
        "zero-temp": (["spec", "n", "l_list"], []),
    }
    required, optional = per_command[command]
    root.require_keys(["command"] + required, optional + common_opt)

    payload = {}
    if command == "coeffs":
        ch = root.child("channel")
        try:
            channel_mod.channel_from_json(ch.obj)
        except ChannelError as exc:
            ch.fail(str(exc))
        payload["channel"] = ch.obj
        if "nodes" in obj:
            payload["nodes"] = root.child("nodes").number(8, 100000, integer=True)
    elif command == "phi":
        _parse_spec(root.child("spec"))
        payload["spec"] = obj["spec"]
        pt = root.child("point").array(length=2)
        payload["point"] = [
            _V(pt[0], "config.point[0]").number(lo=0.0),
            _V(pt[1], "config.point[1]").number(),
        ]
        _parse_cfg(root.child("cfg") if "cfg" in obj else _V(None, "config.cfg"))
        payload["cfg"] = obj.get("cfg", {})
    elif command == "entropy":
        _parse_prior(root.child("prior_x"))
        _parse_prior(root.child("prior_0"))
        payload["prior_x"] = obj["prior_x"]
        payload["prior_0"] = obj["prior_0"]
        pt = root.child("point").array(length=2)
        payload["point"] = [
            _V(pt[0], "config.point[0]").number(lo=0.0),
            _V(pt[1], "config.point[1]").number(),
        ]
        _parse_cfg(root.child("cfg") if "cfg" in obj else _V(None, "config.cfg"))
        payload["cfg"] = obj.get("cfg", {})
    elif command == "rate-grid":
        _parse_spec(root.child("spec"))
        payload["spec"] = obj["spec"]
        payload["s_grid"] = [float(x) for x in _parse_grid(root.child("s_grid"))]
        payload["m_grid"] = [float(x) for x in _parse_grid(root.child("m_grid"))]
        _parse_cfg(root.child("cfg") if "cfg" in obj else _V(None, "config.cfg"))
        payload["cfg"] = obj.get("cfg", {})
    elif command == "simulate":
        _parse_spec(root.child("spec"))
        payload["spec"] = obj["spec"]
        payload["n"] = root.child("n").number(1, 64, integer=True)
        chain = root.child("chain")
        chain.require_keys(["sweeps"], ["burn_in", "chains", "temperature_ladder", "seed"])
        sweeps = chain.child("sweeps").number(1, 10**9, integer=True)
        burn = chain.child("burn_in", 0).number(0, 10**9, integer=True) if "burn_in" in chain.obj else 0
        if burn >= sweeps:
            chain.fail("need sweeps > burn_in")
        chains = chain.child("chains", 1).number(1, 4096, integer=True) if "chains" in chain.obj else 1
        ladder = None
        if "temperature_ladder" in chain.obj:
            ladder = [
                _V(t, f"{chain.path}.temperature_ladder[{i}]").number(lo=1e-9)
                for i, t in enumerate(chain.child("temperature_ladder").array())
            ]
            if not ladder or ladder[0] != 1.0:
                chain.child("temperature_ladder").fail("ladder must start at 1.0")
        cseed = chain.child("seed", 0).number(0, 2**64 - 1, integer=True) if "seed" in chain.obj else 0
        payload["chain"] = {"sweeps": sweeps, "burn_in": burn, "chains": chains, "seed": cseed}
        if ladder is not None:
            payload["chain"]["temperature_ladder"] = ladder
        if "bins" in obj:
            b = root.child("bins")
            b.require_keys(["count"])
            payload["bins"] = {"count": b.child("count").number(1, 4096, integer=True)}
    elif command == "zero-temp":
        _parse_spec(root.child("spec"))
        payload["spec"] = obj["spec"]
        payload["n"] = root.child("n").number(1, 64, integer=True)
        payload["l_list"] = [
            _V(x, f"config.l_list[{i}]").number(lo=1e-12)
            for i, x in enumerate(root.child("l_list").array())
        ]

    output_path = None
    if "output_path" in obj:
        output_path = root.child("output_path").string()
    seed = None
    if "seed" in obj:
        seed = root.child("seed").number(0, 2**64 - 1, integer=True)
    threads = 1
    if "threads" in obj:
        threads = root.child("threads").number(1, 1024, integer=True)
    return ExperimentConfig(command=command, payload=payload, output_path=output_path, seed=seed, threads=threads)


def serialize_config(config: ExperimentConfig) -> str:
    doc = {"command": config.command}
    doc.update(config.payload)
    if config.output_path is not None:
        doc["output_path"] = config.output_path
    if config.seed is not None:
        doc["seed"] = config.seed
    if config.threads != 1:
        doc["threads"] = config.threads
    return json.dumps(doc, sort_keys=True)


def _fmt(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return f"{v:.9g}"


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _effective_seed(config: ExperimentConfig, payload_seed) -> int:
    if config.seed is not None:
        return config.seed
    return payload_seed


def run(config: ExperimentConfig, out=sys.stdout) -> int:
    """Dispatch a validated config; returns the process exit code."""
    p = config.payload
    try:
        if config.command == "coeffs":
            ch = channel_mod.channel_from_json(p["channel"])
            rule = channel_mod.default_rule(ch, nodes=p.get("nodes"))
            channel_mod.validate_channel(ch, rule)
            triple = channel_mod.universality_coefficients(ch, rule)
            residual = channel_mod.check_consistency(ch, rule)
            print(
                f"beta={triple.beta:.6f} beta_snr={triple.beta_snr:.6f} beta_s={triple.beta_s:.6f}",
                file=out,
            )
            if config.output_path:
                _write_json(
                    config.output_path,
                    {
                        "beta": _fmt(triple.beta),
                        "beta_snr": _fmt(triple.beta_snr),
                        "beta_s": _fmt(triple.beta_s),
                        "consistency_residual": _fmt(residual),
                    },
                )
        elif config.command == "phi":
            spec = _parse_spec(_V(p["spec"], "config.spec"))
            cfg = _parse_cfg(_V(p.get("cfg") or None, "config.cfg"), seed_override=config.seed)
            point = OverlapPoint(p["point"][0], p["point"][1])
            value, argmin = variational.phi(spec, point, cfg)
            r = argmin.rsb.r if argmin else 0
            print(f"phi={_fmt(value)} S={_fmt(point.s)} M={_fmt(point.m)} r={r}", file=out)
            if config.output_path:
                doc = {"phi": _fmt(value), "s": _fmt(point.s), "m": _fmt(point.m)}
                if argmin is not None:
                    doc["argmin"] = {
                        "lam": _fmt(argmin.lam),
                        "mu": _fmt(argmin.mu),
                        "r": argmin.rsb.r,
                        "zeta": [_fmt(z) for z in argmin.rsb.zeta],
                        "q": [_fmt(q) for q in argmin.rsb.q],
                    }
                _write_json(config.output_path, doc)
        elif config.command == "entropy":
            prior_x = measures.prior_from_json(p["prior_x"])
            prior_0 = measures.prior_from_json(p["prior_0"])
            cfg = _parse_cfg(_V(p.get("cfg") or None, "config.cfg"), seed_override=config.seed)
            point = OverlapPoint(p["point"][0], p["point"][1])
            value = measures.entropy_rate(prior_x, prior_0, point, cfg)
            print(f"entropy_rate={_fmt(value)} S={_fmt(point.s)} M={_fmt(point.m)}", file=out)
            if config.output_path:
                _write_json(config.output_path, {"entropy_rate": _fmt(value), "s": _fmt(point.s), "m": _fmt(point.m)})
        elif config.command == "rate-grid":
            spec = _parse_spec(_V(p["spec"], "config.spec"))
            cfg = _parse_cfg(_V(p.get("cfg") or None, "config.cfg"), seed_override=config.seed)
            surface = variational.sup_phi(
                spec,
                cfg,
                (np.asarray(p["s_grid"]), np.asarray(p["m_grid"])),
                threads=config.threads,
            )
            print(
                f"sup_phi={_fmt(surface.sup_phi)} argmax_s={_fmt(surface.argmax.s)} "
                f"argmax_m={_fmt(surface.argmax.m)} unique={str(surface.minimizer_unique).lower()}",
                file=out,
            )
            if config.output_path:
                base, ext = os.path.splitext(config.output_path)
                csv_path = config.output_path if ext == ".csv" else base + ".csv"
                json_path = base + ".json"
                variational.surface_to_csv(surface, csv_path)
                variational.surface_to_json(surface, json_path)
        elif config.command == "simulate":
            spec = _parse_spec(_V(p["spec"], "config.spec"))
            n = p["n"]
            chain = p["chain"]
            seed = _effective_seed(config, chain.get("seed", 0))
            cc = gibbs.ChainConfig(
                sweeps=chain["sweeps"],
                burn_in=chain.get("burn_in", 0),
                chains=chain.get("chains", 1),
                temperature_ladder=tuple(chain["temperature_ladder"]) if "temperature_ladder" in chain else None,
                seed=seed,
            )
            bins = gibbs.default_overlap_bins(
                spec.prior_x, spec.prior_0, count=p.get("bins", {}).get("count", 41)
            )
            d = gibbs.draw_disorder(n, spec.prior_0, seed)
            hist = gibbs.metropolis_sample(d, spec.prior_x, spec.betas, cc, bins)
            print(
                f"simulate n={n} sweeps={cc.sweeps} chains={cc.chains} "
                f"mode_mass={_fmt(float(hist.mass.max()))}",
                file=out,
            )
            if config.output_path:
                gibbs.histogram_to_json(hist, config.output_path)
        elif config.command == "zero-temp":
            spec = _parse_spec(_V(p["spec"], "config.spec"))
            seed = config.seed if config.seed is not None else 0
            d = gibbs.draw_disorder(p["n"], spec.prior_0, seed)
            rows = gibbs.zero_temperature_check(d, spec.prior_x, spec.betas, p["l_list"])
            gs = gibbs.ground_state_energy(d, spec.prior_x, spec.betas)
            last = rows[-1]
            print(f"zero-temp n={p['n']} L={_fmt(last[0])} value={_fmt(last[1])} ground_state={_fmt(gs)}", file=out)
            if config.output_path:
                import csv as _csv

                with open(config.output_path, "w", newline="") as fh:
                    writer = _csv.writer(fh)
                    writer.writerow(["L", "value"])
                    for L, v in rows:
                        writer.writerow([_fmt(L), _fmt(v)])
        elif config.command == "verify":
            seed = config.seed if config.seed is not None else 0
            failures = _run_verify(seed, out)
            return EXIT_NUMERIC if failures else EXIT_OK
    except gibbs.EnumerationCapError as exc:
        print(f"error (resource): {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (PhiConvergenceError, EntropyNonConvergence, ChannelError, FloatingPointError) as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def _run_verify(seed: int, out) -> int:
    from .cascade import RSBSequence, rpc_average, y_term
    from .channel import gauss_hermite_rule, gaussian_channel, universality_coefficients
    from .rng import stream

    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        failures += 0 if ok else 1
        print(f"[verify] {name}: {'PASS' if ok else 'FAIL'}{' ' + detail if detail else ''}", file=out)

    triple = universality_coefficients(gaussian_channel(1.0))
    report(
        "matched gaussian triple",
        abs(triple.beta - 1) < 1e-6 and abs(triple.beta_snr - 1) < 1e-6 and abs(triple.beta_s + 1) < 1e-6,
        f"({triple.beta:.8f}, {triple.beta_snr:.8f}, {triple.beta_s:.8f})",
    )

    rx, r0 = measures.rademacher(), measures.point_mass(1.0)
    lam, mu = 0.4, -0.7
    lhs = measures.log_laplace(rx, r0, lam, mu)
    rhs = lam + math.log(math.cosh(mu))
    report("log-laplace closed form", abs(lhs - rhs) < 1e-12, f"delta={abs(lhs - rhs):.2e}")

    rng = stream(seed, 99)
    hermite = gauss_hermite_rule(32)
    ok = True
    worst = 0.0
    for _ in range(3):
        r = int(rng.integers(1, 4))
        zeta = np.sort(rng.uniform(0.05, 0.95, size=r))
        zeta = np.unique(zeta)
        while len(zeta) < r:
            zeta = np.sort(np.append(zeta, rng.uniform(0.05, 0.95)))
            zeta = np.unique(zeta)
        q = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, size=r - 1)), [1.0]])
        rsb = RSBSequence(r, zeta, q, 1.0)
        beta = float(rng.uniform(0.2, 1.5))
        n_scale = 4.0
        lhs_v = rpc_average(lambda s: math.sqrt(n_scale) * beta * s, lambda x: x * x / 2, rsb, hermite) / n_scale
        delta = abs(lhs_v - y_term(rsb, beta))
        worst = max(worst, delta)
        ok = ok and delta < 1e-6
    report("quadratic cascade closed form", ok, f"worst={worst:.2e}")

    spec = ModelSpec(rx, r0, channel_mod.BetaTriple(0.0, 1.0, 1.0))
    cfg = OptimizerConfig(r_max=1, restarts=4, seed=seed)
    point = OverlapPoint(1.0, 0.5)
    val, _ = variational.phi(spec, point, cfg)
    target = -measures.entropy_rate(rx, r0, point) + 0.5 * 0.5**2 + 0.25
    report("zero-coupling reduction", abs(val - target) < 1e-3, f"delta={abs(val - target):.2e}")

    d = gibbs.draw_disorder(2, r0, seed)
    betas = channel_mod.BetaTriple(0.7, 0.0, 0.0)
    log_z, _ = gibbs.enumerate_gibbs(d, rx, betas, gibbs.default_overlap_bins(rx, r0))
    closed = math.log(math.cosh(0.7 * d.w[0, 1] / math.sqrt(2)))
    report("two-spin partition function", abs(log_z - closed) < 1e-12, f"delta={abs(log_z - closed):.2e}")

    cc = gibbs.ChainConfig(sweeps=400, burn_in=100, seed=seed)
    bins = gibbs.default_overlap_bins(rx, r0, count=11)
    d8 = gibbs.draw_disorder(8, r0, seed)
    h1 = gibbs.metropolis_sample(d8, rx, betas, cc, bins)
    h2 = gibbs.metropolis_sample(d8, rx, betas, cc, bins)
    report("sampler determinism", bool(np.array_equal(h1.mass, h2.mass)))

    print(f"[verify] {6 - failures}/6 checks passed", file=out)
    return failures


def _build_parser() -> argparse.ArgumentParser:
    def add_globals(p, suppress):
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        p.add_argument("--config", help="path to a JSON experiment config", **kw)
        p.add_argument("--seed", type=int, help="override every seed in the config", **kw)
        p.add_argument("--threads", type=int, help="worker pool size for grid scans", **kw)
        p.add_argument("--out", help="output path (overrides config output_path)", **kw)

    parser = argparse.ArgumentParser(
        prog="franzparisi",
        description=(
            "Free energies, overlap rate functions and universality "
            "coefficients for rank-one matrix estimation models."
        ),
    )
    add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command")
    helps = {
        "coeffs": "universality coefficient triple of a channel (required: channel)",
        "phi": "variational value at one overlap point (required: spec, point)",
        "entropy": "entropy rate at one overlap point (required: prior_x, prior_0, point)",
        "rate-grid": "phi and rate function on a grid (required: spec, s_grid, m_grid)",
        "simulate": "Metropolis overlap histogram (required: spec, n, chain)",
        "verify": "run the built-in cross-check battery",
        "zero-temp": "low-temperature scaling check (required: spec, n, l_list)",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        add_globals(sp, suppress=True)
        if name == "coeffs":
            sp.add_argument("--channel", help="inline channel JSON", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    doc = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                text = fh.read()
        except OSError as exc:
            print(f"error (config): cannot read {config_path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            doc = json.loads(text)
            if not isinstance(doc, dict):
                raise ConfigError("config: expected a JSON object")
        except json.JSONDecodeError as exc:
            print(f"error (config): malformed JSON ({exc})", file=sys.stderr)
            return EXIT_CONFIG
    if args.command:
        doc["command"] = args.command
    if getattr(args, "channel", None):
        try:
            doc["channel"] = json.loads(args.channel)
        except json.JSONDecodeError as exc:
            print(f"error (config): --channel is not valid JSON ({exc})", file=sys.stderr)
            return EXIT_CONFIG
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        doc["threads"] = args.threads
    if getattr(args, "out", None) is not None:
        doc["output_path"] = args.out
    if "threads" not in doc:
        doc["threads"] = os.cpu_count() or 1
    try:
        config = parse_config(json.dumps(doc))
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
