"""Command-line interface: simulation, estimation and verification runs.

Every file output is written atomically (temp file + rename) and is
accompanied by a JSON manifest echoing the effective configuration, the
seed, wall time and package version, so runs can be reproduced from the
manifest alone.  Exit codes: 0 success, 1 validation error, 2 for runs
whose statistical verdict is inconclusive (distinct from failure).
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .fbm import GridSpec, path_to_csv, sample_exact, sample_fft, sample_fft_batch, FbmPath, as_hurst
from .integrals import SignedMeasure
from .harness import ExperimentPlan, run_rate_experiment, resolve_threads
from .localtime import (
    binning_estimator,
    default_bin_width,
    moment_oracle,
    sign_change_estimator,
)

__all__ = ["main", "parse_and_dispatch", "parse_config"]


class CliError(Exception):
    pass


class Inconclusive(Exception):
    pass


def parse_config(path: str) -> dict:
    """Flat ``key = value`` file with # comments; values stay strings."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, name: str, text: str, manifest: dict) -> None:
    """Write output + manifest into --output-dir, or print to stdout."""
    if args.output_dir:
        base = os.path.join(args.output_dir, name)
        _atomic_write(base, text)
        _atomic_write(base + ".manifest.json", json.dumps(manifest, indent=2) + "\n")
        if not args.quiet:
            print(f"wrote {base}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def _manifest(args, config: dict, started: float) -> dict:
    return {
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "wall_time_s": round(time.monotonic() - started, 3),
        "version": __version__,
    }


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(args):
    started = time.monotonic()
    grid = GridSpec(args.T, args.n, args.t if args.t else args.T)
    sampler = sample_fft if args.method == "fft" else sample_exact
    path = sampler(args.H, grid, args.seed, args.components)
    buf = io.StringIO()
    path_to_csv(path, buf)
    cfg = {"H": args.H, "n": args.n, "T": args.T, "t": grid.t_end,
           "components": args.components, "method": args.method}
    _emit(args, "path.csv", buf.getvalue(), _manifest(args, cfg, started))
    return 0


def _cmd_localtime(args):
    started = time.monotonic()
    levels = [float(x) for x in args.levels.split(",")]
    grid = GridSpec(args.t, args.n, args.t)
    eps = args.eps if args.eps else default_bin_width(args.H, args.n)
    batch = sample_fft_batch(args.H, grid, args.seed, args.replicates, 1)
    h = as_hurst(args.H)
    rows = []
    for a in levels:
        vals = np.empty(args.replicates)
        for r in range(args.replicates):
            path = FbmPath(h, grid, batch[r])
            if args.estimator == "sign":
                vals[r] = sign_change_estimator(path, a, grid)
            else:
                vals[r] = binning_estimator(path, a, eps)
        se = vals.std(ddof=1) / np.sqrt(args.replicates) if args.replicates > 1 else 0.0
        rows.append((a, float(vals.mean()), float(se), args.estimator,
                     args.n, args.H, args.t))
    cfg = {"H": args.H, "n": args.n, "t": args.t, "levels": args.levels,
           "estimator": args.estimator, "eps": eps, "replicates": args.replicates}
    text = _csv(["a", "estimate", "stderr", "estimator", "n", "H", "t"], rows)
    _emit(args, "localtime.csv", text, _manifest(args, cfg, started))
    return 0


_RATE_KEYS = {"H", "n_values", "t", "level", "replicates", "fine_factor",
              "reference", "pair", "seed"}


def _cmd_rate(args):
    started = time.monotonic()
    cfg = parse_config(args.config) if args.config else {}
    unknown = sorted(set(cfg) - _RATE_KEYS)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    h = float(cfg.get("H", 0.75))
    n_values = tuple(int(x) for x in cfg.get("n_values", "64,128,256,512,1024").split(","))
    level = float(cfg.get("level", 0.0))
    pair = args.pair or cfg.get("pair", "11")
    i, j = int(pair[0]), int(pair[1])
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    reference = cfg.get(
        "reference", "fine_sign_change" if i == j else "fine_riemann")
    plan = ExperimentPlan(
        hurst=h, n_values=n_values,
        integrand=SignedMeasure(((level, 0.5),), 0.5),
        component_pair=(i, j), t=float(cfg.get("t", 1.0)),
        replicates=int(cfg.get("replicates", 0)),
        master_seed=seed, fine_factor=int(cfg.get("fine_factor", 0)),
        reference_kind=reference,
    )
    report = run_rate_experiment(plan, threads=args.threads)
    rows = [(r["H"], r["n"], r["l2_error"], r["stderr"], r["replicates"],
             r["slope"], r["half_width"], r["pass"]) for r in report.rows()]
    text = _csv(["H", "n", "l2_error", "stderr", "replicates", "slope",
                 "half_width", "pass"], rows)
    cfg_echo = {"H": h, "n_values": ",".join(map(str, n_values)), "level": level,
                "pair": pair, "seed": seed, "reference": reference,
                "replicates": report.replicates}
    _emit(args, "rate.csv", text, _manifest(args, cfg_echo, started))
    if report.unusable and len(report.unusable) == len(report.n_values):
        raise Inconclusive("all cells noise-dominated")
    return 0


def _cmd_verify_bounds(args):
    from . import bounds, covariance

    started = time.monotonic()
    h_grid = [float(x) for x in args.h_grid.split(",")] if args.h_grid else \
        [2.0**-k for k in range(3, 10)]
    rows = []
    inconclusive = False
    if args.suite == "cov":
        chk = covariance.covariance_increment_bound_check(
            args.H, args.samples, args.seed)
        rows.append(("increment_level_bound_violations", "", args.H,
                     chk["violations"]))
        fac = bounds.factorisation_scaling(args.H, h_grid)
        for h, t1 in zip(fac["h"], fac["theta1"]):
            rows.append(("theta1", h, args.H, t1))
        rows.append(("theta1_slope", "", args.H, fac["slope"]))
    elif args.suite == "decoupling":
        res = bounds.decoupling_scaling(
            "step2", args.H, h_grid, a=args.a, mc_samples=args.samples,
            seed=args.seed)
        for row in res["per_h"]:
            rows.append(("decoupling_discrepancy", row["h"], args.H,
                         row["discrepancy"]))
        rows.append(("decoupling_slope", "", args.H, res["slope"]))
        rows.append(("decoupling_status", "", args.H, res["status"]))
        inconclusive = res["status"] == "INCONCLUSIVE"
        if res["status"] == "FAIL":
            raise CliError("decoupling scaling failed with adequate power")
    elif args.suite == "lemmas":
        for theta in (0.5, 1.0, 2.0):
            mc = bounds.lemma_a1_mc(theta, 10**6, args.seed)
            rows.append(("lemma_a1_mc", theta, args.H, mc))
            rows.append(("lemma_a1_exact", theta, args.H,
                         bounds.lemma_a1_oracle(theta)))
        chk = bounds.lemma_a2_check(1.0, 1.0, max(args.samples, 10**5), args.seed)
        rows.append(("lemma_a2_pass", "", args.H, chk["pass"]))
    else:
        raise CliError(f"unknown suite {args.suite!r}")
    text = _csv(["check", "param_h", "H", "value"], rows)
    cfg = {"suite": args.suite, "H": args.H, "samples": args.samples,
           "seed": args.seed}
    _emit(args, f"bounds_{args.suite}.csv", text, _manifest(args, cfg, started))
    if inconclusive:
        raise Inconclusive("decoupling discrepancy below noise floor")
    return 0


def _cmd_oracle(args):
    from . import bounds

    if args.lemma == "a1":
        print(_fmt(bounds.lemma_a1_oracle(args.theta)))
    elif args.lemma == "moments":
        print(_fmt(moment_oracle(args.H, args.t, args.a, args.p)))
    else:
        raise CliError(f"unknown oracle {args.lemma!r}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fbmlab",
        description="fractional Brownian motion simulation, pathwise "
                    "integral discretisation errors and local times",
    )
    ap.add_argument("--quiet", action="store_true",
                    help="machine-readable stdout only")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker cap (results are independent of it); "
                         "FBMLAB_THREADS mirrors this flag")
    ap.add_argument("--output-dir", default=None,
                    help="write CSV + manifest here instead of stdout")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="sample an fBm path as CSV")
    sim.add_argument("--H", type=float, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--T", type=float, default=1.0)
    sim.add_argument("--t", type=float, default=None)
    sim.add_argument("--components", type=int, default=1, choices=(1, 2))
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--method", choices=("exact", "fft"), default="fft")
    sim.set_defaults(func=_cmd_simulate)

    lt = sub.add_parser("localtime", help="estimate local time over levels")
    lt.add_argument("--H", type=float, required=True)
    lt.add_argument("--n", type=int, required=True)
    lt.add_argument("--t", type=float, default=1.0)
    lt.add_argument("--levels", required=True)
    lt.add_argument("--estimator", choices=("bin", "sign"), default="sign")
    lt.add_argument("--eps", type=float, default=None)
    lt.add_argument("--replicates", type=int, default=100)
    lt.add_argument("--seed", type=int, default=0)
    lt.set_defaults(func=_cmd_localtime)

    rt = sub.add_parser("rate", help="discretisation-error rate experiment")
    rt.add_argument("--config", default=None)
    rt.add_argument("--seed", type=int, default=None)
    rt.add_argument("--pair", default=None, help="component pair, e.g. 11 or 12")
    rt.set_defaults(func=_cmd_rate)

    vb = sub.add_parser("verify-bounds", help="covariance/decoupling checks")
    vb.add_argument("--suite", choices=("cov", "decoupling", "lemmas"),
                    required=True)
    vb.add_argument("--H", type=float, default=0.75)
    vb.add_argument("--h-grid", default=None)
    vb.add_argument("--a", type=float, default=0.0)
    vb.add_argument("--samples", type=int, default=100_000)
    vb.add_argument("--seed", type=int, default=0)
    vb.set_defaults(func=_cmd_verify_bounds)

    orc = sub.add_parser("oracle", help="closed-form Gaussian oracles")
    orc.add_argument("--lemma", choices=("a1", "moments"), required=True)
    orc.add_argument("--theta", type=float, default=1.0)
    orc.add_argument("--H", type=float, default=0.75)
    orc.add_argument("--t", type=float, default=1.0)
    orc.add_argument("--a", type=float, default=0.0)
    orc.add_argument("--p", type=int, default=1, choices=(1, 2))
    orc.set_defaults(func=_cmd_oracle)
    return ap


def parse_and_dispatch(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    if args.threads is not None:
        args.threads = resolve_threads(args.threads)
    try:
        return args.func(args)
    except Inconclusive as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return 2
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(parse_and_dispatch())
