"""Command-line front end.

Subcommand groups mirror the library: params (build/validate/convert
families), flow (kernel rows, flow-property residuals, particle paths),
chain (simulate/rescale/sticky-bm), halfplane (occupation curve,
simulation, exits), verify (acceptance suite and individual experiments).

Common flags (--seed, --replicas, --parallelism, --out, --format,
--config) may sit after any subcommand; --config names a JSON file whose
keys mirror the flags, and explicit flags override it.  The default seed
comes from STICKYFLOW_SEED (else 0) — randomness never flows from system
entropy silently.  Exit codes: 2 for usage/validation errors, 1 for a
failed verify gate, 0 otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import acceptance, chain, halfplane, latticeflow, verify
from .params import (
    AtomicMeasure,
    PFamily,
    ThetaFamily,
    drift_transform,
    gauge_shift,
    p_from_mu,
    p_n_from_theta,
    theta_from_nu,
    validate,
)
from .rng import Stream

CSV_SIGNATURE = "# stickyflow-csv v1"


def parse_measure(text: str) -> AtomicMeasure:
    """Measures on the command line: 'x:w,...', 'endpoints', 'uniform:c'."""
    if text == "endpoints":
        return AtomicMeasure.endpoints()
    if text.startswith("uniform:"):
        return AtomicMeasure.uniform_lebesgue(float(text.split(":", 1)[1]))
    pairs = []
    for token in text.split(","):
        x, w = token.split(":")
        pairs.append((float(x), float(w)))
    return AtomicMeasure.from_pairs(pairs)


def parse_vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def write_output(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def emit_table(columns: list[str], rows, fmt: str, out: str | None) -> None:
    if fmt == "csv":
        lines = [CSV_SIGNATURE, ",".join(columns)]
        lines += [",".join(_format_cell(v) for v in row) for row in rows]
        write_output("\n".join(lines) + "\n", out)
    else:
        doc = {"columns": columns,
               "rows": [[_json_cell(v) for v in row] for row in rows]}
        write_output(json.dumps(doc, indent=2) + "\n", out)


def read_table(path: str) -> tuple[list[str], np.ndarray]:
    """Parse either output format back into (columns, value array)."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return doc["columns"], np.array(doc["rows"], dtype=float)
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    columns = lines[0].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return columns, rows


def path_rows(path: chain.JumpPath) -> list[list[float]]:
    rows = [[path.t0, *path.states[0].tolist()]]
    for k in range(path.n_jumps):
        rows.append([float(path.times[k]), *path.states[k + 1].tolist()])
    return rows


def _load_family(path: str):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") == "p":
        return PFamily.from_json_dict(doc)
    return ThetaFamily.from_json_dict(doc)


COMMON_FLAGS = ("seed", "replicas", "parallelism", "out", "format", "config")


def add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--replicas", type=int, default=None)
    parser.add_argument("--parallelism", type=int, default=None)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--format", choices=("csv", "json"), default=None)
    parser.add_argument("--config", type=str, default=None)


def resolve_common(args: argparse.Namespace) -> None:
    """Merge config-file values under explicit flags, then apply defaults."""
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        for key in COMMON_FLAGS:
            if getattr(args, key, None) is None and key in cfg:
                setattr(args, key, cfg[key])
    if args.seed is None:
        args.seed = int(os.environ.get("STICKYFLOW_SEED", "0"))
    if args.replicas is None:
        args.replicas = 1000
    if args.parallelism is None:
        args.parallelism = 1
    if args.format is None:
        args.format = "csv"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stickyflow",
        description="simulate sticky-coupled lattice flows and verify their "
                    "continuum formulas",
    )
    top = parser.add_subparsers(dest="group", required=True)

    # params
    params = top.add_parser("params", help="build/validate/convert families")
    sub = params.add_subparsers(dest="command", required=True)
    p = sub.add_parser("from-nu")
    p.add_argument("--atoms", required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--n-max", type=int, required=True)
    add_common(p)
    p = sub.add_parser("from-mu")
    p.add_argument("--atoms", required=True)
    p.add_argument("--n-max", type=int, required=True)
    add_common(p)
    p = sub.add_parser("p-n")
    p.add_argument("--theta", help="theta family JSON file")
    p.add_argument("--atoms", help="nu atoms (alternative to --theta)")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--n-max", type=int)
    p.add_argument("--n", type=int, required=True)
    add_common(p)
    p = sub.add_parser("gauge-shift")
    p.add_argument("--theta", required=True)
    p.add_argument("--alpha", type=float, required=True)
    add_common(p)
    p = sub.add_parser("drift-transform")
    p.add_argument("--theta", required=True)
    add_common(p)
    p = sub.add_parser("validate")
    p.add_argument("--family", required=True, help="family JSON file")
    add_common(p)

    # flow
    flow = top.add_parser("flow", help="lattice flow of kernels")
    sub = flow.add_subparsers(dest="command", required=True)
    p = sub.add_parser("kernel")
    p.add_argument("--mu", required=True)
    p.add_argument("--x0", type=int, default=0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--t-max", type=float, default=None)
    add_common(p)
    p = sub.add_parser("compose")
    p.add_argument("--mu", required=True)
    p.add_argument("--x0", type=int, default=0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--t-max", type=float, default=None)
    add_common(p)
    p = sub.add_parser("particles")
    p.add_argument("--mu", required=True)
    p.add_argument("--x0", required=True, help="comma-separated start sites")
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--t-max", type=float, default=None)
    add_common(p)

    # chain
    ch = top.add_parser("chain", help="N-point chain simulation")
    sub = ch.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate")
    p.add_argument("--mu", help="splitting law (builds p from moments)")
    p.add_argument("--p", help="p family JSON file")
    p.add_argument("--x0", required=True)
    p.add_argument("--horizon", type=float, required=True)
    add_common(p)
    p = sub.add_parser("rescale")
    p.add_argument("--path", required=True, help="CSV/JSON path file")
    p.add_argument("--n", type=int, required=True)
    add_common(p)
    p = sub.add_parser("sticky-bm")
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--y0", type=float, default=0.0)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    add_common(p)

    # halfplane
    hp = top.add_parser("halfplane", help="sticky half-plane diffusion")
    sub = hp.add_subparsers(dest="command", required=True)
    p = sub.add_parser("f")
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--t-max", type=float, default=2.0)
    p.add_argument("--points", type=int, default=51)
    add_common(p)
    p = sub.add_parser("simulate")
    p.add_argument("--a0", type=float, default=1.0)
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--y", type=float, default=0.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--horizon", type=float, required=True)
    add_common(p)
    p = sub.add_parser("exit")
    p.add_argument("--a0", type=float, default=1.0)
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, default=0.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--triangle", action="store_true")
    p.add_argument("--phi1", type=float, default=None)
    p.add_argument("--phi2", type=float, default=None)
    add_common(p)

    # verify
    vf = top.add_parser("verify", help="statistical verification suite")
    sub = vf.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run")
    p.add_argument("--suite", default="acceptance")
    p.add_argument("--names", default=None,
                   help="comma-separated criterion subset, e.g. A1,A5")
    add_common(p)
    p = sub.add_parser("exit-stats")
    p.add_argument("--nu", required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--n-dim", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    add_common(p)
    p = sub.add_parser("moments")
    p.add_argument("--theta11", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tol-t", type=float, default=0.003)
    p.add_argument("--tol-t2", type=float, default=0.0008)
    add_common(p)
    p = sub.add_parser("equivalence")
    p.add_argument("--mu", required=True)
    p.add_argument("--n-dim", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    add_common(p)
    return parser


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _emit_json(doc: dict, out: str | None) -> None:
    write_output(json.dumps(doc, indent=2, default=_json_default) + "\n", out)


def _cmd_params(args) -> int:
    if args.command == "from-nu":
        fam = theta_from_nu(parse_measure(args.atoms), args.beta, args.n_max)
        _emit_json(fam.to_json_dict(), args.out)
    elif args.command == "from-mu":
        fam = p_from_mu(parse_measure(args.atoms), args.n_max)
        _emit_json(fam.to_json_dict(), args.out)
    elif args.command == "p-n":
        if args.theta:
            theta = _load_family(args.theta)
        else:
            if args.n_max is None:
                raise ValueError("p-n needs --theta or both --atoms and --n-max")
            theta = theta_from_nu(parse_measure(args.atoms), args.beta, args.n_max)
        _emit_json(p_n_from_theta(theta, args.n).to_json_dict(), args.out)
    elif args.command == "gauge-shift":
        _emit_json(gauge_shift(_load_family(args.theta), args.alpha).to_json_dict(),
                   args.out)
    elif args.command == "drift-transform":
        _emit_json(drift_transform(_load_family(args.theta)).to_json_dict(),
                   args.out)
    elif args.command == "validate":
        fam = _load_family(args.family)
        report = [
            {"kind": v.kind, "k": v.k, "l": v.l, "residual": v.residual}
            for v in validate(fam)
        ]
        _emit_json({"violations": report, "valid": not report}, args.out)
    return 0


def _cmd_flow(args) -> int:
    mu = parse_measure(args.mu)
    if args.command == "kernel":
        t_max = args.t_max if args.t_max is not None else args.t
        env = latticeflow.build_environment(args.seed, mu, t_max)
        row = latticeflow.propagate_kernel(env, args.x0, args.s, args.t).trimmed()
        emit_table(["site", "weight"],
                   [[s, w] for s, w in row.as_dict().items()],
                   args.format, args.out)
    elif args.command == "compose":
        t_max = args.t_max if args.t_max is not None else args.u
        env = latticeflow.build_environment(args.seed, mu, t_max)
        residual = latticeflow.compose_check(env, args.x0, args.s, args.t, args.u)
        emit_table(["residual"], [[residual]], args.format, args.out)
    elif args.command == "particles":
        t_max = args.t_max if args.t_max is not None else args.t
        env = latticeflow.build_environment(args.seed, mu, t_max)
        x0 = [int(v) for v in args.x0.split(",")]
        paths = latticeflow.sample_particles(env, x0, args.s, args.t,
                                             Stream(args.seed).spawn())
        merged = sorted({float(t) for p in paths for t in p.times} | {args.s})
        cols = ["time"] + [f"x_{i+1}" for i in range(len(paths))]
        rows = [[t, *[int(p.value_at(t)[0]) for p in paths]] for t in merged]
        emit_table(cols, rows, args.format, args.out)
    return 0


def _cmd_chain(args) -> int:
    if args.command == "simulate":
        x0 = np.array([int(v) for v in args.x0.split(",")], dtype=np.int64)
        if args.p:
            p = _load_family(args.p)
        elif args.mu:
            p = p_from_mu(parse_measure(args.mu), len(x0))
        else:
            raise ValueError("chain simulate needs --mu or --p")
        spec = chain.ChainSpec(p, len(x0), x0, args.horizon)
        path = chain.simulate_chain(spec, Stream(args.seed))
        cols = ["time"] + [f"x_{i+1}" for i in range(len(x0))]
        emit_table(cols, path_rows(path), args.format, args.out)
    elif args.command == "rescale":
        cols, rows = read_table(args.path)
        times = rows[:, 0]
        states = rows[:, 1:]
        path = chain.JumpPath(times[0], times[1:], states, times[-1])
        scaled = chain.rescale(path, args.n)
        emit_table(cols, path_rows(scaled), args.format, args.out)
    elif args.command == "sticky-bm":
        path = chain.sample_sticky_bm(args.theta0, args.y0, args.horizon,
                                      args.n, Stream(args.seed))
        emit_table(["time", "eta"], path_rows(path), args.format, args.out)
    return 0


def _cmd_halfplane(args) -> int:
    if args.command == "f":
        ts = np.linspace(0.0, args.t_max, args.points)
        rows = [[t, halfplane.occupation_probability(args.theta0, t)] for t in ts]
        emit_table(["t", "f"], rows, args.format, args.out)
        return 0
    spec = halfplane.HalfPlaneSpec(args.a0, args.theta0, (args.x, args.y), args.n)
    if args.command == "simulate":
        path = halfplane.simulate_halfplane(spec, args.horizon, Stream(args.seed))
        emit_table(["time", "xi", "eta"], path_rows(path), args.format, args.out)
    elif args.command == "exit":
        rows = []
        if args.triangle:
            if args.phi1 is None or args.phi2 is None:
                raise ValueError("triangle exits need --phi1 and --phi2")
            tri = halfplane.TriangleSpec(args.epsilon, args.phi1, args.phi2)
            xs, ys, flags, sides, capped = halfplane.triangle_exit_batch(
                spec, tri, args.seed, args.replicas)
        else:
            strip = halfplane.StripSpec(args.epsilon)
            xs, ys, flags, capped = halfplane.strip_exit_batch(
                spec, strip, args.seed, args.replicas)
        if capped.any():
            raise RuntimeError("some replicas hit the event cap")
        for r in range(args.replicas):
            rows.append([r, xs[r], ys[r], bool(flags[r])])
        emit_table(["replica", "exit_x", "exit_y", "sticky_flag"], rows,
                   args.format, args.out)
    return 0


def _cmd_verify(args) -> int:
    if args.command == "run":
        if args.suite != "acceptance":
            raise ValueError(f"unknown suite {args.suite!r}")
        names = args.names.split(",") if args.names else None
        report = acceptance.run_suite(names, parallelism=args.parallelism)
        _emit_json(report, args.out)
        return 0 if report["passed"] else 1
    if args.command == "exit-stats":
        theta = theta_from_nu(parse_measure(args.nu), args.beta,
                              max(args.n_dim, 2))
        stats = verify.exit_experiment(theta, args.n_dim, args.epsilon, args.n,
                                       args.replicas, args.seed,
                                       args.parallelism)
        doc = {
            "epsilon": stats.epsilon,
            "n": stats.n,
            "replicas": stats.replicas,
            "seed": stats.master_seed,
            "failed_replicas": stats.failed_replicas,
            "cells": [
                {"up": list(v.up), "down": list(v.down), "count": int(c)}
                for v, c in zip(stats.cell_vectors, stats.cell_counts)
            ],
            "multi_value_count": stats.multi_count,
            "t_mean": stats.t_est.mean,
            "t_stderr": stats.t_est.stderr,
            "t2_mean": stats.t2_est.mean,
            "t2_stderr": stats.t2_est.stderr,
        }
        _emit_json(doc, args.out)
        return 0
    if args.command == "moments":
        rows = verify.moment_check_n2(args.theta11, args.epsilon, args.n,
                                      args.replicas, args.seed, args.tol_t,
                                      args.tol_t2, args.parallelism)
        doc = {"checks": [vars(r) for r in rows],
               "passed": all(r.passed for r in rows)}
        _emit_json(doc, args.out)
        return 0
    if args.command == "equivalence":
        report = verify.equivalence_test_prop82(parse_measure(args.mu),
                                                args.n_dim, args.t,
                                                args.replicas, args.seed,
                                                args.parallelism)
        _emit_json({"statistic": report.statistic, "dof": report.dof,
                    "p_value": report.p_value, "passed": report.passed},
                   args.out)
        return 0
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    resolve_common(args)
    handlers = {
        "params": _cmd_params,
        "flow": _cmd_flow,
        "chain": _cmd_chain,
        "halfplane": _cmd_halfplane,
        "verify": _cmd_verify,
    }
    try:
        return handlers[args.group](args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"stickyflow: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
