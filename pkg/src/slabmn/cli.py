"""Command-line front end.

    slabmn run --model hfmn --n 8 --problem plane-source --cells 600 -o out.csv
    slabmn convergence --problem plane-source --models mn,hfmn --n-list 2,4,8
    slabmn timing --model pmmn --n-list 4,8,16,32,64
    slabmn reference --problem source-beam --cells 1920

Options may also come from a ``key=value`` file given with ``--config``;
command-line flags win.  ``SLABMN_THREADS`` sets the default thread count.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from .entropy_solver import NewtonConfig
from .fv_scheme import MODELS, Scheme, SchemeConfig, SchemeError, build_model
from .problems import PROBLEMS, ProblemConfigError, get_problem
from .realizability import LimiterConfig
from .reference_sn import DEFAULT_M, REFINEMENT, error_norms, reference_density

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_BOOL_FLAGS = {"no-reconstruct", "half-space", "characteristic-limiter", "timing"}


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def read_config_file(path) -> list[str]:
    """Translate ``key=value`` lines into argv tokens (placed before real flags)."""
    argv = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line without '=': {raw!r}")
        key = key.strip().replace("_", "-")
        value = value.strip()
        if key in _BOOL_FLAGS:
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(f"--{key}")
            continue
        argv += [f"--{key}", value]
    return argv


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", default="plane-source", choices=sorted(PROBLEMS))
    p.add_argument("--cells", type=int, default=None, help="cell count J")
    p.add_argument("--quad-order", type=int, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--eps-R", dest="eps_R", type=float, default=1e-11)
    p.add_argument("--eps-tilde", type=float, default=1e-11)
    p.add_argument("--eps-gamma", type=float, default=1e-2)
    p.add_argument("--tau", type=float, default=1e-9)
    p.add_argument("--k0", type=int, default=500)
    p.add_argument("--k-max", type=int, default=1000)
    p.add_argument("--cfl-safety", type=float, default=0.99)
    p.add_argument("--no-reconstruct", action="store_true", help="first-order scheme")
    p.add_argument("--half-space", action="store_true", help="facet limiter for full bases, n <= 3")
    p.add_argument("--characteristic-limiter", action="store_true")
    p.add_argument("--threads", type=int, default=int(os.environ.get("SLABMN_THREADS", "1")))
    p.add_argument("--config", default=None, help="key=value file; flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slabmn", description="Slab-geometry moment models")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one simulation, CSV output")
    r.add_argument("--model", required=True, choices=sorted(MODELS))
    r.add_argument("--n", type=int, required=True, help="moment count")
    r.add_argument("-o", "--output", default=None, help="CSV path (stdout if omitted)")
    r.add_argument("--diagnostics", default=None, help="sidecar path (default: OUTPUT.diag)")
    _add_common(r)

    c = sub.add_parser("convergence", help="errors against the discrete-ordinates oracle")
    c.add_argument("--models", type=_str_list, default=["mn", "hfmn", "pmmn"])
    c.add_argument("--n-list", type=_int_list, default=[2, 4, 8])
    c.add_argument("--ordinates", type=int, default=DEFAULT_M)
    c.add_argument("--ref-cells", type=int, default=None, help=f"default {REFINEMENT} x cells")
    c.add_argument("--cache-dir", default=None)
    c.add_argument("--timing", action="store_true", help="wall time as the minimum of 3 runs")
    c.add_argument("-o", "--output", default=None)
    _add_common(c)

    t = sub.add_parser("timing", help="wall time versus moment count")
    t.add_argument("--model", required=True, choices=sorted(MODELS))
    t.add_argument("--n-list", type=_int_list, required=True)
    t.add_argument("--repeats", type=int, default=3)
    t.add_argument("-o", "--output", default=None)
    _add_common(t)

    f = sub.add_parser("reference", help="compute and cache a discrete-ordinates profile")
    f.add_argument("--ordinates", type=int, default=DEFAULT_M)
    f.add_argument("--cache-dir", default=None)
    _add_common(f)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    config = pre.parse_known_args(argv[1:])[0].config
    if config and argv:
        try:
            extra = read_config_file(config)
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
        argv = argv[:1] + extra + argv[1:]
    return parser.parse_args(argv)


def scheme_config(args) -> SchemeConfig:
    newton = NewtonConfig(k0=args.k0, k_max=args.k_max, eps_gamma=args.eps_gamma, tau=args.tau)
    return SchemeConfig(
        newton=newton,
        limiter=LimiterConfig(eps_R=args.eps_R, eps_tilde=args.eps_tilde),
        cfl_safety=args.cfl_safety,
        reconstruct=not args.no_reconstruct,
        half_space=args.half_space,
        characteristic_limiter=args.characteristic_limiter,
        threads=max(1, args.threads),
    )


def default_cells(problem: str) -> int:
    return 240 if problem == "source-beam" else 600


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_run_csv(fh, z, U, rho) -> None:
    n = U.shape[1]
    fh.write(",".join(["z", "rho"] + [f"u{i}" for i in range(n)]) + "\n")
    for j in range(len(z)):
        fh.write(",".join([_fmt(z[j]), _fmt(rho[j])] + [_fmt(v) for v in U[j]]) + "\n")


def write_kv(path, data: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in data.items():
            fh.write(f"{k}={v}\n")


def simulate_once(args, model_name: str, n: int, t_end=None):
    problem = get_problem(args.problem)
    J = args.cells or default_cells(args.problem)
    model = build_model(model_name, n, args.quad_order, problem.name)
    scheme = Scheme(problem, model, problem.grid(J), scheme_config(args))
    field = scheme.run(args.t_end if t_end is None else t_end)
    return scheme, field


def cmd_run(args) -> int:
    try:
        scheme, field = simulate_once(args, args.model, args.n)
    except SchemeError as exc:
        print(f"fatal solver error: {exc} (cell {exc.cell})", file=sys.stderr)
        if exc.snapshot is not None and args.output:
            np.savetxt(str(args.output) + ".snapshot", exc.snapshot, delimiter=",", fmt="%.17g")
        return EXIT_SOLVER
    rho = scheme.density(field)
    z = scheme.grid.centers
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            write_run_csv(fh, z, field.U, rho)
        diag_path = args.diagnostics or str(args.output) + ".diag"
    else:
        write_run_csv(sys.stdout, z, field.U, rho)
        diag_path = args.diagnostics
    if diag_path:
        info = {"model": args.model, "n": args.n, "problem": args.problem,
                "cells": scheme.grid.J, "quad_order": scheme.model.nb.rule.order}
        info.update(scheme.diag.as_dict())
        write_kv(diag_path, info)
    return EXIT_OK


def cmd_convergence(args) -> int:
    problem = get_problem(args.problem)
    J = args.cells or default_cells(args.problem)
    J_ref = args.ref_cells or REFINEMENT * J
    ref = reference_density(problem, J_ref, args.ordinates, args.t_end, args.cache_dir)
    length = problem.domain[1] - problem.domain[0]
    rows = []
    for model in args.models:
        for n in args.n_list:
            times = []
            for _ in range(3 if args.timing else 1):
                start = time.perf_counter()
                try:
                    scheme, field = simulate_once(args, model, n)
                except SchemeError as exc:
                    print(f"fatal solver error in {model} n={n}: {exc}", file=sys.stderr)
                    return EXIT_SOLVER
                times.append(time.perf_counter() - start)
            L1, Linf = error_norms(scheme.density(field), ref, length)
            rows.append((model, n, L1, Linf, min(times)))
    out = open(args.output, "w", encoding="utf-8", newline="\n") if args.output else sys.stdout
    try:
        out.write("model,n,L1,Linf,wall_time\n")
        for m, n, a, b, t in rows:
            out.write(f"{m},{n},{_fmt(a)},{_fmt(b)},{_fmt(t)}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def fit_exponent(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def cmd_timing(args) -> int:
    rows = []
    for n in args.n_list:
        best = np.inf
        for _ in range(args.repeats):
            start = time.perf_counter()
            simulate_once(args, args.model, n)
            best = min(best, time.perf_counter() - start)
        rows.append((n, best))
    out = open(args.output, "w", encoding="utf-8", newline="\n") if args.output else sys.stdout
    try:
        out.write("model,n,wall_time\n")
        for n, t in rows:
            out.write(f"{args.model},{n},{_fmt(t)}\n")
        if len(rows) > 1:
            out.write(f"# exponent={fit_exponent(*zip(*rows)):.3f}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_reference(args) -> int:
    from .reference_sn import cache_path, default_cache_dir

    problem = get_problem(args.problem)
    J = args.cells or REFINEMENT * default_cells(args.problem)
    t_end = problem.t_end if args.t_end is None else args.t_end
    reference_density(problem, J, args.ordinates, t_end, args.cache_dir)
    cache_dir = default_cache_dir() if args.cache_dir is None else args.cache_dir
    print(cache_path(cache_dir, problem.name, args.ordinates, J, t_end))
    return EXIT_OK


def main(argv=None) -> int:
    args = parse_args(argv)
    handlers = {"run": cmd_run, "convergence": cmd_convergence, "timing": cmd_timing,
                "reference": cmd_reference}
    try:
        return handlers[args.command](args)
    except (ProblemConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
