"""Command-line interface.

Subcommands: solve (one eigenvalue run or the small-problem oracle),
branches (tabulate g_i over a lam grid to CSV), cond (solve plus condition
numbers), generate (write a generated problem to Matrix Market files),
check (validate a problem source and summarize it).

Exit codes: 0 ok, 2 solver did not converge, 3 singular or degenerate
problem, 4 I/O or argument data failure, 5 size cap exceeded. All artifacts
of a run are written only after the computation finished, so a failed run
leaves no partial files; results.json isolates wall-clock data under
"timings" and is otherwise deterministic for a fixed config and seed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import delta, mmio, problems
from .core import attach_left_vectors, condition_numbers, residuals
from .errors import (AmbiguousBranch, ConvergenceFailure, DegenerateProjection,
                     DimensionMismatch, MepnlError, NoFiniteEigenvalue,
                     NonSimpleLambda, NonSimpleMu, ProblemIOError,
                     SingularJacobian, SingularOperator, SingularProblem,
                     TooLarge)
from .nep import NepView
from .pencil import eigenpairs_at
from .solvers import SolverConfig, augmented_newton, resinv

SCHEMA_VERSION = 1
# eigenvectors go into results.json only up to this order
VECTOR_LIMIT = 200

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_SINGULAR = 3
EXIT_IO = 4
EXIT_TOO_LARGE = 5

_SINGULAR_ERRORS = (
    SingularProblem, SingularJacobian, SingularOperator, DegenerateProjection,
    NonSimpleMu, NonSimpleLambda, AmbiguousBranch, NoFiniteEigenvalue,
)


def parse_complex(text) -> complex:
    """Accept 1.5, 1.5+2i, 1.5+2j, with optional whitespace."""
    try:
        return complex(str(text).strip().replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


def parse_grid(text) -> np.ndarray:
    """lo:step:hi, inclusive of hi up to half a step."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be lo:step:hi, got {text!r}")
    try:
        lo, step, hi = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric grid bound in {text!r}")
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"need lo <= hi and step > 0 in {text!r}")
    return np.arange(lo, hi + step / 2.0, step)


def _c2j(z):
    z = complex(z)
    return [z.real, z.imag]


@dataclasses.dataclass
class RunConfig:
    """Everything that determines a run; embedded verbatim in results.json."""

    command: str
    gen: str | None = None
    n: int | None = None
    m: int | None = None
    seed: int = 0
    solver: str = "newton"
    branch_ids: tuple = (0,)
    lambda0: complex | None = None
    sigma: complex | None = None
    tol: float = 1e-10
    maxit: int = 100
    grid: str | None = None
    out: str = "."
    matrix_files: tuple | None = None
    c_file: str | None = None
    x0_file: str | None = None

    def to_json(self):
        d = dataclasses.asdict(self)
        for key in ("lambda0", "sigma"):
            if d[key] is not None:
                d[key] = _c2j(d[key])
        d["branch_ids"] = list(self.branch_ids)
        if d["matrix_files"] is not None:
            d["matrix_files"] = list(d["matrix_files"])
        return d


def _build_problem(cfg: RunConfig):
    """Returns (problem, helmholtz discretization or None)."""
    if cfg.matrix_files is not None:
        return mmio.load_problem(cfg.matrix_files, cfg.c_file), None
    gen = cfg.gen or "random"
    if gen == "random":
        return problems.gen_random(cfg.n or 20, cfg.m or 4, cfg.seed), None
    if gen == "qep":
        rng = np.random.default_rng(cfg.seed)
        n = cfg.n or 20
        return problems.gen_qep(*(rng.standard_normal((n, n)) for _ in range(3))), None
    if gen == "sqrt":
        rng = np.random.default_rng(cfg.seed)
        n = cfg.n or 20
        prob, _ = problems.gen_sqrt_nep(*(rng.standard_normal((n, n)) for _ in range(3)))
        return prob, None
    if gen == "helmholtz":
        config = problems.HelmholtzConfig(n=cfg.n or 2000, m=cfg.m or 30)
        disc = problems.gen_helmholtz(config)
        return disc.problem, disc
    raise ProblemIOError(f"unknown generator {gen!r}")


def _quad_json(problem, quad: Quadruplet):
    rec = quad.residuals or residuals(problem, quad)
    out = {
        "lam": _c2j(quad.lam),
        "mu": _c2j(quad.mu),
        "res_a": rec.res_a,
        "res_b": rec.res_b,
        "c_normalized": bool(quad.c_normalized),
    }
    if problem.n <= VECTOR_LIMIT:
        out["x"] = [_c2j(v) for v in np.asarray(quad.x).reshape(-1)]
        out["y"] = [_c2j(v) for v in np.asarray(quad.y).reshape(-1)]
    else:
        out["vectors_omitted"] = True
    return out


def _trace_json(trace):
    return {
        "lam": [_c2j(z) for z in trace.lam],
        "mu": [_c2j(z) for z in trace.mu],
        "res_a": list(trace.res_a),
        "res_b": list(trace.res_b),
        "alpha": [_c2j(z) for z in trace.alpha],
        "iterations": trace.iterations,
        "termination": trace.termination,
    }


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_trace_csv(path, trace):
    with open(path, "w") as fh:
        fh.write("iteration,lam_re,lam_im,mu_re,mu_im,res_a,res_b,seconds\n")
        for k, lam, mu, ra, rb, sec in trace.rows():
            fh.write(
                f"{k},{float(lam.real)!r},{float(lam.imag)!r},"
                f"{float(mu.real)!r},{float(mu.imag)!r},"
                f"{float(ra)!r},{float(rb)!r},{float(sec)!r}\n"
            )


def _default_x0(cfg: RunConfig, n):
    if cfg.x0_file is not None:
        vec = mmio.read_matrix(cfg.x0_file)
        vec = (vec.toarray() if hasattr(vec, "toarray") else np.asarray(vec)).reshape(-1)
        if vec.size != n:
            raise DimensionMismatch(f"x0 has length {vec.size}, problem order is {n}")
        return vec.astype(np.complex128)
    return np.ones(n, dtype=np.complex128)


def _compute_solve(cfg: RunConfig):
    """Run the configured solver; nothing is written here.

    Returns (exit code, payload dict without timings, problem, quadruplets,
    trace or None).
    """
    problem, _ = _build_problem(cfg)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_json(),
        "problem": {"label": problem.label, "n": problem.n, "m": problem.m},
        "solver": cfg.solver,
    }
    trace = None
    code = EXIT_OK
    if cfg.solver == "delta":
        quads = delta.solve(problem)
        payload["converged"] = True
    else:
        nep = NepView(problem, branch_id=cfg.branch_ids[0])
        x0 = _default_x0(cfg, problem.n)
        lam0 = cfg.lambda0 if cfg.lambda0 is not None else 0.0
        solver_cfg = SolverConfig(tol=cfg.tol, maxit=cfg.maxit)
        if cfg.solver == "newton":
            quad, trace = augmented_newton(nep, lam0, x0, solver_cfg)
        else:
            solver_cfg.sigma = cfg.sigma if cfg.sigma is not None else lam0
            quad, trace = resinv(nep, x0, solver_cfg)
        quads = [quad]
        payload["trace"] = _trace_json(trace)
        payload["converged"] = trace.converged
        if not trace.converged:
            code = EXIT_NOT_CONVERGED
    payload["quadruplets"] = [_quad_json(problem, q) for q in quads]
    return code, payload, problem, quads, trace


def _write_artifacts(cfg, payload, trace, t_start):
    payload["timings"] = {"total_seconds": time.perf_counter() - t_start}
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "results.json"), payload)
    if trace is not None:
        _write_trace_csv(os.path.join(cfg.out, "trace.csv"), trace)


def cmd_solve(cfg: RunConfig) -> int:
    t_start = time.perf_counter()
    code, payload, _, _, trace = _compute_solve(cfg)
    _write_artifacts(cfg, payload, trace, t_start)
    n_quads = len(payload["quadruplets"])
    if payload["converged"]:
        print(f"converged: {n_quads} quadruplet(s) -> {cfg.out}/results.json")
    else:
        print(f"did not converge within {cfg.maxit} iterations "
              f"-> {cfg.out}/results.json")
    for q in payload["quadruplets"][:8]:
        lam, mu = q["lam"], q["mu"]
        print(f"  lam = {lam[0]:+.12e}{lam[1]:+.12e}i   "
              f"mu = {mu[0]:+.12e}{mu[1]:+.12e}i   resA = {q['res_a']:.2e}")
    if n_quads > 8:
        print(f"  ... {n_quads - 8} more")
    return code


def cmd_cond(cfg: RunConfig) -> int:
    t_start = time.perf_counter()
    code, payload, problem, quads, trace = _compute_solve(cfg)
    reports = []
    for quad in quads:
        quad = attach_left_vectors(problem, quad, seed=cfg.seed)
        rep = condition_numbers(problem, quad)
        reports.append({
            "lam": _c2j(quad.lam),
            "kappa_a": rep.kappa_a,
            "kappa_g_b": rep.kappa_g_b,
            "kappa_g_lambda": rep.kappa_g_lambda,
            "kappa_total": rep.kappa_total,
            "det_c0": _c2j(rep.det_c0),
            "backward_lambda_bound": rep.backward_lambda_bound,
            "theta2_absolute": rep.theta2_absolute,
            "theta2_relative": rep.theta2_relative,
        })
    payload["condition_reports"] = reports
    _write_artifacts(cfg, payload, trace, t_start)
    for rep in reports:
        lam = rep["lam"]
        print(f"lam = {lam[0]:+.6e}{lam[1]:+.6e}i   kappa_total = "
              f"{rep['kappa_total']:.3e}   |det C0| = "
              f"{abs(complex(*rep['det_c0'])):.3e}")
    return code


def cmd_branches(cfg: RunConfig) -> int:
    t_start = time.perf_counter()
    problem, _ = _build_problem(cfg)
    if cfg.grid is None:
        raise ProblemIOError("branches requires --grid lo:step:hi")
    grid = parse_grid(cfg.grid)
    table = problems.tabulate_branches(problem, grid, cfg.branch_ids)
    intervals = {
        b: problems.flag_singularities(table, b) for b in cfg.branch_ids
    }
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_json(),
        "problem": {"label": problem.label, "n": problem.n, "m": problem.m},
        "branches": {
            "branch_ids": list(cfg.branch_ids),
            "points": int(grid.size),
            "gaps": [
                {"index": int(i), "branch": int(b), "reason": reason}
                for i, b, reason in table.gaps
            ],
            "singular_intervals": {
                str(b): [
                    {"lo": iv.lo, "hi": iv.hi, "kind": iv.kind}
                    for iv in ivs
                ]
                for b, ivs in intervals.items()
            },
        },
    }
    payload["timings"] = {"total_seconds": time.perf_counter() - t_start}
    flagged_union = [iv for ivs in intervals.values() for iv in ivs]
    os.makedirs(cfg.out, exist_ok=True)
    csv_path = os.path.join(cfg.out, "branches.csv")
    with open(csv_path, "w") as fh:
        head = ",".join(
            f"g{b}_re,g{b}_im" for b in cfg.branch_ids
        )
        fh.write(f"lam,{head},flagged\n")
        for i in range(grid.size):
            lam = table.grid[i]
            cells = []
            for j in range(len(cfg.branch_ids)):
                v = table.values[i, j]
                cells.append(f"{float(v.real)!r},{float(v.imag)!r}")
            hit = any(iv.contains(lam) for iv in flagged_union)
            fh.write(f"{float(lam.real)!r},{','.join(cells)},{int(hit)}\n")
    _write_json(os.path.join(cfg.out, "results.json"), payload)
    n_flag = sum(len(v) for v in intervals.values())
    print(f"tabulated {grid.size} points, {len(table.gaps)} gap(s), "
          f"{n_flag} singular interval(s) -> {csv_path}")
    return EXIT_OK


def cmd_generate(cfg: RunConfig) -> int:
    problem, _ = _build_problem(cfg)
    written = mmio.save_problem(problem, cfg.out)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_json(),
        "problem": {"label": problem.label, "n": problem.n, "m": problem.m},
        "written": {k: os.path.basename(v) for k, v in written.items()},
        "timings": {},
    }
    _write_json(os.path.join(cfg.out, "results.json"), payload)
    print(f"wrote {', '.join(sorted(written))} to {cfg.out}")
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    problem, _ = _build_problem(cfg)
    points, n_inf = eigenpairs_at(problem, 0.0, include_infinite=True)
    cap = delta.size_cap()
    print(f"label: {problem.label}")
    print(f"orders: n={problem.n} ({'sparse' if problem.is_sparse else 'dense'}), "
          f"m={problem.m}")
    print(f"branches at lam=0: {len(points)} finite, {n_inf} infinite")
    for p in points:
        print(f"  branch {p.branch_id}: mu = {p.mu:+.6e}"
              + ("  [c-degenerate]" if p.c_degenerate else ""))
    ok = problem.n * problem.m <= cap
    print(f"direct oracle: n*m = {problem.n * problem.m} "
          f"{'<=' if ok else '>'} cap {cap}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("--gen", choices=("random", "qep", "sqrt", "helmholtz"),
                   help="problem generator (alternative to --matrix-files)")
    p.add_argument("--n", type=int, help="large equation order")
    p.add_argument("--m", type=int, help="small equation order")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--matrix-files", metavar="A1,A2,A3,B1,B2,B3",
                   help="six Matrix Market files, comma separated")
    p.add_argument("--c-file", help="Matrix Market file with the c vector")
    p.add_argument("--out", default=".", help="output directory")


def _add_solver(p):
    p.add_argument("--solver", choices=("newton", "resinv", "delta"),
                   default="newton")
    p.add_argument("--branch", default="0",
                   help="branch id (comma separated for several)")
    p.add_argument("--lambda0", type=parse_complex, help="start value, e.g. 0.15+0.1i")
    p.add_argument("--sigma", type=parse_complex, help="resinv shift (default lambda0)")
    p.add_argument("--x0-file", help="Matrix Market vector to start from")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--maxit", type=int, default=100)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mepnl",
        description="Two-parameter eigenvalue problems via branch nonlinearization",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    ps = sub.add_parser("solve", help="run one solver on one problem")
    _add_common(ps)
    _add_solver(ps)
    pc = sub.add_parser("cond", help="solve, then condition numbers per quadruplet")
    _add_common(pc)
    _add_solver(pc)
    pb = sub.add_parser("branches", help="tabulate branch values over a lam grid")
    _add_common(pb)
    pb.add_argument("--branch", default="0")
    pb.add_argument("--grid", required=True, metavar="lo:step:hi")
    pg = sub.add_parser("generate", help="write a generated problem to --out")
    _add_common(pg)
    pk = sub.add_parser("check", help="validate a problem source and summarize")
    _add_common(pk)
    return ap


def _to_config(args) -> RunConfig:
    branch_ids = (0,)
    if getattr(args, "branch", None) is not None:
        try:
            branch_ids = tuple(int(tok) for tok in str(args.branch).split(","))
        except ValueError:
            raise ProblemIOError(f"bad --branch value {args.branch!r}")
    matrix_files = None
    if getattr(args, "matrix_files", None):
        matrix_files = tuple(tok.strip() for tok in args.matrix_files.split(","))
    return RunConfig(
        command=args.command,
        gen=getattr(args, "gen", None),
        n=getattr(args, "n", None),
        m=getattr(args, "m", None),
        seed=args.seed,
        solver=getattr(args, "solver", "newton"),
        branch_ids=branch_ids,
        lambda0=getattr(args, "lambda0", None),
        sigma=getattr(args, "sigma", None),
        tol=getattr(args, "tol", 1e-10),
        maxit=getattr(args, "maxit", 100),
        grid=getattr(args, "grid", None),
        out=args.out,
        matrix_files=matrix_files,
        c_file=getattr(args, "c_file", None),
        x0_file=getattr(args, "x0_file", None),
    )


COMMANDS = {
    "solve": cmd_solve,
    "cond": cmd_cond,
    "branches": cmd_branches,
    "generate": cmd_generate,
    "check": cmd_check,
}


# options whose values may start with a dash (negative bounds, complex parts)
_DASH_VALUE_OPTS = ("--grid", "--lambda0", "--sigma")


def _join_dash_values(argv):
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _DASH_VALUE_OPTS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(_join_dash_values(argv))
    cfg = _to_config(args)
    try:
        return COMMANDS[cfg.command](cfg)
    except TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except _SINGULAR_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except ConvergenceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ProblemIOError, DimensionMismatch, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MepnlError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
