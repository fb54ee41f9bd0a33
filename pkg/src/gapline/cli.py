"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 property violation,
3 solver or optimizer non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import classes
from .errors import GaplineError, PropertyViolation, SolverError, ValidationError
from .gap import (
    crossing_points,
    fh_derivative,
    fundamental_gap,
    g_identity_sides,
    moment_bound_check,
    sign_pattern_violations,
    weighted_crossing_points,
)
from .optimize import (
    OptimizeOptions,
    Verdict,
    certify,
    mean_value,
    minimize_gap_over_convex,
    reduce_to_affine_potential,
    reduce_to_affine_weight,
    variation,
)
from .report import SOLVE_COLUMNS, SWEEP_COLUMNS, emit_report
from .sturm import DEFAULT_N_INTERIOR, DEFAULT_TOL, Grid, solve

log = logging.getLogger("gapline")

COMMANDS = (
    "solve",
    "gap",
    "fh-check",
    "crossings",
    "identity-check",
    "bound-check",
    "reduce",
    "optimize",
    "certify",
    "sweep",
    "lavine-audit",
)
MIN_GRID = 16
FH_REL_TOL = 1e-3
LAVINE_SLACK = 1e-3
GRID_ENV = "GAPLINE_GRID_SIZE"

EXIT_OK, EXIT_VALIDATION, EXIT_PROPERTY, EXIT_SOLVER = 0, 1, 2, 3


class NotConverged(SolverError):
    pass


@dataclass
class RunConfig:
    command: str
    potential_spec: dict = field(default_factory=lambda: {"type": "constant", "c": 0.0})
    weight_spec: dict = field(default_factory=lambda: {"type": "constant", "c": 1.0})
    grid_size: int = DEFAULT_N_INTERIOR
    tol: float = DEFAULT_TOL
    seed: int = 0
    out_path: str | None = None
    out_format: str = "json"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.grid_size < MIN_GRID:
            raise ValidationError(f"grid size must be at least {MIN_GRID}, got {self.grid_size}")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.out_format not in ("csv", "json"):
            raise ValidationError(f"unknown format {self.out_format!r}")

    @property
    def grid(self) -> Grid:
        return Grid(self.grid_size)

    def opt(self, name, default=None):
        value = self.options.get(name)
        return default if value is None else value

    def potential(self):
        spec = dict(self.potential_spec)
        if self.opt("M") is not None:
            spec.setdefault("M", self.opt("M"))
        return classes.from_spec(spec, "potential")

    def weight(self):
        return classes.from_spec(self.weight_spec, "weight")


def parse_range(text: str) -> list[float]:
    """'start:stop:step', stop included (up to rounding)."""
    try:
        start, stop, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise ValidationError(f"range must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ValidationError(f"empty or ill-formed range {text!r}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [float(f"{start + i * step:.12g}") for i in range(count)]


def _optimize_options(cfg: RunConfig, seed: int | None = None) -> OptimizeOptions:
    return OptimizeOptions(
        max_iters=int(cfg.opt("max_iters", 500)),
        step_init=float(cfg.opt("step_init", 1.0)),
        grad_tol=float(cfg.opt("grad_tol", 1e-6)),
        flatness_tol=float(cfg.opt("flatness_tol", 1e-3)),
        seed=cfg.seed if seed is None else seed,
        grid=cfg.grid,
        n_knots=int(cfg.opt("knots", 33)),
        tol=cfg.tol,
    )


def _cmd_solve(cfg: RunConfig):
    report = fundamental_gap(cfg.potential(), cfg.weight(), cfg.grid, cfg.tol, bool(cfg.opt("richardson", False)))
    return [report.row()], SOLVE_COLUMNS, None


def _cmd_gap(cfg: RunConfig):
    report = fundamental_gap(cfg.potential(), cfg.weight(), cfg.grid, cfg.tol, bool(cfg.opt("richardson", False)))
    if not report.gap > 0:
        raise PropertyViolation(f"non-positive gap {report.gap}")
    row = report.row()
    row.update(crossing_count=report.crossing_count, weighted_crossing_count=report.weighted_crossing_count)
    columns = SOLVE_COLUMNS + ["crossing_count", "weighted_crossing_count"]
    return [row], columns, {"diagnostics": report.diagnostics}


def _cmd_fh_check(cfg: RunConfig):
    V, w = cfg.potential(), cfg.weight()
    dV = classes.from_spec(cfg.opt("dV", {"type": "affine", "a": 1.0, "b": 0.0}))
    dw = classes.from_spec(cfg.opt("dw", {"type": "constant", "c": 0.0}))
    delta = float(cfg.opt("delta", 1e-4))
    grid = cfg.grid
    pairs = solve(V, w, grid, cfg.tol)
    plus = solve(V + delta * dV, w + delta * dw, grid, cfg.tol)
    minus = solve(V - delta * dV, w - delta * dw, grid, cfg.tol)
    rows = []
    for n in (1, 2):
        fh = fh_derivative(V, w, dV, dw, n, grid, pairs)
        fd = (plus[n - 1].lam - minus[n - 1].lam) / (2 * delta)
        rel = abs(fh - fd) / max(abs(fd), 1e-300)
        rows.append({"n": n, "fh": fh, "finite_difference": fd, "rel_error": rel})
    if any(r["rel_error"] >= FH_REL_TOL for r in rows):
        raise PropertyViolation("Hellmann-Feynman derivative disagrees with finite differences", rows)
    return rows, ["n", "fh", "finite_difference", "rel_error"], None


def _cmd_crossings(cfg: RunConfig):
    grid = cfg.grid
    p1, p2 = solve(cfg.potential(), cfg.weight(), grid, cfg.tol)
    rows = []
    for kind, c, diff in (
        ("plain", crossing_points(p1, p2), p2.values**2 - p1.values**2),
        ("weighted", weighted_crossing_points(p1, p2), p2.lam * p2.values**2 - p1.lam * p1.values**2),
    ):
        rows.append(
            {
                "kind": kind,
                "x_minus": c.x_minus,
                "x_plus": c.x_plus,
                "count": c.count,
                "merged": c.merged,
                "sign_violations": sign_pattern_violations(diff, grid, c),
            }
        )
    if any(r["sign_violations"] for r in rows):
        raise PropertyViolation("crossing sign pattern violated", rows)
    return rows, ["kind", "x_minus", "x_plus", "count", "merged", "sign_violations"], None


def _cmd_identity_check(cfg: RunConfig):
    V, w = cfg.potential(), cfg.weight()
    grid = cfg.grid
    pairs = solve(V, w, grid, cfg.tol)
    polys = cfg.opt("G", [[0.0, 1.0], [0.0, 0.0, 1.0]])
    rows = []
    for coeffs in polys:
        for pair in pairs:
            lhs, rhs = g_identity_sides(coeffs, pair, V, w, grid)
            rows.append({"G": list(coeffs), "n": pair.index, "lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)})
    return rows, ["G", "n", "lhs", "rhs", "residual"], None


def _cmd_bound_check(cfg: RunConfig):
    w = cfg.weight()
    p1, p2 = solve(cfg.potential(), w, cfg.grid, cfg.tol)
    lhs, rhs, ok = moment_bound_check(p1, p2, w)
    rows = [{"lhs": lhs, "rhs": rhs, "ok": ok}]
    if not ok:
        raise PropertyViolation("moment bound violated", rows)
    return rows, ["lhs", "rhs", "ok"], None


def _reduction_row(target, r):
    return {
        "target": target,
        "a": r.chord.tag.a,
        "b": r.chord.tag.b,
        "x_minus": r.points[0],
        "x_plus": r.points[1],
        "gap_original": r.gap_original,
        "gap_chord": r.gap_chord,
        "margin": r.margin,
        "holds": r.holds,
        "flags": list(r.flags),
    }


def _as_affine(f):
    if isinstance(f.tag, classes.Constant):
        return classes.affine(0.0, f.tag.c)
    return f


def _cmd_reduce(cfg: RunConfig):
    target = cfg.opt("target", "both")
    V, w = cfg.potential(), cfg.weight()
    rows = []
    if target in ("potential", "both"):
        r = reduce_to_affine_potential(V, w, cfg.grid)
        r.chord = _as_affine(r.chord)
        rows.append(_reduction_row("potential", r))
    if target in ("weight", "both"):
        r = reduce_to_affine_weight(V, w, cfg.grid)
        r.chord = _as_affine(r.chord)
        rows.append(_reduction_row("weight", r))
    columns = ["target", "a", "b", "x_minus", "x_plus", "gap_original", "gap_chord", "margin", "holds", "flags"]
    if not all(r["holds"] for r in rows):
        raise PropertyViolation("affine reduction increased the gap", rows, columns)
    return rows, columns, None


def _trace_row(trace):
    return {
        "final_gap": trace.final_gap,
        "variation": variation(trace.final),
        "mean": mean_value(trace.final),
        "converged": trace.converged,
        "iterations": len(trace.iterates) - 1,
    }


def _cmd_optimize(cfg: RunConfig):
    M = float(cfg.opt("M", 10.0))
    trace = minimize_gap_over_convex(cfg.weight(), M, _optimize_options(cfg))
    rows = [_trace_row(trace)]
    extra = {"final_knots": trace.final.knots, "final_values": trace.final.values, "gaps": trace.gaps}
    if not trace.converged:
        raise NotConverged("optimizer did not converge", rows, list(rows[0]), extra)
    return rows, list(rows[0]), extra


def _certificate_row(trace):
    cert = trace.certificate
    return {
        "m": cert.m,
        "p": cert.p,
        "threshold_5mpi": cert.threshold,
        "condition_holds": cert.condition_holds,
        "final_gap": trace.final_gap,
        "variation": cert.variation,
        "converged": trace.converged,
        "verdict": cert.verdict,
    }


def _cmd_certify(cfg: RunConfig):
    w = cfg.weight()
    if not isinstance(w.tag, classes.Affine):
        raise ValidationError("certify needs an affine weight {\"type\": \"affine\", \"a\": m, \"b\": p}")
    M = float(cfg.opt("M", 10.0))
    trace = certify(w, M, _optimize_options(cfg), starts=int(cfg.opt("starts", 1)))
    rows = [_certificate_row(trace)]
    columns = SWEEP_COLUMNS + ["verdict"]
    extra = {"final_knots": trace.final.knots, "final_values": trace.final.values}
    if not trace.converged:
        raise NotConverged("optimizer did not converge", rows, columns, extra)
    if trace.certificate.verdict == Verdict.NON_CONSTANT:
        raise PropertyViolation("minimizer is not constant although p > 5 m pi", rows, columns, extra)
    return rows, columns, extra


def _sweep_cell(args):
    m, p, M, opts = args
    w = classes.affine(m, p) if m != 0 else classes.constant(p)
    trace = minimize_gap_over_convex(w, M, opts)
    return {
        "m": m,
        "p": p,
        "threshold_5mpi": 5.0 * m * np.pi,
        "condition_holds": bool(m > 0 and p > 5.0 * m * np.pi),
        "final_gap": trace.final_gap,
        "variation": variation(trace.final),
        "converged": trace.converged,
    }


def _cmd_sweep(cfg: RunConfig):
    ms = parse_range(cfg.opt("m_range", "0:1:0.1"))
    ps = parse_range(cfg.opt("p_range", "0.5:25:0.5"))
    if min(ps) <= 0:
        raise ValidationError("p must be positive for a positive weight")
    M = float(cfg.opt("M", 10.0))
    opts = _optimize_options(cfg)
    cells = [(m, p, M, opts) for m in ms for p in ps]
    jobs = int(cfg.opt("jobs", os.cpu_count() or 1))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    rows.sort(key=lambda r: (r["m"], r["p"]))
    return rows, SWEEP_COLUMNS, None


def _cmd_lavine_audit(cfg: RunConfig):
    M = float(cfg.opt("M", 10.0))
    count = int(cfg.opt("count", 50))
    grid = cfg.grid
    one = classes.constant(1.0)
    rows = []
    for k in range(count):
        V = classes.sample_random_convex(cfg.seed + k, M, k_knots=int(cfg.opt("k_knots", 5)))
        p1, p2 = solve(V, one, grid, cfg.tol)
        g = p2.lam - p1.lam
        rows.append({"seed": cfg.seed + k, "gap": g, "ok": bool(g >= 3.0 - LAVINE_SLACK)})
    if not all(r["ok"] for r in rows):
        raise PropertyViolation("gap below the Lavine floor 3", rows, ["seed", "gap", "ok"])
    return rows, ["seed", "gap", "ok"], None


HANDLERS = {
    "solve": _cmd_solve,
    "gap": _cmd_gap,
    "fh-check": _cmd_fh_check,
    "crossings": _cmd_crossings,
    "identity-check": _cmd_identity_check,
    "bound-check": _cmd_bound_check,
    "reduce": _cmd_reduce,
    "optimize": _cmd_optimize,
    "certify": _cmd_certify,
    "sweep": _cmd_sweep,
    "lavine-audit": _cmd_lavine_audit,
}


def _emit_partial(cfg: RunConfig, exc: GaplineError):
    # failing pipelines attach (rows, columns, extra) so the report is still written
    if len(exc.args) >= 2 and isinstance(exc.args[1], list):
        rows = exc.args[1]
        columns = exc.args[2] if len(exc.args) > 2 else (list(rows[0]) if rows else [])
        extra = exc.args[3] if len(exc.args) > 3 else None
        emit_report(rows, cfg.out_format, cfg.out_path, columns, extra)


def run(cfg: RunConfig) -> int:
    try:
        rows, columns, extra = HANDLERS[cfg.command](cfg)
        emit_report(rows, cfg.out_format, cfg.out_path, columns, extra)
        return EXIT_OK
    except PropertyViolation as exc:
        _emit_partial(cfg, exc)
        print(f"gapline: property violation: {exc.args[0]}", file=sys.stderr)
        return EXIT_PROPERTY
    except ValidationError as exc:
        print(f"gapline: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        _emit_partial(cfg, exc)
        print(f"gapline: solver failure: {exc.args[0]}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"gapline: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_VALIDATION)


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None


def _default_grid() -> int:
    value = os.environ.get(GRID_ENV)
    if value is None:
        return DEFAULT_N_INTERIOR
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"{GRID_ENV} must be an integer, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gapline", description="Fundamental gap of -u'' + V u = lambda w u on [0, pi].")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--potential", type=_json_arg, default={"type": "constant", "c": 0.0},
                        help='potential spec, e.g. \'{"type":"affine","a":1,"b":0}\'')
    parser.add_argument("--weight", type=_json_arg, default={"type": "constant", "c": 1.0},
                        help='weight spec; affine m*x+p is {"type":"affine","a":m,"b":p}')
    parser.add_argument("--grid-size", type=int, default=None, help=f"interior nodes (env {GRID_ENV}, default 2000)")
    parser.add_argument("--tol", type=float, default=DEFAULT_TOL)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="output file (default stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (default: from --out suffix, else json)")
    parser.add_argument("--richardson", action="store_true", help="extrapolate eigenvalues from h and h/2")
    parser.add_argument("--M", type=float, default=None, help="upper bound of the convex class")
    parser.add_argument("--dV", type=_json_arg, default=None)
    parser.add_argument("--dw", type=_json_arg, default=None)
    parser.add_argument("--delta", type=float, default=None)
    parser.add_argument("--G", type=_json_arg, default=None, help="list of ascending coefficient lists")
    parser.add_argument("--target", choices=("potential", "weight", "both"), default=None)
    parser.add_argument("--knots", type=int, default=None)
    parser.add_argument("--max-iters", type=int, default=None)
    parser.add_argument("--grad-tol", type=float, default=None)
    parser.add_argument("--flatness-tol", type=float, default=None)
    parser.add_argument("--starts", type=int, default=None)
    parser.add_argument("--m-range", default=None)
    parser.add_argument("--p-range", default=None)
    parser.add_argument("--jobs", type=int, default=None)
    parser.add_argument("--count", type=int, default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    fmt = ns.format
    if fmt is None:
        fmt = "csv" if ns.out and ns.out.endswith(".csv") else "json"
    options = {
        name: getattr(ns, name)
        for name in (
            "richardson", "M", "dV", "dw", "delta", "G", "target", "knots", "max_iters",
            "grad_tol", "flatness_tol", "starts", "m_range", "p_range", "jobs", "count",
        )
    }
    return RunConfig(
        command=ns.command,
        potential_spec=ns.potential,
        weight_spec=ns.weight,
        grid_size=ns.grid_size if ns.grid_size is not None else _default_grid(),
        tol=ns.tol,
        seed=ns.seed,
        out_path=ns.out,
        out_format=fmt,
        options=options,
    )


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
    except ValidationError as exc:
        print(f"gapline: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
