"""Command-line entry point: ``pharmonic <subcommand> ...``.

Exit codes: 0 success, 1 a check failed, 2 invalid input or usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .comparison import Tolerances, compare
from .geometry import Euclidean, FlatTorus, GeometryError, Hyperbolic, Product, manifold_from_dict
from .graph import GraphLoadError, VertexMap, _read_json, load_vertex_map, p_energy, resolve_graph
from .jacobi import hessian_dist_sq_closed, random_case
from .parabolicity import build_knr_field, knr_limit_sweep, parabolicity_verdict
from .report import Check, dumps_line, emit_report, write_csv
from .solver import homotopy_class, lift_along_homotopy, minimize

logger = logging.getLogger("pharmonic")

HESSIAN_FLOOR = -1e-9
KNR_DIV_TOL = 1e-10


class InputError(Exception):
    """Bad user input: reported on stderr with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(2)


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, val in self.tolerances.items():
            if not (isinstance(val, (int, float)) and val > 0):
                raise InputError(f"tolerance {name} must be > 0, got {val!r}")

    def to_dict(self):
        return asdict(self)


# -- input helpers --------------------------------------------------------------

def _float_list(text: str, name: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def _load_json_arg(text: str):
    """Inline JSON or a path to a JSON file."""
    if text.lstrip().startswith(("{", "[")):
        return _read_json(text)
    try:
        with open(text, "rb") as fh:
            return _read_json(fh)
    except OSError as exc:
        raise InputError(f"cannot read {text!r}: {exc.strerror}") from None


def _load_map(path: str, graph):
    try:
        with open(path, "rb") as fh:
            return load_vertex_map(fh, graph)
    except OSError as exc:
        raise InputError(f"cannot read map file {path!r}: {exc.strerror}") from None


def _boundary_values(spec: str, n_vertices: int, dim: int):
    """Optional per-vertex ``value`` fields from a graph file (Dirichlet data)."""
    if spec.startswith("builtin:"):
        return None
    doc = _load_json_arg(spec)
    vals = [v.get("value") for v in doc.get("vertices", [])]
    if all(x is None for x in vals):
        return None
    out = np.full((n_vertices, dim), np.nan)
    for i, x in enumerate(vals):
        if x is not None:
            out[i] = np.atleast_1d(np.asarray(x, dtype=float))
    return out


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path!r}: {exc.strerror}") from None


# -- subcommands ----------------------------------------------------------------

def _initial_map(args, graph, target, rng) -> VertexMap:
    if args.init not in ("harmonic", "random"):
        m = _load_map(args.init, graph)
        if m.target != target:
            raise InputError("--init map has a different target than --target")
        return VertexMap(graph, target, m.values, args.p)
    dim = target.ambient_dim
    base = target.origin if isinstance(target, Hyperbolic) else target.project(np.zeros(dim))
    vals = np.tile(base, (graph.n_vertices, 1))
    given = _boundary_values(args.graph, graph.n_vertices, dim)
    if given is not None:
        known = ~np.isnan(given).any(axis=1)
        vals[known] = target.project(given[known])
    else:
        known = np.zeros(graph.n_vertices, bool)
    for q in np.flatnonzero(graph.boundary & ~known):
        vals[q] = target.random_point(rng)
    if args.init == "random":
        for q in np.flatnonzero(~graph.boundary & ~known):
            vals[q] = target.random_point(rng)
    m = VertexMap(graph, target, vals, 2.0)
    if args.init == "harmonic" and args.p != 2.0:
        m = minimize(m, args.bc, args.tol, args.max_iters).map
    return VertexMap(graph, target, m.values, args.p)


def cmd_solve(args) -> int:
    graph = resolve_graph(args.graph)
    target = manifold_from_dict(_load_json_arg(args.target))
    cfg = RunConfig(
        "solve",
        seed=args.seed,
        tolerances={"tol": args.tol},
        paths={"graph": args.graph, "init": args.init, "out": args.out, "trace": args.trace},
        params={"target": target.to_dict(), "p": args.p, "bc": args.bc, "max_iters": args.max_iters},
    )
    rng = np.random.default_rng(args.seed)
    start = _initial_map(args, graph, target, rng)
    out = minimize(start, args.bc, args.tol, args.max_iters)
    cls = homotopy_class(out.map)
    if cls != homotopy_class(start):
        raise GeometryError("homotopy class changed during descent")
    results = {
        "converged": out.converged,
        "iterations": out.iterations,
        "energy": p_energy(out.map),
        "residual": out.residual,
        "homotopy_class": cls.to_dict(),
    }
    if args.out:
        _write(args.out, dumps_line(out.map.to_dict(include_graph=True)) + "\n")
    if args.trace:
        rows = [{"iter": i, "E_p": e, "residual": r} for (i, e), (_, r) in zip(out.energy_trace, out.residual_trace)]
        _write(args.trace, write_csv(rows, ["iter", "E_p", "residual"]))
    checks = [Check("solver", "residual", out.residual, args.tol)]
    _write(args.report, emit_report("solve", cfg.to_dict(), results, checks))
    return 0 if out.converged else 1


def _pair_from_args(args):
    graph = resolve_graph(args.graph) if args.graph else None
    u = _load_map(args.u, graph)
    v = _load_map(args.v, graph if graph is not None else u.graph)
    return u, v


def cmd_verify_homotopy(args) -> int:
    u, v = _pair_from_args(args)
    tol = Tolerances(solver=args.solver_tol, energy=args.energy_tol, geodesic=args.geo_tol, parallel=args.parallel_tol)
    witness = "auto"
    if args.witness:
        witness = np.asarray(_load_json_arg(args.witness), dtype=int)
    cfg = RunConfig(
        "verify-homotopy",
        seed=args.seed,
        tolerances=tol.to_dict(),
        paths={"u": args.u, "v": args.v, "graph": args.graph, "witness": args.witness},
        params={"t_grid": args.t_grid, "bc": args.bc},
    )
    rep = compare(u, v, witness, args.t_grid, tol, args.bc)
    _write(args.out, emit_report("verify-homotopy", cfg.to_dict(), rep.to_dict(), rep.checks))
    if args.csv:
        rows = [
            {"t": float(t), "E_p": float(e), "residual": float(r)}
            for t, e, r in zip(rep.t_grid, rep.energies, rep.residuals)
        ]
        _write(args.csv, write_csv(rows, ["t", "E_p", "residual"]))
    return 0 if rep.passed else 1


def _hessian_manifold(args):
    if args.manifold == "euclidean":
        return Euclidean(args.dim)
    if args.manifold == "hyperbolic":
        return Hyperbolic(args.dim, args.kappa)
    if args.manifold == "flat_torus":
        return FlatTorus(tuple([1.0] * args.dim))
    return Product(Hyperbolic(args.dim, args.kappa), Euclidean(1))


def cmd_hessian_check(args) -> int:
    M = _hessian_manifold(args)
    rng = np.random.default_rng(args.seed)
    ps = [args.p] if args.p is not None else [2.0, 2.5, 3.0, 4.0]
    lines = []
    ok = True
    for i in range(args.samples):
        p = ps[i % len(ps)]
        a, b, X1, X2 = random_case(M, rng, args.scale)
        rep = hessian_dist_sq_closed(M, a, b, X1, X2, p)
        rec = {"sample": i, "manifold": M.to_dict(), "seed": args.seed, **rep.to_dict()}
        rec["nonnegative"] = rep.value >= HESSIAN_FLOOR
        ok &= rec["nonnegative"]
        lines.append(dumps_line(rec))
    _write(args.out, "".join(line + "\n" for line in lines))
    return 0 if ok else 1


def _id_list(text: str, graph) -> np.ndarray:
    lookup = {str(vid): i for i, vid in enumerate(graph.ids)}
    try:
        return np.array([lookup[x.strip()] for x in text.split(",") if x.strip()], dtype=int)
    except KeyError as exc:
        raise InputError(f"--K: unknown vertex id {exc.args[0]!r}") from None


def cmd_capacity(args) -> int:
    graph = resolve_graph(args.graph)
    K = graph.exhaustion[0] if args.K is None else _id_list(args.K, graph)
    levels = None if args.levels in (None, "all") else [int(x) for x in _float_list(args.levels, "levels")]
    if not args.p > 1:
        raise InputError("--p must be > 1")
    cfg = RunConfig(
        "capacity",
        paths={"graph": args.graph, "out": args.out, "csv": args.csv},
        params={"K": [graph.ids[i] for i in K], "p": args.p, "levels": levels},
    )
    try:
        curve = parabolicity_verdict(graph, K, args.p, levels)
    except (ValueError, IndexError) as exc:
        raise InputError(str(exc)) from None
    caps = np.array([c for _, c in curve.levels])
    checks = [Check("capacity", "monotonicity_violation", float(max(0.0, np.max(np.diff(caps), initial=0.0))), 1e-12)]
    _write(args.out, emit_report("capacity", cfg.to_dict(), curve.to_dict(), checks))
    if args.csv:
        _write(args.csv, write_csv([{"level": k, "capacity": c} for k, c in curve.levels], ["level", "capacity"]))
    return 0


def cmd_knr_check(args) -> int:
    u, v = _pair_from_args(args)
    A_list = _float_list(args.A, "A")
    T_list = _float_list(args.T, "T") if args.T else []
    if any(not A > 1 for A in A_list):
        raise InputError("--A values must be > 1")
    cfg = RunConfig(
        "knr-check",
        tolerances={"div": KNR_DIV_TOL, "bounds": 1e-10},
        paths={"u": args.u, "v": args.v, "graph": args.graph},
        params={"A": A_list, "T": T_list},
    )
    pair = lift_along_homotopy(u, v)
    audits = [build_knr_field(pair, A) for A in A_list]
    closed = not u.graph.has_boundary
    checks = []
    for au in audits:
        checks.append(
            Check("knr", f"div_integral[A={au.A:g}]", abs(au.div_integral), KNR_DIV_TOL, enforced=closed,
                  note="" if closed else "graph has boundary: total divergence is a boundary flux")
        )
        checks.append(Check("knr", f"negdiv_bound[A={au.A:g}]", max(0.0, -au.negdiv_margin), 1e-10))
        checks.append(Check("knr", f"flux_bound[A={au.A:g}]", max(0.0, -au.flux_margin), 1e-10))
    results = {"audits": [a.to_dict() for a in audits]}
    if T_list:
        results["sweep"] = knr_limit_sweep(pair, T_list, None if args.sweep_A is None else _float_list(args.sweep_A, "sweep-A"))
    _write(args.out, emit_report("knr-check", cfg.to_dict(), results, checks))
    return 0 if all(c.passed for c in checks) else 1


def cmd_report(args) -> int:
    entries = []
    for path in args.inputs:
        doc = _load_json_arg(path)
        if not isinstance(doc, dict) or "checks" not in doc:
            raise InputError(f"{path!r} is not a pharmonic report")
        failed = [c["name"] for c in doc["checks"] if not c.get("passed", False)]
        entries.append({"file": path, "command": doc.get("command"), "passed": bool(doc.get("passed")), "failed": failed})
    checks = [Check("report", e["file"], float(len(e["failed"])), 0.0) for e in entries]
    cfg = RunConfig("report", paths={"inputs": list(args.inputs)})
    _write(args.out, emit_report("report", cfg.to_dict(), {"reports": entries}, checks))
    return 0 if all(e["passed"] for e in entries) else 1


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pharmonic", description="Discrete p-harmonic maps: solve, verify and audit.")
    ap.add_argument("--version", action="version", version=f"pharmonic {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", help="minimize the p-energy in a homotopy class")
    s.add_argument("--graph", required=True, help="graph JSON file or builtin:NAME:N")
    s.add_argument("--target", required=True, help="target spec as inline JSON or file")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--init", default="harmonic", help="map JSON file, 'harmonic' or 'random'")
    s.add_argument("--bc", choices=("dirichlet", "free"), default="dirichlet")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iters", type=int, default=10000)
    s.add_argument("--out", help="write the converged map (JSON, graph embedded)")
    s.add_argument("--trace", help="write iter,E_p,residual CSV")
    s.add_argument("--report", help="run report path (default stdout)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_solve)

    h = sub.add_parser("verify-homotopy", help="comparison checks for two homotopic maps")
    h.add_argument("--u", required=True)
    h.add_argument("--v", required=True)
    h.add_argument("--graph", help="graph file when the maps do not embed one")
    h.add_argument("--witness", help="integer lattice offsets for v (JSON)")
    h.add_argument("--t-grid", type=int, default=11)
    h.add_argument("--bc", choices=("dirichlet", "free"), default="dirichlet")
    h.add_argument("--solver-tol", type=float, default=1e-8)
    h.add_argument("--energy-tol", type=float, default=1e-4)
    h.add_argument("--geo-tol", type=float, default=1e-6)
    h.add_argument("--parallel-tol", type=float, default=1e-8)
    h.add_argument("--out")
    h.add_argument("--csv", help="write t,E_p,residual CSV")
    h.add_argument("--seed", type=int, default=0)
    h.set_defaults(func=cmd_verify_homotopy)

    c = sub.add_parser("hessian-check", help="stream Hessian records as JSON lines")
    c.add_argument("--manifold", choices=("euclidean", "hyperbolic", "flat_torus", "product"), required=True)
    c.add_argument("--dim", type=int, default=2)
    c.add_argument("--kappa", type=float, default=-1.0)
    c.add_argument("--p", type=float, help="fixed p (default: cycle 2, 2.5, 3, 4)")
    c.add_argument("--samples", type=int, default=100)
    c.add_argument("--scale", type=float, default=1.0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_hessian_check)

    k = sub.add_parser("capacity", help="p-capacity curve over the exhaustion")
    k.add_argument("--graph", required=True)
    k.add_argument("--K", help="comma-separated vertex ids (default: first exhaustion level)")
    k.add_argument("--p", type=float, default=2.0)
    k.add_argument("--levels", help="comma-separated level indices or 'all'")
    k.add_argument("--out")
    k.add_argument("--csv")
    k.set_defaults(func=cmd_capacity)

    n = sub.add_parser("knr-check", help="audit the KNR vector field of a lifted pair")
    n.add_argument("--u", required=True)
    n.add_argument("--v", required=True)
    n.add_argument("--graph")
    n.add_argument("--A", default="10", help="comma-separated A values (> 1)")
    n.add_argument("--T", help="comma-separated sublevel thresholds for the sweep")
    n.add_argument("--sweep-A", help="A values for the sweep (default max(2, T^2))")
    n.add_argument("--out")
    n.set_defaults(func=cmd_knr_check)

    r = sub.add_parser("report", help="aggregate report files into one verdict")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, GraphLoadError, GeometryError, ValueError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"pharmonic {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
