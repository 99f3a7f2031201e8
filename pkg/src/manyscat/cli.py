"""Command-line driver.

    manyscat <subcommand> --scene scene.json [--out DIR] [--threads N]
             [--method direct|iterative] [--override-regime]

Subcommands: single-body, many-body, reduce, continuum, design, convergence.
Every run writes ``report.json`` into the output directory, also on failure.
Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 infeasible design.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
import traceback
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .continuum import radiation_check, schrodinger_residual, solve_continuum
from .ensemble import place_particles, validate_regime
from .errors import DomainError, InfeasibleDesignError, NumericalError, ValidationError
from .gridio import (
    atomic_write_json,
    complex_columns,
    read_grid,
    vector_field_csv,
    write_csv,
    write_grid,
)
from .many_body import direction_grid, far_field_amplitude, field_at, moments, solve
from .materials import ScalarGrid, curlcurl_residual, density_for_target
from .reduction import partition, reduced_field_at, reduced_solve
from .scene import Scene, SceneError, parse_scene
from .single_body import (
    asymptotic_Q,
    compute_Q,
    far_field_from_current,
    solve_single_body,
)
from .studies import continuum_limit_study, gauss_study, reduction_study, single_body_study

log = logging.getLogger("manyscat")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_INFEASIBLE = 0, 2, 3, 4
SUBCOMMANDS = ("single-body", "many-body", "reduce", "continuum", "design", "convergence")
COMPARE_LIMIT = 20000


@dataclass
class RunReport:
    subcommand: str
    status: str = "running"
    exit_code: int | None = None
    error: dict | None = None
    regime: dict | None = None
    solver: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    input: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "subcommand": self.subcommand,
            "version": __version__,
            "status": self.status,
            "exit_code": self.exit_code,
            "error": self.error,
            "regime": self.regime,
            "solver": self.solver,
            "results": self.results,
            "timings": self.timings,
            "outputs": self.outputs,
            "warnings": self.warnings,
            "input": self.input,
        }


class _Run:
    def __init__(self, scene: Scene, args, report: RunReport):
        self.scene = scene
        self.args = args
        self.report = report
        self.out = args.out or scene.output

    def path(self, name):
        return os.path.join(self.out, name)

    def csv(self, name, header, rows):
        write_csv(self.path(name), header, rows)
        self.report.outputs.append(name)

    def vectors(self, name, points, values, tag):
        vector_field_csv(self.path(name), points, values, tag)
        self.report.outputs.append(name)

    def json(self, name, obj):
        atomic_write_json(self.path(name), obj)
        self.report.outputs.append(name)

    def timed(self, label, fn, *a, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*a, **kw)
        finally:
            self.report.timings[label] = time.perf_counter() - t0


def _amplitude_rows(dirs, amps):
    h, cols = complex_columns(["Ax", "Ay", "Az"], np.asarray(amps))
    return ["beta_x", "beta_y", "beta_z"] + h, np.column_stack([dirs, cols])


def _directions(section):
    d = section.get("directions", {})
    return direction_grid(int(d.get("n_theta", 6)), int(d.get("n_phi", 12)))


def _ensemble(run: _Run):
    sc = run.scene
    if sc.density is None:
        raise SceneError("density", f"{run.report.subcommand} needs a density")
    ens = place_particles(sc.density, sc.a, sc.shape)
    rep = validate_regime(ens, sc.k)
    run.report.regime = rep.to_dict()
    run.report.results["M"] = ens.M
    if not rep.passed and not run.args.override_regime:
        raise ValidationError(
            f"regime check failed: k a + a/d = {rep.score:.3g} > {rep.threshold} "
            "(pass --override-regime to run anyway)"
        )
    return ens


def cmd_single_body(run: _Run):
    sc = run.scene
    sec = sc.section("single_body")
    level = int(sec.get("level", 3))
    ka_list = [float(v) for v in sec.get("ka", [sc.k * sc.a])]
    rows = []
    for ka in ka_list:
        shape = sc.shape.scaled(ka / (sc.k * sc.a))
        mesh, cur = run.timed(f"solve_ka_{ka:g}", solve_single_body, shape, sc.incident, level)
        q = compute_Q(cur, mesh)
        qa = asymptotic_Q(sc.incident, shape)
        err = np.linalg.norm(q - qa) / np.linalg.norm(qa)
        rows.append([ka, np.linalg.norm(q), np.linalg.norm(qa), err, cur.cond_estimate])
        run.report.solver[f"ka={ka:g}"] = {
            "nodes": mesh.n,
            "residual": cur.residual,
            "cond_estimate": cur.cond_estimate,
            "tangentiality": cur.tangentiality(mesh),
        }
    run.report.regime = {"ka": ka_list}
    run.csv("single_body.csv", ["ka", "abs_Q_bie", "abs_Q_asym", "rel_err", "cond_estimate"], rows)
    mesh, cur = solve_single_body(sc.shape, sc.incident, level)
    dirs = _directions(sec)
    amps = [far_field_from_current(mesh, cur, sc.k, b) for b in dirs]
    run.csv("amplitude.csv", *_amplitude_rows(dirs, amps))
    run.report.results["rel_err"] = [r[3] for r in rows]


def cmd_many_body(run: _Run):
    sc = run.scene
    ens = _ensemble(run)
    sol = run.timed(
        "solve", solve, ens, sc.incident, sc.c0, method=run.args.method or sc.method,
        tol=sc.tol, override=run.args.override_regime,
    )
    run.report.solver = sol.info.to_dict()
    Q = moments(sol)
    ha, ca = complex_columns(["Ax", "Ay", "Az"], sol.A)
    hq, cq = complex_columns(["Qx", "Qy", "Qz"], Q)
    idx = np.arange(ens.M, dtype=float)[:, None]
    run.csv("particles.csv", ["index", "x", "y", "z"] + ha + hq, np.hstack([idx, ens.centers, ca, cq]))
    E = run.timed("field", field_at, sol, sc.probes)
    run.vectors("field.csv", sc.probes, E, "E")
    dirs = _directions(sc.section("many_body"))
    amps = [far_field_amplitude(sol, b) for b in dirs]
    run.csv("amplitude.csv", *_amplitude_rows(dirs, amps))
    rc = radiation_check(sol, [20 / sc.k, 40 / sc.k, 80 / sc.k], sc.k, center=sc.domain.center)
    run.report.results["radiation"] = rc.to_dict()


def cmd_reduce(run: _Run):
    sc = run.scene
    sec = sc.section("reduce")
    ens = _ensemble(run)
    per_side = int(sec.get("per_side", 4))
    part = partition(ens, per_side)
    red = run.timed("reduced_solve", reduced_solve, part, sc.incident, sc.c0,
                    method=run.args.method or sc.method, tol=sc.tol)
    run.report.solver = red.info.to_dict()
    h, cols = complex_columns(["Ax", "Ay", "Az"], red.A)
    run.csv(
        "reduced.csv",
        ["x", "y", "z", "count", "weight"] + h,
        np.column_stack([part.centers, part.counts, part.weights, cols]),
    )
    E = reduced_field_at(red, sc.probes)
    run.vectors("reduced_field.csv", sc.probes, E, "E")
    res = {"P": part.P, "M": ens.M, "weight_consistency": part.weight_consistency()}
    compare = sec.get("compare", "auto")
    if compare is True or (compare == "auto" and ens.M <= COMPARE_LIMIT):
        full = run.timed("full_solve", solve, ens, sc.incident, sc.c0, tol=sc.tol,
                         override=run.args.override_regime)
        Ef = field_at(full, sc.probes)
        inc = sc.incident.field(sc.probes)
        res["scattered_rel_l2"] = float(np.linalg.norm((E - inc) - (Ef - inc)) / np.linalg.norm(Ef - inc))
        res["total_rel_l2"] = float(np.linalg.norm(E - Ef) / np.linalg.norm(Ef))
    run.report.results.update(res)
    run.json("comparison.json", res)


def cmd_continuum(run: _Run):
    sc = run.scene
    if sc.density is None:
        raise SceneError("density", "continuum needs a density")
    sec = sc.section("continuum")
    dims = tuple(int(n) for n in sec.get("dims", [32, 32, 32]))
    if len(dims) != 3:
        raise SceneError("continuum.dims", "expected three integers")
    cs = run.timed("solve", solve_continuum, sc.density, sc.incident, sc.c0, dims,
                   tol=float(sec.get("tol", 1e-10)))
    run.report.solver = {"method": "gmres", "iterations": cs.iterations, "residual": cs.residual}
    run.vectors("E_grid.csv", cs.E.points, cs.E.values, "E")
    run.vectors("W_grid.csv", cs.W.points, cs.W.values, "W")
    res = {"dims": list(dims), "iterations": cs.iterations, "residual": cs.residual}
    if min(dims) >= 3:
        res["schrodinger_residual"] = schrodinger_residual(cs.E, sc.density, sc.c0, sc.k)
    if min(dims) >= 5:
        res["curlcurl_residual"] = curlcurl_residual(cs.E, sc.density, sc.c0, sc.k)
    outside = sc.probes[~sc.domain.contains(sc.probes)]
    if len(outside):
        run.vectors("field.csv", outside, cs.field(outside), "E")
    res["radiation"] = radiation_check(cs, [20 / sc.k, 40 / sc.k, 80 / sc.k], sc.k,
                                       center=sc.domain.center).to_dict()
    run.report.results.update(res)
    run.json("continuum_report.json", res)


def cmd_design(run: _Run):
    sc = run.scene
    sec = sc.section("design")
    if "target" not in sec:
        raise SceneError("design.target", "path to a target n^2 grid file is required")
    path = sec["target"]
    if not os.path.isabs(path):
        path = os.path.join(run.args.scene_dir, path)
    if not os.path.exists(path):
        raise SceneError("design.target", f"file not found: {path}")
    box, values = read_grid(path)
    target = ScalarGrid(box, values)
    feas = {"target": path, "dims": list(values.shape), "n2_min": float(values.min()),
            "n2_max": float(values.max())}
    try:
        dens = density_for_target(target, sc.c0)
    except InfeasibleDesignError as exc:
        feas.update(feasible=False, offending=exc.offending, message=str(exc))
        run.json("feasibility.json", feas)
        raise
    feas.update(feasible=True, offending=[], N_max=float(dens.values.max()),
                predicted_M=float(dens.integral() / sc.a**3))
    write_grid(run.path("density.json"), box, dens.values)
    run.report.outputs.append("density.json")
    run.json("feasibility.json", feas)
    run.report.results.update(feas)


def cmd_convergence(run: _Run):
    sc = run.scene
    sec = sc.section("convergence")
    suite = sec.get("suite", "single-body")
    if suite == "single-body":
        st = single_body_study(sc.incident, sec.get("ka", [0.2, 0.1, 0.05, 0.025]), int(sec.get("level", 3)))
        header = ["ka", "rel_err"]
    elif suite == "gauss":
        st = gauss_study(sc.shape.scaled(1.0 / sc.a), sec.get("levels", [1, 2, 3, 4]))
        header = ["level", "error"]
    elif suite == "reduction":
        if sc.density is None:
            raise SceneError("density", "reduction study needs a density")
        st = reduction_study(sc.density, sc.a, sc.incident, sc.c0, sec.get("per_side", [2, 4, 8]), sc.probes)
        header = ["P", "rel_err"]
    elif suite == "continuum-limit":
        if sc.density is None:
            raise SceneError("density", "continuum-limit study needs a density")
        st = continuum_limit_study(sc.density, sc.incident, sc.c0, sec.get("a", [0.02, 0.01, 0.005]),
                                   grid=int(sec.get("grid", 60)), coarse=int(sec.get("coarse", 5)))
        header = ["a", "rel_err"]
    else:
        raise SceneError("convergence.suite",
                         f"unknown suite {suite!r} (single-body, gauss, reduction, continuum-limit)")
    run.csv("convergence.csv", header, st.rows())
    run.report.results.update(st.to_dict())


HANDLERS = {
    "single-body": cmd_single_body,
    "many-body": cmd_many_body,
    "reduce": cmd_reduce,
    "continuum": cmd_continuum,
    "design": cmd_design,
    "convergence": cmd_convergence,
}


def build_parser():
    p = argparse.ArgumentParser(prog="manyscat", description="Scattering by many small conducting bodies.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scene", required=True, help="JSON scene file")
        s.add_argument("--out", help="output directory (default: scene 'output' or ./out)")
        s.add_argument("--threads", type=int, help="worker threads for compiled kernels")
        s.add_argument("--method", choices=("direct", "iterative"))
        s.add_argument("--override-regime", action="store_true",
                       help="run even when k a + a/d exceeds the threshold")
    return p


def _set_threads(n):
    import numba

    if n is None:
        return numba.get_num_threads()
    if n < 1:
        raise ValidationError(f"--threads must be >= 1, got {n}")
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.scene_dir = os.path.dirname(os.path.abspath(args.scene))
    report = RunReport(args.subcommand)
    report.input = {"scene_path": os.path.abspath(args.scene), "argv": list(sys.argv[1:] if argv is None else argv)}
    out_dir = args.out or "out"
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            try:
                with open(args.scene) as fh:
                    text = fh.read()
            except OSError as exc:
                raise SceneError("--scene", f"cannot read scene file: {exc.strerror}") from None
            report.input["scene_text"] = text
            scene = parse_scene(text, args.scene_dir)
            out_dir = args.out or scene.output
            report.input["scene"] = scene.raw
            report.solver["threads"] = _set_threads(args.threads)
            HANDLERS[args.subcommand](_Run(scene, args, report))
            report.status, report.exit_code = "ok", EXIT_OK
        except InfeasibleDesignError as exc:
            report.status, report.exit_code = "infeasible", EXIT_INFEASIBLE
            report.error = {"type": type(exc).__name__, "message": str(exc), "offending": exc.offending}
        except NumericalError as exc:
            report.status, report.exit_code = "numerical-failure", EXIT_NUMERICAL
            report.error = {"type": type(exc).__name__, "message": str(exc), "history": exc.history}
        except (ValidationError, DomainError) as exc:
            report.status, report.exit_code = "invalid", EXIT_VALIDATION
            report.error = {"type": type(exc).__name__, "message": str(exc)}
            if isinstance(exc, SceneError):
                report.error["field"] = exc.where
        except Exception as exc:  # unexpected: still leave a report behind
            report.status, report.exit_code = "error", 1
            report.error = {"type": type(exc).__name__, "message": str(exc),
                            "traceback": traceback.format_exc()}
        report.warnings = [str(w.message) for w in caught]
    report.timings["total"] = time.perf_counter() - t0
    try:
        atomic_write_json(os.path.join(out_dir, "report.json"), report.to_dict())
    except OSError as exc:
        print(f"manyscat: cannot write report: {exc}", file=sys.stderr)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if report.error:
        print(f"manyscat {args.subcommand}: {report.error['message']}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
