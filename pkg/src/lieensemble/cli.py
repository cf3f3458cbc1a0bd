"""Command-line scenario runner.

Exit codes: 0 every requested verdict passed, 1 a verdict failed, 2 the
scenario (or command line) could not be parsed, 3 an internal or numerical
error stopped the run.  Nothing is written for exit codes 2 and 3.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback

import numpy as np

from . import __version__
from .coefficients import CoefficientFamily, center_elements, verify_codistinguished
from .ensemble import (
    EnsembleSystem,
    ParametrizationSet,
    PiecewiseConstantInput,
    Profile,
    build_grid,
    integrate_ensemble,
    output_series,
)
from .homogeneous import (
    SphereProfile,
    average_over_stabilizer,
    integrate_sphere_ensemble,
    section,
    verify_homogeneous_relations,
)
from .liecore import expm, identity, random_group_element
from .observability import (
    ProfileAnsatz,
    moment_separation_test,
    moment_table,
    reconstruct_profile,
)
from .report import (
    MOMENT_HEADER,
    OUTPUT_HEADER,
    STUDY_HEADER,
    CsvArtifact,
    Results,
    emit_report,
    trajectory_header,
)
from .scenario import COMMANDS, SCHEMA_VERSION, Scenario, ScenarioError, load_scenario
from .structure import (
    NotDistinguishedError,
    catalog_set,
    indicator_sequences,
    verify_distinguished,
    verify_pre_distinguished,
)
from .synthesis import SynthesisProblem, TargetTrajectory, convergence_study, extract_coefficients
from .expressions import parse_expression

OUT_ENV = "LIEENSEMBLE_OUT"
DEFAULT_OUT = "lieensemble-out"

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INTERNAL = 0, 1, 2, 3


# --------------------------------------------------------------------------
# building blocks shared by the commands


def _generators(sc: Scenario):
    return catalog_set(sc.group.family, sc.group.n, sc.group.variant)


def _grid(sc: Scenario):
    g = sc.grid
    return build_grid(g.a, g.b, g.nodes, g.rule, require_positive=False)


def _params(sc: Scenario) -> ParametrizationSet:
    return ParametrizationSet.from_expressions(sc.rho, sc.designated)


def _output_family(sc: Scenario) -> CoefficientFamily:
    base = catalog_set(sc.group.family, sc.group.n, sc.outputs["variant"])
    return CoefficientFamily(base, sc.outputs["orientation"])


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _profile(spec: dict, sc: Scenario, grid, gens, stream: int) -> Profile:
    fam, n = sc.group.family, sc.group.n
    if spec["kind"] == "identity":
        states = np.broadcast_to(identity(fam, n).matrix, (grid.size, n, n))
        prof = Profile(grid, states, fam)
    elif spec["kind"] == "random":
        rng = _rng(sc.seed, stream)
        prof = Profile(grid, np.stack([random_group_element(fam, n, rng).matrix for _ in range(grid.size)]), fam)
    else:
        prof = ProfileAnsatz(identity(fam, n), gens, np.array(spec["coeffs"])).profile(grid)
    z = center_elements(fam, n).elements[spec["center"]]
    return Profile(grid, prof.states @ z.matrix, fam)


def _control(sc: Scenario, m: int, r: int):
    c = sc.control
    if c.kind == "zero":
        return None
    if c.kind == "piecewise":
        return PiecewiseConstantInput(c.segments)
    rng = _rng(sc.seed, 7)
    cuts = np.sort(rng.uniform(0.0, c.T, c.count - 1))
    times = [float(t) for t in cuts] + [c.T]
    segs = []
    for t in times:
        segs.append((int(rng.integers(m)), int(rng.integers(r)), float(rng.uniform(-c.nu_max, c.nu_max)), t))
    # merge accidental duplicate times (probability zero, kept for safety)
    clean = [segs[0]] + [s for p, s in zip(segs, segs[1:]) if s[3] > p[3]]
    return PiecewiseConstantInput(clean)


def _control_dict(u) -> dict | None:
    if u is None:
        return None
    return {"segments": [list(s) for s in u.segments]}


def _rows_matrix(times, grid, states, stride: int):
    idx = list(range(0, len(times), stride))
    if idx[-1] != len(times) - 1:
        idx.append(len(times) - 1)
    for k in idx:
        for q, s in enumerate(grid.nodes):
            yield [float(times[k]), float(s)] + list(states[k, q].ravel())


def _verdict(name: str, ok: bool, **detail) -> dict:
    return {"name": name, "pass": bool(ok), **detail}


# --------------------------------------------------------------------------
# commands


def run_verify(sc: Scenario, timing: bool) -> Results:
    gens = _generators(sc)
    report = {"group": f"{sc.group.family}({sc.group.n})", "variant": sc.group.variant, "labels": list(gens.labels)}
    verdicts = []
    try:
        table = verify_distinguished(gens, sc.tolerances["closure"])
        report["bracket_table"] = table.to_dict()
        report["max_residual"] = table.max_residual()
        verdicts.append(_verdict("distinguished", True))
    except NotDistinguishedError as exc:
        table = None
        report["failure"] = {"clause": exc.clause, "witness": exc.witness, "message": str(exc)}
        verdicts.append(_verdict("distinguished", False, clause=exc.clause))
    opts = sc.section
    if opts["codistinguished"] and table is not None:
        fam = CoefficientFamily(gens, opts["orientation"])
        rep = verify_codistinguished(fam, table, n_samples=opts["samples"], tol=opts["tol"],
                                     relation_tol=opts["relation_tol"], n_pairs=opts["pairs"], seed=sc.seed)
        report["codistinguished"] = rep.to_dict()
        verdicts.append(_verdict("codistinguished-axioms", rep.passed, injective=rep.codistinguished))
    return Results("verify", all(v["pass"] for v in verdicts), report, {}, verdicts)


def run_closure(sc: Scenario, timing: bool) -> Results:
    full = _generators(sc)
    opts = sc.section
    gens = full.subset(opts["subset"]) if opts["subset"] else full
    report = {"group": f"{sc.group.family}({sc.group.n})", "variant": sc.group.variant,
              "generators": list(gens.labels)}
    verdicts = []
    try:
        closure, table = verify_pre_distinguished(gens, opts["max_depth"], sc.tolerances["projective"])
        report["closure"] = closure.to_dict()
        report["closure"]["size_by_depth"] = closure.size_by_depth()
        report["bracket_table"] = table.to_dict()
        verdicts.append(_verdict("pre-distinguished", closure.finite, size=closure.size))
    except NotDistinguishedError as exc:
        report["failure"] = {"clause": exc.clause, "witness": exc.witness, "message": str(exc)}
        verdicts.append(_verdict("pre-distinguished", False, clause=exc.clause))
    if opts["targets"]:
        seqs = indicator_sequences(gens, full.subset(opts["targets"]), opts["indicator_depth"],
                                   sc.tolerances["projective"])
        report["indicator_sequences"] = [s.to_dict() for s in seqs]
        verdicts.append(_verdict("indicator-patterns", all(s.pattern is not None for s in seqs)))
    return Results("closure", all(v["pass"] for v in verdicts), report, {}, verdicts)


def run_simulate(sc: Scenario, timing: bool) -> Results:
    grid, gens, ps = _grid(sc), _generators(sc), _params(sc)
    opts = sc.section
    system = EnsembleSystem(grid, gens, ps)
    init = _profile(sc.init, sc, grid, gens, 1)
    u = _control(sc, len(gens), ps.r)
    traj = integrate_ensemble(system, init, u, sc.control.T, sc.control.dt, sc.tolerances["group"])
    fam = _output_family(sc)
    ys = output_series(traj, fam)
    verdicts = [_verdict("group-drift", traj.max_deviation <= opts["tol_grp"], max_deviation=traj.max_deviation)]
    report = {
        "group": f"{sc.group.family}({sc.group.n})",
        "grid": grid.to_dict(),
        "steps": len(traj.times) - 1,
        "control": _control_dict(u),
        "max_deviation": traj.max_deviation,
        "final_output": ys[-1],
    }
    if opts["compare_center"]:
        z = center_elements(sc.group.family, sc.group.n).elements[opts["compare_center"]]
        shifted = Profile(grid, init.states @ z.matrix, sc.group.family)
        traj2 = integrate_ensemble(system, shifted, u, sc.control.T, sc.control.dt, sc.tolerances["group"])
        gap = float(np.max(np.abs(output_series(traj2, fam) - ys)))
        report["center_comparison"] = {"center_index": opts["compare_center"], "max_output_gap": gap}
        verdicts.append(_verdict("center-output-equality", gap <= opts["center_tol"], gap=gap))
    n = sc.group.n
    traj_csv = CsvArtifact(trajectory_header(n), list(_rows_matrix(traj.times, grid, traj.states, opts["stride"])))
    out_rows = []
    idx = list(range(0, len(traj.times), opts["stride"]))
    if idx[-1] != len(traj.times) - 1:
        idx.append(len(traj.times) - 1)
    for k in idx:
        for i in range(fam.m):
            for j in range(fam.m):
                out_rows.append([float(traj.times[k]), i, j, float(ys[k, i, j])])
    csv = {"trajectory.csv": traj_csv, "outputs.csv": CsvArtifact(OUTPUT_HEADER, out_rows)}
    return Results("simulate", all(v["pass"] for v in verdicts), report, csv, verdicts)


def _target(sc: Scenario, grid, gens):
    opts = sc.section
    terms = [(i, parse_expression(t)) for i, t in opts["terms"]]
    stack = gens.stack

    def gen(t, s):
        a = sum(f(s) * stack[i] for i, f in terms)
        return expm(t * a)

    return TargetTrajectory.from_generator(grid, gen, opts["T"], opts["dt"], sc.group.family)


def run_synthesize(sc: Scenario, timing: bool) -> Results:
    grid, gens, ps = _grid(sc), _generators(sc), _params(sc)
    opts = sc.section
    target = _target(sc, grid, gens)
    problem = SynthesisProblem(target, gens, ps)
    cf = extract_coefficients(target, None, gens)
    rows = convergence_study(problem, opts["degrees"])
    study = CsvArtifact(STUDY_HEADER, [[r.K, r.delta, r.epsilon, r.seconds if timing else 0.0] for r in rows])
    last = rows[-1]
    verdicts = []
    if opts["delta_max"] is not None:
        verdicts.append(_verdict("delta", last.delta <= opts["delta_max"], K=last.K, delta=last.delta))
    if opts["epsilon_max"] is not None:
        verdicts.append(_verdict("epsilon", last.epsilon <= opts["epsilon_max"], K=last.K, epsilon=last.epsilon))
    report = {
        "group": f"{sc.group.family}({sc.group.n})",
        "grid": grid.to_dict(),
        "terms": [list(t) for t in opts["terms"]],
        "T": opts["T"],
        "dt": opts["dt"],
        "frame_residual": cf.max_residual,
        "study": [{"K": r.K, "delta": r.delta, "epsilon": r.epsilon} for r in rows],
        "delta_nonincreasing": all(b.delta <= a.delta + 1e-12 for a, b in zip(rows, rows[1:])),
    }
    return Results("synthesize", all(v["pass"] for v in verdicts), report, {"study.csv": study}, verdicts)


def run_observe(sc: Scenario, timing: bool) -> Results:
    grid, gens, ps = _grid(sc), _generators(sc), _params(sc)
    opts = sc.section
    fam = _output_family(sc)
    p1 = _profile(opts["profile1"], sc, grid, gens, 1)
    table = moment_table(p1, fam, ps, opts["K_obs"])
    report = {"group": f"{sc.group.family}({sc.group.n})", "grid": grid.to_dict(), "K_obs": opts["K_obs"]}
    verdicts = []
    if opts["profile2"] is not None:
        p2 = _profile(opts["profile2"], sc, grid, gens, 2)
        v = moment_separation_test(p1, p2, fam, ps, opts["K_obs"], opts["tol"])
        report["separation"] = v.to_dict()
        if opts["expect"] != "any":
            ok = v.separated == (opts["expect"] == "separated")
            verdicts.append(_verdict("separation-expectation", ok, expected=opts["expect"]))
    if opts["reconstruct"]:
        rec = reconstruct_profile(table, opts["d_max"], fam, ps, grid, seed=sc.seed, n_starts=opts["starts"],
                                  truth=p1)
        report["reconstruction"] = rec.to_dict()
        ok = rec.converged and rec.distance is not None and rec.distance <= opts["distance_max"]
        verdicts.append(_verdict("reconstruction", ok, distance=rec.distance, residual=rec.residual))
    csv = {"moments.csv": CsvArtifact(MOMENT_HEADER, [list(r) for r in table.rows()])}
    return Results("observe", all(v["pass"] for v in verdicts), report, csv, verdicts)


def run_sphere(sc: Scenario, timing: bool) -> Results:
    grid, ps = _grid(sc), _params(sc)
    opts = sc.section
    gens = catalog_set("so", 3)
    rel = verify_homogeneous_relations(opts["samples"], opts["tol"], sc.seed)
    fam = CoefficientFamily(gens)
    rng = _rng(sc.seed, 3)
    avg_err = 0.0
    for _ in range(opts["samples"]):
        x = rng.normal(size=3)
        x /= np.linalg.norm(x)
        for i in range(3):
            avg_err = max(avg_err, abs(average_over_stabilizer(fam, i, x) - 2.0 * x[i]))
            for j in (1, 2):
                avg_err = max(avg_err, abs(average_over_stabilizer(fam, i, x, j=j)))
    if sc.init["kind"] == "random":
        pts = rng.normal(size=(grid.size, 3))
        pts /= np.linalg.norm(pts, axis=1)[:, None]
    else:
        pts = np.tile([1.0, 0.0, 0.0], (grid.size, 1))
    init = SphereProfile(grid, pts)
    u = _control(sc, 3, ps.r)
    strj = integrate_sphere_ensemble(grid, init, u, sc.control.T, sc.control.dt, gens, ps)
    g0 = Profile(grid, np.stack([section(x) for x in pts]), "so")
    gtraj = integrate_ensemble(EnsembleSystem(grid, gens, ps, orientation="right"), g0, u,
                               sc.control.T, sc.control.dt)
    equi = float(np.max(np.abs(gtraj.states[:, :, :, 0] - strj.points)))
    verdicts = [
        _verdict("bracket-relation", rel.bracket["pass"], max_residual=rel.bracket["max_residual"]),
        _verdict("derivative-relation", rel.derivative["pass"], max_residual=rel.derivative["max_residual"]),
        _verdict("spanning", rel.spanning["pass"]),
        _verdict("stabilizer-average", avg_err <= max(opts["tol"], 1e-12), max_error=avg_err),
        _verdict("equivariance", equi <= opts["equivariance_tol"], max_gap=equi),
        _verdict("norm-drift", strj.max_norm_drift <= 1e-9, max_drift=strj.max_norm_drift),
    ]
    report = {"relations": rel.to_dict(), "stabilizer_average_error": avg_err, "equivariance_gap": equi,
              "control": _control_dict(u), "grid": grid.to_dict(), "max_norm_drift": strj.max_norm_drift}
    rows = []
    idx = list(range(0, len(strj.times), opts["stride"]))
    if idx[-1] != len(strj.times) - 1:
        idx.append(len(strj.times) - 1)
    for k in idx:
        for q, s in enumerate(grid.nodes):
            rows.append([float(strj.times[k]), float(s)] + [float(v) for v in strj.points[k, q]])
    csv = {"sphere_trajectory.csv": CsvArtifact(("t", "sigma", "x1", "x2", "x3"), rows)}
    return Results("sphere", all(v["pass"] for v in verdicts), report, csv, verdicts)


RUNNERS = {
    "verify": run_verify,
    "closure": run_closure,
    "simulate": run_simulate,
    "synthesize": run_synthesize,
    "observe": run_observe,
    "sphere": run_sphere,
}


# --------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("thread count must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lieensemble", description="Run Lie-group ensemble scenarios.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} (schema {SCHEMA_VERSION})")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", required=True, help="TOML scenario file")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--seed", type=_u64, help="override the scenario seed")
    p.add_argument("--threads", type=_positive_int, help="BLAS thread limit")
    p.add_argument("--timing", action="store_true", help="record wall time in study tables")
    return p


def run_scenario(sc: Scenario, out_dir, timing: bool = False) -> tuple[int, Results]:
    results = RUNNERS[sc.command](sc, timing)
    emit_report(results, out_dir)
    return (EXIT_OK if results.passed else EXIT_FAIL), results


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_PARSE
    try:
        sc = load_scenario(args.scenario, args.command, args.seed)
    except ScenarioError as exc:
        print(f"lieensemble: scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out_dir = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                code, res = run_scenario(sc, out_dir, args.timing)
        else:
            code, res = run_scenario(sc, out_dir, args.timing)
    except Exception as exc:  # exit-code contract: anything unexpected is an internal error
        print(f"lieensemble: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if os.environ.get("LIEENSEMBLE_DEBUG"):
            traceback.print_exc()
        return EXIT_INTERNAL
    status = "PASS" if code == EXIT_OK else "FAIL"
    print(f"{sc.command}: {status} ({len(res.verdicts)} verdicts) -> {out_dir}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
