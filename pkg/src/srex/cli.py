"""Configuration-driven command line: run scenario pipelines, verify suites.

``srex run config.toml`` executes the configured stage pipeline (brackets ->
abnormal flow -> zero classification -> phase analysis -> minimization) and
writes CSV/JSON artifacts plus a run manifest.  ``srex verify NAME`` runs one
of the named verification suites.  Exit codes: 0 success, 2 config/parse
problems, 3 stage precondition failures, 4 invariant violations or failed
suites.

Config format: TOML with a ``[structure]`` table (``builtin`` name or
``path`` to a structure file) and ordered ``[[stage]]`` tables.  Structure
files carry ``dim``, optional ``weights`` and a ``frame`` of polynomial
literals: sums of terms ``c * z1^a1 * ... * zn^an`` with the rational
coefficient ``c`` written as ``p/q``; the coefficient or the variables may
be omitted per term ("z1", "3", "-1/2 * z2").
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from . import __version__
from .errors import (
    InconclusiveDichotomyError,
    InvariantViolationError,
    PreconditionError,
)
from .extremals import (
    ExtremalState,
    abnormal_feedback_flow,
    classify_zero,
    feedback_vector,
    sample_abnormal_covector,
)
from .io import (
    builtin_scenario_path,
    builtin_structure_names,
    load_builtin_structure,
    load_structure_toml,
    write_controls_csv,
    write_json,
    write_phase_csv,
    write_trajectory_csv,
)
from .optimize import DiscretizedControl, corner_test, minimize_length
from .phase import conjugation_frame, detect_dichotomy, hyperbolic_asymptotics, rescale_time
from .structures import flag_dimensions
from .suites import SUITE_NAMES, _detsign_instance, run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_INVARIANT = 4


# ---------------------------------------------------------------------------
# Stage registry
# ---------------------------------------------------------------------------

def _stage_rng(ctx, params, index):
    seed = params.get("seed", ctx["seed"] + 1000 * index)
    return np.random.default_rng(int(seed))


def _validate_flag(ctx, params, index):
    point = params.get("point")
    if point is None or len(point) != ctx["structure"].dim:
        raise PreconditionError("flag stage needs a point of the ambient dimension")
    if int(params.get("max_step", 1)) < 1:
        raise PreconditionError("flag stage needs max_step >= 1")


def _exec_flag(ctx, params, index):
    S = ctx["structure"]
    dims = flag_dimensions(S, list(params["point"]), int(params.get("max_step", S.dim)))
    write_json({"point": list(params["point"]), "dims": dims},
               ctx["out"] / f"{index:02d}_flag.json")
    return {}


def _validate_abnormal(ctx, params, index):
    S = ctx["structure"]
    if S.rank != 2:
        raise PreconditionError("abnormal_flow requires a rank-2 structure")
    if float(params.get("T", 1.0)) < 0:
        raise PreconditionError("abnormal_flow needs T >= 0")
    if int(params.get("sign", 1)) not in (1, -1):
        raise PreconditionError("abnormal_flow sign must be +1 or -1")
    p0 = params.get("p0")
    if p0 is None and not params.get("sample", False):
        raise PreconditionError("abnormal_flow needs p0 or sample = true")
    if p0 is not None and len(p0) != S.dim:
        raise PreconditionError("p0 must have the ambient dimension")


def _exec_abnormal(ctx, params, index):
    S = ctx["structure"]
    x0 = np.asarray(params.get("x0", [0.0] * S.dim), dtype=float)
    if params.get("p0") is not None:
        p0 = np.asarray(params["p0"], dtype=float)
    else:
        p0 = sample_abnormal_covector(S, x0, _stage_rng(ctx, params, index))
    T = float(params.get("T", 1.0))
    sign = int(params.get("sign", 1))
    scale = ctx["tol_scale"]
    st0 = ExtremalState(x0, p0)
    kwargs = {}
    if "zero_tol_rel" in params:
        h0 = float(np.linalg.norm(feedback_vector(S, st0)))
        kwargs["zero_tol"] = float(params["zero_tol_rel"]) * scale * h0
    traj = abnormal_feedback_flow(
        S, st0, T, sign,
        goh_tol=1e-8 * scale, proj_tol=1e-8 * scale, **kwargs)
    write_trajectory_csv(traj, ctx["out"] / f"{index:02d}_abnormal_flow.csv")
    det_tol = float(params.get("det_tol", 1e-8))
    zeros = []
    for t1 in traj.zeros:
        i1 = traj.node_at_time(t1)
        cls = classify_zero(traj.a_matrix_at(i1), det_tol)
        zeros.append({"t": t1, "classification": cls.value,
                      "detA": float(np.linalg.det(traj.A[i1]))})
    write_json({
        "sign": sign, "horizon": T, "final_time": float(traj.times[-1]),
        "zeros": zeros, "max_goh_residual": float(np.max(traj.goh_residuals)),
        "max_projection": float(np.max(traj.proj_disps)),
        "zero_tol": traj.zero_tol,
    }, ctx["out"] / f"{index:02d}_abnormal_flow_zeros.json")
    return {"last_abnormal": traj}


def _validate_classify(ctx, params, index):
    if not any(s.get("kind") == "abnormal_flow" for s in ctx["stages"][:index]):
        raise PreconditionError("classify_zeros must follow an abnormal_flow stage")


def _exec_classify(ctx, params, index):
    traj = ctx["last_abnormal"]
    det_tol = float(params.get("det_tol", 1e-8))
    out = []
    for t1 in traj.zeros:
        i1 = traj.node_at_time(t1)
        cls = classify_zero(traj.a_matrix_at(i1), det_tol)
        out.append({"t": t1, "classification": cls.value,
                    "detA": float(np.linalg.det(traj.A[i1]))})
    write_json({"det_tol": det_tol, "zeros": out},
               ctx["out"] / f"{index:02d}_classification.json")
    return {}


def _validate_phase(ctx, params, index):
    if not any(s.get("kind") == "abnormal_flow" for s in ctx["stages"][:index]):
        raise PreconditionError("phase_analysis must follow an abnormal_flow stage")


def _exec_phase(ctx, params, index):
    traj = ctx["last_abnormal"]
    det_tol = float(params.get("det_tol", 1e-8))
    report = {"zeros": list(traj.zeros)}
    P = np.eye(2)
    if traj.zeros:
        i1 = traj.node_at_time(traj.zeros[0])
        A1 = traj.a_matrix_at(i1)
        cls = classify_zero(A1, det_tol)
        report["classification"] = cls.value
        if cls.value == "HyperbolicNegDet":
            frame = conjugation_frame(A1, det_tol)
            P = frame.P
            report["target_form"] = frame.target
            report["rate"] = frame.a
        elif cls.value == "DegenerateZeroDet":
            frame = conjugation_frame(A1, det_tol)
            P = frame.P
            report["target_form"] = frame.target
    t_star = float(params.get("t_star", traj.times[0]))
    path = rescale_time(traj, t_star, P)
    report["consistency_residual"] = path.meta.get("consistency_residual")
    if traj.zeros and report.get("target_form") == "hyperbolic":
        try:
            asym = hyperbolic_asymptotics(path)
            report["hyperbolic_asymptotics"] = {
                "a": asym.a, "sup_cross_ratio": asym.sup_cross_ratio,
                "sup_diff_ratio": asym.sup_diff_ratio,
                "tan2theta_end": asym.tan2theta_end, "ok": asym.ok,
            }
        except PreconditionError as exc:
            report["hyperbolic_asymptotics"] = {"skipped": str(exc)}
    if traj.zeros and report.get("target_form") == "nilpotent":
        try:
            verdict = detect_dichotomy(path, float(params.get("eps", 0.1)))
            report["dichotomy"] = {"kind": verdict.kind}
        except (PreconditionError, InconclusiveDichotomyError) as exc:
            report["dichotomy"] = {"kind": "inconclusive", "reason": str(exc)}
    write_phase_csv(path, ctx["out"] / f"{index:02d}_phase.csv")
    write_json(report, ctx["out"] / f"{index:02d}_phase.json")
    return {}


def _validate_minimize(ctx, params, index):
    S = ctx["structure"]
    if S.rank != 2:
        raise PreconditionError("minimize requires a rank-2 structure")
    x1 = params.get("x1")
    if x1 is None or len(x1) != S.dim:
        raise PreconditionError("minimize needs a target x1 of the ambient dimension")
    if int(params.get("N", 16)) < 1:
        raise PreconditionError("minimize needs N >= 1")


def _exec_minimize(ctx, params, index):
    S = ctx["structure"]
    N = int(params.get("N", 16))
    x0 = np.asarray(params.get("x0", [0.0] * S.dim), dtype=float)
    x1 = np.asarray(params["x1"], dtype=float)
    init_spec = params.get("init", "straight")
    if init_spec == "straight":
        init = DiscretizedControl.constant(N, float(params.get("init_angle", 0.0)))
    else:
        init = DiscretizedControl(np.asarray(init_spec, dtype=float))
    endpoint_tol = float(params.get("endpoint_tol", 1e-6)) * ctx["tol_scale"]
    result = minimize_length(S, x0, x1, N, init, endpoint_tol=endpoint_tol,
                             init_speed=params.get("init_speed"),
                             max_outer=int(params.get("max_outer", 50)))
    grid = result.control.segment_times()[:-1]
    write_controls_csv(grid, result.control.directions(),
                       ctx["out"] / f"{index:02d}_controls.csv")
    write_json({
        "length": result.length, "endpoint_error": result.endpoint_error,
        "iterations": result.iterations, "converged": result.converged,
        "endpoint": list(result.endpoint),
    }, ctx["out"] / f"{index:02d}_minimize.json")
    return {}


def _validate_corner(ctx, params, index):
    for key in ("v_minus", "v_plus"):
        v = params.get(key)
        if v is None or len(v) != 2:
            raise PreconditionError(f"corner stage needs a 2-vector {key}")
    if int(params.get("N", 64)) % 2 != 0:
        raise PreconditionError("corner stage needs an even N")


def _exec_corner(ctx, params, index):
    S = ctx["structure"]
    rep = corner_test(
        S, np.asarray(params.get("x0", [0.0] * S.dim), dtype=float),
        np.asarray(params["v_minus"], dtype=float),
        np.asarray(params["v_plus"], dtype=float),
        float(params.get("eps_leg", 0.5)), int(params.get("N", 64)),
        inner_maxiter=int(params.get("inner_maxiter", 60)),
        max_outer=int(params.get("max_outer", 8)))
    write_json({
        "margin": rep.margin, "corner_length": rep.corner_length,
        "optimized_length": rep.result.length,
        "endpoint_error": rep.result.endpoint_error,
        "converged": rep.result.converged,
    }, ctx["out"] / f"{index:02d}_corner.json")
    return {}


def _validate_detsign(ctx, params, index):
    if int(params.get("runs", 100)) < 1:
        raise PreconditionError("detsign_batch needs runs >= 1")


def _exec_detsign(ctx, params, index):
    runs = int(params.get("runs", 100))
    seed = int(params.get("seed", ctx["seed"]))
    seeds = [seed + k for k in range(3 * runs)]
    results = []
    jobs = ctx["jobs"]
    if jobs > 1:
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(_detsign_instance, seeds):
                results.append(out)
                if sum(r["kind"] == "zero" for r in results) >= runs:
                    break
    else:
        for s in seeds:
            results.append(_detsign_instance(s))
            if sum(r["kind"] == "zero" for r in results) >= runs:
                break
    zero_runs = [r for r in results if r["kind"] == "zero"]
    violations = [r for r in zero_runs
                  if r["classification"] == "PositiveDetViolation"]
    write_json({
        "requested_runs": runs, "zero_runs": len(zero_runs),
        "violations": len(violations),
        "classifications": sorted({r["classification"] for r in zero_runs}),
        "runs": zero_runs,
    }, ctx["out"] / f"{index:02d}_detsign.json")
    if violations:
        raise InvariantViolationError(
            "detsign-nonpositivity",
            f"{len(violations)} PositiveDetViolation classifications")
    return {}


_STAGES = {
    "flag": (_validate_flag, _exec_flag),
    "abnormal_flow": (_validate_abnormal, _exec_abnormal),
    "classify_zeros": (_validate_classify, _exec_classify),
    "phase_analysis": (_validate_phase, _exec_phase),
    "minimize": (_validate_minimize, _exec_minimize),
    "corner": (_validate_corner, _exec_corner),
    "detsign_batch": (_validate_detsign, _exec_detsign),
}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _validate_outputs(out):
    """Schema-check every artifact before declaring success.

    CSV files must have a header and uniformly sized float rows; JSON files
    must parse.  Returns the offending file name or None.
    """
    import json as _json

    for path in sorted(Path(out).iterdir()):
        if path.suffix == ".json":
            try:
                _json.loads(path.read_text())
            except ValueError:
                return path.name
        elif path.suffix == ".csv":
            lines = path.read_text().splitlines()
            if not lines:
                return path.name
            width = len(lines[0].split(","))
            for line in lines[1:]:
                cells = line.split(",")
                if len(cells) != width:
                    return path.name
                try:
                    [float(c) for c in cells]
                except ValueError:
                    return path.name
    return None


def _load_config(target):
    path = Path(target)
    if not path.exists():
        builtin = builtin_scenario_path(target)
        if builtin is None:
            raise FileNotFoundError(f"no config file or builtin scenario {target!r}")
        path = builtin
    with open(path, "rb") as fh:
        return _toml.load(fh), path


def _resolve_structure(doc):
    spec = doc.get("structure")
    if not isinstance(spec, dict):
        raise ValueError("config needs a [structure] table")
    if "builtin" in spec:
        return load_builtin_structure(spec["builtin"])
    if "path" in spec:
        p = Path(spec["path"])
        if not p.exists():
            raise FileNotFoundError(f"structure file {p} does not exist")
        return load_structure_toml(p)
    raise ValueError("[structure] needs 'builtin' or 'path'")


def cmd_run(args):
    t_begin = time.monotonic()
    try:
        doc, config_path = _load_config(args.config)
        structure = _resolve_structure(doc)
        stages = doc.get("stage", [])
        if not stages:
            raise ValueError("config defines no [[stage]] tables")
        for st in stages:
            if st.get("kind") not in _STAGES:
                raise ValueError(f"unknown stage kind {st.get('kind')!r}")
    except Exception as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out) if args.out else Path(doc.get("out", "out")) / (
        doc.get("name", config_path.stem))
    out.mkdir(parents=True, exist_ok=True)
    ctx = {
        "structure": structure,
        "seed": int(doc.get("seed", 0)),
        "out": out,
        "stages": stages,
        "jobs": args.jobs,
        "tol_scale": args.tol_scale,
    }
    try:
        for index, st in enumerate(stages):
            _STAGES[st["kind"]][0](ctx, st, index)
    except PreconditionError as exc:
        print(f"stage precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    try:
        for index, st in enumerate(stages):
            updates = _STAGES[st["kind"]][1](ctx, st, index)
            ctx.update(updates)
    except PreconditionError as exc:
        print(f"stage precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except InvariantViolationError as exc:
        print(f"invariant violated ({exc.invariant}): {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    bad = _validate_outputs(out)
    if bad:
        print(f"invariant violated (output-schema): {bad}", file=sys.stderr)
        return EXIT_INVARIANT
    write_json({
        "tool_version": __version__,
        "config": str(config_path),
        "scenario": doc.get("name", config_path.stem),
        "seed": ctx["seed"],
        "tol_scale": args.tol_scale,
        "jobs": args.jobs,
        "wall_time_s": time.monotonic() - t_begin,
    }, out / "manifest.json")
    print(f"run complete: {len(stages)} stages -> {out}")
    return EXIT_OK


def cmd_verify(args):
    if args.suite not in SUITE_NAMES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITE_NAMES)}",
              file=sys.stderr)
        return EXIT_CONFIG
    kwargs = {}
    if args.suite == "detsign":
        kwargs["jobs"] = args.jobs
    report = run_suite(args.suite, **kwargs)
    for crit in report["criteria"]:
        status = "PASS" if crit["passed"] else "FAIL"
        print(f"{status} {report['suite']}/{crit['id']} margin={crit['margin']:.3e}")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_json(report, outdir / f"verify_{args.suite}.json")
    print(f"suite {args.suite}: {'PASS' if report['passed'] else 'FAIL'}")
    return EXIT_OK if report["passed"] else EXIT_INVARIANT


def cmd_list_structures(args):
    for name in builtin_structure_names():
        S = load_builtin_structure(name)
        weights = "" if S.weights is None else f" weights={list(S.weights)}"
        print(f"{name}: dim={S.dim} rank={S.rank}{weights}")
    return EXIT_OK


def main(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1,
                        help="worker pool size for batch stages")
    common.add_argument("--tol-scale", type=float, default=1.0, dest="tol_scale",
                        help="multiplier applied to stage tolerance defaults")
    common.add_argument("--out", default=None, help="output directory")
    parser = argparse.ArgumentParser(
        prog="srex",
        description="rank-2 sub-Riemannian extremal dynamics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common],
                           help="execute a scenario config")
    p_run.add_argument("config", help="TOML config path or builtin scenario name")
    p_run.set_defaults(func=cmd_run)
    p_verify = sub.add_parser("verify", parents=[common],
                              help="run a verification suite")
    p_verify.add_argument("suite", help=f"one of {', '.join(SUITE_NAMES)}")
    p_verify.set_defaults(func=cmd_verify)
    p_list = sub.add_parser("list-structures", parents=[common],
                            help="list builtin structures")
    p_list.set_defaults(func=cmd_list_structures)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
