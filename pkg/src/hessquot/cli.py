"""Command-line front end: validate, solve, study and verify.

Exit codes: 0 success, 1 validation or verification failure, 2 solver
nonconvergence (or a grid too large to attempt), 3 I/O or parse errors.
Every run writes ``<out>/<run-id>/manifest.json`` plus command outputs; the
default run id is derived from the command inputs, so identical reruns
land in (and overwrite) the same directory.
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from hessquot import __version__, kernels, solver, verify
from hessquot.discretization import read_binary, write_binary
from hessquot.errors import (
    AdmissibilityError,
    ConfigurationError,
    HessquotError,
    NonconvergenceError,
    ProblemFileError,
    ResourceError,
    StepFailure,
    UnsupportedOperationError,
    ValidationError,
)
from hessquot.problem import check_admissible, check_cone_membership, check_subsolution, load_problem

EXIT_OK, EXIT_FAIL, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
SUITES = ("glz", "key-lemma", "barrier", "block-lemma", "scalings", "m0")

log = logging.getLogger("hessquot")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is reserved for nonconvergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--threads", type=int, default=default if suppress else 1, help="worker threads (default 1)")
    parser.add_argument("--seed", type=int, default=default if suppress else 42, help="root seed (default 42)")
    parser.add_argument("--out", default=default if suppress else "out", help="output root (default ./out)")
    parser.add_argument("--run-id", default=default, help="output subdirectory (default: hash of inputs)")
    parser.add_argument("-v", "--verbose", action="store_true", default=default if suppress else False)


def _solver_flags(parser):
    parser.add_argument("--resolution", type=int, help="override the grid resolution")
    parser.add_argument("--alpha", type=int, help="override alpha")
    parser.add_argument("--tol", type=float, help="absolute residual tolerance (default 1e-8 max|rhs|)")
    parser.add_argument("--max-newton", type=int, default=25)
    parser.add_argument("--t-step", type=float, default=solver.MAX_DT, help="initial continuity step")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    p = _Parser(prog="hessquot", description="Hessian quotient Dirichlet solver and verification suites.")
    _global_flags(p, suppress=False)
    p.add_argument("--version", action="version", version=f"hessquot {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", parents=[common], help="check a problem file")
    v.add_argument("problem")
    v.add_argument("--resolution", type=int)
    v.add_argument("--alpha", type=int)

    s = sub.add_parser("solve", parents=[common], help="solve a problem file")
    s.add_argument("problem")
    _solver_flags(s)

    st = sub.add_parser("study", parents=[common], help="convergence study over resolutions")
    st.add_argument("family", help="JSON with 'problem', 'resolutions' and optional 'alphas'")
    st.add_argument("--tol", type=float)
    st.add_argument("--max-newton", type=int, default=25)
    st.add_argument("--t-step", type=float, default=solver.MAX_DT)

    ve = sub.add_parser("verify", parents=[common], help="run a verification suite")
    ve.add_argument("suite", choices=SUITES)
    ve.add_argument("--trials", type=int, help="random trials (glz 10^4, block-lemma 10^5 per case)")
    ve.add_argument("--state", help="solution directory written by 'solve'")
    ve.add_argument("--problem", help="problem file (scalings)")
    ve.add_argument("--scales", default="1,2,4", help="boundary-data scales for 'scalings'")
    ve.add_argument("--resolution", type=int)
    ve.add_argument("--alpha", type=int)
    ve.add_argument("--N", type=float, help="key-lemma threshold on w (default 90th percentile)")
    ve.add_argument("--theta", type=float, help="key-lemma theta (default half the largest feasible)")
    return p


# ----------------------------------------------------------------- helpers


def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _run_dir(args, inputs):
    run_id = getattr(args, "run_id", None)
    if not run_id:
        key = json.dumps(inputs, sort_keys=True, default=str)
        run_id = f"{args.command}-{hashlib.sha256(key.encode()).hexdigest()[:12]}"
    d = Path(args.out) / run_id
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path, obj):
    path.write_text(json.dumps(verify._jsonable(obj), indent=2))
    return path


class RunManifest:
    """One per run: inputs, versions, outputs, timing and the pass/fail summary."""

    def __init__(self, command, options, seed, problem=None):
        self.command = command
        self.options = options
        self.seed = seed
        self.problem = str(problem) if problem else None
        self.problem_hash = file_hash(problem) if problem else None
        self.outputs = []
        self.start = time.perf_counter()
        self.summary = {}

    def inputs(self):
        return {"command": self.command, "options": self.options, "seed": self.seed, "problem_hash": self.problem_hash}

    def to_dict(self):
        return {
            "command": self.command,
            "problem": self.problem,
            "problem_hash": self.problem_hash,
            "options": self.options,
            "seed": self.seed,
            "version": __version__,
            "backend": kernels.BACKEND,
            "outputs": [str(p) for p in self.outputs],
            "wall_time": time.perf_counter() - self.start,
            "summary": self.summary,
        }

    def write(self, run_dir):
        path = run_dir / "manifest.json"
        self.outputs.append(path)
        return _write_json(path, self.to_dict())


def _options(args, *names):
    return {k: getattr(args, k.replace("-", "_"), None) for k in names}


def _solver_options(args):
    return solver.SolverOptions(tol=args.tol, max_newton=args.max_newton, t_step=args.t_step)


def validate_spec(spec):
    """Run the three problem checks; returns (passed, report dict)."""
    adm = check_admissible(spec.usub, spec)
    rep = {"admissible": adm.to_dict()}
    try:
        sub = check_subsolution(spec)
        rep["subsolution"] = sub.to_dict()
        sub_ok = sub.is_subsolution
    except AdmissibilityError as exc:
        rep["subsolution"] = {"error": str(exc)}
        sub_ok = False
    cone = check_cone_membership(spec.usub, spec)
    rep["cone"] = cone.to_dict()
    rep["checks"] = {"admissible": bool(adm.admissible), "subsolution": bool(sub_ok), "cone": bool(cone.certified)}
    return all(rep["checks"].values()), rep


def load_state(state_dir):
    """Problem and solution stored by ``solve`` in ``state_dir``."""
    d = Path(state_dir)
    _, u, meta = read_binary(d / "solution.bin")
    if "problem" not in meta:
        raise ProblemFileError(f"{d / 'solution.json'} does not name its problem file", field="problem")
    spec = load_problem(meta["problem"], resolution=meta.get("resolution"), alpha=meta.get("alpha"))
    if meta.get("problem_hash") and file_hash(meta["problem"]) != meta["problem_hash"]:
        log.warning("problem file changed since the solution was written")
    return spec, u, meta


def _write_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["t", "iter", "residual", "margin", "step"])
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def measured_order(e_coarse, e_fine, h_coarse, h_fine):
    if not (e_coarse and e_fine) or e_coarse <= 0 or e_fine <= 0:
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def convergence_study(problem, resolutions, alphas=None, options=None):
    """Solve ``problem`` at each resolution (per alpha) and tabulate errors and orders."""
    rows = []
    alphas = alphas or [None]
    for a in alphas:
        prev = None
        for res in resolutions:
            spec = load_problem(problem, resolution=res, alpha=a)
            rep = solver.solve_dirichlet(spec, options)
            h = float(np.max(spec.domain.h))
            order = None
            if prev is not None and rep.sup_error is not None:
                order = measured_order(prev[1], rep.sup_error, prev[0], h)
            rows.append({
                "alpha": spec.alpha,
                "resolution": res,
                "h": h,
                "sup_error": rep.sup_error,
                "residual": rep.final_residual,
                "newton_iterations": int(sum(k for _, k in rep.t_iterations)),
                "order": order,
                "converged": rep.converged,
                "min_margin": rep.min_margin,
                "wall_time": rep.wall_time,
            })
            prev = (h, rep.sup_error)
    return rows


# ---------------------------------------------------------------- commands


def cmd_validate(args):
    m = RunManifest("validate", _options(args, "resolution", "alpha"), args.seed, args.problem)
    run = _run_dir(args, m.inputs())
    try:
        spec = load_problem(args.problem, args.resolution, args.alpha)
    except ValidationError as exc:
        print(f"FAIL  load: {exc}")
        m.summary = {"passed": False, "error": str(exc)}
        m.outputs.append(_write_json(run / "report.json", {"error": str(exc)}))
        m.write(run)
        return EXIT_FAIL
    ok, rep = validate_spec(spec)
    for name, passed in rep["checks"].items():
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    m.summary = {"passed": ok, **rep["checks"]}
    m.outputs.append(_write_json(run / "report.json", rep))
    m.write(run)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve(args):
    opts = _options(args, "resolution", "alpha", "tol", "max_newton", "t_step")
    m = RunManifest("solve", opts, args.seed, args.problem)
    run = _run_dir(args, m.inputs())
    try:
        spec = load_problem(args.problem, args.resolution, args.alpha)
    except ValidationError as exc:
        print(f"validation failed: {exc}")
        m.summary = {"passed": False, "error": str(exc)}
        m.write(run)
        return EXIT_FAIL
    ok, rep = validate_spec(spec)
    if not ok:
        print("validation failed: " + ", ".join(k for k, v in rep["checks"].items() if not v))
        m.summary = {"passed": False, "validation": rep["checks"]}
        m.outputs.append(_write_json(run / "report.json", {"validation": rep}))
        m.write(run)
        return EXIT_FAIL
    try:
        result = solver.solve_dirichlet(spec, _solver_options(args))
    except (NonconvergenceError, ResourceError, StepFailure) as exc:
        diag = getattr(exc, "diagnostics", None) or {}
        path = _write_json(run / "report.json", {"error": str(exc), "type": type(exc).__name__,
                                                  "diagnostics": {k: v for k, v in diag.items() if k != "log"}})
        m.outputs.append(path)
        if "log" in diag:
            m.outputs.append(_write_log(run / "log.csv", diag["log"]))
        m.summary = {"passed": False, "error": str(exc)}
        m.write(run)
        print(f"solver failed: {exc}\ndiagnostics: {path}")
        return EXIT_SOLVER
    extra = {"problem": str(Path(args.problem).resolve()), "problem_hash": m.problem_hash,
             "resolution": spec.domain.resolution, "alpha": spec.alpha}
    m.outputs.extend(write_binary(run / "solution.bin", spec.domain, result.u, extra))
    m.outputs.append(_write_log(run / "log.csv", result.log))
    summary = result.summary()
    m.outputs.append(_write_json(run / "report.json", {"solve": summary, "validation": rep}))
    m.summary = {"passed": bool(result.converged), "final_residual": result.final_residual,
                 "admissibility_margin": result.margin}
    m.write(run)
    print(f"final residual {result.final_residual:.3e} (tolerance {result.tolerance:.3e})")
    print(f"admissibility margin {result.margin:.6g} (minimum along path {result.min_margin:.6g})")
    if result.sup_error is not None:
        print(f"sup error vs exact solution {result.sup_error:.3e}")
    print(f"output: {run}")
    return EXIT_OK if result.converged else EXIT_SOLVER


def cmd_study(args):
    fam_path = Path(args.family)
    try:
        fam = json.loads(fam_path.read_text())
    except OSError as exc:
        raise ProblemFileError(f"cannot read {fam_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{fam_path}: line {exc.lineno}: {exc.msg}", field=f"line {exc.lineno}") from exc
    for key in ("problem", "resolutions"):
        if key not in fam:
            raise ProblemFileError(f"study file is missing field {key!r}", field=key)
    problem = Path(fam["problem"])
    if not problem.is_absolute():
        problem = fam_path.parent / problem
    opts = _options(args, "tol", "max_newton", "t_step")
    m = RunManifest("study", {**opts, "family": fam}, args.seed, problem)
    run = _run_dir(args, m.inputs())
    try:
        rows = convergence_study(problem, fam["resolutions"], fam.get("alphas"), _solver_options(args))
    except (NonconvergenceError, ResourceError, StepFailure) as exc:
        m.summary = {"passed": False, "error": str(exc)}
        m.outputs.append(_write_json(run / "report.json", {"error": str(exc)}))
        m.write(run)
        print(f"solver failed: {exc}")
        return EXIT_SOLVER
    path = run / "study.csv"
    fields = ["alpha", "resolution", "h", "sup_error", "residual", "newton_iterations", "order", "converged",
              "min_margin", "wall_time"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if r[k] is None else r[k] for k in fields})
    m.outputs.append(path)
    m.outputs.append(_write_json(run / "report.json", {"rows": rows}))
    m.summary = {"passed": all(r["converged"] for r in rows)}
    m.write(run)
    for r in rows:
        order = "" if r["order"] is None else f"{r['order']:.3f}"
        err = "" if r["sup_error"] is None else f"{r['sup_error']:.3e}"
        print(f"alpha={r['alpha']} res={r['resolution']:3d} err={err} residual={r['residual']:.2e} order={order}")
    return EXIT_OK if m.summary["passed"] else EXIT_SOLVER


def _need_state(args):
    if not args.state:
        raise UsageError(f"verify {args.suite} needs --state <solution dir>")
    return load_state(args.state)


def _run_suite(args):
    suite = args.suite
    if suite == "glz":
        r = verify.check_glz(args.trials or 10_000, seed=args.seed, threads=args.threads)
        return r.to_dict(), r.passed
    if suite == "block-lemma":
        r = verify.block_lemma_suite(args.trials or 100_000, seed=args.seed, threads=args.threads)
        return r.to_dict(), r.passed
    if suite == "key-lemma":
        spec, u, _ = _need_state(args)
        r = verify.check_key_lemma(u, spec, N=args.N, theta=args.theta)
        return r.to_dict(), r.passed
    if suite == "barrier":
        spec, u, _ = _need_state(args)
        sweep = verify.sweep_barrier(u, spec)
        return verify._jsonable(sweep), sweep["nonempty"]
    if suite == "m0":
        spec, u, _ = _need_state(args)
        rep = verify.check_tangential_quantity_m0(u, spec, seed=args.seed)
        rep["psi_probe"] = verify.m0_psi_probe(u, spec)
        return verify._jsonable(rep), rep["passed"] and rep.get("link_holds", True)
    if suite == "scalings":
        if not args.problem:
            raise UsageError("verify scalings needs --problem <file>")
        base = load_problem(args.problem, args.resolution, args.alpha)
        scales = [float(s) for s in args.scales.split(",")]
        family = []
        for s in scales:
            spec = base.with_phi_scaled(s)
            spec.name = f"{base.name or 'problem'} x{s:g}"
            family.append((spec, solver.solve_dirichlet(spec)))
        rep = verify.check_estimate_scalings(family)
        return verify._jsonable(rep), rep["passed"]
    raise UsageError(f"unknown suite {suite}")


def _headline(report):
    """Scalar entries of a report (top level and ``details``) for the console."""
    items = list(report.items()) + list(report.get("details", {}).items())
    return [(k, v) for k, v in items if isinstance(v, (int, float, str, bool))]


def cmd_verify(args):
    opts = _options(args, "suite", "trials", "state", "scales", "resolution", "alpha", "N", "theta")
    problem = args.problem if args.problem else None
    if args.state:
        opts["state_hash"] = file_hash(Path(args.state) / "solution.bin")
    m = RunManifest("verify", opts, args.seed, problem)
    run = _run_dir(args, m.inputs())
    report, passed = _run_suite(args)
    m.outputs.append(_write_json(run / "report.json", report))
    m.summary = {"passed": bool(passed), "suite": args.suite}
    m.write(run)
    for key, val in _headline(report):
        print(f"{key}: {val}")
    print(f"report: {run / 'report.json'}")
    print(f"{'PASS' if passed else 'FAIL'}  verify {args.suite}")
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "study": cmd_study, "verify": cmd_verify}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=max(1, args.threads)):
            return COMMANDS[args.command](args)
    except (ProblemFileError, OSError, UsageError, ConfigurationError, UnsupportedOperationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (NonconvergenceError, ResourceError, StepFailure) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HessquotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
