"""``fbms`` command line: classify | solve | verify | gap | reference.

Exit codes: 0 ok, 2 bad input (I/O, parse), 3 hypothesis unmet, predicate
false or solver not converged, 4 numerical failure.  Every run writes
``manifest.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .domains import (
    Ball, Ellipsoid, Outcome, Quadric, QuadricSpec, Rotational, Verdict, classify, load_domain,
)
from .errors import (
    DegenerateGradient, FBMSError, HypothesisUnmet, InsufficientNeighborhood, MeshDegenerated, ParseError,
    ProjectionDiverged, TangentProjectionDegenerate,
)

EXIT_OK, EXIT_INPUT, EXIT_HYPOTHESIS, EXIT_NUMERIC = 0, 2, 3, 4
GAP_CHECKS = ("ball-gap", "ellipsoid-gap", "ellipsoid-convexity", "jacobi", "boundary-principal")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# schemas and output


def load_schema(name: str) -> dict:
    return json.loads(resources.files("fbms").joinpath("schemas", f"{name}.schema.json").read_text())


def validate(doc: dict, schema: str) -> None:
    import jsonschema

    jsonschema.validate(doc, load_schema(schema))


class Run:
    """Collects outputs of one command and writes its manifest."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.out = Path(args.out)
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.domain: dict | None = None
        self.config: dict = {}
        self.t0 = time.perf_counter()

    def write_json(self, name: str, doc: dict, schema: str | None = None) -> Path:
        if schema:
            validate(doc, schema)
        return self.write_text(name, json.dumps(doc, indent=2) + "\n")

    def write_text(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        p.write_text(text)
        self.outputs.append(str(p))
        return p

    def manifest(self, code: int, message: str = "") -> None:
        doc = {
            "command": self.command,
            "inputs": self.inputs,
            "domain": self.domain,
            "config": self.config,
            "out_dir": str(self.out),
            "outputs": list(self.outputs),
            "version": __version__,
            "wall_time": time.perf_counter() - self.t0,
            "exit_code": code,
        }
        if message:
            doc["message"] = message
        validate(doc, "manifest")
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _load_mesh(run: Run, path: str):
    from .mesh import load_obj

    run.inputs.append(path)
    try:
        return load_obj(path)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc.strerror or exc}") from exc


def _load_domain(run: Run, path: str):
    run.inputs.append(path)
    dom = load_domain(path)
    with contextlib.suppress(NotImplementedError):
        run.domain = dom.to_dict()
    return dom


def _verdict(dom):
    """Balls classify as the unit-ball quadric (the verdicts are scale invariant);
    ellipsoids with ``a != b`` fall outside the {-1, 0, 1} quadric family."""
    if isinstance(dom, Ball):
        return classify(QuadricSpec((1, 1, 1), 0.0, 0.0))
    if isinstance(dom, Ellipsoid):
        if dom.spec.a == dom.spec.b:
            return classify(QuadricSpec((1, 1, 1), 0.0, 0.0))
        return Verdict(Outcome.UNCONSTRAINED, "ellipsoid of revolution: no classification result applies; "
                       "see the ellipsoid gap checks")
    if isinstance(dom, (Quadric, Rotational)):
        return classify(dom)
    raise CliError(EXIT_INPUT, f"domain {dom!r} cannot be classified")


# ---------------------------------------------------------------------------
# commands


def cmd_classify(args, run: Run) -> int:
    dom = _load_domain(run, args.domain)
    verdict = _verdict(dom).to_dict()
    run.write_json("verdict.json", verdict, "verdict")
    print(f"{verdict['outcome']}: {verdict['description'] or '-'}  [{verdict['citation']}]")
    return EXIT_OK


def cmd_solve(args, run: Run) -> int:
    from .mesh import save_obj
    from .solver import SolveConfig, solve_free_boundary

    mesh = _load_mesh(run, args.mesh)
    dom = _load_domain(run, args.domain)
    overrides = {k: v for k, v in (("max_iters", args.max_iters), ("tol_H", args.tol_h),
                                   ("tol_angle", args.tol_angle), ("step", args.step)) if v is not None}
    run.config = overrides
    try:
        cfg = SolveConfig(**overrides)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    final, report = solve_free_boundary(mesh, dom, cfg)
    run.out.mkdir(parents=True, exist_ok=True)
    save_obj(final, run.out / "final.obj")
    run.outputs.append(str(run.out / "final.obj"))
    run.write_json("report.json", report.to_dict(trace=args.trace), "solve_report")
    print(f"iterations={report.iterations} area={report.final_area:.8g} residual_H={report.residual_H:.3e} "
          f"residual_angle={report.residual_angle:.3e} converged={report.converged}")
    if not report.converged:
        run.message = f"not converged after {report.iterations} iterations"
        return EXIT_HYPOTHESIS
    return EXIT_OK


def _snap_for(mesh_path: str):
    """Snap map of the reference whose sidecar sits next to the OBJ, if any."""
    from .reference import reference_from_sidecar

    side = Path(mesh_path).with_suffix(".json")
    if not side.exists():
        return None
    try:
        return reference_from_sidecar(json.loads(side.read_text())).snap
    except (ValueError, json.JSONDecodeError):
        return None


def cmd_verify(args, run: Run) -> int:
    from .identities import IdentityKind, check_identity

    mesh = _load_mesh(run, args.mesh)
    dom = _load_domain(run, args.domain)
    try:
        kind = IdentityKind.parse(args.identity)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    levels = args.levels or 1
    gates = {"gate_H": args.tol_h if args.tol_h is not None else 1e-2,
             "gate_angle": args.tol_angle if args.tol_angle is not None else 1e-1}
    snap = None if args.no_snap else _snap_for(args.mesh)
    run.config = {"identity": str(kind), "levels": levels, **gates, "snap": snap is not None}
    try:
        report = check_identity(kind, mesh, dom, levels=levels, snap=snap, **gates)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    run.write_json("report.json", report.to_dict(), "identity_report")
    run.write_text("report.csv", report.to_csv())
    print(report.table())
    if report.status == "hypothesis-unmet":
        h = report.hypothesis
        run.message = (f"hypothesis unmet: surface is not free-boundary minimal "
                       f"(residual_H={h['residual_H']:.3e}, angle={h['residual_angle']:.3e})")
        print(run.message, file=sys.stderr)
        return EXIT_HYPOTHESIS
    return EXIT_OK


def cmd_gap(args, run: Run) -> int:
    from . import gap
    from .discrete_ops import compute_geometry

    mesh = _load_mesh(run, args.mesh)
    dom = _load_domain(run, args.domain)
    gates = {"gate_H": args.tol_h if args.tol_h is not None else 1e-2,
             "gate_angle": args.tol_angle if args.tol_angle is not None else 1e-1}
    run.config = {"check": args.check, **gates}
    geom = compute_geometry(mesh)
    if args.check in ("ellipsoid-gap", "ellipsoid-convexity") and not isinstance(dom, Ellipsoid):
        raise CliError(EXIT_INPUT, f"--check {args.check} needs an ellipsoid domain")
    if args.check == "ball-gap":
        if not isinstance(dom, Ball) or dom.radius != 1.0:
            raise CliError(EXIT_INPUT, "--check ball-gap needs the unit ball")
        rep = gap.gap_ball(mesh, geom, **gates)
    elif args.check == "ellipsoid-gap":
        rep = gap.gap_ellipsoid(mesh, geom, dom.spec, **gates)
    elif args.check == "ellipsoid-convexity":
        rep = gap.boundary_convexity(mesh, geom, dom.spec)
    elif args.check == "jacobi":
        rep = gap.jacobi_residual(mesh, geom)
    else:
        rep = gap.boundary_principal(mesh, geom, dom)
    run.write_json("report.json", rep.to_dict(), "gap_report")
    if args.csv:
        rows = ["vertex,value"] + [f"{i},{v!r}" for i, v in enumerate(rep.values.tolist())]
        run.write_text("values.csv", "\n".join(rows) + "\n")
    verdict = "holds" if rep.hypothesis_satisfied else "fails"
    print(f"{rep.kind}: max={rep.max_value:.6g} bound={rep.bound:g} -> {verdict} (witness vertex {rep.witness})")
    for pl in rep.per_loop:
        print("  " + ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in pl.items()))
    if not rep.hypothesis_satisfied:
        run.message = f"predicate false: {rep.kind} max {rep.max_value:.6g} exceeds bound {rep.bound:g}"
        print(run.message, file=sys.stderr)
        return EXIT_HYPOTHESIS
    return EXIT_OK


def _param(text: str):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, float(val)
    except ValueError:
        return key, val


def cmd_reference(args, run: Run) -> int:
    from .reference import export_reference, make_reference

    params = dict(args.param or [])
    run.config = {"kind": args.kind, "resolution": args.resolution, **params}
    try:
        mesh, ref = make_reference(args.kind, args.resolution, **params)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    run.domain = ref.domain.to_dict()
    stem = args.name or f"{args.kind}-{args.resolution}"
    obj = run.out / f"{stem}.obj"
    run.out.mkdir(parents=True, exist_ok=True)
    side = export_reference(mesh, ref, obj)
    validate(json.loads(side.read_text()), "reference_sidecar")
    run.outputs += [str(obj), str(side)]
    print(f"{obj}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles; "
          f"exact area {ref.exact_area:.12g}, boundary length {ref.exact_boundary_length:.12g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="fbms-out", help="output directory (default: fbms-out)")
    common.add_argument("--seed", type=int, default=0, help="seed for any internal randomness (default 0)")
    common.add_argument("--levels", type=int, help="refinement levels for verify (default 1)")
    common.add_argument("--tol-h", type=float, help="mean-curvature tolerance (solve) or gate (verify, gap)")
    common.add_argument("--tol-angle", type=float, help="free-boundary angle tolerance or gate")
    common.add_argument("--max-iters", type=int, help="solver iteration cap")

    p = argparse.ArgumentParser(prog="fbms", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("classify", parents=[common], help="classify a domain spec")
    s.add_argument("domain", help="domain JSON")

    s = sub.add_parser("solve", parents=[common], help="flow a mesh to a free-boundary minimal surface")
    s.add_argument("mesh", help="initial OBJ")
    s.add_argument("domain", help="domain JSON")
    s.add_argument("--step", type=float, help="initial step (default 0.1 h^2)")
    s.add_argument("--trace", action="store_true", help="include the energy trace in report.json")

    s = sub.add_parser("verify", parents=[common], help="check an integral identity with refinement")
    s.add_argument("mesh", help="surface OBJ")
    s.add_argument("domain", help="domain JSON")
    s.add_argument("--identity", required=True, help="e.g. minkowski, fundamental:x1, homogeneous:2")
    s.add_argument("--no-snap", action="store_true", help="ignore a reference sidecar next to the OBJ")

    s = sub.add_parser("gap", parents=[common], help="evaluate a gap predicate")
    s.add_argument("mesh", help="surface OBJ")
    s.add_argument("domain", help="domain JSON")
    s.add_argument("--check", required=True, choices=GAP_CHECKS)
    s.add_argument("--csv", action="store_true", help="also write per-vertex values.csv")

    s = sub.add_parser("reference", parents=[common], help="write a reference surface OBJ and sidecar")
    s.add_argument("--kind", required=True, choices=("equatorial-disk", "critical-catenoid", "ellipsoid-disk",
                                                      "cylinder-disk"))
    s.add_argument("--resolution", type=int, default=32)
    s.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE",
                   help="reference parameter, e.g. plane=meridian (repeatable)")
    s.add_argument("--name", help="output file stem")
    return p


COMMANDS = {"classify": cmd_classify, "solve": cmd_solve, "verify": cmd_verify, "gap": cmd_gap,
            "reference": cmd_reference}


def _thread_limit():
    n = os.environ.get("FBMS_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.random.seed(args.seed)
    run = Run(args, args.command)
    run.message = ""
    try:
        with _thread_limit():
            code = COMMANDS[args.command](args, run)
        msg = run.message
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except ParseError as exc:
        code, msg = EXIT_INPUT, f"parse error: {exc}"
    except HypothesisUnmet as exc:
        code, msg = EXIT_HYPOTHESIS, f"hypothesis unmet: {exc}"
    except (MeshDegenerated, DegenerateGradient, ProjectionDiverged, InsufficientNeighborhood,
            TangentProjectionDegenerate) as exc:
        code, msg = EXIT_NUMERIC, f"numerical failure ({type(exc).__name__}): {exc}"
    except FBMSError as exc:
        code, msg = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    except (OSError, ValueError) as exc:
        code, msg = EXIT_INPUT, f"input error: {exc}"
    if code not in (EXIT_OK,) and msg and msg != run.message:
        print(f"fbms {args.command}: {msg}", file=sys.stderr)
    run.manifest(code, msg)
    return code


if __name__ == "__main__":
    sys.exit(main())
