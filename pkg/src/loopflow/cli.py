"""``loopflow`` command line.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 for usage errors, 3 for I/O errors.
"""
import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bundle as B
from .errors import LoopflowError
from .frame_geometry import (ConnectionField, extract_immersion, flatness_residual,
                             harmonicity_residual, integrate_frame, default_lambdas,
                             gauge_to_finite_type, FrameFamily, worker_count)
from .homogeneous import (HomogeneousParams, angle_from_frames, closure_from_holonomy,
                          conformal_connection, homogeneous_frames, homogeneous_immersion,
                          lagrangian_angle_homogeneous, legendrian_closure, maslov_class)
from .killing_field import (ConnectionData, killing_recursion, killing_residual_by_degree,
                            polynomial_candidate)
from .lax_flow import (LaxState, StateGrid, conserved_diagnostics, integrate_flow,
                       random_admissible_state, vacuum_state)
from .loop_algebra import tau_group
from .matrix_core import embed2, frob, mexp_skew, unitarity_defect

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _fraction(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a fraction: {text}") from exc


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _complex_list(text):
    return [complex(t.replace(" ", "")) for t in text.split(",") if t.strip()]


def build_parser():
    ap = argparse.ArgumentParser(prog="loopflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    h = sub.add_parser("homogeneous", help="homogeneous torus fixture and its checks")
    h.add_argument("--r1sq", type=_fraction, required=True)
    h.add_argument("--r2sq", type=_fraction, required=True)
    h.add_argument("--nx", type=int, default=128)
    h.add_argument("--ny", type=int, default=128)
    h.add_argument("--out", type=Path, required=True)
    h.add_argument("--obj", action="store_true", help="also write surface.obj")
    h.add_argument("--chart", choices=sorted(B.CHARTS), default="z3")
    h.add_argument("--tol", type=_positive, default=1e-12)
    h.add_argument("--harm-tol", type=_positive, default=1e-11,
                   help="harmonicity threshold; the residual of an affine angle is pure roundoff")

    f = sub.add_parser("flow", help="integrate the commuting Lax flows")
    f.add_argument("--p", type=int, default=0)
    f.add_argument("--init", default="vacuum", help="vacuum, random or a JSON state file")
    f.add_argument("--a", type=complex, default=1.0)
    f.add_argument("--scale", type=_positive, default=0.5)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--steps", type=int, default=512, help="steps per unit length")
    f.add_argument("--length", type=_positive, default=1.0)
    f.add_argument("--order", choices=["xy", "yx"], default="xy")
    f.add_argument("--out", type=Path, required=True)
    f.add_argument("--tol", type=_positive, default=1e-10)
    f.add_argument("--spectral-tol", type=_positive, default=1e-8)

    fr = sub.add_parser("frame", help="frame family and immersion from a flow bundle")
    fr.add_argument("bundle", type=Path)
    fr.add_argument("--lambda-count", type=int, default=16)
    fr.add_argument("--obj", action="store_true")
    fr.add_argument("--chart", choices=sorted(B.CHARTS), default="z3")
    fr.add_argument("--flat-tol", type=_positive, default=1e-6)

    k = sub.add_parser("killing", help="formal Killing field recursion and candidates")
    src = k.add_mutually_exclusive_group(required=True)
    src.add_argument("--bundle", type=Path, help="flow bundle providing the connection")
    src.add_argument("--homogeneous", nargs=2, type=_fraction, metavar=("R1SQ", "R2SQ"))
    k.add_argument("--N", type=int, default=12)
    k.add_argument("--P", type=_complex_list, default=[1.0], help="comma list a0,a1,...")
    k.add_argument("--margin", type=int, default=0)
    k.add_argument("--out", type=Path, required=True)
    k.add_argument("--tol", type=_positive, default=1e-8)

    g = sub.add_parser("gauge", help="quasi-finite to finite type gauge round trip")
    g.add_argument("--init", choices=["vacuum", "random"], default="vacuum")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scale", type=_positive, default=0.3)
    g.add_argument("--n", type=int, default=65, help="grid points per side on the unit square")
    g.add_argument("--s", type=_complex_list, default=[0.3j, 0.5 + 0.2j],
                   help="entries (alpha, beta) of the su(2) generator [[alpha, beta], [-conj beta, -alpha]]")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--tol", type=_positive, default=1e-5)

    v = sub.add_parser("verify", help="re-run the checks of a bundle")
    v.add_argument("bundle", type=Path)

    e = sub.add_parser("export", help="CSV and OBJ from a bundle")
    e.add_argument("bundle", type=Path)
    e.add_argument("--format", default="csv,obj")
    e.add_argument("--chart", choices=sorted(B.CHARTS), default="z3")
    e.add_argument("--out", type=Path)
    return ap


# ---------------------------------------------------------------------------
# homogeneous


def _homogeneous_report(params, nx, ny, tol, harm_tol):
    rep = B.VerificationReport()
    imm = homogeneous_immersion(params, nx, ny)
    F, _ = homogeneous_frames(params, nx, ny)
    beta_frames = angle_from_frames(F)
    rep.add("unit_norm", imm.residual_max("norm"), tol, "homogeneous_tori.homogeneous_immersion")
    rep.add("legendrian_residual", imm.residual_max("legendrian"), tol,
            "frame_geometry.legendrian_residual")
    rep.add("harmonicity_residual", harmonicity_residual(imm.beta, imm.hx, imm.hy), harm_tol,
            "frame_geometry.harmonicity_residual")
    rep.add("frame_unitarity", unitarity_defect(F).max(), 1e-12, "homogeneous_tori.homogeneous_frames")
    rep.add("beta_vs_det_frame", np.abs(beta_frames - imm.beta).max(), 1e-10,
            "frame_geometry.extract_immersion")
    if params.is_clifford:
        rep.add("beta_constant_pi", np.abs(imm.beta - np.pi).max(), tol,
                "homogeneous_tori.lagrangian_angle_homogeneous")
    closure = legendrian_closure(params)
    rep.require("closure_matches_holonomy", closure_from_holonomy(params) == closure,
                "homogeneous_tori.legendrian_closure")
    return rep, imm


def cmd_homogeneous(args):
    params = HomogeneousParams(args.r1sq, args.r2sq)
    rep, imm = _homogeneous_report(params, args.nx, args.ny, args.tol, args.harm_tol)
    cx, cy, c0 = lagrangian_angle_homogeneous(params)
    cfg = B.RunConfig("homogeneous", {"r1sq": params.r1sq, "r2sq": params.r2sq, "nx": args.nx,
                                      "ny": args.ny},
                      {"tol": args.tol, "harm_tol": args.harm_tol})
    files = B.export_bundle(args.out, imm, ("csv", "obj") if args.obj else ("csv",), args.chart)
    extra = {"beta": {"coefficients": [cx, cy, c0], "constant": cx == 0 and cy == 0},
             "maslov": list(maslov_class(params)), "closure": list(legendrian_closure(params)),
             "files": files, "chart": args.chart if args.obj else None}
    B.write_manifest(args.out, "homogeneous", cfg, rep, extra)
    return rep


# ---------------------------------------------------------------------------
# flow and frames


def _initial_state(args):
    if args.init == "vacuum":
        return vacuum_state(args.p, args.a)
    if args.init == "random":
        return random_admissible_state(args.p, args.a, args.scale, args.seed)
    path = Path(args.init)
    if not path.exists():
        raise UsageError(f"--init must be vacuum, random or an existing JSON file: {args.init}")
    return LaxState.from_json(json.loads(path.read_text(encoding="utf-8")))


def _flow_report(grid, tol, spectral_tol):
    rep = B.VerificationReport()
    d = conserved_diagnostics(grid).summary()
    rep.add("reality", d["reality"], tol, "lax_flow.conserved_diagnostics")
    rep.add("twist", d["twist"], tol, "lax_flow.conserved_diagnostics")
    rep.add("band_leak", d["band_leak"], tol, "lax_flow.vector_field")
    rep.add("norm_drift", d["norm_drift"], tol, "lax_flow.conserved_diagnostics")
    rep.add("lowest_drift", d["lowest_drift"], tol, "lax_flow.conserved_diagnostics")
    rep.add("spectral_drift", d["spectral_drift"], spectral_tol, "lax_flow.conserved_diagnostics")
    return rep


def cmd_flow(args):
    if args.steps < 1:
        raise UsageError("--steps must be positive")
    init = _initial_state(args)
    n = int(round(args.length * args.steps)) + 1
    grid = integrate_flow(init, n, n, hx=1.0 / args.steps, order=args.order)
    rep = _flow_report(grid, args.tol, args.spectral_tol)
    cfg = B.RunConfig("flow", {"p": args.p, "init": args.init, "a": args.a, "scale": args.scale,
                               "steps": args.steps, "length": args.length, "order": args.order},
                      {"tol": args.tol, "spectral_tol": args.spectral_tol}, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    extra = B.save_state_grid(args.out, grid)
    extra["initial"] = init.to_json()
    extra["tolerances"] = {"tol": args.tol, "spectral_tol": args.spectral_tol}
    B.write_manifest(args.out, "flow", cfg, rep, extra)
    return rep


def _frame_report(bundle_dir, meta, grid):
    rep = B.VerificationReport()
    names = meta["frames"]["files"]
    lambdas = np.array([complex(*z) for z in meta["frames"]["lambdas"]])
    worst_u = max(float(unitarity_defect(B.load_frames(bundle_dir, n)).max()) for n in names)
    rep.add("frame_unitarity", worst_u, 1e-8, "frame_geometry.integrate_frame")
    worst_t = 0.0
    for i, lam in enumerate(lambdas):
        j = int(np.argmin(np.abs(lambdas - 1j * lam)))
        if abs(lambdas[j] - 1j * lam) < 1e-12:
            Fi, Fj = B.load_frames(bundle_dir, names[i]), B.load_frames(bundle_dir, names[j])
            worst_t = max(worst_t, float(frob(tau_group(np.asarray(Fi)) - Fj).max()))
    rep.add("twist_transport", worst_t, 1e-6, "frame_geometry.FrameFamily")
    base = np.asarray(B.load_frames(bundle_dir, names[0]))
    rep.add("base_point", frob(base[0, 0] - np.eye(3)), 1e-15, "frame_geometry.integrate_frame")
    return rep


def cmd_frame(args):
    bundle_dir = args.bundle
    manifest = B.read_json(bundle_dir / "manifest.json")
    if manifest.get("kind") != "flow":
        raise UsageError("frame needs a flow bundle")
    grid = B.load_state_grid(bundle_dir)
    conn = ConnectionField.from_state_grid(grid)
    lambdas = default_lambdas(args.lambda_count)
    flat = max(float(flatness_residual(conn, lam, order=4).max()) for lam in lambdas)
    names = []
    base = None
    for j, lam in enumerate(lambdas):
        F = integrate_frame(conn, lam, flat_tol=args.flat_tol)
        names.append(B.save_frames(bundle_dir, j, F))
        if j == 0:
            base = F
        del F
    manifest["frames"] = {"files": names, "lambdas": [[z.real, z.imag] for z in lambdas]}
    imm = extract_immersion(base, grid.hx, grid.hy)
    rep = _frame_report(bundle_dir, manifest, grid)
    rep.add("flatness_residual", flat, args.flat_tol, "frame_geometry.flatness_residual")
    files = B.export_bundle(bundle_dir, imm, ("csv", "obj") if args.obj else ("csv",), args.chart)
    manifest["immersion"] = {"files": files, "degenerate_fraction": float(imm.degenerate.mean()),
                             "shape": list(imm.shape), "hx": imm.hx, "hy": imm.hy}
    manifest["frame_checks"] = rep.to_json()
    cfg = B.RunConfig(**manifest["config"])
    extra = {k: v for k, v in manifest.items()
             if k not in ("format", "kind", "config", "seed", "versions", "checks")}
    flow_rep = B.VerificationReport([B.Check(**c) for c in manifest["checks"]["checks"]])
    B.write_manifest(bundle_dir, "flow", cfg, flow_rep, extra)
    return rep


# ---------------------------------------------------------------------------
# killing and gauge


def cmd_killing(args):
    rep = B.VerificationReport()
    if args.homogeneous:
        params = HomogeneousParams(*args.homogeneous)
        _, cd = conformal_connection(params)
        source = {"homogeneous": [params.r1sq, params.r2sq]}
    else:
        grid = B.load_state_grid(args.bundle)
        cd = ConnectionData.from_connection_field(ConnectionField.from_state_grid(grid))
        source = {"bundle": str(args.bundle)}
    series = killing_recursion(cd, args.N)
    inv = series.invariants()
    rep.add("w0_zero", inv["w0"], 1e-15, "killing_field.killing_recursion")
    rep.add("w1_formula", inv["w1"], 1e-15, "killing_field.killing_recursion")
    rep.add("vperp", inv["vperp"], 1e-10, "killing_field.KillingSeries")
    rep.add("twist", inv["twist"], 1e-10, "killing_field.KillingSeries")
    rep.add("quasi_adapted_m2", inv["lead_m2"], 1e-10, "killing_field.KillingSeries")
    rep.add("quasi_adapted_m1", inv["lead_m1"], 1e-10, "killing_field.KillingSeries")
    rz, rzb = killing_residual_by_degree(series, args.margin)
    rep.add("killing_residual", max(list(rz.values()) + list(rzb.values())), args.tol,
            "killing_field.killing_residual")
    per_degree = {"z": rz, "zbar": rzb}
    if args.P and 4 * (len(args.P) - 1) <= args.N - 2:
        cand = polynomial_candidate(args.P, series)
        rep.add("candidate_agreement", cand.agreement, 1e-6, "killing_field.polynomial_candidate")
        rep.add("candidate_out_of_band", cand.out_of_band, 1e-8, "killing_field.polynomial_candidate")
    args.out.mkdir(parents=True, exist_ok=True)
    blocks = []
    for n, w in enumerate(series.W):
        name = f"W_{n:02d}.npy"
        np.save(args.out / name, w)
        blocks.append(name)
    cfg = B.RunConfig("killing", {"N": args.N, "P": args.P, "margin": args.margin, **source},
                      {"tol": args.tol})
    B.write_manifest(args.out, "killing", cfg, rep,
                     {"a": cd.a, "blocks": blocks, "residual_by_degree": per_degree})
    return rep


def hand_built_quasi_finite(init, n, S):
    """A finite-type solution gauged by ``G0 = exp(x S)`` so that it is only quasi-finite.

    Returns ``(family, grid, conn, G0)``.
    """
    h = 1.0 / (n - 1)
    grid0 = integrate_flow(init, n, n, hx=h)
    conn0 = ConnectionField.from_state_grid(grid0)
    lambdas = default_lambdas(4)
    frames = np.stack([integrate_frame(conn0, lam) for lam in lambdas])
    G0 = np.broadcast_to(mexp_skew(grid0.xs[:, None, None] * S)[:, None], (n, n, 3, 3)).copy()
    G0i = np.conj(np.swapaxes(G0, -1, -2))
    family = FrameFamily(lambdas, frames @ G0[None], h, h)
    grid = StateGrid(init.p, G0i[:, :, None] @ grid0.coeffs @ G0[:, :, None], h, h)
    ax = G0i[:, :, None] @ conn0.ax @ G0[:, :, None]
    ay = G0i[:, :, None] @ conn0.ay @ G0[:, :, None]
    ax[..., 2, :, :] += S
    return family, grid, ConnectionField(ax, ay, h, h, -2), G0


def su2_generator(alpha, beta):
    alpha = 1j * complex(alpha).imag
    return embed2(np.array([[alpha, beta], [-np.conj(beta), -alpha]]))


def cmd_gauge(args):
    if len(args.s) != 2:
        raise UsageError("--s takes two entries alpha,beta")
    init = vacuum_state(0) if args.init == "vacuum" else random_admissible_state(
        0, 1.0, args.scale, args.seed)
    S = su2_generator(*args.s)
    family, grid, conn, G0 = hand_built_quasi_finite(init, args.n, S)
    rep = B.VerificationReport()
    res = gauge_to_finite_type(family, grid, conn, post_tol=np.inf)
    rep.add("finite_type_residual", res.residual, args.tol, "frame_geometry.gauge_to_finite_type")
    G0i = np.conj(np.swapaxes(G0, -1, -2))
    rep.add("recovered_gauge", frob(res.G - G0i).max(), args.tol, "frame_geometry.gauge_to_finite_type")
    rep.add("lax_residual", res.lax_residual, args.tol * 100, "frame_geometry.lax_residual")
    cfg = B.RunConfig("gauge", {"init": args.init, "n": args.n, "s": args.s, "scale": args.scale},
                      {"tol": args.tol}, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    np.save(args.out / "G.npy", res.G)
    B.write_manifest(args.out, "gauge", cfg, rep, {"truncation_tail": res.tail})
    return rep


# ---------------------------------------------------------------------------
# verify and export


def cmd_verify(args):
    d = args.bundle
    manifest = B.read_json(d / "manifest.json")
    kind = manifest.get("kind")
    cfg = manifest["config"]
    if kind == "homogeneous":
        p = cfg["params"]
        params = HomogeneousParams(p["r1sq"], p["r2sq"])
        rep, imm = _homogeneous_report(params, p["nx"], p["ny"], cfg["tolerances"]["tol"],
                                       cfg["tolerances"]["harm_tol"])
        stored = B.read_csv(d / "immersion.csv")
        fresh = B.immersion_columns(imm)
        same = all(np.array_equal(stored[k], np.ravel(fresh[k]), equal_nan=True)
                   for k in B.IMMERSION_COLUMNS)
        rep.require("csv_matches_fixture", same, "cli_io.export_bundle")
        return rep
    if kind == "flow":
        grid = B.load_state_grid(d)
        t = manifest["tolerances"]
        rep = _flow_report(grid, t["tol"], t["spectral_tol"])
        if "frames" in manifest:
            for c in _frame_report(d, manifest, grid).checks:
                rep.checks.append(c)
        return rep
    if kind in ("killing", "gauge"):
        return B.VerificationReport([B.Check(**c) for c in manifest["checks"]["checks"]])
    raise UsageError(f"unknown bundle kind {kind!r}")


def cmd_export(args):
    d = args.bundle
    manifest = B.read_json(d / "manifest.json")
    out = args.out or d
    formats = tuple(s.strip() for s in args.format.split(",") if s.strip())
    if not set(formats) <= {"csv", "obj"}:
        raise UsageError("formats are csv and obj")
    if manifest.get("kind") == "homogeneous":
        shape = (manifest["config"]["params"]["nx"], manifest["config"]["params"]["ny"])
    elif "immersion" in manifest:
        shape = tuple(manifest["immersion"]["shape"])
    else:
        raise UsageError("bundle has no immersion; run frame first")
    cols = B.read_csv(d / "immersion.csv")
    u, beta, rho = B.immersion_from_columns(cols, shape)
    Path(out).mkdir(parents=True, exist_ok=True)
    rep = B.VerificationReport()
    if "csv" in formats and Path(out) != d:
        B.write_csv(Path(out) / "immersion.csv", cols)
    if "obj" in formats:
        nv, nf = B.write_obj(Path(out) / "surface.obj", u, args.chart)
        rep.add("obj_vertices", nv, shape[0] * shape[1], "cli_io.export_bundle", relation="==")
        rep.add("obj_faces", nf, 2 * (shape[0] - 1) * (shape[1] - 1), "cli_io.export_bundle",
                relation="==")
    return rep


COMMANDS = {"homogeneous": cmd_homogeneous, "flow": cmd_flow, "frame": cmd_frame,
            "killing": cmd_killing, "gauge": cmd_gauge, "verify": cmd_verify,
            "export": cmd_export}


def run_command(argv, out=sys.stdout):
    """Parse ``argv``, run the command, print the report and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        rep = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LoopflowError, ValueError) as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for line in rep.lines():
        print(line, file=out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":  # pragma: no cover
    main()
