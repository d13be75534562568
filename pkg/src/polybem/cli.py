"""Batch command-line front-end: every experiment as a reproducible run.

Each subcommand writes ``report.json`` (inputs echoed, residuals, timings)
plus CSV data files into ``--outdir``.  Reports are deterministic: within
a fixed package version, identical inputs produce byte-identical JSON
apart from the ``timestamp`` field.  Numerical kernels run sequentially
(BLAS pinned to the requested thread count, default 1), so results do not
depend on the thread budget.

Exit codes: 0 success, 1 usage error, 2 numerical-certification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time


def _pin_threads() -> None:
    n = os.environ.get("POLYBEM_NUM_THREADS", "1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, n)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="polybem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, panels=32, beta=2.0):
        p.add_argument("--geometry", default="square",
                       choices=["circle", "square", "lshape"])
        p.add_argument("--vertex-file", default=None,
                       help="JSON file with [x, y] vertex pairs (overrides "
                            "--geometry)")
        p.add_argument("--radius", type=float, default=0.5,
                       help="circle radius")
        p.add_argument("--scale", type=float, default=1.0,
                       help="similarity scale applied to polygons")
        p.add_argument("--panels", type=int, default=panels,
                       help="panels per edge (total panels for the circle)")
        p.add_argument("--beta", type=float, default=beta,
                       help="corner grading exponent")
        p.add_argument("--outdir", default=".")
        p.add_argument("--dump-operator", nargs=2, default=None,
                       metavar=("KIND", "PATH"),
                       help="dump an assembled operator (V,K,Kadj,W) as CSV")
        p.add_argument("--dump-mesh", default=None, metavar="PATH",
                       help="dump the panel mesh as CSV")

    p = sub.add_parser("capacity", help="equilibrium density and capacity")
    common(p)
    p.add_argument("--target-robin", type=float, default=0.1)

    p = sub.add_parser("jump-test", help="verify the four jump relations")
    common(p, panels=64)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=None,
                   help="certification threshold on the max residual "
                        "(default 1e-6 circle, 1e-4 polygons)")

    p = sub.add_parser("farfield-test", help="far-field coefficients vs "
                                             "direct moments")
    common(p, panels=64)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=1e-6)

    p = sub.add_parser("solve", help="boundary-integral solvers")
    common(p, panels=64)
    p.add_argument("--problem", required=True,
                   choices=["int-dir", "ext-dir", "int-neu", "ext-neu",
                            "trans1", "trans2", "trans3"])
    p.add_argument("--data", default=None,
                   help="JSON data file {kind: trace|density, values: [...]}"
                        " (default: a built-in smooth datum)")
    p.add_argument("--dump-field", default=None, metavar="PATH",
                   help="CSV dump of the solution field on a sample grid")

    p = sub.add_parser("bergman", help="discrete harmonic Bergman projection")
    common(p, panels=96)
    p.add_argument("--target", default="zsq", choices=["zsq", "rez2", "bump"])
    p.add_argument("--threshold", type=float, default=2e-3)

    p = sub.add_parser("represent", help="expand harmonic targets in the "
                                         "layer-potential basis")
    common(p, panels=16, beta=3.0)
    p.add_argument("--target", default="rez3", choices=["rez3", "corner"])
    p.add_argument("--threshold", type=float, default=1e-3)

    p = sub.add_parser("kernel-svd", help="non-injectivity trend of the "
                                          "trace map")
    common(p, panels=8, beta=3.0)
    p.add_argument("--refinements", type=int, default=3)

    p = sub.add_parser("corner-demo", help="zero-Dirichlet corner function "
                                           "certification")
    common(p, panels=48, beta=3.0)
    p.add_argument("--dump-field", default=None, metavar="PATH")

    p = sub.add_parser("convergence", help="assert monotone residual decay "
                                           "across 3 nested refinements")
    common(p, panels=16)
    p.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _make_mesh(args):
    from . import geometry

    if args.vertex_file is not None:
        boundary = geometry.load_vertices(args.vertex_file)
        if args.scale != 1.0:
            boundary = geometry.apply_similarity(
                boundary, geometry.SimilarityTransform(args.scale, (0, 0)))
        return geometry.graded_mesh(boundary, args.panels, beta=args.beta)
    if args.geometry == "circle":
        return geometry.circle_mesh(args.radius, args.panels)
    if args.geometry == "square":
        boundary = geometry.unit_square()
    else:
        boundary = geometry.lshape(1.0)
    if args.scale != 1.0:
        boundary = geometry.apply_similarity(
            boundary, geometry.SimilarityTransform(args.scale, (0, 0)))
    return geometry.graded_mesh(boundary, args.panels, beta=args.beta)


def _echo_inputs(args) -> dict:
    skip = {"outdir", "dump_operator", "dump_mesh", "dump_field"}
    return {k: v for k, v in sorted(vars(args).items())
            if k not in skip and v is not None}


def _write_report(outdir: str, report: dict, elapsed: float) -> None:
    os.makedirs(outdir, exist_ok=True)
    report = dict(report)
    # the single non-deterministic field; everything else is reproducible
    report["timestamp"] = {
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "elapsed_seconds": round(elapsed, 3),
    }
    path = os.path.join(outdir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path: str, header: list, rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["%.17g" % v if isinstance(v, float) else v
                             for v in row])


def _dumps(args, mesh, suite=None) -> None:
    if args.dump_mesh:
        with open(os.path.join(args.outdir, args.dump_mesh), "w",
                  encoding="utf-8") as fh:
            fh.write(mesh.to_csv())
    if args.dump_operator:
        from . import boundary_ops as bo
        kind, path = args.dump_operator
        if kind not in ("V", "K", "Kadj", "W"):
            raise UsageError(f"unknown operator {kind}")
        suite = suite or bo.OperatorSuite(mesh)
        mat = getattr(suite, kind).matrix
        _write_csv(os.path.join(args.outdir, path),
                   [f"c{j}" for j in range(mat.shape[1])], mat.tolist())


def _smooth_profiles(mesh, seed, n_trials):
    import numpy as np
    from .potentials import _arclength_fractions, _smooth_trial

    rng = np.random.default_rng(seed)
    nodes_s, mids_s = _arclength_fractions(mesh)
    out = []
    for _ in range(n_trials):
        out.append((_smooth_trial(mesh, rng)(mids_s),
                    _smooth_trial(mesh, rng)(nodes_s)))
    return out


# ---------------------------------------------------------------------------
# subcommand implementations (return (exit_code, report))
# ---------------------------------------------------------------------------

def _cmd_capacity(args):
    from . import boundary_ops as bo
    from . import special_densities as sd

    mesh = _make_mesh(args)
    suite = bo.OperatorSuite(mesh)
    eq = sd.equilibrium_density(suite.V)
    rescale = sd.recommend_rescale(eq, args.target_robin)
    _dumps(args, mesh, suite)
    return 0, {
        "c_gamma": eq.c_gamma,
        "capacity": eq.capacity,
        "mesh": {"panels": mesh.n_panels, "perimeter": mesh.perimeter,
                 "beta": mesh.grading},
        "rescale": {"target_robin": args.target_robin,
                    "scale": rescale.scale},
    }


def _cmd_jump_test(args):
    import numpy as np
    from . import potentials

    mesh = _make_mesh(args)
    threshold = args.threshold if args.threshold is not None else \
        (1e-6 if args.geometry == "circle" and not args.vertex_file
         else 1e-4)
    rep = potentials.jump_report(mesh, n_trials=args.trials, seed=args.seed)
    rows = []
    names = ["sl_dirichlet", "sl_neumann", "dl_neumann", "dl_dirichlet"]
    arrays = [rep.residual_sl_dirichlet, rep.residual_sl_neumann,
              rep.residual_dl_neumann, rep.residual_dl_dirichlet]
    for t in range(args.trials):
        for i in range(mesh.n_panels):
            rows.append([t, i, mesh.midpoints[i, 0], mesh.midpoints[i, 1],
                         float(rep.corner_distance[i])]
                        + [float(a[t, i]) for a in arrays])
    _write_csv(os.path.join(args.outdir, "jump_residuals.csv"),
               ["trial", "midpoint", "x", "y", "corner_distance"] + names,
               rows)
    _dumps(args, mesh)
    ok = rep.max_residual < threshold
    return (0 if ok else 2), {
        "max_residual": rep.max_residual,
        "by_identity": rep.by_identity(),
        "threshold": threshold,
        "certified": bool(ok),
        "trials": args.trials, "seed": args.seed,
        "panels": mesh.n_panels,
    }


def _cmd_farfield_test(args):
    import numpy as np
    from . import potentials
    from .boundary_ops import DensityVector, TraceVector

    mesh = _make_mesh(args)
    rows = []
    worst = {"log": 0.0, "dipole": 0.0, "const": 0.0}
    for t, (qprof, pprof) in enumerate(
            _smooth_profiles(mesh, args.seed, args.trials)):
        for kind, src in (("single", DensityVector(mesh, qprof)),
                          ("double", TraceVector(mesh, pprof))):
            ff = potentials.far_field(src)
            for key in worst:
                worst[key] = max(worst[key], ff.discrepancy[key])
            rows.append([t, kind, ff.m0, ff.m1, ff.m2, ff.d1, ff.d2,
                         ff.fitted_log, ff.fitted_dipole[0],
                         ff.fitted_dipole[1], ff.fitted_const,
                         ff.discrepancy["log"], ff.discrepancy["dipole"],
                         ff.discrepancy["const"]])
    _write_csv(os.path.join(args.outdir, "farfield.csv"),
               ["trial", "kind", "m0", "m1", "m2", "d1", "d2",
                "fit_log", "fit_b1", "fit_b2", "fit_const",
                "disc_log", "disc_dipole", "disc_const"], rows)
    _dumps(args, mesh)
    ok = max(worst.values()) < args.threshold
    return (0 if ok else 2), {
        "worst_discrepancy": worst,
        "threshold": args.threshold,
        "certified": bool(ok),
        "trials": args.trials, "seed": args.seed,
    }


def _load_data(mesh, args):
    import numpy as np
    from .boundary_ops import DensityVector, TraceVector

    if args.data is None:
        nodes_s = np.cumsum(np.r_[0.0, mesh.lengths[:-1]]) / mesh.perimeter
        mids_s = (np.cumsum(np.r_[0.0, mesh.lengths[:-1]])
                  + 0.5 * mesh.lengths) / mesh.perimeter
        trace = TraceVector(mesh, np.cos(2 * np.pi * nodes_s))
        density = DensityVector(mesh, np.sin(2 * np.pi * mids_s))
        return trace, density
    with open(args.data, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    values = np.asarray(payload["values"], dtype=float)
    if payload.get("kind") == "density":
        return None, DensityVector(mesh, values)
    return TraceVector(mesh, values), None


def _cmd_solve(args):
    import numpy as np
    from . import boundary_ops as bo
    from . import solvers

    mesh = _make_mesh(args)
    suite = bo.OperatorSuite(mesh)
    trace, density = _load_data(mesh, args)
    problem = args.problem
    if problem == "int-dir":
        sol = solvers.interior_dirichlet(suite, trace)
    elif problem == "ext-dir":
        sol = solvers.exterior_dirichlet(suite, trace)
    elif problem == "int-neu":
        sol = solvers.interior_neumann(suite, density)
    elif problem == "ext-neu":
        sol = solvers.exterior_neumann(suite, density)
    elif problem == "trans1":
        sol = solvers.transmission_p1(suite, q=density)
    elif problem == "trans2":
        sol = solvers.transmission_p2(suite, p=trace)
    else:
        sol = solvers.transmission_p3(suite, trace, density)
    report = {
        "problem": problem,
        "kind": sol.kind,
        "diagnostics": {k: float(v) for k, v in sol.diagnostics.items()},
        "panels": mesh.n_panels,
    }
    if sol.far_field is not None:
        report["far_field"] = {
            "log_coefficient": sol.far_field.log_coefficient}
    if args.dump_field:
        lo = mesh.midpoints.min(axis=0) - 0.5
        hi = mesh.midpoints.max(axis=0) + 0.5
        xs = np.linspace(lo[0], hi[0], 40)
        ys = np.linspace(lo[1], hi[1], 40)
        xx, yy = np.meshgrid(xs, ys)
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        from .potentials import distance_to_mesh
        keep = distance_to_mesh(mesh, pts) > 1e-6
        vals = sol.evaluate(pts[keep])
        _write_csv(os.path.join(args.outdir, args.dump_field),
                   ["x", "y", "value"],
                   np.column_stack([pts[keep], vals]).tolist())
    _dumps(args, mesh, suite)
    return 0, report


def _cmd_bergman(args):
    import numpy as np
    from . import l2_harmonic as l2

    if args.geometry != "circle" or args.vertex_file:
        raise UsageError("bergman runs on the circle oracle; "
                         "use represent for polygons")
    from .geometry import circle_mesh
    mesh = circle_mesh(args.radius, args.panels)
    quad = l2.disk_quadrature(args.radius, 120,
                              max(192, int(2.2 * args.panels)))
    basis = l2.build_basis(mesh, quad, include_constant=True)
    gram_m = l2.gram(basis)
    r2 = np.sum(quad.points ** 2, axis=1)
    if args.target == "zsq":
        f = r2
        exact = 0.5 * args.radius ** 2 * np.ones(len(quad.points))
    elif args.target == "rez2":
        f = quad.points[:, 0] ** 2 - quad.points[:, 1] ** 2
        exact = f
    else:
        rho = 0.6 * args.radius
        s = r2 / rho ** 2
        f = np.zeros(len(quad.points))
        m = s < 1.0
        sm = s[m]
        th = np.exp(-1.0 / (1.0 - sm))
        th1 = -th / (1.0 - sm) ** 2
        th2 = th * (1.0 / (1.0 - sm) ** 4 - 2.0 / (1.0 - sm) ** 3)
        f[m] = th2 * 4 * sm / rho ** 2 + th1 * 4.0 / rho ** 2
        exact = np.zeros(len(quad.points))
    res = l2.bergman_project(f, basis, gram_m)
    err = quad.norm(res.projected - exact)
    scale = quad.norm(f)
    metric = err if args.target != "bump" else \
        quad.norm(res.projected) / scale
    ok = metric < args.threshold
    return (0 if ok else 2), {
        "target": args.target,
        "projection_error": float(err),
        "residual": res.residual,
        "metric": float(metric),
        "rank": res.rank,
        "condition": res.condition,
        "threshold": args.threshold,
        "certified": bool(ok),
    }


def _cmd_represent(args):
    import numpy as np
    from . import l2_harmonic as l2
    from .geometry import lshape

    mesh = _make_mesh(args)
    if args.target == "rez3":
        boundary = mesh.boundary
        quad = l2.triangulate(boundary, 0.05 * boundary.diameter(),
                              corner_levels=8, refine_corners="all")
        basis = l2.build_basis(mesh, quad)
        res = l2.represent(lambda p: p[:, 0] ** 3 - 3 * p[:, 0] * p[:, 1] ** 2,
                           basis)
        ok = res.residual < args.threshold
        return (0 if ok else 2), {
            "target": "rez3", "residual": res.residual, "rank": res.rank,
            "threshold": args.threshold, "certified": bool(ok)}
    # corner target: reconstruct the zero-Dirichlet field, with/without
    from . import singular_solutions as ss
    boundary = mesh.boundary
    if len(boundary.reentrant_corners()) == 0:
        raise UsageError("corner target needs a reentrant polygon "
                         "(--geometry lshape --scale 0.25)")
    field, cert = ss.build_zero_dirichlet_function(
        boundary, panels_per_edge=max(args.panels, 32), beta=args.beta)
    quad = l2.triangulate(boundary, 0.04 * boundary.diameter(),
                          corner_levels=16, refine_corners="all")
    vals = field(quad.points)
    with_c = l2.represent(vals, l2.build_basis(
        mesh, quad, include_corner_singular=True))
    without = l2.represent(vals, l2.build_basis(
        mesh, quad, include_corner_singular=False))
    ok = with_c.residual < 5e-2 and without.residual >= 2 * with_c.residual
    return (0 if ok else 2), {
        "target": "corner",
        "residual_with_corner": with_c.residual,
        "residual_without_corner": without.residual,
        "trace_ratio": cert.trace_ratio,
        "certified": bool(ok)}


def _cmd_kernel_svd(args):
    from . import l2_harmonic as l2

    mesh = _make_mesh(args)
    if mesh.is_circle:
        raise UsageError("kernel-svd runs on polygons")
    rep = l2.trace_kernel_svd(mesh.boundary, panels_per_edge=args.panels,
                              beta=args.beta, refinements=args.refinements)
    return 0, {
        "panels": rep.panels,
        "normalized_min": rep.normalized_min,
        "trend_ratio": rep.trend_ratio,
    }


def _cmd_corner_demo(args):
    import numpy as np
    from . import singular_solutions as ss
    from . import l2_harmonic as l2

    mesh = _make_mesh(args)
    boundary = mesh.boundary
    field, cert = ss.build_zero_dirichlet_function(
        boundary, panels_per_edge=args.panels, beta=args.beta)
    ok = (cert.trace_ratio < 1e-2
          and cert.l2_mass > 0.1 * cert.reference_mass
          and abs(cert.energy_exponent - cert.expected_exponent)
          <= 0.15 * abs(cert.expected_exponent))
    if args.dump_field:
        quad = l2.triangulate(boundary, 0.05 * boundary.diameter(),
                              corner_levels=8)
        vals = field(quad.points)
        _write_csv(os.path.join(args.outdir, args.dump_field),
                   ["x", "y", "value"],
                   np.column_stack([quad.points, vals]).tolist())
    return (0 if ok else 2), {
        "trace_ratio": cert.trace_ratio,
        "l2_mass": cert.l2_mass,
        "reference_mass": cert.reference_mass,
        "harmonicity": cert.harmonicity,
        "energy_exponent": cert.energy_exponent,
        "expected_exponent": cert.expected_exponent,
        "certified": bool(ok),
    }


def _cmd_convergence(args):
    import numpy as np
    from . import potentials
    from . import boundary_ops as bo
    from . import special_densities as sd
    from . import solvers

    series = {}
    ppe = args.panels
    jump, cap, dirich = [], [], []
    for level in range(3):
        largs = argparse.Namespace(**vars(args))
        largs.panels = ppe * 2 ** level
        mesh = _make_mesh(largs)
        rep = potentials.jump_report(mesh, n_trials=2, seed=args.seed,
                                     compare="function")
        jump.append(rep.max_residual)
        suite = bo.OperatorSuite(mesh)
        eq = sd.equilibrium_density(suite.V)
        cap.append(eq.capacity)
        if not mesh.is_circle:
            sol = solvers.interior_dirichlet(
                suite, lambda x: x[:, 0] ** 2 - x[:, 1] ** 2)
            from .special_densities import interior_sample_grid
            pts = interior_sample_grid(mesh, 5)
            err = float(np.max(np.abs(
                sol.evaluate(pts) - (pts[:, 0] ** 2 - pts[:, 1] ** 2))))
            dirich.append(err)
    series["jump_max_residual"] = jump
    series["capacity"] = cap
    if dirich:
        series["interior_dirichlet_error"] = dirich
    monotone = all(a > b for a, b in zip(jump[:-1], jump[1:]))
    if dirich:
        monotone = monotone and all(
            a > b for a, b in zip(dirich[:-1], dirich[1:]))
    steps = np.diff(cap)
    cap_monotone = bool(np.all(steps > 0) or np.all(steps < 0)
                        or np.max(np.abs(steps)) < 1e-10 * max(cap))
    ok = monotone and cap_monotone
    orders = [float(np.log2(a / b)) for a, b in zip(jump[:-1], jump[1:])]
    return (0 if ok else 2), {
        "series": series,
        "jump_orders": orders,
        "monotone": bool(monotone),
        "capacity_monotone": bool(cap_monotone),
        "certified": bool(ok),
    }


_COMMANDS = {
    "capacity": _cmd_capacity,
    "jump-test": _cmd_jump_test,
    "farfield-test": _cmd_farfield_test,
    "solve": _cmd_solve,
    "bergman": _cmd_bergman,
    "represent": _cmd_represent,
    "kernel-svd": _cmd_kernel_svd,
    "corner-demo": _cmd_corner_demo,
    "convergence": _cmd_convergence,
}


def main(argv=None) -> int:
    _pin_threads()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    try:
        code, report = _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    report["command"] = args.command
    report["inputs"] = _echo_inputs(args)
    _write_report(args.outdir, report, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
