"""Command-line interface.

Subcommands: mesh-build, mesh-refine, mesh-stats, weights, flow-run,
study-run, serve, export, validate.  Every invocation is fully determined
by its flags and input files; `--seed` fixes all randomness.  Artifacts
are written atomically (temp file + rename).  Exit codes: 0 success,
1 domain/validation error, 2 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

from . import geometry as geo
from . import fuchsian as fg
from . import meshes as mh
from . import weights as wt
from . import maps as hm
from . import studies as st
from . import fileio
from .errors import HarmflowError, NumericalError, DomainError, ValidationError

LOCK_NAME = ".harmflow.lock"


class _OutputLock:
    """Advisory lock against concurrent invocations on one output directory."""

    def __init__(self, directory):
        self.path = os.path.join(directory or ".", LOCK_NAME)
        self.acquired = False

    def __enter__(self):
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise DomainError(
                f"output directory is locked by another invocation ({self.path})")
        os.close(fd)
        self.acquired = True
        return self

    def __exit__(self, *exc):
        if self.acquired and os.path.exists(self.path):
            os.unlink(self.path)
        return False


def _apply_thread_env():
    n = os.environ.get("HARMFLOW_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _build_mesh_from_flags(args):
    if args.torus:
        a, b = (float(x) for x in args.torus.split(","))
        mesh = mh.build_torus_mesh((a, 0.0), (0.0, b), grid=args.grid)
    elif args.lattice:
        ux, uy, vx, vy = (float(x) for x in args.lattice.split(","))
        mesh = mh.build_torus_mesh((ux, uy), (vx, vy), grid=args.grid)
    elif args.fn:
        group, dom = fileio.cached_group(args.fn)
        if args.acute:
            mesh = mh.acute_base_mesh(group, dom, presubdivide=args.presubdivide)
        else:
            mesh = mh.build_genus2_mesh(group, dom)
    else:
        raise DomainError("specify --torus A,B or --lattice ux,uy,vx,vy or "
                          "--fn l1,l2,l3,t1,t2,t3")
    return fileio.snap_to_serialization(mesh)


def _stats_row(mesh):
    s = mesh.quality_stats()
    return [mesh.level, mesh.n_vertices, mesh.n_edges, mesh.n_triangles] + s.row()


STATS_HEADER = ["level", "n_vertices", "n_edges", "n_triangles"] + \
    list(mh.MeshStats.fields)


def _write_csv(path, header, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt_cell(x) for x in row])
    fileio.atomic_write(path, out.getvalue())


def _fmt_cell(x):
    if isinstance(x, float):
        return "{:.17g}".format(x)
    if isinstance(x, (np.floating,)):
        return "{:.17g}".format(float(x))
    return x


def cmd_mesh_build(args):
    mesh = _build_mesh_from_flags(args)
    fileio.write_mesh(mesh, args.out)
    print(f"mesh-build: wrote {args.out} V={mesh.n_vertices} "
          f"E={mesh.n_edges} F={mesh.n_triangles} "
          f"chi={mesh.euler_characteristic}")
    return 0


def cmd_mesh_refine(args):
    mesh = fileio.read_mesh(args.mesh)
    for _ in range(args.levels):
        mesh = mh.midpoint_refine(mesh)
    mesh = fileio.snap_to_serialization(mesh)
    fileio.write_mesh(mesh, args.out)
    print(f"mesh-refine: wrote {args.out} level={mesh.level} "
          f"V={mesh.n_vertices} F={mesh.n_triangles}")
    return 0


def cmd_mesh_stats(args):
    mesh = fileio.read_mesh(args.mesh)
    rows = [_stats_row(mesh)]
    for _ in range(args.levels):
        mesh = mh.midpoint_refine(mesh)
        rows.append(_stats_row(mesh))
    if args.out:
        _write_csv(args.out, STATS_HEADER, rows)
        print(f"mesh-stats: wrote {args.out} ({len(rows)} levels)")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for row in rows:
            w.writerow([_fmt_cell(x) for x in row])
    return 0


def cmd_weights(args):
    mesh = fileio.read_mesh(args.mesh)
    mu = wt.volume_weights(mesh)
    omega = wt.cotangent_weights(mesh)
    fileio.write_mesh(mesh, args.out, vertex_weights=mu, edge_weights=omega)
    delaunay = bool(np.all(omega >= -1e-12))
    print(f"weights: wrote {args.out} mass={float(mu.sum()):.12g} "
          f"delaunay={delaunay}")
    return 0


def _load_map(args, bw):
    if args.map == "id":
        return hm.identity_map(bw)
    if args.map in st.FLAT_MAPS:
        if bw.geometry.hyperbolic:
            raise DomainError("flat test maps need a torus mesh")
        return st.FLAT_MAPS[args.map].discretize(bw)
    if args.map == "file":
        _, sections = fileio.read_mesh(args.mesh, with_sections=True)
        if "map" not in sections:
            raise DomainError("mesh file carries no map section")
        m = sections["map"]
        return hm.DiscreteMap(bw, m["values"], m["target_geometry"], m["rho"])
    if args.map.startswith("fn:"):
        group, _ = fileio.cached_group(args.map[3:])
        return hm.identity_map(bw, target_deck=mh.FuchsianDeck(group))
    raise DomainError(f"unknown map spec {args.map!r}")


def cmd_flow_run(args):
    mesh, sections = fileio.read_mesh(args.mesh, with_sections=True)
    mu = sections.get("vertex_weights")
    omega = sections.get("edge_weights")
    bw = wt.BiweightedMesh(mesh, mu, omega) if mu is not None and \
        omega is not None else wt.biweighted(mesh)
    f0 = _load_map(args, bw)
    t = None if args.dt == "auto" else float(args.dt)
    log_rows = []
    t_start = time.perf_counter()

    def on_step(state):
        log_rows.append([state.iteration, state.energy_history[-1],
                         state.tension_norm_history[-1], state.step_size,
                         (time.perf_counter() - t_start) * 1000.0])

    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        state = hm.run_flow_adaptive(f0, t=t, tension_tol=args.tol,
                                     max_iters=args.max_iters, on_step=on_step)
    if args.log:
        _write_csv(args.log, ["iteration", "energy", "tension_l2",
                              "step_size", "wall_time_ms"], log_rows)
    if args.out:
        fileio.write_mesh(mesh, args.out, vertex_weights=bw.mu,
                          edge_weights=bw.omega, map_section=state.map)
    print(f"flow-run: {state.iteration} iterations, final tension "
          f"{state.tension_norm_history[-1]:.3e}, energy "
          f"{state.energy_history[-1]:.12g}, dt={state.step_size:.6g}")
    return 0


def cmd_study_run(args):
    if args.config:
        cfg = fileio.read_study_config(args.config)
    else:
        cfg = {}
    if args.kind:
        cfg["kind"] = args.kind
    if args.seed is not None:
        cfg.setdefault("seed", str(args.seed))
    os.makedirs(args.out, exist_ok=True)
    result = st.run_study(cfg)
    _write_csv(os.path.join(args.out, "results.csv"), result.columns,
               result.rows)
    summary = {
        "kind": result.kind,
        "slopes": {k: {"slope": v[0], "intercept": v[1], "r2": v[2]}
                   for k, v in result.slopes.items()},
        "checks": {k: bool(v) for k, v in result.checks.items()},
        "passed": result.passed,
    }
    fileio.atomic_write(os.path.join(args.out, "summary.json"),
                        json.dumps(summary, indent=2, default=float) + "\n")
    if result.timings:
        _write_csv(os.path.join(args.out, "timings.csv"),
                   ["label", "seconds"], result.timings)
    if not args.no_plots:
        from . import plots
        for path in plots.render_study(result, args.out):
            print(f"study-run: figure {path}")
    print(f"study-run: {result.kind} -> {args.out} "
          f"({'pass' if result.passed else 'FAIL'})")
    return 0 if result.passed else 1


def cmd_serve(args):
    from . import service
    server = service.SessionServer((args.host, args.port),
                                   max_level=args.max_level)
    print(f"serve: listening on {server.address[0]}:{server.address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_export(args):
    group, dom = fileio.cached_group(args.fn)
    doc = group.export_text()
    if args.out:
        fileio.atomic_write(args.out, doc)
        print(f"export: wrote {args.out} "
              f"(relator residual {group.relator_residual():.2e})")
    else:
        sys.stdout.write(doc)
    return 0


def cmd_validate(args):
    report = fileio.validate_files(args.paths)
    bad = 0
    for path, violations in report.items():
        if violations:
            bad += 1
            print(f"validate: {path}: {len(violations)} violation(s)")
            for v in violations[:10]:
                print(f"  - {v}")
        else:
            print(f"validate: {path}: ok")
    return 1 if bad else 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="harmflow",
        description="discrete harmonic maps on flat tori and genus-2 "
                    "hyperbolic surfaces")
    p.add_argument("--seed", type=int, default=None,
                   help="fix all randomness")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("mesh-build", help="build a base mesh")
    b.add_argument("--torus", help="rectangle side lengths A,B")
    b.add_argument("--lattice", help="lattice vectors ux,uy,vx,vy")
    b.add_argument("--grid", type=int, default=4)
    b.add_argument("--fn", help="Fenchel-Nielsen l1,l2,l3,t1,t2,t3")
    b.add_argument("--acute", action="store_true",
                   help="optimize the genus-2 base to a strongly acute mesh")
    b.add_argument("--presubdivide", type=int, default=2)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_mesh_build)

    r = sub.add_parser("mesh-refine", help="midpoint subdivision")
    r.add_argument("--mesh", required=True)
    r.add_argument("--levels", type=int, default=1)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_mesh_refine)

    s = sub.add_parser("mesh-stats", help="per-level quality statistics CSV")
    s.add_argument("--mesh", required=True)
    s.add_argument("--levels", type=int, default=0,
                   help="additionally refine and report this many levels")
    s.add_argument("--out")
    s.set_defaults(func=cmd_mesh_stats)

    w = sub.add_parser("weights", help="attach volume and cotangent weights")
    w.add_argument("--mesh", required=True)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_weights)

    f = sub.add_parser("flow-run", help="run the discrete heat flow")
    f.add_argument("--mesh", required=True)
    f.add_argument("--map", default="id",
                   help="id | sine | shear | file | fn:l1,l2,l3,t1,t2,t3")
    f.add_argument("--dt", default="auto")
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--max-iters", type=int, default=200000)
    f.add_argument("--log", help="write the iteration log CSV here")
    f.add_argument("--out", help="write the final map into this mesh file")
    f.set_defaults(func=cmd_flow_run)

    st_p = sub.add_parser("study-run", help="run a convergence study")
    st_p.add_argument("--config", help="INI file with a [study] section")
    st_p.add_argument("--kind", help="study kind (overrides the config)")
    st_p.add_argument("--out", required=True, help="output directory")
    st_p.add_argument("--no-plots", action="store_true")
    st_p.set_defaults(func=cmd_study_run)

    sv = sub.add_parser("serve", help="session server for the companion UI")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8571)
    sv.add_argument("--max-level", type=int, default=6)
    sv.set_defaults(func=cmd_serve)

    e = sub.add_parser("export", help="export group generator matrices")
    e.add_argument("--fn", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)

    v = sub.add_parser("validate", help="schema-validate mesh files")
    v.add_argument("paths", nargs="+")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    _apply_thread_env()
    np.seterr(over="ignore", invalid="ignore")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None:
        np.random.seed(args.seed)
    outdir = None
    for attr in ("out", "log"):
        target = getattr(args, attr, None)
        if target:
            outdir = os.path.dirname(os.path.abspath(target))
            break
    try:
        if outdir and args.command in ("mesh-build", "mesh-refine", "weights",
                                       "flow-run", "study-run"):
            with _OutputLock(outdir):
                return args.func(args)
        return args.func(args)
    except (DomainError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except HarmflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
