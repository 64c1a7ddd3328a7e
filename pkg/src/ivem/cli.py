"""Command line interface: ``mesh``, ``validate`` and ``convergence``.

Every option can also come from a JSON file given by ``--config``; explicit
flags win over file values, which win over built-in defaults.
"""
import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .boundary_tri import check_A2, check_A2prime, poincare_probe, triangulate_faces
from .geometry import GeometryError, Plane, inscribed_ball_radius
from .mesh import Element, Mesh, build_mesh, plane_levelset, sphere, squircle
from .problems import make_problem
from .solve_analyze import convergence_rates, run_level

log = logging.getLogger("ivem")

ENERGY_WINDOW = (0.8, 1.3)
L2_WINDOW = (1.7, 2.4)
CSV_SCHEMA = 1
MESH_FORMAT = "ivem-mesh 1"

DEFAULTS = {
    "n_list": [8, 16, 32],
    "eps": 0.1,
    "levelset": "squircle",
    "kind": None,
    "method": None,
    "beta_minus": 1.0,
    "beta_plus": 10.0,
    "alpha": 0.5,
    "tol": 1e-10,
    "seed": 0,
    "assert_rates": False,
    "export": None,
    "output": None,
    "a2_eps": 1.0,
    "theta_m": 30.0,
    "rho": 0.5,
    "plane_offset": None,
    "no_timing": False,
}


class UsageError(ValueError):
    pass


def fmt(x):
    """Locale-independent float text; refuses NaN and Inf."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError("non-finite value in output")
    return repr(x)


def parse_n_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def make_levelset(cfg):
    name = cfg["levelset"]
    if name == "squircle":
        return squircle(cfg["eps"])
    if name == "sphere":
        return sphere(0.6)
    if name == "plane":
        offset = cfg["plane_offset"] if cfg["plane_offset"] is not None else 0.5 - cfg["eps"]
        return plane_levelset((0.0, 0.0, 1.0), offset)
    raise UsageError("unknown level set %r" % name)


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        for k, v in data.items():
            key = k.replace("-", "_")
            if key == "n":
                key = "n_list"
            if key == "assert":
                key = "assert_rates"
            if key not in cfg:
                raise UsageError("unknown config key %r" % k)
            cfg[key] = v
    for key in cfg:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            cfg[key] = v
    cfg["n_list"] = parse_n_list(cfg["n_list"])
    method, kind = cfg["method"], cfg["kind"]
    pairs = {"vem": "fitted", "ivem": "unfitted"}
    if method is not None and method not in pairs:
        raise UsageError("method must be vem or ivem")
    if kind is not None and kind not in ("fitted", "unfitted"):
        raise UsageError("kind must be fitted or unfitted")
    if method is None and kind is None:
        method, kind = "vem", "fitted"
    elif method is None:
        method = "vem" if kind == "fitted" else "ivem"
    elif kind is None:
        kind = pairs[method]
    if pairs[method] != kind:
        raise UsageError("method %s requires kind %s" % (method, pairs[method]))
    cfg["method"], cfg["kind"] = method, kind
    n = cfg["n_list"]
    if not n or any(v < 1 or v & (v - 1) for v in n) or any(b <= a for a, b in zip(n, n[1:])):
        raise UsageError("N list must be strictly increasing powers of two")
    if cfg["beta_minus"] <= 0 or cfg["beta_plus"] <= 0:
        raise UsageError("coefficients must be positive")
    return cfg


# ---------------------------------------------------------------- mesh export

def export_mesh(mesh, fh):
    """One record per element: vertex table, face loops, material, plane."""
    lo, hi = mesh.box
    iface = set(int(k) for k in mesh.interface_element_ids)
    fh.write("# %s\n" % MESH_FORMAT)
    fh.write("kind %s\nn %d\nlevelset %s\n" % (mesh.kind, mesh.n, mesh.levelset or "none"))
    fh.write("box %s\n" % " ".join(fmt(v) for v in (*lo, *hi)))
    fh.write("vertices %d\nelements %d\n" % (mesh.n_vertices, len(mesh.elements)))
    for k, e in enumerate(mesh.elements):
        fh.write("element %d material %s cell %d regular %d interface %d\n" % (k, e.material, e.cell, int(e.regular), int(k in iface)))
        for g in e.vertex_ids:
            x = mesh.vertices[g]
            fh.write("v %d %s %s %s %d\n" % (g, fmt(x[0]), fmt(x[1]), fmt(x[2]), int(mesh.boundary[g])))
        for f in e.faces:
            fh.write("f %s\n" % " ".join(str(i) for i in f))
        if e.plane is not None:
            fh.write("plane %s\n" % " ".join(fmt(v) for v in (*e.plane.normal, e.plane.offset)))
        fh.write("end\n")


def import_mesh(fh):
    lines = iter(fh.read().splitlines())
    if next(lines).strip() != "# %s" % MESH_FORMAT:
        raise ValueError("not an exported mesh")
    head = {}
    for _ in range(6):
        key, _, rest = next(lines).partition(" ")
        head[key] = rest
    nv = int(head["vertices"])
    verts = np.zeros((nv, 3))
    bnd = np.zeros(nv, dtype=bool)
    elements, iface = [], []
    for line in lines:
        tok = line.split()
        if tok[0] == "element":
            ids, faces, plane = [], [], None
            material, cell, regular, is_iface = tok[3], int(tok[5]), tok[7] == "1", tok[9] == "1"
        elif tok[0] == "v":
            g = int(tok[1])
            ids.append(g)
            verts[g] = [float(t) for t in tok[2:5]]
            bnd[g] = tok[5] == "1"
        elif tok[0] == "f":
            faces.append(tuple(int(t) for t in tok[1:]))
        elif tok[0] == "plane":
            vals = [float(t) for t in tok[1:]]
            plane = Plane.raw(vals[:3], vals[3])
        elif tok[0] == "end":
            if is_iface:
                iface.append(len(elements))
            elements.append(Element(np.array(ids, dtype=np.int64), tuple(faces), material, plane, cell, regular))
    b = [float(t) for t in head["box"].split()]
    levelset = "" if head["levelset"] == "none" else head["levelset"]
    return Mesh(verts, elements, bnd, head["kind"], int(head["n"]), (tuple(b[:3]), tuple(b[3:])), np.array(iface, dtype=np.int64), {}, levelset)


# ---------------------------------------------------------------- commands

def run_mesh(cfg, out):
    n = cfg["n_list"][0]
    ls = make_levelset(cfg)
    mesh = build_mesh(n, ls, cfg["kind"])
    if cfg["export"]:
        with open(cfg["export"], "w", newline="\n") as fh:
            export_mesh(mesh, fh)
    vols = mesh.element_volumes()
    out.write(
        "elements=%d interface=%d vertices=%d min_piece_volume=%s total_volume=%s\n"
        % (len(mesh.elements), len(mesh.interface_element_ids), mesh.n_vertices, fmt(vols.min()), fmt(vols.sum()))
    )
    return 0


def validate_mesh(mesh, a2_eps, theta_m, rho):
    """Per-element shape diagnostics as dicts."""
    rows = []
    for k, e in enumerate(mesh.elements):
        poly = e.polyhedron(mesh.vertices)
        tri = triangulate_faces(poly)
        a2 = check_A2(tri, a2_eps) is not None
        a2p = check_A2prime(tri, np.radians(theta_m), rho)
        probe = poincare_probe(poly, tri, a2_eps)
        try:
            radius = inscribed_ball_radius(poly)
        except GeometryError:
            radius = None
        rows.append(dict(element_id=k, theta_M_deg=np.degrees(tri.theta_M), n_T=tri.n_T, a2_pass=a2, a2prime_eps=a2p,
                         poincare_ratio=probe.ratio, poincare_bound=probe.bound, inscribed_radius=radius))
    return rows


def run_validate(cfg, out):
    n = cfg["n_list"][0]
    mesh = build_mesh(n, make_levelset(cfg), cfg["kind"])
    rows = validate_mesh(mesh, cfg["a2_eps"], cfg["theta_m"], cfg["rho"])
    out.write("# ivem validate schema=%d N=%d kind=%s levelset=%s eps=%s a2_eps=%s theta_m_deg=%s rho=%s\n"
              % (CSV_SCHEMA, n, cfg["kind"], cfg["levelset"], fmt(cfg["eps"]), fmt(cfg["a2_eps"]), fmt(cfg["theta_m"]), fmt(cfg["rho"])))
    out.write("element_id,theta_M_deg,n_T,a2_pass,a2prime_eps,poincare_ratio,poincare_bound,inscribed_radius\n")
    for r in rows:
        out.write("%d,%s,%d,%d,%s,%s,%s,%s\n" % (
            r["element_id"], fmt(r["theta_M_deg"]), r["n_T"], int(r["a2_pass"]),
            "" if r["a2prime_eps"] is None else fmt(r["a2prime_eps"]),
            fmt(r["poincare_ratio"]), fmt(r["poincare_bound"]),
            "" if r["inscribed_radius"] is None else fmt(r["inscribed_radius"])))
    violations = sum(r["poincare_ratio"] > r["poincare_bound"] for r in rows)
    worst = max(r["poincare_ratio"] / r["poincare_bound"] for r in rows)
    out.write("# summary elements=%d max_theta_M_deg=%s a2_failures=%d a2prime_failures=%d poincare_violations=%d worst_ratio_over_bound=%s\n" % (
        len(rows), fmt(max(r["theta_M_deg"] for r in rows)), sum(not r["a2_pass"] for r in rows),
        sum(r["a2prime_eps"] is None for r in rows), violations, fmt(worst)))
    return 0


def run_convergence(cfg, out, err=None):
    err = err or sys.stderr
    problem = make_problem(cfg["levelset"], cfg["eps"], cfg["beta_minus"], cfg["beta_plus"], cfg["alpha"])
    if cfg["levelset"] == "plane" and cfg["plane_offset"] is not None:
        from .problems import plane_problem

        problem = plane_problem(cfg["plane_offset"], beta_minus=cfg["beta_minus"], beta_plus=cfg["beta_plus"])
    records = []
    for n in cfg["n_list"]:
        rec = run_level(problem, n, cfg["kind"], cfg["tol"])[0]
        if cfg["no_timing"]:
            rec.wall_ms = 0.0
        records.append(rec)
    out.write("# ivem convergence schema=%d version=%s\n" % (CSV_SCHEMA, __version__))
    out.write("# method=%s kind=%s levelset=%s eps=%s beta_minus=%s beta_plus=%s alpha=%s tol=%s seed=%d\n" % (
        cfg["method"], cfg["kind"], cfg["levelset"], fmt(cfg["eps"]), fmt(cfg["beta_minus"]), fmt(cfg["beta_plus"]),
        fmt(cfg["alpha"]), fmt(cfg["tol"]), cfg["seed"]))
    out.write("# energy_err=sqrt(sum_K |beta_h^(1/2) grad(u - Pi_K u_h)|^2_K); l2_err=|u - Pi u_h|_Omega; rate rows hold log2 ratios\n")
    out.write("row,N,h,dofs,energy_err,l2_err,cg_iters,wall_ms\n")
    for r in records:
        out.write("level,%d,%s,%d,%s,%s,%d,%s\n" % (r.N, fmt(r.h), r.dofs, fmt(r.energy_err), fmt(r.l2_err), r.cg_iters, fmt(round(r.wall_ms, 3))))
    status = 0
    if len(records) >= 2:
        er = convergence_rates(records, "energy_err")
        lr = convergence_rates(records, "l2_err")
        for a, b, x, y in zip(records, records[1:], er, lr):
            out.write("rate,%d-%d,,,%s,%s,,\n" % (a.N, b.N, fmt(x), fmt(y)))
        if cfg["assert_rates"]:
            problems = []
            if not ENERGY_WINDOW[0] <= er[-1] <= ENERGY_WINDOW[1]:
                problems.append("energy rate %.4f outside [%g, %g]" % (er[-1], *ENERGY_WINDOW))
            if not L2_WINDOW[0] <= lr[-1] <= L2_WINDOW[1]:
                problems.append("L2 rate %.4f outside [%g, %g]" % (lr[-1], *L2_WINDOW))
            for p in problems:
                err.write("rate assertion failed (last pair %d-%d): %s\n" % (records[-2].N, records[-1].N, p))
            status = 1 if problems else 0
    elif cfg["assert_rates"]:
        raise UsageError("--assert needs at least two levels")
    return status


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", "--n-list", dest="n_list", default=None, help="N or comma-separated N list")
    common.add_argument("--eps", type=float, default=None, help="interface offset, r0 = 0.75 - eps")
    common.add_argument("--levelset", choices=["squircle", "sphere", "plane"], default=None)
    common.add_argument("--kind", choices=["fitted", "unfitted"], default=None)
    common.add_argument("--method", choices=["vem", "ivem"], default=None)
    common.add_argument("--beta-minus", type=float, default=None)
    common.add_argument("--beta-plus", type=float, default=None)
    common.add_argument("--alpha", type=float, default=None)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--assert", dest="assert_rates", action="store_true", default=None)
    common.add_argument("--export", default=None, help="mesh export path")
    common.add_argument("--output", default=None, help="CSV path (default: standard output)")
    common.add_argument("--config", default=None, help="JSON file with option values")
    common.add_argument("--a2-eps", type=float, default=None, help="epsilon of the path condition (default 1)")
    common.add_argument("--theta-m", type=float, default=None, help="minimum angle in degrees for the local check")
    common.add_argument("--rho", type=float, default=None, help="size ratio for the local check")
    common.add_argument("--plane-offset", type=float, default=None, help="plane level set x3 = offset")
    common.add_argument("--no-timing", action="store_true", default=None, help="write wall_ms as 0")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="ivem", description="Virtual element methods on cut-cuboid meshes.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("mesh", parents=[common], help="build and export a mesh")
    sub.add_parser("validate", parents=[common], help="per-element shape diagnostics")
    sub.add_parser("convergence", parents=[common], help="convergence study")
    return parser


def _limit_threads():
    threads = os.environ.get("THREADS")
    if not threads:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(threads))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
    except (UsageError, ValueError, OSError) as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write("ivem: error: %s\n" % exc)
        return 2
    limiter = _limit_threads()
    out = open(cfg["output"], "w", newline="\n") if cfg["output"] else sys.stdout
    t0 = time.perf_counter()
    try:
        if args.command == "mesh":
            status = run_mesh(cfg, out)
        elif args.command == "validate":
            status = run_validate(cfg, out)
        else:
            status = run_convergence(cfg, out)
    except UsageError as exc:
        sys.stderr.write("ivem: error: %s\n" % exc)
        return 2
    finally:
        if out is not sys.stdout:
            out.close()
        if limiter is not None:
            limiter.restore_original_limits()
    log.info("done in %.1f s", time.perf_counter() - t0)
    return status


if __name__ == "__main__":
    sys.exit(main())
