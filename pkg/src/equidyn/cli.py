"""Command-line front end.

Every subcommand loads a map (a JSON file or the name of a bundled map),
runs one experiment and prints a JSON report holding the map hash, the seed,
the resolved options, the estimates and, when a closed form exists, the
targets. ``--out DIR`` also writes the report and any point cloud to files.
Precondition failures exit with status 2 and other failures with status 1;
both print a JSON error on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import disks, endo, entropy, exceptional, fiber, library, measure, proj
from .empirical import EmpiricalMeasure
from .errors import EquidynError, PreconditionError, SchemaError
from .proj import ProjPoint

# options that never influence results and are left out of reports
_UNREPORTED = {"func", "threads", "out"}


class _UsageError(PreconditionError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# inputs


def load_map(path: str) -> endo.HomogeneousMap:
    """Load and validate a map from a JSON file or a bundled map name."""
    p = Path(path)
    if p.exists():
        f = endo.loads_map(p.read_text(), name=p.stem)
    elif path in library.BUNDLED:
        f = library.bundled_map(path)
    else:
        raise SchemaError(f"no map file or bundled map named {path!r}", path=path)
    endo.check_nondegenerate(f)
    return f


def parse_point(text: str, k: int) -> ProjPoint:
    """Parse ``re,im[,re,im]`` affine coordinates or ``a:b[:c]`` homogeneous ones.

    Affine coordinates fill the first k homogeneous slots and the last one
    is 1; homogeneous entries use Python complex syntax (``1+2j``).
    """
    text = text.strip()
    try:
        if ":" in text:
            vals = [complex(s.strip().replace(" ", "")) for s in text.split(":")]
        else:
            nums = [float(s) for s in text.split(",")]
            if len(nums) != 2 * k:
                raise SchemaError(f"point {text!r} needs {2 * k} real numbers", point=text)
            vals = [complex(nums[2 * i], nums[2 * i + 1]) for i in range(k)] + [1.0]
    except ValueError as exc:
        raise SchemaError(f"cannot parse point {text!r}: {exc}", point=text) from exc
    if len(vals) != k + 1:
        raise SchemaError(f"point {text!r} needs {k + 1} homogeneous coordinates", point=text)
    return proj.normalize(vals)


def parse_form(text: str) -> np.ndarray:
    try:
        return np.array([complex(s.strip()) for s in text.split(",")])
    except ValueError as exc:
        raise SchemaError(f"cannot parse linear form {text!r}", form=text) from exc


def _point_json(x) -> list:
    arr = x.array if isinstance(x, ProjPoint) else np.asarray(x)
    return [[float(z.real), float(z.imag)] for z in arr]


def _load_measure(args, f, rng) -> EmpiricalMeasure:
    if getattr(args, "measure", None):
        return EmpiricalMeasure.from_csv(args.measure)
    x = parse_point(args.x, f.k) if args.x else _default_start(f)
    return measure.tree_measure(f, x, args.depth, rng=rng)


def _default_start(f) -> ProjPoint:
    return proj.normalize([0.3 + 0.4j, 0.2 - 0.1j, 1.0][-(f.k + 1):])


# ---------------------------------------------------------------------------
# subcommands; each returns (report dict, {filename: text})


def cmd_validate_map(f, args, rng):
    info = endo.check_nondegenerate(f)
    return {"estimates": {"k": f.k, "d": f.d, "nondegenerate": True, "check": info}}, {}


def cmd_fiber(f, args, rng):
    y = parse_point(args.y, f.k)
    res = fiber.fiber(f, y, rng)
    pts = [{"point": _point_json(p), "multiplicity": m} for p, m in res.points]
    return {
        "estimates": {
            "solver": res.solver,
            "points": pts,
            "residuals": list(res.residuals),
            "multiplicity_sum": sum(m for _, m in res.points),
        },
        "targets": {"multiplicity_sum": f.topological_degree},
        "tolerances": {"residual": fiber.RESIDUAL_TOL},
    }, {}


def cmd_pullback_tree(f, args, rng):
    x = parse_point(args.x, f.k)
    mu = measure.tree_measure(f, x, args.n, args.budget, rng)
    return {"estimates": {"atoms": mu.size, "total_mass": mu.total_mass}}, {"measure.csv": mu.sorted().to_csv()}


def cmd_sample_mu(f, args, rng):
    if args.method == "tree":
        x = parse_point(args.x, f.k) if args.x else _default_start(f)
        mu = measure.tree_measure(f, x, args.n, args.budget, rng)
    elif args.method == "backward":
        mu = measure.backward_measure(f, args.samples, args.depth, rng, threads=args.threads)
    else:
        mu = measure.cesaro_measure(f, args.n, args.samples, rng, threads=args.threads)
    est = {"atoms": mu.size, "provenance": mu.provenance, "total_mass": mu.total_mass}
    if f.k == 1:
        circle = measure.circle_measure(max(mu.size, 1024))
        est["discrepancy_to_unit_circle"] = measure.discrepancy(mu, circle, args.bandwidth)
    return {"estimates": est, "tolerances": {"bandwidth": args.bandwidth}}, {"measure.csv": mu.sorted().to_csv()}


def cmd_equidistribution(f, args, rng):
    x = parse_point(args.x, f.k)
    y = parse_point(args.y, f.k)
    table = measure.equidistribution_test(f, x, y, args.n, args.bandwidth, rng=rng)
    return {
        "estimates": {"discrepancy": [{"n": n, "value": v} for n, v in table]},
        "tolerances": {"bandwidth": args.bandwidth},
    }, {}


def cmd_exceptional(f, args, rng):
    rep = exceptional.exceptional_p1(f, rng) if f.k == 1 else exceptional.exceptional_candidates_p2(f, rng=rng)
    return {"estimates": rep.to_dict()}, {}


def cmd_critical_decay(f, args, rng):
    x = parse_point(args.x, f.k)
    table = measure.critical_mass_decay(f, x, args.n, args.tau, rng)
    return {
        "estimates": {"tube_mass": [{"n": n, "value": v} for n, v in table]},
        "tolerances": {"tau": args.tau},
    }, {}


def cmd_lyapunov(f, args, rng):
    mu = measure.backward_measure(f, args.samples, args.depth, rng, threads=args.threads)
    est = measure.lyapunov_min(f, mu, args.n, args.samples, rng)
    return {
        "estimates": est.to_dict(),
        "targets": {"lower_bound": math.log(f.d) / 2},
    }, {}


def cmd_mixing(f, args, rng):
    if f.k == 1 and args.circle:
        mu = measure.circle_measure(args.atoms)
    else:
        mu = _load_measure(args, f, rng)
    phi = measure.re_moment()
    table = [{"n": n, "value": measure.mixing_correlation(f, mu, phi, phi, n, check_invariance=(n == 0))}
             for n in range(args.n + 1)]
    return {"estimates": {"correlation": table}, "targets": {"limit": 0.0}}, {}


def _candidate_pool(f, args, rng) -> np.ndarray:
    x = parse_point(args.x, f.k) if args.x else _default_start(f)
    depth = max(1, math.ceil(math.log(args.candidates) / math.log(f.topological_degree)))
    pts, _, _ = fiber.preimage_tree_rows(f, x.array[None], depth, rng, args.budget)
    return pts[: args.candidates]


def cmd_entropy(f, args, rng):
    pool = _candidate_pool(f, args, rng)
    eps = [float(e) for e in args.epsilon.split(",")]
    table = entropy.entropy_table(f, range(args.n_min, args.n_max + 1), eps, pool)
    return {
        "estimates": {"entropy": table["estimate"], "table": table["table"], "pool_size": table["pool_size"]},
        "targets": {"entropy": table["target"]},
    }, {}


def cmd_brin_katok(f, args, rng):
    mu = _load_measure(args, f, rng)
    res = entropy.brin_katok(f, mu, None, args.epsilon, range(args.n_min, args.n_max + 1), rng)
    return {
        "estimates": res.to_dict(),
        "targets": {"plateau": f.k * math.log(f.d)},
    }, {}


def cmd_lov(f, args, rng):
    rows = [entropy.graph_volume(f, n, args.samples, rng, args.threads).to_dict() for n in range(1, args.n + 1)]
    est = entropy.growth_exponents([r["n"] for r in rows], [r["value"] for r in rows])
    return {
        "estimates": {"volumes": rows, **est},
        "targets": {"volume": rows[-1]["target"], "lov": f.k * math.log(f.d)},
        "tolerances": {"std_errors": 3},
    }, {}


def cmd_lov_restricted(f, args, rng):
    S = entropy.line_samples(parse_form(args.line), args.samples, rng)
    rows = [entropy.restricted_graph_volume(f, n, S).to_dict() for n in range(1, args.n + 1)]
    est = entropy.growth_exponents([r["n"] for r in rows], [r["value"] for r in rows])
    return {
        "estimates": {"volumes": rows, **est},
        "targets": {"volume": rows[-1]["target"], "lov": (f.k - 1) * math.log(f.d), "upper": f.k * math.log(f.d)},
    }, {}


def cmd_jacobian_check(f, args, rng):
    if args.circle and f.k == 1:
        mu = measure.circle_measure(args.atoms)
    else:
        mu = _load_measure(args, f, rng)
    res = entropy.jacobian_constant_check(f, mu, args.patches, rng, args.radius)
    return {"estimates": res.to_dict(), "tolerances": {"deviation": entropy.JACOBIAN_FLAG}}, {}


def cmd_sigma_count(f, args, rng):
    ns = [int(v) for v in args.n.split(",")]
    rows = entropy.sigma_growth(args.dk, ns, args.sigma)
    return {"estimates": {"counts": rows}}, {}


def cmd_ljubich(f, args, rng):
    center = parse_point(args.center, f.k)
    rep = disks.ljubich_experiment(
        f, center, args.delta_radius, args.tilde_radius, range(args.n_min, args.n_max + 1),
        args.epsilon, args.l, rng=rng,
    )
    lines = ["n,branch,diameter"]
    for row in rep["table"]:
        lines += [f"{row['n']},{i},{v!r}" for i, v in enumerate(row.pop("diameters"))]
    return {
        "estimates": rep,
        "targets": {"diameter_slope": rep["diameter_slope_target"]},
        "tolerances": {"epsilon": args.epsilon},
    }, {"diameters.csv": "\n".join(lines) + "\n"}


def cmd_disk_check(f, args, rng):
    R = disks.random_family_ratios(2 * args.family, rng, k=f.k)
    half = float(R[: args.family].max())
    full = float(R.max())
    return {
        "estimates": {
            "max_ratio": half,
            "max_ratio_doubled": full,
            "relative_change": abs(full - half) / half,
            "ratios": [float(v) for v in R],
        },
        "targets": {"linear_baseline": disks.LINEAR_BASELINE},
        "tolerances": {"stability": 0.1},
    }, {}


COMMANDS = {
    "fiber": cmd_fiber,
    "pullback-tree": cmd_pullback_tree,
    "sample-mu": cmd_sample_mu,
    "equidistribution": cmd_equidistribution,
    "exceptional": cmd_exceptional,
    "critical-decay": cmd_critical_decay,
    "lyapunov": cmd_lyapunov,
    "mixing": cmd_mixing,
    "entropy": cmd_entropy,
    "brin-katok": cmd_brin_katok,
    "lov": cmd_lov,
    "lov-restricted": cmd_lov_restricted,
    "jacobian-check": cmd_jacobian_check,
    "sigma-count": cmd_sigma_count,
    "ljubich": cmd_ljubich,
    "disk-check": cmd_disk_check,
    "validate-map": cmd_validate_map,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="equidyn", description="Numerical experiments on holomorphic endomorphisms of P^k.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, needs_map=True, **kw):
        s = sub.add_parser(name, **kw)
        if needs_map:
            s.add_argument("--map", required=True, help="map JSON file or bundled map name")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", help="directory for the report and point clouds")
        s.add_argument("--threads", type=int, default=None, help="worker cap (default: $EQUIDYN_THREADS or 1)")
        s.set_defaults(func=COMMANDS[name])
        return s

    add("validate-map")
    s = add("fiber")
    s.add_argument("--y", required=True, help="target point")
    s = add("pullback-tree")
    s.add_argument("--x", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--budget", type=int, default=fiber.DEFAULT_BUDGET)
    s = add("sample-mu")
    s.add_argument("--method", choices=("tree", "backward", "cesaro"), default="tree")
    s.add_argument("--x")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--samples", type=int, default=4096)
    s.add_argument("--depth", type=int, default=0)
    s.add_argument("--budget", type=int, default=fiber.DEFAULT_BUDGET)
    s.add_argument("--bandwidth", type=float, default=measure.DEFAULT_BANDWIDTH)
    s = add("equidistribution")
    s.add_argument("--x", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--bandwidth", type=float, default=measure.DEFAULT_BANDWIDTH)
    add("exceptional")
    s = add("critical-decay")
    s.add_argument("--x", required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--tau", type=float, default=0.05)
    s = add("lyapunov")
    s.add_argument("--n", type=int, default=30)
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--depth", type=int, default=60)

    def measure_opts(s):
        s.add_argument("--measure", help="point-cloud CSV (default: preimage tree)")
        s.add_argument("--x", help="tree start point")
        s.add_argument("--depth", type=int, default=12, help="tree depth")

    s = add("mixing")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--circle", action="store_true", help="use the roots-of-unity measure (k=1)")
    s.add_argument("--atoms", type=int, default=2**14)
    measure_opts(s)
    s = add("entropy")
    s.add_argument("--n-min", type=int, default=4)
    s.add_argument("--n-max", type=int, default=10)
    s.add_argument("--epsilon", default="0.2", help="comma-separated list")
    s.add_argument("--candidates", type=int, default=2**15)
    s.add_argument("--x", help="tree start point for the candidate pool")
    s.add_argument("--budget", type=int, default=fiber.DEFAULT_BUDGET)
    s = add("brin-katok")
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--n-min", type=int, default=6)
    s.add_argument("--n-max", type=int, default=10)
    measure_opts(s)
    s = add("lov")
    s.add_argument("--n", type=int, default=5)
    s.add_argument("--samples", type=int, default=100_000)
    s = add("lov-restricted")
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--samples", type=int, default=20_000)
    s.add_argument("--line", default="1,0,0", help="coefficients of the linear form")
    s = add("jacobian-check")
    s.add_argument("--patches", type=int, default=50)
    s.add_argument("--radius", type=float, default=0.05)
    s.add_argument("--circle", action="store_true")
    s.add_argument("--atoms", type=int, default=2**14)
    measure_opts(s)
    s = add("sigma-count", needs_map=False)
    s.add_argument("--dk", type=int, required=True)
    s.add_argument("--n", required=True, help="comma-separated horizons")
    s.add_argument("--sigma", type=float, required=True)
    s = add("ljubich")
    s.add_argument("--center", required=True)
    s.add_argument("--delta-radius", type=float, default=0.025)
    s.add_argument("--tilde-radius", type=float, default=0.05)
    s.add_argument("--n-min", type=int, default=4)
    s.add_argument("--n-max", type=int, default=10)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--l", type=int, default=None)
    s = add("disk-check")
    s.add_argument("--family", type=int, default=100)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        f = load_map(args.map) if hasattr(args, "map") else None
        rng = np.random.default_rng(args.seed)
        body, files = args.func(f, args, rng)
        options = {k: v for k, v in sorted(vars(args).items()) if k not in _UNREPORTED}
        report = {
            "command": args.command,
            "map_hash": f.content_hash() if f is not None else None,
            "seed": args.seed,
            "options": options,
            "estimates": body.get("estimates", {}),
            "targets": body.get("targets", {}),
            "tolerances": body.get("tolerances", {}),
        }
        text = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{args.command}.json").write_text(text)
            for name, content in files.items():
                (out / name).write_text(content)
        sys.stdout.write(text)
        return 0
    except PreconditionError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), default=_json_default) + "\n")
        return 2
    except EquidynError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), default=_json_default) + "\n")
        return 1
    except Exception as exc:  # noqa: BLE001 - report any internal failure as JSON
        sys.stderr.write(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}) + "\n")
        return 1


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, ProjPoint):
        return _point_json(obj)
    return str(obj)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
