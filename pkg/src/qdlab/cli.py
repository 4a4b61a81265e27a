"""Command-line entry point: solve / verify / oracle / cutoffs runs.

Every run consumes a strict JSON config (unknown keys are rejected), writes
its artifacts into an output directory, and emits a deterministic
report.json: the config echo, solver diagnostics, verification results with
their tolerances, artifact paths, and timings (the only
nondeterministic block).

Exit codes: 0 success, 2 bad config/input, 3 solver non-convergence,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import cutoffs as cutoffs_mod
from . import field, greens, oracles, quadrature
from .obstacle import (NotProperlySupportedError, SolveParams, extract_domain,
                       laplacian_identity_residual, solve_obstacle, weight_grid)

SCHEMA_VERSION = "1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_VERIFY_FAILED = 4


class ConfigError(ValueError):
    pass


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def _parse_primitive(obj: dict, dim: int) -> field.Primitive:
    _check_keys(obj, {"kind", "center", "radius", "extents", "amplitude"}, "weight primitive")
    kind = obj.get("kind")
    amplitude = float(obj.get("amplitude", 1.0))
    center = obj.get("center")
    if kind == "ball":
        return field.ball(center, float(obj["radius"]), amplitude)
    if kind == "box":
        return field.box(center, obj["extents"], amplitude)
    raise ConfigError(f"primitive kind must be ball or box, got {kind!r}")


def parse_weight(obj: dict, dim: int) -> field.WeightSpec:
    _check_keys(obj, {"primitives", "field_path"}, "weight")
    prims = tuple(_parse_primitive(p, dim) for p in obj.get("primitives", []))
    try:
        spec = field.WeightSpec(primitives=prims, field_path=obj.get("field_path"))
    except field.WeightAmplitudeError as exc:
        raise ConfigError(str(exc)) from exc
    for p in prims:
        if p.dim != dim:
            raise ConfigError(f"primitive dimension {p.dim} != config dim {dim}")
    return spec


def parse_solver(obj: dict) -> SolveParams:
    _check_keys(obj, {"tolerance", "max_sweeps", "relaxation", "activation_threshold",
                      "margin_cells"}, "solver")
    try:
        return SolveParams(
            tolerance=float(obj.get("tolerance", 1e-12)),
            max_sweeps=int(obj.get("max_sweeps", 500_000)),
            relaxation=obj.get("relaxation", None),
            activation_threshold=obj.get("activation_threshold", None),
            margin_cells=int(obj.get("margin_cells", 4)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    _check_keys(raw, {"dim", "weight", "grid", "solver", "outputs", "verify"}, "config")
    if "dim" not in raw or "weight" not in raw:
        raise ConfigError("config requires dim and weight")
    dim = int(raw["dim"])
    if dim not in (1, 2, 3):
        raise ConfigError("dim must be 1, 2, or 3")
    grid_obj = raw.get("grid", {})
    _check_keys(grid_obj, {"h", "box"}, "grid")
    if "h" not in grid_obj:
        raise ConfigError("grid.h is required")
    outputs = raw.get("outputs", {})
    _check_keys(outputs, {"directory", "emit_fields", "emit_pgm"}, "outputs")
    verify = raw.get("verify", {})
    _check_keys(verify, {"enabled", "measure_rtol", "centroid_tol_cells"}, "verify")
    return raw


def thread_cap() -> int:
    raw = os.environ.get("QD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"QD_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("QD_THREADS must be >= 1")
    return n


def _write_report(report: dict, out_dir: Path) -> Path:
    path = out_dir / "report.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    return path


def cmd_solve(config_path: str, out_override: str | None = None) -> int:
    t_start = time.perf_counter()
    cfg = load_config(config_path)
    dim = int(cfg["dim"])
    spec = parse_weight(cfg["weight"], dim)
    params = parse_solver(cfg.get("solver", {}))
    h = float(cfg["grid"]["h"])
    if h <= 0:
        raise ConfigError("grid.h must be positive")

    outputs = cfg.get("outputs", {})
    out_dir = Path(out_override or outputs.get("directory", "qd_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_fields = bool(outputs.get("emit_fields", True))
    emit_pgm = bool(outputs.get("emit_pgm", True))

    box = cfg["grid"].get("box")
    if box is not None:
        lo = [b[0] for b in box]
        hi = [b[1] for b in box]
        shape = tuple(int(round((b - a) / h)) for a, b in zip(lo, hi))
        grid = field.Grid(dim=dim, origin=tuple(lo), spacing=h, shape=shape)
    else:
        grid = weight_grid(spec, dim, h, margin_cells=params.margin_cells)

    timings = {}
    t0 = time.perf_counter()
    w = field.rasterize_weight(spec, grid)
    timings["rasterize_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sol = solve_obstacle(w, params)
    timings["solve_s"] = time.perf_counter() - t0

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "config": cfg,
        "grid": {"dim": dim, "shape": list(grid.shape), "h": grid.spacing,
                 "origin": list(grid.origin)},
        "threads": thread_cap(),
        "solver": {
            "sweeps_used": sol.sweeps_used,
            "converged": sol.converged,
            "activation_threshold": sol.threshold,
            "residuals": {
                "max_sign_violation": sol.residuals.max_sign_violation,
                "max_constraint_violation": sol.residuals.max_constraint_violation,
                "max_complementarity": sol.residuals.max_complementarity,
            },
        },
        "artifacts": {},
    }
    if not sol.converged:
        report["error"] = "solver did not converge"
        timings["total_s"] = time.perf_counter() - t_start
        report["timings"] = timings
        _write_report(report, out_dir)
        return EXIT_NO_CONVERGENCE

    Q = extract_domain(sol, w)
    lap_res = laplacian_identity_residual(sol, w)
    report["solver"]["laplacian_identity_residual"] = lap_res.reported_max

    artifacts = {}
    if emit_fields:
        field.write_field(sol.f, out_dir / "f.qdf")
        field.write_field(w, out_dir / "w.qdf")
        field.write_mask(Q, out_dir / "Q.qdf")
        artifacts["f"] = str(out_dir / "f.qdf")
        artifacts["w"] = str(out_dir / "w.qdf")
        artifacts["Q"] = str(out_dir / "Q.qdf")
    if emit_pgm and dim == 2:
        field.write_mask_pgm(Q, out_dir / "Q.pgm")
        artifacts["Q_pgm"] = str(out_dir / "Q.pgm")
    report["artifacts"] = artifacts

    verify_cfg = cfg.get("verify", {})
    enabled = verify_cfg.get("enabled", True)
    all_pass = True
    if enabled:
        t0 = time.perf_counter()
        vr = quadrature.build_report(Q, w)
        timings["verify_s"] = time.perf_counter() - t0
        report["verification"] = vr.to_dict()
        all_pass = vr.all_pass()

    timings["total_s"] = time.perf_counter() - t_start
    report["timings"] = timings
    _write_report(report, out_dir)
    return EXIT_OK if all_pass else EXIT_VERIFY_FAILED


def cmd_verify(domain_path: str, weight_path: str, out: str | None = None) -> int:
    try:
        Q = field.read_mask(domain_path)
        w = field.read_field(weight_path)
    except (OSError, field.FieldFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not Q.grid.same_lattice(w.grid):
        print("error: domain and weight grids differ", file=sys.stderr)
        return EXIT_CONFIG
    vr = quadrature.build_report(Q, w)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "inputs": {"domain": str(domain_path), "weight": str(weight_path)},
        "threads": thread_cap(),
        "verification": vr.to_dict(),
    }
    out_dir = Path(out or "qd_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_report(report, out_dir)
    print(json.dumps(vr.to_dict(), indent=2))
    return EXIT_OK if vr.all_pass() else EXIT_VERIFY_FAILED


def cmd_oracle(kind: str, args: argparse.Namespace) -> int:
    out_dir = Path(args.out or "qd_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    report: dict = {"schema_version": SCHEMA_VERSION, "command": f"oracle {kind}",
                    "threads": thread_cap()}
    if kind == "radial":
        try:
            sol = oracles.radial_solution(args.c, args.radius, args.dim)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        rr = np.linspace(0.0, 1.25 * sol.R_prime, args.samples)
        prof = sol.profile(rr)
        csv_path = out_dir / "radial_profile.csv"
        with csv_path.open("w") as fh:
            fh.write("r,f\n")
            for r, v in zip(rr, prof):
                fh.write(f"{float(r)!r},{float(v)!r}\n")
        report["oracle"] = {"c": sol.c, "R": sol.R, "dim": sol.dim,
                            "R_prime": sol.R_prime,
                            "f_at_R_prime": float(sol.profile(np.array([sol.R_prime]))[0]),
                            "f_at_zero": float(sol.profile(np.array([0.0]))[0])}
        report["artifacts"] = {"profile_csv": str(csv_path)}
    elif kind == "1d":
        try:
            pieces = _parse_pieces(args.pieces)
            sol1 = oracles.exact_1d(pieces, h=args.h)
        except (ValueError, oracles.ActiveSetCyclingError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        csv_path = out_dir / "intervals.csv"
        with csv_path.open("w") as fh:
            fh.write("a,b\n")
            for a, b in sol1.intervals:
                fh.write(f"{float(a)!r},{float(b)!r}\n")
        report["oracle"] = {
            "pieces": [list(p) for p in pieces],
            "intervals": [list(iv) for iv in sol1.intervals],
            "total_length": sol1.total_length,
            "weight_mass": float(np.sum(sol1.w) * sol1.grid.spacing),
        }
        report["artifacts"] = {"intervals_csv": str(csv_path)}
    else:
        print(f"error: unknown oracle kind {kind!r}", file=sys.stderr)
        return EXIT_CONFIG
    _write_report(report, out_dir)
    print(json.dumps(report["oracle"], indent=2))
    return EXIT_OK


def _parse_pieces(text: str) -> list[tuple[float, float, float]]:
    """'a,b,amp;a,b,amp;...' -> piece list."""
    pieces = []
    for chunk in text.split(";"):
        parts = chunk.split(",")
        if len(parts) != 3:
            raise ValueError(f"piece {chunk!r} must be a,b,amplitude")
        pieces.append((float(parts[0]), float(parts[1]), float(parts[2])))
    return pieces


def _parse_region(text: str) -> cutoffs_mod.Region:
    obj = json.loads(text)
    _check_keys(obj, {"kind", "center", "radius", "lo", "hi"}, "region")
    if obj.get("kind") == "ball":
        return cutoffs_mod.BallRegion(tuple(obj["center"]), float(obj["radius"]))
    if obj.get("kind") == "box":
        return cutoffs_mod.BoxRegion(tuple(obj["lo"]), tuple(obj["hi"]))
    raise ConfigError("region kind must be ball or box")


def cmd_cutoffs(args: argparse.Namespace) -> int:
    try:
        region = _parse_region(args.region)
        j_list = [int(j) for j in args.j.split(",")]
    except (json.JSONDecodeError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    h = args.h
    for j in j_list:
        if 1.0 / j < 4.0 * h:
            print(f"error: 1/j = {1.0/j} below 4h = {4.0*h}", file=sys.stderr)
            return EXIT_CONFIG
    out_dir = Path(args.out or "qd_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    cubes = cutoffs_mod.whitney_decompose(region, max_level=args.max_level)
    rd = cutoffs_mod.RegularizedDistance(region, cubes)
    center0, side0 = region.bounding_cube()
    n = max(2, int(round(side0 / h)))
    axes = [np.linspace(center0[a] - side0 / 2 + h / 2, center0[a] + side0 / 2 - h / 2, n)
            for a in range(region.dim)]
    probes = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    probes = probes[region.distance(probes) > 0]
    stats = rd.probe_constants(probes)
    c_used = cutoffs_mod.effective_distance_constant(rd, probes)

    csv_path = out_dir / "whitney_cubes.csv"
    with csv_path.open("w") as fh:
        fh.write(",".join([f"c{a+1}" for a in range(region.dim)]) + ",side\n")
        for cube in cubes:
            fh.write(",".join(repr(float(c)) for c in cube.center) + f",{float(cube.side)!r}\n")

    delta = region.distance(probes)
    ratios = {}
    for j in j_list:
        hj = cutoffs_mod.HedbergCutoff(region, j, rd, c_used)
        vals = hj(probes)
        ok_one = bool(np.all(vals[delta > 1.0 / j] == 1.0))
        step = 1e-5
        grad_sq = np.zeros(len(probes))
        for a in range(region.dim):
            e = np.zeros(region.dim)
            e[a] = step
            grad_sq += ((hj(probes + e) - hj(probes - e)) / (2 * step)) ** 2
        xi_vals = np.array([cutoffs_mod.xi(min(t, 0.999)) for t in delta])
        ratio = float(np.max(np.sqrt(grad_sq) * j / xi_vals))
        ratios[str(j)] = {"unit_above_depth": ok_one, "grad_ratio_max": ratio,
                          "pass": ok_one and ratio <= 1.1}
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "cutoffs",
        "region": json.loads(args.region),
        "threads": thread_cap(),
        "whitney": {"cubes": len(cubes), "beta": rd.beta},
        "distance_constants": stats,
        "theory_constants": rd.theory_constants(),
        "effective_constant": c_used,
        "hedberg": ratios,
        "artifacts": {"cubes_csv": str(csv_path)},
    }
    _write_report(report, out_dir)
    print(json.dumps({"whitney_cubes": len(cubes), "hedberg": ratios}, indent=2))
    return EXIT_OK if all(r["pass"] for r in ratios.values()) else EXIT_VERIFY_FAILED


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qd",
        description="Quadrature-domain laboratory: solve, verify, oracles, cutoffs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="rasterize, solve, extract, verify")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", default=None)

    p_verify = sub.add_parser("verify", help="verify a domain/weight pair of QDF1 files")
    p_verify.add_argument("--domain", required=True)
    p_verify.add_argument("--weight", required=True)
    p_verify.add_argument("--out", default=None)

    p_oracle = sub.add_parser("oracle", help="reference solutions")
    o_sub = p_oracle.add_subparsers(dest="kind", required=True)
    o_rad = o_sub.add_parser("radial")
    o_rad.add_argument("--c", type=float, required=True)
    o_rad.add_argument("--radius", type=float, required=True)
    o_rad.add_argument("--dim", type=int, required=True)
    o_rad.add_argument("--samples", type=int, default=512)
    o_rad.add_argument("--out", default=None)
    o_1d = o_sub.add_parser("1d")
    o_1d.add_argument("--pieces", required=True, help="a,b,amp;a,b,amp;...")
    o_1d.add_argument("--h", type=float, default=None)
    o_1d.add_argument("--out", default=None)

    p_cut = sub.add_parser("cutoffs", help="Whitney/distance/cutoff property run")
    p_cut.add_argument("--region", required=True, help='JSON, e.g. {"kind":"ball",...}')
    p_cut.add_argument("--j", required=True, help="comma-separated cutoff indices")
    p_cut.add_argument("--h", type=float, default=1.0 / 64.0)
    p_cut.add_argument("--max-level", type=int, default=12)
    p_cut.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args.config, args.out)
        if args.command == "verify":
            return cmd_verify(args.domain, args.weight, args.out)
        if args.command == "oracle":
            return cmd_oracle(args.kind, args)
        if args.command == "cutoffs":
            return cmd_cutoffs(args)
    except (ConfigError, field.WeightAmplitudeError, field.SupportNotContainedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotProperlySupportedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
