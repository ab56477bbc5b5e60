"""Command line front end.

Subcommands: run a scenario and write its artifacts, compare two error
tables, dump the adaptive angle history, or print mesh statistics.
Exit codes: 0 success, 2 configuration problem, 3 numerical failure
(fixed-point divergence, boundary degeneracy or solver breakdown).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .angles import AngleField
from .assembly import DegeneracyError
from .integrator import FixedPointError, run
from .mesh import BoundaryTag, MeshError, element_measures
from .output import read_error_csv, write_angle_csv, write_error_csv, write_vtk
from .scenarios import (
    ConfigError,
    Scenario,
    build_mesh,
    load_scenario,
    parse_variant,
    pressure_field,
    run_scenario,
    scenario_operators,
)
from .solver import SolverError

THREADS_ENV = "WESTERVELT_THREADS"


def _apply_threads(requested):
    """Pin BLAS-style thread pools; flag beats the environment variable."""
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return
        try:
            requested = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if requested < 1:
        raise ConfigError("thread count must be at least 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(requested)


def _load(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if getattr(args, "snapshot_stride", None) is not None:
        if args.snapshot_stride < 1:
            raise ConfigError("--snapshot-stride must be at least 1")
        scenario = replace(scenario, snapshot_stride=args.snapshot_stride)
    return scenario


def _variants(args, scenario: Scenario):
    if not args.variant:
        return [scenario.variant]
    return [parse_variant(text) for text in args.variant]


def cmd_run(args) -> int:
    _apply_threads(args.threads)
    scenario = _load(args)
    variants = _variants(args, scenario)
    result = run_scenario(scenario, variants, record_angles=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rho = scenario.phys.rho
    for label, vr in result.results.items():
        vdir = out / label
        vdir.mkdir(exist_ok=True)
        write_error_csv(vdir / "errors.csv", vr.report)
        traj = vr.trajectory
        if traj.angle_snapshots:
            ids = AngleField(result.mesh).element_ids
            write_angle_csv(vdir / "angles.csv", result.mesh, ids, traj.angle_snapshots)
        for i, step in enumerate(traj.steps):
            write_vtk(
                vdir / f"snapshot_{int(step):06d}.vtk",
                result.mesh,
                {"psi": traj.psi[i], "u": pressure_field(traj.psi_dot[i], rho)},
                title=f"{scenario.name} {label} step {int(step)}",
            )
        print(
            f"{label}: e_psi={vr.report.e_psi:.6e} e_u={vr.report.e_u:.6e} "
            f"steps={scenario.n_steps} wall={traj.wall_time:.1f}s -> {vdir}"
        )
    return 0


def _trapezoid(values, times) -> float:
    dt = np.diff(times)
    return float(np.sum(0.5 * dt * (values[1:] + values[:-1])))


def _aggregate(table) -> tuple:
    # space-time aggregates from the absolute-norm columns
    def ratio(err, ref):
        num = _trapezoid(err**2, table["t"])
        den = _trapezoid(ref**2, table["t"])
        if den > 0.0:
            return math.sqrt(num / den)
        return 0.0 if num == 0.0 else math.inf

    return (
        ratio(table["err_psi_l2"], table["ref_psi_l2"]),
        ratio(table["err_u_l2"], table["ref_u_l2"]),
    )


def cmd_compare(args) -> int:
    base = read_error_csv(args.baseline)
    new = read_error_csv(args.candidate)
    if base["step"].shape != new["step"].shape or not np.array_equal(
        base["step"], new["step"]
    ):
        raise ConfigError("misaligned grids: the two tables cover different steps")
    if not np.array_equal(base["t"], new["t"]):
        raise ConfigError("misaligned grids: the two tables cover different times")
    be_psi, be_u = _aggregate(base)
    ne_psi, ne_u = _aggregate(new)

    def pct(eb, en):
        return 100.0 * (eb - en) / eb if eb > 0.0 else 0.0

    print(f"baseline:  e_psi={be_psi:.6e} e_u={be_u:.6e}")
    print(f"candidate: e_psi={ne_psi:.6e} e_u={ne_u:.6e}")
    print(f"improvement: psi {pct(be_psi, ne_psi):.2f}%, u {pct(be_u, ne_u):.2f}%")
    return 0


def cmd_angles(args) -> int:
    _apply_threads(args.threads)
    scenario = _load(args)
    variants = _variants(args, scenario)
    if len(variants) != 1:
        raise ConfigError("angles takes exactly one variant")
    variant = variants[0]
    if not variant.adaptive:
        raise ConfigError(f"variant {variant.label} is not adaptive, no angles to record")
    mesh = build_mesh(scenario.mesh)
    ops = scenario_operators(scenario, mesh, variant)
    traj = run(
        ops,
        scenario.scheme,
        scenario.n_steps,
        scenario.snapshot_stride,
        angle_cfg=scenario.angle_cfg,
        record_angles=True,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "angles.csv"
    write_angle_csv(path, mesh, ops.angle_field.element_ids, traj.angle_snapshots)
    print(
        f"{variant.label}: {len(traj.angle_snapshots)} snapshots of "
        f"{ops.angle_field.element_ids.size} boundary elements -> {path}"
    )
    return 0


def cmd_mesh_info(args) -> int:
    scenario = _load(args)
    mesh = build_mesh(scenario.mesh)
    ref = build_mesh(scenario.mesh, scenario.extension)
    for name, m in [("truncated", mesh), ("reference", ref)]:
        counts = {
            tag.name.lower(): int(np.count_nonzero(m.facet_tags == tag))
            for tag in BoundaryTag
        }
        sides = ", ".join(f"{k}={v}" for k, v in counts.items() if v)
        measure = float(element_measures(m).sum())
        print(
            f"{name}: dim={m.dim} nodes={m.num_nodes} elements={m.num_elements} "
            f"measure={measure:.6e} facets[{sides}]"
        )
    if scenario.mesh.kind != "msh":
        print(f"extension={scenario.extension:.6e} (kind={scenario.mesh.kind})")
    print(f"dt={scenario.dt:.6e} n_steps={scenario.n_steps}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="westervelt",
        description="Nonlinear acoustic wave runs with adaptive absorbing boundaries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write CSV/VTK artifacts")
    p.add_argument("--scenario", required=True, help="scenario TOML file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--variant",
        action="append",
        help="abc{0|05|1}[-adaptive|-fixed<deg>]; repeatable, default from the scenario",
    )
    p.add_argument("--snapshot-stride", type=int, help="override the scenario stride")
    p.add_argument("--threads", type=int, help=f"BLAS threads (or set {THREADS_ENV})")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare two error tables")
    p.add_argument("baseline", help="baseline errors.csv")
    p.add_argument("candidate", help="candidate errors.csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("angles", help="record the adaptive angle history")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", action="append", help="adaptive variant to trace")
    p.add_argument("--snapshot-stride", type=int)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_angles)

    p = sub.add_parser("mesh-info", help="print mesh statistics for a scenario")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_mesh_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DegeneracyError, FixedPointError, SolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, MeshError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
