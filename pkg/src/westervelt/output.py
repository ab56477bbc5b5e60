"""Artifact writers: legacy VTK snapshots and CSV reports.

All text output is deterministic: '.' decimal separator, '\n' line
endings and 17 significant digits, so identical runs produce
byte-identical files.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh

ERROR_COLUMNS = [
    "step",
    "t",
    "rel_err_psi",
    "rel_err_u",
    "energy",
    "err_psi_l2",
    "ref_psi_l2",
    "err_u_l2",
    "ref_u_l2",
]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_vtk(path, mesh: Mesh, point_data: dict, title: str = "snapshot") -> None:
    """Write a legacy-VTK unstructured grid with nodal scalar fields.

    Triangles become cell type 5, tetrahedra type 10; 2D points are
    padded with z = 0.
    """
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_nodes} double",
    ]
    coords = np.zeros((mesh.num_nodes, 3))
    coords[:, : mesh.dim] = mesh.nodes
    for p in coords:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")

    nen = mesh.dim + 1
    lines.append(f"CELLS {mesh.num_elements} {mesh.num_elements * (nen + 1)}")
    for el in mesh.elements:
        lines.append(str(nen) + " " + " ".join(str(int(i)) for i in el))
    cell_type = 5 if mesh.dim == 2 else 10
    lines.append(f"CELL_TYPES {mesh.num_elements}")
    lines.extend([str(cell_type)] * mesh.num_elements)

    if point_data:
        lines.append(f"POINT_DATA {mesh.num_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (mesh.num_nodes,):
                raise ValueError(f"field {name!r} must have one value per node")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)

    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_error_csv(path, report) -> None:
    """Write the per-snapshot error table of a run."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ERROR_COLUMNS)
        for i in range(report.steps.size):
            writer.writerow(
                [
                    int(report.steps[i]),
                    _fmt(report.times[i]),
                    _fmt(report.rel_err_psi[i]),
                    _fmt(report.rel_err_u[i]),
                    _fmt(report.energy[i]),
                    _fmt(report.err_psi[i]),
                    _fmt(report.ref_psi[i]),
                    _fmt(report.err_u[i]),
                    _fmt(report.ref_u[i]),
                ]
            )


def read_error_csv(path) -> dict:
    """Read an error table back as a column -> array dict."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty error table") from None
        if header != ERROR_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: empty error table")
    data = np.array(rows, dtype=np.float64)
    if data.shape[1] != len(ERROR_COLUMNS):
        raise ValueError(f"{path}: ragged rows")
    out = {name: data[:, j].copy() for j, name in enumerate(ERROR_COLUMNS)}
    out["step"] = out["step"].astype(np.int64)
    return out


def write_angle_csv(path, mesh: Mesh, element_ids, angle_snapshots) -> None:
    """Write the recorded adaptive angle history.

    One row per (snapshot, boundary element): step, time, element id,
    element centroid, angle in degrees and the enabled flag.
    """
    centroids = mesh.nodes[mesh.elements[element_ids]].mean(axis=1)
    coord_names = ["x", "y", "z"][: mesh.dim]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "t", "element"] + coord_names + ["theta_deg", "enabled"])
        for step, t, theta_deg, enabled in angle_snapshots:
            for pos, eid in enumerate(element_ids):
                writer.writerow(
                    [int(step), _fmt(t)]
                    + [int(eid)]
                    + [_fmt(c) for c in centroids[pos]]
                    + [_fmt(theta_deg[pos]), int(enabled[pos])]
                )
