"""File outputs: curve CSVs, legacy-VTK displacement fields, yield-map CSVs
and JSON run manifests.

Curve files carry a mandatory header, '.' decimal separator and line-feed
terminators; floats are written with repr so that identical runs produce
bit-identical files.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .scenarios import CurveRecord

CURVE_BASE_COLUMNS = ("pseudo_time", "applied_displacement_mm", "reaction_N")
CURVE_TRANSVERSE = "transverse_displacement_mm"
CURVE_POISSON = "poisson_ratio"


def _fmt(v) -> str:
    v = float(v)
    if np.isnan(v):
        return ""
    return repr(v)


def write_curve_csv(path, curve: CurveRecord):
    cols = list(CURVE_BASE_COLUMNS)
    if curve.transverse is not None:
        cols.append(CURVE_TRANSVERSE)
    if curve.poisson is not None:
        cols.append(CURVE_POISSON)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k in range(len(curve.pseudo_time)):
            row = [_fmt(curve.pseudo_time[k]), _fmt(curve.applied[k]), _fmt(curve.reaction[k])]
            if curve.transverse is not None:
                row.append(_fmt(curve.transverse[k]))
            if curve.poisson is not None:
                row.append(_fmt(curve.poisson[k]))
            w.writerow(row)


def read_curve_csv(path) -> CurveRecord:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for c in CURVE_BASE_COLUMNS:
            if c not in cols:
                raise ValueError(f"curve file {path} lacks required column {c!r}")
        rows = list(reader)

    def col(name):
        return np.array([float(r[name]) if r[name] != "" else np.nan for r in rows])

    return CurveRecord(
        pseudo_time=col("pseudo_time"),
        applied=col("applied_displacement_mm"),
        reaction=col("reaction_N"),
        transverse=col(CURVE_TRANSVERSE) if CURVE_TRANSVERSE in cols else None,
        poisson=col(CURVE_POISSON) if CURVE_POISSON in cols else None,
    )


def write_vtk(path, title, points, cells, cell_type, point_vectors=None,
              cell_scalars=None):
    """Legacy ASCII unstructured-grid file (quads: cell_type 9, lines: 3)."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    with open(path, "w", newline="") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        for p in points:
            z = p[2] if len(p) > 2 else 0.0
            fh.write(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(z)}\n")
        m = len(cells)
        width = len(cells[0]) if m else 0
        fh.write(f"CELLS {m} {m * (width + 1)}\n")
        for c in cells:
            fh.write(" ".join([str(width)] + [str(int(i)) for i in c]) + "\n")
        fh.write(f"CELL_TYPES {m}\n")
        for _ in range(m):
            fh.write(f"{cell_type}\n")
        if point_vectors:
            fh.write(f"POINT_DATA {n}\n")
            for name, vec in point_vectors.items():
                vec = np.asarray(vec, dtype=float)
                fh.write(f"VECTORS {name} double\n")
                for v in vec:
                    z = v[2] if len(v) > 2 else 0.0
                    fh.write(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(z)}\n")
        if cell_scalars:
            fh.write(f"CELL_DATA {m}\n")
            for name, val in cell_scalars.items():
                fh.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
                for v in np.asarray(val, dtype=float):
                    fh.write(f"{_fmt(v)}\n")


def write_macro_field(path, model, u):
    """Displacement field of a macro model as a quad mesh."""
    vec = np.column_stack([u[0::2], u[1::2]])
    write_vtk(path, "macroscale displacement field", model.nodes, model.elements, 9,
              point_vectors={"displacement": vec})


def write_dns_field(path, lattice, u):
    """Displacement field of a DNS lattice as line cells."""
    vec = np.column_stack([u[0::2], u[1::2]])
    cells = np.column_stack([lattice.node_i, lattice.node_j])
    write_vtk(path, "lattice displacement field", lattice.nodes, cells, 3,
              point_vectors={"displacement": vec})


def write_yield_map_csv(path, lattice, flags):
    """Strut endpoint coordinates plus a yielded flag, one row per strut."""
    a = lattice.nodes[lattice.node_i]
    b = lattice.nodes[lattice.node_j]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "y1", "x2", "y2", "yielded"])
        for k in range(lattice.n_struts):
            w.writerow([_fmt(a[k, 0]), _fmt(a[k, 1]), _fmt(b[k, 0]), _fmt(b[k, 1]),
                        int(bool(flags[k]))])


def write_manifest(path, payload: dict):
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
