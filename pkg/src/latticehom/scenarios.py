"""Benchmark scenario builders and their measured quantities.

Three displacement-controlled problems: a double-clamped beam (half model), a
square plate under tension (x or y loading, with a transverse probe at the
midpoint of the lateral edge), and a symmetrically notched specimen under a
cyclic schedule.  Each scenario can produce both a homogenized macro model
and a matching full-resolution lattice.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import dns as dns_mod
from . import macrofe
from .macrofe import DirichletSet, LoadSchedule, MacroModel
from .material import ALSI10MG, MaterialParams
from .stepping import SolverOptions
from .unitcell import CellKind, make_unit_cell

SCENARIO_KINDS = ("beam", "plate_x", "plate_y", "notched_cyclic")

_DEFAULT_MESH = {"beam": (30, 6)}
_CYCLIC_BREAKPOINTS = ((0.0, 0.0), (1.0, 1.0), (2.0, -1.0), (3.0, 1.0))


@dataclass(frozen=True)
class ScenarioSpec:
    """Complete description of one benchmark run."""

    kind: str
    lattice: str
    nx: int
    ny: int
    cell_size: float = 1.0
    strut_area: float = 0.1
    thickness: float = 1.0
    mesh_nx: int = None
    mesh_ny: int = None
    amplitude: float = None
    increments_per_segment: int = 20
    notch_radius: float = 6.0
    notch_depth: float = 6.0
    material: MaterialParams = ALSI10MG

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind: {self.kind!r}")
        CellKind(self.lattice)
        if self.nx < 1 or self.ny < 1:
            raise ValueError("lattice distribution must be at least 1x1")
        if self.kind in ("plate_x", "plate_y") and self.nx != self.ny:
            raise ValueError("the plate scenario requires a square lattice distribution")
        if self.cell_size <= 0 or self.strut_area <= 0 or self.thickness <= 0:
            raise ValueError("cell_size, strut_area and thickness must be positive")
        if self.increments_per_segment < 1:
            raise ValueError("increments_per_segment must be >= 1")

    @property
    def domain(self) -> tuple[float, float]:
        return self.nx * self.cell_size, self.ny * self.cell_size

    @property
    def applied_displacement(self) -> float:
        """Peak applied displacement (schedule factor 1)."""
        if self.amplitude is not None:
            return self.amplitude
        if self.kind == "beam":
            return 0.1 * self.ny * self.cell_size
        if self.kind in ("plate_x", "plate_y"):
            return 1.0
        return 0.3  # notched cyclic default

    @property
    def mesh(self) -> tuple[int, int]:
        if self.mesh_nx is not None and self.mesh_ny is not None:
            return self.mesh_nx, self.mesh_ny
        if self.kind == "beam":
            return _DEFAULT_MESH["beam"]
        if self.kind == "notched_cyclic":
            return self.nx, self.ny  # one element per cell
        return 8, 8  # plate: the solution field is spatially uniform


@dataclass
class CurveRecord:
    """Reaction curve of one run, ordered by pseudo-time."""

    pseudo_time: np.ndarray
    applied: np.ndarray
    reaction: np.ndarray
    transverse: np.ndarray = None
    poisson: np.ndarray = None


def curve_from_history(rows, drive_set: str, drive_amp: float,
                       probe: str = None, with_poisson: bool = False) -> CurveRecord:
    t = np.array([r["time"] for r in rows])
    applied = np.array([r["factor"] for r in rows]) * drive_amp
    reaction = np.array([r["reactions"][drive_set] for r in rows])
    transverse = None
    pois = None
    if probe is not None:
        transverse = np.array([r["probes"][probe] for r in rows])
        if with_poisson:
            with np.errstate(divide="ignore", invalid="ignore"):
                pois = np.where(np.abs(applied) > 0.0, -transverse / applied, np.nan)
    return CurveRecord(t, applied, reaction, transverse, pois)


def poisson_ratio(u_trans: float, u_axial: float) -> float:
    """Effective ratio -u_trans/u_axial of a square domain."""
    if u_axial == 0.0:
        raise ValueError("zero axial displacement")
    return -u_trans / u_axial


def structured_quad_mesh(lx: float, ly: float, nex: int, ney: int):
    """Regular Q4 grid over [0, lx] x [0, ly], counterclockwise connectivity."""
    xs = np.linspace(0.0, lx, nex + 1)
    ys = np.linspace(0.0, ly, ney + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    elems = []
    for j in range(ney):
        for i in range(nex):
            n0 = j * (nex + 1) + i
            elems.append([n0, n0 + 1, n0 + nex + 2, n0 + nex + 1])
    return nodes, np.array(elems, dtype=np.int64)


def _edge_nodes(nodes, side, lx, ly):
    tol = 1e-9 * max(lx, ly)
    x, y = nodes[:, 0], nodes[:, 1]
    if side == "left":
        m = np.abs(x) <= tol
    elif side == "right":
        m = np.abs(x - lx) <= tol
    elif side == "bottom":
        m = np.abs(y) <= tol
    elif side == "top":
        m = np.abs(y - ly) <= tol
    else:
        raise ValueError(side)
    return np.nonzero(m)[0]


@dataclass
class Scenario:
    """A built benchmark: boundary conditions plus model factories."""

    spec: ScenarioSpec
    schedule: LoadSchedule
    bcs: list                    # (name, side, comp, scale)
    drive_set: str
    probe_point: tuple = None
    probe_comp: int = None

    def macro_model(self) -> MacroModel:
        spec = self.spec
        lx, ly = spec.domain
        nex, ney = spec.mesh
        nodes, elems = structured_quad_mesh(lx, ly, nex, ney)
        if spec.kind == "notched_cyclic":
            nodes, elems = _remove_notched_elements(spec, nodes, elems)
        cell = make_unit_cell(spec.lattice, spec.cell_size, spec.strut_area, spec.thickness)
        dirichlet = [DirichletSet(name, _edge_nodes(nodes, side, lx, ly), comp, scale)
                     for name, side, comp, scale in self.bcs]
        return MacroModel(nodes, elems, spec.thickness, cell, spec.material, dirichlet)

    def dns_model(self):
        spec = self.spec
        lat = dns_mod.generate_lattice(spec.lattice, spec.nx, spec.ny,
                                       spec.cell_size, spec.strut_area)
        if spec.kind == "notched_cyclic":
            lat = _remove_notched_struts(spec, lat)
        dirichlet = [DirichletSet(name, lat.boundary_nodes(side), comp, scale)
                     for name, side, comp, scale in self.bcs]
        return lat, dirichlet

    def macro_probes(self, model: MacroModel):
        if self.probe_point is None:
            return {}
        return {"transverse": (model.nearest_node(self.probe_point), self.probe_comp)}

    def dns_probes(self, lattice):
        if self.probe_point is None:
            return {}
        return {"transverse": (lattice.nearest_node(self.probe_point), self.probe_comp)}


def _notch_circles(spec: ScenarioSpec):
    lx, ly = spec.domain
    r, d = spec.notch_radius, spec.notch_depth
    if d > r:
        raise ValueError("notch depth cannot exceed the notch radius")
    if 2.0 * d >= lx:
        raise ValueError("notches intersect: gauge width would vanish")
    return ((d - r, 0.5 * ly, r), (lx - (d - r), 0.5 * ly, r))


def _inside_any(circles, pts):
    m = np.zeros(len(pts), dtype=bool)
    for cx, cy, r in circles:
        m |= (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 < r * r
    return m


def _remove_notched_elements(spec, nodes, elems):
    circles = _notch_circles(spec)
    centers = nodes[elems].mean(axis=1)
    keep = ~_inside_any(circles, centers)
    elems = elems[keep]
    used = np.zeros(len(nodes), dtype=bool)
    used[elems.ravel()] = True
    remap = -np.ones(len(nodes), dtype=np.int64)
    remap[used] = np.arange(int(used.sum()))
    return nodes[used], remap[elems]


def _remove_notched_struts(spec, lattice):
    circles = _notch_circles(spec)
    keep = ~_inside_any(circles, lattice.strut_midpoints())
    return _prune_mechanisms(lattice, keep)


def _prune_mechanisms(lattice, keep):
    """Drop struts left hanging by the notch cut.

    A pin-jointed node needs at least two non-parallel struts; nodes that
    lose that after the cut would make the stiffness singular, so their
    struts are removed iteratively until the remaining network is stable.
    """
    keep = keep.copy()
    n = lattice.n_nodes
    while True:
        ok = np.zeros(n, dtype=bool)
        first_dir = np.zeros((n, 2))
        seen = np.zeros(n, dtype=bool)
        for e in np.nonzero(keep)[0]:
            d = np.array([lattice.cx[e], lattice.cy[e]])
            for node in (lattice.node_i[e], lattice.node_j[e]):
                if not seen[node]:
                    seen[node] = True
                    first_dir[node] = d
                elif abs(first_dir[node, 0] * d[1] - first_dir[node, 1] * d[0]) > 1e-9:
                    ok[node] = True
        bad = seen & ~ok
        drop = bad[lattice.node_i] | bad[lattice.node_j]
        drop &= keep
        if not drop.any():
            break
        keep &= ~drop
    return dns_mod.filter_struts(lattice, keep)


def build_beam(spec: ScenarioSpec) -> Scenario:
    """Double-clamped beam, one-half model: left edge fully fixed, right edge
    held in x and driven in y to 0.1 times the beam thickness."""
    if spec.kind != "beam":
        raise ValueError(f"expected a beam spec, got {spec.kind!r}")
    amp = spec.applied_displacement
    bcs = [("left_x", "left", 0, 0.0),
           ("left_y", "left", 1, 0.0),
           ("right_x", "right", 0, 0.0),
           ("right_y", "right", 1, amp)]
    schedule = LoadSchedule(((0.0, 0.0), (1.0, 1.0)), spec.increments_per_segment)
    return Scenario(spec, schedule, bcs, drive_set="right_y")


def build_plate(spec: ScenarioSpec) -> Scenario:
    """Square plate under tension with roller supports.

    x loading: left edge fixed in x, bottom in y, right edge driven in x;
    transverse probe at the top-edge midpoint.  y loading mirrors this and is
    of interest for the triangular lattice (the braced cells are 4-fold
    symmetric, so their x and y responses coincide).
    """
    if spec.kind not in ("plate_x", "plate_y"):
        raise ValueError(f"expected a plate spec, got {spec.kind!r}")
    lx, ly = spec.domain
    amp = spec.applied_displacement
    if spec.kind == "plate_x":
        bcs = [("left_x", "left", 0, 0.0),
               ("bottom_y", "bottom", 1, 0.0),
               ("right_x", "right", 0, amp)]
        scn = Scenario(spec, LoadSchedule(((0.0, 0.0), (1.0, 1.0)), spec.increments_per_segment),
                       bcs, drive_set="right_x",
                       probe_point=(0.5 * lx, ly), probe_comp=1)
    else:
        bcs = [("left_x", "left", 0, 0.0),
               ("bottom_y", "bottom", 1, 0.0),
               ("top_y", "top", 1, amp)]
        scn = Scenario(spec, LoadSchedule(((0.0, 0.0), (1.0, 1.0)), spec.increments_per_segment),
                       bcs, drive_set="top_y",
                       probe_point=(lx, 0.5 * ly), probe_comp=0)
    return scn


def build_notched(spec: ScenarioSpec) -> Scenario:
    """Symmetrically notched specimen: two semicircular edge notches at
    mid-height, bottom edge fully fixed, top edge driven by the cyclic
    schedule (load, unload, reverse, reload)."""
    if spec.kind != "notched_cyclic":
        raise ValueError(f"expected a notched spec, got {spec.kind!r}")
    _notch_circles(spec)  # validate the geometry early
    amp = spec.applied_displacement
    bcs = [("bottom_x", "bottom", 0, 0.0),
           ("bottom_y", "bottom", 1, 0.0),
           ("top_y", "top", 1, amp)]
    schedule = LoadSchedule(_CYCLIC_BREAKPOINTS, spec.increments_per_segment)
    return Scenario(spec, schedule, bcs, drive_set="top_y")


_BUILDERS = {"beam": build_beam, "plate_x": build_plate,
             "plate_y": build_plate, "notched_cyclic": build_notched}


def build(spec: ScenarioSpec) -> Scenario:
    return _BUILDERS[spec.kind](spec)


@dataclass
class RunResult:
    curve: CurveRecord
    rows: list
    u: np.ndarray
    model: object
    wall_time: float


def run_homogenization(scn: Scenario, opts: SolverOptions = SolverOptions(),
                       with_poisson: bool = False) -> RunResult:
    t0 = time.perf_counter()
    model = scn.macro_model()
    probes = scn.macro_probes(model)
    u, rows = macrofe.solve_macro(model, scn.schedule, opts, probes=probes)
    curve = curve_from_history(rows, scn.drive_set, scn.spec.applied_displacement,
                               probe="transverse" if probes else None,
                               with_poisson=with_poisson)
    return RunResult(curve, rows, u, model, time.perf_counter() - t0)


def run_dns(scn: Scenario, opts: SolverOptions = SolverOptions(),
            with_poisson: bool = False) -> RunResult:
    t0 = time.perf_counter()
    lat, dirichlet = scn.dns_model()
    probes = scn.dns_probes(lat)
    u, rows = dns_mod.dns_solve(lat, dirichlet, scn.schedule, scn.spec.material,
                                opts, probes=probes)
    curve = curve_from_history(rows, scn.drive_set, scn.spec.applied_displacement,
                               probe="transverse" if probes else None,
                               with_poisson=with_poisson)
    return RunResult(curve, rows, u, lat, time.perf_counter() - t0)
