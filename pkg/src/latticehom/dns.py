"""Full-resolution lattice solver (direct numerical simulation).

Tiles Nx x Ny unit cells into one deduplicated truss network and solves the
same elastoplastic problem strut by strut; used as the reference for the
homogenized solutions.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels, stepping
from .macrofe import LoadSchedule  # noqa: F401  (re-exported for callers)
from .material import RM_TOL_REL, ConstitutiveError, MaterialParams
from .stepping import SolverOptions
from .unitcell import CellKind, make_unit_cell

#: Node merge tolerance relative to the cell size.
MERGE_TOL_REL = 1e-9
#: Coordinate tolerance of the boundary node sets, relative to the cell size.
EDGE_TOL_REL = 1e-6


class DnsLattice:
    """Deduplicated finite lattice patch with per-strut plastic state."""

    def __init__(self, kind, nx, ny, L_uc, A, nodes, node_i, node_j):
        self.kind = CellKind(kind)
        self.nx = int(nx)
        self.ny = int(ny)
        self.L_uc = float(L_uc)
        self.A = float(A)
        self.nodes = np.asarray(nodes, dtype=float)
        self.node_i = np.asarray(node_i, dtype=np.int64)
        self.node_j = np.asarray(node_j, dtype=np.int64)
        d = self.nodes[self.node_j] - self.nodes[self.node_i]
        L = np.hypot(d[:, 0], d[:, 1])
        if np.any(L <= 0.0):
            raise ValueError("zero-length strut after deduplication")
        self.length = L
        self.cx = d[:, 0] / L
        self.cy = d[:, 1] / L
        self.area = np.full(L.shape, self.A)
        n = self.n_struts
        self.eps_pl = np.zeros(n)
        self.alpha = np.zeros(n)
        self.q = np.zeros(n)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_struts(self):
        return len(self.node_i)

    @property
    def n_dof(self):
        return 2 * len(self.nodes)

    def boundary_nodes(self, side: str) -> np.ndarray:
        """Strict-coordinate edge node sets of the rectangular patch."""
        tol = EDGE_TOL_REL * self.L_uc
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        if side == "left":
            m = np.abs(x) <= tol
        elif side == "right":
            m = np.abs(x - self.nx * self.L_uc) <= tol
        elif side == "bottom":
            m = np.abs(y) <= tol
        elif side == "top":
            m = np.abs(y - self.ny * self.L_uc) <= tol
        else:
            raise ValueError(f"unknown side: {side!r}")
        return np.nonzero(m)[0]

    def nearest_node(self, point) -> int:
        d2 = np.sum((self.nodes - np.asarray(point)) ** 2, axis=1)
        return int(np.argmin(d2))

    def strut_midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[self.node_i] + self.nodes[self.node_j])


def _template_segments(kind, L):
    """Strut segments of one closed cell (owned struts plus the top/right
    closure members that a finite patch needs on its outer boundary)."""
    cell = make_unit_cell(kind, L, 1.0, 1.0)
    segs = [(cell.nodes[s.node_i], cell.nodes[s.node_j]) for s in cell.struts]
    if cell.kind is CellKind.X_BRACED:
        segs += [((0.0, L), (L, L)), ((L, 0.0), (L, L))]
    elif cell.kind is CellKind.XP_BRACED:
        segs += [((0.0, L), (0.5 * L, L)), ((0.5 * L, L), (L, L)),
                 ((L, 0.0), (L, 0.5 * L)), ((L, 0.5 * L), (L, L))]
    return [(np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in segs], cell


def generate_lattice(kind, nx: int, ny: int, L_uc: float, A: float) -> DnsLattice:
    """Tile the unit cell into an Nx x Ny patch, merge coincident nodes and
    deduplicate struts.

    The square cells tile with rectangular periodic vectors and close their
    top/right edges on the patch boundary.  The triangular tiling is sheared
    (a2 = L(1/2, 1)); it is clipped to the rectangle [0, Nx L] x [0, Ny L]
    keeping struts with both endpoints inside.  The triangular lattice is
    mirror symmetric about the vertical boundary lines through its even-row
    nodes, so the mirrored closure of the clipped oblique struts coincides
    with existing members and the left/right edges are the strict x = 0 and
    x = Nx L node columns.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"lattice distribution must be at least 1x1, got {nx}x{ny}")
    if L_uc <= 0 or A <= 0:
        raise ValueError("cell size and strut area must be positive")
    segs, cell = _template_segments(kind, L_uc)
    a1, a2 = cell.a1, cell.a2

    if cell.kind is CellKind.TRIANGULAR:
        i_range = range(-(ny // 2 + 2), nx + 2)
        j_range = range(0, ny + 1)
    else:
        i_range = range(0, nx)
        j_range = range(0, ny)

    ctol = MERGE_TOL_REL * L_uc
    xmax, ymax = nx * L_uc, ny * L_uc
    pts_a, pts_b = [], []
    for j in j_range:
        for i in i_range:
            off = i * a1 + j * a2
            for pa, pb in segs:
                pts_a.append(pa + off)
                pts_b.append(pb + off)
    pa = np.array(pts_a)
    pb = np.array(pts_b)
    inside = ((pa[:, 0] >= -ctol) & (pa[:, 0] <= xmax + ctol)
              & (pa[:, 1] >= -ctol) & (pa[:, 1] <= ymax + ctol)
              & (pb[:, 0] >= -ctol) & (pb[:, 0] <= xmax + ctol)
              & (pb[:, 1] >= -ctol) & (pb[:, 1] <= ymax + ctol))
    pa, pb = pa[inside], pb[inside]

    # merge nodes on a tolerance grid, then deduplicate undirected struts
    mtol = MERGE_TOL_REL * L_uc
    all_pts = np.vstack([pa, pb])
    keys = np.round(all_pts / mtol).astype(np.int64)
    _, first_idx, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    nodes = all_pts[first_idx]

    half = len(pa)
    si = inverse[:half]
    sj = inverse[half:]
    pairs = np.sort(np.stack([si, sj], axis=1), axis=1)
    pairs = np.unique(pairs, axis=0)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("degenerate strut (merged endpoints)")
    return DnsLattice(kind, nx, ny, L_uc, A, nodes, pairs[:, 0], pairs[:, 1])


def filter_struts(lattice: DnsLattice, keep: np.ndarray) -> DnsLattice:
    """New lattice with only the kept struts; orphan nodes are dropped."""
    ni = lattice.node_i[keep]
    nj = lattice.node_j[keep]
    used = np.zeros(lattice.n_nodes, dtype=bool)
    used[ni] = True
    used[nj] = True
    remap = -np.ones(lattice.n_nodes, dtype=np.int64)
    remap[used] = np.arange(int(used.sum()))
    return DnsLattice(lattice.kind, lattice.nx, lattice.ny, lattice.L_uc, lattice.A,
                      lattice.nodes[used], remap[ni], remap[nj])


class _DnsProblem:
    """Adapter wiring a DnsLattice into the incremental Newton driver."""

    def __init__(self, lattice: DnsLattice, dirichlet, mat: MaterialParams):
        self.lat = lattice
        self.mat = mat
        self.dirichlet = list(dirichlet)
        self.n_dof = lattice.n_dof
        seen = {}
        presc, scale = [], []
        for ds in self.dirichlet:
            for n in np.asarray(ds.nodes).ravel():
                key = (int(n), ds.comp)
                if key in seen:
                    raise ValueError(
                        f"dirichlet sets '{seen[key]}' and '{ds.name}' both constrain "
                        f"node {n} component {ds.comp}")
                seen[key] = ds.name
            presc.append(ds.dofs())
            scale.append(np.broadcast_to(np.asarray(ds.scale, dtype=float),
                                         (len(ds.nodes),)).copy())
        self.presc_dofs = (np.concatenate(presc) if presc
                           else np.empty(0, dtype=np.int64))
        self.presc_scale = np.concatenate(scale) if scale else np.empty(0)
        mask = np.ones(self.n_dof, dtype=bool)
        mask[self.presc_dofs] = False
        self.free = np.nonzero(mask)[0]
        dofs = np.empty((lattice.n_struts, 4), dtype=np.int64)
        dofs[:, 0] = 2 * lattice.node_i
        dofs[:, 1] = 2 * lattice.node_i + 1
        dofs[:, 2] = 2 * lattice.node_j
        dofs[:, 3] = 2 * lattice.node_j + 1
        self._krows = np.repeat(dofs, 4, axis=1).ravel()
        self._kcols = np.tile(dofs, (1, 4)).ravel()

    def assemble(self, u):
        lat, mat = self.lat, self.mat
        eps, sigma, D, ep2, al2, q2, yld, f, vals, nf = kernels.truss_system(
            u, lat.node_i, lat.node_j, lat.cx, lat.cy, lat.length, lat.area,
            lat.eps_pl, lat.alpha, lat.q,
            mat.E, mat.H, mat.sigma_y0, mat.Q_inf, mat.b, RM_TOL_REL * mat.sigma_y0)
        if nf:
            raise ConstitutiveError(eps, None, "constitutive failure in DNS assembly")
        K = sp.coo_matrix((np.asarray(vals).ravel(), (self._krows, self._kcols)),
                          shape=(self.n_dof, self.n_dof)).tocsr()
        return f, K, (ep2, al2, q2)

    def commit(self, token):
        ep2, al2, q2 = token
        self.lat.eps_pl[:] = ep2
        self.lat.alpha[:] = al2
        self.lat.q[:] = q2

    def backup(self):
        return (self.lat.eps_pl.copy(), self.lat.alpha.copy(), self.lat.q.copy())

    def restore(self, snap):
        self.lat.eps_pl[:], self.lat.alpha[:], self.lat.q[:] = snap


def dns_solve(lattice: DnsLattice, dirichlet, schedule: LoadSchedule,
              mat: MaterialParams, opts: SolverOptions = SolverOptions(),
              probes=None):
    """Incremental Newton solution of the full lattice.

    Same stepping, convergence and state-commit semantics as the macroscale
    solver.  Returns (u_final, history rows); each row carries per-set
    reaction sums and probe displacements.
    """
    problem = _DnsProblem(lattice, dirichlet, mat)
    probes = probes or {}

    def observer(t, factor, u, R, rec):
        reactions = {}
        for ds in problem.dirichlet:
            reactions[ds.name] = float(np.sum(R[ds.dofs()]))
        return {
            "time": t,
            "factor": factor,
            "reactions": reactions,
            "probes": {name: float(u[2 * nid + comp]) for name, (nid, comp) in probes.items()},
            "iterations": rec.iterations,
            "residuals": list(rec.residuals),
            "substeps": rec.substeps,
        }

    return stepping.solve_schedule(problem, schedule, opts, observer)


def yield_map(lattice: DnsLattice, alpha: np.ndarray = None) -> np.ndarray:
    """Per-strut flags marking struts that have accumulated plastic flow."""
    a = lattice.alpha if alpha is None else np.asarray(alpha)
    return a > 0.0
