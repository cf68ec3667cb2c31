"""Periodic truss unit cells.

Builds the triangular, X-braced and XP-braced cell topologies, solves the
periodic microscale equilibrium for a prescribed macroscopic strain, and
returns the homogenized stress together with the consistent macroscopic
tangent.

Conventions: Voigt strain (eps_xx, eps_yy, gamma_xy) with gamma = 2 eps_xy;
Voigt stress (sig_xx, sig_yy, sig_xy).  The strain-to-displacement map uses
half-gamma shear entries for all three cells.  Node numbering follows the
cell sketches (0-based in code).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .material import (RM_TOL_REL, ConstitutiveError, MaterialParams,
                       PlasticState, return_map)

#: Relative singular-value cutoff of the pseudo-inverse.
PINV_RTOL = 1e-10
#: Micro Newton force tolerance, relative to E*A.
MICRO_TOL_REL = 1e-9
MICRO_MAX_ITER = 25


class CellKind(str, Enum):
    TRIANGULAR = "triangular"
    X_BRACED = "x_braced"
    XP_BRACED = "xp_braced"


@dataclass(frozen=True)
class Strut:
    node_i: int
    node_j: int
    length: float
    angle: float


@dataclass(eq=False)
class UnitCellTopology:
    """Geometry and topology matrices of one periodic cell.

    Immutable after construction; shareable between concurrent solves.
    B0 maps independent displacements to all nodal displacements, Be maps the
    macroscopic Voigt strain; the equilibrium matrix is B0.T.
    """

    kind: CellKind
    L_uc: float
    A: float
    thickness: float
    nodes: np.ndarray           # (N, 2) reference positions
    independent: tuple[int, ...]
    struts: tuple[Strut, ...]
    B0: np.ndarray              # (n_tot, n_ind)
    Be: np.ndarray              # (n_tot, 3)
    a1: np.ndarray
    a2: np.ndarray
    V_uc: float
    # flat per-strut arrays for the kernels
    node_i: np.ndarray = None
    node_j: np.ndarray = None
    cx: np.ndarray = None
    cy: np.ndarray = None
    lengths: np.ndarray = None
    areas: np.ndarray = None

    def __post_init__(self):
        ni = np.array([s.node_i for s in self.struts], dtype=np.int64)
        nj = np.array([s.node_j for s in self.struts], dtype=np.int64)
        dxy = self.nodes[nj] - self.nodes[ni]
        L = np.hypot(dxy[:, 0], dxy[:, 1])
        self.node_i = ni
        self.node_j = nj
        self.cx = dxy[:, 0] / L
        self.cy = dxy[:, 1] / L
        self.lengths = L
        self.areas = np.full(L.shape, self.A)

    @property
    def n_ind(self) -> int:
        return 2 * len(self.independent)

    @property
    def n_tot(self) -> int:
        return 2 * len(self.nodes)

    @property
    def n_struts(self) -> int:
        return len(self.struts)


@dataclass
class MicroResult:
    """Converged microscale state for one macroscopic strain."""

    d: np.ndarray               # full nodal displacements
    d0: np.ndarray              # independent displacements
    f: np.ndarray               # nodal forces
    sigma_bar: np.ndarray       # Voigt macroscopic stress
    C_bar: np.ndarray           # 3x3 macroscopic tangent
    strut_states: tuple[PlasticState, ...]   # trial states, committed by the caller
    strut_strains: np.ndarray
    yielded: np.ndarray
    iterations: int


class MicroDivergenceError(RuntimeError):
    """Micro Newton iteration did not reach the force tolerance."""

    def __init__(self, eps_hat, residuals, message="unit-cell equilibrium did not converge"):
        super().__init__(f"{message}: eps_hat={np.asarray(eps_hat)!r}, residuals={residuals!r}")
        self.eps_hat = np.asarray(eps_hat)
        self.residuals = residuals


def _strain_block(a: np.ndarray) -> np.ndarray:
    """Displacement of a node translated by periodic vector a under a unit
    Voigt strain; shear enters with the 1/2 factor of the symmetric tensor."""
    return np.array([
        [a[0], 0.0, 0.5 * a[1]],
        [0.0, a[1], 0.5 * a[0]],
    ])


# Dependent-node tables: dep -> (parent, m1, m2) such that
# r_dep = r_parent + m1*a1 + m2*a2.
_TRI_DEPS = {1: (0, 1, 0), 2: (0, 0, 1)}
_X_DEPS = {2: (1, 1, 0), 3: (1, 0, 1), 4: (1, 1, 1)}
_XP_DEPS = {4: (1, 1, 0), 5: (1, 0, 1), 6: (1, 1, 1), 7: (2, 1, 0), 8: (3, 0, 1)}


def make_unit_cell(kind, L_uc: float, A: float, thickness: float) -> UnitCellTopology:
    """Construct a periodic unit cell of side length L_uc.

    Struts are listed once per cell so that tiling the cell covers the
    lattice without duplicates; the top/right perimeter members of the square
    cells belong to the neighbouring cells.
    """
    if L_uc <= 0 or A <= 0 or thickness <= 0:
        raise ValueError("L_uc, A and thickness must be positive")
    kind = CellKind(kind)
    L = float(L_uc)

    if kind is CellKind.TRIANGULAR:
        a1 = np.array([L, 0.0])
        a2 = np.array([0.5 * L, L])
        nodes = np.array([[0.0, 0.0], [L, 0.0], [0.5 * L, L]])
        independent = (0,)
        deps = _TRI_DEPS
        pairs = [(0, 1), (0, 2), (1, 2)]
    elif kind is CellKind.X_BRACED:
        a1 = np.array([L, 0.0])
        a2 = np.array([0.0, L])
        nodes = np.array([
            [0.5 * L, 0.5 * L],   # 0: centre
            [0.0, 0.0],           # 1: corner
            [L, 0.0],             # 2
            [0.0, L],             # 3
            [L, L],               # 4
        ])
        independent = (0, 1)
        deps = _X_DEPS
        # bottom edge, left edge, four half-diagonals
        pairs = [(1, 2), (1, 3), (0, 1), (0, 2), (0, 3), (0, 4)]
    elif kind is CellKind.XP_BRACED:
        a1 = np.array([L, 0.0])
        a2 = np.array([0.0, L])
        nodes = np.array([
            [0.5 * L, 0.5 * L],   # 0: centre
            [0.0, 0.0],           # 1: corner
            [0.0, 0.5 * L],       # 2: mid-left
            [0.5 * L, 0.0],       # 3: mid-bottom
            [L, 0.0],             # 4
            [0.0, L],             # 5
            [L, L],               # 6
            [L, 0.5 * L],         # 7: mid-right
            [0.5 * L, L],         # 8: mid-top
        ])
        independent = (0, 1, 2, 3)
        deps = _XP_DEPS
        # half-diagonals, plus-arms, owned bottom/left half-edges
        pairs = [(0, 1), (0, 4), (0, 5), (0, 6),
                 (0, 2), (0, 7), (0, 3), (0, 8),
                 (1, 3), (3, 4), (1, 2), (2, 5)]
    else:  # pragma: no cover - CellKind() already rejects unknown values
        raise ValueError(f"unknown cell kind: {kind!r}")

    n_node = len(nodes)
    col = {ind: k for k, ind in enumerate(independent)}
    B0 = np.zeros((2 * n_node, 2 * len(independent)))
    Be = np.zeros((2 * n_node, 3))
    for n in range(n_node):
        if n in col:
            B0[2 * n:2 * n + 2, 2 * col[n]:2 * col[n] + 2] = np.eye(2)
        else:
            parent, m1, m2 = deps[n]
            B0[2 * n:2 * n + 2, 2 * col[parent]:2 * col[parent] + 2] = np.eye(2)
            Be[2 * n:2 * n + 2, :] = m1 * _strain_block(a1) + m2 * _strain_block(a2)

    struts = tuple(
        Strut(i, j,
              float(np.hypot(*(nodes[j] - nodes[i]))),
              float(math.atan2(nodes[j][1] - nodes[i][1], nodes[j][0] - nodes[i][0])))
        for i, j in pairs
    )
    V_uc = abs(a1[0] * a2[1] - a1[1] * a2[0]) * thickness
    return UnitCellTopology(kind, L, A, thickness, nodes, independent, struts,
                            B0, Be, a1, a2, V_uc)


def strut_strain(cell: UnitCellTopology, d: np.ndarray, e: int) -> float:
    """Axial strain of strut e: local end displacements from the 2x4
    transformation, divided by the reference length."""
    s = cell.struts[e]
    c, sn = cell.cx[e], cell.cy[e]
    u1 = c * d[2 * s.node_i] + sn * d[2 * s.node_i + 1]
    u2 = c * d[2 * s.node_j] + sn * d[2 * s.node_j + 1]
    return (u2 - u1) / s.length


def states_to_arrays(states) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    eps_pl = np.array([s.eps_pl for s in states])
    alpha = np.array([s.alpha for s in states])
    q = np.array([s.q for s in states])
    return eps_pl, alpha, q


def arrays_to_states(eps_pl, alpha, q) -> tuple[PlasticState, ...]:
    return tuple(PlasticState(float(e), float(a), float(b)) for e, a, b in zip(eps_pl, alpha, q))


def assemble(cell: UnitCellTopology, d: np.ndarray, committed, mat: MaterialParams):
    """Internal forces and tangent stiffness of the unconstrained cell.

    Returns (f, K_uc, trial_states, strut_strains).  Committed states are not
    modified; the per-strut stress update produces trial states.
    """
    eps_pl, alpha, q = states_to_arrays(committed)
    rm_tol = RM_TOL_REL * mat.sigma_y0
    eps = kernels.strut_strains(d, cell.node_i, cell.node_j, cell.cx, cell.cy, cell.lengths)
    sigma, D, ep2, al2, q2, yld, nf = kernels.return_map_batch(
        eps, eps_pl, alpha, q, mat.E, mat.H, mat.sigma_y0, mat.Q_inf, mat.b, rm_tol)
    if nf:
        # identify the offending strut with the scalar reference update
        for e in range(cell.n_struts):
            return_map(float(eps[e]), committed[e], mat)
        raise ConstitutiveError(eps, committed)
    f = kernels.internal_force(cell.n_tot, cell.node_i, cell.node_j,
                               cell.cx, cell.cy, cell.areas, sigma)
    vals = np.asarray(kernels.stiffness_values(cell.cx, cell.cy, cell.lengths, cell.areas, D))
    dofs = np.stack([2 * cell.node_i, 2 * cell.node_i + 1,
                     2 * cell.node_j, 2 * cell.node_j + 1], axis=1)
    K = np.zeros(cell.n_tot * cell.n_tot)
    flat = (dofs[:, :, None] * cell.n_tot + dofs[:, None, :]).reshape(-1, 16)
    np.add.at(K, flat.ravel(), vals.ravel())
    K = K.reshape(cell.n_tot, cell.n_tot)
    return f, K, arrays_to_states(ep2, al2, q2), eps


def pinv(M: np.ndarray, rel_tol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD; singular values below
    rel_tol * sigma_max are treated as structural zeros."""
    return kernels.pinv_cut_np(np.asarray(M, dtype=float), rel_tol, 0.0)


def micro_solve(cell: UnitCellTopology, committed, eps_hat, mat: MaterialParams,
                tol: float = None, max_iter: int = MICRO_MAX_ITER) -> MicroResult:
    """Solve the periodic unit-cell equilibrium for a macroscopic strain.

    Newton on the independent displacements: the residual is the group sum of
    nodal forces B0.T f, and each update solves the pseudo-inverted reduced
    system (the reduced matrix carries the rigid-translation nullspace).
    Committed states are never mutated; trial states travel in the result.
    """
    eps_hat = np.asarray(eps_hat, dtype=float)
    if not np.all(np.isfinite(eps_hat)):
        raise ValueError(f"non-finite macroscopic strain: {eps_hat!r}")
    if tol is None:
        tol = MICRO_TOL_REL * mat.E * cell.A

    def evaluate(d0_loc):
        d = cell.B0 @ d0_loc + cell.Be @ eps_hat
        f, K, trial, eps = assemble(cell, d, committed, mat)
        g = cell.B0.T @ f
        return d, f, K, trial, eps, g, float(np.linalg.norm(g))

    d0 = np.zeros(cell.n_ind)
    d, f, K, trial, eps, g, gnorm = evaluate(d0)
    residuals = [gnorm]
    iterations = 0
    while gnorm > tol and iterations < max_iter:
        Kred = cell.B0.T @ K @ cell.B0
        step = -kernels.pinv_cut_np(Kred, PINV_RTOL, float(np.max(np.diag(K)))) @ g
        # backtracking guards the update against oscillating across an
        # elastic/plastic branch switch
        accepted = False
        a = 1.0
        for _ in range(30):
            trial_point = evaluate(d0 + a * step)
            if trial_point[6] <= tol or trial_point[6] < gnorm * (1.0 - 1e-4 * a):
                d0 = d0 + a * step
                d, f, K, trial, eps, g, gnorm = trial_point
                accepted = True
                break
            a *= 0.5
        residuals.append(gnorm)
        if not accepted:
            break
        iterations += 1
    if gnorm > tol:
        raise MicroDivergenceError(eps_hat, residuals)
    S = sensitivity(cell, K)
    return MicroResult(
        d=d, d0=d0, f=f,
        sigma_bar=macro_stress(cell, f),
        C_bar=macro_tangent(cell, K, S),
        strut_states=trial,
        strut_strains=eps,
        yielded=np.array([t.alpha > c.alpha for t, c in zip(trial, committed)]),
        iterations=iterations,
    )


def macro_stress(cell: UnitCellTopology, f: np.ndarray) -> np.ndarray:
    """Volume-averaged Voigt stress from the converged nodal forces."""
    return cell.Be.T @ f / cell.V_uc


def sensitivity(cell: UnitCellTopology, K_uc: np.ndarray) -> np.ndarray:
    """Rate of change of the independent displacements with the macroscopic
    strain, through the pseudo-inverted reduced stiffness.

    The singular-value cutoff is anchored to the unconstrained stiffness
    scale: a reduced matrix of pure structural zeros (triangular cell, whose
    only independent node is a rigid-translation gauge) yields an exactly
    zero sensitivity rather than amplified roundoff."""
    Kred = cell.B0.T @ K_uc @ cell.B0
    floor = float(np.max(np.abs(np.diag(K_uc)))) if K_uc.size else 0.0
    return -kernels.pinv_cut_np(Kred, PINV_RTOL, floor) @ (cell.B0.T @ K_uc @ cell.Be)


def macro_tangent(cell: UnitCellTopology, K_uc: np.ndarray, dd0_deps: np.ndarray) -> np.ndarray:
    """Consistent 3x3 macroscopic tangent (congruence of K_uc with the total
    strain-to-displacement map, hence symmetric)."""
    M = cell.B0 @ dd0_deps + cell.Be
    return M.T @ K_uc @ M / cell.V_uc


def solve_points(cell: UnitCellTopology, mat: MaterialParams, eps_hat: np.ndarray,
                 eps_pl: np.ndarray, alpha: np.ndarray, q: np.ndarray,
                 tol: float = None, max_iter: int = MICRO_MAX_ITER):
    """Batched unit-cell solves over many integration points (hot path).

    eps_hat is (n, 3); the state arrays are (n, n_struts).  Returns the raw
    kernel outputs; callers map the status column to exceptions.
    """
    if tol is None:
        tol = MICRO_TOL_REL * mat.E * cell.A
    return kernels.micro_solve_batch(
        cell.node_i, cell.node_j, cell.cx, cell.cy, cell.lengths, cell.areas,
        cell.B0, cell.Be, cell.V_uc,
        np.ascontiguousarray(eps_hat, dtype=float),
        np.ascontiguousarray(eps_pl, dtype=float),
        np.ascontiguousarray(alpha, dtype=float),
        np.ascontiguousarray(q, dtype=float),
        mat.E, mat.H, mat.sigma_y0, mat.Q_inf, mat.b, RM_TOL_REL * mat.sigma_y0,
        tol, max_iter, PINV_RTOL)
