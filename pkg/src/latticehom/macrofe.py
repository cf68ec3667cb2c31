"""Macroscale 2D FE solver on four-node bilinear quadrilaterals.

Full 2x2 Gauss integration; the constitutive response at every integration
point is delegated to a periodic unit-cell solve, which returns the
volume-averaged stress and the consistent macroscopic tangent.  Loading is
displacement-controlled and incremental with adaptive substepping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels, stepping, unitcell
from .material import ConstitutiveError, MaterialParams, PlasticState
from .stepping import SolverOptions
from .unitcell import MicroDivergenceError, UnitCellTopology, arrays_to_states

_G = 1.0 / np.sqrt(3.0)
#: 2x2 Gauss points of the reference square, weight 1 each.
GAUSS_POINTS = ((-_G, -_G), (_G, -_G), (_G, _G), (-_G, _G))


def shape_functions(xi: float, eta: float):
    """Bilinear shape functions and their reference derivatives.

    Node order (-1,-1), (1,-1), (1,1), (-1,1).  Returns (N (4,), dN (4,2)).
    """
    N = 0.25 * np.array([(1 - xi) * (1 - eta),
                         (1 + xi) * (1 - eta),
                         (1 + xi) * (1 + eta),
                         (1 - xi) * (1 + eta)])
    dN = 0.25 * np.array([[-(1 - eta), -(1 - xi)],
                          [(1 - eta), -(1 + xi)],
                          [(1 + eta), (1 + xi)],
                          [-(1 + eta), (1 - xi)]])
    return N, dN


@dataclass(frozen=True)
class LoadSchedule:
    """Piecewise-linear load-factor history over pseudo-time.

    ``breakpoints`` is an ordered list of (pseudo-time, factor) pairs with
    strictly increasing times; each segment is cut into
    ``increments_per_segment`` equal increments.
    """

    breakpoints: tuple
    increments_per_segment: int = 20

    def __post_init__(self):
        bp = tuple((float(t), float(f)) for t, f in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if len(bp) < 2:
            raise ValueError("schedule needs at least two breakpoints")
        times = [t for t, _ in bp]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError(f"pseudo-times must be strictly increasing: {times}")
        if self.increments_per_segment < 1:
            raise ValueError("increments_per_segment must be >= 1")

    def steps(self):
        """Yield (pseudo-time, factor) at every increment boundary after t0."""
        n = self.increments_per_segment
        for (t0, f0), (t1, f1) in zip(self.breakpoints, self.breakpoints[1:]):
            for k in range(1, n + 1):
                s = k / n
                yield t0 + s * (t1 - t0), f0 + s * (f1 - f0)

    def factor_at(self, t: float) -> float:
        bp = self.breakpoints
        if t <= bp[0][0]:
            return bp[0][1]
        for (t0, f0), (t1, f1) in zip(bp, bp[1:]):
            if t <= t1:
                return f0 + (t - t0) / (t1 - t0) * (f1 - f0)
        return bp[-1][1]


@dataclass
class DirichletSet:
    """Nodes constrained in one component; prescribed value = scale * factor."""

    name: str
    nodes: np.ndarray
    comp: int
    scale: float

    def dofs(self):
        return 2 * np.asarray(self.nodes, dtype=np.int64) + self.comp


@dataclass
class MicroPoint:
    """Per-integration-point micro state snapshot."""

    committed: tuple[PlasticState, ...]
    trial: tuple[PlasticState, ...] | None
    sigma_bar: np.ndarray | None
    C_bar: np.ndarray | None


class MicroPointField:
    """Column-oriented storage of all integration points' micro state.

    Trial state lives beside the committed one and is either promoted
    atomically when an increment converges or discarded.
    """

    def __init__(self, n_el, n_gp, n_strut):
        shape = (n_el, n_gp, n_strut)
        self.eps_pl = np.zeros(shape)
        self.alpha = np.zeros(shape)
        self.q = np.zeros(shape)
        self.sigma_bar = np.zeros((n_el, n_gp, 3))
        self.C_bar = np.zeros((n_el, n_gp, 3, 3))
        self.shape = shape

    def commit_from(self, batch):
        self.eps_pl[:] = batch.eps_pl
        self.alpha[:] = batch.alpha
        self.q[:] = batch.q
        self.sigma_bar[:] = batch.sigma_bar
        self.C_bar[:] = batch.C_bar

    def backup(self):
        return (self.eps_pl.copy(), self.alpha.copy(), self.q.copy(),
                self.sigma_bar.copy(), self.C_bar.copy())

    def restore(self, snap):
        self.eps_pl[:], self.alpha[:], self.q[:], self.sigma_bar[:], self.C_bar[:] = snap

    def point(self, e, g, trial_batch=None) -> MicroPoint:
        committed = arrays_to_states(self.eps_pl[e, g], self.alpha[e, g], self.q[e, g])
        trial = None
        if trial_batch is not None:
            trial = arrays_to_states(trial_batch.eps_pl[e, g], trial_batch.alpha[e, g],
                                     trial_batch.q[e, g])
        return MicroPoint(committed, trial, self.sigma_bar[e, g].copy(),
                          self.C_bar[e, g].copy())


@dataclass
class GpBatch:
    """Raw per-integration-point results of one global assembly."""

    eps_hat: np.ndarray      # (ne, 4, 3)
    sigma_bar: np.ndarray    # (ne, 4, 3)
    C_bar: np.ndarray        # (ne, 4, 3, 3)
    eps_pl: np.ndarray       # trial states (ne, 4, ns)
    alpha: np.ndarray
    q: np.ndarray
    yielded: np.ndarray
    iterations: np.ndarray
    status: np.ndarray


class MacroModel:
    """Q4 mesh with boundary conditions and per-integration-point micro state."""

    def __init__(self, nodes, elements, thickness, cell: UnitCellTopology,
                 material: MaterialParams, dirichlet):
        self.nodes = np.asarray(nodes, dtype=float)
        self.elements = np.asarray(elements, dtype=np.int64)
        self.thickness = float(thickness)
        self.cell = cell
        self.material = material
        self.dirichlet = list(dirichlet)
        self.n_dof = 2 * len(self.nodes)

        self._precompute_integration()
        self._build_dof_partition()
        self.field = MicroPointField(len(self.elements), 4, cell.n_struts)

    def _precompute_integration(self):
        ne = len(self.elements)
        coords = self.nodes[self.elements]            # (ne, 4, 2)
        self.B = np.zeros((ne, 4, 3, 8))
        self.wdetj = np.zeros((ne, 4))
        for g, (xi, eta) in enumerate(GAUSS_POINTS):
            _, dN = shape_functions(xi, eta)
            J = np.einsum('ka,ekb->eab', dN, coords)  # J_ab = dx_b/dxi_a
            detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            if np.any(detJ <= 0.0):
                bad = int(np.argmax(detJ <= 0.0))
                raise ValueError(f"non-positive Jacobian in element {bad} at Gauss point {g}")
            Jinv = np.empty_like(J)
            Jinv[:, 0, 0] = J[:, 1, 1] / detJ
            Jinv[:, 1, 1] = J[:, 0, 0] / detJ
            Jinv[:, 0, 1] = -J[:, 0, 1] / detJ
            Jinv[:, 1, 0] = -J[:, 1, 0] / detJ
            # dN_k/dx_b = dN_k/dxi_a * dxi_a/dx_b with dxi/dx = J^-T
            dNdx = np.einsum('ka,eba->ekb', dN, Jinv)
            self.B[:, g, 0, 0::2] = dNdx[:, :, 0]
            self.B[:, g, 1, 1::2] = dNdx[:, :, 1]
            self.B[:, g, 2, 0::2] = dNdx[:, :, 1]
            self.B[:, g, 2, 1::2] = dNdx[:, :, 0]
            self.wdetj[:, g] = detJ * self.thickness
        dofs = np.empty((ne, 8), dtype=np.int64)
        dofs[:, 0::2] = 2 * self.elements
        dofs[:, 1::2] = 2 * self.elements + 1
        self.eldofs = dofs
        self._krows = np.repeat(dofs, 8, axis=1).ravel()
        self._kcols = np.tile(dofs, (1, 8)).ravel()

    def _build_dof_partition(self):
        seen = {}
        for ds in self.dirichlet:
            for n in np.asarray(ds.nodes).ravel():
                key = (int(n), ds.comp)
                if key in seen:
                    raise ValueError(
                        f"dirichlet sets '{seen[key]}' and '{ds.name}' both constrain "
                        f"node {n} component {ds.comp}")
                seen[key] = ds.name
        presc = []
        scale = []
        for ds in self.dirichlet:
            presc.append(ds.dofs())
            scale.append(np.broadcast_to(np.asarray(ds.scale, dtype=float),
                                         (len(ds.nodes),)).copy())
        self.presc_dofs = (np.concatenate(presc) if presc
                           else np.empty(0, dtype=np.int64))
        self.presc_scale = (np.concatenate(scale) if scale else np.empty(0))
        mask = np.ones(self.n_dof, dtype=bool)
        mask[self.presc_dofs] = False
        self.free = np.nonzero(mask)[0]

    def dirichlet_set(self, name) -> DirichletSet:
        for ds in self.dirichlet:
            if ds.name == name:
                return ds
        raise KeyError(name)

    def nearest_node(self, point) -> int:
        d2 = np.sum((self.nodes - np.asarray(point)) ** 2, axis=1)
        return int(np.argmin(d2))


def element_strain(model: MacroModel, element: int, u: np.ndarray, gp: int) -> np.ndarray:
    """Voigt strain (eps_xx, eps_yy, gamma_xy) at one Gauss point."""
    return model.B[element, gp] @ u[model.eldofs[element]]


def assemble_global(model: MacroModel, u: np.ndarray,
                    opts: SolverOptions = SolverOptions()):
    """Internal force vector and tangent stiffness for a displacement state.

    Every integration point runs a unit-cell solve against the committed
    micro state; the committed state itself is untouched.

    Returns (R_int, K (csr), GpBatch).
    """
    ne = len(model.elements)
    eps_hat = np.einsum('egij,ej->egi', model.B, u[model.eldofs])
    cell = model.cell
    fld = model.field
    ngp = ne * 4
    out = unitcell.solve_points(
        cell, model.material,
        eps_hat.reshape(ngp, 3),
        fld.eps_pl.reshape(ngp, -1), fld.alpha.reshape(ngp, -1), fld.q.reshape(ngp, -1),
        tol=opts.micro_tol_rel * model.material.E * cell.A,
        max_iter=opts.micro_max_iter)
    sb, C, _, _, _, ep2, al2, q2, yld, niter, status = out
    if np.any(status != kernels.STATUS_OK):
        bad = int(np.argmax(status != kernels.STATUS_OK))
        e, g = divmod(bad, 4)
        if status[bad] == kernels.STATUS_CONSTITUTIVE:
            raise ConstitutiveError(eps_hat[e, g], fld.point(e, g).committed,
                                    f"constitutive failure at element {e}, gauss point {g}")
        raise MicroDivergenceError(eps_hat[e, g], [],
                                   f"micro divergence at element {e}, gauss point {g}")

    ns = cell.n_struts
    batch = GpBatch(
        eps_hat=eps_hat,
        sigma_bar=sb.reshape(ne, 4, 3),
        C_bar=C.reshape(ne, 4, 3, 3),
        eps_pl=ep2.reshape(ne, 4, ns),
        alpha=al2.reshape(ne, 4, ns),
        q=q2.reshape(ne, 4, ns),
        yielded=yld.reshape(ne, 4, ns),
        iterations=niter.reshape(ne, 4),
        status=status.reshape(ne, 4),
    )

    w = model.wdetj
    r_el = np.einsum('egij,egi,eg->ej', model.B, batch.sigma_bar, w)
    R = np.zeros(model.n_dof)
    np.add.at(R, model.eldofs.ravel(), r_el.ravel())
    k_el = np.einsum('egai,egab,egbj,eg->eij', model.B, batch.C_bar, model.B, w)
    K = sp.coo_matrix((k_el.ravel(), (model._krows, model._kcols)),
                      shape=(model.n_dof, model.n_dof)).tocsr()
    return R, K, batch


def reaction_sum(model: MacroModel, r_int: np.ndarray, nodes, comp: int) -> float:
    """Sum of internal forces over a constrained node set in one component."""
    dofs = 2 * np.asarray(nodes, dtype=np.int64) + comp
    return float(np.sum(r_int[dofs]))


class _MacroProblem:
    """Adapter wiring MacroModel into the incremental Newton driver."""

    def __init__(self, model: MacroModel, opts: SolverOptions):
        self.model = model
        self.opts = opts
        self.n_dof = model.n_dof
        self.free = model.free
        self.presc_dofs = model.presc_dofs
        self.presc_scale = model.presc_scale

    def assemble(self, u):
        return assemble_global(self.model, u, self.opts)

    def commit(self, batch):
        self.model.field.commit_from(batch)

    def backup(self):
        return self.model.field.backup()

    def restore(self, snap):
        self.model.field.restore(snap)


def solve_increment(model: MacroModel, u_prev: np.ndarray, factor_prev: float,
                    factor_target: float, opts: SolverOptions = SolverOptions()):
    """Advance the model by one load increment (with adaptive substepping).

    On success the trial micro states of the converged iteration are
    committed; on final failure the committed state is untouched.
    Returns (u_new, R_int, IncrementRecord).
    """
    problem = _MacroProblem(model, opts)
    return stepping.run_increment(problem, u_prev, factor_prev, factor_target,
                                  factor_target, opts)


def solve_macro(model: MacroModel, schedule, opts: SolverOptions = SolverOptions(),
                probes=None):
    """Run a load schedule and record reactions and probe displacements.

    ``probes`` maps a name to (node id, component).  Each history row carries
    the load factor, per-dirichlet-set reaction sums, probe values and the
    Newton iteration log of the increment.
    """
    problem = _MacroProblem(model, opts)
    probes = probes or {}

    def observer(t, factor, u, R, rec):
        reactions = {ds.name: reaction_sum(model, R, ds.nodes, ds.comp)
                     for ds in model.dirichlet}
        return {
            "time": t,
            "factor": factor,
            "reactions": reactions,
            "probes": {name: float(u[2 * nid + comp]) for name, (nid, comp) in probes.items()},
            "iterations": rec.iterations,
            "residuals": list(rec.residuals),
            "substeps": rec.substeps,
        }

    u, rows = stepping.solve_schedule(problem, schedule, opts, observer)
    return u, rows
