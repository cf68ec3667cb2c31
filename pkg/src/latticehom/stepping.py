"""Displacement-controlled incremental Newton driver.

Shared by the macroscale FE solver and the DNS lattice solver: both expose a
problem adapter with free/prescribed dof partitions, an assemble(u) callback
returning (internal forces, tangent, trial-state token), and commit/backup
hooks for the per-increment state promotion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and caps of the incremental solution procedure."""

    tol_rel: float = 1e-8         # residual norm relative to the first iteration
    abs_floor: float = 1e-10      # absolute residual floor [N]
    max_newton: int = 20
    max_bisections: int = 8       # adaptive increment halvings before hard failure
    micro_tol_rel: float = 1e-9   # unit-cell force tolerance relative to E*A
    micro_max_iter: int = 25


@dataclass
class IncrementRecord:
    time: float
    factor: float
    iterations: int
    residuals: list = field(default_factory=list)
    substeps: int = 1


def _factorize(Kff):
    """Sparse LU of the constrained tangent.

    The tangent is symmetric, so SuperLU's symmetric mode with the
    MMD_AT_PLUS_A ordering is used; it factors these mesh-like patterns
    several times faster than the default column ordering.
    """
    return splu(Kff, permc_spec="MMD_AT_PLUS_A",
                options=dict(SymmetricMode=True, DiagPivotThresh=0.001))


class NonConvergence(RuntimeError):
    """A single Newton attempt did not converge (substepping may retry)."""


class SolveError(RuntimeError):
    """An increment failed after exhausting adaptive substepping."""

    def __init__(self, message, time=None, factor=None):
        super().__init__(message)
        self.time = time
        self.factor = factor


_LINE_SEARCH_MAX = 25


def _newton(problem, u_start, factor, opts):
    """One damped-Newton attempt at a fixed load factor.

    The reference for the relative tolerance is the first-iteration residual;
    the external reference force is zero under displacement control.  A
    backtracking line search on the residual norm keeps the iteration from
    oscillating across elastic/plastic branch switches; smooth steps accept
    the full update and cost nothing extra.

    Returns (u, n_iterations, residual norms, trial token, R).
    """
    u = u_start.copy()
    u[problem.presc_dofs] = problem.presc_scale * factor
    free = problem.free
    R, K, token = problem.assemble(u)
    r = R[free]
    nrm = float(np.linalg.norm(r))
    residuals = [nrm]
    tol_eff = max(opts.tol_rel * nrm, opts.abs_floor)
    solves = 0
    while nrm > tol_eff:
        if solves >= opts.max_newton or free.size == 0:
            raise NonConvergence(f"no convergence in {solves} iterations, residual {nrm:g}")
        du = _factorize(K[free][:, free].tocsc()).solve(-r)
        solves += 1
        accepted = False
        a = 1.0
        for _ in range(_LINE_SEARCH_MAX):
            u_try = u.copy()
            u_try[free] += a * du
            R2, K2, token2 = problem.assemble(u_try)
            n2 = float(np.linalg.norm(R2[free]))
            if n2 <= tol_eff or n2 < nrm * (1.0 - 1e-4 * a):
                u, R, K, token = u_try, R2, K2, token2
                r = R[free]
                nrm = n2
                residuals.append(nrm)
                accepted = True
                break
            a *= 0.5
        if not accepted:
            raise NonConvergence(f"line search stalled at residual {nrm:g}")
    return u, solves + 1, residuals, token, R


def run_increment(problem, u_prev, factor_prev, factor_target, time_target, opts):
    """Advance to a target load factor, halving the increment on failure.

    Committed state is promoted sub-increment by sub-increment; if the whole
    increment ultimately fails, state and displacements are rolled back so
    that no committed history has changed.
    """
    snapshot = problem.backup()

    def attempt(u0, fa, fb, depth):
        try:
            u, iters, residuals, token, R = _newton(problem, u0, fb, opts)
        except NonConvergence:
            if depth >= opts.max_bisections:
                raise
            fm = 0.5 * (fa + fb)
            u1, n1, _ = attempt(u0, fa, fm, depth + 1)
            u2, n2, R = attempt(u1, fm, fb, depth + 1)
            return u2, n1 + n2, R
        problem.commit(token)
        attempt.iterations += iters
        attempt.residuals.extend(residuals)
        return u, 1, R

    attempt.iterations = 0
    attempt.residuals = []
    try:
        u_new, substeps, R = attempt(u_prev, factor_prev, factor_target, 0)
    except NonConvergence as exc:
        problem.restore(snapshot)
        raise SolveError(
            f"increment to factor {factor_target:g} (t={time_target:g}) failed "
            f"after {opts.max_bisections} bisections: {exc}",
            time=time_target, factor=factor_target) from exc
    rec = IncrementRecord(time_target, factor_target, attempt.iterations,
                          attempt.residuals, substeps)
    return u_new, R, rec


def solve_schedule(problem, schedule, opts, observer=None):
    """Run a full load schedule from the virgin state.

    The first observed row is the initialization pass: every constitutive
    point is evaluated at zero deformation, which builds the initial elastic
    tangent.  ``observer(time, factor, u, R, record)`` is called after the
    initialization and after each converged increment.
    """
    u = np.zeros(problem.n_dof)
    t0, f0 = schedule.breakpoints[0]
    R, _, token = problem.assemble(u)
    problem.commit(token)
    rows = []
    if observer is not None:
        rows.append(observer(t0, f0, u, R, IncrementRecord(t0, f0, 0)))
    f_prev = f0
    for t, f in schedule.steps():
        u, R, rec = run_increment(problem, u, f_prev, f, t, opts)
        if observer is not None:
            rows.append(observer(t, f, u, R, rec))
        f_prev = f
    return u, rows
