"""Hot numerical kernels: batched return mapping, truss assembly and
per-integration-point unit-cell solves.

Every kernel exists in two builds: a numba ``@njit`` one (used whenever numba
imports) and a vectorized pure-numpy one.  The environment variable
``LATTICEHOM_NUMBA`` selects the backend before import:

    LATTICEHOM_NUMBA=0      force the numpy fallback
    LATTICEHOM_NUMBA=1      require numba (ImportError if missing)
    unset / auto            numba when available

``BACKEND`` reports the active choice.  Both builds implement the same
arithmetic; the test suite cross-validates them.  ``benchmarks/bench_kernels.py``
times one against the other.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("LATTICEHOM_NUMBA", "auto").strip().lower()
if _env in ("0", "false", "off", "no"):
    _want_numba = False
elif _env in ("1", "true", "on", "yes", "require"):
    _want_numba = True
else:
    _want_numba = None  # auto

NUMBA_ENABLED = False
if _want_numba is not False:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        if _want_numba is True:
            raise

BACKEND = "numba" if NUMBA_ENABLED else "numpy"

# Status codes shared by the unit-cell solve kernels.
STATUS_OK = 1
STATUS_NO_CONVERGENCE = 0
STATUS_CONSTITUTIVE = 2


def set_workers(n: int):
    """Set the numba thread count; ignored on the numpy backend."""
    if NUMBA_ENABLED and n >= 1:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# numpy builds
# ---------------------------------------------------------------------------


def pinv_cut_np(M, rel_tol, floor=0.0):
    """Moore-Penrose pseudo-inverse by SVD with a relative singular-value cutoff.

    ``floor`` anchors the cutoff to an external stiffness scale so that a
    reduced matrix consisting entirely of structural zeros (plus roundoff)
    inverts to zero instead of amplifying noise.
    """
    U, s, Vt = np.linalg.svd(M)
    if s.size == 0:
        return M.T.copy()
    cut = rel_tol * max(s[0], floor)
    inv = np.where(s > cut, 1.0 / np.where(s > cut, s, 1.0), 0.0)
    return (Vt.T * inv) @ U.T


def return_map_batch_np(eps, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol):
    """Vectorized backward-Euler stress update over a batch of struts.

    Returns (sigma, D, eps_pl_new, alpha_new, q_new, yielded, n_failed).
    """
    sig_tr = E * (eps - eps_pl)
    xi = sig_tr - q
    xa = np.abs(xi)
    phi = xa - (sy0 + Qinf * (1.0 - np.exp(-b * alpha)))
    plastic = phi > 0.0

    sigma = sig_tr.copy()
    D = np.full_like(eps, E)
    ep_new = eps_pl.copy()
    al_new = alpha.copy()
    q_new = q.copy()
    n_failed = 0
    if np.any(plastic):
        idx = np.nonzero(plastic)[0]
        xap = xa[idx]
        an = alpha[idx]
        EH = E + H
        lo = np.zeros(idx.size)
        hi = xap / EH
        dl = np.zeros(idx.size)
        done = np.zeros(idx.size, dtype=bool)
        for _ in range(50):
            r = xap - EH * dl - (sy0 + Qinf * (1.0 - np.exp(-b * (an + dl))))
            done |= np.abs(r) <= rm_tol
            active = ~done
            if not active.any():
                break
            pos = r > 0.0
            lo = np.where(active & pos, dl, lo)
            hi = np.where(active & ~pos, dl, hi)
            drd = -EH - Qinf * b * np.exp(-b * (an + dl))
            step = dl - r / drd
            inside = (step > lo) & (step < hi)
            dl = np.where(active, np.where(inside, step, 0.5 * (lo + hi)), dl)
        n_failed = int(np.count_nonzero(~done))
        sign = np.where(xi[idx] >= 0.0, 1.0, -1.0)
        al2 = an + dl
        hard = H + Qinf * b * np.exp(-b * al2)
        sigma[idx] = sig_tr[idx] - E * dl * sign
        D[idx] = E * hard / (E + hard)
        ep_new[idx] = eps_pl[idx] + dl * sign
        al_new[idx] = al2
        q_new[idx] = q[idx] + H * dl * sign
    return sigma, D, ep_new, al_new, q_new, plastic, n_failed


def strut_strains_np(u, node_i, node_j, cx, cy, length):
    """Axial strains of all struts from the flat displacement array."""
    i2 = 2 * node_i
    j2 = 2 * node_j
    return (cx * (u[j2] - u[i2]) + cy * (u[j2 + 1] - u[i2 + 1])) / length


def internal_force_np(n_dof, node_i, node_j, cx, cy, area, sigma):
    """Scatter axial strut forces into the global internal force vector."""
    f = np.zeros(n_dof)
    N = sigma * area
    np.add.at(f, 2 * node_i, -N * cx)
    np.add.at(f, 2 * node_i + 1, -N * cy)
    np.add.at(f, 2 * node_j, N * cx)
    np.add.at(f, 2 * node_j + 1, N * cy)
    return f


def stiffness_values_np(cx, cy, length, area, D):
    """Per-strut 4x4 stiffness blocks (flattened row-major to 16 values).

    Dof order per strut: (2i, 2i+1, 2j, 2j+1).
    """
    k = area * D / length
    v = np.stack([-cx, -cy, cx, cy], axis=1)  # (ns, 4)
    return (k[:, None, None] * v[:, :, None] * v[:, None, :]).reshape(-1, 16)


def truss_system_np(u, node_i, node_j, cx, cy, length, area,
                    eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol):
    """Fused assembly pass over a truss: strains, stress update, internal
    force and stiffness values.

    Returns (eps, sigma, D, eps_pl_new, alpha_new, q_new, yielded, f, k_values, n_failed).
    """
    eps = strut_strains_np(u, node_i, node_j, cx, cy, length)
    sigma, D, ep2, al2, q2, yld, nf = return_map_batch_np(
        eps, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol)
    f = internal_force_np(u.size, node_i, node_j, cx, cy, area, sigma)
    vals = stiffness_values_np(cx, cy, length, area, D)
    return eps, sigma, D, ep2, al2, q2, yld, f, vals, nf


LINE_SEARCH_MAX = 30


def _cell_solve_np(node_i, node_j, cx, cy, length, area, B0, Be, v_uc,
                   eps_hat, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol,
                   tol_force, max_iter, pinv_rtol, kflat):
    """Single periodic unit-cell solve, vectorized over struts.

    Damped Newton: the update direction solves the pseudo-inverted reduced
    system; a backtracking line search on the residual norm guards against
    the step oscillating across an elastic/plastic branch switch.
    """
    n_tot, n_ind = B0.shape

    def evaluate(d0_loc):
        d = B0 @ d0_loc + Be @ eps_hat
        eps_e = strut_strains_np(d, node_i, node_j, cx, cy, length)
        sigma, D, ep2, al2, q2, yld, nf = return_map_batch_np(
            eps_e, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol)
        f = internal_force_np(n_tot, node_i, node_j, cx, cy, area, sigma)
        vals = stiffness_values_np(cx, cy, length, area, D)
        K = np.zeros(n_tot * n_tot)
        np.add.at(K, kflat.ravel(), vals.ravel())
        return (f, K.reshape(n_tot, n_tot), eps_e, ep2, al2, q2, yld, nf)

    d0 = np.zeros(n_ind)
    f, K, eps_e, ep2, al2, q2, yld, nf = evaluate(d0)
    status = STATUS_CONSTITUTIVE if nf else STATUS_NO_CONVERGENCE
    niter = 0
    g = B0.T @ f
    gnorm = float(np.sqrt(g @ g))
    while not nf:
        if gnorm <= tol_force:
            status = STATUS_OK
            break
        if niter >= max_iter:
            break
        Kred = B0.T @ K @ B0
        floor = float(np.max(np.diag(K)))
        step = -(pinv_cut_np(Kred, pinv_rtol, floor) @ g)
        accepted = False
        a = 1.0
        for _ in range(LINE_SEARCH_MAX):
            d0_try = d0 + a * step
            f, K, eps_e, ep2, al2, q2, yld, nf = evaluate(d0_try)
            if nf:
                status = STATUS_CONSTITUTIVE
                break
            g_try = B0.T @ f
            gn = float(np.sqrt(g_try @ g_try))
            if gn <= tol_force or gn < gnorm * (1.0 - 1e-4 * a):
                d0, g, gnorm = d0_try, g_try, gn
                accepted = True
                break
            a *= 0.5
        if nf or not accepted:
            break
        niter += 1

    sb = np.zeros(3)
    C = np.zeros((3, 3))
    if status == STATUS_OK:
        floor = float(np.max(np.diag(K)))
        P = pinv_cut_np(B0.T @ K @ B0, pinv_rtol, floor)
        S = -(P @ (B0.T @ K @ Be))
        M = B0 @ S + Be
        C = (M.T @ K @ M) / v_uc
        sb = (Be.T @ f) / v_uc
    return sb, C, d0, f, eps_e, ep2, al2, q2, yld, niter, status


def micro_solve_batch_np(node_i, node_j, cx, cy, length, area, B0, Be, v_uc,
                         eps_hat, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol,
                         tol_force, max_iter, pinv_rtol):
    """Unit-cell solves for a batch of integration points (numpy loop)."""
    ngp = eps_hat.shape[0]
    ns = node_i.shape[0]
    n_tot, n_ind = B0.shape
    dofs = np.stack([2 * node_i, 2 * node_i + 1, 2 * node_j, 2 * node_j + 1], axis=1)
    kflat = dofs[:, :, None] * n_tot + dofs[:, None, :]

    sb = np.zeros((ngp, 3))
    C = np.zeros((ngp, 3, 3))
    d0 = np.zeros((ngp, n_ind))
    f = np.zeros((ngp, n_tot))
    eps_e = np.zeros((ngp, ns))
    ep2 = np.zeros((ngp, ns))
    al2 = np.zeros((ngp, ns))
    q2 = np.zeros((ngp, ns))
    yld = np.zeros((ngp, ns), dtype=bool)
    niter = np.zeros(ngp, dtype=np.int64)
    status = np.zeros(ngp, dtype=np.int64)
    for g in range(ngp):
        out = _cell_solve_np(node_i, node_j, cx, cy, length, area, B0, Be, v_uc,
                             eps_hat[g], eps_pl[g], alpha[g], q[g],
                             E, H, sy0, Qinf, b, rm_tol,
                             tol_force, max_iter, pinv_rtol, kflat)
        sb[g], C[g], d0[g], f[g] = out[0], out[1], out[2], out[3]
        eps_e[g], ep2[g], al2[g], q2[g], yld[g] = out[4], out[5], out[6], out[7], out[8]
        niter[g], status[g] = out[9], out[10]
    return sb, C, d0, f, eps_e, ep2, al2, q2, yld, niter, status


# ---------------------------------------------------------------------------
# numba builds
# ---------------------------------------------------------------------------


def _build_numba_kernels():
    from numba import njit, prange

    @njit(cache=True)
    def pinv_cut(M, rel_tol, floor):
        U, s, Vt = np.linalg.svd(M)
        n = s.shape[0]
        if n == 0:
            return M.T.copy()
        cut = rel_tol * max(s[0], floor)
        inv = np.zeros(n)
        for k in range(n):
            if s[k] > cut:
                inv[k] = 1.0 / s[k]
        return (Vt.T * inv) @ U.T

    @njit(cache=True)
    def rm_scalar(eps, ep_n, al_n, q_n, E, H, sy0, Qinf, b, rm_tol):
        sig_tr = E * (eps - ep_n)
        xi = sig_tr - q_n
        xa = abs(xi)
        if xa - (sy0 + Qinf * (1.0 - np.exp(-b * al_n))) <= 0.0:
            return sig_tr, E, ep_n, al_n, q_n, False, True
        sign = 1.0 if xi >= 0.0 else -1.0
        EH = E + H
        lo = 0.0
        hi = xa / EH
        dl = 0.0
        okf = False
        for _ in range(50):
            r = xa - EH * dl - (sy0 + Qinf * (1.0 - np.exp(-b * (al_n + dl))))
            if abs(r) <= rm_tol:
                okf = True
                break
            if r > 0.0:
                lo = dl
            else:
                hi = dl
            drd = -EH - Qinf * b * np.exp(-b * (al_n + dl))
            step = dl - r / drd
            if lo < step < hi:
                dl = step
            else:
                dl = 0.5 * (lo + hi)
        al2 = al_n + dl
        hard = H + Qinf * b * np.exp(-b * al2)
        D = E * hard / (E + hard)
        return sig_tr - E * dl * sign, D, ep_n + dl * sign, al2, q_n + H * dl * sign, True, okf

    @njit(cache=True)
    def return_map_batch(eps, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol):
        n = eps.shape[0]
        sigma = np.empty(n)
        D = np.empty(n)
        ep2 = np.empty(n)
        al2 = np.empty(n)
        q2 = np.empty(n)
        yld = np.zeros(n, dtype=np.bool_)
        n_failed = 0
        for e in range(n):
            s, Dt, ep, al, qq, y, ok = rm_scalar(
                eps[e], eps_pl[e], alpha[e], q[e], E, H, sy0, Qinf, b, rm_tol)
            sigma[e] = s
            D[e] = Dt
            ep2[e] = ep
            al2[e] = al
            q2[e] = qq
            yld[e] = y
            if not ok:
                n_failed += 1
        return sigma, D, ep2, al2, q2, yld, n_failed

    @njit(cache=True)
    def strut_strains(u, node_i, node_j, cx, cy, length):
        n = node_i.shape[0]
        eps = np.empty(n)
        for e in range(n):
            i2 = 2 * node_i[e]
            j2 = 2 * node_j[e]
            eps[e] = (cx[e] * (u[j2] - u[i2]) + cy[e] * (u[j2 + 1] - u[i2 + 1])) / length[e]
        return eps

    @njit(cache=True)
    def internal_force(n_dof, node_i, node_j, cx, cy, area, sigma):
        f = np.zeros(n_dof)
        for e in range(node_i.shape[0]):
            N = sigma[e] * area[e]
            i2 = 2 * node_i[e]
            j2 = 2 * node_j[e]
            f[i2] -= N * cx[e]
            f[i2 + 1] -= N * cy[e]
            f[j2] += N * cx[e]
            f[j2 + 1] += N * cy[e]
        return f

    @njit(cache=True)
    def stiffness_values(cx, cy, length, area, D):
        n = cx.shape[0]
        vals = np.empty((n, 16))
        v = np.empty(4)
        for e in range(n):
            k = area[e] * D[e] / length[e]
            v[0] = -cx[e]
            v[1] = -cy[e]
            v[2] = cx[e]
            v[3] = cy[e]
            for a in range(4):
                for c in range(4):
                    vals[e, 4 * a + c] = k * v[a] * v[c]
        return vals

    @njit(cache=True)
    def truss_system(u, node_i, node_j, cx, cy, length, area,
                     eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol):
        ns = node_i.shape[0]
        eps = np.empty(ns)
        sigma = np.empty(ns)
        D = np.empty(ns)
        ep2 = np.empty(ns)
        al2 = np.empty(ns)
        q2 = np.empty(ns)
        yld = np.zeros(ns, dtype=np.bool_)
        f = np.zeros(u.size)
        vals = np.empty((ns, 16))
        n_failed = 0
        v = np.empty(4)
        for e in range(ns):
            i2 = 2 * node_i[e]
            j2 = 2 * node_j[e]
            eps[e] = (cx[e] * (u[j2] - u[i2]) + cy[e] * (u[j2 + 1] - u[i2 + 1])) / length[e]
            s, Dt, ep, al, qq, y, ok = rm_scalar(
                eps[e], eps_pl[e], alpha[e], q[e], E, H, sy0, Qinf, b, rm_tol)
            if not ok:
                n_failed += 1
            sigma[e] = s
            D[e] = Dt
            ep2[e] = ep
            al2[e] = al
            q2[e] = qq
            yld[e] = y
            N = s * area[e]
            f[i2] -= N * cx[e]
            f[i2 + 1] -= N * cy[e]
            f[j2] += N * cx[e]
            f[j2 + 1] += N * cy[e]
            k = area[e] * Dt / length[e]
            v[0] = -cx[e]
            v[1] = -cy[e]
            v[2] = cx[e]
            v[3] = cy[e]
            for a in range(4):
                for c in range(4):
                    vals[e, 4 * a + c] = k * v[a] * v[c]
        return eps, sigma, D, ep2, al2, q2, yld, f, vals, n_failed

    @njit(cache=True)
    def cell_assemble(node_i, node_j, cx, cy, length, area, B0, Be,
                      eps_hat, d0, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol,
                      f, K, eps_e, ep2, al2, q2, yld):
        ns = node_i.shape[0]
        d = B0 @ d0 + Be @ eps_hat
        f[:] = 0.0
        K[:, :] = 0.0
        nf = 0
        for e in range(ns):
            i2 = 2 * node_i[e]
            j2 = 2 * node_j[e]
            eps_e[e] = (cx[e] * (d[j2] - d[i2]) + cy[e] * (d[j2 + 1] - d[i2 + 1])) / length[e]
            s, Dt, ep, al, qq, y, ok = rm_scalar(
                eps_e[e], eps_pl[e], alpha[e], q[e], E, H, sy0, Qinf, b, rm_tol)
            if not ok:
                nf += 1
            ep2[e] = ep
            al2[e] = al
            q2[e] = qq
            yld[e] = y
            N = s * area[e]
            f[i2] -= N * cx[e]
            f[i2 + 1] -= N * cy[e]
            f[j2] += N * cx[e]
            f[j2 + 1] += N * cy[e]
            k = area[e] * Dt / length[e]
            for a in range(2):
                for c in range(2):
                    va = cx[e] if a == 1 else -cx[e]
                    wa = cy[e] if a == 1 else -cy[e]
                    vc = cx[e] if c == 1 else -cx[e]
                    wc = cy[e] if c == 1 else -cy[e]
                    ra = i2 if a == 0 else j2
                    rc = i2 if c == 0 else j2
                    K[ra, rc] += k * va * vc
                    K[ra, rc + 1] += k * va * wc
                    K[ra + 1, rc] += k * wa * vc
                    K[ra + 1, rc + 1] += k * wa * wc
        return nf

    @njit(cache=True)
    def cell_solve(node_i, node_j, cx, cy, length, area, B0, Be, v_uc,
                   eps_hat, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol,
                   tol_force, max_iter, pinv_rtol):
        # damped Newton on the independent displacements: pseudo-inverted
        # reduced update with a backtracking line search on the residual norm
        n_tot = B0.shape[0]
        n_ind = B0.shape[1]
        ns = node_i.shape[0]
        d0 = np.zeros(n_ind)
        f = np.zeros(n_tot)
        K = np.zeros((n_tot, n_tot))
        eps_e = np.zeros(ns)
        ep2 = np.zeros(ns)
        al2 = np.zeros(ns)
        q2 = np.zeros(ns)
        yld = np.zeros(ns, dtype=np.bool_)
        nf = cell_assemble(node_i, node_j, cx, cy, length, area, B0, Be,
                           eps_hat, d0, eps_pl, alpha, q, E, H, sy0, Qinf, b,
                           rm_tol, f, K, eps_e, ep2, al2, q2, yld)
        status = STATUS_CONSTITUTIVE if nf > 0 else STATUS_NO_CONVERGENCE
        niter = 0
        g = B0.T @ f
        gnorm = np.sqrt(np.sum(g * g))
        while nf == 0:
            if gnorm <= tol_force:
                status = STATUS_OK
                break
            if niter >= max_iter:
                break
            Kred = B0.T @ K @ B0
            floor = 0.0
            for a in range(n_tot):
                if K[a, a] > floor:
                    floor = K[a, a]
            step = -(pinv_cut(Kred, pinv_rtol, floor) @ g)
            accepted = False
            a_ls = 1.0
            for _ in range(30):
                d0_try = d0 + a_ls * step
                nf = cell_assemble(node_i, node_j, cx, cy, length, area, B0, Be,
                                   eps_hat, d0_try, eps_pl, alpha, q, E, H, sy0,
                                   Qinf, b, rm_tol, f, K, eps_e, ep2, al2, q2, yld)
                if nf > 0:
                    status = STATUS_CONSTITUTIVE
                    break
                g_try = B0.T @ f
                gn = np.sqrt(np.sum(g_try * g_try))
                if gn <= tol_force or gn < gnorm * (1.0 - 1e-4 * a_ls):
                    d0 = d0_try
                    g = g_try
                    gnorm = gn
                    accepted = True
                    break
                a_ls *= 0.5
            if nf > 0 or not accepted:
                break
            niter += 1

        sb = np.zeros(3)
        C = np.zeros((3, 3))
        if status == STATUS_OK:
            floor = 0.0
            for a in range(n_tot):
                if K[a, a] > floor:
                    floor = K[a, a]
            P = pinv_cut(B0.T @ K @ B0, pinv_rtol, floor)
            S = -(P @ (B0.T @ K @ Be))
            M = B0 @ S + Be
            C = (M.T @ K @ M) / v_uc
            sb = (Be.T @ f) / v_uc
        return sb, C, d0, f, eps_e, ep2, al2, q2, yld, niter, status

    @njit(parallel=True, cache=True)
    def micro_solve_batch(node_i, node_j, cx, cy, length, area, B0, Be, v_uc,
                          eps_hat, eps_pl, alpha, q, E, H, sy0, Qinf, b, rm_tol,
                          tol_force, max_iter, pinv_rtol):
        ngp = eps_hat.shape[0]
        ns = node_i.shape[0]
        n_tot = B0.shape[0]
        n_ind = B0.shape[1]
        sb = np.zeros((ngp, 3))
        C = np.zeros((ngp, 3, 3))
        d0 = np.zeros((ngp, n_ind))
        f = np.zeros((ngp, n_tot))
        eps_e = np.zeros((ngp, ns))
        ep2 = np.zeros((ngp, ns))
        al2 = np.zeros((ngp, ns))
        q2 = np.zeros((ngp, ns))
        yld = np.zeros((ngp, ns), dtype=np.bool_)
        niter = np.zeros(ngp, dtype=np.int64)
        status = np.zeros(ngp, dtype=np.int64)
        for g in prange(ngp):
            out = cell_solve(node_i, node_j, cx, cy, length, area, B0, Be, v_uc,
                             eps_hat[g], eps_pl[g], alpha[g], q[g],
                             E, H, sy0, Qinf, b, rm_tol,
                             tol_force, max_iter, pinv_rtol)
            sb[g] = out[0]
            C[g] = out[1]
            d0[g] = out[2]
            f[g] = out[3]
            eps_e[g] = out[4]
            ep2[g] = out[5]
            al2[g] = out[6]
            q2[g] = out[7]
            yld[g] = out[8]
            niter[g] = out[9]
            status[g] = out[10]
        return sb, C, d0, f, eps_e, ep2, al2, q2, yld, niter, status

    return {
        "pinv_cut": pinv_cut,
        "return_map_batch": return_map_batch,
        "strut_strains": strut_strains,
        "internal_force": internal_force,
        "stiffness_values": stiffness_values,
        "truss_system": truss_system,
        "micro_solve_batch": micro_solve_batch,
    }


if NUMBA_ENABLED:
    _nb = _build_numba_kernels()
    pinv_cut = _nb["pinv_cut"]
    return_map_batch = _nb["return_map_batch"]
    strut_strains = _nb["strut_strains"]
    internal_force = _nb["internal_force"]
    stiffness_values = _nb["stiffness_values"]
    truss_system = _nb["truss_system"]
    micro_solve_batch = _nb["micro_solve_batch"]
else:
    pinv_cut = pinv_cut_np
    return_map_batch = return_map_batch_np
    strut_strains = strut_strains_np
    internal_force = internal_force_np
    stiffness_values = stiffness_values_np
    truss_system = truss_system_np
    micro_solve_batch = micro_solve_batch_np
