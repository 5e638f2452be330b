"""Implicit differentiation of the followers' equilibrium in the leader's y.

Two routes produce dw/dy for the lifted follower decision w = (x, z, lam, mu):

* the lifted active-constraint system: stack the gradients of the active
  lifted constraints, recover the lifted Lagrange multipliers by least
  squares, and evaluate the pseudo-inverse sensitivity formula (every
  matrix inverse replaced by an SVD pseudo-inverse with relative cutoff
  1e-10);
* equilibrium sensitivity: differentiate the equilibrium KKT conditions
  directly in (x, active multipliers) and duplicate dx into the z block.
  This solves one sparse square system and scales to large instances.

Both agree at points where the active system is well posed; the first is
the reference, the second the fast path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import lsqr, splu

from .errors import KKTError
from .game import assemble_gradient_field
from .lifted import EPS_MULT, detect_active_set, layout_of

SV_CUTOFF = 1e-10


def _pinv(a):
    return np.linalg.pinv(a, rcond=SV_CUTOFF)


def _svd_pinv(a, floor=0.0):
    """Pseudo-inverse with the relative cutoff plus an absolute floor.

    The floor guards products like G F+ G^T that are exactly singular in
    exact arithmetic: their rounding noise would otherwise pass the
    relative test (it IS the largest singular value) and get inverted.
    Returns (pinv, singular values actually kept).
    """
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cut = max(SV_CUTOFF * (float(s[0]) if s.size else 0.0), floor)
    inv = np.where(s > cut, 1.0 / np.where(s > cut, s, 1.0), 0.0)
    return vt.T @ (inv[:, None] * u.T), s[s > cut]


@dataclass
class ActiveSystem:
    """Derivative blocks of the active lifted constraint system.

    Rows follow a fixed order: stationarity, active x-inequalities,
    x-equalities, complementarity, active z-inequalities, z-equalities,
    zero-multiplier bounds. ``lagrange`` holds the lifted problem's own
    multipliers recovered by least squares; ``pinned`` lists w-indices of
    multipliers whose sensitivity is identically zero.
    """

    m_f: object        # (rows, n_w)
    m_lf: np.ndarray   # (n_w, n_leader)
    m_l: np.ndarray    # (rows, n_leader)
    m_ff: object       # (n_w, n_w)
    lagrange: np.ndarray
    grad_f: np.ndarray
    layout: object
    pinned: tuple
    row_kinds: tuple
    sparse: bool


def _constraint_data(cs, y, pt):
    vals = np.array([float(c.fn(y, pt)) for c in cs]) if cs else np.zeros(0)
    gx = [np.asarray(c.grad_x(y, pt), dtype=float) for c in cs]
    gy = [np.asarray(c.grad_y(y, pt), dtype=float) for c in cs]
    hxx = [None if c.hess_xx is None else np.asarray(c.hess_xx(y, pt), dtype=float)
           for c in cs]
    hyx = [None if c.hess_yx is None else np.asarray(c.hess_yx(y, pt), dtype=float)
           for c in cs]
    return vals, gx, gy, hxx, hyx


def build_active_system(spec, y, point, active=None, sparse=None):
    """Assemble the derivative blocks of the active lifted system at a point.

    ``point`` is a LiftedPoint with x = z; ``active`` defaults to detection
    at the point. Verifies lifted stationarity (residual <= 1e-5) before
    returning. Third-derivative terms vanish because the blocks are
    evaluated at x = z; payoff and constraint curvature enters exactly.
    """
    y = np.asarray(y, dtype=float)
    lay = layout_of(spec)
    n, p, q, n_w = lay.n, lay.p, lay.q, lay.n_w
    n_L = spec.n_leader
    if active is None:
        active = detect_active_set(spec, y, point)
    if sparse is None:
        sparse = n_w > 800
    field = assemble_gradient_field(spec)
    x, z, lam, mu = point.x, point.z, point.lam, point.mu
    D = field.evaluate(y, x)
    J = field.jacobian_x(y, x)
    Jy = field.jacobian_y(y, x)
    iq_x = _constraint_data(spec.follower_ineq, y, x)
    iq_z = _constraint_data(spec.follower_ineq, y, z)
    eq_x = _constraint_data(spec.follower_eq, y, x)
    eq_z = _constraint_data(spec.follower_eq, y, z)
    x_off, z_off, l_off, m_off = 0, n, 2 * n, 2 * n + p

    rows_w = []    # sparse triplets per row: list of (cols, vals)
    rows_y = []    # dense (n_L,) per row
    kinds = []

    def add_row(cols, vals, grad_y, kind):
        rows_w.append((np.asarray(cols, dtype=int), np.asarray(vals, dtype=float)))
        rows_y.append(np.asarray(grad_y, dtype=float))
        kinds.append(kind)

    # stationarity rows: -D_r(y,x) + sum_j lam_j dh_j/dz_r + sum_k mu_k dl_k/dz_r
    zcoef = np.zeros((n,))
    z_from_hess = np.zeros((n, n))
    any_zh = False
    for j in range(p):
        if lam[j] != 0.0 and iq_z[3][j] is not None:
            z_from_hess += lam[j] * iq_z[3][j]
            any_zh = True
    for k in range(q):
        if mu[k] != 0.0 and eq_z[3][k] is not None:
            z_from_hess += mu[k] * eq_z[3][k]
            any_zh = True
    for r in range(n):
        cols = list(range(x_off, x_off + n))
        vals = list(-J[r])
        if any_zh:
            cols += list(range(z_off, z_off + n))
            vals += list(z_from_hess[r])
        lam_cols = [l_off + j for j in range(p)]
        lam_vals = [iq_z[1][j][r] for j in range(p)]
        mu_cols = [m_off + k for k in range(q)]
        mu_vals = [eq_z[1][k][r] for k in range(q)]
        gy = -Jy[r].copy()
        for j in range(p):
            if lam[j] != 0.0 and iq_z[4][j] is not None:
                gy += lam[j] * iq_z[4][j][r]
        for k in range(q):
            if mu[k] != 0.0 and eq_z[4][k] is not None:
                gy += mu[k] * eq_z[4][k][r]
        add_row(cols + lam_cols + mu_cols, vals + lam_vals + mu_vals, gy,
                ("stat", r))
    # active x-inequalities, then x-equalities
    for j in active.ineq_x:
        add_row(np.arange(n), iq_x[1][j], iq_x[2][j], ("x_ineq", j))
    for k in range(q):
        add_row(np.arange(n), eq_x[1][k], eq_x[2][k], ("x_eq", k))
    # complementarity rows lam_j h_j(y, z)
    for j in range(p):
        cols = list(range(z_off, z_off + n)) + [l_off + j]
        vals = list(lam[j] * iq_z[1][j]) + [iq_z[0][j]]
        add_row(cols, vals, lam[j] * iq_z[2][j], ("comp", j))
    # active z-inequalities, z-equalities
    for j in active.ineq_z:
        cols = np.arange(z_off, z_off + n)
        add_row(cols, iq_z[1][j], iq_z[2][j], ("z_ineq", j))
    for k in range(q):
        cols = np.arange(z_off, z_off + n)
        add_row(cols, eq_z[1][k], eq_z[2][k], ("z_eq", k))
    # multiplier nonnegativity rows -lam_j <= 0, active where lam_j = 0
    for j in active.lambda_zero:
        add_row([l_off + j], [-1.0], np.zeros(n_L), ("lam0", j))

    n_rows = len(rows_w)
    if sparse:
        data, ri, ci = [], [], []
        for r, (cols, vals) in enumerate(rows_w):
            nz = np.flatnonzero(vals)
            ri.extend([r] * nz.size)
            ci.extend(cols[nz])
            data.extend(vals[nz])
        m_f = sp.csr_matrix((data, (ri, ci)), shape=(n_rows, n_w))
    else:
        m_f = np.zeros((n_rows, n_w))
        for r, (cols, vals) in enumerate(rows_w):
            m_f[r, cols] = vals
    m_l = np.vstack(rows_y) if n_rows else np.zeros((0, n_L))

    grad_f = np.zeros(n_w)
    grad_f[:n] = D
    grad_f[n:2 * n] = -D

    if sparse:
        res = lsqr(m_f.T, -grad_f, atol=1e-13, btol=1e-13, iter_lim=20 * n_w)
        lagrange = res[0]
        st_res = float(np.linalg.norm(m_f.T @ lagrange + grad_f, ord=np.inf))
    else:
        lagrange = -_pinv(m_f @ m_f.T) @ (m_f @ grad_f)
        st_res = float(np.linalg.norm(grad_f + m_f.T @ lagrange, ord=np.inf))
    if st_res > 1e-5:
        raise KKTError(
            f"lifted stationarity residual {st_res:.3e}: point is off the "
            "KKT manifold", residual=st_res)
    # multipliers at noise level are exact zeros: keeping them would seed
    # near-null directions that the pseudo-inverse cutoff then amplifies
    noise = 1e-6 * max(1.0, float(np.linalg.norm(grad_f, ord=np.inf)))
    lagrange[np.abs(lagrange) <= noise] = 0.0

    # m_ff = -hess_ww(f_F) - sum_k lagrange_k hess_ww(row_k), at x = z
    trip_r, trip_c, trip_v = [], [], []

    def sym_add(rr, cc, vv):
        trip_r.extend(rr)
        trip_c.extend(cc)
        trip_v.extend(vv)

    JJt = -(J + J.T)
    nzr, nzc = np.nonzero(JJt)
    sym_add(nzr + x_off, nzc + x_off, JJt[nzr, nzc])
    nzr, nzc = np.nonzero(J.T)
    sym_add(nzr + x_off, nzc + z_off, J.T[nzr, nzc])
    nzr, nzc = np.nonzero(J)
    sym_add(nzr + z_off, nzc + x_off, J[nzr, nzc])

    m_lf = np.zeros((n_w, n_L))
    m_lf[x_off:x_off + n] = -Jy
    m_lf[z_off:z_off + n] = Jy

    for r_idx, (kind, j) in enumerate(kinds):
        w_k = lagrange[r_idx]
        if w_k == 0.0:
            continue
        if kind == "stat":
            r = j
            for jj in range(p):
                h = iq_z[3][jj]
                if h is not None:
                    nz = np.flatnonzero(h[r])
                    sym_add(z_off + nz, [l_off + jj] * nz.size, -w_k * h[r][nz])
                    sym_add([l_off + jj] * nz.size, z_off + nz, -w_k * h[r][nz])
                hy = iq_z[4][jj]
                if hy is not None:
                    m_lf[l_off + jj] += -w_k * hy[r]
            for kk in range(q):
                h = eq_z[3][kk]
                if h is not None:
                    nz = np.flatnonzero(h[r])
                    sym_add(z_off + nz, [m_off + kk] * nz.size, -w_k * h[r][nz])
                    sym_add([m_off + kk] * nz.size, z_off + nz, -w_k * h[r][nz])
                hy = eq_z[4][kk]
                if hy is not None:
                    m_lf[m_off + kk] += -w_k * hy[r]
        elif kind == "x_ineq":
            h = iq_x[3][j]
            if h is not None:
                nzr, nzc = np.nonzero(h)
                sym_add(nzr + x_off, nzc + x_off, -w_k * h[nzr, nzc])
            hy = iq_x[4][j]
            if hy is not None:
                m_lf[x_off:x_off + n] += -w_k * hy
        elif kind == "x_eq":
            h = eq_x[3][j]
            if h is not None:
                nzr, nzc = np.nonzero(h)
                sym_add(nzr + x_off, nzc + x_off, -w_k * h[nzr, nzc])
            hy = eq_x[4][j]
            if hy is not None:
                m_lf[x_off:x_off + n] += -w_k * hy
        elif kind == "comp":
            g = iq_z[1][j]
            nz = np.flatnonzero(g)
            sym_add(z_off + nz, [l_off + j] * nz.size, -w_k * g[nz])
            sym_add([l_off + j] * nz.size, z_off + nz, -w_k * g[nz])
            h = iq_z[3][j]
            if h is not None and lam[j] != 0.0:
                nzr, nzc = np.nonzero(h)
                sym_add(nzr + z_off, nzc + z_off, -w_k * lam[j] * h[nzr, nzc])
            hy = iq_z[4][j]
            if hy is not None and lam[j] != 0.0:
                m_lf[z_off:z_off + n] += -w_k * lam[j] * hy
            m_lf[l_off + j] += -w_k * iq_z[2][j]
        elif kind == "z_ineq":
            h = iq_z[3][j]
            if h is not None:
                nzr, nzc = np.nonzero(h)
                sym_add(nzr + z_off, nzc + z_off, -w_k * h[nzr, nzc])
            hy = iq_z[4][j]
            if hy is not None:
                m_lf[z_off:z_off + n] += -w_k * hy
        elif kind == "z_eq":
            h = eq_z[3][j]
            if h is not None:
                nzr, nzc = np.nonzero(h)
                sym_add(nzr + z_off, nzc + z_off, -w_k * h[nzr, nzc])
            hy = eq_z[4][j]
            if hy is not None:
                m_lf[z_off:z_off + n] += -w_k * hy
        # lam0 rows are linear: no curvature

    if sparse:
        m_ff = sp.csr_matrix((trip_v, (trip_r, trip_c)), shape=(n_w, n_w))
    else:
        m_ff = np.zeros((n_w, n_w))
        np.add.at(m_ff, (np.asarray(trip_r, dtype=int),
                         np.asarray(trip_c, dtype=int)),
                  np.asarray(trip_v, dtype=float))

    slack = {j for j in range(p)
             if j not in set(active.ineq_z)}
    pinned = tuple(l_off + j for j in range(p)
                   if j in slack or j in set(active.lambda_zero))
    return ActiveSystem(m_f=m_f, m_lf=m_lf, m_l=m_l, m_ff=m_ff,
                        lagrange=lagrange, grad_f=grad_f, layout=lay,
                        pinned=pinned, row_kinds=tuple(kinds), sparse=sparse)


def implicit_gradient(system):
    """Sensitivity dw/dy of the lifted decision, pseudo-inverse formula.

    Every inverse is an SVD pseudo-inverse with singular values below
    1e-10 of the largest treated as zero; multiplier rows of slack
    constraints are zeroed exactly.
    """
    m_ff = system.m_ff.toarray() if system.sparse else system.m_ff
    m_f = system.m_f.toarray() if system.sparse else system.m_f
    f_pinv, kept = _svd_pinv(m_ff)
    a1 = f_pinv @ m_f.T
    # scale of rounding noise inside the triple product; exact-zero core
    # matrices must not have their noise inverted
    fp_norm = 1.0 / float(kept[-1]) if kept.size else 0.0
    floor = 1e-12 * float(np.linalg.norm(m_f) ** 2) * fp_norm
    core, _ = _svd_pinv(m_f @ a1, floor=floor)
    inner = m_f @ (f_pinv @ system.m_lf) - system.m_l
    dw = a1 @ (core @ inner) - f_pinv @ system.m_lf
    for idx in system.pinned:
        dw[idx] = 0.0
    return dw


def implicit_gradient_vi(spec, y, point, active=None):
    """Sensitivity dw/dy through the equilibrium KKT system directly.

    Differentiates stationarity plus the strictly active constraints in
    (x, multipliers), solves one square sparse system (least-squares
    fallback when degenerate), and duplicates dx into the z block. Fast
    path for large instances; agrees with the pseudo-inverse formula at
    nondegenerate points.
    """
    y = np.asarray(y, dtype=float)
    lay = layout_of(spec)
    n, p, q, n_L = lay.n, lay.p, lay.q, spec.n_leader
    if active is None:
        active = detect_active_set(spec, y, point)
    field = assemble_gradient_field(spec)
    x, lam, mu = point.x, point.lam, point.mu
    J = field.jacobian_x(y, x)
    Jy = field.jacobian_y(y, x)
    strict = [j for j in range(p) if lam[j] > EPS_MULT]
    iq = _constraint_data([spec.follower_ineq[j] for j in strict], y, x)
    eq = _constraint_data(spec.follower_eq, y, x)
    a = len(strict)
    Jmod = J.copy()
    rhs_top = -Jy.copy()
    for idx in range(a):
        if iq[3][idx] is not None:
            Jmod -= lam[strict[idx]] * iq[3][idx]
        if iq[4][idx] is not None:
            rhs_top += lam[strict[idx]] * iq[4][idx]
    for k in range(q):
        if eq[3][k] is not None:
            Jmod -= mu[k] * eq[3][k]
        if eq[4][k] is not None:
            rhs_top += mu[k] * eq[4][k]
    G = np.vstack(iq[1]) if a else np.zeros((0, n))
    E = np.vstack(eq[1]) if q else np.zeros((0, n))
    Gy = np.vstack(iq[2]) if a else np.zeros((0, n_L))
    Ey = np.vstack(eq[2]) if q else np.zeros((0, n_L))
    size = n + a + q
    rhs = np.vstack([rhs_top, -Gy, -Ey])
    Ks = sp.bmat([
        [sp.csr_matrix(Jmod), -sp.csr_matrix(G).T if a else None,
         -sp.csr_matrix(E).T if q else None],
        [sp.csr_matrix(G) if a else None, None, None],
        [sp.csr_matrix(E) if q else None, None, None],
    ], format="csc")
    sol = None
    try:
        lu = splu(Ks)
        cand = lu.solve(rhs)
        if np.all(np.isfinite(cand)):
            resid = abs(Ks @ cand - rhs).max()
            if resid <= 1e-6 * (1.0 + abs(rhs).max()):
                sol = cand
    except RuntimeError:
        sol = None
    if sol is None:
        sol = np.empty((size, n_L))
        for c in range(n_L):
            sol[:, c] = lsqr(Ks, rhs[:, c], atol=1e-13, btol=1e-13,
                             iter_lim=20 * size)[0]
    dx = sol[:n]
    dlam = np.zeros((p, n_L))
    for idx, j in enumerate(strict):
        dlam[j] = sol[n + idx]
    dmu = sol[n + a:n + a + q] if q else np.zeros((q, n_L))
    dw = np.vstack([dx, dx, dlam, dmu])
    return dw


def leader_total_gradient(spec, y, point, dw_dy):
    """Total derivative of the leader objective along the equilibrium path."""
    y = np.asarray(y, dtype=float)
    n = spec.n
    gy = np.asarray(spec.leader_grad_y(y, point.x), dtype=float)
    gx = np.asarray(spec.leader_grad_x(y, point.x), dtype=float)
    return gy + dw_dy[:n].T @ gx
