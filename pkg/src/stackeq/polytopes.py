"""Polyhedral sets: Euclidean projection, linear minimization, vertex enumeration.

A set is stored in the form  {x : A x <= b,  E x = f,  lo <= x <= hi}.
Structure (box, single halfspace, scaled simplex, independent blocks) is
detected once at construction so the hot paths use closed forms; the general
case runs a primal-dual active-set method with a guaranteed first-order
fallback.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleSetError, ProjectionError, UnboundedProblemError

PROJECT_TOL = 1e-9
MAX_PROJECT_ITERS = 10_000


@dataclass
class ProjectionState:
    """Warm-start carrier for repeated projections onto the same set."""

    active: tuple = ()


def _as_2d(a, d):
    if a is None:
        return np.zeros((0, d))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return a


def _as_1d(a, k):
    if a is None:
        return np.zeros(k)
    return np.atleast_1d(np.asarray(a, dtype=float))


class ConvexPolytope:
    """Intersection of halfspaces, hyperplanes, and coordinate bounds.

    Parameters use None for "absent". Bounds may contain +-inf entries.
    Emptiness is ruled out at construction: structurally for the simple
    kinds, by a feasibility LP otherwise.
    """

    def __init__(self, dim, A=None, b=None, E=None, f=None, lo=None, hi=None,
                 check_empty=True):
        self.dim = int(dim)
        self.A = _as_2d(A, self.dim)
        self.b = _as_1d(b, 0) if b is not None else np.zeros(0)
        self.E = _as_2d(E, self.dim)
        self.f = _as_1d(f, 0) if f is not None else np.zeros(0)
        self.lo = np.full(self.dim, -np.inf) if lo is None else np.asarray(lo, dtype=float) + np.zeros(self.dim)
        self.hi = np.full(self.dim, np.inf) if hi is None else np.asarray(hi, dtype=float) + np.zeros(self.dim)
        if self.A.shape != (self.b.size, self.dim):
            raise ValueError("inequality block shape mismatch")
        if self.E.shape != (self.f.size, self.dim):
            raise ValueError("equality block shape mismatch")
        self._kind = None
        self._blocks = None
        self._simplex_total = None
        self._reduced = None
        self._rows_cache = None
        self._classify()
        if check_empty and not self._structurally_nonempty():
            self._check_nonempty()

    # -- structure ---------------------------------------------------------

    def _classify(self):
        has_bounds = np.isfinite(self.lo).any() or np.isfinite(self.hi).any()
        if self.A.shape[0] == 0 and self.E.shape[0] == 0:
            self._kind = "box" if has_bounds else "free"
            return
        if self.A.shape[0] == 1 and self.E.shape[0] == 0 and not has_bounds:
            self._kind = "halfspace"
            return
        if self._detect_simplex():
            self._kind = "simplex"
            return
        if self._detect_blocks():
            self._kind = "product"
            return
        self._kind = "general"
        self._build_reduced()

    def _detect_simplex(self):
        # lo = 0, one all-equal positive equality row, no inequality rows,
        # upper bounds absent or redundant.
        if self.A.shape[0] != 0 or self.E.shape[0] != 1:
            return False
        row = self.E[0]
        if row[0] <= 0 or not np.allclose(row, row[0], rtol=0, atol=1e-14):
            return False
        total = self.f[0] / row[0]
        if total < 0:
            return False
        if not np.all(self.lo == 0):
            return False
        if np.isfinite(self.hi).any() and np.any(self.hi < total - 1e-14):
            return False
        self._simplex_total = total
        return True

    def _detect_blocks(self):
        rows = np.vstack([self.A, self.E])
        if rows.shape[0] == 0:
            return False
        parent = list(range(self.dim))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for r in rows:
            nz = np.flatnonzero(r)
            if nz.size == 0:
                continue
            r0 = find(nz[0])
            for j in nz[1:]:
                parent[find(j)] = r0
        comps = {}
        for i in range(self.dim):
            comps.setdefault(find(i), []).append(i)
        if len(comps) <= 1:
            return False
        blocks = []
        for _, idx in sorted(comps.items(), key=lambda kv: kv[1][0]):
            idx = np.array(idx)
            arows = np.flatnonzero(np.any(self.A[:, idx] != 0, axis=1)) if self.A.shape[0] else np.array([], dtype=int)
            erows = np.flatnonzero(np.any(self.E[:, idx] != 0, axis=1)) if self.E.shape[0] else np.array([], dtype=int)
            sub = ConvexPolytope(
                idx.size,
                A=self.A[np.ix_(arows, idx)] if arows.size else None,
                b=self.b[arows] if arows.size else None,
                E=self.E[np.ix_(erows, idx)] if erows.size else None,
                f=self.f[erows] if erows.size else None,
                lo=self.lo[idx], hi=self.hi[idx], check_empty=False)
            blocks.append((idx, sub))
        self._blocks = blocks
        return True

    def _build_reduced(self):
        # Superset with the inequality rows removed; used as a fast guess.
        if self.A.shape[0] == 0:
            return
        red = ConvexPolytope(self.dim, E=self.E if self.E.shape[0] else None,
                             f=self.f if self.f.shape[0] else None,
                             lo=self.lo, hi=self.hi, check_empty=False)
        if red._kind in ("free", "box", "simplex", "halfspace") or (
                red._kind == "product"
                and all(s._kind in ("free", "box", "simplex") for _, s in red._blocks)):
            self._reduced = red

    def _structurally_nonempty(self):
        if self._kind in ("free", "halfspace"):
            return True
        if self._kind == "box":
            return bool(np.all(self.lo <= self.hi))
        if self._kind == "simplex":
            return True
        if self._kind == "product":
            return all(s._structurally_nonempty() or s._feasible_lp() for _, s in self._blocks)
        return False

    def _feasible_lp(self):
        res = linprog(np.zeros(self.dim),
                      A_ub=self.A if self.A.shape[0] else None,
                      b_ub=self.b if self.b.size else None,
                      A_eq=self.E if self.E.shape[0] else None,
                      b_eq=self.f if self.f.size else None,
                      bounds=list(zip(self.lo, self.hi)), method="highs")
        return res.status != 2

    def _check_nonempty(self):
        if not self._feasible_lp():
            raise InfeasibleSetError("constraint set is empty")

    # -- queries -----------------------------------------------------------

    @classmethod
    def box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        return cls(lo.size, lo=lo, hi=hi)

    @classmethod
    def halfspace(cls, a, b):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return cls(a.size, A=a.reshape(1, -1), b=[float(b)])

    @classmethod
    def simplex(cls, dim, total=1.0):
        return cls(dim, E=np.ones((1, dim)), f=[float(total)],
                   lo=np.zeros(dim))

    def contains(self, x, tol=1e-8):
        return self.max_violation(x) <= tol

    def max_violation(self, x):
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.A.shape[0]:
            worst = max(worst, float(np.max(self.A @ x - self.b, initial=0.0)))
        if self.E.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.E @ x - self.f), initial=0.0)))
        worst = max(worst, float(np.max(self.lo - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.hi, initial=0.0)))
        return worst

    def _ineq_rows(self):
        # All inequality rows including finite bounds, as (G, g).
        if self._rows_cache is None:
            parts_G, parts_g = [], []
            if self.A.shape[0]:
                parts_G.append(self.A)
                parts_g.append(self.b)
            fin = np.flatnonzero(np.isfinite(self.lo))
            if fin.size:
                rows = np.zeros((fin.size, self.dim))
                rows[np.arange(fin.size), fin] = -1.0
                parts_G.append(rows)
                parts_g.append(-self.lo[fin])
            fin = np.flatnonzero(np.isfinite(self.hi))
            if fin.size:
                rows = np.zeros((fin.size, self.dim))
                rows[np.arange(fin.size), fin] = 1.0
                parts_G.append(rows)
                parts_g.append(self.hi[fin])
            G = np.vstack(parts_G) if parts_G else np.zeros((0, self.dim))
            g = np.concatenate(parts_g) if parts_g else np.zeros(0)
            self._rows_cache = (G, g)
        return self._rows_cache


# -- projection -------------------------------------------------------------


def _project_simplex_rows(V, total):
    """Row-wise projection onto {x >= 0, sum x = total}. V is (k, d)."""
    k, d = V.shape
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - total
    j = np.arange(1, d + 1)
    cond = U - css / j > 0
    rho = d - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(k), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


def _project_halfspace(a, b, v):
    viol = float(a @ v - b)
    if viol <= 0:
        return v.copy()
    return v - (viol / float(a @ a)) * a


def _dual_fista(G, g, E, f, v, tol, max_iter):
    # First-order fallback: maximize the dual of the projection QP.
    M = np.vstack([G, E])
    m = np.concatenate([g, f])
    k_ineq = G.shape[0]
    if M.shape[0] == 0:
        return v.copy()
    L = np.linalg.norm(M, 2) ** 2
    L = max(L, 1e-12)
    theta = np.zeros(M.shape[0])
    y = theta.copy()
    t_acc = 1.0
    u = v.copy()
    for _ in range(max_iter):
        u = v - M.T @ y
        grad = M @ u - m
        theta_new = y + grad / L
        theta_new[:k_ineq] = np.maximum(theta_new[:k_ineq], 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = theta_new + ((t_acc - 1.0) / t_new) * (theta_new - theta)
        theta, t_acc = theta_new, t_new
        res = M @ (v - M.T @ theta) - m
        feas = max(np.max(res[:k_ineq], initial=0.0),
                   np.max(np.abs(res[k_ineq:]), initial=0.0))
        if feas <= tol:
            comp = float(np.abs(theta[:k_ineq] @ res[:k_ineq])) if k_ineq else 0.0
            if comp <= tol * (1.0 + float(np.abs(theta).max(initial=0.0))):
                return v - M.T @ theta
    u = v - M.T @ theta
    raise ProjectionError("projection fallback did not converge", best=u,
                          residual=feas)


def _solve_equality_projection(M, m, v):
    # argmin ||u - v|| s.t. M u = m, plus the multipliers used.
    gram = M @ M.T
    rhs = M @ v - m
    try:
        theta = np.linalg.solve(gram, rhs)
        if not np.all(np.isfinite(theta)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        theta = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return v - M.T @ theta, theta


def _project_active_set(poly, v, tol, warm):
    G, g = poly._ineq_rows()
    E, f = poly.E, poly.f
    n_ineq = G.shape[0]
    W = [i for i in (warm.active if warm is not None else ()) if 0 <= i < n_ineq]
    W = sorted(set(W))
    seen = set()
    best = (np.inf, v)
    for _ in range(MAX_PROJECT_ITERS):
        key = frozenset(W)
        if key in seen:
            u = _dual_fista(G, g, E, f, v, max(tol, 1e-12), MAX_PROJECT_ITERS)
            if warm is not None:
                warm.active = tuple(np.flatnonzero(G @ u - g > -1e-9))
            return u
        seen.add(key)
        M = np.vstack([G[W], E])
        m = np.concatenate([g[W], f])
        u, theta = _solve_equality_projection(M, m, v)
        alpha = theta[:len(W)]
        slack = G @ u - g
        feas_eps = tol * max(1.0, float(np.abs(v).max(initial=0.0)))
        violated = np.flatnonzero(slack > feas_eps)
        if violated.size == 0 and np.all(alpha >= -1e-11):
            if warm is not None:
                warm.active = tuple(W)
            return u
        resid = float(np.max(slack, initial=0.0))
        if resid < best[0]:
            best = (resid, u)
        keep = [W[i] for i in range(len(W)) if alpha[i] > 0.0]
        W = sorted(set(keep) | set(int(j) for j in violated))
    raise ProjectionError("projection exceeded iteration cap",
                          best=best[1], residual=best[0])


def project(poly, v, tol=PROJECT_TOL, warm=None):
    """Euclidean projection of ``v`` onto ``poly``.

    Closed forms handle boxes, single halfspaces, scaled simplices, and
    products of those; everything else runs an active-set method (warm-
    startable through ``warm``, a ProjectionState) with a dual first-order
    fallback. The result is feasible to within ``tol`` and unique.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (poly.dim,):
        raise ValueError(f"point has dimension {v.shape}, set has {poly.dim}")
    kind = poly._kind
    if kind == "free":
        return v.copy()
    if kind == "box":
        return np.clip(v, poly.lo, poly.hi)
    if kind == "halfspace":
        return _project_halfspace(poly.A[0], poly.b[0], v)
    if kind == "simplex":
        return _project_simplex_rows(v.reshape(1, -1), poly._simplex_total)[0]
    if kind == "product":
        out = np.empty_like(v)
        simplex_blocks = [(idx, s) for idx, s in poly._blocks if s._kind == "simplex"]
        rest = [(idx, s) for idx, s in poly._blocks if s._kind != "simplex"]
        if simplex_blocks:
            dims = {idx.size for idx, _ in simplex_blocks}
            totals = {s._simplex_total for _, s in simplex_blocks}
            if len(dims) == 1 and len(totals) == 1:
                stack = np.array([v[idx] for idx, _ in simplex_blocks])
                proj = _project_simplex_rows(stack, totals.pop())
                for row, (idx, _) in zip(proj, simplex_blocks):
                    out[idx] = row
            else:
                for idx, s in simplex_blocks:
                    out[idx] = project(s, v[idx], tol)
        for idx, s in rest:
            out[idx] = project(s, v[idx], tol)
        return out
    if poly._reduced is not None:
        guess = project(poly._reduced, v, tol)
        if np.all(poly.A @ guess - poly.b <= tol):
            return guess
    return _project_active_set(poly, v, tol, warm)


# -- linear minimization ----------------------------------------------------


def _certify_ray(poly, c):
    # Recession direction with negative objective slope, if one exists.
    lo_ray = np.where(np.isfinite(poly.lo), 0.0, -1.0)
    hi_ray = np.where(np.isfinite(poly.hi), 0.0, 1.0)
    res = linprog(c,
                  A_ub=poly.A if poly.A.shape[0] else None,
                  b_ub=np.zeros(poly.A.shape[0]) if poly.A.shape[0] else None,
                  A_eq=poly.E if poly.E.shape[0] else None,
                  b_eq=np.zeros(poly.E.shape[0]) if poly.E.shape[0] else None,
                  bounds=list(zip(lo_ray, hi_ray)), method="highs")
    if res.status == 0 and res.fun < -1e-12:
        return res.x
    return None


def linear_minimize(poly, c):
    """Minimize ``c @ x`` over ``poly``; returns a minimizing point.

    Requires the set to be bounded in the descent direction; otherwise an
    UnboundedProblemError carrying a certified recession ray is raised.
    Ties on the structural paths resolve to the lexicographically smallest
    vertex; the general path returns the LP solver's deterministic choice.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (poly.dim,):
        raise ValueError("cost vector dimension mismatch")
    kind = poly._kind
    if kind == "free":
        if np.any(c != 0):
            raise UnboundedProblemError("unconstrained linear program", ray=-c)
        return np.zeros(poly.dim)
    if kind == "box":
        out = np.empty(poly.dim)
        for i in range(poly.dim):
            if c[i] > 0:
                if not np.isfinite(poly.lo[i]):
                    e = np.zeros(poly.dim)
                    e[i] = -1.0
                    raise UnboundedProblemError(f"coordinate {i} unbounded below", ray=e)
                out[i] = poly.lo[i]
            elif c[i] < 0:
                if not np.isfinite(poly.hi[i]):
                    e = np.zeros(poly.dim)
                    e[i] = 1.0
                    raise UnboundedProblemError(f"coordinate {i} unbounded above", ray=e)
                out[i] = poly.hi[i]
            else:
                out[i] = poly.lo[i] if np.isfinite(poly.lo[i]) else (
                    poly.hi[i] if np.isfinite(poly.hi[i]) else 0.0)
        return out
    if kind == "simplex":
        ties = np.flatnonzero(c == c.min())
        j = int(ties[-1])  # highest index has the lexicographically smallest vertex
        out = np.zeros(poly.dim)
        out[j] = poly._simplex_total
        return out
    if kind == "product":
        out = np.empty(poly.dim)
        for idx, s in poly._blocks:
            out[idx] = linear_minimize(s, c[idx])
        return out
    res = linprog(c,
                  A_ub=poly.A if poly.A.shape[0] else None,
                  b_ub=poly.b if poly.b.size else None,
                  A_eq=poly.E if poly.E.shape[0] else None,
                  b_eq=poly.f if poly.f.size else None,
                  bounds=list(zip(poly.lo, poly.hi)), method="highs")
    if res.status == 3:
        ray = _certify_ray(poly, c)
        raise UnboundedProblemError("linear program unbounded below", ray=ray)
    if res.status != 0:
        raise InfeasibleSetError(f"linear program failed with status {res.status}")
    return res.x


# -- vertex enumeration -----------------------------------------------------


def vertices(poly, work_limit=200_000):
    """Enumerate vertices by basis inspection; intended for small sets only."""
    G, g = poly._ineq_rows()
    E, f = poly.E, poly.f
    d = poly.dim
    k = d - E.shape[0]
    if k < 0:
        return np.zeros((0, d))
    n = G.shape[0]
    if k > n:
        return np.zeros((0, d))
    from math import comb
    if comb(n, k) > work_limit:
        raise ValueError(f"vertex enumeration too large: C({n},{k}) bases")
    found = []
    seen = set()
    for combo in itertools.combinations(range(n), k):
        M = np.vstack([G[list(combo)], E])
        rhs = np.concatenate([g[list(combo)], f])
        try:
            x = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(x)):
            continue
        if poly.max_violation(x) > 1e-9:
            continue
        key = tuple(np.round(x, 9))
        if key not in seen:
            seen.add(key)
            found.append(x)
    if not found:
        return np.zeros((0, d))
    out = np.array(found)
    order = np.lexsort(out.T[::-1])
    return out[order]


# -- restriction ------------------------------------------------------------


def restrict(poly, keep, others_value):
    """Slice a polytope by freezing the complement of ``keep`` coordinates.

    ``keep`` is an index array into the ambient space, ``others_value`` the
    full ambient vector whose non-kept entries supply the frozen values.
    Rows that lose all support are checked for consistency and dropped.
    """
    keep = np.asarray(keep, dtype=int)
    mask = np.zeros(poly.dim, dtype=bool)
    mask[keep] = True
    xo = np.asarray(others_value, dtype=float)

    def split(Arows, rhs, is_eq):
        if Arows.shape[0] == 0:
            return np.zeros((0, keep.size)), np.zeros(0)
        Ak = Arows[:, keep]
        shift = rhs - Arows[:, ~mask] @ xo[~mask]
        live = np.any(np.abs(Ak) > 1e-14, axis=1)
        dead = ~live
        if dead.any():
            bad = np.abs(shift[dead]) > 1e-8 if is_eq else shift[dead] < -1e-8
            if bad.any():
                idx = int(np.flatnonzero(dead)[np.flatnonzero(bad)[0]])
                raise InfeasibleSetError(
                    f"frozen coordinates violate row {idx} of the restriction")
        return Ak[live], shift[live]

    A, b = split(poly.A, poly.b, is_eq=False)
    E, f = split(poly.E, poly.f, is_eq=True)
    return ConvexPolytope(keep.size,
                          A=A if A.shape[0] else None, b=b if b.size else None,
                          E=E if E.shape[0] else None, f=f if f.size else None,
                          lo=poly.lo[keep], hi=poly.hi[keep], check_empty=False)
