"""Lifted single-follower representation: duplicated decision and multipliers.

The followers' equilibrium problem collapses into one lifted follower whose
decision is w = (x, z, lam, mu): the equilibrium profile x, a duplicate z
constrained to the same set, and the multipliers of the inner linear program
that certifies the variational inequality. At a valid lifted point x and z
coincide, the stationarity identity D(y,x) = sum lam_j grad h_j(y,z) +
sum mu_k grad l_k(y,z) holds, and complementarity pairs every inactive
constraint with a zero multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import lsq_linear
from scipy.sparse.linalg import lsqr

from .errors import KKTError
from .game import assemble_gradient_field

EPS_ACTIVE = 1e-6
EPS_MULT = 1e-8


@dataclass(frozen=True)
class LiftedLayout:
    """Index bookkeeping for w = (x, z, lam, mu)."""

    n: int
    p: int
    q: int

    @property
    def n_w(self):
        return 2 * self.n + self.p + self.q

    @property
    def x_sl(self):
        return slice(0, self.n)

    @property
    def z_sl(self):
        return slice(self.n, 2 * self.n)

    @property
    def lam_sl(self):
        return slice(2 * self.n, 2 * self.n + self.p)

    @property
    def mu_sl(self):
        return slice(2 * self.n + self.p, 2 * self.n + self.p + self.q)


def layout_of(spec):
    return LiftedLayout(n=spec.n, p=len(spec.follower_ineq),
                        q=len(spec.follower_eq))


@dataclass(frozen=True)
class LiftedPoint:
    x: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    def to_w(self):
        return np.concatenate([self.x, self.z, self.lam, self.mu])


def from_w(w, layout):
    w = np.asarray(w, dtype=float)
    return LiftedPoint(x=w[layout.x_sl].copy(), z=w[layout.z_sl].copy(),
                       lam=w[layout.lam_sl].copy(), mu=w[layout.mu_sl].copy())


@dataclass(frozen=True)
class ActiveSet:
    """Indices of binding rows at a lifted point.

    ineq_x / ineq_z index spec.follower_ineq evaluated at x and z;
    lambda_zero lists multipliers pinned at zero (their constraints are
    slack, or weakly active). A constraint that is weakly active (zero
    slack, zero multiplier) appears in both ineq lists and lambda_zero:
    the conservative choice that keeps the point on the constraint
    manifold under differentiation.
    """

    ineq_x: tuple
    ineq_z: tuple
    lambda_zero: tuple

    def describe(self, spec):
        lines = []
        for j in self.ineq_z:
            c = spec.follower_ineq[j]
            who = f"follower {c.owner}" if c.owner is not None else "shared"
            lines.append(f"active[{j}] {c.label or 'unnamed'} ({who})")
        return lines


def recover_multipliers(spec, y, x_star, z=None, eps_act=EPS_ACTIVE):
    """Build the lifted point above an equilibrium profile.

    Multipliers solve the stationarity system restricted to the active
    constraints in the least-squares sense; inactive multipliers are exactly
    zero. Active multipliers that come out slightly negative (within 1e-8)
    are clipped; worse sign violations raise, as does a stationarity
    residual beyond 1e-4.
    """
    x_star = np.asarray(x_star, dtype=float)
    z = x_star.copy() if z is None else np.asarray(z, dtype=float).copy()
    field = assemble_gradient_field(spec)
    D = field.evaluate(y, x_star)
    p, q = len(spec.follower_ineq), len(spec.follower_eq)
    vals = np.array([float(c.fn(y, z)) for c in spec.follower_ineq])
    active = np.flatnonzero(vals >= -eps_act)
    cols = [np.asarray(spec.follower_ineq[j].grad_x(y, z), dtype=float)
            for j in active]
    cols += [np.asarray(c.grad_x(y, z), dtype=float) for c in spec.follower_eq]
    lam = np.zeros(p)
    mu = np.zeros(q)
    if cols:
        M = np.column_stack(cols)
        big = M.size > 200_000
        if big:
            # large instances: same least-squares solve, sparse machinery
            M = sp.csc_matrix(M)
            chi = lsqr(M, D, atol=1e-13, btol=1e-13,
                       iter_lim=20 * M.shape[1])[0]
        else:
            chi, *_ = np.linalg.lstsq(M, D, rcond=None)
        if active.size and np.any(chi[:active.size] < -EPS_MULT):
            lo = np.concatenate([np.zeros(active.size), np.full(q, -np.inf)])
            hi = np.full(active.size + q, np.inf)
            # trf emits spurious overflow warnings on rank-deficient columns
            with np.errstate(invalid="ignore", over="ignore"):
                res = lsq_linear(M, D, bounds=(lo, hi), tol=1e-14,
                                 lsq_solver="lsmr" if big else "exact")
            chi = res.x
        lam_act = chi[:active.size]
        bad = lam_act < -EPS_MULT
        if np.any(bad):
            j = int(active[np.flatnonzero(bad)[0]])
            raise KKTError(
                f"multiplier of constraint {j} is {lam_act[bad][0]:.3e} < 0",
                residual=float(lam_act[bad][0]))
        lam[active] = np.maximum(lam_act, 0.0)
        mu[:] = chi[active.size:]
        resid = float(np.linalg.norm(M @ chi - D, ord=np.inf))
    else:
        resid = float(np.linalg.norm(D, ord=np.inf))
    if resid > 1e-4:
        raise KKTError(f"stationarity residual {resid:.3e}: not an "
                       "equilibrium KKT point", residual=resid)
    return LiftedPoint(x=x_star.copy(), z=z, lam=lam, mu=mu)


def detect_active_set(spec, y, point, eps_act=EPS_ACTIVE):
    """Classify binding rows of the lifted constraint system at a point."""
    ineq_x = tuple(
        j for j, c in enumerate(spec.follower_ineq)
        if float(c.fn(y, point.x)) >= -eps_act)
    ineq_z = tuple(
        j for j, c in enumerate(spec.follower_ineq)
        if float(c.fn(y, point.z)) >= -eps_act)
    lambda_zero = tuple(
        int(j) for j in np.flatnonzero(point.lam <= EPS_MULT))
    return ActiveSet(ineq_x=ineq_x, ineq_z=ineq_z, lambda_zero=lambda_zero)


def kkt_residuals(spec, y, point):
    """Diagnostics for a lifted point: stationarity, complementarity, signs."""
    field = assemble_gradient_field(spec)
    D = field.evaluate(y, point.x)
    st = -D
    for j, c in enumerate(spec.follower_ineq):
        if point.lam[j] != 0.0:
            st = st + point.lam[j] * np.asarray(c.grad_x(y, point.z), dtype=float)
    for k, c in enumerate(spec.follower_eq):
        if point.mu[k] != 0.0:
            st = st + point.mu[k] * np.asarray(c.grad_x(y, point.z), dtype=float)
    comp = 0.0
    for j, c in enumerate(spec.follower_ineq):
        comp = max(comp, abs(point.lam[j] * float(c.fn(y, point.z))))
    return {
        "stationarity": float(np.linalg.norm(st, ord=np.inf)),
        "complementarity": comp,
        "min_multiplier": float(point.lam.min(initial=0.0)),
        "xz_gap": float(np.linalg.norm(point.x - point.z, ord=np.inf)),
    }
