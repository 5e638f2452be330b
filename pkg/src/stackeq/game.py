"""Core description of a one-leader, many-follower game with joint constraints.

The leader picks y inside its own feasible set; follower i then picks the
i-th block of x to maximize its payoff subject to constraints that may couple
all follower blocks and the leader's decision. Payoffs and constraints enter
as callables together with the first and second derivatives the solvers need.
Equilibrium quality is measured by two residuals: a sampled best-response gap
(Nash-style) and a variational gap computed through a linear program.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import GameConfigError, InfeasiblePointError, UnboundedProblemError
from .polytopes import ConvexPolytope, linear_minimize, project, restrict, vertices

FEAS_TOL = 1e-8


@dataclass(frozen=True)
class FollowerObjective:
    """Payoff of one follower (maximized) and its derivative callables.

    value:       (y, x) -> float
    grad_own:    (y, x) -> (n_i,)   gradient in the follower's own block
    hess_x_own:  (y, x) -> (n_i, n)   derivative of grad_own in all of x
    hess_y_own:  (y, x) -> (n_i, n_L) derivative of grad_own in y
    """

    value: Callable
    grad_own: Callable
    hess_x_own: Callable
    hess_y_own: Callable


@dataclass(frozen=True)
class Constraint:
    """Scalar follower-side constraint h(y, x) <= 0 or l(y, x) = 0.

    Hessian callables may be omitted for constraints affine in x; ``owner``
    records which follower's subproblem the row guards (None when shared).
    """

    fn: Callable
    grad_x: Callable
    grad_y: Callable
    hess_xx: Optional[Callable] = None
    hess_yx: Optional[Callable] = None
    owner: Optional[int] = None
    label: str = ""


@dataclass(frozen=True)
class LeaderConstraint:
    """Scalar leader-side constraint g(y) <= 0 or g(y) = 0."""

    fn: Callable
    grad: Callable
    label: str = ""


@dataclass(frozen=True)
class GameSpec:
    n_leader: int
    follower_dims: tuple
    leader_objective: Callable  # (y, x) -> float, direction per leader_sense
    leader_grad_y: Callable
    leader_grad_x: Callable
    followers: tuple
    leader_ineq: tuple = ()
    leader_eq: tuple = ()
    follower_ineq: tuple = ()
    follower_eq: tuple = ()
    # plumbing: exact sets when the problem knows them, reporting senses
    leader_set: Optional[ConvexPolytope] = None
    follower_set_builder: Optional[Callable] = None
    default_leader_start: Optional[np.ndarray] = None
    leader_sense: str = "max"
    follower_sense: str = "max"
    name: str = ""

    @property
    def n_followers(self):
        return len(self.followers)

    @property
    def n(self):
        return int(sum(self.follower_dims))

    def __post_init__(self):
        if len(self.follower_dims) != len(self.followers):
            raise GameConfigError(
                f"{len(self.followers)} followers but {len(self.follower_dims)} dims")
        if any(d <= 0 for d in self.follower_dims):
            raise GameConfigError("follower dimensions must be positive")
        if self.n_leader <= 0:
            raise GameConfigError("leader dimension must be positive")


def block_slices(spec):
    offs = np.concatenate([[0], np.cumsum(spec.follower_dims)])
    return [slice(int(offs[i]), int(offs[i + 1])) for i in range(spec.n_followers)]


@dataclass(frozen=True)
class FollowerProfile:
    """Concatenated follower decision with block structure."""

    x: np.ndarray
    dims: tuple

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.shape != (int(sum(self.dims)),):
            raise GameConfigError(
                f"profile has {x.size} entries, dims sum to {sum(self.dims)}")
        if not np.all(np.isfinite(x)):
            raise GameConfigError("profile contains non-finite entries")

    def block(self, i):
        offs = np.concatenate([[0], np.cumsum(self.dims)])
        return self.x[int(offs[i]):int(offs[i + 1])]

    def replace_block(self, i, xi):
        offs = np.concatenate([[0], np.cumsum(self.dims)])
        out = self.x.copy()
        out[int(offs[i]):int(offs[i + 1])] = xi
        return FollowerProfile(out, self.dims)

    def except_block(self, i):
        offs = np.concatenate([[0], np.cumsum(self.dims)])
        lo, hi = int(offs[i]), int(offs[i + 1])
        return np.concatenate([self.x[:lo], self.x[hi:]])


def _as_x(x):
    if isinstance(x, FollowerProfile):
        return x.x
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class GradientField:
    """Stacked own-block payoff gradients D(y, x) of all followers."""

    spec: GameSpec

    def evaluate(self, y, x):
        x = _as_x(x)
        slices = block_slices(self.spec)
        out = np.empty(self.spec.n)
        for i, (fo, sl) in enumerate(zip(self.spec.followers, slices)):
            g = np.atleast_1d(np.asarray(fo.grad_own(y, x), dtype=float))
            want = sl.stop - sl.start
            if g.shape != (want,):
                raise GameConfigError(
                    f"follower {i} gradient has shape {g.shape}, expected ({want},)")
            out[sl] = g
        return out

    def jacobian_x(self, y, x):
        """d D / d x, rows follow the block layout of D."""
        x = _as_x(x)
        slices = block_slices(self.spec)
        out = np.empty((self.spec.n, self.spec.n))
        for i, (fo, sl) in enumerate(zip(self.spec.followers, slices)):
            h = np.asarray(fo.hess_x_own(y, x), dtype=float)
            want = (sl.stop - sl.start, self.spec.n)
            if h.shape != want:
                raise GameConfigError(
                    f"follower {i} x-Hessian has shape {h.shape}, expected {want}")
            out[sl] = h
        return out

    def jacobian_y(self, y, x):
        """d D / d y."""
        x = _as_x(x)
        slices = block_slices(self.spec)
        out = np.empty((self.spec.n, self.spec.n_leader))
        for i, (fo, sl) in enumerate(zip(self.spec.followers, slices)):
            h = np.asarray(fo.hess_y_own(y, x), dtype=float)
            want = (sl.stop - sl.start, self.spec.n_leader)
            if h.shape != want:
                raise GameConfigError(
                    f"follower {i} y-Hessian has shape {h.shape}, expected {want}")
            out[sl] = h
        return out


def assemble_gradient_field(spec):
    """Bundle the followers' own-block gradients into one stacked field."""
    return GradientField(spec)


def lipschitz_estimate(field, y, x0, iters=40):
    """Power-iteration estimate of the Lipschitz constant of D in x."""
    J = field.jacobian_x(y, _as_x(x0))
    n = J.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    sigma = 0.0
    for _ in range(iters):
        w = J.T @ (J @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        sigma = np.sqrt(norm / float(np.linalg.norm(v)))
        v = w / norm
    return float(sigma)


# -- feasible sets -----------------------------------------------------------


def _linearize(rows, y, dim, eval_grad, eval_fn, label):
    A = np.zeros((len(rows), dim))
    shift = np.zeros(len(rows))
    for k, c in enumerate(rows):
        x0 = np.zeros(dim)
        g = np.atleast_1d(np.asarray(eval_grad(c, y, x0), dtype=float))
        if g.shape != (dim,):
            raise GameConfigError(
                f"{label} constraint {k} gradient has shape {g.shape}, expected ({dim},)")
        v0 = float(eval_fn(c, y, x0))
        A[k] = g
        shift[k] = -v0
        for probe in (np.full(dim, 0.37), np.linspace(-0.61, 0.61, dim)):
            pred = v0 + g @ probe
            got = float(eval_fn(c, y, probe))
            if abs(pred - got) > 1e-6 * (1.0 + abs(got)):
                raise GameConfigError(
                    f"{label} constraint {k} ({c.label or 'unnamed'}) is not affine; "
                    "supply an explicit set builder")
    return A, shift


def joint_polytope(spec, y):
    """Joint follower feasible set at leader decision y, as a polytope."""
    if spec.follower_set_builder is not None:
        return spec.follower_set_builder(y)
    n = spec.n
    A, b = _linearize(spec.follower_ineq, y, n,
                      lambda c, yy, xx: c.grad_x(yy, xx),
                      lambda c, yy, xx: c.fn(yy, xx), "follower inequality")
    E, f = _linearize(spec.follower_eq, y, n,
                      lambda c, yy, xx: c.grad_x(yy, xx),
                      lambda c, yy, xx: c.fn(yy, xx), "follower equality")
    return ConvexPolytope(n,
                          A=A if A.shape[0] else None, b=b if b.size else None,
                          E=E if E.shape[0] else None, f=f if f.size else None)


def leader_polytope(spec):
    """Leader feasible set as a polytope."""
    if spec.leader_set is not None:
        return spec.leader_set
    m = spec.n_leader
    A, b = _linearize(spec.leader_ineq, None, m,
                      lambda c, _, yy: c.grad(yy),
                      lambda c, _, yy: c.fn(yy), "leader inequality")
    E, f = _linearize(spec.leader_eq, None, m,
                      lambda c, _, yy: c.grad(yy),
                      lambda c, _, yy: c.fn(yy), "leader equality")
    return ConvexPolytope(m,
                          A=A if A.shape[0] else None, b=b if b.size else None,
                          E=E if E.shape[0] else None, f=f if f.size else None)


def check_follower_feasible(spec, y, x, tol=FEAS_TOL):
    """Raise InfeasiblePointError naming the first violated constraint."""
    x = _as_x(x)
    for j, c in enumerate(spec.follower_ineq):
        v = float(c.fn(y, x))
        if v > tol:
            raise InfeasiblePointError(
                f"inequality {j} ({c.label or 'unnamed'}) violated by {v:.3e}",
                index=j, label=c.label)
    for k, c in enumerate(spec.follower_eq):
        v = float(c.fn(y, x))
        if abs(v) > tol:
            raise InfeasiblePointError(
                f"equality {k} ({c.label or 'unnamed'}) off by {v:.3e}",
                index=k, label=c.label)


def follower_slice(spec, y, x, i, poly=None):
    """Feasible set of follower i's own block with the others frozen at x."""
    x = _as_x(x)
    poly = joint_polytope(spec, y) if poly is None else poly
    slices = block_slices(spec)
    idx = np.arange(slices[i].start, slices[i].stop)
    return restrict(poly, idx, x), idx


# -- equilibrium residuals ---------------------------------------------------


@dataclass(frozen=True)
class DeviationSampling:
    """How residual_gne probes unilateral deviations."""

    directions: int = 64
    seed: int = 0
    radius: float = 1.0
    vertex_dim_cap: int = 3


def residual_gne(spec, y, x, sampling=DeviationSampling()):
    """Sampled best-response gap: how much any one follower could gain.

    For each follower the own-block slice of the joint set is probed with
    projected random directions (plus its vertices in low dimension) and the
    payoff improvement over the current point is recorded. Zero within
    sampling error at a generalized Nash point.
    """
    x = _as_x(x)
    check_follower_feasible(spec, y, x)
    poly = joint_polytope(spec, y)
    rng = np.random.default_rng(sampling.seed)
    slices = block_slices(spec)
    worst = 0.0
    for i, fo in enumerate(spec.followers):
        slice_poly, idx = follower_slice(spec, y, x, i, poly=poly)
        xi = x[slices[i]]
        base = float(fo.value(y, x))
        candidates = []
        n_i = xi.size
        if n_i <= sampling.vertex_dim_cap:
            try:
                candidates.extend(vertices(slice_poly))
            except ValueError:
                pass
        dirs = rng.standard_normal((sampling.directions, n_i))
        norms = np.linalg.norm(dirs, axis=1)
        norms[norms == 0] = 1.0
        dirs /= norms[:, None]
        scale = sampling.radius * (1.0 + float(np.linalg.norm(xi)))
        for dvec in dirs:
            candidates.append(project(slice_poly, xi + scale * dvec))
        trial = x.copy()
        for cand in candidates:
            trial[slices[i]] = cand
            gain = float(fo.value(y, trial)) - base
            if gain > worst:
                worst = gain
        trial[slices[i]] = xi
    return worst


def residual_ve(spec, y, x):
    """Variational gap: max over feasible z of D(y,x) @ (z - x), floored at 0.

    Evaluates the inner linear program exactly; returns inf when the set is
    unbounded in the payoff-gradient direction (the gap is then infinite).
    """
    x = _as_x(x)
    check_follower_feasible(spec, y, x)
    field = assemble_gradient_field(spec)
    D = field.evaluate(y, x)
    poly = joint_polytope(spec, y)
    try:
        z = linear_minimize(poly, -D)
    except UnboundedProblemError:
        return float("inf")
    return max(0.0, float(D @ (z - x)))
