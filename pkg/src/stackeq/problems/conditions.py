"""Sampling-based check of the equilibrium existence conditions.

Evidence, not proof: estimates the strong-monotonicity constant of the
negated gradient field, checks per-follower concavity at samples, and
probes convexity of the joint constraints along segments. A clean report
is what justifies trusting the variational equilibrium as the followers'
solution concept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..game import assemble_gradient_field, block_slices, joint_polytope
from ..pigd import default_leader_start
from ..polytopes import project


@dataclass(frozen=True)
class ConditionsReport:
    monotonicity_estimate: float   # smallest sampled curvature of -D
    monotone: bool
    concave: bool
    max_concavity_violation: float
    jointly_convex: bool
    details: Tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.monotone and self.concave and self.jointly_convex


def check_existence_conditions(spec, samples: int = 50,
                               seed: int = 0) -> ConditionsReport:
    rng = np.random.default_rng(seed)
    y = default_leader_start(spec)
    poly = joint_polytope(spec, y)
    field = assemble_gradient_field(spec)
    base = project(poly, np.zeros(spec.n))
    scale = 1.0 + float(np.linalg.norm(base))
    pts = [project(poly, base + scale * rng.standard_normal(spec.n))
           for _ in range(max(2, samples))]
    details = []

    mono = np.inf
    for a, b in zip(pts[:-1], pts[1:]):
        diff = a - b
        nrm2 = float(diff @ diff)
        if nrm2 < 1e-16:
            continue
        gap = float((-field.evaluate(y, a) + field.evaluate(y, b)) @ diff)
        mono = min(mono, gap / nrm2)
    if not np.isfinite(mono):
        mono = 0.0
    monotone = mono > 1e-9
    if not monotone:
        details.append(
            f"monotonicity estimate {mono:.3e} is not positive; the "
            "equilibrium may be non-unique")

    worst_eig = -np.inf
    for x in pts[: min(len(pts), 10)]:
        for i, sl in enumerate(block_slices(spec)):
            h = np.asarray(spec.followers[i].hess_x_own(y, x),
                           dtype=float)[:, sl]
            hs = 0.5 * (h + h.T)
            top = float(np.linalg.eigvalsh(hs).max())
            if top > worst_eig:
                worst_eig = top
            if top > 1e-9:
                details.append(
                    f"follower {i} payoff is not concave at a sample "
                    f"(max curvature {top:.3e})")
    concave = worst_eig <= 1e-9

    convex = True
    rows = list(spec.follower_ineq) + list(spec.follower_eq)
    n_ineq = len(spec.follower_ineq)
    for a, b in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (a + b)
        for j, c in enumerate(rows):
            lhs = float(c.fn(y, mid))
            avg = 0.5 * (float(c.fn(y, a)) + float(c.fn(y, b)))
            viol = lhs - avg if j < n_ineq else abs(lhs - avg)
            if viol > 1e-9:
                convex = False
                details.append(
                    f"constraint {c.label or j} fails midpoint convexity "
                    f"by {viol:.3e}")
        if not convex:
            break
    return ConditionsReport(
        monotonicity_estimate=float(mono), monotone=monotone,
        concave=concave, max_concavity_violation=float(worst_eig),
        jointly_convex=convex, details=tuple(details))
