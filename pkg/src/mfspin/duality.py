"""Joint Lagrangian linking the two variational principles, and a saddle audit.

The Lagrangian L(mu, nu) = entropy(mu) - energy(nu) - <cavity_field(nu),
mu - nu> is concave in mu and, for convex pair energies, convex in nu.
Maximizing over mu gives the EVP objective of nu (a one-body Gibbs
variational formula); minimizing over nu gives the GdFP objective of mu,
attained on the diagonal.  The saddle audit computes both optima over a
density-capped class independently and checks that max-min equals min-max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .evp import evp_objective, minimize_evp_capped
from .gdfp import gdfp_gradient, gdfp_objective, self_consistent_map
from .interaction import Interaction, ShapeClass, classify_shape
from .simplex import OptimizerError, mirror_opt, project_capped_simplex
from .state_space import DiscreteMeasure, relative_entropy


def lagrangian(mu: DiscreteMeasure, nu: DiscreteMeasure, phi: Interaction) -> float:
    """entropy(mu) - energy(nu) - <cavity_field(nu), mu - nu>.

    Equals entropy(mu) + (n-1) energy(nu) - <cavity_field(nu), mu> by the
    Euler identity for the n-linear energy.  An indeterminate inf - inf
    combination is rejected with the offending terms named.
    """
    phi.space.require_compatible(mu.space)
    phi.space.require_compatible(nu.space)
    s = relative_entropy(mu)
    e = phi.energy(nu)
    d = phi.first_derivative(nu, mu)
    terms = (phi.n - 1) * e - d if not (math.isinf(e) or math.isinf(d)) else None
    if terms is None:
        if math.isinf(e) and math.isinf(d):
            raise ValueError(
                "Lagrangian indeterminate: energy(nu) and the cavity term are both infinite"
            )
        return math.inf if math.isinf(e) else -math.inf
    return s + terms


def maximize_over_mu(nu: DiscreteMeasure, phi: Interaction) -> Tuple[float, DiscreteMeasure]:
    """Closed-form inner maximum of the Lagrangian over mu.

    The mu-part is a one-body Gibbs variational problem for the cavity
    field of nu: the maximizer has weights proportional to
    alpha_x exp(-cavity_field(nu)[x]) and the value is the EVP objective.
    """
    return evp_objective(nu, phi), self_consistent_map(nu, phi)


def minimize_over_nu(
    mu: DiscreteMeasure, phi: Interaction, *, shape: Optional[ShapeClass] = None
) -> Tuple[float, DiscreteMeasure]:
    """Inner minimum of the Lagrangian over nu, attained on the diagonal.

    Requires a convex energy functional: the first-order expansion then
    under-estimates the energy, so nu = mu is optimal and the value is the
    GdFP objective.  (With a concave energy the same point is the inner
    maximum instead.)
    """
    shape = shape or classify_shape(phi)
    if not shape.is_convex:
        raise ValueError(
            "inner minimization over nu needs a convex energy functional; "
            "for concave energies the diagonal attains the inner maximum"
        )
    return gdfp_objective(mu, phi), mu


@dataclass
class SaddleAudit:
    maxmin: float                     # max over capped mu of the GdFP objective
    minmax: float                     # min over capped nu of the EVP objective
    gap: float                        # minmax - maxmin
    candidate_mu: DiscreteMeasure
    candidate_nu: DiscreteMeasure
    partial_max_gap: float            # inner-max optimality defect at the candidate
    partial_min_gap: float            # inner-min optimality defect at the candidate
    cap_exponent: float
    maxmin_iterations: int
    minmax_iterations: int
    tolerance: float

    @property
    def passed(self) -> bool:
        scale = 1.0 + abs(self.maxmin)
        return (
            self.gap >= -1e-9 * scale
            and abs(self.gap) <= self.tolerance * scale
            and self.partial_max_gap <= self.tolerance * scale
            and self.partial_min_gap <= self.tolerance * scale
        )

    def to_json_dict(self) -> dict:
        return {
            "maxmin": self.maxmin,
            "minmax": self.minmax,
            "gap": self.gap,
            "candidate_mu": self.candidate_mu.weights.tolist(),
            "candidate_nu": self.candidate_nu.weights.tolist(),
            "partial_max_gap": self.partial_max_gap,
            "partial_min_gap": self.partial_min_gap,
            "cap_exponent": self.cap_exponent,
            "maxmin_iterations": self.maxmin_iterations,
            "minmax_iterations": self.minmax_iterations,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _maximize_gdfp_capped(phi, caps, tol, max_iter, seed):
    space = phi.space

    def f(x):
        return gdfp_objective(DiscreteMeasure.normalized(space, x), phi)

    def grad(x):
        return gdfp_gradient(DiscreteMeasure.normalized(space, x), phi)

    rng = np.random.default_rng(seed)
    starts = [space.alpha.copy(), np.full(space.m, 1.0 / space.m),
              rng.dirichlet(np.ones(space.m))]
    best = None
    for x0 in starts:
        res = mirror_opt(f, grad, project_capped_simplex(x0, caps), maximize=True,
                         caps=caps, tol=tol, max_iter=max_iter)
        if best is None or res.value > best.value:
            best = res
    if best is None or not best.converged:
        raise OptimizerError("capped objective maximization did not converge")
    return best


def saddle_audit(
    phi: Interaction,
    cap_exponent: float,
    *,
    shape: Optional[ShapeClass] = None,
    tolerance: float = 1e-6,
    tol: float = 1e-11,
    max_iter: int = 20000,
    seed: int = 0,
) -> SaddleAudit:
    """Audit the minimax identity on the density-capped class.

    Computes max-min (capped maximization of the GdFP objective) and
    min-max (capped minimization of the EVP objective) independently and
    reports the gap, which the minimax theorem predicts to vanish.  The
    candidate saddle point is the capped maximizer taken for both
    variables; its two partial-optimality defects are probed numerically.
    """
    if phi.n != 2:
        raise ValueError("the saddle audit is defined for pair interactions")
    if cap_exponent < 0.0:
        raise ValueError("cap exponent must be nonnegative")
    shape = shape or classify_shape(phi)
    if not shape.is_convex:
        raise ValueError("the saddle audit requires a convex energy functional")
    space = phi.space
    caps = math.exp(cap_exponent) * space.alpha

    gd = _maximize_gdfp_capped(phi, caps, tol, max_iter, seed)
    mu_hat = DiscreteMeasure.normalized(space, gd.x)
    maxmin = gdfp_objective(mu_hat, phi)

    ev = minimize_evp_capped(phi, cap_exponent, shape=shape, tol=tol,
                             max_iter=max_iter, seed=seed)
    minmax = ev.value

    # partial optimality of the candidate (mu_hat, mu_hat)
    base = lagrangian(mu_hat, mu_hat, phi)
    h = phi.cavity_field(mu_hat)
    const = (phi.n - 1) * phi.energy(mu_hat)

    def f_mu(x):
        mu = DiscreteMeasure.normalized(space, x)
        return relative_entropy(mu) - float(h @ mu.weights) + const

    def grad_mu(x):
        return -np.log(np.maximum(x, 1e-300) / space.alpha) - 1.0 - h

    inner_max = mirror_opt(f_mu, grad_mu, project_capped_simplex(space.alpha.copy(), caps),
                           maximize=True, caps=caps, tol=tol, max_iter=max_iter)

    def f_nu(x):
        return lagrangian(mu_hat, DiscreteMeasure.normalized(space, x), phi)

    def grad_nu(x):
        nu = DiscreteMeasure.normalized(space, x)
        K = phi.pair_field(nu)
        # d/dnu [ (n-1) energy(nu) - <field(nu), mu> ] for the pair case
        return (phi.n - 1) * phi.cavity_field(nu) - K @ mu_hat.weights

    inner_min = mirror_opt(f_nu, grad_nu, project_capped_simplex(space.alpha.copy(), caps),
                           maximize=False, caps=caps, tol=tol, max_iter=max_iter)

    return SaddleAudit(
        maxmin=maxmin,
        minmax=minmax,
        gap=minmax - maxmin,
        candidate_mu=mu_hat,
        candidate_nu=mu_hat,
        partial_max_gap=abs(inner_max.value - base),
        partial_min_gap=abs(base - inner_min.value),
        cap_exponent=cap_exponent,
        maxmin_iterations=gd.iterations,
        minmax_iterations=ev.iterations,
        tolerance=tolerance,
    )
