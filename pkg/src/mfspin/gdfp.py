"""The Gibbs-de Finetti principle: objective, self-consistency map, solver.

The one-body objective is relative entropy minus energy; its maximum over
the simplex is the thermodynamic pressure.  Stationarity is the classic
self-consistency condition: the maximizer is a fixed point of the map
sending mu to the one-body Gibbs measure of its own cavity field.  The
solver runs a damped fixed-point iteration from a deterministic family of
starting measures; several distinct fixed points indicate a phase
transition and are all reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .interaction import Interaction, ShapeClass, classify_shape
from .simplex import OptimizerError
from .state_space import DiscreteMeasure, relative_entropy


def gdfp_objective(mu: DiscreteMeasure, phi: Interaction) -> float:
    """Relative entropy of mu minus its energy; bounded above by every p(N)."""
    e = phi.energy(mu)
    if math.isinf(e):
        return -math.inf
    return relative_entropy(mu) - e


def gdfp_gradient(mu: DiscreteMeasure, phi: Interaction) -> np.ndarray:
    """Gradient of the one-body objective at an interior measure.

    Component i is -log(mu_i / alpha_i) - 1 - cavity_field(mu)[i]; the
    constant offset is irrelevant after projecting onto zero-sum
    directions.
    """
    if phi.has_infinite:
        raise ValueError("objective gradient requires a finite table")
    w = mu.weights
    if np.any(w <= 0.0):
        raise ValueError("objective gradient requires an interior measure")
    return -np.log(w / mu.space.alpha) - 1.0 - phi.cavity_field(mu)


def self_consistent_map(mu: DiscreteMeasure, phi: Interaction) -> DiscreteMeasure:
    """One-body Gibbs measure of mu's cavity field.

    Weights proportional to alpha_x exp(-cavity_field(mu)[x]); fixed points
    are exactly the stationary points of the one-body objective.
    """
    phi.space.require_compatible(mu.space)
    h = phi.cavity_field(mu)
    logits = np.where(np.isposinf(h), -math.inf, mu.space.log_alpha - h)
    if np.all(np.isneginf(logits)):
        raise ValueError("self-consistency map undefined: all sites have infinite field")
    shift = logits[np.isfinite(logits)].max()
    w = np.where(np.isneginf(logits), 0.0, np.exp(logits - shift))
    return DiscreteMeasure.normalized(mu.space, w)


@dataclass
class GdfpSolution:
    maximizer: DiscreteMeasure
    value: float
    c_star: float                 # (n-1) * energy(maximizer) - value
    residual: float               # sup-norm of maximizer - map(maximizer)
    damping_used: float
    restarts: int
    failed_restarts: int
    iterations: int
    fixed_points: List[DiscreteMeasure] = field(default_factory=list)
    optimal_set: List[DiscreteMeasure] = field(default_factory=list)

    @property
    def fixed_point_count(self) -> int:
        return len(self.fixed_points)

    def to_json_dict(self) -> dict:
        d = {
            "value": self.value,
            "maximizer": self.maximizer.weights.tolist(),
            "c_star": self.c_star,
            "residual": self.residual,
            "damping_used": self.damping_used,
            "restarts": self.restarts,
            "failed_restarts": self.failed_restarts,
            "iterations": self.iterations,
            "fixed_point_count": self.fixed_point_count,
            "optimal_set": [mu.weights.tolist() for mu in self.optimal_set],
        }
        if self.maximizer.space.points is not None:
            d["optimal_barycenters"] = [
                mu.barycenter().tolist() for mu in self.optimal_set
            ]
        return d


def _fixed_point_run(phi, start, damping, tol, max_iter):
    """Damped iteration mu <- (1-theta) mu + theta T(mu) with safeguards.

    The damping is halved when the step norm grows twice in a row, when the
    objective decreases beyond rounding, and when the iterate returns to
    where it stood two steps earlier (the undamped map can 2-cycle for
    strong couplings, and a symmetric 2-cycle keeps both the step norm and
    the objective constant).
    """
    space = phi.space
    mu = DiscreteMeasure.normalized(space, start)
    theta = damping
    g_cur = gdfp_objective(mu, phi)
    prev_step = math.inf
    prev2 = None
    growth = 0
    for it in range(1, max_iter + 1):
        target = self_consistent_map(mu, phi)
        new = DiscreteMeasure.normalized(
            space, (1.0 - theta) * mu.weights + theta * target.weights
        )
        step = float(np.max(np.abs(new.weights - mu.weights)))
        g_new = gdfp_objective(new, phi)
        if g_new < g_cur - 1e-12 and theta > 1e-6:
            theta *= 0.5
            continue
        cycling = (
            prev2 is not None
            and step > tol
            and float(np.max(np.abs(new.weights - prev2))) <= 1e-3 * step
        )
        if cycling and theta > 1e-6:
            theta *= 0.5
            prev2 = None
            continue
        if step > prev_step:
            growth += 1
            if growth >= 2 and theta > 1e-6:
                theta *= 0.5
                growth = 0
        else:
            growth = 0
        prev2 = mu.weights
        mu, g_cur, prev_step = new, g_new, step
        if step <= tol:
            residual = float(
                np.max(np.abs(mu.weights - self_consistent_map(mu, phi).weights))
            )
            return mu, residual, theta, it, True
    residual = float(np.max(np.abs(mu.weights - self_consistent_map(mu, phi).weights)))
    return mu, residual, theta, max_iter, False


def solve_gdfp(
    phi: Interaction,
    *,
    damping: float = 0.5,
    tol: float = 1e-13,
    max_iter: int = 50000,
    restarts: int = 8,
    seed: int = 0,
    cluster_radius: float = 1e-6,
    value_tol: float = 1e-6,
) -> GdfpSolution:
    """Find the self-consistent measures and the one maximizing the objective.

    Starts from the a priori weights, every vertex, and seeded interior
    points; fixed points are clustered at ``cluster_radius`` in sup norm
    before reporting multiplicity.  With a convex energy functional the
    objective is strictly concave, so all restarts must agree on a single
    fixed point.
    """
    if phi.has_infinite:
        raise ValueError("the self-consistent solver requires a finite table")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    space = phi.space
    m = space.m
    starts = [space.alpha.copy()]
    for i in range(m):
        w = np.zeros(m)
        w[i] = 1.0
        starts.append(w)
    rng = np.random.default_rng(seed)
    for _ in range(max(0, restarts)):
        starts.append(rng.dirichlet(np.ones(m)))

    runs = []
    failed = 0
    for x0 in starts:
        mu, residual, theta, its, ok = _fixed_point_run(phi, x0, damping, tol, max_iter)
        if ok:
            runs.append((mu, residual, theta, its))
        else:
            failed += 1
    if not runs:
        raise OptimizerError("no restart of the self-consistent iteration converged")

    reps: List[tuple] = []
    for mu, residual, theta, its in runs:
        merged = False
        for k, (rep, r_res, r_theta, r_its) in enumerate(reps):
            if np.max(np.abs(mu.weights - rep.weights)) <= cluster_radius:
                if residual < r_res:
                    reps[k] = (mu, residual, theta, its)
                merged = True
                break
        if not merged:
            reps.append((mu, residual, theta, its))

    fixed_points = [r[0] for r in reps]
    values = [gdfp_objective(mu, phi) for mu in fixed_points]
    best = max(values)
    optimal = [mu for mu, v in zip(fixed_points, values) if abs(v - best) <= value_tol]
    optimal.sort(key=lambda mu: tuple(mu.weights))
    maximizer = optimal[0]
    rep = next(r for r in reps if r[0] is maximizer)
    value = gdfp_objective(maximizer, phi)
    return GdfpSolution(
        maximizer=maximizer,
        value=value,
        c_star=(phi.n - 1) * phi.energy(maximizer) - value,
        residual=rep[1],
        damping_used=rep[2],
        restarts=len(starts),
        failed_restarts=failed,
        iterations=rep[3],
        fixed_points=fixed_points,
        optimal_set=optimal,
    )


@dataclass
class RegularityCheck:
    name: str
    passed: bool
    detail: str

    def to_json_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class RegularityReport:
    c_star: float
    c_star_bounds: tuple
    density_max: float
    density_bound: float
    residual: float
    checks: List[RegularityCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "c_star": self.c_star,
            "c_star_bounds": list(self.c_star_bounds),
            "density_max": self.density_max,
            "density_bound": self.density_bound,
            "residual": self.residual,
            "all_passed": self.all_passed,
            "checks": [c.to_json_dict() for c in self.checks],
        }


def regularity_report(
    solution: GdfpSolution,
    phi: Interaction,
    *,
    shape: Optional[ShapeClass] = None,
    residual_tol: float = 1e-10,
    rtol: float = 1e-9,
) -> RegularityReport:
    """Check the maximizer's regularity bounds (pair interactions, convex).

    The normalization constant of the self-consistency condition must lie
    in [alpha_energy + lower_bound, 2 * alpha_energy], the density of the
    maximizer is bounded by exp(2 (alpha_energy - lower_bound)), and the
    maximizer charges every site.  Violations are reported, not raised.
    """
    if phi.n != 2:
        raise ValueError("the regularity bounds are stated for pair interactions")
    shape = shape or classify_shape(phi)
    if not shape.is_convex:
        raise ValueError("the regularity bounds require a convex energy functional")

    mu = solution.maximizer
    c_alpha = phi.alpha_energy
    c_phi = phi.lower_bound
    lo, hi = c_alpha + c_phi, 2.0 * c_alpha
    scale = 1.0 + abs(lo) + abs(hi)

    c_direct = phi.energy(mu) - solution.value  # pair-interaction identity
    ent_identity = relative_entropy(mu) - 2.0 * solution.value
    density = mu.density()
    density_bound = math.exp(2.0 * (c_alpha - c_phi))

    checks = [
        RegularityCheck(
            "full_support",
            bool(np.all(mu.weights > 0.0)),
            "maximizer charges every site of positive a priori mass",
        ),
        RegularityCheck(
            "c_star_bounds",
            lo - rtol * scale <= solution.c_star <= hi + rtol * scale,
            f"c_star={solution.c_star:.12g} within [{lo:.12g}, {hi:.12g}]",
        ),
        RegularityCheck(
            "c_star_energy_identity",
            abs(solution.c_star - c_direct) <= 1e-8 * scale,
            "c_star equals energy(maximizer) minus the value",
        ),
        RegularityCheck(
            "c_star_entropy_identity",
            abs(solution.c_star - ent_identity) <= 1e-8 * scale,
            "c_star equals entropy(maximizer) minus twice the value",
        ),
        RegularityCheck(
            "density_bound",
            bool(np.max(density) <= density_bound * (1.0 + rtol)),
            f"max density {np.max(density):.12g} <= exp(2(C_alpha - C_phi)) = {density_bound:.12g}",
        ),
        RegularityCheck(
            "fixed_point_residual",
            solution.residual <= residual_tol,
            f"self-consistency residual {solution.residual:.3e} <= {residual_tol:.1e}",
        ),
    ]
    return RegularityReport(
        c_star=solution.c_star,
        c_star_bounds=(lo, hi),
        density_max=float(np.max(density)),
        density_bound=density_bound,
        residual=solution.residual,
        checks=checks,
    )
