"""The extended variational principle: objective, cavity functionals, solvers.

The EVP objective of a trial measure nu is

    (n - 1) * energy(nu) + log sum_x alpha_x exp(-cavity_field(nu)[x]);

minimizing it over the simplex gives the thermodynamic pressure when the
energy functional is convex (maximizing when concave).  The cavity
functionals evaluate the same comparison on finitely supported measures
over measures and bound every finite-N empirical pressure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exact import (
    empirical_hamiltonian_values,
    log_multinomial,
    occupancy_cap,
    occupancy_count,
    occupancy_vectors,
)
from .interaction import Interaction, ShapeClass, classify_shape
from .simplex import OptimizerError, OptResult, mirror_opt, project_capped_simplex
from .state_space import CapExceededError, DiscreteMeasure, log_mean_exp


class AtomicMetaMeasure:
    """Finitely supported positive measure on one-body measures.

    Atoms are (weight, measure) pairs with strictly positive weights; the
    total mass may be any positive number, since the cavity functionals are
    homogeneous of degree 0 under rescaling all weights.
    """

    def __init__(self, atoms: Sequence[Tuple[float, DiscreteMeasure]]):
        atoms = [(float(w), nu) for w, nu in atoms]
        if not atoms:
            raise ValueError("an atomic measure needs at least one atom")
        if any(w <= 0.0 or not math.isfinite(w) for w, _ in atoms):
            raise ValueError("atom weights must be positive and finite")
        space = atoms[0][1].space
        for _, nu in atoms[1:]:
            space.require_compatible(nu.space)
        self.atoms = tuple(atoms)
        self.space = space

    @classmethod
    def dirac(cls, nu: DiscreteMeasure) -> "AtomicMetaMeasure":
        return cls([(1.0, nu)])

    @property
    def total_mass(self) -> float:
        return sum(w for w, _ in self.atoms)

    def scaled(self, t: float) -> "AtomicMetaMeasure":
        if t <= 0.0:
            raise ValueError("scale factor must be positive")
        return AtomicMetaMeasure([(t * w, nu) for w, nu in self.atoms])

    def __len__(self) -> int:
        return len(self.atoms)


def evp_objective(nu: DiscreteMeasure, phi: Interaction) -> float:
    """(n-1) * energy(nu) + log of the a priori mean of exp(-cavity field).

    With infinite couplings the energy term may be +inf, which dominates;
    +inf field entries contribute zero mass to the log term.
    """
    e = phi.energy(nu)
    if math.isinf(e):
        return math.inf
    h = phi.cavity_field(nu)
    exponents = np.where(np.isposinf(h), -math.inf, -h)
    if np.all(np.isneginf(exponents)):
        raise ValueError("EVP objective undefined: every site has infinite cavity field")
    return (phi.n - 1) * e + log_mean_exp(exponents, phi.space.alpha)


def evp_gradient(nu: DiscreteMeasure, phi: Interaction) -> np.ndarray:
    """Analytic gradient of the EVP objective at an interior measure.

    Component j is (n-1) * h[j] minus the pair field contracted with the
    one-body Gibbs weights proportional to alpha_x exp(-h[x]).
    """
    if phi.has_infinite:
        raise ValueError("EVP gradient requires a finite table")
    if np.any(nu.weights <= 0.0):
        raise ValueError("EVP gradient requires an interior measure")
    h = phi.cavity_field(nu)
    logits = phi.space.log_alpha - h
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    K = phi.pair_field(nu)
    return (phi.n - 1) * h - K @ p


def _atom_logs(rho: AtomicMetaMeasure, phi: Interaction):
    log_w = np.array([math.log(w) for w, _ in rho.atoms])
    log_A = np.empty(len(rho))
    energies = np.empty(len(rho))
    for j, (_, nu) in enumerate(rho.atoms):
        h = phi.cavity_field(nu)
        log_A[j] = log_mean_exp(-h, phi.space.alpha)
        energies[j] = phi.energy(nu)
    return log_w, log_A, energies


@dataclass
class CavityValues:
    g1: float
    g2: float
    total: float


def cavity_values(rho: AtomicMetaMeasure, N: int, phi: Interaction) -> CavityValues:
    """Cavity functionals for adding N particles to a large system.

    For atomic rho the inner N-body integral factorizes: the cavity field
    is affine in the empirical measure, so integrating exp(-N * field
    energy) over the product of a priori weights gives A(nu)**N per atom,
    with A(nu) the a priori mean of exp(-cavity field).  The second
    functional weighs each atom by exp(-N (n-1) energy(nu)); the difference
    of the two log-averages is the cavity bound on the empirical pressure.
    """
    if N < 1:
        raise ValueError("body count N must be at least 1")
    if phi.has_infinite:
        raise ValueError("cavity functionals require a finite table")
    phi.space.require_compatible(rho.space)
    log_w, log_A, energies = _atom_logs(rho, phi)
    ones = np.ones(len(rho))
    g1 = log_mean_exp(log_w + N * log_A, ones) / N
    g2 = log_mean_exp(log_w - N * (phi.n - 1) * energies, ones) / N
    return CavityValues(g1, g2, g1 - g2)


def pushforward_cavity(M: int, N: int, phi: Interaction,
                       cap: Optional[int] = None) -> Tuple[float, float]:
    """Cavity functionals of the M-particle trial measure from the EVP limit.

    The trial measure is the push-forward, under the empirical-measure map,
    of the density exp(-(M/(M+N)) * empirical Hamiltonian) on the M-body
    product space.  Both functionals reduce to exact occupancy sums; they
    approach (M+N)/N * p~(M+N) and M/N * p~(M) respectively as M grows.
    """
    if M < 1 or N < 1:
        raise ValueError("body counts must be at least 1")
    if phi.has_infinite:
        raise ValueError("push-forward cavity requires a finite table")
    m = phi.space.m
    count = occupancy_count(M, m)
    limit = occupancy_cap(cap)
    if count > limit:
        raise CapExceededError(
            f"M={M}, m={m} needs {count} occupancy classes, above the cap {limit}"
        )
    occs = occupancy_vectors(M, m)
    X = occs / float(M)
    energies = phi.energy_rows(X)
    fields = phi.cavity_field_rows(X)
    log_A = np.array(
        [log_mean_exp(-fields[r], phi.space.alpha) for r in range(occs.shape[0])]
    )
    base = (
        log_multinomial(occs)
        + occs @ phi.space.log_alpha
        - (M * M / (M + N)) * energies
    )
    ones = np.ones(occs.shape[0])
    g1 = log_mean_exp(base + N * log_A, ones) / N
    g2 = log_mean_exp(base - N * (phi.n - 1) * energies, ones) / N
    return g1, g2


# ----------------------------------------------------------------------
# optimizers
# ----------------------------------------------------------------------
@dataclass
class EvpSolution:
    minimizer: DiscreteMeasure      # best trial measure (minimizer or maximizer)
    value: float
    shape: str
    iterations: int
    restarts: int
    failed_restarts: int
    stationarity_norm: float
    stationary_points: List[DiscreteMeasure] = field(default_factory=list)
    optimal_set: List[DiscreteMeasure] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        d = {
            "value": self.value,
            "minimizer": self.minimizer.weights.tolist(),
            "shape": self.shape,
            "iterations": self.iterations,
            "restarts": self.restarts,
            "failed_restarts": self.failed_restarts,
            "stationarity_norm": self.stationarity_norm,
            "optimal_set": [nu.weights.tolist() for nu in self.optimal_set],
            "stationary_point_count": len(self.stationary_points),
        }
        if self.minimizer.space.points is not None:
            d["optimal_barycenters"] = [
                nu.barycenter().tolist() for nu in self.optimal_set
            ]
        return d


def _start_points(space, restarts: int, seed: int, vertex_eps: float = 1e-3):
    m = space.m
    starts = [np.asarray(space.alpha, dtype=float), np.full(m, 1.0 / m)]
    uniform = np.full(m, 1.0 / m)
    for i in range(m):
        w = vertex_eps * uniform.copy()
        w[i] += 1.0 - vertex_eps
        starts.append(w / w.sum())
    rng = np.random.default_rng(seed)
    for _ in range(max(0, restarts)):
        starts.append(rng.dirichlet(np.ones(m)))
    return starts


def _cluster(points: List[np.ndarray], radius: float) -> List[np.ndarray]:
    reps: List[np.ndarray] = []
    for x in points:
        if not any(np.max(np.abs(x - r)) <= radius for r in reps):
            reps.append(x)
    return reps


def solve_evp(
    phi: Interaction,
    *,
    shape: Optional[ShapeClass] = None,
    restarts: int = 8,
    tol: float = 1e-11,
    max_iter: int = 20000,
    seed: int = 0,
    cluster_radius: float = 1e-6,
    value_tol: float = 1e-6,
) -> EvpSolution:
    """Optimize the EVP objective over the simplex.

    Convex energy: a single-valley minimization; every restart must agree.
    Concave energy: maximization with deterministic multi-start; all
    distinct local maximizers are reported, since several of them signal a
    phase transition.  Restarts that hit the iteration limit without
    reaching stationarity are counted, not hidden.
    """
    if phi.has_infinite:
        raise ValueError("unconstrained EVP optimization requires a finite table")
    shape = shape or classify_shape(phi)
    if shape.kind == "neither":
        raise ValueError("EVP optimization needs a convex or concave energy functional")
    maximize = shape.kind == "concave"
    space = phi.space

    def f(x):
        return evp_objective(DiscreteMeasure.normalized(space, x), phi)

    def grad(x):
        return evp_gradient(DiscreteMeasure.normalized(space, x), phi)

    results: List[OptResult] = []
    failed = 0
    starts = _start_points(space, restarts, seed)
    for x0 in starts:
        res = mirror_opt(f, grad, x0, maximize=maximize, tol=tol, max_iter=max_iter)
        if res.converged:
            results.append(res)
        else:
            failed += 1
    if not results:
        raise OptimizerError("no EVP restart reached stationarity")

    stationary = _cluster([r.x for r in results], cluster_radius)
    stationary_measures = [DiscreteMeasure.normalized(space, x) for x in stationary]
    values = [evp_objective(nu, phi) for nu in stationary_measures]
    best = max(values) if maximize else min(values)
    optimal = [
        nu for nu, v in zip(stationary_measures, values) if abs(v - best) <= value_tol
    ]
    optimal.sort(key=lambda nu: tuple(nu.weights))
    minimizer = optimal[0]
    best_res = min(
        (r for r in results
         if np.max(np.abs(r.x - minimizer.weights)) <= 10 * cluster_radius),
        key=lambda r: r.grad_norm,
        default=results[0],
    )
    return EvpSolution(
        minimizer=minimizer,
        value=evp_objective(minimizer, phi),
        shape=shape.kind,
        iterations=best_res.iterations,
        restarts=len(starts),
        failed_restarts=failed,
        stationarity_norm=best_res.grad_norm,
        stationary_points=stationary_measures,
        optimal_set=optimal,
    )


@dataclass
class CappedEvpResult:
    value: float
    minimizer: DiscreteMeasure
    cap_exponent: float
    iterations: int
    converged: bool
    stationarity_norm: float

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "minimizer": self.minimizer.weights.tolist(),
            "cap_exponent": self.cap_exponent,
            "iterations": self.iterations,
            "converged": self.converged,
            "stationarity_norm": self.stationarity_norm,
        }


def minimize_evp_capped(
    phi: Interaction,
    cap_exponent: float,
    *,
    shape: Optional[ShapeClass] = None,
    tol: float = 1e-11,
    max_iter: int = 20000,
    seed: int = 0,
) -> CappedEvpResult:
    """Minimize the EVP objective over densities bounded by exp(cap_exponent).

    Pair interactions with a convex energy functional only.  The feasible
    set {nu : nu_i <= exp(C) alpha_i} shrinks as C decreases, so the value
    is monotone nonincreasing in C; once the cap admits the self-consistent
    maximizer, the value equals the unconstrained optimum.
    """
    if phi.n != 2:
        raise ValueError("the capped EVP extension is defined for pair interactions")
    if cap_exponent < 0.0:
        raise ValueError("cap exponent must be nonnegative (densities cannot all be < 1)")
    if shape is None:
        shape = classify_shape(phi)
    if not shape.is_convex:
        raise ValueError("the capped EVP extension requires a convex energy functional")
    space = phi.space
    caps = math.exp(cap_exponent) * space.alpha

    def f(x):
        return evp_objective(DiscreteMeasure.normalized(space, x), phi)

    def grad(x):
        return evp_gradient(DiscreteMeasure.normalized(space, x), phi)

    best: Optional[OptResult] = None
    rng = np.random.default_rng(seed)
    starts = [space.alpha.copy(), np.full(space.m, 1.0 / space.m)]
    starts.append(rng.dirichlet(np.ones(space.m)))
    for x0 in starts:
        x0 = project_capped_simplex(x0, caps)
        res = mirror_opt(f, grad, x0, maximize=False, caps=caps,
                         tol=tol, max_iter=max_iter)
        if best is None or res.value < best.value:
            best = res
    if best is None or not best.converged:
        raise OptimizerError("capped EVP minimization did not reach stationarity")
    nu = DiscreteMeasure.normalized(space, best.x)
    return CappedEvpResult(
        value=evp_objective(nu, phi),
        minimizer=nu,
        cap_exponent=cap_exponent,
        iterations=best.iterations,
        converged=best.converged,
        stationarity_norm=best.grad_norm,
    )
