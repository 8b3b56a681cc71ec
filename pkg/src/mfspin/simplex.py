"""Optimization utilities on the probability simplex.

Exponentiated-gradient (mirror) ascent with backtracking, and the KL
projection onto a density-capped simplex (cap the offenders, redistribute
the remaining mass proportionally, repeat).  Iterates stay strictly inside
the simplex, where the objectives used in this package are smooth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_WEIGHT_FLOOR = 1e-300  # keep multiplicative iterates representable


class OptimizerError(RuntimeError):
    """No restart of an optimizer reached its stationarity tolerance."""


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    grad_norm: float


def project_capped_simplex(raw: np.ndarray, caps: Optional[np.ndarray]) -> np.ndarray:
    """Scale nonnegative weights onto the simplex subject to weights <= caps.

    Computes the unique vector min(t * raw, caps) with total mass 1 by
    repeatedly capping the coordinates that overflow and rescaling the
    rest.  Zero raw weights stay zero.
    """
    w = np.asarray(raw, dtype=float)
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("raw weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0.0:
        raise ValueError("raw weights must carry positive mass")
    if caps is None:
        return w / total
    caps = np.asarray(caps, dtype=float)
    if np.sum(caps) < 1.0 - 1e-12:
        raise ValueError("caps are infeasible: they sum to less than 1")
    out = np.zeros_like(w)
    active = w > 0.0
    budget = 1.0
    for _ in range(w.size):
        scale = budget / w[active].sum()
        trial = scale * w
        overflow = active & (trial >= caps)
        if not np.any(overflow):
            out[active] = trial[active]
            return out
        out[overflow] = caps[overflow]
        budget -= caps[overflow].sum()
        active &= ~overflow
        if not np.any(active):
            # all coordinates capped; feasibility forces budget ~ 0
            return out
        budget = max(budget, 0.0)
    out[active] = budget * w[active] / w[active].sum()
    return out


def stationarity_residual(
    x: np.ndarray, grad: np.ndarray, caps: Optional[np.ndarray], maximize: bool
) -> float:
    """Sup-norm of the mirror gradient, with capped coordinates excused.

    Without caps the mirror gradient x * (grad - <x, grad>) vanishes
    exactly at stationary points.  With caps, the simplex multiplier is
    carried by the uncapped coordinates alone; a capped coordinate only
    violates optimality when it wants to move back inside (its gradient
    falls below the multiplier on ascent, or rises above it on descent).
    """
    if caps is None:
        lam = float(x @ grad)
        return float(np.max(np.abs(x * (grad - lam))))
    at_cap = x >= caps * (1.0 - 1e-12)
    free = ~at_cap
    free_mass = float(x[free].sum()) if np.any(free) else 0.0
    if free_mass <= 0.0:
        return 0.0  # every coordinate pinned: no feasible direction
    lam = float(x[free] @ grad[free]) / free_mass
    r = x * (grad - lam)
    if maximize:
        r = np.where(at_cap, np.minimum(r, 0.0), r)
    else:
        r = np.where(at_cap, np.maximum(r, 0.0), r)
    return float(np.max(np.abs(r)))


def mirror_opt(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    *,
    maximize: bool,
    caps: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 5000,
    step0: float = 1.0,
) -> OptResult:
    """Exponentiated-gradient ascent/descent with backtracking line search.

    Updates are x <- project(x * exp(eta * s * grad)), s = +-1.  A step is
    accepted when it does not worsen the objective beyond float resolution;
    strict improvements grow eta, rejections halve it inside the line
    search, and a stalling residual halves it across iterations.  The
    tiny-slack acceptance matters near the optimum, where the objective is
    flat to machine precision but the gradient residual still contracts.
    Convergence is declared when the feasible mirror-gradient residual
    drops below ``tol``.
    """
    sgn = 1.0 if maximize else -1.0
    x = project_capped_simplex(np.maximum(np.asarray(x0, dtype=float), 0.0), caps)
    f = objective(x)
    eta = step0
    best_res = math.inf
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        g = gradient(x)
        res = stationarity_residual(x, g, caps, maximize)
        if res <= tol:
            return OptResult(x, objective(x), it - 1, True, res)
        if res < 0.999 * best_res:
            best_res = res
            stall = 0
        else:
            stall += 1
            if stall >= 25:
                eta = max(eta * 0.5, 1e-18)
                stall = 0
        slack = 1e-14 * (1.0 + abs(f))
        accepted = False
        improved = False
        e = eta
        while e > 1e-18:
            logits = np.log(np.maximum(x, _WEIGHT_FLOOR)) + e * sgn * g
            logits -= logits.max()
            xn = project_capped_simplex(np.maximum(np.exp(logits), 0.0), caps)
            fn = objective(xn)
            gain = (fn - f) if maximize else (f - fn)
            if gain >= -slack:
                accepted = True
                improved = gain > slack
                break
            e *= 0.5
        if not accepted:
            # no admissible step at machine scale: report honestly
            return OptResult(x, f, it, res <= tol, res)
        x, f = xn, fn
        eta = min(e * 1.5, 1e6) if improved else e
    g = gradient(x)
    res = stationarity_residual(x, g, caps, maximize)
    return OptResult(x, f, max_iter, res <= tol, res)
