"""Exact finite-N pressures by occupancy-number enumeration.

The N-body partition sum over the m**N product configurations collapses to
a sum over occupancy vectors (per-site particle counts), because symmetric
Hamiltonians are constant on exchangeability classes.  Each class carries
multinomial(N; counts) configurations, an a priori weight prod alpha_i**k_i,
and a Hamiltonian value computed from the counts alone.  All partition sums
run in the log domain with a single max shift; log-multinomials come from
log-gamma.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .interaction import Interaction, ShapeClass, classify_shape
from .state_space import (
    CapExceededError,
    DenseProductMeasure,
    DiscreteMeasure,
    OccupancyVector,
    log_mean_exp,
    relative_entropy_dense,
)

DEFAULT_OCCUPANCY_CAP = 10 ** 7
OCCUPANCY_CAP_ENV = "MFS_OCCUPANCY_CAP"


def occupancy_cap(override: Optional[int] = None) -> int:
    if override is not None:
        return int(override)
    env = os.environ.get(OCCUPANCY_CAP_ENV)
    return int(env) if env else DEFAULT_OCCUPANCY_CAP


def occupancy_count(N: int, m: int) -> int:
    return math.comb(N + m - 1, m - 1)


def occupancy_vectors(N: int, m: int) -> np.ndarray:
    """All per-site count vectors summing to N, lexicographically ascending."""
    if m == 1:
        return np.array([[N]], dtype=np.int64)
    blocks = []
    for k in range(N + 1):
        rest = occupancy_vectors(N - k, m - 1)
        first = np.full((rest.shape[0], 1), k, dtype=np.int64)
        blocks.append(np.hstack([first, rest]))
    return np.vstack(blocks)


def log_multinomial(occs: np.ndarray) -> np.ndarray:
    """log N! / prod k_i! for each occupancy row."""
    occs = np.asarray(occs)
    N = occs.sum(axis=1)
    return gammaln(N + 1.0) - gammaln(occs + 1.0).sum(axis=1)


def _species_patterns(n: int, m: int) -> np.ndarray:
    """Ways to split n interacting bodies among m species (counts per site)."""
    return occupancy_vectors(n, m)


def hamiltonian_values(occs: np.ndarray, phi: Interaction) -> np.ndarray:
    """Standard Hamiltonian on each occupancy row (distinct-body sums).

    H(k) = N * C(N,n)^-1 * sum_t prod_i C(k_i, t_i) * table[t], where t
    runs over splits of the n bodies among the m species with t_i <= k_i.
    """
    occs = np.asarray(occs, dtype=np.int64)
    R, m = occs.shape
    n = phi.n
    N = int(occs[0].sum())
    if N < n:
        raise ValueError(f"standard Hamiltonian needs N >= n (got N={N}, n={n})")
    if not np.all(occs.sum(axis=1) == N):
        raise ValueError("occupancy rows must share one body count")
    # binomial table C(k, t): integers up to C(N, n), exact in doubles
    kk = np.arange(N + 1, dtype=float)
    B = np.ones((N + 1, n + 1))
    for t in range(1, n + 1):
        B[:, t] = B[:, t - 1] * (kk - (t - 1)) / t
    B = np.maximum(B, 0.0)

    acc = np.zeros(R)
    inf_hit = np.zeros(R, dtype=bool)
    for t in _species_patterns(n, m):
        weight = np.ones(R)
        for i in range(m):
            weight *= B[occs[:, i], t[i]]
        idx = tuple(np.repeat(np.arange(m), t))
        val = float(phi.table[idx])
        if math.isinf(val):
            inf_hit |= weight > 0.0
        else:
            acc += weight * val
    coeff = N / math.comb(N, n)
    H = coeff * acc
    H[inf_hit] = math.inf
    return H


def empirical_hamiltonian_values(occs: np.ndarray, phi: Interaction) -> np.ndarray:
    """Hamiltonian through the empirical measure: N * energy(counts / N)."""
    occs = np.asarray(occs, dtype=float)
    N = float(occs[0].sum())
    return N * phi.energy_rows(occs / N)


def _as_occupancy(occupancy, m: int) -> OccupancyVector:
    if not isinstance(occupancy, OccupancyVector):
        occupancy = OccupancyVector(tuple(occupancy))
    if len(occupancy.counts) != m:
        raise ValueError("occupancy length must match the state space")
    return occupancy


def hamiltonian(occupancy, phi: Interaction) -> float:
    """Standard Hamiltonian of one occupancy class."""
    occ = _as_occupancy(occupancy, phi.space.m)
    row = np.array([occ.counts], dtype=np.int64)
    return float(hamiltonian_values(row, phi)[0])


def empirical_hamiltonian(occupancy, phi: Interaction) -> float:
    """Empirical-measure Hamiltonian of one occupancy class.

    Differs from the standard Hamiltonian by the self-interaction terms
    (tuples with repeated bodies), whose energy density is O(1/N).
    """
    occ = _as_occupancy(occupancy, phi.space.m)
    row = np.array([occ.counts], dtype=np.int64)
    return float(empirical_hamiltonian_values(row, phi)[0])


def _occupancy_log_terms(N: int, phi: Interaction, kind: str, cap: Optional[int]):
    m = phi.space.m
    count = occupancy_count(N, m)
    limit = occupancy_cap(cap)
    if count > limit:
        raise CapExceededError(
            f"N={N}, m={m} needs {count} occupancy classes, above the cap {limit}"
        )
    occs = occupancy_vectors(N, m)
    if kind == "standard":
        H = hamiltonian_values(occs, phi)
    elif kind == "evp":
        H = empirical_hamiltonian_values(occs, phi)
    else:
        raise ValueError("kind must be 'standard' or 'evp'")
    logw = log_multinomial(occs) + occs @ phi.space.log_alpha
    return occs, logw, H


def pressure(N: int, phi: Interaction, kind: str = "standard", cap: Optional[int] = None) -> float:
    """N^-1 log of the partition sum, exact up to floating rounding.

    ``kind='standard'`` uses the distinct-body Hamiltonian (needs N >= n);
    ``kind='evp'`` uses the empirical-measure Hamiltonian (any N >= 1).
    Occupancy classes whose Hamiltonian is +inf carry zero mass.
    """
    if N < 1:
        raise ValueError("body count N must be at least 1")
    _, logw, H = _occupancy_log_terms(N, phi, kind, cap)
    logZ = log_mean_exp(logw - H, np.ones(logw.size))
    if logZ == -math.inf:
        raise ValueError("partition sum is zero: every occupancy class has infinite energy")
    return logZ / N


def _dense_configs(N: int, m: int) -> np.ndarray:
    return np.indices((m,) * N).reshape(N, -1).T


def dense_hamiltonian(N: int, phi: Interaction, kind: str = "standard",
                      cap: Optional[int] = None) -> np.ndarray:
    """Hamiltonian over all m**N configurations in lexicographic order."""
    m = phi.space.m
    from .state_space import DENSE_CAP

    limit = DENSE_CAP if cap is None else int(cap)
    if m ** N > limit:
        raise CapExceededError(f"m**N = {m ** N} exceeds the dense cap {limit}")
    cfg = _dense_configs(N, m)
    if kind == "standard":
        n = phi.n
        if N < n:
            raise ValueError(f"standard Hamiltonian needs N >= n (got N={N}, n={n})")
        from itertools import combinations

        acc = np.zeros(cfg.shape[0])
        for combo in combinations(range(N), n):
            acc = acc + phi.table[tuple(cfg[:, i] for i in combo)]
        return (N / math.comb(N, n)) * acc
    if kind == "evp":
        counts = np.zeros((cfg.shape[0], m))
        rows = np.arange(cfg.shape[0])
        for i in range(N):
            np.add.at(counts, (rows, cfg[:, i]), 1.0)
        return N * phi.energy_rows(counts / N)
    raise ValueError("kind must be 'standard' or 'evp'")


def gibbs_measure(N: int, phi: Interaction, cap: Optional[int] = None) -> DenseProductMeasure:
    """The N-body Gibbs measure: weights proportional to alpha^N * exp(-H)."""
    H = dense_hamiltonian(N, phi, "standard", cap=cap)
    cfg = _dense_configs(N, phi.space.m)
    log_ref = phi.space.log_alpha[cfg].sum(axis=1)
    logw = log_ref - H
    finite = np.isfinite(logw)
    if not np.any(finite):
        raise ValueError("Gibbs measure undefined: every configuration has infinite energy")
    shift = logw[finite].max()
    w = np.where(finite, np.exp(np.minimum(logw - shift, 0.0)), 0.0)
    return DenseProductMeasure(phi.space, N, w / w.sum(), cap=cap)


def gibbs_function(rho: DenseProductMeasure, phi: Interaction) -> float:
    """N^-1 [entropy(rho) - mean energy of rho]; maximized by the Gibbs measure.

    Its value at the Gibbs measure is the pressure p(N); every other measure
    scores strictly less.
    """
    phi.space.require_compatible(rho.space)
    N = rho.N
    H = dense_hamiltonian(N, phi, "standard")
    w = rho.weights
    carrying = w > 0.0
    if np.any(np.isposinf(H[carrying])):
        return -math.inf
    energy = float(w[carrying] @ H[carrying])
    return (relative_entropy_dense(rho) - energy) / N


# ----------------------------------------------------------------------
# finite-N inequality suite
# ----------------------------------------------------------------------
@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    failures: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "failures": self.failures,
        }


@dataclass
class FiniteNReport:
    Nmax: int
    shape: str
    checks: List[CheckResult]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "Nmax": self.Nmax,
            "shape": self.shape,
            "all_passed": self.all_passed,
            "checks": [c.to_json_dict() for c in self.checks],
        }


def verify_finite_n(
    Nmax: int,
    phi: Interaction,
    *,
    shape: Optional[ShapeClass] = None,
    rtol: float = 1e-9,
    cap: Optional[int] = None,
) -> FiniteNReport:
    """Check the finite-N pressure inequalities for all N up to Nmax.

    Verifies: scaled empirical pressure N*p~(N) is superadditive when the
    energy functional is convex (subadditive when concave); scaled standard
    pressure N*p(N) is subadditive; p(N) is bounded below by minus the
    a priori mean energy; and |p(N) - p~(N)| <= n(n-1) sup|phi| / N.
    Violations are collected with the offending tuples, never raised.
    """
    n = phi.n
    if Nmax < n:
        raise ValueError("Nmax must be at least the body count")
    shape = shape or classify_shape(phi)
    pt = {N: pressure(N, phi, "evp", cap=cap) for N in range(1, Nmax + 1)}
    p = {N: pressure(N, phi, "standard", cap=cap) for N in range(n, Nmax + 1)}

    checks = []

    def slack(*vals: float) -> float:
        return rtol * (1.0 + max(abs(v) for v in vals))

    fails = []
    if shape.kind == "neither":
        checks.append(
            CheckResult("evp_pressure_additivity", True,
                        "skipped: energy functional is neither convex nor concave")
        )
    else:
        super_mode = shape.is_convex
        for N1 in range(1, Nmax):
            for N2 in range(N1, Nmax - N1 + 1):
                lhs = (N1 + N2) * pt[N1 + N2]
                rhs = N1 * pt[N1] + N2 * pt[N2]
                gap = (lhs - rhs) if super_mode else (rhs - lhs)
                if gap < -slack(lhs, rhs):
                    fails.append({"N1": N1, "N2": N2, "lhs": lhs, "rhs": rhs})
        direction = "superadditive" if super_mode else "subadditive"
        checks.append(
            CheckResult("evp_pressure_additivity", not fails,
                        f"N*p_tilde(N) {direction} ({shape.kind} energy)", fails)
        )

    fails = []
    for N1 in range(n, Nmax):
        for N2 in range(N1, Nmax - N1 + 1):
            if N2 < n:
                continue
            lhs = (N1 + N2) * p[N1 + N2]
            rhs = N1 * p[N1] + N2 * p[N2]
            if lhs - rhs > slack(lhs, rhs):
                fails.append({"N1": N1, "N2": N2, "lhs": lhs, "rhs": rhs})
    checks.append(CheckResult("pressure_subadditivity", not fails,
                              "N*p(N) subadditive", fails))

    fails = []
    if math.isfinite(phi.alpha_energy):
        for N in range(n, Nmax + 1):
            if p[N] < -phi.alpha_energy - slack(p[N], phi.alpha_energy):
                fails.append({"N": N, "p": p[N], "lower_bound": -phi.alpha_energy})
        checks.append(CheckResult("pressure_lower_bound", not fails,
                                  "p(N) >= -(a priori mean energy)", fails))
    else:
        checks.append(CheckResult("pressure_lower_bound", True,
                                  "skipped: a priori mean energy is infinite"))

    fails = []
    if math.isfinite(phi.sup_norm):
        for N in range(n, Nmax + 1):
            bound = n * (n - 1) * phi.sup_norm / N
            if abs(p[N] - pt[N]) > bound + slack(p[N], pt[N]):
                fails.append({"N": N, "p": p[N], "p_tilde": pt[N], "bound": bound})
        checks.append(CheckResult("pressure_comparison_bound", not fails,
                                  "|p(N) - p_tilde(N)| <= n(n-1) sup|phi| / N", fails))
    else:
        checks.append(CheckResult("pressure_comparison_bound", True,
                                  "skipped: sup|phi| is infinite"))

    return FiniteNReport(Nmax, shape.kind, checks)


# ----------------------------------------------------------------------
# pressure tables and extrapolation
# ----------------------------------------------------------------------
@dataclass
class PressureRow:
    N: int
    p: float          # NaN below the body count
    p_tilde: float
    bound: float      # n(n-1) sup|phi| / N
    bound_ok: bool


@dataclass
class PressureTable:
    model: str
    rows: List[PressureRow]
    created_at: str = ""

    def __post_init__(self):
        Ns = [r.N for r in self.rows]
        if Ns != sorted(Ns) or len(set(Ns)) != len(Ns):
            raise ValueError("rows must be sorted by strictly increasing N")
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat()

    @classmethod
    def compute(cls, phi: Interaction, Ns: Iterable[int], model: str = "",
                cap: Optional[int] = None) -> "PressureTable":
        rows = []
        n = phi.n
        for N in sorted(set(int(N) for N in Ns)):
            p_t = pressure(N, phi, "evp", cap=cap)
            if N >= n:
                p_s = pressure(N, phi, "standard", cap=cap)
                bound = n * (n - 1) * phi.sup_norm / N
                ok = (not math.isfinite(bound)) or (
                    abs(p_s - p_t) <= bound + 1e-9 * (1.0 + abs(p_s) + abs(p_t))
                )
            else:
                p_s, bound, ok = math.nan, math.nan, True
            rows.append(PressureRow(N, p_s, p_t, bound, ok))
        return cls(model=model, rows=rows)

    def to_csv_text(self) -> str:
        lines = ["N,p,p_tilde,bound,bound_ok"]
        for r in self.rows:
            lines.append(
                f"{r.N},{r.p!r},{r.p_tilde!r},{r.bound!r},{str(r.bound_ok).lower()}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "rows": [
                {
                    "N": r.N,
                    "p": None if math.isnan(r.p) else r.p,
                    "p_tilde": r.p_tilde,
                    "bound": None if math.isnan(r.bound) else r.bound,
                    "bound_ok": r.bound_ok,
                }
                for r in self.rows
            ],
        }


@dataclass
class ExtrapolationResult:
    value: float
    residual: float           # max |fit - data|
    coefficients: tuple       # (constant, 1/N, log N / N)


def fit_pressure_limit(Ns: Sequence[int], values: Sequence[float]) -> ExtrapolationResult:
    """Least-squares fit against {1, 1/N, log N / N}; the constant estimates the limit.

    The correction basis captures the generic finite-size behaviour of
    saddle-point sums; the fit is a diagnostic, not a proof.
    """
    Ns = np.asarray(Ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(set(Ns.tolist())) < 4:
        raise ValueError("extrapolation needs at least 4 distinct N values")
    A = np.column_stack([np.ones_like(Ns), 1.0 / Ns, np.log(Ns) / Ns])
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    resid = float(np.max(np.abs(A @ coef - values)))
    return ExtrapolationResult(float(coef[0]), resid, tuple(float(c) for c in coef))


def extrapolate_pressure(table: PressureTable, column: str = "p") -> ExtrapolationResult:
    """Estimate the large-N pressure limit from a PressureTable column."""
    if column not in ("p", "p_tilde"):
        raise ValueError("column must be 'p' or 'p_tilde'")
    Ns, vals = [], []
    for r in table.rows:
        v = r.p if column == "p" else r.p_tilde
        if not math.isnan(v):
            Ns.append(r.N)
            vals.append(v)
    return fit_pressure_limit(Ns, vals)
