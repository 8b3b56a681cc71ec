"""Symmetric n-body interaction tables and the energy functional on measures.

The energy of a one-body measure nu is the full contraction of the
interaction table against n copies of the weight vector; the cavity field
is the one-body potential obtained by contracting n-1 copies.  Tables may
contain +inf entries (infinite repulsion): a contraction places zero mass
on an infinite entry iff the corresponding product weight is zero, and
yields +inf otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence, Union

import numpy as np

from .state_space import DiscreteMeasure, StateSpace, _readonly

TABLE_CAP = 10 ** 8   # densest table admitted (m**n entries)
MAX_BODIES = 4

Direction = Union[DiscreteMeasure, Sequence[float], np.ndarray]


def symmetrize(table: np.ndarray) -> np.ndarray:
    """Average a rank-n table over all permutations of its axes.

    Each symmetry class is pinned to the value accumulated at its sorted
    index tuple, so equal-by-symmetry entries come out bit-identical.
    """
    table = np.asarray(table, dtype=float)
    n = table.ndim
    perms = list(permutations(range(n)))
    acc = np.zeros_like(table)
    for p in perms:
        acc += table.transpose(p)
    avg = acc / len(perms)
    canonical = np.sort(np.indices(table.shape).reshape(n, -1), axis=0)
    return avg[tuple(canonical)].reshape(table.shape)


@dataclass(frozen=True)
class ShapeClass:
    """Convexity certificate for the energy functional.

    ``certificate`` holds the eigenvalues of the pair table restricted to
    the zero-sum subspace (n=2), or the sampled second-derivative extrema
    (n>2).
    """

    kind: str  # convex | concave | affine | neither
    certificate: tuple

    @property
    def is_convex(self) -> bool:
        return self.kind in ("convex", "affine")

    @property
    def is_concave(self) -> bool:
        return self.kind in ("concave", "affine")


class Interaction:
    """Symmetric n-body coupling table over a finite state space.

    Attributes
    ----------
    n : body count (the table's rank).
    lower_bound : smallest table entry (always finite).
    sup_norm : largest absolute entry; +inf when the table has +inf entries.
    alpha_energy : mean energy under the a priori product weights; +inf
        when the table has +inf entries, since every site carries positive
        a priori mass.
    """

    def __init__(self, space: StateSpace, table):
        table = np.array(table, dtype=float)
        n = table.ndim
        if n < 2 or n > MAX_BODIES:
            raise ValueError(f"body count must lie in [2, {MAX_BODIES}]")
        if table.shape != (space.m,) * n:
            raise ValueError("table shape must be (m,) * n for the given space")
        if table.size > TABLE_CAP:
            raise ValueError(f"table with {table.size} entries exceeds the cap {TABLE_CAP}")
        if np.any(np.isnan(table)):
            raise ValueError("table must not contain NaN")
        if np.any(np.isneginf(table)):
            raise ValueError("table must be bounded below; -inf entries are not allowed")
        if np.all(np.isposinf(table)):
            raise ValueError("table must have at least one finite entry")
        for axis in range(n - 1):
            perm = list(range(n))
            perm[axis], perm[axis + 1] = perm[axis + 1], perm[axis]
            if not np.array_equal(table, table.transpose(perm)):
                raise ValueError("table must be symmetric under all index permutations")

        self.space = space
        self.n = n
        self.table = _readonly(table)
        self.has_infinite = bool(np.any(np.isposinf(table)))
        if self.has_infinite:
            self._finite = _readonly(np.where(np.isposinf(table), 0.0, table))
            self._inf_mask = _readonly(np.isposinf(table).astype(float))
        else:
            self._finite = self.table
            self._inf_mask = None
        self.lower_bound = float(np.min(table))
        self.sup_norm = math.inf if self.has_infinite else float(np.max(np.abs(table)))
        self.alpha_energy = self.energy(DiscreteMeasure.a_priori(space))

    # ------------------------------------------------------------------
    # contraction helpers
    # ------------------------------------------------------------------
    @staticmethod
    def _contract(arr: np.ndarray, vec: np.ndarray, times: int) -> np.ndarray:
        for _ in range(times):
            arr = np.tensordot(arr, vec, axes=(arr.ndim - 1, 0))
        return arr

    @staticmethod
    def _contract_rows(arr: np.ndarray, rows: np.ndarray, times: int) -> np.ndarray:
        """Contract ``times`` axes of arr against each row of rows (R, m)."""
        if times == 0:
            return np.broadcast_to(arr, (rows.shape[0],) + arr.shape)
        cur = np.tensordot(rows, arr, axes=(1, 0))  # (R, m, ..., m)
        for _ in range(times - 1):
            cur = np.einsum("r...i,ri->r...", cur, rows)
        return cur

    def _weights_of(self, direction: Direction, allow_signed: bool) -> np.ndarray:
        if isinstance(direction, DiscreteMeasure):
            self.space.require_compatible(direction.space)
            return direction.weights
        d = np.asarray(direction, dtype=float)
        if d.shape != (self.space.m,):
            raise ValueError("direction length must match the state space")
        if not np.all(np.isfinite(d)):
            raise ValueError("direction must be finite")
        if not allow_signed and np.any(d < 0.0):
            raise ValueError("this operation requires nonnegative weights")
        return d

    # ------------------------------------------------------------------
    # energy and derivatives
    # ------------------------------------------------------------------
    def energy(self, nu: DiscreteMeasure) -> float:
        """Full n-fold contraction of the table against nu's weights."""
        self.space.require_compatible(nu.space)
        w = nu.weights
        if self.has_infinite:
            inf_mass = float(self._contract(self._inf_mask, w, self.n))
            if inf_mass > 0.0:
                return math.inf
        return float(self._contract(self._finite, w, self.n))

    def cavity_field(self, nu: DiscreteMeasure) -> np.ndarray:
        """One-body field h with h[x] = d/dt energy(nu + t delta_x) at t=0.

        Equals n times the contraction of the table against n-1 copies of
        nu; entries are +inf where nu reaches an infinite coupling.
        """
        self.space.require_compatible(nu.space)
        w = nu.weights
        h = self.n * self._contract(self._finite, w, self.n - 1)
        if self.has_infinite:
            inf_mass = self._contract(self._inf_mask, w, self.n - 1)
            h = np.where(inf_mass > 0.0, math.inf, h)
        return h

    def first_derivative(self, nu: DiscreteMeasure, direction: Direction) -> float:
        """Directional derivative of the energy at nu toward ``direction``.

        Linear in the direction; for a measure mu it is n times the
        contraction against n-1 copies of nu and one copy of mu.  Signed
        directions are admitted only for finite tables.
        """
        d = self._weights_of(direction, allow_signed=not self.has_infinite)
        h = self.cavity_field(nu)
        if not self.has_infinite:
            return float(h @ d)
        carrying = d > 0.0
        if np.any(np.isposinf(h[carrying])):
            return math.inf
        finite = np.isfinite(h)
        return float(h[finite & carrying] @ d[finite & carrying])

    def pair_field(self, nu: DiscreteMeasure) -> np.ndarray:
        """Two-body field K[i, j] = n(n-1) [nu^(n-2) x delta_i x delta_j](table)."""
        if self.has_infinite:
            raise ValueError("pair field requires a finite table")
        self.space.require_compatible(nu.space)
        base = self._contract(self.table, nu.weights, self.n - 2)
        return self.n * (self.n - 1) * base

    def second_derivative(self, nu: DiscreteMeasure, direction: Direction) -> float:
        """Second t-derivative of energy(nu + t*direction) at t=0.

        Equals n(n-1) times the contraction against n-2 copies of nu and
        two copies of the direction; requires a finite table.
        """
        d = self._weights_of(direction, allow_signed=True)
        K = self.pair_field(nu)
        return float(d @ K @ d)

    # ------------------------------------------------------------------
    # batched variants over rows of weight vectors (R, m)
    # ------------------------------------------------------------------
    def energy_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        vals = self._contract_rows(self._finite, rows, self.n)
        if self.has_infinite:
            inf_mass = self._contract_rows(self._inf_mask, rows, self.n)
            vals = np.where(inf_mass > 0.0, math.inf, vals)
        return vals

    def cavity_field_rows(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        vals = self.n * self._contract_rows(self._finite, rows, self.n - 1)
        if self.has_infinite:
            inf_mass = self._contract_rows(self._inf_mask, rows, self.n - 1)
            vals = np.where(inf_mass > 0.0, math.inf, vals)
        return vals

    def __repr__(self) -> str:
        return f"Interaction(n={self.n}, m={self.space.m}, sup_norm={self.sup_norm})"


def _helmert_basis(m: int) -> np.ndarray:
    """Orthonormal basis of the zero-sum subspace, as columns of an (m, m-1) matrix."""
    B = np.zeros((m, m - 1))
    for k in range(1, m):
        B[:k, k - 1] = 1.0
        B[k, k - 1] = -float(k)
        B[:, k - 1] /= math.sqrt(k * (k + 1))
    return B


def classify_shape(
    phi: Interaction, *, samples: int = 64, seed: int = 0, tol: float = 1e-10
) -> ShapeClass:
    """Certify whether the energy functional is convex, concave, or neither.

    For pair interactions the certificate is the eigenvalue spectrum of the
    table restricted to the zero-sum subspace (differences of probability
    measures).  For higher body counts the second derivative is sampled on
    a deterministic set of (measure, zero-sum direction) pairs and the sign
    pattern decides.  Tables with +inf entries are rejected; substituting a
    large finite sentinel would silently change the model.
    """
    if phi.has_infinite:
        raise ValueError("shape classification requires a finite table")
    if phi.n == 2:
        m = phi.space.m
        if m == 1:
            return ShapeClass("affine", ())
        B = _helmert_basis(m)
        eigs = np.linalg.eigvalsh(B.T @ phi.table @ B)
        lo, hi = float(eigs.min()), float(eigs.max())
        certificate = tuple(float(e) for e in eigs)
    else:
        rng = np.random.default_rng(seed)
        m = phi.space.m
        vals = []
        for _ in range(samples):
            nu = DiscreteMeasure(phi.space, rng.dirichlet(np.ones(m)))
            u = rng.standard_normal(m)
            u -= u.mean()
            scale = np.max(np.abs(u))
            if scale == 0.0:
                continue
            vals.append(phi.second_derivative(nu, u / scale))
        lo, hi = float(min(vals)), float(max(vals))
        certificate = (lo, hi)

    if lo >= -tol and hi <= tol:
        kind = "affine"
    elif lo >= -tol:
        kind = "convex"
    elif hi <= tol:
        kind = "concave"
    else:
        kind = "neither"
    return ShapeClass(kind, certificate)
