"""Finite state spaces, measures on them, and relative-entropy functionals.

Everything downstream works on a fixed finite grid: a state space is an
ordered list of sites with strictly positive a priori weights, a one-body
measure is a dense weight vector over those sites, and an N-body measure is
a dense weight vector over the m**N product configurations in lexicographic
order (first site index most significant).

All instances are immutable after construction and all operations are pure
functions, so concurrent use is safe.  Sums are accumulated in a fixed
order, making results schedule-independent bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Iterable, Sequence

import numpy as np

ALPHA_TOL = 1e-12      # normalization tolerance for user-supplied weights
PRODUCT_TOL = 1e-10    # normalization tolerance for computed m**N products
DENSE_CAP = 10 ** 7    # largest m**N admitted for dense product measures


class CapExceededError(ValueError):
    """An enumeration or dense-measure size guard was exceeded."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class StateSpace:
    """Ordered finite set of sites with strictly positive a priori weights.

    Sites may carry coordinates in R^d (used by kernel-built interactions
    and barycenter reductions); abstract spaces leave ``points`` as None.
    Sites with zero a priori mass must be dropped before construction.
    """

    def __init__(self, alpha: Sequence[float], points=None):
        alpha = np.array(alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size == 0:
            raise ValueError("alpha must be a nonempty 1-d weight vector")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("a priori weights must be finite")
        if np.any(alpha <= 0.0):
            raise ValueError(
                "a priori weights must be strictly positive; "
                "drop zero-mass sites before construction"
            )
        if abs(float(alpha.sum()) - 1.0) > ALPHA_TOL:
            raise ValueError(f"a priori weights must sum to 1 within {ALPHA_TOL}")
        self.alpha = _readonly(alpha)
        self._log_alpha = _readonly(np.log(alpha))
        if points is not None:
            points = np.array(points, dtype=float)
            if points.ndim == 1:
                points = points.reshape(-1, 1)
            if points.ndim != 2 or points.shape[0] != alpha.size:
                raise ValueError("points must provide one coordinate row per site")
            if not np.all(np.isfinite(points)):
                raise ValueError("site coordinates must be finite")
            points = _readonly(points)
        self.points = points

    @classmethod
    def uniform(cls, m: int, points=None) -> "StateSpace":
        return cls(np.full(m, 1.0 / m), points=points)

    @property
    def m(self) -> int:
        return int(self.alpha.size)

    @property
    def dim(self):
        return None if self.points is None else int(self.points.shape[1])

    @property
    def log_alpha(self) -> np.ndarray:
        return self._log_alpha

    def compatible_with(self, other: "StateSpace") -> bool:
        """Same site count, identical weights, identical coordinates."""
        if self is other:
            return True
        if self.m != other.m or not np.array_equal(self.alpha, other.alpha):
            return False
        if (self.points is None) != (other.points is None):
            return False
        return self.points is None or np.array_equal(self.points, other.points)

    def require_compatible(self, other: "StateSpace") -> None:
        if not self.compatible_with(other):
            raise ValueError("operands are tied to different state spaces")

    def __repr__(self) -> str:
        d = "" if self.points is None else f", dim={self.dim}"
        return f"StateSpace(m={self.m}{d})"


class DiscreteMeasure:
    """Probability weights over a StateSpace."""

    def __init__(self, space: StateSpace, weights: Sequence[float]):
        weights = np.array(weights, dtype=float)
        if weights.shape != (space.m,):
            raise ValueError("weight vector length must match the state space")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
            raise ValueError("weights must be finite and nonnegative")
        if abs(float(weights.sum()) - 1.0) > ALPHA_TOL:
            raise ValueError(f"weights must sum to 1 within {ALPHA_TOL}")
        self.space = space
        self.weights = _readonly(weights)

    @classmethod
    def normalized(cls, space: StateSpace, raw: Sequence[float]) -> "DiscreteMeasure":
        raw = np.asarray(raw, dtype=float)
        total = float(raw.sum())
        if not math.isfinite(total) or total <= 0.0:
            raise ValueError("cannot normalize a vector with nonpositive total mass")
        return cls(space, raw / total)

    @classmethod
    def delta(cls, space: StateSpace, site: int) -> "DiscreteMeasure":
        w = np.zeros(space.m)
        w[site] = 1.0
        return cls(space, w)

    @classmethod
    def a_priori(cls, space: StateSpace) -> "DiscreteMeasure":
        return cls(space, space.alpha)

    def mix(self, other: "DiscreteMeasure", theta: float) -> "DiscreteMeasure":
        """Convex combination theta*self + (1-theta)*other."""
        self.space.require_compatible(other.space)
        if not 0.0 <= theta <= 1.0:
            raise ValueError("mixing weight must lie in [0, 1]")
        return DiscreteMeasure.normalized(
            self.space, theta * self.weights + (1.0 - theta) * other.weights
        )

    def density(self) -> np.ndarray:
        """Weights relative to the a priori weights."""
        return self.weights / self.space.alpha

    def barycenter(self) -> np.ndarray:
        if self.space.points is None:
            raise ValueError("state space carries no coordinates")
        return self.weights @ self.space.points

    def __repr__(self) -> str:
        return f"DiscreteMeasure({np.array2string(self.weights, precision=6)})"


class DenseProductMeasure:
    """Dense probability weights over the m**N product configurations.

    Entry j is the probability of the configuration whose site indices are
    the digits of j written base m, most significant digit first.
    """

    def __init__(self, space: StateSpace, N: int, weights: Sequence[float], cap=None):
        cap = DENSE_CAP if cap is None else int(cap)
        if N < 1:
            raise ValueError("body count N must be at least 1")
        size = space.m ** N
        if size > cap:
            raise CapExceededError(
                f"dense product measure needs {size} entries, above the cap {cap}"
            )
        weights = np.array(weights, dtype=float)
        if weights.shape != (size,):
            raise ValueError(f"expected {size} weights for m={space.m}, N={N}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
            raise ValueError("weights must be finite and nonnegative")
        if abs(float(weights.sum()) - 1.0) > PRODUCT_TOL:
            raise ValueError(f"weights must sum to 1 within {PRODUCT_TOL}")
        self.space = space
        self.N = int(N)
        self.weights = _readonly(weights)
        self._ref = None

    @classmethod
    def product(cls, mu: DiscreteMeasure, N: int, cap=None) -> "DenseProductMeasure":
        """The N-fold product measure mu x ... x mu."""
        w = np.ones(1)
        for _ in range(N):
            w = np.kron(w, mu.weights)
        return cls(mu.space, N, w, cap=cap)

    def ref_weights(self) -> np.ndarray:
        """Probabilities of the N-fold product of the a priori weights."""
        if self._ref is None:
            w = np.ones(1)
            for _ in range(self.N):
                w = np.kron(w, self.space.alpha)
            self._ref = _readonly(w)
        return self._ref

    def as_tensor(self) -> np.ndarray:
        return self.weights.reshape((self.space.m,) * self.N)

    def marginal(self, indices: Iterable[int]) -> "DenseProductMeasure":
        """Marginal onto a set of site slots (0-based).

        Slots are treated as a set; the retained axes keep their relative
        order.  An empty slot set is rejected: the zero-body entropy is 0
        by convention and needs no measure.
        """
        idx = sorted(set(int(i) for i in indices))
        if not idx:
            raise ValueError("marginal requires a nonempty set of slots")
        if idx[0] < 0 or idx[-1] >= self.N:
            raise ValueError(f"slots must lie in [0, {self.N - 1}]")
        drop = tuple(i for i in range(self.N) if i not in idx)
        tensor = self.as_tensor()
        if drop:
            tensor = tensor.sum(axis=drop)
        return DenseProductMeasure(self.space, len(idx), tensor.reshape(-1))

    def symmetrized(self) -> "DenseProductMeasure":
        """Average over all permutations of the N site slots."""
        tensor = self.as_tensor()
        acc = np.zeros_like(tensor)
        perms = list(permutations(range(self.N)))
        for p in perms:
            acc += tensor.transpose(p)
        return DenseProductMeasure(self.space, self.N, (acc / len(perms)).reshape(-1))

    def is_exchangeable(self, tol: float = 1e-12) -> bool:
        tensor = self.as_tensor()
        return all(
            np.allclose(tensor, tensor.transpose(p), atol=tol)
            for p in permutations(range(self.N))
        )

    def __repr__(self) -> str:
        return f"DenseProductMeasure(m={self.space.m}, N={self.N})"


@dataclass(frozen=True)
class OccupancyVector:
    """Per-site particle counts; the exchangeable class of a configuration."""

    counts: tuple

    def __post_init__(self):
        if len(self.counts) == 0:
            raise ValueError("occupancy needs at least one site")
        if any((not float(c).is_integer()) or c < 0 for c in self.counts):
            raise ValueError("occupancy counts must be nonnegative integers")
        if sum(self.counts) < 1:
            raise ValueError("occupancy must place at least one particle")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def N(self) -> int:
        return sum(self.counts)


def empirical_measure(space: StateSpace, occupancy) -> DiscreteMeasure:
    """The measure counts/N induced by an occupancy vector."""
    if not isinstance(occupancy, OccupancyVector):
        occupancy = OccupancyVector(tuple(occupancy))
    if len(occupancy.counts) != space.m:
        raise ValueError("occupancy length must match the state space")
    return DiscreteMeasure(space, np.asarray(occupancy.counts, dtype=float) / occupancy.N)


def relative_entropy(mu: DiscreteMeasure) -> float:
    """Entropy of mu relative to its space's a priori weights.

    Returns -sum_i mu_i log(mu_i / alpha_i) with the 0 log 0 term set to 0.
    Nonpositive for every mu, and 0 exactly at the a priori weights.
    """
    w = mu.weights
    a = mu.space.alpha
    pos = w > 0.0
    return float(-np.sum(w[pos] * np.log(w[pos] / a[pos])))


def relative_entropy_dense(rho: DenseProductMeasure) -> float:
    """N-body entropy of rho relative to the product of a priori weights."""
    w = rho.weights
    ref = rho.ref_weights()
    pos = w > 0.0
    return float(-np.sum(w[pos] * np.log(w[pos] / ref[pos])))


def log_mean_exp(values, weights) -> float:
    """log sum_i w_i exp(v_i), computed with a max shift.

    Values may contain -inf (carrying zero mass) or +inf (dominating the
    sum whenever its weight is positive).  Weights must be nonnegative with
    at least one strictly positive entry.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.ndim != 1:
        raise ValueError("values and weights must be 1-d arrays of equal length")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    mask = w > 0.0
    if not np.any(mask):
        raise ValueError("at least one weight must be positive")
    v = v[mask]
    w = w[mask]
    if np.any(np.isnan(v)):
        raise ValueError("values must not contain NaN")
    if np.any(np.isposinf(v)):
        return math.inf
    vmax = float(v.max())
    if vmax == -math.inf:
        return -math.inf
    return float(vmax + np.log(np.sum(w * np.exp(v - vmax))))
