"""Model construction: state-space grids, kernel tables, and 1-d reductions.

A model file is a JSON object

    {"name": ..., "n": 2,
     "space": {"type": "points"|"ising"|"circle"|"interval", "m": ..., "h": ...,
               "alpha": [...], "coords": [...]},
     "phi": {"type": "table"|"kernel", "values": [...], "id": "neg-sq"|"pos-sq",
             "scale": 1.0, "diag_shift": 0.0},
     "shape_hint": "convex"|"concave"|"affine"|null}

External fields enter as an a priori tilt: the grid weights are multiplied
by exp(h * first coordinate) and renormalized, keeping the interaction
purely n-body.  Kernel interactions are the squared-distance couplings
-scale*|x-y|^2 ("neg-sq", convex energy) and +scale*|x-y|^2 ("pos-sq",
concave energy), optionally shifted on the diagonal.  A shape hint is
verified against the computed certificate and rejected on mismatch.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .interaction import Interaction, classify_shape
from .state_space import DiscreteMeasure, StateSpace

KERNEL_IDS = ("neg-sq", "pos-sq")


class ModelError(ValueError):
    """A model description is malformed or fails its certificate checks."""


@dataclass
class ModelSpec:
    name: str
    space: dict
    phi: dict
    n: int = 2
    shape_hint: Optional[str] = None

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        try:
            return cls(
                name=str(obj["name"]),
                space=dict(obj["space"]),
                phi=dict(obj["phi"]),
                n=int(obj.get("n", 2)),
                shape_hint=obj.get("shape_hint"),
            )
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model description: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "ModelSpec":
        try:
            with open(path) as fh:
                return cls.from_json(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ModelError(f"cannot load model file {path}: {exc}") from exc

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "space": self.space,
            "phi": self.phi,
            "shape_hint": self.shape_hint,
        }


def builtin(model_id: str) -> ModelSpec:
    """Built-in models: 'ising-af' and 'ising-f', optionally with a field."""
    if model_id == "ising-af":
        return ModelSpec(
            name="ising-af",
            space={"type": "ising", "h": 0.0},
            phi={"type": "kernel", "id": "neg-sq", "scale": 1.0, "diag_shift": 0.0},
            shape_hint="convex",
        )
    if model_id == "ising-f":
        return ModelSpec(
            name="ising-f",
            space={"type": "ising", "h": 0.0},
            phi={"type": "kernel", "id": "pos-sq", "scale": 1.0, "diag_shift": 0.0},
            shape_hint="concave",
        )
    raise ModelError(f"unknown builtin model '{model_id}'")


def _build_space(desc: dict) -> StateSpace:
    kind = desc.get("type")
    h = float(desc.get("h", 0.0))
    if kind == "ising":
        points = np.array([[1.0], [-1.0]])
        base = np.array([0.5, 0.5])
    elif kind == "circle":
        m = int(desc.get("m", 0))
        if m < 2:
            raise ModelError("circle grid needs m >= 2")
        angles = 2.0 * math.pi * np.arange(m) / m
        points = np.column_stack([np.cos(angles), np.sin(angles)])
        base = np.full(m, 1.0 / m)
    elif kind == "interval":
        m = int(desc.get("m", 0))
        if m < 2:
            raise ModelError("interval grid needs m >= 2")
        points = np.linspace(-1.0, 1.0, m).reshape(-1, 1)
        base = np.full(m, 1.0 / m)
    elif kind == "points":
        alpha = desc.get("alpha")
        if alpha is None:
            raise ModelError("explicit point spaces need 'alpha'")
        base = np.asarray(alpha, dtype=float)
        coords = desc.get("coords")
        points = None if coords is None else np.asarray(coords, dtype=float)
        if h != 0.0 and points is None:
            raise ModelError("a field tilt needs site coordinates")
    else:
        raise ModelError(f"unknown state-space type '{kind}'")

    if points is not None and points.ndim == 1:
        points = points.reshape(-1, 1)
    if h != 0.0:
        base = base * np.exp(h * points[:, 0])
    base = base / base.sum()
    try:
        return StateSpace(base, points=points)
    except ValueError as exc:
        raise ModelError(str(exc)) from exc


def _kernel_table(space: StateSpace, kernel_id: str, scale: float,
                  diag_shift: float) -> np.ndarray:
    if kernel_id not in KERNEL_IDS:
        raise ModelError(f"unknown kernel id '{kernel_id}'")
    if space.points is None:
        raise ModelError("kernel interactions need site coordinates")
    pts = space.points
    diff = pts[:, None, :] - pts[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    sign = -1.0 if kernel_id == "neg-sq" else 1.0
    table = sign * float(scale) * sq
    if diag_shift:
        table = table + float(diag_shift) * np.eye(space.m)
    return table


def build(spec: ModelSpec) -> Tuple[StateSpace, Interaction]:
    """Instantiate a model and verify its shape hint against the certificate."""
    space = _build_space(spec.space)
    desc = spec.phi
    kind = desc.get("type")
    if kind == "table":
        values = desc.get("values")
        if values is None:
            raise ModelError("explicit interactions need 'values'")
        table = np.asarray(values, dtype=float)
        if table.ndim != spec.n:
            raise ModelError(f"table rank {table.ndim} does not match n={spec.n}")
    elif kind == "kernel":
        if spec.n != 2:
            raise ModelError("kernel interactions are pairwise (n=2)")
        table = _kernel_table(space, desc.get("id", ""),
                              desc.get("scale", 1.0), desc.get("diag_shift", 0.0))
    else:
        raise ModelError(f"unknown interaction type '{kind}'")

    try:
        phi = Interaction(space, table)
    except ValueError as exc:
        raise ModelError(str(exc)) from exc

    hint = spec.shape_hint
    if hint is None and kind == "kernel":
        # squared-distance kernels have a known certificate on every grid
        hint = "convex" if desc.get("id") == "neg-sq" else "concave"
    if hint is not None:
        cert = classify_shape(phi)
        hint = str(hint)
        ok = {
            "convex": cert.is_convex,
            "concave": cert.is_concave,
            "affine": cert.kind == "affine",
            "neither": cert.kind == "neither",
        }.get(hint)
        if ok is None:
            raise ModelError(f"unknown shape hint '{hint}'")
        if not ok:
            raise ModelError(
                f"shape hint '{hint}' contradicts the computed certificate '{cert.kind}'"
            )
    return space, phi


def barycenter(measure: DiscreteMeasure) -> np.ndarray:
    return measure.barycenter()


def _quad_params(spec: ModelSpec, sign: Optional[float]):
    desc = spec.phi
    if desc.get("type") != "kernel":
        raise ModelError("the quadratic reduction applies to kernel models only")
    if float(desc.get("diag_shift", 0.0)) != 0.0:
        raise ModelError("the quadratic reduction needs a vanishing diagonal shift")
    scale = float(desc.get("scale", 1.0))
    if sign is None:
        sign = -1.0 if desc.get("id") == "neg-sq" else 1.0
    space = _build_space(spec.space)
    return space, float(sign), scale


def quad_cost(y, spec: ModelSpec, sign: Optional[float] = None) -> float:
    """Reduced 1-d cost of a squared-distance kernel model at barycenter y.

    For the repulsive kernel (-|x-y|^2 couplings) this is
    log sum_x alpha_x exp(+2 s |x-y|^2), to be minimized over y; the
    attractive kernel flips the inner sign and is maximized.  Equals the
    EVP objective of any trial measure with barycenter y.
    """
    space, sign, scale = _quad_params(spec, sign)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    pts = space.points
    if np.any(y < pts.min(axis=0) - 1e-12) or np.any(y > pts.max(axis=0) + 1e-12):
        warnings.warn("barycenter lies outside the grid's bounding box", stacklevel=2)
    sq = np.sum((pts - y[None, :]) ** 2, axis=1)
    exponent = -2.0 * sign * scale * sq
    shift = exponent.max()
    return float(shift + np.log(np.sum(space.alpha * np.exp(exponent - shift))))


def quad_criticality(y, spec: ModelSpec, sign: Optional[float] = None) -> np.ndarray:
    """Residual of the implicit barycenter condition at y (zero at optimizers).

    Returns y minus the barycenter of the grid weighted by
    alpha_x exp(-2 s sign |x-y|^2); stationary points of the reduced cost
    solve this fixed-point equation.
    """
    space, sign, scale = _quad_params(spec, sign)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    pts = space.points
    sq = np.sum((pts - y[None, :]) ** 2, axis=1)
    exponent = -2.0 * sign * scale * sq
    w = space.alpha * np.exp(exponent - exponent.max())
    return y - (w @ pts) / w.sum()
