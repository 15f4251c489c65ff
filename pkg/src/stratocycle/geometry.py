"""Manifold primitives for the unit sphere S^n and the flat torus T^2.

The sphere is handled extrinsically: points are unit vectors in R^{n+1}
and every update is followed by radial projection, which keeps the
constraint exact to machine precision and has no coordinate
singularities at the poles.  The torus is the fundamental domain
[0,1)^2 with mod-1 wrapping; winding information is recovered from
wrap-aware step displacements (see :mod:`stratocycle.forms`).

Field evaluators are vectorized: they accept arrays of shape (..., d)
where d is the ambient dimension (n+1 for the sphere, 2 for the torus)
and broadcast over the leading axes.  Torus evaluators must be defined
on all of R^2 (periodic extension, or lift-linear like the coordinate
functions) so that finite differences and unwrapped lifts never need to
re-wrap their probe points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ManifoldMismatch, NonFinite, ZeroVector

SPHERE_NORM_TOL = 1e-12     # construction tolerance, ~100x double eps
TANGENCY_TOL = 1e-10


# ---------------------------------------------------------------------------
# manifolds


@dataclass(frozen=True)
class Sphere:
    """Unit sphere S^n embedded in R^{n+1}."""

    n: int = 2

    @property
    def ambient_dim(self) -> int:
        return self.n + 1

    @property
    def kind(self) -> str:
        return f"sphere{self.n}"

    def retract(self, coords: np.ndarray) -> np.ndarray:
        """Radially project ambient coordinates back onto the sphere."""
        norms = np.linalg.norm(coords, axis=-1, keepdims=True)
        return coords / norms

    def validate(self, coords: np.ndarray) -> None:
        coords = np.asarray(coords)
        if coords.shape[-1] != self.ambient_dim:
            raise ManifoldMismatch(
                f"expected {self.ambient_dim} ambient coordinates, got {coords.shape[-1]}")
        if not np.all(np.isfinite(coords)):
            raise NonFinite("sphere coordinates must be finite")
        err = np.abs(np.linalg.norm(coords, axis=-1) - 1.0)
        if np.any(err > SPHERE_NORM_TOL):
            raise ManifoldMismatch(f"point off the unit sphere by {float(np.max(err)):.3e}")

    def midpoint_displacement(self, x0: np.ndarray, x1: np.ndarray):
        """Chord midpoint retracted to the sphere and the chord projected
        to the tangent space there.  Shapes (..., d) -> ((..., d), (..., d))."""
        m = self.retract(0.5 * (x0 + x1))
        chord = x1 - x0
        delta = chord - np.sum(chord * m, axis=-1, keepdims=True) * m
        return m, delta


@dataclass(frozen=True)
class Torus2:
    """Flat 2-torus ([0,1] x [0,1]) / ~ represented on [0,1)^2."""

    # guard: a single unwrapped step may not move more than this in any
    # coordinate, otherwise winding numbers become ambiguous
    max_step: float = 0.25

    @property
    def ambient_dim(self) -> int:
        return 2

    @property
    def kind(self) -> str:
        return "torus"

    def retract(self, coords: np.ndarray) -> np.ndarray:
        return np.mod(coords, 1.0)

    def validate(self, coords: np.ndarray) -> None:
        coords = np.asarray(coords)
        if coords.shape[-1] != 2:
            raise ManifoldMismatch(f"expected 2 coordinates, got {coords.shape[-1]}")
        if not np.all(np.isfinite(coords)):
            raise NonFinite("torus coordinates must be finite")
        if np.any(coords < 0.0) or np.any(coords >= 1.0):
            raise ManifoldMismatch("torus coordinates must lie in [0, 1)")

    def midpoint_displacement(self, x0: np.ndarray, x1: np.ndarray):
        """Wrap-aware midpoint and the unwrapped step displacement, the
        representative of x1 - x0 closest to zero."""
        raw = x1 - x0
        delta = raw - np.round(raw)
        m = np.mod(x0 + 0.5 * delta, 1.0)
        return m, delta


Manifold = Sphere | Torus2


def same_manifold(a: Manifold, b: Manifold) -> bool:
    return a == b


# ---------------------------------------------------------------------------
# points and tangent vectors


@dataclass(frozen=True)
class ManifoldPoint:
    """A validated point on a supported manifold."""

    manifold: Manifold
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        self.manifold.validate(coords)
        coords = coords.copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    def __repr__(self):
        return f"ManifoldPoint({self.manifold.kind}, {np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector at a base point, in ambient (sphere) or chart
    (torus) coordinates."""

    base: ManifoldPoint
    components: np.ndarray

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float)
        if comp.shape != self.base.coords.shape:
            raise ManifoldMismatch("tangent components must match the base point dimension")
        if isinstance(self.base.manifold, Sphere):
            inner = float(np.dot(comp, self.base.coords))
            if abs(inner) > TANGENCY_TOL * max(1.0, float(np.linalg.norm(comp))):
                raise ManifoldMismatch(f"vector not tangent to the sphere: <v,x> = {inner:.3e}")
        comp = comp.copy()
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)


def project_sphere(v, n: Optional[int] = None) -> ManifoldPoint:
    """Normalize an ambient vector onto the unit sphere.

    Idempotent on unit vectors up to rounding; raises ZeroVector when the
    input is too small to normalize safely.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFinite("cannot project a non-finite vector")
    norm = float(np.linalg.norm(v))
    if norm < 1e-300:
        raise ZeroVector("cannot project the zero vector onto the sphere")
    sphere = Sphere(v.shape[-1] - 1 if n is None else n)
    return ManifoldPoint(sphere, v / norm)


def wrap_torus(p) -> ManifoldPoint:
    """Wrap a real pair into the fundamental domain [0,1)^2."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise NonFinite("cannot wrap non-finite coordinates")
    return ManifoldPoint(Torus2(), np.mod(p, 1.0))


# ---------------------------------------------------------------------------
# scalar fields

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ScalarField:
    """Scalar field given by a vectorized evaluator.

    ``func`` maps (..., d) coordinate arrays to (...) values. ``grad``
    is the analytic gradient when known: ambient tangent gradient on the
    sphere, chart partials on the torus.  ``singular`` is an optional
    region (see :mod:`stratocycle.regions`) excluded from the domain.
    """

    kind: str
    manifold: Manifold
    func: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    singular: object = None
    params: tuple = ()

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.func(np.asarray(pts, dtype=float))

    def at(self, x: ManifoldPoint) -> float:
        if not same_manifold(x.manifold, self.manifold):
            raise ManifoldMismatch(f"{self.kind} is not defined on {x.manifold.kind}")
        return float(self.func(x.coords))


def _height(sphere: Sphere) -> ScalarField:
    def grad(p):
        x1 = p[..., :1]
        g = -x1 * p
        g[..., 0] += 1.0
        return g
    return ScalarField("height", sphere, lambda p: p[..., 0], grad)


def _half_height_sq(sphere: Sphere) -> ScalarField:
    def grad(p):
        x1 = p[..., :1]
        g = -(x1 * x1) * p
        g[..., 0] += x1[..., 0]
        return g
    return ScalarField("half_height_sq", sphere, lambda p: 0.5 * p[..., 0] ** 2, grad)


def _log_one_minus_height_sq(sphere: Sphere) -> ScalarField:
    from .regions import sphere_poles
    def func(p):
        return np.log(1.0 - p[..., 0] ** 2)
    def grad(p):
        x1 = p[..., :1]
        scale = -2.0 * x1 / (1.0 - x1 * x1)
        g = -x1 * p
        g[..., 0] += 1.0
        return scale * g
    return ScalarField("log_one_minus_height_sq", sphere, func, grad,
                       singular=sphere_poles(sphere, 0.0))


def _coord(torus: Torus2, axis: int, kind: str) -> ScalarField:
    e = np.zeros(2)
    e[axis] = 1.0
    return ScalarField(kind, torus, lambda p: p[..., axis],
                       lambda p: np.broadcast_to(e, p.shape).copy())


def _trig(torus: Torus2, fn, axis: int, kind: str) -> ScalarField:
    dfn = {np.sin: np.cos, np.cos: lambda u: -np.sin(u)}[fn]
    def func(p):
        return fn(TWO_PI * p[..., axis])
    def grad(p):
        g = np.zeros_like(p)
        g[..., axis] = TWO_PI * dfn(TWO_PI * p[..., axis])
        return g
    return ScalarField(kind, torus, func, grad)


def _log_sin_sq_x(torus: Torus2) -> ScalarField:
    from .regions import torus_circles
    def func(p):
        return np.log(np.sin(TWO_PI * p[..., 0]) ** 2)
    def grad(p):
        g = np.zeros_like(p)
        u = TWO_PI * p[..., 0]
        g[..., 0] = 2.0 * TWO_PI * np.cos(u) / np.sin(u)
        return g
    return ScalarField("log_sin_sq_x", torus, func, grad,
                       singular=torus_circles(torus, (0.0, 0.5), 0.0))


def _sin_product(torus: Torus2, amplitude: float) -> ScalarField:
    def func(p):
        return amplitude * np.sin(TWO_PI * p[..., 0]) * np.sin(TWO_PI * p[..., 1])
    def grad(p):
        sx, cx = np.sin(TWO_PI * p[..., 0]), np.cos(TWO_PI * p[..., 0])
        sy, cy = np.sin(TWO_PI * p[..., 1]), np.cos(TWO_PI * p[..., 1])
        g = np.empty_like(p)
        g[..., 0] = amplitude * TWO_PI * cx * sy
        g[..., 1] = amplitude * TWO_PI * sx * cy
        return g
    return ScalarField("sin_product", torus, func, grad, params=(amplitude,))


def scalar_field(kind: str, manifold: Manifold, *params) -> ScalarField:
    """Look up a catalog scalar field by kind."""
    if isinstance(manifold, Sphere):
        catalog = {
            "height": _height,
            "half_height_sq": _half_height_sq,
            "log_one_minus_height_sq": _log_one_minus_height_sq,
        }
    else:
        catalog = {
            "coord_x": lambda m: _coord(m, 0, "coord_x"),
            "coord_y": lambda m: _coord(m, 1, "coord_y"),
            "sin_x": lambda m: _trig(m, np.sin, 0, "sin_x"),
            "sin_y": lambda m: _trig(m, np.sin, 1, "sin_y"),
            "cos_x": lambda m: _trig(m, np.cos, 0, "cos_x"),
            "cos_y": lambda m: _trig(m, np.cos, 1, "cos_y"),
            "log_sin_sq_x": _log_sin_sq_x,
            "sin_product": lambda m: _sin_product(m, params[0] if params else 0.1),
        }
    try:
        return catalog[kind](manifold)
    except KeyError:
        raise KeyError(f"no catalog scalar field {kind!r} on {manifold.kind}") from None


def user_scalar(kind: str, manifold: Manifold, func, grad=None, singular=None) -> ScalarField:
    return ScalarField(f"user:{kind}", manifold, func, grad, singular)


# ---------------------------------------------------------------------------
# vector fields


@dataclass(frozen=True)
class VectorFieldSpec:
    """Vector field given by a vectorized evaluator (..., d) -> (..., d)."""

    kind: str
    manifold: Manifold
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.func(np.asarray(pts, dtype=float))


def sphere_height_gradient(sphere: Sphere = Sphere(2)) -> VectorFieldSpec:
    """Gradient of the first ambient coordinate: V(x) = e1 - x1 * x."""
    def func(p):
        v = -p[..., :1] * p
        v[..., 0] += 1.0
        return v
    return VectorFieldSpec("sphere_height_gradient", sphere, func)


def torus_sin_cos(torus: Torus2 = Torus2()) -> VectorFieldSpec:
    """V = sin(2 pi x) d/dx + cos(2 pi x) d/dy on the torus."""
    def func(p):
        u = TWO_PI * p[..., 0]
        return np.stack([np.sin(u), np.cos(u)], axis=-1)
    return VectorFieldSpec("torus_sin_cos", torus, func)


def torus_unit(axis: int, torus: Torus2 = Torus2()) -> VectorFieldSpec:
    """Constant coordinate field d/dx (axis 0) or d/dy (axis 1)."""
    e = np.zeros(2)
    e[axis] = 1.0
    kind = "unit_x" if axis == 0 else "unit_y"
    return VectorFieldSpec(kind, torus, lambda p: np.broadcast_to(e, p.shape).copy())


def gradient_of(f: ScalarField) -> VectorFieldSpec:
    """Gradient field of a scalar with a known analytic gradient.

    On the sphere ``f.grad`` already returns the ambient gradient
    projected to the tangent space; on the torus the chart partials are
    the gradient for the flat metric.
    """
    if f.grad is None:
        raise ValueError(f"scalar field {f.kind!r} has no analytic gradient")
    return VectorFieldSpec(f"grad:{f.kind}", f.manifold, f.grad)


def user_field(kind: str, manifold: Manifold, func) -> VectorFieldSpec:
    return VectorFieldSpec(f"user:{kind}", manifold, func)


def eval_field(spec: VectorFieldSpec, x: ManifoldPoint) -> TangentVector:
    """Evaluate a vector field at a point, with manifold checking."""
    if not same_manifold(spec.manifold, x.manifold):
        raise ManifoldMismatch(f"field {spec.kind} lives on {spec.manifold.kind}, "
                               f"point on {x.manifold.kind}")
    return TangentVector(x, spec(x.coords))
