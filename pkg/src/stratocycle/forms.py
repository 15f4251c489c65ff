"""1-forms and Stratonovich line integrals along sample paths.

The line integral uses the midpoint rule: each step contributes
alpha(m_k, delta_k) where m_k is the wrap-aware step midpoint and
delta_k the unwrapped displacement (torus) or the chord projected to
the tangent space at m_k (sphere).  Midpoint evaluation is what makes
the discrete integral converge to the Stratonovich integral; an
endpoint rule would converge to the Ito integral instead and silently
break the drift/martingale decomposition.

Torus winding: integrating against the representative of each step in
(-1/2, 1/2]^2 amounts to integrating along the continuous lift, so
basis-form integrals recover winding numbers exactly.  A guard refuses
steps larger than 1/4, where the representative choice would become
ambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (ManifoldMismatch, SingularProximity, SpecMismatch,
                     StepTooLarge)
from .geometry import Manifold, ScalarField, Sphere, Torus2, same_manifold
from .sde import DiffusionSpec, SamplePath

FD_STEP = 1e-5
SINGULAR_CUTOFF = 1e-4   # chart-distance margin around singular sets


def trapezoid_uniform(values: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal quadrature on a uniform grid, over the last axis."""
    values = np.asarray(values, dtype=float)
    return dt * (values[..., 1:].sum(axis=-1) + values[..., :-1].sum(axis=-1)) * 0.5


@dataclass(frozen=True)
class OneForm:
    """A 1-form given by its evaluation on tangent vectors.

    ``at`` maps (points (..., d), tangents (..., d)) to values (...),
    linearly in the tangent argument.  ``closed`` marks forms known to
    be closed; ``singular`` optionally declares the region where the
    form blows up.
    """

    kind: str
    manifold: Manifold
    at: Callable[[np.ndarray, np.ndarray], np.ndarray]
    closed: bool = False
    singular: object = None


def torus_dx(torus: Torus2 = Torus2()) -> OneForm:
    return OneForm("dx", torus, lambda p, w: np.asarray(w)[..., 0], closed=True)


def torus_dy(torus: Torus2 = Torus2()) -> OneForm:
    return OneForm("dy", torus, lambda p, w: np.asarray(w)[..., 1], closed=True)


def basis_forms(manifold: Manifold) -> list[OneForm]:
    """Hard-coded basis of H^1: {dx, dy} on the torus, empty on S^n
    (n >= 2, where every closed 1-form is exact)."""
    if isinstance(manifold, Torus2):
        return [torus_dx(manifold), torus_dy(manifold)]
    return []


def exact_form(f: ScalarField) -> OneForm:
    """The differential df, evaluated from the analytic gradient when
    available and by central differences along retracted directions
    otherwise."""
    if f.grad is not None:
        def at(p, w):
            return np.sum(f.grad(np.asarray(p, dtype=float)) * w, axis=-1)
    else:
        retract = (f.manifold.retract if isinstance(f.manifold, Sphere)
                   else (lambda c: c))   # torus evaluators accept lifts

        def at(p, w):
            p = np.asarray(p, dtype=float)
            w = np.asarray(w, dtype=float)
            norm = np.linalg.norm(w, axis=-1)
            safe = np.where(norm > 0, norm, 1.0)[..., None]
            unit = w / safe
            step = FD_STEP * unit
            diff = (f(retract(p + step)) - f(retract(p - step))) / (2 * FD_STEP)
            return diff * norm
    return OneForm(f"d({f.kind})", f.manifold, at, closed=True, singular=f.singular)


def user_form(kind: str, manifold: Manifold, at, closed: bool = False,
              singular=None) -> OneForm:
    return OneForm(f"user:{kind}", manifold, at, closed, singular)


def combine(a: float, alpha: OneForm, beta: OneForm) -> OneForm:
    """The linear combination a*alpha + beta."""
    if not same_manifold(alpha.manifold, beta.manifold):
        raise ManifoldMismatch("cannot combine forms on different manifolds")
    return OneForm(f"{a}*{alpha.kind}+{beta.kind}", alpha.manifold,
                   lambda p, w: a * alpha.at(p, w) + beta.at(p, w),
                   closed=alpha.closed and beta.closed,
                   singular=alpha.singular or beta.singular)


@dataclass
class PathIntegral:
    value: float
    increments: Optional[np.ndarray]       # per-step, when retained
    lift_displacement: Optional[np.ndarray]  # torus only: unwrapped total


def line_integral(alpha: OneForm, path: SamplePath, *,
                  cutoff: float = SINGULAR_CUTOFF,
                  retain_increments: bool = False) -> PathIntegral:
    """Stratonovich line integral of a 1-form along a sample path."""
    if not same_manifold(alpha.manifold, path.manifold):
        raise ManifoldMismatch("form and path live on different manifolds")
    x0, x1 = path.coords[:-1], path.coords[1:]
    mid, delta = path.manifold.midpoint_displacement(x0, x1)
    if isinstance(path.manifold, Torus2):
        too_big = np.abs(delta) > path.manifold.max_step
        if np.any(too_big):
            k = int(np.argwhere(too_big.any(axis=1))[0, 0])
            raise StepTooLarge(f"step {k} moved {float(np.abs(delta[k]).max()):.3g} "
                               f"> {path.manifold.max_step}; winding is ambiguous")
    if alpha.singular is not None:
        dist = np.minimum(alpha.singular.distance(path.coords[1:]),
                          np.minimum(alpha.singular.distance(path.coords[:-1]),
                                     alpha.singular.distance(mid)))
        margin = alpha.singular.radius + cutoff
        inside = dist < margin
        if np.any(inside):
            k = int(np.argmax(inside))
            raise SingularProximity(
                f"path enters the {margin:.3g}-neighborhood of the singular set "
                f"of {alpha.kind} at step {k}", step_index=k)
    increments = np.asarray(alpha.at(mid, delta), dtype=float)
    value = float(np.sum(increments))
    lift = delta.sum(axis=0) if isinstance(path.manifold, Torus2) else None
    return PathIntegral(value, increments if retain_increments else None, lift)


def decompose_integral(alpha: OneForm, path: SamplePath,
                       spec: DiffusionSpec) -> tuple[float, float]:
    """Split a line integral into its drift and martingale parts.

    drift part = trapezoidal quadrature of the Stratonovich symbol of
    alpha along the path; martingale part = line integral minus drift
    part.  Over an ensemble the martingale part has mean zero.
    """
    if path.spec_key != spec.key():
        raise SpecMismatch(f"path was generated by {path.spec_key!r}, "
                           f"not by {spec.key()!r}")
    from .generator import symbol_function
    g = symbol_function(spec, alpha)
    total = line_integral(alpha, path).value
    drift = float(trapezoid_uniform(g(path.coords), path.dt))
    return drift, total - drift
