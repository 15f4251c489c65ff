"""Worked diffusions used throughout the tests and the CLI."""

from __future__ import annotations

from .geometry import (Sphere, Torus2, gradient_of, scalar_field,
                       sphere_height_gradient, torus_sin_cos, torus_unit)
from .sde import DiffusionSpec


def sphere_height_diffusion(n: int = 2, convention: str = "half") -> DiffusionSpec:
    """dx = V(x) o dB on S^n with V the height gradient e1 - x1 x.

    The poles are fixed points; paths slide between them along
    meridians driven by a single Brownian motion.
    """
    sphere = Sphere(n)
    return DiffusionSpec(sphere, None, (sphere_height_gradient(sphere),), convention)


def torus_shear_diffusion(convention: str = "half") -> DiffusionSpec:
    """dz = V(z) o dB on T^2 with V = sin(2 pi x) d/dx + cos(2 pi x) d/dy.

    The circles {x = 0} and {x = 1/2} are invariant; between them the
    x-motion is a time-changed flow toward the circles while y keeps
    rotating.
    """
    torus = Torus2()
    return DiffusionSpec(torus, None, (torus_sin_cos(torus),), convention)


def torus_gradient_diffusion(amplitude: float = 0.1,
                             convention: str = "half") -> DiffusionSpec:
    """Brownian motion on T^2 with gradient drift grad F,
    F = amplitude * sin(2 pi x) sin(2 pi y)."""
    torus = Torus2()
    F = scalar_field("sin_product", torus, amplitude)
    return DiffusionSpec(torus, gradient_of(F),
                         (torus_unit(0, torus), torus_unit(1, torus)), convention)


def torus_brownian(convention: str = "half") -> DiffusionSpec:
    """Driftless Brownian motion on T^2."""
    torus = Torus2()
    return DiffusionSpec(torus, None,
                         (torus_unit(0, torus), torus_unit(1, torus)), convention)


def torus_drift_only() -> DiffusionSpec:
    """Deterministic flow of the shear field (no noise)."""
    torus = Torus2()
    return DiffusionSpec(torus, torus_sin_cos(torus), (), deterministic=True)
