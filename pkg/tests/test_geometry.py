import numpy as np
import pytest

from conftest import random_sphere_points, random_torus_points
from stratocycle import (ManifoldPoint, Sphere, TangentVector, Torus2,
                         eval_field, gradient_of, project_sphere,
                         scalar_field, sphere_height_gradient, torus_sin_cos,
                         wrap_torus)
from stratocycle.errors import ManifoldMismatch, NonFinite, ZeroVector

rng = np.random.default_rng(20260809)


# -- project_sphere ---------------------------------------------------------

def test_project_scales_axis_vector():
    p = project_sphere((2.0, 0.0, 0.0))
    assert np.array_equal(p.coords, [1.0, 0.0, 0.0])


def test_project_identity_on_unit_vectors():
    p = project_sphere((1.0, 0.0, 0.0, 0.0))
    assert np.array_equal(p.coords, [1.0, 0.0, 0.0, 0.0])
    assert p.manifold == Sphere(3)


def test_project_diagonal():
    p = project_sphere((1.0, 1.0, 0.0))
    assert abs(np.linalg.norm(p.coords) - 1.0) < 1e-15
    # output parallel to input
    cross = np.cross(p.coords, [1.0, 1.0, 0.0])
    assert np.linalg.norm(cross) < 1e-15
    assert np.allclose(p.coords, [1 / np.sqrt(2), 1 / np.sqrt(2), 0.0])


def test_project_idempotent_random():
    for v in random_sphere_points(rng, 50):
        p = project_sphere(v)
        q = project_sphere(p.coords)
        assert np.all(np.abs(q.coords - p.coords) <= 2e-16)


def test_project_zero_vector_raises():
    with pytest.raises(ZeroVector):
        project_sphere((0.0, 0.0, 0.0))
    with pytest.raises(NonFinite):
        project_sphere((np.nan, 0.0, 0.0))


# -- wrap_torus -------------------------------------------------------------

def test_wrap_examples():
    assert np.allclose(wrap_torus((1.25, -0.5)).coords, [0.25, 0.5])
    assert np.array_equal(wrap_torus((0.0, 1.0)).coords, [0.0, 0.0])
    w = wrap_torus((0.999999, 2.000001)).coords
    assert np.allclose(w, [0.999999, 0.000001], atol=1e-12)


def test_wrap_nonfinite():
    with pytest.raises(NonFinite):
        wrap_torus((np.inf, 0.0))


def test_wrap_integer_shift_compatibility():
    for p in random_torus_points(rng, 50):
        shift = rng.integers(-3, 4, size=2).astype(float)
        a = wrap_torus(wrap_torus(p).coords + shift).coords
        b = wrap_torus(p + shift).coords
        assert np.allclose(a, b, atol=1e-12)


# -- point/tangent invariants ----------------------------------------------

def test_point_validation():
    with pytest.raises(ManifoldMismatch):
        ManifoldPoint(Sphere(2), np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ManifoldMismatch):
        ManifoldPoint(Torus2(), np.array([1.0, 0.5]))   # 1.0 not in [0,1)


def test_tangent_validation():
    north = project_sphere((1.0, 0.0, 0.0))
    TangentVector(north, np.array([0.0, 1.0, 0.0]))
    with pytest.raises(ManifoldMismatch):
        TangentVector(north, np.array([1.0, 0.0, 0.0]))


# -- fields ------------------------------------------------------------------

def test_height_gradient_at_pole_and_equator():
    V = sphere_height_gradient(Sphere(2))
    north = project_sphere((1.0, 0.0, 0.0))
    assert np.allclose(eval_field(V, north).components, 0.0, atol=1e-15)
    eq = project_sphere((0.0, 1.0, 0.0))
    assert np.allclose(eval_field(V, eq).components, [1.0, 0.0, 0.0])


def test_height_gradient_tangency_random():
    V = sphere_height_gradient(Sphere(2))
    pts = random_sphere_points(rng, 100)
    vals = V(pts)
    inner = np.abs(np.sum(vals * pts, axis=1))
    assert inner.max() < 1e-10


def test_torus_sin_cos_value():
    W = torus_sin_cos(Torus2())
    p = wrap_torus((0.25, 0.7))
    assert np.allclose(eval_field(W, p).components, [1.0, 0.0], atol=1e-12)


def test_field_manifold_mismatch():
    V = sphere_height_gradient(Sphere(2))
    with pytest.raises(ManifoldMismatch):
        eval_field(V, wrap_torus((0.1, 0.2)))


@pytest.mark.parametrize("kind", ["height", "half_height_sq"])
def test_sphere_gradients_match_finite_differences(kind):
    # d/dt f(R(x + t w)) at t=0 equals <grad f, w>; central differences
    # along the retracted curve converge at O(h^2)
    sphere = Sphere(2)
    f = scalar_field(kind, sphere)
    grad = gradient_of(f)
    pts = random_sphere_points(rng, 20)
    w = rng.standard_normal(pts.shape)
    w -= np.sum(w * pts, axis=1, keepdims=True) * pts
    errs = []
    for h in (1e-3, 5e-4):
        plus = sphere.retract(pts + h * w)
        minus = sphere.retract(pts - h * w)
        fd = (f(plus) - f(minus)) / (2 * h)
        exact = np.sum(grad(pts) * w, axis=1)
        errs.append(np.max(np.abs(fd - exact)))
    assert errs[0] < 1e-5
    assert errs[1] < errs[0] / 3.0   # ~O(h^2)


def test_torus_gradients_match_finite_differences():
    torus = Torus2()
    pts = random_torus_points(rng, 30)
    for kind in ("sin_x", "sin_y", "cos_x", "cos_y", "sin_product", "coord_y"):
        f = scalar_field(kind, torus)
        h = 1e-5
        for axis in (0, 1):
            e = np.zeros(2)
            e[axis] = h
            fd = (f(pts + e) - f(pts - e)) / (2 * h)
            assert np.allclose(fd, f.grad(pts)[:, axis], atol=1e-6)
