import numpy as np
import pytest

from stratocycle import (Sphere, Torus2, project_sphere,
                         sphere_height_diffusion, torus_shear_diffusion,
                         wrap_torus)


@pytest.fixture
def torus_spec():
    return torus_shear_diffusion()


@pytest.fixture
def sphere_spec():
    return sphere_height_diffusion()


@pytest.fixture
def torus_x0():
    return wrap_torus((0.25, 0.0))


@pytest.fixture
def equator():
    return project_sphere((0.0, 1.0, 0.0))


def random_sphere_points(rng, n, dim=3):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_torus_points(rng, n):
    return rng.random((n, 2))
