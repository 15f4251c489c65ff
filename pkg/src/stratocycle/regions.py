"""Region descriptors: invariant sets and singular sets with tube/cap
neighborhoods.

A region is a core set (pole points, torus circles, or an arbitrary
predicate) plus a base radius.  ``distance`` measures chart distance to
the core: ambient chord distance on the sphere, wrapped x-coordinate
distance on the torus.  ``contains(pts, extra)`` tests membership in
the core's (radius + extra)-neighborhood, which is how callers realize
"an open neighborhood U of W".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import Manifold, Sphere, Torus2


@dataclass(frozen=True)
class RegionSpec:
    kind: str
    manifold: Manifold
    radius: float = 0.0
    distance_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    predicate: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: tuple = ()

    def distance(self, pts: np.ndarray) -> np.ndarray:
        """Chart distance from points (..., d) to the region core."""
        if self.distance_fn is None:
            raise ValueError(f"region {self.kind!r} has no distance function")
        return self.distance_fn(np.asarray(pts, dtype=float))

    def contains(self, pts: np.ndarray, extra: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the (radius + extra)-neighborhood."""
        pts = np.asarray(pts, dtype=float)
        if self.distance_fn is not None:
            return self.distance(pts) < self.radius + extra
        return np.asarray(self.predicate(pts), dtype=bool)


def sphere_poles(sphere: Sphere = Sphere(2), cap_radius: float = 0.05) -> RegionSpec:
    """The two fixed poles (+-1, 0, ..., 0) with ambient cap radius."""
    def dist(pts):
        north = np.zeros(sphere.ambient_dim)
        north[0] = 1.0
        dn = np.linalg.norm(pts - north, axis=-1)
        ds = np.linalg.norm(pts + north, axis=-1)
        return np.minimum(dn, ds)
    return RegionSpec("sphere_poles", sphere, cap_radius, dist, params=(cap_radius,))


def torus_circles(torus: Torus2, x_values=(0.5,), tube_radius: float = 0.05) -> RegionSpec:
    """Union of vertical circles {x = x0} with a tube radius in x."""
    xs = tuple(float(v) for v in x_values)
    def dist(pts):
        x = pts[..., 0]
        d = np.full(x.shape, np.inf)
        for x0 in xs:
            raw = np.mod(x - x0, 1.0)
            d = np.minimum(d, np.minimum(raw, 1.0 - raw))
        return d
    return RegionSpec("torus_circles", torus, tube_radius, dist, params=(xs, tube_radius))


def user_region(kind: str, manifold: Manifold, predicate,
                distance_fn=None, radius: float = 0.0) -> RegionSpec:
    return RegionSpec(f"user:{kind}", manifold, radius, distance_fn, predicate)
