"""Empirical occupation measures, the invariance residual test, and
coherence relative to an invariant set.

Measures are binned histograms: a torus measure lives on a k x k grid
over [0,1)^2, a sphere measure on x1-bands crossed with azimuthal bins
(bands only for n > 2, where the azimuth is not a single angle).
Binned measures keep the invariance residual and the cohomology
functional simple quadratures, and they represent the singular
invariant measures of the worked examples (point masses, circle
measures) naturally by concentration.

The invariance residual of a test function f against a measure mu is
r_f = sum_bins Lf(center) * mass.  Its pass tolerance combines a
Monte Carlo term z * sd_mu(Lf) / sqrt(n_eff), with n_eff counting one
effective sample per DECORRELATION_TIME units of path time, and an
empirical discretization allowance measured by re-evaluating the
quadrature at perturbed bin centers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainViolation, EmptyAfterBurnIn, ManifoldMismatch
from .generator import generator_function
from .geometry import Manifold, ManifoldPoint, ScalarField, Sphere, Torus2, same_manifold
from .regions import RegionSpec, sphere_poles, torus_circles  # re-export  # noqa: F401
from .sde import (DiffusionSpec, EnsembleSpec, HistogramAccumulator,
                  SamplePath, run_paths)

DECORRELATION_TIME = 2.0   # assumed residual autocorrelation scale, time units
MASS_TOL = 1e-12


# ---------------------------------------------------------------------------
# binnings


@dataclass(frozen=True)
class TorusGrid:
    """Uniform k x k grid over the fundamental domain."""

    k: int = 64

    @property
    def n_bins(self) -> int:
        return self.k * self.k

    def bin_index(self, pts: np.ndarray) -> np.ndarray:
        ij = np.clip((np.asarray(pts) * self.k).astype(np.int64), 0, self.k - 1)
        return ij[..., 0] * self.k + ij[..., 1]

    def centers(self) -> np.ndarray:
        g = (np.arange(self.k) + 0.5) / self.k
        gx, gy = np.meshgrid(g, g, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def perturbed_centers(self) -> list[np.ndarray]:
        out = []
        for axis in (0, 1):
            for sign in (-1.0, 1.0):
                c = self.centers().copy()
                c[:, axis] = np.mod(c[:, axis] + sign * 0.5 / self.k, 1.0)
                out.append(c)
        return out

    @property
    def half_diameter(self) -> float:
        return float(np.sqrt(2.0) / (2.0 * self.k))


@dataclass(frozen=True)
class SphereBands:
    """x1-bands crossed with azimuthal bins (azimuth only for S^2)."""

    sphere: Sphere
    n_bands: int = 64
    n_azimuth: int = 64

    def __post_init__(self):
        if self.sphere.n != 2 and self.n_azimuth != 1:
            raise ValueError("azimuthal binning is only defined for S^2; "
                             "use n_azimuth=1 for higher spheres")

    @property
    def n_bins(self) -> int:
        return self.n_bands * self.n_azimuth

    def bin_index(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts)
        u = np.clip(pts[..., 0], -1.0, 1.0)
        iu = np.clip(((u + 1.0) * 0.5 * self.n_bands).astype(np.int64),
                     0, self.n_bands - 1)
        if self.n_azimuth == 1:
            return iu
        theta = np.arctan2(pts[..., 2], pts[..., 1])
        it = np.clip(((theta + np.pi) / (2 * np.pi) * self.n_azimuth).astype(np.int64),
                     0, self.n_azimuth - 1)
        return iu * self.n_azimuth + it

    def _points(self, u: np.ndarray, theta: np.ndarray) -> np.ndarray:
        r = np.sqrt(np.maximum(0.0, 1.0 - u * u))
        out = np.zeros(u.shape + (self.sphere.ambient_dim,))
        out[..., 0] = u
        out[..., 1] = r * np.cos(theta)
        if self.sphere.ambient_dim > 2:
            out[..., 2] = r * np.sin(theta)
        return out

    def _grid(self, du: float = 0.0, dtheta: float = 0.0) -> np.ndarray:
        u = -1.0 + (np.arange(self.n_bands) + 0.5) * 2.0 / self.n_bands + du
        u = np.clip(u, -1.0, 1.0)
        theta = (-np.pi + (np.arange(self.n_azimuth) + 0.5)
                 * 2 * np.pi / self.n_azimuth + dtheta)
        uu, tt = np.meshgrid(u, theta, indexing="ij")
        return self._points(uu.ravel(), tt.ravel())

    def centers(self) -> np.ndarray:
        return self._grid()

    def perturbed_centers(self) -> list[np.ndarray]:
        out = [self._grid(du=s / self.n_bands) for s in (-1.0, 1.0)]
        if self.n_azimuth > 1:
            out += [self._grid(dtheta=s * np.pi / self.n_azimuth) for s in (-1.0, 1.0)]
        return out

    @property
    def half_diameter(self) -> float:
        width_u = 2.0 / self.n_bands
        width_t = 2.0 * np.pi / self.n_azimuth if self.n_azimuth > 1 else 0.0
        return float(0.5 * np.hypot(width_u, min(width_t, 2.0)))


def default_binning(manifold: Manifold, resolution: Optional[int] = None):
    if isinstance(manifold, Torus2):
        return TorusGrid(resolution or 64)
    r = resolution or 64
    if manifold.n == 2:
        return SphereBands(manifold, r, r)
    return SphereBands(manifold, r, 1)


# ---------------------------------------------------------------------------
# measures


@dataclass
class MeasureEstimate:
    manifold: Manifold
    binning: object
    masses: np.ndarray
    sample_count: int
    effective_samples: float

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if np.any(m < 0):
            raise ValueError("bin masses must be nonnegative")
        total = float(m.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses must sum to 1, got {total!r}")
        self.masses = m

    def to_csv(self, fh) -> None:
        centers = self.binning.centers()
        d = centers.shape[1]
        fh.write("bin_index," + ",".join(f"center_{j}" for j in range(d)) + ",mass\n")
        for i in range(centers.shape[0]):
            row = [str(i)] + [f"{c:.17g}" for c in centers[i]] + [f"{self.masses[i]:.17g}"]
            fh.write(",".join(row) + "\n")


def _from_counts(manifold, binning, counts, total_time) -> MeasureEstimate:
    count = int(counts.sum())
    if count == 0:
        raise EmptyAfterBurnIn("no sample points after burn-in")
    masses = counts / count
    # renormalize exactly; float division can miss 1.0 by > MASS_TOL
    masses = masses / masses.sum()
    return MeasureEstimate(manifold, binning, masses, count,
                           max(1.0, total_time / DECORRELATION_TIME))


def occupation_measure(paths: Sequence[SamplePath], binning,
                       burn_in_fraction: float = 0.1) -> MeasureEstimate:
    """Normalized visit-frequency histogram of retained paths."""
    paths = list(paths)
    if not paths:
        raise EmptyAfterBurnIn("no paths supplied")
    counts = np.zeros(binning.n_bins, dtype=np.int64)
    total_time = 0.0
    for p in paths:
        start = int(round(burn_in_fraction * p.n_steps))
        pts = p.coords[start:]
        if pts.shape[0] == 0:
            continue
        counts += np.bincount(binning.bin_index(pts), minlength=binning.n_bins)
        total_time += (p.n_steps - start) * p.dt
    return _from_counts(paths[0].manifold, binning, counts, total_time)


def occupation_from_ensemble(spec: DiffusionSpec, x0: ManifoldPoint,
                             ens: EnsembleSpec, binning, *,
                             burn_in_fraction: float = 0.1,
                             threads: int = 1) -> MeasureEstimate:
    """Streaming occupation histogram; trajectories are never retained."""
    burn_steps = int(round(burn_in_fraction * ens.n_steps))
    hist = HistogramAccumulator(binning, burn_steps)
    run_paths(spec, x0, ens, [hist], threads=threads)
    total_time = ens.n_paths * (ens.n_steps - burn_steps) * ens.dt
    return _from_counts(spec.manifold, binning, hist.counts, total_time)


def uniform_measure(manifold: Manifold, binning,
                    effective_samples: float = 1000.0) -> MeasureEstimate:
    """Synthetic uniform histogram (not invariant in general); the
    nominal effective sample count feeds the validation tolerance."""
    n = binning.n_bins
    return MeasureEstimate(manifold, binning, np.full(n, 1.0 / n),
                           int(effective_samples), effective_samples)


def point_mass(manifold: Manifold, binning, x: ManifoldPoint,
               effective_samples: float = 1000.0) -> MeasureEstimate:
    masses = np.zeros(binning.n_bins)
    masses[int(binning.bin_index(x.coords[None, :])[0])] = 1.0
    return MeasureEstimate(manifold, binning, masses,
                           int(effective_samples), effective_samples)


# ---------------------------------------------------------------------------
# invariance residuals


@dataclass
class InvariantResidual:
    function_id: str
    residual: float
    tolerance: float
    passed: bool
    mc_spread: float
    discretization: float

    def to_dict(self) -> dict:
        return {
            "function_id": self.function_id,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "mc_spread": self.mc_spread,
            "discretization": self.discretization,
        }


def validate_invariant(mu: MeasureEstimate, spec: DiffusionSpec,
                       test_functions: Sequence[ScalarField], *,
                       z: float = 4.0,
                       method: str = "auto") -> list[InvariantResidual]:
    """Residuals r_f = sum_bins Lf(center) mass(bin) with pass/fail
    verdicts.  An invariant measure drives every residual to zero; a
    non-invariant one (e.g. the uniform histogram under a non-volume-
    preserving diffusion) fails with an O(1) residual."""
    if not same_manifold(mu.manifold, spec.manifold):
        raise ManifoldMismatch("measure and spec manifolds differ")
    centers = mu.binning.centers()
    perturbed = mu.binning.perturbed_centers()
    out = []
    for f in test_functions:
        if f.singular is not None:
            bad = f.singular.contains(centers, extra=1e-9) & (mu.masses > 0)
            if np.any(bad):
                raise DomainViolation(
                    f"{f.kind} is singular on a bin with positive mass")
        lf = generator_function(spec, f, method)
        vals = lf(centers)
        r = float(np.dot(vals, mu.masses))
        spread = float(np.sqrt(max(0.0, np.dot(vals ** 2, mu.masses) - r * r)))
        disc = max(float(np.abs(np.dot(lf(p), mu.masses) - r)) for p in perturbed)
        tol = z * spread / np.sqrt(mu.effective_samples) + disc
        out.append(InvariantResidual(f.kind, r, tol, bool(abs(r) <= tol),
                                     spread, disc))
    return out


# ---------------------------------------------------------------------------
# coherence


@dataclass
class CoherenceReport:
    coherent: bool
    leaked_mass: float
    neighborhood_radius: float

    def to_dict(self) -> dict:
        return {
            "coherent": self.coherent,
            "leaked_mass": self.leaked_mass,
            "neighborhood_radius": self.neighborhood_radius,
        }


def coherence_check(mu: MeasureEstimate, W: RegionSpec,
                    neighborhood_radius: float) -> CoherenceReport:
    """True iff the measure puts (numerically) zero mass on the
    radius-neighborhood of W, i.e. mu is coherent relative to W.
    Bins are counted when they can intersect the neighborhood."""
    if neighborhood_radius <= 0:
        raise ValueError("neighborhood radius must be positive")
    margin = neighborhood_radius + mu.binning.half_diameter
    inside = W.contains(mu.binning.centers(), extra=margin)
    leaked = float(mu.masses[inside].sum())
    return CoherenceReport(bool(leaked <= 1e-9), leaked, neighborhood_radius)
