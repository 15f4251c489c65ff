"""Stratonovich SDE integration on the sphere and torus.

Scheme: Heun predictor-corrector.  With F(x) = V(x) dt + sum_i X_i(x) dW_i,

    predictor   x~ = R(x + F(x))
    corrector   x' = R(x + (F(x) + F(x~)) / 2)

where R is the manifold retraction (radial projection on the sphere,
mod-1 wrap on the torus).  The exact solution stays on the manifold, so
projecting every substep preserves the constraint without changing the
convergence order.

Randomness: one Philox (counter-based) stream per path, keyed by
blake2b(base_seed, path_index), so ensemble output is independent of
execution order.  Ensembles integrate all paths of a fixed-size chunk
in lockstep, which vectorizes the per-step field evaluations across
paths; chunk boundaries are a function of n_paths alone, never of the
thread count, so results are reproducible for a given call shape.

Streaming: long runs do not retain trajectories.  Consumers receive
each step (previous states, new states, increments, step displacement)
and maintain per-path accumulators; see the consumer classes below.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import ManifoldMismatch, NonFinite, SimulationError
from .geometry import (Manifold, ManifoldPoint, Sphere, VectorFieldSpec,
                       same_manifold)

CONVENTION_FACTORS = {"half": 0.5, "unit": 1.0}

PATH_CHUNK = 1024    # paths integrated in lockstep per chunk
STEP_BLOCK = 1024    # steps per pre-generated increment block

RNG_ALGORITHM = "philox4x64"


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class DiffusionSpec:
    """Drift plus Stratonovich noise fields on one manifold.

    ``convention`` fixes the constant c in the generator
    L f = V f + c * sum_i X_i(X_i f) used by all analysis routines:
    c = 1/2 ("half", the generator of the simulated SDE) or c = 1
    ("unit").  The convention never changes the simulated dynamics.
    """

    manifold: Manifold
    drift: Optional[VectorFieldSpec]
    noise: tuple[VectorFieldSpec, ...]
    convention: str = "half"
    deterministic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "noise", tuple(self.noise))
        if self.convention not in CONVENTION_FACTORS:
            raise ValueError(f"unknown convention {self.convention!r}")
        for f in self.fields:
            if not same_manifold(f.manifold, self.manifold):
                raise ManifoldMismatch(f"field {f.kind} lives on {f.manifold.kind}")
        if self.m == 0 and not self.deterministic:
            raise ValueError("noise-free spec must be flagged deterministic")

    @property
    def fields(self):
        return ([self.drift] if self.drift is not None else []) + list(self.noise)

    @property
    def m(self) -> int:
        return len(self.noise)

    @property
    def c(self) -> float:
        return CONVENTION_FACTORS[self.convention]

    def key(self) -> str:
        """Fingerprint used to detect path/spec mismatches."""
        drift = self.drift.kind if self.drift is not None else "none"
        noise = ",".join(f.kind for f in self.noise)
        return f"{self.manifold.kind}|{drift}|{noise}"

    def with_convention(self, convention: str) -> "DiffusionSpec":
        return DiffusionSpec(self.manifold, self.drift, self.noise,
                             convention, self.deterministic)


@dataclass(frozen=True)
class EnsembleSpec:
    n_paths: int
    base_seed: int
    horizon: float
    dt: float

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        if not (self.horizon > 0 and 0 < self.dt <= self.horizon):
            raise ValueError("need horizon > 0 and 0 < dt <= horizon")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


def derive_path_seed(base_seed: int, path_index: int) -> int:
    """64-bit per-path seed hashed from (base_seed, path_index)."""
    digest = hashlib.blake2b(f"{base_seed}:{path_index}".encode(),
                             digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# sample paths


class _PointSeq:
    """Lazy sequence view of path points as ManifoldPoint values."""

    def __init__(self, manifold: Manifold, coords: np.ndarray):
        self._manifold = manifold
        self._coords = coords

    def __len__(self):
        return self._coords.shape[0]

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [ManifoldPoint(self._manifold, c) for c in self._coords[k]]
        return ManifoldPoint(self._manifold, self._coords[k])

    def __iter__(self):
        for c in self._coords:
            yield ManifoldPoint(self._manifold, c)


@dataclass
class SamplePath:
    """Discretized trajectory with the exact increments that produced it."""

    manifold: Manifold
    times: np.ndarray          # (N+1,), times[k] = k * dt
    coords: np.ndarray         # (N+1, d), wrapped/projected states
    dW: np.ndarray             # (N, m) Brownian increments, as used
    seed: Optional[int]
    dt: float
    spec_key: str

    @property
    def points(self) -> _PointSeq:
        return _PointSeq(self.manifold, self.coords)

    @property
    def n_steps(self) -> int:
        return self.dW.shape[0]

    def step_displacements(self) -> np.ndarray:
        """Unwrapped (torus) or tangent-projected chord (sphere)
        displacement of every step, shape (N, d)."""
        _, delta = self.manifold.midpoint_displacement(self.coords[:-1], self.coords[1:])
        return delta

    def lift_coords(self) -> np.ndarray:
        """Continuous lift of the path: coords[0] plus cumulative
        unwrapped displacements.  Equals ``coords`` on the sphere."""
        if isinstance(self.manifold, Sphere):
            return self.coords
        lift = np.empty_like(self.coords)
        lift[0] = self.coords[0]
        np.cumsum(self.step_displacements(), axis=0, out=lift[1:])
        lift[1:] += self.coords[0]
        return lift

    def to_csv(self, fh) -> None:
        """Dump ``t,coord_0,...,dW_0,...`` rows, 17 significant digits.
        The final row carries no increment; its dW fields are empty."""
        d = self.coords.shape[1]
        m = self.dW.shape[1]
        header = ["t"] + [f"coord_{j}" for j in range(d)] + [f"dW_{j}" for j in range(m)]
        fh.write(",".join(header) + "\n")
        for k in range(self.coords.shape[0]):
            row = [f"{self.times[k]:.17g}"] + [f"{c:.17g}" for c in self.coords[k]]
            if k < self.n_steps:
                row += [f"{w:.17g}" for w in self.dW[k]]
            else:
                row += [""] * m
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# Heun stepping


def _field_sum(spec: DiffusionSpec, pts: np.ndarray, dt: float,
               dW: np.ndarray) -> np.ndarray:
    """V(x) dt + sum_i X_i(x) dW_i for a batch of states (..., d)."""
    if spec.drift is not None:
        acc = spec.drift(pts) * dt
    else:
        acc = np.zeros_like(pts)
    for i, X in enumerate(spec.noise):
        acc += X(pts) * dW[..., i, None]
    return acc


def _heun_core(spec: DiffusionSpec, x: np.ndarray, dt: float,
               dW: np.ndarray) -> np.ndarray:
    retract = spec.manifold.retract
    f0 = _field_sum(spec, x, dt, dW)
    pred = retract(x + f0)
    f1 = _field_sum(spec, pred, dt, dW)
    return retract(x + 0.5 * (f0 + f1))


def step_stratonovich(spec: DiffusionSpec, x: ManifoldPoint, dt: float,
                      dW) -> ManifoldPoint:
    """Advance one Heun step from a point; dW has one entry per noise field."""
    if not same_manifold(spec.manifold, x.manifold):
        raise ManifoldMismatch("point does not live on the spec manifold")
    dW = np.asarray(dW, dtype=float).reshape(-1)
    if dW.shape[0] != spec.m:
        raise ValueError(f"expected {spec.m} increments, got {dW.shape[0]}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = _heun_core(spec, x.coords, dt, dW)
    if not np.all(np.isfinite(out)):
        raise NonFinite("field evaluation produced a non-finite state")
    return ManifoldPoint(spec.manifold, out)


# ---------------------------------------------------------------------------
# streaming consumers


class PathConsumer:
    """Per-step observer for ensemble runs.

    ``observe`` is called once per step with the slice of global path
    indices being integrated, the step index k (the step maps the state
    at time k*dt to (k+1)*dt), the states before/after, the increments,
    and the active mask (False once a path was stopped at a singular
    cutoff).  ``mid``/``delta`` are the wrap-aware step midpoint and
    displacement, computed only when some consumer sets
    ``needs_middelta``; ``lift1`` is the running unwrapped lift after
    the step when some consumer sets ``needs_lift``.

    Consumers allocate full-ensemble buffers in ``prepare`` and write
    only to their chunk's slice in ``observe``, which makes chunk-level
    threading safe without locks.
    """

    needs_middelta = False
    needs_lift = False

    def prepare(self, n_paths: int, n_steps: int, dt: float, m: int,
                x0: np.ndarray, manifold: Manifold) -> None:
        pass

    def observe(self, sl: slice, k: int, x0s, x1s, dW, active,
                mid, delta, lift1) -> None:
        raise NotImplementedError

    def finalize(self) -> None:
        pass


class PathRecorder(PathConsumer):
    """Retains full trajectories and increments (small runs only)."""

    def prepare(self, n_paths, n_steps, dt, m, x0, manifold):
        d = x0.shape[-1]
        self.coords = np.empty((n_paths, n_steps + 1, d))
        self.coords[:, 0, :] = x0
        self.dW = np.empty((n_paths, n_steps, m))
        self.n_steps = n_steps

    def observe(self, sl, k, x0s, x1s, dW, active, mid, delta, lift1):
        self.coords[sl, k + 1, :] = x1s
        self.dW[sl, k, :] = dW


class LineIntegralAccumulator(PathConsumer):
    """Running Stratonovich line integral of a 1-form along each path.

    Midpoint rule: increment_k = form(mid_k, delta_k).  ``checkpoints``
    is a sequence of step indices; snapshot slot s holds the integral
    over the first checkpoints[s] steps.
    """

    needs_middelta = True

    def __init__(self, form, checkpoints: Sequence[int] = ()):
        self.form = form
        self.checkpoints = {int(k): i for i, k in enumerate(checkpoints)}

    def prepare(self, n_paths, n_steps, dt, m, x0, manifold):
        self.total = np.zeros(n_paths)
        self.snapshots = np.zeros((len(self.checkpoints), n_paths))

    def observe(self, sl, k, x0s, x1s, dW, active, mid, delta, lift1):
        inc = self.form.at(mid, delta)
        self.total[sl] += np.where(active, inc, 0.0)
        slot = self.checkpoints.get(k + 1)
        if slot is not None:
            self.snapshots[slot, sl] = self.total[sl]


class TrapezoidAccumulator(PathConsumer):
    """Running trapezoidal quadrature of g(X_t) dt along each path."""

    def __init__(self, g: Callable[[np.ndarray], np.ndarray],
                 checkpoints: Sequence[int] = ()):
        self.g = g
        self.checkpoints = {int(k): i for i, k in enumerate(checkpoints)}

    def prepare(self, n_paths, n_steps, dt, m, x0, manifold):
        self.dt = dt
        self.total = np.zeros(n_paths)
        self.snapshots = np.zeros((len(self.checkpoints), n_paths))
        self._prev: dict[int, np.ndarray] = {}

    def observe(self, sl, k, x0s, x1s, dW, active, mid, delta, lift1):
        g0 = self._prev.get(sl.start)
        if g0 is None:
            g0 = self.g(x0s)
        g1 = self.g(x1s)
        self.total[sl] += np.where(active, 0.5 * (g0 + g1) * self.dt, 0.0)
        self._prev[sl.start] = g1
        slot = self.checkpoints.get(k + 1)
        if slot is not None:
            self.snapshots[slot, sl] = self.total[sl]


class LiftTracker(PathConsumer):
    """Accumulates the unwrapped lift displacement of each path."""

    needs_middelta = True

    def prepare(self, n_paths, n_steps, dt, m, x0, manifold):
        self.displacement = np.zeros((n_paths, x0.shape[-1]))

    def observe(self, sl, k, x0s, x1s, dW, active, mid, delta, lift1):
        self.displacement[sl] += np.where(active[:, None], delta, 0.0)


class TerminalStates(PathConsumer):
    """Final state of each path (last state before a stop, if stopped)."""

    def prepare(self, n_paths, n_steps, dt, m, x0, manifold):
        self.states = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
        self.n_steps = n_steps

    def observe(self, sl, k, x0s, x1s, dW, active, mid, delta, lift1):
        if k + 1 == self.n_steps:
            self.states[sl] = x1s


class HistogramAccumulator(PathConsumer):
    """Visit-count histogram over a binning, after a burn-in step index.

    ``binning`` must provide ``n_bins`` and ``bin_index(pts) -> int
    array``; see :mod:`stratocycle.measures`.  Counts the states
    x_burn, ..., x_N of every path.  Each path chunk accumulates into
    its own buffer; buffers merge in chunk order at finalize.
    """

    def __init__(self, binning, burn_steps: int = 0):
        self.binning = binning
        self.burn_steps = int(burn_steps)

    def prepare(self, n_paths, n_steps, dt, m, x0, manifold):
        self._chunks: dict[int, np.ndarray] = {}
        self._x0_count = n_paths if self.burn_steps == 0 else 0
        self._x0_bin = int(self.binning.bin_index(np.asarray(x0)[None, :])[0])
        self.counts: Optional[np.ndarray] = None

    def observe(self, sl, k, x0s, x1s, dW, active, mid, delta, lift1):
        if k + 1 < self.burn_steps:
            return
        buf = self._chunks.get(sl.start)
        if buf is None:
            buf = self._chunks.setdefault(sl.start,
                                          np.zeros(self.binning.n_bins, np.int64))
        idx = self.binning.bin_index(x1s)
        buf += np.bincount(idx[active], minlength=self.binning.n_bins)

    def finalize(self):
        total = np.zeros(self.binning.n_bins, dtype=np.int64)
        for start in sorted(self._chunks):
            total += self._chunks[start]
        total[self._x0_bin] += self._x0_count
        self.counts = total


class ScalarEndpoints(PathConsumer):
    """f at the start and end of each path.  On the torus the final
    value is evaluated on the unwrapped lift, so functions of the
    winding (the coordinate functions) are treated correctly."""

    needs_lift = True

    def __init__(self, f):
        self.f = f

    def prepare(self, n_paths, n_steps, dt, m, x0, manifold):
        self.start = np.full(n_paths, float(self.f(np.asarray(x0))))
        self.end = np.empty(n_paths)
        self.n_steps = n_steps

    def observe(self, sl, k, x0s, x1s, dW, active, mid, delta, lift1):
        if k + 1 == self.n_steps:
            self.end[sl] = self.f(lift1 if lift1 is not None else x1s)


class StopFlags(PathConsumer):
    """Records which paths were stopped at the singular cutoff and when."""

    def prepare(self, n_paths, n_steps, dt, m, x0, manifold):
        self.stopped_at = np.full(n_paths, -1, dtype=np.int64)

    def observe(self, sl, k, x0s, x1s, dW, active, mid, delta, lift1):
        view = self.stopped_at[sl]
        view[(~active) & (view < 0)] = k

    @property
    def stopped(self) -> np.ndarray:
        return self.stopped_at >= 0


# ---------------------------------------------------------------------------
# ensemble engine


def _integrate_chunk(spec, x0, n_steps, dt, seeds, consumers, sl,
                     stop_region, stop_extra, dW_override):
    n = sl.stop - sl.start
    m = spec.m
    states = np.tile(np.asarray(x0, dtype=float), (n, 1))
    active = np.ones(n, dtype=bool)
    needs_md = any(c.needs_middelta for c in consumers)
    needs_lift = any(c.needs_lift for c in consumers)
    lift = states.copy() if needs_lift else None
    rngs = [make_rng(s) for s in seeds] if dW_override is None else None
    sqrt_dt = np.sqrt(dt)
    k = 0
    while k < n_steps:
        block = min(STEP_BLOCK, n_steps - k)
        if dW_override is None:
            dws = np.stack([rng.standard_normal((block, m)) for rng in rngs]) * sqrt_dt
        else:
            dws = np.stack([np.asarray(w[k:k + block], dtype=float)
                            for w in dW_override])
        for j in range(block):
            dW = dws[:, j, :]
            x1 = _heun_core(spec, states, dt, dW)
            if not np.all(np.isfinite(x1)):
                bad = int(np.argwhere(~np.isfinite(x1).all(axis=1))[0, 0])
                raise SimulationError("non-finite state during integration",
                                      step_index=k + j, path_index=sl.start + bad)
            if stop_region is not None:
                entering = active & stop_region.contains(x1, stop_extra)
                if np.any(entering):
                    x1 = np.where(entering[:, None], states, x1)
                    active = active & ~entering
            mid = delta = None
            if needs_md or needs_lift:
                mid, delta = spec.manifold.midpoint_displacement(states, x1)
            if needs_lift:
                lift = lift + np.where(active[:, None], delta, 0.0)
            for c in consumers:
                c.observe(sl, k + j, states, x1, dW, active, mid, delta, lift)
            states = x1
        k += block
    return states


def run_paths(spec: DiffusionSpec, x0: ManifoldPoint, ens: EnsembleSpec,
              consumers: Sequence[PathConsumer], *, threads: int = 1,
              stop_region=None, stop_extra: float = 0.0,
              seeds: Optional[Sequence[int]] = None,
              dW_override=None) -> None:
    """Integrate an ensemble, streaming every step through ``consumers``.

    Per-path randomness comes from Philox streams keyed by
    hash(base_seed, index) (or explicit ``seeds``), so the output is a
    pure function of (spec, x0, ens) regardless of thread count or
    execution order.  ``stop_region`` freezes a path (state and all
    accumulators) once it enters the region's
    (radius + stop_extra)-neighborhood.
    """
    if not same_manifold(spec.manifold, x0.manifold):
        raise ManifoldMismatch("x0 does not live on the spec manifold")
    n_steps = ens.n_steps
    if seeds is None and dW_override is None:
        seeds = [derive_path_seed(ens.base_seed, k) for k in range(ens.n_paths)]
    for c in consumers:
        c.prepare(ens.n_paths, n_steps, ens.dt, spec.m, x0.coords, spec.manifold)

    chunks = []
    for start in range(0, ens.n_paths, PATH_CHUNK):
        stop = min(start + PATH_CHUNK, ens.n_paths)
        sl = slice(start, stop)
        chunk_seeds = seeds[start:stop] if seeds is not None else None
        chunk_dw = dW_override[start:stop] if dW_override is not None else None
        chunks.append((sl, chunk_seeds, chunk_dw))

    def job(args):
        sl, chunk_seeds, chunk_dw = args
        _integrate_chunk(spec, x0.coords, n_steps, ens.dt, chunk_seeds,
                         consumers, sl, stop_region, stop_extra, chunk_dw)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(job, chunks))
    else:
        for ch in chunks:
            job(ch)
    for c in consumers:
        c.finalize()


def simulate_path(spec: DiffusionSpec, x0: ManifoldPoint, horizon: float,
                  dt: float, seed: Optional[int] = None,
                  dW: Optional[np.ndarray] = None) -> SamplePath:
    """Simulate a single path of N = round(horizon/dt) steps.

    Deterministic given (spec, x0, horizon, dt, seed).  A dW array of
    shape (N, m) may be supplied instead of a seed, e.g. increments
    coarsened from a finer path.
    """
    if seed is None and dW is None:
        raise ValueError("provide a seed or explicit increments")
    ens = EnsembleSpec(1, 0, horizon, dt)
    rec = PathRecorder()
    if dW is not None:
        dW = np.asarray(dW, dtype=float)
        if dW.shape != (ens.n_steps, spec.m):
            raise ValueError(f"dW must have shape {(ens.n_steps, spec.m)}")
        run_paths(spec, x0, ens, [rec], dW_override=[dW])
    else:
        run_paths(spec, x0, ens, [rec], seeds=[seed])
    times = np.arange(ens.n_steps + 1) * dt
    return SamplePath(spec.manifold, times, rec.coords[0], rec.dW[0],
                      seed, dt, spec.key())


def simulate_ensemble(spec: DiffusionSpec, x0: ManifoldPoint,
                      ens: EnsembleSpec, *, stream: bool = False):
    """Simulate an ensemble of independent paths.

    Returns a list of SamplePath (retained mode) or an iterator that
    yields one path at a time without holding the rest (stream mode);
    use consumers via :func:`run_paths` for functionals of large runs.
    """
    if stream:
        def gen() -> Iterator[SamplePath]:
            for k in range(ens.n_paths):
                seed = derive_path_seed(ens.base_seed, k)
                yield simulate_path(spec, x0, ens.horizon, ens.dt, seed)
        return gen()
    rec = PathRecorder()
    run_paths(spec, x0, ens, [rec])
    times = np.arange(ens.n_steps + 1) * ens.dt
    return [SamplePath(spec.manifold, times, rec.coords[k], rec.dW[k],
                       derive_path_seed(ens.base_seed, k), ens.dt, spec.key())
            for k in range(ens.n_paths)]


def coarsen_increments(dW: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments: the same Brownian
    path on a grid ``factor`` times coarser."""
    n, m = dW.shape
    if n % factor:
        raise ValueError(f"{n} steps not divisible by {factor}")
    return dW.reshape(n // factor, factor, m).sum(axis=1)
