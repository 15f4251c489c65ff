"""Asymptotic cycle estimation and the cohomology pairing functional.

The long-time average (1/t) int_0^t alpha dX of a closed basis form
alpha converges to the pairing of [alpha] with a homology cycle carried
by the invariant measure of the diffusion.  The estimator averages
per-path time averages over an ensemble, discarding a burn-in prefix,
with confidence intervals from across-path batch means (paths are
independent, so the CI is honest).

``estimate_J`` evaluates the same pairing against a binned measure by
quadrature of the Stratonovich symbol, and the fluctuation experiment
checks the diffusive rescaling of the centered integral: the martingale
part of int_0^{lambda t} alpha dX, scaled by lambda^{-1/2}, approaches
a Brownian motion in t as lambda grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainViolation, ManifoldMismatch, NonClosedForm
from .forms import OneForm
from .generator import symbol_function
from .geometry import ManifoldPoint, same_manifold
from .measures import MeasureEstimate
from .sde import (DiffusionSpec, EnsembleSpec, LineIntegralAccumulator,
                  TrapezoidAccumulator, run_paths)

BURN_IN_DEFAULT = 0.1
MAX_BATCHES = 20


def _batch_ci95(values: np.ndarray) -> tuple[float, np.ndarray]:
    """95% half-width via batch means over path index order."""
    n = values.shape[0]
    if n < 2:
        return 0.0, values.copy()
    nb = min(MAX_BATCHES, n)
    means = np.array([b.mean() for b in np.array_split(values, nb)])
    return float(1.96 * np.std(means, ddof=1) / np.sqrt(nb)), means


@dataclass
class CycleEstimate:
    basis: list[str]
    pairings: np.ndarray
    ci95: np.ndarray
    horizon: float
    dt: float
    n_paths: int
    burn_in: float
    batch_means: list[np.ndarray] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis,
            "pairings": self.pairings.tolist(),
            "ci95": self.ci95.tolist(),
            "meta": {
                "horizon": self.horizon,
                "dt": self.dt,
                "n_paths": self.n_paths,
                "burn_in": self.burn_in,
            },
            "batch_means": [b.tolist() for b in self.batch_means],
        }


def estimate_cycle(spec: DiffusionSpec, x0: ManifoldPoint,
                   basis: Sequence[OneForm], ens: EnsembleSpec, *,
                   burn_in: float = BURN_IN_DEFAULT,
                   threads: int = 1) -> CycleEstimate:
    """Pairing of each closed basis form with the asymptotic cycle.

    Per path j and form alpha: a_j = integral of alpha over
    [burn_in * T, T] divided by the window length; the pairing is the
    ensemble mean of a_j.  On the sphere the basis is empty and so is
    the estimate.
    """
    basis = list(basis)
    for alpha in basis:
        if not alpha.closed:
            raise NonClosedForm(f"{alpha.kind} is not flagged closed")
        if not same_manifold(alpha.manifold, spec.manifold):
            raise ManifoldMismatch(f"{alpha.kind} on {alpha.manifold.kind}")
    if not basis:
        return CycleEstimate([], np.zeros(0), np.zeros(0),
                             ens.horizon, ens.dt, ens.n_paths, burn_in)
    burn_steps = int(round(burn_in * ens.n_steps))
    t_window = (ens.n_steps - burn_steps) * ens.dt
    accs = [LineIntegralAccumulator(alpha, checkpoints=[burn_steps])
            for alpha in basis]
    run_paths(spec, x0, ens, accs, threads=threads)
    pairings, cis, batches = [], [], []
    for acc in accs:
        per_path = (acc.total - acc.snapshots[0]) / t_window
        ci, means = _batch_ci95(per_path)
        pairings.append(float(per_path.mean()))
        cis.append(ci)
        batches.append(means)
    return CycleEstimate([a.kind for a in basis], np.array(pairings),
                         np.array(cis), ens.horizon, ens.dt, ens.n_paths,
                         burn_in, batches)


def estimate_J(spec: DiffusionSpec, mu: MeasureEstimate,
               alpha: OneForm, method: str = "auto") -> float:
    """Quadrature of the Stratonovich symbol of alpha against a binned
    measure: sum_bins S alpha(L)(center) * mass."""
    if not same_manifold(mu.manifold, spec.manifold):
        raise ManifoldMismatch("measure and spec manifolds differ")
    centers = mu.binning.centers()
    if alpha.singular is not None:
        bad = alpha.singular.contains(centers, extra=1e-9) & (mu.masses > 0)
        if np.any(bad):
            raise DomainViolation(f"{alpha.kind} singular on a bin with positive mass")
    vals = symbol_function(spec, alpha, method)(centers)
    return float(np.dot(vals, mu.masses))


@dataclass
class FluctuationReport:
    form_id: str
    lambda_grid: list[float]
    t_grid: list[float]
    variances: np.ndarray        # (n_lambda, n_t)
    slopes: np.ndarray           # variance-vs-t linear fit per lambda
    r_squared: np.ndarray
    skewness: float              # terminal marginal at the largest lambda
    excess_kurtosis: float
    n_paths: int

    def to_dict(self) -> dict:
        return {
            "form_id": self.form_id,
            "lambda_grid": self.lambda_grid,
            "t_grid": self.t_grid,
            "variances": self.variances.tolist(),
            "slopes": self.slopes.tolist(),
            "r_squared": self.r_squared.tolist(),
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "n_paths": self.n_paths,
        }


def _linear_fit(t: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    A = np.stack([t, np.ones_like(t)], axis=1)
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    resid = v - A @ coef
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    if ss_tot < 1e-30:
        return float(coef[0]), 1.0
    return float(coef[0]), float(1.0 - np.sum(resid ** 2) / ss_tot)


def fluctuation_experiment(spec: DiffusionSpec, x0: ManifoldPoint,
                           alpha: OneForm, lambda_grid: Sequence[float],
                           t_grid: Sequence[float], ens: EnsembleSpec, *,
                           threads: int = 1) -> FluctuationReport:
    """Diffusive-rescaling diagnostic for the centered line integral.

    For each path, M^lambda_t = lambda^{-1/2} (int_0^{lambda t} alpha dX
    - int_0^{lambda t} S alpha(L) ds): purely the martingale part of
    the integral.  The report carries its across-path variance on the
    (lambda, t) grid, a variance-vs-t linear fit per lambda, and
    Gaussianity diagnostics (skewness, excess kurtosis) of the terminal
    marginal at the largest lambda.

    ``ens.horizon`` must cover max(lambda) * max(t); one ensemble run
    serves every grid cell.
    """
    if not alpha.closed:
        raise NonClosedForm(f"{alpha.kind} is not flagged closed")
    lambdas = sorted(float(l) for l in lambda_grid)
    ts = sorted(float(t) for t in t_grid)
    need = lambdas[-1] * ts[-1]
    if ens.horizon < need - 1e-12:
        raise ValueError(f"horizon {ens.horizon} < max(lambda)*max(t) = {need}")
    steps = sorted({int(round(lam * t / ens.dt)) for lam in lambdas for t in ts})
    slot = {k: i for i, k in enumerate(steps)}
    line = LineIntegralAccumulator(alpha, checkpoints=steps)
    quad = TrapezoidAccumulator(symbol_function(spec, alpha), checkpoints=steps)
    run_paths(spec, x0, ens, [line, quad], threads=threads)

    n_l, n_t = len(lambdas), len(ts)
    variances = np.zeros((n_l, n_t))
    slopes = np.zeros(n_l)
    r2 = np.zeros(n_l)
    terminal = None
    for i, lam in enumerate(lambdas):
        for j, t in enumerate(ts):
            s = slot[int(round(lam * t / ens.dt))]
            M = (line.snapshots[s] - quad.snapshots[s]) / np.sqrt(lam)
            variances[i, j] = float(np.var(M, ddof=1)) if ens.n_paths > 1 else 0.0
            if i == n_l - 1 and j == n_t - 1:
                terminal = M
        slopes[i], r2[i] = _linear_fit(np.array(ts), variances[i])

    mu = terminal.mean()
    m2 = np.mean((terminal - mu) ** 2)
    if m2 < 1e-30:
        skew, kurt = 0.0, 0.0
    else:
        skew = float(np.mean((terminal - mu) ** 3) / m2 ** 1.5)
        kurt = float(np.mean((terminal - mu) ** 4) / m2 ** 2 - 3.0)
    return FluctuationReport(alpha.kind, lambdas, ts, variances, slopes, r2,
                             skew, kurt, ens.n_paths)
