import numpy as np
import pytest

from stratocycle import (EnsembleSpec, Torus2, combine, decompose_integral,
                         exact_form, line_integral, scalar_field,
                         simulate_ensemble, simulate_path,
                         torus_drift_only, torus_dx, torus_dy,
                         torus_shear_diffusion, wrap_torus)
from stratocycle.errors import (SingularProximity, SpecMismatch, StepTooLarge)
from stratocycle.sde import SamplePath

rng = np.random.default_rng(13)


def loop_path(axis, n=200, other=0.3):
    """Deterministic path winding once around one fundamental loop."""
    s = np.arange(n + 1) / n
    coords = np.empty((n + 1, 2))
    coords[:, axis] = np.mod(s, 1.0)
    coords[:, 1 - axis] = other
    return SamplePath(Torus2(), s, coords, np.zeros((n, 0)), None, 1.0 / n, "manual")


def test_fundamental_loop_periods():
    xloop, yloop = loop_path(0), loop_path(1)
    assert abs(line_integral(torus_dx(), xloop).value - 1.0) <= 1e-10
    assert abs(line_integral(torus_dy(), xloop).value - 0.0) <= 1e-10
    assert abs(line_integral(torus_dx(), yloop).value - 0.0) <= 1e-10
    assert abs(line_integral(torus_dy(), yloop).value - 1.0) <= 1e-10


def test_basis_integral_equals_lift_displacement():
    spec = torus_shear_diffusion()
    path = simulate_path(spec, wrap_torus((0.25, 0.0)), 1.0, 1e-3, seed=21)
    res_x = line_integral(torus_dx(), path)
    res_y = line_integral(torus_dy(), path)
    assert abs(res_x.value - res_x.lift_displacement[0]) <= 1e-10
    assert abs(res_y.value - res_y.lift_displacement[1]) <= 1e-10
    # and the lift agrees with the path's own lift tracker
    lift = path.lift_coords()
    assert np.allclose(lift[-1] - lift[0], res_x.lift_displacement, atol=1e-12)


def test_exact_form_telescopes():
    f = scalar_field("sin_y", Torus2())
    spec = torus_shear_diffusion()
    path = simulate_path(spec, wrap_torus((0.25, 0.0)), 1.0, 1e-3, seed=4)
    val = line_integral(exact_form(f), path).value
    delta_f = float(f(path.coords[-1]) - f(path.coords[0]))
    assert abs(val - delta_f) < 0.05


def test_linearity_on_identical_path():
    spec = torus_shear_diffusion()
    path = simulate_path(spec, wrap_torus((0.25, 0.0)), 0.5, 1e-3, seed=10)
    a = 2.75
    alpha, beta = torus_dx(), torus_dy()
    lhs = line_integral(combine(a, alpha, beta), path).value
    rhs = a * line_integral(alpha, path).value + line_integral(beta, path).value
    assert abs(lhs - rhs) <= 1e-10


def test_gauge_shift_by_exact_form():
    f = scalar_field("sin_x", Torus2())
    spec = torus_shear_diffusion()
    path = simulate_path(spec, wrap_torus((0.25, 0.0)), 1.0, 1e-3, seed=17)
    alpha = torus_dy()
    shifted = combine(1.0, alpha, exact_form(f))
    gap = line_integral(shifted, path).value - line_integral(alpha, path).value
    delta_f = float(f(path.coords[-1]) - f(path.coords[0]))
    assert abs(gap - delta_f) < 0.05


def test_time_reversal_negates_integral():
    path = loop_path(0, n=157)
    rev = SamplePath(Torus2(), path.times, path.coords[::-1].copy(),
                     path.dW, None, path.dt, "manual")
    a = line_integral(torus_dx(), path).value
    b = line_integral(torus_dx(), rev).value
    assert abs(a + b) <= 1e-12


def test_step_guard():
    coords = np.array([[0.1, 0.1], [0.5, 0.1]])   # jump of 0.4
    bad = SamplePath(Torus2(), np.array([0.0, 1.0]), coords,
                     np.zeros((1, 0)), None, 1.0, "manual")
    with pytest.raises(StepTooLarge):
        line_integral(torus_dx(), bad)


def test_singular_proximity():
    f = scalar_field("log_sin_sq_x", Torus2())
    omega = exact_form(f)
    n = 50
    coords = np.stack([np.linspace(0.3, 0.5 - 1e-6, n + 1),
                       np.full(n + 1, 0.2)], axis=1)
    path = SamplePath(Torus2(), np.arange(n + 1.0), coords,
                      np.zeros((n, 0)), None, 1.0, "manual")
    with pytest.raises(SingularProximity) as err:
        line_integral(omega, path)
    assert err.value.step_index is not None


def test_decompose_deterministic_has_no_martingale_part():
    spec = torus_drift_only()
    path = simulate_path(spec, wrap_torus((0.25, 0.0)), 1.0, 1e-3, seed=0)
    drift, mart = decompose_integral(torus_dy(), path, spec)
    assert abs(mart) < 1e-5          # quadrature error only, O(dt^2)
    assert abs(drift - line_integral(torus_dy(), path).value) < 1e-5


def test_decompose_spec_mismatch():
    spec = torus_shear_diffusion()
    path = simulate_path(spec, wrap_torus((0.25, 0.0)), 0.1, 1e-3, seed=0)
    with pytest.raises(SpecMismatch):
        decompose_integral(torus_dy(), path, torus_drift_only())


def test_drift_part_nonpositive_for_dy():
    # S dy(L) = -pi sin^2(2 pi x) <= 0, so the drift part is pathwise <= 0
    spec = torus_shear_diffusion()
    for seed in (1, 2, 3):
        path = simulate_path(spec, wrap_torus((0.25, 0.0)), 1.0, 1e-3, seed=seed)
        drift, _ = decompose_integral(torus_dy(), path, spec)
        assert drift <= 0.0


def test_martingale_part_mean_zero_smoke():
    spec = torus_shear_diffusion()
    ens = EnsembleSpec(300, base_seed=61, horizon=1.0, dt=1e-3)
    parts = np.array([decompose_integral(torus_dy(), p, spec)[1]
                      for p in simulate_ensemble(spec, wrap_torus((0.25, 0.0)), ens,
                                                 stream=True)])
    stderr = parts.std(ddof=1) / np.sqrt(len(parts))
    assert abs(parts.mean()) <= 3 * stderr
