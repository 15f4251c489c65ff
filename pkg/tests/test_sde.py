import io

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from stratocycle import (DiffusionSpec, EnsembleSpec, Sphere, Torus2,
                         coarsen_increments, derive_path_seed, project_sphere,
                         scalar_field, simulate_ensemble, simulate_path,
                         sphere_height_diffusion, step_stratonovich,
                         torus_drift_only, torus_shear_diffusion, wrap_torus)
from stratocycle.sde import LineIntegralAccumulator, run_paths
from stratocycle.forms import torus_dy

rng = np.random.default_rng(7)


def test_identity_dynamics():
    spec = DiffusionSpec(Torus2(), None, (), deterministic=True)
    x = wrap_torus((0.3, 0.4))
    y = step_stratonovich(spec, x, 0.1, [])
    assert np.array_equal(y.coords, x.coords)


def test_sphere_fixed_point_at_pole():
    spec = sphere_height_diffusion()
    north = project_sphere((1.0, 0.0, 0.0))
    for dw in (0.5, -1.3, 0.0):
        y = step_stratonovich(spec, north, 1e-3, [dw])
        assert np.array_equal(y.coords, north.coords)
    path = simulate_path(spec, north, 1.0, 1e-3, seed=1)
    assert np.all(path.coords == north.coords)


def test_torus_half_circle_invariant():
    # sin(2 pi x) vanishes at x = 1/2, so the x-coordinate never moves
    spec = torus_shear_diffusion()
    path = simulate_path(spec, wrap_torus((0.5, 0.1)), 1.0, 1e-3, seed=3)
    assert np.max(np.abs(path.coords[:, 0] - 0.5)) <= 1e-12


def test_deterministic_drift_matches_ode_reference():
    spec = torus_drift_only()
    x0 = wrap_torus((0.25, 0.0))

    def rhs(t, z):
        return [np.sin(2 * np.pi * z[0]), np.cos(2 * np.pi * z[0])]

    ref = solve_ivp(rhs, (0.0, 1.0), [0.25, 0.0], rtol=1e-11, atol=1e-12)
    zT = np.mod(ref.y[:, -1], 1.0)
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        path = simulate_path(spec, x0, 1.0, dt, seed=0)
        errs.append(np.max(np.abs(path.coords[-1] - zT)))
    # Heun = RK2: second order on smooth drift
    rate = np.log2(errs[0] / errs[2]) / 2
    assert rate > 1.8
    # x increases toward the invariant circle at 1/2
    path = simulate_path(spec, x0, 1.0, 1e-3, seed=0)
    assert np.all(np.diff(path.coords[:, 0]) > 0)
    assert path.coords[-1, 0] < 0.5


def test_replay_is_bitwise():
    spec = torus_shear_diffusion()
    x0 = wrap_torus((0.25, 0.0))
    a = simulate_path(spec, x0, 0.5, 1e-3, seed=99)
    b = simulate_path(spec, x0, 0.5, 1e-3, seed=99)
    assert np.array_equal(a.coords, b.coords)
    assert np.array_equal(a.dW, b.dW)


def test_sphere_norm_preserved():
    spec = sphere_height_diffusion()
    x0 = project_sphere((0.0, 0.6, 0.8))
    path = simulate_path(spec, x0, 2.0, 1e-3, seed=5)
    assert np.max(np.abs(np.linalg.norm(path.coords, axis=1) - 1.0)) <= 1e-12


def test_ensemble_of_one_matches_single_path():
    spec = torus_shear_diffusion()
    x0 = wrap_torus((0.25, 0.0))
    ens = EnsembleSpec(1, base_seed=123, horizon=0.2, dt=1e-3)
    paths = simulate_ensemble(spec, x0, ens)
    single = simulate_path(spec, x0, 0.2, 1e-3,
                           seed=derive_path_seed(123, 0))
    assert np.array_equal(paths[0].coords, single.coords)
    assert np.array_equal(paths[0].dW, single.dW)


def test_ensemble_deterministic_and_stream_consistent():
    spec = torus_shear_diffusion()
    x0 = wrap_torus((0.25, 0.0))
    ens = EnsembleSpec(3, base_seed=11, horizon=0.1, dt=1e-3)
    a = simulate_ensemble(spec, x0, ens)
    b = simulate_ensemble(spec, x0, ens)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.coords, pb.coords)
    for pa, ps in zip(a, simulate_ensemble(spec, x0, ens, stream=True)):
        assert np.array_equal(pa.dW, ps.dW)
        assert np.allclose(pa.coords, ps.coords, rtol=0, atol=1e-13)


def test_thread_count_does_not_change_results():
    spec = torus_shear_diffusion()
    x0 = wrap_torus((0.25, 0.0))
    ens = EnsembleSpec(2500, base_seed=42, horizon=0.05, dt=1e-3)
    totals = []
    for threads in (1, 4):
        acc = LineIntegralAccumulator(torus_dy())
        run_paths(spec, x0, ens, [acc], threads=threads)
        totals.append(acc.total.copy())
    assert np.array_equal(totals[0], totals[1])


def test_strong_order_against_refined_reference():
    # same Brownian path on every grid (increments summed from the
    # dt=1e-4 reference); the mean endpoint error of the Heun scheme
    # must decay at observed rate >= 0.9 over the dt ladder
    from stratocycle.sde import TerminalStates, make_rng, run_paths

    spec = torus_shear_diffusion()
    x0 = wrap_torus((0.25, 0.0))
    dt_ref, T, n = 1e-4, 0.2, 1024
    n_ref = int(round(T / dt_ref))
    dWs = [make_rng(derive_path_seed(5, k)).standard_normal((n_ref, 1))
           * np.sqrt(dt_ref) for k in range(n)]
    term = TerminalStates()
    run_paths(spec, x0, EnsembleSpec(n, 0, T, dt_ref), [term], dW_override=dWs)
    ref = term.states.copy()

    def wrapdist(a, b):
        d = np.abs(a - b)
        return np.linalg.norm(np.minimum(d, 1.0 - d), axis=1)

    dts = (1e-2, 5e-3, 2.5e-3)
    errs = []
    for dt in dts:
        factor = int(round(dt / dt_ref))
        coarse = [coarsen_increments(w, factor) for w in dWs]
        t2 = TerminalStates()
        run_paths(spec, x0, EnsembleSpec(n, 0, T, dt), [t2], dW_override=coarse)
        errs.append(wrapdist(t2.states, ref).mean())
    rate = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert rate >= 0.9, f"observed strong rate {rate:.2f}, errors {errs}"


def test_ensemble_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec(0, 1, 1.0, 1e-3)
    with pytest.raises(ValueError):
        EnsembleSpec(1, 1, 1.0, -1e-3)
    with pytest.raises(ValueError):
        EnsembleSpec(1, 1, 1.0, 2.0)
    assert EnsembleSpec(1, 1, 1.0, 1e-3).n_steps == 1000


def test_noise_free_requires_deterministic_flag():
    with pytest.raises(ValueError):
        DiffusionSpec(Torus2(), None, ())


def test_csv_dump():
    spec = torus_shear_diffusion()
    path = simulate_path(spec, wrap_torus((0.25, 0.0)), 0.01, 1e-3, seed=8)
    buf = io.StringIO()
    path.to_csv(buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,coord_0,coord_1,dW_0"
    assert len(lines) == 12      # header + 11 states
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == 0.25
    last = lines[-1].split(",")
    assert last[3] == ""         # final row has no increment


def test_coarsen_increments():
    dW = np.arange(12.0).reshape(6, 2)
    out = coarsen_increments(dW, 3)
    assert out.shape == (2, 2)
    assert np.array_equal(out[0], dW[:3].sum(axis=0))
    with pytest.raises(ValueError):
        coarsen_increments(dW, 5)
