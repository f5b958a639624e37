import io
import math
from dataclasses import replace

import numpy as np
import pytest

from gdnls.dynamics import (
    ConfigurationError,
    DiagnosticsRecord,
    NumericalOverflow,
    SolverParams,
    Termination,
    detect_blowup,
    evolve,
    nonlinearity_g,
    read_diagnostics_csv,
    refinement_study,
    rhs_approx,
    step,
    write_diagnostics_csv,
)
from gdnls.initial_data import gaussian_bump, plane_wave
from gdnls.spectral import (
    CutoffSpec,
    GridSpec,
    SpectralField,
    derivative,
    integrate,
    to_physical,
)


def omega(a, n, sigma):
    return 4 * np.pi**2 * n**2 + 2 * np.pi * n * a ** (2 * sigma)


def exact_plane_wave(grid, a, n, sigma, t):
    return plane_wave(grid, a, n) * np.exp(-1j * omega(a, n, sigma) * t)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        SolverParams(sigma=1.0)
    with pytest.raises(ConfigurationError):
        SolverParams(sigma=2.0, dt=0.0)
    with pytest.raises(ConfigurationError):
        SolverParams(sigma=2.0, dt=2.0, t_end=1.0)
    p = SolverParams(sigma=2.0, cutoff=CutoffSpec(1 / 64))
    with pytest.raises(ConfigurationError):
        p.check_grid(GridSpec(32))
    assert SolverParams(sigma=3.0).beta_value == pytest.approx(0.5)


def test_nonlinearity(grid, random_field):
    assert np.all(nonlinearity_g(SpectralField.zeros(grid), 2.0).coeffs == 0)
    a, n, sigma = 0.8, 2, 2.0
    g = nonlinearity_g(plane_wave(grid, a, n), sigma)
    assert g.mode(n) == pytest.approx(-2 * np.pi * n * a ** (2 * sigma + 1))
    with pytest.raises(ValueError):
        nonlinearity_g(plane_wave(grid, a, n), 1.0)
    # Pointwise modulus on a field whose nonlinearity is resolved by the grid.
    f = random_field(max_freq=4)
    big = f.resample(GridSpec(64))
    u = to_physical(big)
    du = to_physical(derivative(big))
    expected = np.abs(u) ** 4 * np.abs(du)
    got = np.abs(to_physical(nonlinearity_g(big, 2.0)))
    np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-10 * expected.max())


def test_rhs(grid, random_field):
    p = SolverParams(sigma=2.0, cutoff=CutoffSpec(1 / 16))
    assert np.all(rhs_approx(SpectralField.zeros(grid), p).coeffs == 0)
    a, n = 1.0, 2
    u = plane_wave(grid, a, n)
    np.testing.assert_allclose(
        rhs_approx(u, p).coeffs, -1j * omega(a, n, 2.0) * u.coeffs, atol=1e-9
    )
    f = random_field()
    r = rhs_approx(f, SolverParams(sigma=2.0, cutoff=CutoffSpec(1 / 8)))
    # Mass is conserved: Re (rhs, f) = 0.
    assert abs(integrate(to_physical(r) * np.conj(to_physical(f))).real) < 1e-10


def test_step_plane_wave_order(grid):
    a, n, sigma = 1.0, 1, 2.0
    p = SolverParams(sigma=sigma)
    u0 = plane_wave(grid, a, n)
    assert np.all(step(SpectralField.zeros(grid), p, 1e-3).coeffs == 0)
    errs = []
    for dt in (2e-3, 1e-3):
        u1 = step(u0, p, dt)
        errs.append((u1 - exact_plane_wave(grid, a, n, sigma, dt)).l2_norm())
    assert errs[0] < 1e-7
    assert errs[0] / errs[1] > 20  # local error is O(dt^5)
    back = step(step(u0, p, 1e-3), p, -1e-3)
    assert (back - u0).l2_norm() < 1e-9


def test_step_overflow(grid):
    huge = plane_wave(grid, 1e200, 3) + plane_wave(grid, 1e200, 5)
    with pytest.raises(NumericalOverflow):
        step(huge, SolverParams(sigma=2.0), 1e-2)


def test_evolve_zero(grid):
    traj = evolve(SpectralField.zeros(grid), SolverParams(sigma=2.0, dt=1e-3, t_end=0.05, record_every=10))
    assert traj.termination is Termination.completed
    assert all(np.all(s.coeffs == 0) for s in traj.states)
    assert traj.times[-1] == pytest.approx(0.05)
    assert all(r.l2 == 0 and r.h2 == 0 for r in traj.diagnostics)


def test_evolve_plane_wave(grid):
    a, n, sigma = 1.0, 2, 2.0
    p = SolverParams(sigma=sigma, cutoff=CutoffSpec(1 / 16), dt=1e-4, t_end=0.2, record_every=500)
    traj = evolve(plane_wave(grid, a, n), p)
    err = (traj.final - exact_plane_wave(grid, a, n, sigma, 0.2)).l2_norm()
    assert err < 1e-9
    l2 = [r.l2 for r in traj.diagnostics]
    assert max(l2) - min(l2) < 1e-12


def test_evolve_conservation(random_field):
    phi = random_field(h1_target=0.5)
    p = SolverParams(sigma=2.0, cutoff=CutoffSpec(1 / 16), dt=1e-4, t_end=0.1, record_every=100)
    d = evolve(phi, p).diagnostics
    mass = np.array([r.l2**2 for r in d])
    e = np.array([r.E_eps for r in d])
    assert np.max(np.abs(mass - mass[0])) / mass[0] < 1e-10
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-8


def test_evolve_deterministic(random_field):
    phi = random_field()
    p = SolverParams(sigma=1.5, cutoff=CutoffSpec(1 / 16), dt=1e-4, t_end=0.01, record_every=10)
    a, b = evolve(phi, p), evolve(phi, p)
    assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a.states, b.states))


def record(h1, h2, l2=1.0):
    return DiagnosticsRecord(0.0, l2, h1, h2, 0, 0, 0, 0, 0, 0, 0)


def test_detect_blowup():
    p = SolverParams(sigma=2.0, h1_blowup_threshold=10.0, h2_alarm_threshold=100.0)
    assert detect_blowup([record(1, 1), record(2, 3)], p) is Termination.completed
    assert detect_blowup([record(1, 1), record(100, 3)], p) is Termination.h1_blowup_indicator
    assert detect_blowup([record(1, 1), record(0.5, 1e6)], p) is Termination.h2_growth_with_bounded_h1
    assert detect_blowup([record(1, 1), record(math.inf, 1)], p) is Termination.numerical_overflow
    with pytest.raises(ValueError):
        detect_blowup([], p)


def test_evolve_monitor_stops_run(grid):
    phi = plane_wave(grid, 1.0, 1)
    p = SolverParams(sigma=2.0, dt=1e-3, t_end=0.1, record_every=10, h2_alarm_threshold=1e-3)
    traj = evolve(phi, p)
    assert traj.termination is Termination.h2_growth_with_bounded_h1
    assert traj.times[-1] < 0.1


def test_refinement_resolved_single_mode():
    grid = GridSpec(32)
    p = SolverParams(sigma=2.0, dt=1e-4, t_end=0.05, record_every=50)
    rep = refinement_study(plane_wave(grid, 0.5, 1), p, [1 / 4, 1 / 8, 1 / 16])
    assert max(rep.distances_l2) < 1e-12
    doc = rep.to_dict()
    assert doc["schema_version"] == 1
    assert {"d_l2", "d_h1"} <= set(doc["pairs"][0])


def test_refinement_errors():
    grid = GridSpec(16)
    p = SolverParams(sigma=2.0, dt=1e-4, t_end=0.01)
    phi = plane_wave(grid, 0.5, 1)
    with pytest.raises(ConfigurationError):
        refinement_study(phi, p, [1 / 8, 1 / 32])
    with pytest.raises(ConfigurationError):
        refinement_study(phi, p, [1 / 8, 1 / 4])


def test_refinement_limit_consistency():
    grid = GridSpec(32)
    phi = gaussian_bump(grid, 1.0, 0.1)
    p = SolverParams(sigma=2.0, dt=1e-4, t_end=0.1, record_every=100)
    rep = refinement_study(phi, p, [1 / 8, 1 / 16, 1 / 32], threads=3)
    assert rep.cauchy
    last = evolve(phi, replace(p, cutoff=CutoffSpec(1 / 32)), False)
    full = evolve(phi, p, False)
    gap = max((a - b).l2_norm() for a, b in zip(last.states, full.states))
    assert gap <= rep.distances_l2[-1] + 1e-12


def test_csv_round_trip(random_field):
    p = SolverParams(sigma=2.0, cutoff=CutoffSpec(1 / 16), dt=1e-4, t_end=0.01, record_every=20)
    d = evolve(random_field(), p).diagnostics
    buf = io.StringIO()
    write_diagnostics_csv(d, buf)
    assert read_diagnostics_csv(buf.getvalue()) == d
