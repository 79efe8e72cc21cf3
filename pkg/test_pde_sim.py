#!/usr/bin/env python3
"""
Tests for the small-dispersion integrators, their monitors and trajectory files
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from utils.results import read_csv, read_json
from wavelab.catalog import get_density, get_potential
from wavelab.dop import fpu_hamiltonian
from wavelab.errors import ConfigError, DomainError, SimulationError
from wavelab.expressions import U, V
from wavelab.pde_sim import (FORWARD, INVERSE, VERLET, YOSHIDA4, Grid, LatticeState, default_monitors,
                             hodograph_fields, interpolation_coefficients, interpolation_transform,
                             lattice_continuum_defect, make_initial_state, monitor_conserved, run_manifest, run_to,
                             save_trajectory, spectral_tail, step)
from wavelab.wave_core import ConservedDensity, hodograph_residual

TWO_PI = 2 * math.pi


def wave(x):
    return 1 + 0.2 * np.cos(x)


def current(x):
    return 0.3 * np.sin(x)


def slope(scales, errors):
    return np.polyfit(np.log(scales), np.log(errors), 1)[0]


def boussinesq_state(epsilon=0.1, N=64, amplitude=0.1):
    return make_initial_state("boussinesq", grid=Grid(N), epsilon=epsilon,
                              fields=(lambda x: 1 + amplitude * np.sin(x), 0.0))


def test_unknown_model_suggests_a_name():
    with pytest.raises(ConfigError) as err:
        make_initial_state("bousinesq", fields=(1.0, 0.0))
    assert "boussinesq" in str(err.value)


def test_constant_data_stays_constant():
    state = make_initial_state("boussinesq", grid=Grid(32), epsilon=0.1, fields=(1.5, -0.2))
    trajectory = run_to(state, 1.0, schedule=3)
    np.testing.assert_allclose(trajectory[-1].u, 1.5, atol=1e-13)
    np.testing.assert_allclose(trajectory[-1].v, -0.2, atol=1e-13)
    assert spectral_tail(np.full(8, 1.5)) == 0.0


def test_tapered_hodograph_data():
    potential = get_potential("quadratic")
    f = ConservedDensity(potential, (U ** 3 + 3 * U * V ** 2) / 6)
    h = ConservedDensity(potential, (U ** 2 + V ** 2) / 2)
    grid = Grid(64, 0.0, 4.0)
    u, v, info = hodograph_fields(f, h, 0.3, grid, guess=(2.0, 0.15), taper=0.5)
    lo, hi = info["core"]
    assert (lo, hi) == pytest.approx((1.0, 3.0))
    for x, uu, vv in zip(grid.x, u, v):
        if lo <= x <= hi:
            assert hodograph_residual(f, h, x, 0.3, uu, vv) < 1e-12
    assert np.all(np.isfinite(u)) and np.all(np.isfinite(v))
    assert info["taper"] == 0.5
    # the wrap region joins both core ends without a jump
    assert np.max(np.abs(np.diff(np.append(u, u[0])))) < 0.3


def test_interpolation_coefficients():
    np.testing.assert_allclose(interpolation_coefficients(FORWARD, 4), [1, 0.5, 1 / 12, 0, -1 / 720], atol=1e-15)
    np.testing.assert_allclose(interpolation_coefficients(INVERSE, 3), [1, -0.5, 1 / 6, -1 / 24], atol=1e-15)
    with pytest.raises(ConfigError):
        interpolation_coefficients("sideways")


def test_interpolation_identity_cases():
    values = np.sin(np.linspace(0, TWO_PI, 16, endpoint=False))
    np.testing.assert_array_equal(interpolation_transform(values, 0.0), values)
    np.testing.assert_array_equal(interpolation_transform(np.full(8, 2.0), 0.3), np.full(8, 2.0))


def test_interpolation_round_trip_order():
    x = np.linspace(0, TWO_PI, 64, endpoint=False)
    scales = [0.4, 0.2, 0.1, 0.05]
    errors = []
    for eps in scales:
        back = interpolation_transform(interpolation_transform(np.sin(x), eps, INVERSE, TWO_PI), eps, FORWARD, TWO_PI)
        errors.append(np.max(np.abs(back - np.sin(x))))
    assert slope(scales, errors) == pytest.approx(6.0, abs=0.3)
    exact = interpolation_transform(interpolation_transform(np.sin(x), 0.3, INVERSE, TWO_PI, order=None), 0.3,
                                    FORWARD, TWO_PI, order=None)
    np.testing.assert_allclose(exact, np.sin(x), atol=1e-13)


def test_lattice_force_expansion_is_fourth_order():
    potential = get_potential("boussinesq_flipped")
    u = 1 + 0.1 * np.sin(np.linspace(0, TWO_PI, 64, endpoint=False))
    scales = [0.4, 0.2, 0.1, 0.05]
    errors = [lattice_continuum_defect(potential, u, eps, TWO_PI) for eps in scales]
    assert slope(scales, errors) == pytest.approx(4.0, abs=0.4)


def test_boussinesq_dispersion_relation():
    state = make_initial_state("boussinesq", grid=Grid(32), epsilon=0.1,
                               fields=(lambda x: 1 + 1e-6 * np.cos(x), 0.0))
    start = np.fft.rfft(state.u)[1]
    run_to(state, 1.0, dt=1e-3)
    ratio = (np.fft.rfft(state.u)[1] / start).real
    assert ratio == pytest.approx(math.cos(math.sqrt(1.01)), abs=1e-6)


def test_boussinesq_conserves_mass_and_energy():
    state = boussinesq_state()
    trajectory = run_to(state, 1.0, schedule=5, dt=5e-4)
    mass = [snap.monitors["mass"] for snap in trajectory]
    energy = [snap.monitors["energy"] for snap in trajectory]
    assert max(mass) - min(mass) < 1e-10
    assert (max(energy) - min(energy)) / abs(energy[0]) < 1e-6
    assert "filter" in state.info


def test_boussinesq_step_halving():
    finals = []
    for dt in (0.02, 0.01, 0.005):
        state = boussinesq_state()
        run_to(state, 0.5, dt=dt)
        finals.append(state.u.copy())
    ratio = np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2]))
    assert 3.0 < ratio < 5.0


def test_dispersive_correction_is_second_order():
    finals = []
    for eps in (0.2, 0.1, 0.05):
        state = boussinesq_state(epsilon=eps)
        run_to(state, 0.5, dt=1e-3)
        finals.append(state.u.copy())
    ratio = np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2]))
    assert 3.5 < ratio < 4.5


def test_nls_chart_round_trip():
    state = make_initial_state("nls_defocusing", grid=Grid(64), epsilon=0.1, fields=(wave, current))
    u, v = state.fields()
    np.testing.assert_allclose(u, wave(state.x), atol=1e-9)
    np.testing.assert_allclose(v, current(state.x), atol=1e-9)
    assert abs(state.info["velocity_shift"]) < 1e-14


def test_nls_velocity_mean_is_quantized():
    state = make_initial_state("nls_focusing", grid=Grid(64), epsilon=0.1, fields=(1.0, 0.123))
    _, v = state.fields()
    quantum = 0.1 / 1.0
    assert v[0] / quantum == pytest.approx(round(v[0] / quantum), abs=1e-9)


@pytest.mark.parametrize("model,t_end", [("nls_defocusing", 1.0), ("nls_focusing", 0.2)])
def test_nls_mass(model, t_end):
    state = make_initial_state(model, grid=Grid(128), epsilon=0.1, fields=(wave, current))
    trajectory = run_to(state, t_end, schedule=4, resolution_tol=None)
    mass = [snap.monitors["mass"] for snap in trajectory]
    assert (max(mass) - min(mass)) / mass[0] < 1e-10
    assert set(trajectory[0].columns) == {"u", "v", "re_psi", "im_psi"}


def test_toda_energy_over_long_runs():
    state = LatticeState("toda", 1.0, w=np.array([0.5, -0.5]), p=np.zeros(2), potential=get_potential("toda"))
    start = default_monitors(state)
    for _ in range(10000):
        step(state, 2e-3)
    end = default_monitors(state)
    assert abs(end["energy"] - start["energy"]) < 1e-8
    assert abs(end["momentum"] - start["momentum"]) < 1e-12
    assert abs(end["stretch"] - start["stretch"]) < 1e-12


@pytest.mark.parametrize("integrator,bounds", [(VERLET, (3.0, 5.0)), (YOSHIDA4, (12.0, 20.0))])
def test_lattice_step_halving(integrator, bounds):
    n = np.arange(8)
    finals = []
    for dt in (0.05, 0.025, 0.0125):
        state = LatticeState("toda", 1.0, w=0.3 * np.sin(TWO_PI * n / 8), p=0.1 * np.cos(TWO_PI * n / 8),
                             potential=get_potential("toda"), integrator=integrator)
        for _ in range(round(1.0 / dt)):
            step(state, dt)
        finals.append(np.concatenate([state.w, state.p]))
    ratio = np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2]))
    assert bounds[0] < ratio < bounds[1]


def test_unknown_integrator():
    with pytest.raises(ConfigError):
        LatticeState("toda", 1.0, w=np.zeros(4), p=np.zeros(4), integrator="leapfrog")


def test_fpu_energy_matches_continuum_hamiltonian():
    eps = TWO_PI / 128
    state = make_initial_state("fpu", grid=Grid.lattice(128, eps), epsilon=eps, fields=(wave, current))
    lattice = eps * default_monitors(state)["energy"]
    continuum = monitor_conserved(state, densities=[fpu_hamiltonian(state.potential)])
    assert continuum["fpu_boussinesq_flipped"] == pytest.approx(lattice, rel=1e-6)


def test_lattice_grid_must_match_epsilon():
    with pytest.raises(ConfigError):
        make_initial_state("toda", grid=Grid(64), epsilon=0.1, fields=(0.0, 0.0))


def test_ablowitz_ladik_keeps_reduction_and_energy():
    eps = TWO_PI / 64
    state = make_initial_state("ablowitz_ladik", grid=Grid.lattice(64, eps), epsilon=eps, fields=(wave, current))
    trajectory = run_to(state, 0.5, schedule=3)
    energy = [snap.monitors["energy"] for snap in trajectory]
    assert max(snap.monitors["reduction"] for snap in trajectory) < 1e-10
    assert (max(energy) - min(energy)) / abs(energy[0]) < 1e-9
    assert {"re_a", "im_a", "re_b", "im_b"} <= set(trajectory[-1].columns)


def test_ablowitz_ladik_norm_drift_follows_the_tolerance():
    eps = TWO_PI / 64
    drifts = []
    for rtol in (1e-8, 1e-12):
        state = make_initial_state("ablowitz_ladik", grid=Grid.lattice(64, eps), epsilon=eps,
                                   fields=(wave, current))
        state.rtol, state.atol = rtol, rtol * 1e-2
        norms = [snap.monitors["log_norm"] for snap in run_to(state, 1.0, schedule=5)]
        drifts.append((max(norms) - min(norms)) / abs(norms[0]))
    # not conserved to round-off: the drift tracks the solver tolerance
    assert drifts[1] < 1e-9
    assert drifts[1] < drifts[0]


def test_ablowitz_ladik_chart_round_trip():
    eps = TWO_PI / 64
    state = make_initial_state("ablowitz_ladik", grid=Grid.lattice(64, eps), epsilon=eps, fields=(wave, current),
                               order=None)
    u, v = state.fields()
    np.testing.assert_allclose(u, wave(state.x), atol=1e-10)
    np.testing.assert_allclose(v, current(state.x), atol=1e-10)


def test_ablowitz_ladik_hamiltonian_expansion():
    density = get_density("al_hamiltonian")
    errors = []
    for M in (32, 64, 128):
        eps = TWO_PI / M
        state = make_initial_state("ablowitz_ladik", grid=Grid.lattice(M, eps), epsilon=eps,
                                   fields=(wave, current), order=None)
        continuum = list(monitor_conserved(state, densities=[density]).values())[0]
        errors.append(abs(eps * default_monitors(state)["hopping"] - continuum))
    assert 8.0 < errors[0] / errors[1] < 32.0
    assert 8.0 < errors[1] / errors[2] < 32.0


def test_focusing_ablowitz_ladik_needs_negative_w():
    eps = TWO_PI / 32
    with pytest.raises(DomainError):
        make_initial_state("ablowitz_ladik_focusing", grid=Grid.lattice(32, eps), epsilon=eps, fields=(0.5, 0.0))
    state = make_initial_state("ablowitz_ladik_focusing", grid=Grid.lattice(32, eps), epsilon=eps,
                               fields=(-0.5, 0.0))
    np.testing.assert_allclose(state.b, -np.conj(state.a), atol=1e-15)


def test_snapshot_schedule():
    state = boussinesq_state()
    trajectory = run_to(state, 0.2, schedule=[0.0, 0.05, 0.2])
    assert [snap.t for snap in trajectory] == pytest.approx([0.0, 0.05, 0.2])
    assert len(run_to(state, state.t)) == 1
    with pytest.raises(ConfigError):
        run_to(state, 0.1)


def test_snapshots_are_read_only():
    snap = run_to(boussinesq_state(), 0.1)[-1]
    with pytest.raises(ValueError):
        snap.u[0] = 0.0
    with pytest.raises(TypeError):
        snap.columns["u"] = None


def test_elliptic_growth_reports_blowup():
    state = make_initial_state("boussinesq_elliptic", grid=Grid(64), epsilon=0.1,
                               fields=(lambda x: 1 + 0.05 * np.sin(x), 0.0))
    with pytest.raises(SimulationError) as err:
        run_to(state, 30.0, schedule=np.linspace(0, 30, 31), blowup=3.0, resolution_tol=None)
    assert err.value.code == "BLOWUP"
    assert 1 <= len(err.value.trajectory) < 31


def test_save_trajectory(tmp_path):
    state = boussinesq_state(N=16)
    trajectory = run_to(state, 0.5, schedule=2)
    run_dir = save_trajectory(trajectory, str(tmp_path), "bous", run_manifest(state, seed=7))
    assert sorted(os.listdir(run_dir)) == ["00000.000000.csv", "00000.500000.csv", "manifest.json"]
    header, rows = read_csv(os.path.join(run_dir, "00000.500000.csv"))
    assert header == ["x", "u", "v"]
    assert len(rows) == 16
    assert rows[3][1] == trajectory[-1].u[3]
    manifest = read_json(os.path.join(run_dir, "manifest.json"))
    assert manifest["model"] == "boussinesq"
    assert manifest["seed"] == 7
    assert len(manifest["monitors"]["mass"]) == 2


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
