import numpy as np
import pytest

from oracles import damped_ode, discrete_damped_ode
from timereduction.forward import (
    BoundaryData,
    add_noise,
    extract_boundary,
    load_boundary_data,
    save_boundary_data,
    simulate,
)
from timereduction.grid import Grid2D
from timereduction.phantoms import PHANTOM_NAMES, make_phantom


@pytest.fixture(scope="module")
def constant_run():
    g = Grid2D(nx=31)
    X, Y = g.mesh
    wave = simulate(make_phantom("constant_c", X, Y, c=2.0, a0=0.5), g, 0.005, 201)
    return g, wave


def test_constant_phantom_follows_discrete_ode(constant_run):
    g, wave = constant_run
    data = extract_boundary(wave, g)
    ref = discrete_damped_ode(2.0, 0.5, 0.005, 201)
    # the stencil moves one node per step, and Omega is 10 nodes from the box edge
    np.testing.assert_allclose(data.p[:, :10], np.broadcast_to(ref[:10], (data.p.shape[0], 10)), rtol=1e-13)
    assert np.abs(data.q[:, :10]).max() < 1e-10
    # later the leaked edge signal is tiny, the physical front arrives only at t = 2
    np.testing.assert_allclose(data.p, np.broadcast_to(ref, data.p.shape), rtol=1e-4)


def test_constant_phantom_close_to_exponential(constant_run):
    g, wave = constant_run
    p = extract_boundary(wave, g).p
    exact = damped_ode(2.0, 0.5, wave.times)
    assert np.abs(p / exact - 1).max() < 0.02


def test_time_refinement_is_first_order():
    errs = []
    for dt in (0.01, 0.005, 0.0025):
        Nt = int(round(1 / dt)) + 1
        u = discrete_damped_ode(1.0, 0.5, dt, Nt)
        errs.append(np.abs(u - damped_ode(1.0, 0.5, np.arange(Nt) * dt)).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))


def test_cfl_violation_names_the_limit():
    g = Grid2D(nx=31)
    X, Y = g.mesh
    with pytest.raises(ValueError, match="0.141421"):
        simulate(make_phantom("donut", X, Y), g, 0.2, 10)


def test_box_edges_stay_zero_and_field_bounded(desk_grid):
    X, Y = desk_grid.mesh
    wave = simulate(make_phantom("donut", X, Y), desk_grid, 0.005, 101)
    v = wave.values
    assert np.all(v[:, 0, :] == 0) and np.all(v[:, :, -1] == 0)
    assert 1.0 < wave.bound < 3.0


@pytest.mark.parametrize("name", PHANTOM_NAMES)
def test_every_phantom_simulates(name):
    g = Grid2D(nx=31)
    X, Y = g.mesh
    ph = make_phantom(name, X, Y)
    data = extract_boundary(simulate(ph, g, 0.01, 21), g)
    assert np.isfinite(data.p).all() and np.isfinite(data.q).all()


def test_stride_extraction_keeps_coarse_boundary():
    g = Grid2D(nx=61)
    X, Y = g.mesh
    wave = simulate(make_phantom("smooth_square_void", X, Y), g, 0.01, 11)
    fine, coarse = extract_boundary(wave, g), extract_boundary(wave, g, stride=2)
    assert coarse.omega.n == 11
    # corner (-1, -1) is the first node in both walks
    np.testing.assert_array_equal(coarse.p[0], fine.p[0])


@pytest.fixture(scope="module")
def small_data():
    g = Grid2D(nx=31)
    X, Y = g.mesh
    return extract_boundary(simulate(make_phantom("donut", X, Y), g, 0.01, 51), g)


def test_noise_is_bounded_and_seeded(small_data):
    noisy = add_noise(small_data, 0.1, seed=3)
    nz = small_data.p != 0
    assert np.abs(noisy.p[nz] / small_data.p[nz] - 1).max() <= 0.1
    again = add_noise(small_data, 0.1, seed=3)
    np.testing.assert_array_equal(noisy.p, again.p)
    np.testing.assert_array_equal(noisy.q, again.q)
    assert not np.array_equal(noisy.p, add_noise(small_data, 0.1, seed=4).p)
    assert noisy.noise_level == 0.1 and noisy.seed == 3


def test_zero_noise_is_identity(small_data):
    same = add_noise(small_data, 0.0, seed=1)
    np.testing.assert_array_equal(same.p, small_data.p)


def test_noise_level_range(small_data):
    with pytest.raises(ValueError):
        add_noise(small_data, 1.0)


def test_save_load_round_trip_is_exact(tmp_path, small_data):
    noisy = add_noise(small_data, 0.05, seed=7)
    save_boundary_data(noisy, tmp_path)
    back = load_boundary_data(tmp_path)
    np.testing.assert_array_equal(back.p, noisy.p)
    np.testing.assert_array_equal(back.q, noisy.q)
    np.testing.assert_array_equal(back.times, noisy.times)
    assert back.omega == noisy.omega and back.seed == 7


def test_boundary_data_shape_checks(small_data):
    with pytest.raises(ValueError):
        BoundaryData(small_data.omega, small_data.times, small_data.p[:, :-1], small_data.q)
