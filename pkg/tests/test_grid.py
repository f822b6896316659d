import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timereduction.grid import Grid2D, GridAlignmentError, OmegaGrid
from timereduction.ordering import nested_dissection


def test_boundary_walk_is_counter_clockwise(small_omega):
    xy = small_omega.boundary_xy
    assert tuple(xy[0]) == (-1.0, -1.0)
    assert len(xy) == 4 * (small_omega.n - 1)
    # signed area of the boundary polygon is positive
    x, y = xy[:, 0], xy[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) == pytest.approx(4.0)


def test_boundary_and_interior_partition_nodes(small_omega):
    allnodes = np.sort(np.concatenate([small_omega.boundary, small_omega.interior]))
    np.testing.assert_array_equal(allnodes, np.arange(small_omega.size))


def test_laplacian_exact_on_quadratics(small_omega):
    X, Y = small_omega.mesh
    u = (3 * X**2 - 2 * Y**2 + X * Y + X).ravel()
    np.testing.assert_allclose(small_omega.laplacian_matrix() @ u, 2.0, atol=1e-10)


@pytest.mark.parametrize("alpha,beta", [(1.0, 0.0), (0.0, 1.0), (2.0, -3.0)])
def test_neumann_exact_on_linear_fields(small_omega, alpha, beta):
    X, Y = small_omega.mesh
    q = small_omega.neumann_matrix() @ (alpha * X + beta * Y).ravel()
    xy = small_omega.boundary_xy
    nx = np.where(np.isclose(xy[:, 0], 1), 1.0, np.where(np.isclose(xy[:, 0], -1), -1.0, 0.0))
    ny = np.where(np.isclose(xy[:, 1], 1), 1.0, np.where(np.isclose(xy[:, 1], -1), -1.0, 0.0))
    norm = np.hypot(nx, ny)
    np.testing.assert_allclose(q, (alpha * nx + beta * ny) / norm, atol=1e-12)


def test_neumann_second_order_on_quadratic():
    errs = []
    for n in (11, 21, 41):
        om = OmegaGrid(-1.0, 1.0, n)
        X, Y = om.mesh
        q = om.neumann_matrix() @ (X**2).ravel()
        on_right = np.isclose(om.boundary_xy[:, 0], 1) & ~np.isclose(np.abs(om.boundary_xy[:, 1]), 1)
        errs.append(np.abs(q[on_right] - 2.0).max())
    # one-sided stencil is exact for quadratics
    assert max(errs) < 1e-10


def test_gradient_matrices_shapes_and_values(small_omega):
    Gx, Gy = small_omega.gradient_matrices()
    X, Y = small_omega.mesh
    np.testing.assert_allclose(Gx @ (2 * X).ravel(), 2.0, atol=1e-12)
    np.testing.assert_allclose(Gy @ (2 * X).ravel(), 0.0, atol=1e-12)


def test_grid_alignment_is_checked():
    with pytest.raises(GridAlignmentError):
        Grid2D(nx=81)
    g = Grid2D(nx=61)
    assert g.n_omega == 21
    assert g.omega(2).n == 11
    with pytest.raises(GridAlignmentError):
        g.omega(3)


def test_omega_must_sit_inside_box():
    with pytest.raises(ValueError):
        Grid2D(omega_min=-3.0)


@settings(max_examples=20, deadline=None)
@given(nx=st.integers(1, 40), ny=st.integers(1, 40))
def test_nested_dissection_is_a_permutation(nx, ny):
    order = nested_dissection(nx, ny)
    np.testing.assert_array_equal(np.sort(order), np.arange(nx * ny))
