import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from timereduction.estimator import TimeReductionInversion
from timereduction.forward import add_noise, extract_boundary, simulate
from timereduction.grid import Grid2D
from timereduction.phantoms import make_phantom


@pytest.fixture(scope="module")
def clean_data():
    g = Grid2D(nx=31)
    X, Y = g.mesh
    return extract_boundary(simulate(make_phantom("smooth_square_void", X, Y), g, 0.01, 101), g)


@pytest.fixture(scope="module")
def fitted(clean_data):
    return TimeReductionInversion(n_basis=10).fit(add_noise(clean_data, 0.05, seed=1))


def test_params_round_trip():
    est = TimeReductionInversion(eps=2e-3, x0=(0.0, 6.0))
    assert est.get_params()["eps"] == 2e-3
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert est.set_params(lam=30.0).lam == 30.0


def test_fitted_attributes(fitted):
    assert fitted.converged_ and fitted.n_iter_ == fitted.history_.n_iter
    assert fitted.f_.shape == fitted.a_.shape == (11, 11)
    assert fitted.U_.shape == (121, 10)
    assert fitted.basis_.N == 10


def test_transform_reuses_factorization(fitted, clean_data):
    lu = fitted.solver_._lu
    data = add_noise(clean_data, 0.05, seed=1)
    np.testing.assert_array_equal(fitted.transform(data), fitted.f_)
    batch = fitted.transform([data, add_noise(clean_data, 0.05, seed=2)])
    assert batch.shape == (2, 11, 11)
    assert fitted.solver_._lu is lu


def test_fit_transform_returns_f(clean_data):
    est = TimeReductionInversion(n_basis=10)
    f = est.fit_transform(clean_data)
    np.testing.assert_array_equal(f, est.f_)


def test_transform_before_fit(clean_data):
    with pytest.raises(NotFittedError):
        TimeReductionInversion().transform(clean_data)


def test_transform_rejects_other_grids(fitted):
    g = Grid2D(nx=61)
    X, Y = g.mesh
    other = extract_boundary(simulate(make_phantom("donut", X, Y), g, 0.01, 101), g)
    with pytest.raises(ValueError, match="Omega grid"):
        fitted.transform(other)


@pytest.mark.parametrize(
    "params",
    [{"n_basis": 0}, {"n_basis": 51}, {"eps": -1.0}, {"projection": "simpson"}, {"initial": "random"}, {"x0": (1, 2, 3)}],
)
def test_invalid_params_raise_at_fit(clean_data, params):
    with pytest.raises((ValueError, TypeError)):
        TimeReductionInversion(**params).fit(clean_data)


def test_rejects_non_boundary_input():
    with pytest.raises(TypeError, match="BoundaryData"):
        TimeReductionInversion().fit(np.zeros((3, 3)))


def test_auto_cutoff(clean_data):
    est = TimeReductionInversion(n_basis="auto", cutoff_tol=1e-2, max_iters=3)
    with pytest.warns(UserWarning):
        est.fit(clean_data)
    assert est.cutoff_ is not None and est.basis_.N == est.cutoff_.N
