"""Estimator wrapper around the full inversion (basis, projection, iteration)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_boundary_data, check_choice, check_int_range, check_point, check_positive
from .basis import MAX_BASIS_SIZE, build_basis
from .carleman import (
    CarlemanConfig,
    QuasiReversibilitySolver,
    build_weight,
    fixed_point_solve,
    reconstruct_a,
    reconstruct_f,
)
from .reduction import choose_cutoff, project_boundary


class TimeReductionInversion(TransformerMixin, BaseEstimator):
    """Recover the initial condition ``f`` and damping ``a`` from lateral Cauchy data.

    ``fit`` takes a :class:`~timereduction.forward.BoundaryData`; after fitting
    ``f_`` and ``a_`` hold the reconstructions on the Omega grid, shape
    ``(n, n)``.  ``transform`` inverts further data sets sampled on the same
    Omega grid and time grid, reusing the factorized least-squares operator,
    and returns ``f`` for each.

    Parameters
    ----------
    n_basis : int or "auto"
        Number of time basis functions.  ``"auto"`` picks the smallest size
        whose expansion of the Dirichlet trace is within ``cutoff_tol``.
    initial : {"linear", "zero"}
        Starting iterate: the solution without the nonlinearity, or zero.
    """

    def __init__(
        self,
        n_basis=35,
        cutoff_tol=1e-3,
        x0=(0.0, 5.5),
        beta=25.0,
        lam=45.0,
        b="auto",
        weight_range=2.0,
        eps=1e-3,
        kappa0=1e-5,
        max_iters=50,
        clamp_M=None,
        reg_eta=1e-11,
        stop_norm="l2",
        projection="spline",
        initial="linear",
        solver="direct",
    ):
        self.n_basis = n_basis
        self.cutoff_tol = cutoff_tol
        self.x0 = x0
        self.beta = beta
        self.lam = lam
        self.b = b
        self.weight_range = weight_range
        self.eps = eps
        self.kappa0 = kappa0
        self.max_iters = max_iters
        self.clamp_M = clamp_M
        self.reg_eta = reg_eta
        self.stop_norm = stop_norm
        self.projection = projection
        self.initial = initial
        self.solver = solver

    def _carleman_config(self) -> CarlemanConfig:
        return CarlemanConfig(
            x0=check_point("x0", self.x0),
            beta=check_positive("beta", self.beta),
            lam=check_positive("lam", self.lam),
            b=self.b,
            weight_range=self.weight_range,
            eps=check_positive("eps", self.eps),
            kappa0=check_positive("kappa0", self.kappa0),
            max_iters=check_int_range("max_iters", self.max_iters, 1),
            clamp_M=check_positive("clamp_M", self.clamp_M, allow_none=True),
            reg_eta=check_positive("reg_eta", self.reg_eta),
            stop_norm=check_choice("stop_norm", self.stop_norm, {"l2", "inf"}),
        )

    def _validate_params(self):
        check_choice("projection", self.projection, {"spline", "trapezoid"})
        check_choice("initial", self.initial, {"linear", "zero"})
        check_choice("solver", self.solver, {"direct", "cg"})
        if self.n_basis != "auto":
            check_int_range("n_basis", self.n_basis, 1, MAX_BASIS_SIZE)
        else:
            check_positive("cutoff_tol", self.cutoff_tol)
        return self._carleman_config()

    def fit(self, X, y=None):
        data = check_boundary_data(X)
        config = self._validate_params()
        self.cutoff_ = None
        if self.n_basis == "auto":
            self.cutoff_ = choose_cutoff(data.p, data.times, self.cutoff_tol, rule=self.projection)
            N = self.cutoff_.N
        else:
            N = self.n_basis
        self.config_ = config
        self.basis_ = build_basis(data.T, N)
        self.omega_ = data.omega
        self.times_ = data.times.copy()
        self.weight_ = build_weight(data.omega, config)
        self.solver_ = QuasiReversibilitySolver(data.omega, self.basis_.S, self.weight_, config.eps, method=self.solver)
        self._invert(data, store=True)
        return self

    def _invert(self, data, store: bool):
        coeffs = project_boundary(data, self.basis_, rule=self.projection)
        U, history = fixed_point_solve(coeffs, self.basis_, self.omega_, self.config_, U0=self.initial, solver=self.solver_)
        n = self.omega_.n
        f = reconstruct_f(U, self.basis_).reshape(n, n)
        if store:
            self.coefficients_ = coeffs
            self.U_ = U
            self.history_ = history
            self.n_iter_ = history.n_iter
            self.converged_ = history.converged
            self.f_ = f
            self.a_ = reconstruct_a(U, self.basis_, self.config_.reg_eta).reshape(n, n)
        return f, history

    def transform(self, X):
        """Reconstruct ``f`` for one BoundaryData or a sequence of them."""
        check_is_fitted(self, "solver_")
        batch = isinstance(X, (list, tuple))
        out = []
        for data in X if batch else [X]:
            data = check_boundary_data(data)
            if data.omega != self.omega_ or not np.array_equal(data.times, self.times_):
                raise ValueError("data must share the Omega grid and time samples used in fit")
            out.append(self._invert(data, store=False)[0])
        return np.stack(out) if batch else out[0]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).f_

    def __sklearn_is_fitted__(self):
        return hasattr(self, "solver_")

