"""Carleman-weighted quasi-reversibility and the contraction iteration.

One step of the iteration minimizes, over coefficient fields ``phi`` that
match the Dirichlet data exactly,

    sum_interior w_rel |Lap_h phi - S phi - F(V)|^2 dx^2
  + sum_boundary      |d_nu phi - neumann data|^2 dx
  + eps * (|phi|^2 + |grad_h phi|^2 + |Lap_h phi|^2) dx^2

with ``w_rel = exp(2 lam (r/b)^-beta - max)``, ``r = |x - x0|``.  The
normal-equations matrix does not depend on ``V`` or on the data, so it is
assembled and factorized once and every iteration is a pair of triangular
solves.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import TimeBasis, nonlinear_couplings
from .grid import OmegaGrid
from .ordering import nested_dissection
from .reduction import CoefficientBoundary, damping_prefactor, evaluate_F


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CarlemanConfig:
    """Inversion parameters.

    ``b="auto"`` picks the normalization radius so that the log of the weight
    varies by ``weight_range`` over Omega (closed form, see ``resolve_b``).
    """

    x0: tuple[float, float] = (0.0, 5.5)
    beta: float = 25.0
    lam: float = 45.0
    b: float | str = "auto"
    weight_range: float = 2.0
    eps: float = 1e-3
    kappa0: float = 1e-5
    max_iters: int = 50
    clamp_M: float | None = None
    reg_eta: float = 1e-11
    stop_norm: str = "l2"

    def __post_init__(self):
        if self.stop_norm not in ("l2", "inf"):
            raise ValueError("stop_norm must be 'l2' or 'inf'")
        if self.lam <= 0 or self.beta <= 0:
            raise ValueError("lam and beta must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.reg_eta <= 0:
            raise ValueError("reg_eta must be positive")
        if self.kappa0 <= 0 or self.max_iters < 1:
            raise ValueError("kappa0 must be positive and max_iters at least 1")
        if isinstance(self.b, str):
            if self.b != "auto":
                raise ValueError("b must be a positive number or 'auto'")
            if self.weight_range <= 0:
                raise ValueError("weight_range must be positive")
        elif self.b <= 0:
            raise ValueError("b must be positive")
        if self.clamp_M is not None and self.clamp_M <= 0:
            raise ValueError("clamp_M must be positive")

    def resolve_b(self, r: np.ndarray) -> float:
        if not isinstance(self.b, str):
            return float(self.b)
        r_min, r_max = float(r.min()), float(r.max())
        # 2 lam b^beta (r_min^-beta - r_max^-beta) = weight_range, solved in logs
        log_gap = -self.beta * np.log(r_min) + np.log1p(-((r_min / r_max) ** self.beta))
        return float(np.exp((np.log(self.weight_range) - np.log(2 * self.lam) - log_gap) / self.beta))


@dataclass(frozen=True)
class WeightField:
    logw: np.ndarray
    w_rel: np.ndarray
    b: float
    r: np.ndarray


def build_weight(omega: OmegaGrid, config: CarlemanConfig) -> WeightField:
    """Carleman weight at every node of Omega, flattened in grid order."""
    X, Y = omega.mesh
    x0 = np.asarray(config.x0, dtype=float)
    if omega.omega_min <= x0[0] <= omega.omega_max and omega.omega_min <= x0[1] <= omega.omega_max:
        raise ValueError(f"x0={tuple(x0)} lies in the closure of Omega")
    r = np.hypot(X - x0[0], Y - x0[1]).ravel()
    b = config.resolve_b(r)
    with np.errstate(over="ignore"):
        logw = 2.0 * config.lam * np.exp(-config.beta * np.log(r / b))
    if not np.isfinite(logw).all():
        raise ValueError("Carleman weight exponent overflows; increase b or decrease beta")
    w_rel = np.exp(logw - logw.max())
    return WeightField(logw=logw, w_rel=w_rel, b=b, r=r)


@dataclass
class LinearStepSystem:
    """Least-squares system ``min |A[:, free] x - (rhs - A[:, fixed] u_fixed)|``.

    Unknowns are node-major: entry ``node * N + m`` is field ``m`` at ``node``.
    """

    A: sp.csr_matrix
    rhs: np.ndarray
    blocks: dict[str, slice]
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray


class QuasiReversibilitySolver:
    """Assembled and factorized least-squares operator for one (grid, basis, weight, eps)."""

    def __init__(
        self,
        omega: OmegaGrid,
        S: np.ndarray,
        weight: WeightField,
        eps: float,
        method: str = "direct",
        cg_rtol: float = 1e-10,
        cg_maxiter: int | None = None,
    ):
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown solver method {method!r}")
        self.omega = omega
        self.S = np.asarray(S, dtype=float)
        self.N = self.S.shape[0]
        self.weight = weight
        self.eps = eps
        self.method = method
        self.cg_rtol = cg_rtol
        self.cg_maxiter = cg_maxiter
        self._assemble()
        self._factorize()

    def _assemble(self):
        om, N, dx = self.omega, self.N, self.omega.dx
        eye_N = sp.identity(N, format="csr")
        L = om.laplacian_matrix()
        inner = om.interior
        E = sp.csr_matrix((np.ones(inner.size), (np.arange(inner.size), inner)), shape=(inner.size, om.size))
        self.pde_scale = np.repeat(np.sqrt(self.weight.w_rel[inner]) * dx, N)
        pde = sp.diags(self.pde_scale) @ (sp.kron(L, eye_N) - sp.kron(E, sp.csr_matrix(self.S)))
        # Neumann penalty carries the largest PDE weight
        self.neumann_scale = np.sqrt(dx * self.weight.w_rel.max())
        neu = self.neumann_scale * sp.kron(om.neumann_matrix(), eye_N)
        Gx, Gy = om.gradient_matrices()
        reg = np.sqrt(self.eps) * dx * sp.vstack(
            [sp.identity(om.size * N), sp.kron(Gx, eye_N), sp.kron(Gy, eye_N), sp.kron(L, eye_N)]
        )
        self.A = sp.vstack([pde, neu, reg]).tocsc()
        n_pde, n_neu = pde.shape[0], neu.shape[0]
        self.blocks = {
            "pde": slice(0, n_pde),
            "neumann": slice(n_pde, n_pde + n_neu),
            "regularization": slice(n_pde + n_neu, self.A.shape[0]),
        }
        fields = np.arange(N)
        self.fixed = (om.boundary[:, None] * N + fields).ravel()
        n_in = om.n - 2
        order = nested_dissection(n_in, n_in)
        ii, jj = np.divmod(order, n_in)
        nodes = (ii + 1) * om.n + (jj + 1)
        self.free = (nodes[:, None] * N + fields).ravel()
        self.A_free = self.A[:, self.free]
        self.A_fixed = self.A[:, self.fixed]

    def _factorize(self):
        self.M = (self.A_free.T @ self.A_free).tocsc()
        self._lu = None
        if self.method == "direct":
            try:
                self._lu = spla.splu(
                    self.M,
                    permc_spec="NATURAL",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
            except (RuntimeError, MemoryError) as exc:
                warnings.warn(f"sparse factorization failed ({exc}); falling back to CG", stacklevel=3)
        if self._lu is None:
            self._jacobi = 1.0 / self.M.diagonal()

    def rhs(self, boundary: CoefficientBoundary, F_interior: np.ndarray | None = None) -> np.ndarray:
        b = np.zeros(self.A.shape[0])
        if F_interior is not None:
            if not np.isfinite(F_interior).all():
                raise ValueError("F contains non-finite values")
            b[self.blocks["pde"]] = self.pde_scale * np.ravel(F_interior)
        b[self.blocks["neumann"]] = self.neumann_scale * boundary.neumann.ravel()
        return b

    def system(self, boundary: CoefficientBoundary, F_interior: np.ndarray | None = None) -> LinearStepSystem:
        return LinearStepSystem(
            A=self.A.tocsr(),
            rhs=self.rhs(boundary, F_interior),
            blocks=dict(self.blocks),
            free=self.free,
            fixed=self.fixed,
            fixed_values=boundary.dirichlet.ravel(),
        )

    def _solve_normal(self, g: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(g)
        precond = spla.LinearOperator(self.M.shape, matvec=lambda v: self._jacobi * v)
        x, info = spla.cg(self.M, g, rtol=self.cg_rtol, maxiter=self.cg_maxiter or 20 * self.M.shape[0], M=precond)
        res = float(np.linalg.norm(self.M @ x - g) / max(np.linalg.norm(g), 1e-300))
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (relative residual {res:.2e})", res)
        return x

    def solve(self, boundary: CoefficientBoundary, F_interior: np.ndarray | None = None) -> np.ndarray:
        """Minimizer as an ``(n_nodes, N)`` array; ``F_interior`` is ``(n_interior, N)`` or None."""
        if boundary.N != self.N or boundary.dirichlet.shape[0] != self.omega.boundary.size:
            raise ValueError("boundary coefficients do not match the solver layout")
        u_fixed = boundary.dirichlet.ravel()
        b = self.rhs(boundary, F_interior) - self.A_fixed @ u_fixed
        x = self._solve_normal(self.A_free.T @ b)
        U = np.empty(self.omega.size * self.N)
        U[self.free] = x
        U[self.fixed] = u_fixed
        return U.reshape(self.omega.size, self.N)

    def objective(self, U: np.ndarray, boundary: CoefficientBoundary, F_interior=None) -> float:
        r = self.A @ U.ravel() - self.rhs(boundary, F_interior)
        return float(r @ r)


def quasi_reversibility_step(
    V: np.ndarray | None,
    boundary: CoefficientBoundary,
    basis: TimeBasis,
    omega: OmegaGrid,
    config: CarlemanConfig,
    solver: QuasiReversibilitySolver | None = None,
) -> np.ndarray:
    """One application of the contraction map; ``V=None`` drops the nonlinearity."""
    if solver is None:
        solver = QuasiReversibilitySolver(omega, basis.S, build_weight(omega, config), config.eps)
    F = None
    if V is not None:
        V = np.asarray(V, dtype=float)
        if not np.isfinite(V).all():
            raise ValueError("iterate contains non-finite values")
        F = evaluate_F(V[omega.interior], nonlinear_couplings(basis), config.reg_eta)
    return solver.solve(boundary, F)


def initial_guess(boundary, basis, omega, config, solver=None) -> np.ndarray:
    """Regularized solution of the linear system without F."""
    return quasi_reversibility_step(None, boundary, basis, omega, config, solver)


@dataclass
class IterationHistory:
    rel_diff_inf: list[float] = field(default_factory=list)
    rel_diff_l2: list[float] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def n_iter(self) -> int:
        return len(self.rel_diff_l2)

    def contraction_ratios(self) -> np.ndarray:
        d = np.asarray(self.rel_diff_l2)
        return d[1:] / d[:-1]


def fixed_point_solve(
    boundary: CoefficientBoundary,
    basis: TimeBasis,
    omega: OmegaGrid,
    config: CarlemanConfig,
    U0: str | np.ndarray = "linear",
    solver: QuasiReversibilitySolver | None = None,
) -> tuple[np.ndarray, IterationHistory]:
    """Iterate ``U_{n+1} = Phi(U_n)`` until the relative step is at most ``kappa0``.

    The step is measured in the norm named by ``config.stop_norm``; both the
    L2 and the sup-norm series are recorded either way.
    """
    if solver is None:
        solver = QuasiReversibilitySolver(omega, basis.S, build_weight(omega, config), config.eps)
    couplings = nonlinear_couplings(basis)
    if isinstance(U0, str):
        if U0 == "linear":
            U = solver.solve(boundary)
        elif U0 == "zero":
            U = np.zeros((omega.size, basis.N))
        else:
            raise ValueError(f"unknown initial guess {U0!r}")
    else:
        U = np.array(U0, dtype=float)
        if U.shape != (omega.size, basis.N):
            raise ValueError(f"initial guess must have shape {(omega.size, basis.N)}")
    clamp = config.clamp_M
    history = IterationHistory()
    inner = omega.interior
    for _ in range(config.max_iters):
        t0 = time.perf_counter()
        F = evaluate_F(U[inner], couplings, config.reg_eta)
        if not np.isfinite(F).all():
            raise ValueError("nonlinearity produced non-finite values")
        U_next = solver.solve(boundary, F)
        if clamp is not None:
            np.clip(U_next, -clamp, clamp, out=U_next)
        step = U_next - U
        inf_ref = np.abs(U).max()
        l2_ref = np.linalg.norm(U)
        history.rel_diff_inf.append(float(np.abs(step).max() / inf_ref) if inf_ref > 0 else np.inf)
        history.rel_diff_l2.append(float(np.linalg.norm(step) / l2_ref) if l2_ref > 0 else np.inf)
        history.residual.append(solver.objective(U_next, boundary, F))
        history.seconds.append(time.perf_counter() - t0)
        U = U_next
        if not np.isfinite(U).all():
            raise ValueError("iteration diverged to non-finite values")
        last = history.rel_diff_l2[-1] if config.stop_norm == "l2" else history.rel_diff_inf[-1]
        if last <= config.kappa0:
            history.converged = True
            break
    if not history.converged:
        warnings.warn(
            f"contraction iteration stopped after {config.max_iters} steps without reaching "
            f"kappa0={config.kappa0:g} (last step {last:.2e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return U, history


def reconstruct_f(U: np.ndarray, basis: TimeBasis) -> np.ndarray:
    """``f(x) = sum_n u_n(x) Psi_n(0)``."""
    return np.asarray(U) @ basis.at_zero


def reconstruct_a(U: np.ndarray, basis: TimeBasis, reg_eta: float) -> np.ndarray:
    """Damping estimate from the computed coefficients.

    Only trustworthy when the true initial condition is smooth; discontinuous
    f makes ``w'`` meaningless near its jumps.
    """
    if reg_eta <= 0:
        raise ValueError("reg_eta must be positive")
    return damping_prefactor(np.asarray(U), nonlinear_couplings(basis), reg_eta)
