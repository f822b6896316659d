"""Time reduction: boundary data -> Fourier coefficients, and the nonlinearity F.

Data arrive as samples on a uniform time grid while the basis lives on a
Gauss-Lobatto grid.  ``project_boundary`` interpolates the samples with a
not-a-knot cubic spline and integrates spline-times-basis with the basis
quadrature.  The composite map is one fixed ``(N, Nt)`` matrix.  The
trapezoidal rule is kept as an option; it is far less accurate for the
rapidly varying high modes.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .basis import MAX_BASIS_SIZE, Couplings, TimeBasis, build_basis
from .forward import BoundaryData


class AliasingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CoefficientBoundary:
    """Dirichlet and Neumann coefficient vectors, shape ``(n_boundary, N)``."""

    dirichlet: np.ndarray
    neumann: np.ndarray

    def __post_init__(self):
        if self.dirichlet.shape != self.neumann.shape or self.dirichlet.ndim != 2:
            raise ValueError("dirichlet and neumann must be matching 2-D arrays")
        if not (np.isfinite(self.dirichlet).all() and np.isfinite(self.neumann).all()):
            raise ValueError("coefficient boundary data must be finite")

    @property
    def N(self) -> int:
        return self.dirichlet.shape[1]


def projection_matrix(basis: TimeBasis, times: np.ndarray, rule: str = "spline") -> np.ndarray:
    """Matrix W with ``W @ samples = (int sample(t) Psi_m(t) dt)_m``."""
    times = np.asarray(times, dtype=float)
    if abs(times[0]) > 1e-12 or abs(times[-1] - basis.T) > 1e-9 * basis.T:
        raise ValueError(f"data span [{times[0]}, {times[-1]}] does not match the basis span [0, {basis.T}]")
    if rule == "spline":
        interp = CubicSpline(times, np.eye(times.size))(basis.quad.nodes)
        return (basis.values * basis.quad.weights) @ interp
    if rule == "trapezoid":
        psi, _, _ = basis.evaluate(times)
        w = np.zeros(times.size)
        h = np.diff(times)
        w[:-1] += h / 2
        w[1:] += h / 2
        return psi * w
    raise ValueError(f"unknown projection rule {rule!r}")


def project_boundary(data: BoundaryData, basis: TimeBasis, rule: str = "spline") -> CoefficientBoundary:
    if data.times.size < 4 * basis.N:
        warnings.warn(
            f"{data.times.size} time samples for {basis.N} basis functions: "
            "high modes may alias (recommend Nt >= 4N)",
            AliasingWarning,
            stacklevel=2,
        )
    W = projection_matrix(basis, data.times, rule)
    return CoefficientBoundary(dirichlet=data.p @ W.T, neumann=data.q @ W.T)


def cutoff_residual(p: np.ndarray, times: np.ndarray, basis: TimeBasis, rule: str = "spline") -> float:
    """Relative sup-norm gap between ``p`` and its N-term expansion on the sample grid."""
    scale = np.abs(p).max()
    if scale == 0:
        return 0.0
    W = projection_matrix(basis, times, rule)
    psi, _, _ = basis.evaluate(times)
    return float(np.abs(p - (p @ W.T) @ psi).max() / scale)


@dataclass(frozen=True)
class CutoffChoice:
    N: int
    curve: np.ndarray  # (n_max, 2) rows of (N, residual)
    reached: bool


def choose_cutoff(
    p: np.ndarray,
    times: np.ndarray,
    tol: float,
    n_max: int = MAX_BASIS_SIZE,
    rule: str = "spline",
) -> CutoffChoice:
    """Smallest N whose cutoff residual is at most ``tol``.

    The whole curve up to ``n_max`` is evaluated for reporting.  When ``tol``
    is never reached the cap is returned with ``reached=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    full = build_basis(float(times[-1]), n_max, cap=max(n_max, MAX_BASIS_SIZE))
    curve = np.array([[n, cutoff_residual(p, times, full.truncate(n), rule)] for n in range(1, n_max + 1)])
    hits = np.nonzero(curve[:, 1] <= tol)[0]
    if hits.size:
        return CutoffChoice(int(curve[hits[0], 0]), curve, True)
    warnings.warn(
        f"cutoff residual never dropped below {tol:g}; best was {curve[:, 1].min():.3g}, returning N={n_max}",
        stacklevel=2,
    )
    return CutoffChoice(n_max, curve, False)


def damping_prefactor(U: np.ndarray, couplings: Couplings, reg_eta: float) -> np.ndarray:
    """``-w' w / (w^2 + eta^2)`` with ``w = U . Psi(0)`` and ``w' = U . Psi'(0)``."""
    w = U @ couplings.at_zero
    wp = U @ couplings.d1_at_zero
    return -(wp * w) / (w * w + reg_eta * reg_eta)


def evaluate_F(U: np.ndarray, couplings: Couplings, reg_eta: float) -> np.ndarray:
    """Nonlinearity of the reduced system, vectorized over leading axes of ``U``."""
    if reg_eta <= 0:
        raise ValueError("reg_eta must be positive")
    U = np.asarray(U, dtype=float)
    return damping_prefactor(U, couplings, reg_eta)[..., None] * (U @ couplings.D.T)


def F_directional_derivative(U: np.ndarray, H: np.ndarray, couplings: Couplings, reg_eta: float) -> np.ndarray:
    """Exact derivative of F at U in direction H."""
    psi0, dpsi0 = couplings.at_zero, couplings.d1_at_zero
    w, wp = U @ psi0, U @ dpsi0
    hw, hwp = H @ psi0, H @ dpsi0
    den = w * w + reg_eta * reg_eta
    g = -(wp * w) / den
    dg = -(hwp * w + wp * hw) / den + (wp * w) * 2.0 * w * hw / den**2
    return dg[..., None] * (U @ couplings.D.T) + g[..., None] * (H @ couplings.D.T)


def evaluate_F_jacobian_check(
    U: np.ndarray,
    couplings: Couplings,
    reg_eta: float,
    h: float = 1e-6,
    n_directions: int = 8,
    seed: int = 0,
) -> float:
    """Max relative gap between the analytic derivative and central differences."""
    if not 1e-7 <= h <= 1e-4:
        raise ValueError("step h must lie in [1e-7, 1e-4]")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_directions):
        H = rng.standard_normal(U.shape)
        exact = F_directional_derivative(U, H, couplings, reg_eta)
        fd = (evaluate_F(U + h * H, couplings, reg_eta) - evaluate_F(U - h * H, couplings, reg_eta)) / (2 * h)
        worst = max(worst, float(np.abs(exact - fd).max() / max(np.abs(exact).max(), 1e-300)))
    return worst


def write_coefficients_csv(coeffs: CoefficientBoundary, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "m", "dirichlet", "neumann"])
        for k in range(coeffs.dirichlet.shape[0]):
            for m in range(coeffs.N):
                w.writerow([k, m + 1, f"{coeffs.dirichlet[k, m]:.17g}", f"{coeffs.neumann[k, m]:.17g}"])
    return path


def write_cutoff_curve_csv(choice: CutoffChoice, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "residual"])
        for n, r in choice.curve:
            w.writerow([int(n), f"{r:.17g}"])
    return path
