"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed at the end of the pytest run (see conftest) and when
this file is executed directly.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from timereduction.basis import build_basis
from timereduction.carleman import CarlemanConfig, QuasiReversibilitySolver, build_weight, fixed_point_solve, reconstruct_f
from timereduction.estimator import TimeReductionInversion
from timereduction.forward import add_noise, extract_boundary, simulate
from timereduction.grid import Grid2D
from timereduction.phantoms import make_phantom
from timereduction.pipeline import FINE_SCALE, RunConfig, donut_localization, relative_l2
from timereduction.reduction import CoefficientBoundary

DESK = RunConfig()
DT, NT = DESK.dt, DESK.Nt


def record(k: int, ok: bool, detail: str, seconds: float, budget: float) -> None:
    ok = ok and seconds < budget
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f}s / {budget:g}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def desk_data(name, delta, seed):
    grid = DESK.grid
    X, Y = grid.mesh
    ph = make_phantom(name, X, Y)
    clean = extract_boundary(simulate(ph, grid, DT, NT), grid)
    return grid, ph, clean, add_noise(clean, delta, seed)


def omega_block(grid, field):
    return field[grid.omega_slice, grid.omega_slice]


def test_criterion_1_basis():
    t0 = time.perf_counter()
    b = build_basis(1.0, 35)
    gram = np.abs(b.gram() - np.eye(35)).max()
    d1d1 = (b.d1 * b.quad.weights) @ b.d1.T
    ibp_s = np.abs(b.S - (np.outer(b.at_T, b.d1_at_T) - np.outer(b.at_zero, b.d1_at_zero) - d1d1)).max()
    ibp_d = np.abs(b.D + b.D.T - (np.outer(b.at_T, b.at_T) - np.outer(b.at_zero, b.at_zero))).max()
    secs = time.perf_counter() - t0
    ok = gram <= 1e-10 and ibp_s <= 1e-8 and ibp_d <= 1e-8
    record(1, ok, f"gram {gram:.1e}, by-parts {ibp_s:.1e} / {ibp_d:.1e}", secs, 5)


def test_criterion_2_forward_oracle():
    t0 = time.perf_counter()
    grid = Grid2D(nx=FINE_SCALE["nx"])
    X, Y = grid.mesh
    ph = make_phantom("constant_c", X, Y, c=1.0, a0=0.5)
    wave = simulate(ph, grid, DT, NT)
    p = extract_boundary(wave, grid).p
    err = np.abs(p[:, 1:] / np.exp(-0.5 * wave.times[1:]) - 1).max()
    secs = time.perf_counter() - t0
    record(2, err <= 0.02, f"max relative trace error {err:.2e}", secs, 60)


def test_criterion_3_linear_step():
    t0 = time.perf_counter()
    omega = DESK.grid.omega()
    basis = build_basis(1.0, 5)
    X, Y = omega.mesh
    U = np.stack([np.cos((m + 1) * X - Y) * np.exp(0.2 * m * X * Y) for m in range(5)], -1).reshape(omega.size, 5)
    g = omega.laplacian_matrix() @ U - U[omega.interior] @ basis.S.T
    cb = CoefficientBoundary(U[omega.boundary], np.asarray(omega.neumann_matrix() @ U))
    cfg = CarlemanConfig(eps=1e-10)
    R = QuasiReversibilitySolver(omega, basis.S, build_weight(omega, cfg), cfg.eps).solve(cb, g)
    err = np.linalg.norm(R - U) / np.linalg.norm(U)
    secs = time.perf_counter() - t0
    record(3, err <= 1e-4, f"manufactured recovery error {err:.1e}", secs, 30)


def _eventually_decreasing(series, start):
    s = np.asarray(series)[start:]
    return bool(np.all(np.diff(s) < 0))


@pytest.fixture(scope="module")
def donut():
    t0 = time.perf_counter()
    grid, ph, _, data = desk_data("donut", 0.10, seed=1)
    est = TimeReductionInversion(stop_norm="inf").fit(data)
    return grid, ph, est, time.perf_counter() - t0


def test_criterion_4_contraction_decay(donut):
    _, _, est, secs = donut
    h = est.history_
    inf_hit = next((k + 1 for k, v in enumerate(h.rel_diff_inf) if v <= 1e-5), None)
    l2_hit = next((k + 1 for k, v in enumerate(h.rel_diff_l2) if v <= 1e-5), None)
    monotone = _eventually_decreasing(h.rel_diff_inf, 1) and _eventually_decreasing(h.rel_diff_l2, 1)
    ok = monotone and inf_hit is not None and l2_hit is not None and inf_hit <= 50
    ratio = float(np.median(h.contraction_ratios()[-5:]))
    record(
        4, ok, f"sup series reaches 1e-5 at iteration {inf_hit}, L2 series at {l2_hit}, decay ratio {ratio:.2f}",
        secs, 300,
    )


def test_criterion_5_donut(donut):
    grid, ph, est, secs = donut
    mask = omega_block(grid, ph.inclusions["donut"].mask)
    peak = est.f_[mask].max()
    loc = donut_localization(est.f_, mask)
    ok = 1.6 <= peak <= 2.2 and loc >= 0.7
    record(5, ok, f"max f in donut {peak:.3f} (true 2), localization {loc:.2f}", secs, 600)


@pytest.fixture(scope="module")
def smooth():
    t0 = time.perf_counter()
    grid, ph, clean, data = desk_data("smooth_square_void", 0.10, seed=1)
    est = TimeReductionInversion().fit(data)
    return grid, ph, clean, est, time.perf_counter() - t0


def test_criterion_6_smooth(smooth):
    grid, ph, _, est, secs = smooth
    f_err = relative_l2(est.f_, omega_block(grid, ph.f))
    a_peak = est.a_[omega_block(grid, ph.inclusions["square"].mask)].max()
    ok = f_err <= 0.10 and 1.6 <= a_peak <= 2.4
    record(6, ok, f"f relative L2 {f_err:.2%}, max a in square {a_peak:.3f} (true 2)", secs, 600)


def test_criterion_7_noise_stability(smooth):
    grid, ph, clean, est, _ = smooth
    t0 = time.perf_counter()
    f_true = omega_block(grid, ph.f)
    mean = {}
    for delta, seeds in ((0.05, range(101, 106)), (0.10, range(201, 206))):
        fs = est.transform([add_noise(clean, delta, s) for s in seeds])
        mean[delta] = np.mean([relative_l2(f, f_true) for f in fs])
    secs = time.perf_counter() - t0
    record(7, mean[0.05] <= mean[0.10], f"mean f error {mean[0.05]:.2%} at 5% vs {mean[0.10]:.2%} at 10%", secs, 600)


def test_criterion_8_initial_guess(smooth):
    _, _, _, est, _ = smooth
    t0 = time.perf_counter()
    U, hist = fixed_point_solve(est.coefficients_, est.basis_, est.omega_, est.config_, U0="zero", solver=est.solver_)
    f_zero = reconstruct_f(U, est.basis_).reshape(est.f_.shape)
    diff = relative_l2(f_zero, est.f_)
    secs = time.perf_counter() - t0
    record(8, hist.converged and diff <= 0.01, f"f difference between starts {diff:.1e}", secs, 600)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
