"""Explicit finite-difference simulation of the damped wave equation on G.

The update at every node solves

    (u+ - 2u + u-)/dt^2 + a (u+ - u)/dt = Lap_h u

for ``u+``; the damping term is evaluated implicitly, so the only stability
constraint is the usual ``dt <= dx / sqrt(2)`` for the 5-point Laplacian.
Nodes on the edge of G are held at zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import Grid2D, GridAlignmentError, OmegaGrid
from .phantoms import Phantom


class InstabilityError(FloatingPointError):
    pass


@dataclass(frozen=True)
class WaveField:
    """Simulated wave ``values[l, i, j] = u(x_i, y_j, t_l)``."""

    values: np.ndarray
    dt: float

    @property
    def Nt(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.Nt) * self.dt

    @property
    def bound(self) -> float:
        """Sup norm of the simulated wave (the a-priori bound M)."""
        return float(np.abs(self.values).max())


@dataclass(frozen=True)
class BoundaryData:
    """Lateral Cauchy data on the boundary nodes of an Omega grid.

    ``p[k, l]`` and ``q[k, l]`` are the trace and outward normal derivative at
    boundary node ``k`` (ordering of ``OmegaGrid.boundary``) and time level ``l``.
    """

    omega: OmegaGrid
    times: np.ndarray
    p: np.ndarray
    q: np.ndarray
    noise_level: float = 0.0
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        # fixed memory layout keeps BLAS reductions, and so the outputs, bitwise reproducible
        for name in ("times", "p", "q"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        shape = (self.omega.boundary.size, self.times.size)
        if self.p.shape != shape or self.q.shape != shape:
            raise ValueError(f"p and q must have shape {shape}, got {self.p.shape} and {self.q.shape}")
        if not 0.0 <= self.noise_level < 1.0:
            raise ValueError("noise level must lie in [0, 1)")
        if self.times.size < 2 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def simulate(phantom: Phantom, grid: Grid2D, dt: float, Nt: int) -> WaveField:
    """March the explicit scheme for ``Nt`` time levels (level 0 is t = 0)."""
    f, a = phantom.f, phantom.a
    if f.shape != (grid.nx, grid.nx):
        raise ValueError(f"phantom sampled on {f.shape}, grid is {grid.nx}x{grid.nx}")
    if np.any(a < 0):
        raise ValueError("damping coefficient must be non-negative")
    if dt <= 0 or Nt < 2:
        raise ValueError("need dt > 0 and at least two time levels")
    dt_max = grid.max_stable_dt()
    if dt > dt_max:
        raise ValueError(f"CFL violated: dt={dt} exceeds the maximal stable dt={dt_max:.6g}")

    h2 = grid.dx**2
    u = np.empty((Nt, grid.nx, grid.nx))
    u[0] = f
    u[1] = f - a * f * dt
    u[0:2, 0, :] = u[0:2, -1, :] = u[0:2, :, 0] = u[0:2, :, -1] = 0.0
    inv_dt2 = 1.0 / dt**2
    damp = a / dt
    denom = inv_dt2 + damp
    lap = np.zeros((grid.nx, grid.nx))
    for l in range(1, Nt - 1):
        c = u[l]
        lap[1:-1, 1:-1] = (c[2:, 1:-1] + c[:-2, 1:-1] + c[1:-1, 2:] + c[1:-1, :-2] - 4.0 * c[1:-1, 1:-1]) / h2
        nxt = u[l + 1]
        np.multiply(inv_dt2, 2.0 * c - u[l - 1], out=nxt)
        nxt += damp * c + lap
        nxt /= denom
        nxt[0, :] = nxt[-1, :] = nxt[:, 0] = nxt[:, -1] = 0.0
        if not np.isfinite(nxt).all():
            raise InstabilityError(f"non-finite values first appeared at time level {l + 1}")
    return WaveField(values=u, dt=dt)


def extract_boundary(wave: WaveField, grid: Grid2D, stride: int = 1) -> BoundaryData:
    """Noiseless Cauchy data on the boundary of the (possibly coarsened) Omega grid.

    The normal derivative uses the simulation spacing even when ``stride > 1``.
    """
    if wave.values.shape[1:] != (grid.nx, grid.nx):
        raise GridAlignmentError("wave field does not live on this grid")
    omega = grid.omega(stride)
    block = wave.values[:, grid.omega_slice, grid.omega_slice]
    n_full = block.shape[1]
    flat = block.reshape(wave.Nt, -1)
    ij = omega.boundary_ij * stride
    p = flat[:, ij[:, 0] * n_full + ij[:, 1]].T.copy()
    q = np.asarray(omega.neumann_matrix(dx=grid.dx, stride=stride, n_full=n_full) @ flat.T)
    meta = {"dt": wave.dt, "grid": grid.descriptor(), "stride": stride}
    return BoundaryData(omega=omega, times=wave.times, p=p, q=q, meta=meta)


def add_noise(data: BoundaryData, delta: float, seed: int | None = None) -> BoundaryData:
    """Multiplicative noise ``p (1 + delta * rand)`` with ``rand ~ U[-1, 1]``.

    Draws come from ``numpy.random.default_rng(seed)``: first all of p, then
    all of q, each in (node-major, time-minor) order.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"noise level must lie in [0, 1), got {delta}")
    if delta == 0.0:
        return replace(data, noise_level=0.0, seed=seed)
    rng = np.random.default_rng(seed)
    p = data.p * (1.0 + delta * rng.uniform(-1.0, 1.0, size=data.p.shape))
    q = data.q * (1.0 + delta * rng.uniform(-1.0, 1.0, size=data.q.shape))
    return replace(data, p=p, q=q, noise_level=float(delta), seed=seed)


def _write_trace(path: Path, data: BoundaryData, values: np.ndarray) -> None:
    xy = data.omega.boundary_xy
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node"] + [str(k) for k in range(xy.shape[0])])
        w.writerow(["x"] + [f"{v:.17g}" for v in xy[:, 0]])
        w.writerow(["y"] + [f"{v:.17g}" for v in xy[:, 1]])
        for l, t in enumerate(data.times):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in values[:, l]])


def _read_trace(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    xy = np.array([[float(v) for v in rows[1][1:]], [float(v) for v in rows[2][1:]]]).T
    body = np.array([[float(v) for v in row] for row in rows[3:]])
    return xy, body[:, 0], body[:, 1:].T


def save_boundary_data(data: BoundaryData, outdir, stem: str = "boundary") -> list[Path]:
    """Write ``<stem>_p.csv``, ``<stem>_q.csv`` and the JSON sidecar ``<stem>.json``.

    Each CSV has three header rows (node index, x, y) followed by one row per
    time level whose first column is the time.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / f"{stem}_p.csv", outdir / f"{stem}_q.csv", outdir / f"{stem}.json"]
    _write_trace(paths[0], data, data.p)
    _write_trace(paths[1], data, data.q)
    sidecar = {
        "noise_level": data.noise_level,
        "seed": data.seed,
        "dt": data.dt,
        "T": data.T,
        "Nt": int(data.times.size),
        "omega": data.omega.descriptor(),
        "meta": data.meta,
    }
    paths[2].write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return paths


def load_boundary_data(outdir, stem: str = "boundary") -> BoundaryData:
    outdir = Path(outdir)
    sidecar = json.loads((outdir / f"{stem}.json").read_text())
    omega = OmegaGrid(**sidecar["omega"])
    xy, times, p = _read_trace(outdir / f"{stem}_p.csv")
    _, times_q, q = _read_trace(outdir / f"{stem}_q.csv")
    if not np.array_equal(times, times_q):
        raise ValueError("p and q files use different time grids")
    if not np.allclose(xy, omega.boundary_xy, atol=1e-12):
        raise GridAlignmentError("boundary node coordinates do not match the Omega descriptor")
    return BoundaryData(
        omega=omega,
        times=times,
        p=p,
        q=q,
        noise_level=sidecar["noise_level"],
        seed=sidecar["seed"],
        meta=sidecar.get("meta", {}),
    )
