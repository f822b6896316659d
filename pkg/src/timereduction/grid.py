"""Uniform grids on the simulation box G and on the computational domain Omega."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class GridAlignmentError(ValueError):
    """Omega's corners do not fall on grid nodes."""


def _snap(value: float, origin: float, dx: float) -> int:
    k = (value - origin) / dx
    kr = int(round(k))
    if abs(k - kr) > 1e-9:
        raise GridAlignmentError(
            f"coordinate {value} is not on the grid (origin {origin}, spacing {dx})"
        )
    return kr


@dataclass(frozen=True)
class OmegaGrid:
    """Square node block covering closure(Omega), arrays indexed ``[i, j]`` = ``(x_i, y_j)``.

    Boundary nodes run counter-clockwise from the corner ``(omega_min, omega_min)``.
    Each boundary node carries its inward unit steps: one for edge nodes, two
    for corners, where the normal is taken as the diagonal.
    """

    omega_min: float
    omega_max: float
    n: int

    def __post_init__(self):
        if self.n < 5:
            raise ValueError("Omega needs at least 5 nodes per axis for the one-sided stencils")
        if self.omega_max <= self.omega_min:
            raise ValueError("omega_max must exceed omega_min")

    @property
    def dx(self) -> float:
        return (self.omega_max - self.omega_min) / (self.n - 1)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.linspace(self.omega_min, self.omega_max, self.n)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.coords, self.coords, indexing="ij")

    @property
    def size(self) -> int:
        return self.n * self.n

    @cached_property
    def boundary_ij(self) -> np.ndarray:
        n = self.n
        nodes = [(i, 0) for i in range(n)]
        nodes += [(n - 1, j) for j in range(1, n)]
        nodes += [(i, n - 1) for i in range(n - 2, -1, -1)]
        nodes += [(0, j) for j in range(n - 2, 0, -1)]
        return np.array(nodes)

    @cached_property
    def boundary(self) -> np.ndarray:
        """Flat indices ``i * n + j`` of the boundary nodes."""
        ij = self.boundary_ij
        return ij[:, 0] * self.n + ij[:, 1]

    @cached_property
    def interior(self) -> np.ndarray:
        idx = np.arange(self.size).reshape(self.n, self.n)
        return idx[1:-1, 1:-1].ravel()

    @cached_property
    def boundary_xy(self) -> np.ndarray:
        c = self.coords
        ij = self.boundary_ij
        return np.column_stack([c[ij[:, 0]], c[ij[:, 1]]])

    def inward_steps(self, i: int, j: int) -> list[tuple[int, int]]:
        steps = []
        if i == 0:
            steps.append((1, 0))
        elif i == self.n - 1:
            steps.append((-1, 0))
        if j == 0:
            steps.append((0, 1))
        elif j == self.n - 1:
            steps.append((0, -1))
        return steps

    def neumann_matrix(self, dx: float | None = None, stride: int = 1, n_full: int | None = None) -> sp.csr_matrix:
        """Second-order one-sided outward normal derivative at the boundary nodes.

        ``(3 u_0 - 4 u_1 + u_2) / (2 dx)`` along each inward direction; corners
        average the two axis derivatives with weight 1/sqrt(2).  With ``stride``
        and ``n_full`` the stencil acts on a finer parent block whose every
        ``stride``-th node is a node of this grid.
        """
        if dx is None:
            dx = self.dx
        if n_full is None:
            n_full = self.n
        rows, cols, vals = [], [], []
        for r, (i, j) in enumerate(self.boundary_ij):
            steps = self.inward_steps(i, j)
            scale = 1.0 / np.sqrt(len(steps))
            fi, fj = i * stride, j * stride
            for di, dj in steps:
                for k, c in enumerate((3.0, -4.0, 1.0)):
                    rows.append(r)
                    cols.append((fi + k * di) * n_full + (fj + k * dj))
                    vals.append(scale * c / (2.0 * dx))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.boundary.size, n_full * n_full))

    def laplacian_matrix(self) -> sp.csr_matrix:
        """Five-point Laplacian rows at interior nodes acting on all nodes."""
        n, h2 = self.n, self.dx**2
        inner = self.interior
        r = np.repeat(np.arange(inner.size), 5)
        c = np.column_stack([inner, inner + n, inner - n, inner + 1, inner - 1]).ravel()
        v = np.tile([-4.0 / h2, 1.0 / h2, 1.0 / h2, 1.0 / h2, 1.0 / h2], inner.size)
        return sp.csr_matrix((v, (r, c)), shape=(inner.size, self.size))

    def gradient_matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Forward differences along x and along y over all grid edges."""
        n = self.n
        d = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / self.dx
        eye = sp.identity(n)
        return sp.kron(d, eye, format="csr"), sp.kron(eye, d, format="csr")

    def descriptor(self) -> dict:
        return {"omega_min": self.omega_min, "omega_max": self.omega_max, "n": self.n}


@dataclass(frozen=True)
class Grid2D:
    """Uniform ``nx`` by ``nx`` grid over the box G containing Omega."""

    box_min: float = -3.0
    box_max: float = 3.0
    omega_min: float = -1.0
    omega_max: float = 1.0
    nx: int = 241

    def __post_init__(self):
        if not self.box_min < self.omega_min < self.omega_max < self.box_max:
            raise ValueError("Omega must lie strictly inside G")
        if self.nx < 3:
            raise ValueError("nx must be at least 3")
        self.omega_slice  # alignment check

    @property
    def dx(self) -> float:
        return (self.box_max - self.box_min) / (self.nx - 1)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.linspace(self.box_min, self.box_max, self.nx)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.coords, self.coords, indexing="ij")

    @cached_property
    def omega_slice(self) -> slice:
        i0 = _snap(self.omega_min, self.box_min, self.dx)
        i1 = _snap(self.omega_max, self.box_min, self.dx)
        if i0 < 1 or i1 > self.nx - 2:
            raise GridAlignmentError("Omega touches the edge of G")
        return slice(i0, i1 + 1)

    @property
    def n_omega(self) -> int:
        s = self.omega_slice
        return s.stop - s.start

    def omega(self, stride: int = 1) -> OmegaGrid:
        """Omega grid using every ``stride``-th simulation node."""
        if stride < 1 or (self.n_omega - 1) % stride:
            raise GridAlignmentError(
                f"stride {stride} does not divide the {self.n_omega - 1} Omega intervals"
            )
        return OmegaGrid(self.omega_min, self.omega_max, (self.n_omega - 1) // stride + 1)

    def max_stable_dt(self) -> float:
        return self.dx / np.sqrt(2.0)

    def descriptor(self) -> dict:
        return {
            "box_min": self.box_min,
            "box_max": self.box_max,
            "omega_min": self.omega_min,
            "omega_max": self.omega_max,
            "nx": self.nx,
        }
