"""Ground-truth pairs (f, a) used to manufacture boundary data.

Formulas are written for the whole plane so they can be sampled on the box G;
inside Omega = (-1, 1)^2 they reproduce the six numerical tests.  The letter
shapes are stroke models: a point belongs to the letter when it lies within a
half-width of the centre line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Phantom:
    f: np.ndarray
    a: np.ndarray
    name: str
    # label -> Inclusion, for regions that differ from the background
    inclusions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.f.shape != self.a.shape:
            raise ValueError("f and a must be sampled on the same grid")
        if np.any(self.a < 0):
            raise ValueError("damping coefficient must be non-negative")


@dataclass(frozen=True)
class Inclusion:
    field: str  # "f" or "a"
    value: float
    mask: np.ndarray


def _segment_distance(X, Y, p, q):
    p, q = np.asarray(p, float), np.asarray(q, float)
    d = q - p
    s = np.clip(((X - p[0]) * d[0] + (Y - p[1]) * d[1]) / (d @ d), 0.0, 1.0)
    return np.hypot(X - p[0] - s * d[0], Y - p[1] - s * d[1])


def _polyline_mask(X, Y, points, half_width):
    dist = np.full(X.shape, np.inf)
    for p, q in zip(points[:-1], points[1:]):
        dist = np.minimum(dist, _segment_distance(X, Y, p, q))
    return dist < half_width


def _donut(X, Y):
    r2 = (X - 0.35) ** 2 + Y**2
    ring = (r2 > 0.15**2) & (r2 < 0.6**2)
    f = np.where(ring, 2.0, 1.0)
    return f, f.copy(), {"donut": Inclusion("f", 2.0, ring)}


def _sigma(X, Y):
    pts = [(0.45, 0.6), (-0.45, 0.6), (0.1, 0.0), (-0.45, -0.6), (0.45, -0.6)]
    mask = _polyline_mask(X, Y, pts, 0.1)
    return np.where(mask, 2.0, 1.0), np.abs(Y**2 - X), {"sigma": Inclusion("f", 2.0, mask)}


def _omega_letter(X, Y):
    theta = np.linspace(np.deg2rad(-55), np.deg2rad(235), 60)
    arc = list(zip(0.45 * np.cos(theta), 0.1 + 0.45 * np.sin(theta)))
    mask = _polyline_mask(X, Y, arc, 0.1)
    left_foot = [(arc[-1][0], arc[-1][1]), (arc[-1][0] - 0.25, arc[-1][1])]
    right_foot = [(arc[0][0], arc[0][1]), (arc[0][0] + 0.25, arc[0][1])]
    mask |= _polyline_mask(X, Y, left_foot, 0.1) | _polyline_mask(X, Y, right_foot, 0.1)
    return np.where(mask, 2.0, 1.0), X**2, {"omega": Inclusion("f", 2.0, mask)}


def _two_bars(X, Y):
    top = (np.abs(X) < 0.6) & (np.abs(Y - 0.4) < 0.08)
    bottom = (np.abs(X) < 0.6) & (np.abs(Y + 0.4) < 0.08)
    f = np.ones_like(X)
    f[top] = 4.0
    f[bottom] = 3.0
    r = np.sqrt(X**2 / 0.5**2 + Y**2 / 0.25**2)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        bump = 2.0 * np.exp(r**2 / (r**2 - 1.0))
    a = np.where(r < 1.0, bump, 1.0)
    incl = {"top": Inclusion("f", 4.0, top), "bottom": Inclusion("f", 3.0, bottom)}
    return f, a, incl


def _smooth_square_void(X, Y):
    outside = np.maximum(np.sqrt(2.0) * np.abs(X - 0.4), np.abs(Y)) > 0.5
    void = np.abs(X - 0.4) + np.abs(Y) < 0.12
    a = np.where(outside | void, 0.0, 2.0)
    return Y**2 - X + 5.0, a, {"square": Inclusion("a", 2.0, ~(outside | void))}


def _three_disks(X, Y):
    a = np.ones_like(X)
    incl = {}
    for label, (cx, cy), value in (
        ("top_right", (0.55, 0.55), 2.0),
        ("top_left", (-0.55, 0.55), 4.0),
        ("bottom_left", (-0.55, -0.55), 3.0),
    ):
        disk = (X - cx) ** 2 + (Y - cy) ** 2 < 0.4**2
        a[disk] = value
        incl[label] = Inclusion("a", value, disk)
    return X - Y + 7.0, a, incl


_LIBRARY = {
    "donut": _donut,
    "sigma": _sigma,
    "omega_letter": _omega_letter,
    "two_bars": _two_bars,
    "smooth_square_void": _smooth_square_void,
    "three_disks": _three_disks,
}

PHANTOM_NAMES = tuple(_LIBRARY) + ("constant_c",)


def make_phantom(name: str, X: np.ndarray, Y: np.ndarray, c: float = 1.0, a0: float = 0.5) -> Phantom:
    """Sample a named phantom on the node arrays ``X, Y``.

    ``constant_c`` is the uniform phantom ``f = c``, ``a = a0`` whose exact
    solution is ``c * exp(-a0 t)`` away from the box boundary.
    """
    if name == "constant_c":
        if c == 0:
            raise ValueError("constant phantom needs c != 0")
        return Phantom(np.full(X.shape, float(c)), np.full(X.shape, float(a0)), name)
    try:
        builder = _LIBRARY[name]
    except KeyError:
        raise ValueError(f"unknown phantom {name!r}; choose from {', '.join(PHANTOM_NAMES)}") from None
    f, a, incl = builder(X, Y)
    return Phantom(np.asarray(f, float), np.asarray(a, float), name, incl)
