"""Uniform planar array layouts, propagation delays and steering vectors.

Element order is row-major starting at the minimum corner: element index
``r * side_count + c`` sits at ``center + (c - o) * spacing * axis_u
+ (r - o) * spacing * axis_v`` with ``o = (side_count - 1) / 2``.  For an
array facing +z or -z the in-plane axes are exactly +x and +y, so the first
element is the minimum-(x, y) corner and x varies fastest.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import ELEMENT_SPACING, SPEED_OF_LIGHT


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Direction:
    """Elevation ``theta`` from the array normal (+z) and azimuth ``phi``, radians."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= np.pi / 2 + 1e-12):
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta!r}")
        if not (0.0 <= self.phi < 2 * np.pi):
            raise ValueError(f"phi must lie in [0, 2pi), got {self.phi!r}")

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float) -> "Direction":
        return cls(float(np.deg2rad(theta_deg)), float(np.deg2rad(phi_deg % 360.0)))

    @property
    def degrees(self) -> tuple[float, float]:
        return float(np.rad2deg(self.theta)), float(np.rad2deg(self.phi))

    @property
    def unit_vector(self) -> np.ndarray:
        return unit_vector(self.theta, self.phi)


def unit_vector(theta, phi) -> np.ndarray:
    """Propagation unit vector(s) ``(sin t cos p, sin t sin p, cos t)``; broadcasts."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), np.cos(theta)), axis=-1)


def _in_plane_axes(boresight: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Minimal rotation taking +z (or -z) onto the boresight, applied to x and y.
    ex, ey = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    ref = np.array([0.0, 0.0, 1.0 if boresight[2] >= 0 else -1.0])
    axis = np.cross(ref, boresight)
    s = np.linalg.norm(axis)
    if s < 1e-15:
        return ex, ey
    c = float(ref @ boresight)
    k = axis / s
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    rot = np.eye(3) + s * kx + (1 - c) * kx @ kx
    return rot @ ex, rot @ ey


@dataclass(frozen=True)
class PlanarArray:
    side_count: int
    spacing: float
    center: np.ndarray
    boresight: np.ndarray
    axis_u: np.ndarray = field(repr=False)
    axis_v: np.ndarray = field(repr=False)
    element_positions: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.side_count**2

    @property
    def offsets(self) -> np.ndarray:
        """Signed grid coordinates (in meters) along either in-plane axis."""
        return (np.arange(self.side_count) - (self.side_count - 1) / 2) * self.spacing


def build_upa(
    side_count: int,
    spacing: float = ELEMENT_SPACING,
    center=(0.0, 0.0, 0.0),
    boresight=(0.0, 0.0, 1.0),
) -> PlanarArray:
    """Build a square ``side_count x side_count`` array centred on ``center``."""
    if int(side_count) != side_count or side_count < 1:
        raise ValueError(f"side_count must be a positive integer, got {side_count!r}")
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing!r}")
    side_count = int(side_count)
    center = np.asarray(center, dtype=float).reshape(3)
    boresight = np.asarray(boresight, dtype=float).reshape(3)
    norm = np.linalg.norm(boresight)
    if not norm > 0:
        raise ValueError("boresight must be a non-zero vector")
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"boresight must be normalized, |b| = {norm}")
    boresight = boresight / norm

    axis_u, axis_v = _in_plane_axes(boresight)
    off = (np.arange(side_count) - (side_count - 1) / 2) * spacing
    rows, cols = np.meshgrid(off, off, indexing="ij")
    positions = center + cols.reshape(-1, 1) * axis_u + rows.reshape(-1, 1) * axis_v

    return PlanarArray(
        side_count=side_count,
        spacing=float(spacing),
        center=_readonly(center.copy()),
        boresight=_readonly(boresight),
        axis_u=_readonly(axis_u),
        axis_v=_readonly(axis_v),
        element_positions=_readonly(positions),
    )


def element_delay(position, direction: Direction) -> float:
    """Arrival delay of an element at ``position`` relative to the origin, seconds."""
    return float(np.asarray(position, dtype=float) @ direction.unit_vector) / SPEED_OF_LIGHT


def steering_vector(array: PlanarArray, direction: Direction, wavelength: float) -> np.ndarray:
    """Entries ``exp(i * omega * tau_m)`` for every element, in element order."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    # omega * tau = 2 pi c / lambda * (r . u) / c; c cancels exactly.
    k = 2 * np.pi / wavelength
    return np.exp(1j * k * (array.element_positions @ direction.unit_vector))


def steering_factors(array: PlanarArray, u: np.ndarray, wavelength: float):
    """Separable form of the steering vectors for propagation vectors ``u`` (G x 3).

    Returns ``(common, fu, fv)`` with shapes (G,), (G, N_s), (G, N_s) such that
    the steering vector entry for element (r, c) equals
    ``common * fu[:, c] * fv[:, r]``.
    """
    k = 2 * np.pi / wavelength
    u = np.atleast_2d(u)
    off = array.offsets
    common = np.exp(1j * k * (u @ array.center))
    fu = np.exp(1j * k * np.outer(u @ array.axis_u, off))
    fv = np.exp(1j * k * np.outer(u @ array.axis_v, off))
    return common, fu, fv
