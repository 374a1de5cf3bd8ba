"""Free-space field transfer between planar arrays.

Fields are carried in root-watt units: ``|a|**2`` is the power at an element
in watts.  The free-space impedance factors of the E-field expressions cancel
in every power relation, so they are folded into that normalization.

The element-to-element transfer coefficient from tx element m to rx element n
is

    H[n, m] = sqrt(G_tx(m -> n) * G_rx(n <- m)) * lambda / (4 pi D_mn) * exp(i k D_mn)

and the received amplitude vector is ``H @ a``.  The reduction over tx
elements runs in element-index order through ``numpy.einsum`` (no BLAS
dispatch), so results are bitwise reproducible regardless of thread count.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constants import MAX_GAIN_DBI
from .geometry import PlanarArray

NEAR_FIELD_ERROR_WAVELENGTHS = 2.0
NEAR_FIELD_WARN_WAVELENGTHS = 10.0


class NearFieldError(ValueError):
    """Geometry outside the far-field model's validity."""


@dataclass(frozen=True)
class AntennaPattern:
    """Azimuthally symmetric ``G_max * cos(theta)**p`` element pattern, no back lobe.

    When ``exponent`` is omitted it is chosen so the pattern integrates to
    exactly 4 pi over the sphere: ``G_max * 2 pi / (p + 1) = 4 pi``.
    """

    max_gain_dbi: float = MAX_GAIN_DBI
    exponent: float | None = None

    def __post_init__(self):
        if self.exponent is None:
            object.__setattr__(self, "exponent", self.max_gain_linear / 2.0 - 1.0)
        if self.exponent < 0:
            raise ValueError(
                f"pattern exponent must be >= 0 (max gain {self.max_gain_dbi} dBi "
                "is below the 3.01 dBi of a cos**0 half-space pattern)"
            )

    @property
    def max_gain_linear(self) -> float:
        return 10.0 ** (self.max_gain_dbi / 10.0)

    def gain(self, theta_local):
        """Linear gain at off-boresight angle(s) ``theta_local`` in radians."""
        return self.gain_from_cos(np.cos(theta_local))

    def gain_from_cos(self, cos_theta):
        c = np.asarray(cos_theta, dtype=float)
        out = np.zeros_like(c)
        front = c > 0
        out[front] = self.max_gain_linear * c[front] ** self.exponent
        return out if out.ndim else float(out)


ISOTROPIC = AntennaPattern(max_gain_dbi=0.0, exponent=0.0)


@dataclass(frozen=True)
class FieldState:
    amplitudes: np.ndarray
    wavelength: float

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def powers(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.amplitudes)

    @property
    def total_power(self) -> float:
        return float(np.sum(self.powers))

    @classmethod
    def uniform(cls, total_power: float, count: int, wavelength: float, phases=None) -> "FieldState":
        amp = np.full(count, np.sqrt(total_power / count), dtype=complex)
        if phases is not None:
            amp = amp * np.exp(1j * np.asarray(phases, dtype=float))
        return cls(amp, wavelength)


@dataclass(frozen=True)
class LinkGeometry:
    """Pairwise geometry; rows index tx elements, columns rx elements."""

    distances: np.ndarray
    tx_local_angles: np.ndarray
    rx_local_angles: np.ndarray

    @property
    def tx_cos(self) -> np.ndarray:
        return np.cos(self.tx_local_angles)

    @property
    def rx_cos(self) -> np.ndarray:
        return np.cos(self.rx_local_angles)


def power_density(p_out: float, gain_linear: float, distance: float) -> float:
    """Far-field power density ``P G / (4 pi D^2)`` in W/m^2."""
    if not distance > 0:
        raise NearFieldError(f"power density is singular at distance {distance!r}")
    if p_out < 0:
        raise ValueError("p_out must be non-negative")
    return p_out * gain_linear / (4 * np.pi * distance**2)


def effective_aperture(gain_linear: float, wavelength: float) -> float:
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    return gain_linear * wavelength**2 / (4 * np.pi)


def link_geometry(tx: PlanarArray, rx: PlanarArray) -> LinkGeometry:
    diff = rx.element_positions[None, :, :] - tx.element_positions[:, None, :]
    dist = np.sqrt(np.einsum("mnk,mnk->mn", diff, diff))
    with np.errstate(invalid="ignore", divide="ignore"):
        tx_cos = (diff @ tx.boresight) / dist
        rx_cos = -(diff @ rx.boresight) / dist
    return LinkGeometry(
        distances=dist,
        tx_local_angles=np.arccos(np.clip(tx_cos, -1.0, 1.0)),
        rx_local_angles=np.arccos(np.clip(rx_cos, -1.0, 1.0)),
    )


def check_far_field(min_distance: float, wavelength: float) -> None:
    if min_distance < NEAR_FIELD_ERROR_WAVELENGTHS * wavelength:
        raise NearFieldError(
            f"closest element pair is {min_distance:.4g} m apart, below the "
            f"{NEAR_FIELD_ERROR_WAVELENGTHS:g} wavelength floor ({NEAR_FIELD_ERROR_WAVELENGTHS * wavelength:.4g} m)"
        )
    if min_distance < NEAR_FIELD_WARN_WAVELENGTHS * wavelength:
        warnings.warn(
            f"closest element pair is {min_distance / wavelength:.3g} wavelengths apart; "
            "far-field model accuracy degrades",
            RuntimeWarning,
            stacklevel=3,
        )


def transfer_matrix(
    tx: PlanarArray,
    rx: PlanarArray,
    tx_pattern: AntennaPattern,
    rx_pattern: AntennaPattern,
    wavelength: float,
) -> np.ndarray:
    """Complex (N_rx x M_tx) matrix mapping tx amplitudes to rx amplitudes."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    diff = rx.element_positions[:, None, :] - tx.element_positions[None, :, :]
    dist = np.sqrt(np.einsum("nmk,nmk->nm", diff, diff))
    check_far_field(float(dist.min()), wavelength)
    g_tx = tx_pattern.gain_from_cos((diff @ tx.boresight) / dist)
    g_rx = rx_pattern.gain_from_cos(-(diff @ rx.boresight) / dist)
    k = 2 * np.pi / wavelength
    return np.sqrt(g_tx * g_rx) * (wavelength / (4 * np.pi * dist)) * np.exp(1j * k * dist)


def apply_transfer(h: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
    return np.einsum("nm,m->n", h, amplitudes)


def propagate(
    tx_field: FieldState,
    tx_array: PlanarArray,
    rx_array: PlanarArray,
    patterns: tuple[AntennaPattern, AntennaPattern] = (AntennaPattern(), AntennaPattern()),
) -> FieldState:
    """Coherently superpose every tx element's contribution at each rx element."""
    if tx_field.amplitudes.size != tx_array.size:
        raise ValueError("field length does not match the transmitting array")
    h = transfer_matrix(tx_array, rx_array, patterns[0], patterns[1], tx_field.wavelength)
    return FieldState(apply_transfer(h, tx_field.amplitudes), tx_field.wavelength)


def received_power_total(rx_field: FieldState) -> float:
    return rx_field.total_power
