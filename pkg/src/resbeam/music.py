"""Snapshot synthesis, sample covariance and 2-D MUSIC search on a planar array.

Snapshots follow the narrowband model ``z_l = s_l * a + n_l``: ``a`` is the
complex received amplitude vector at the BS, ``s_l`` a unit-power circular
Gaussian source modulation and ``n_l`` circular white noise with per-element
power ``sigma_N^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .constants import SNAPSHOTS
from .geometry import Direction, PlanarArray, steering_factors, steering_vector, unit_vector
from .propagation import FieldState

SPECTRUM_FLOOR = 1e-12
LOW_CONFIDENCE_RATIO = 10 ** (3 / 10)  # peak / median below 3 dB


class EigenDecompositionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SnapshotBatch:
    snapshots: np.ndarray  # (L, M)
    noise_power: float

    @property
    def snapshot_count(self) -> int:
        return self.snapshots.shape[0]

    @property
    def element_count(self) -> int:
        return self.snapshots.shape[1]

    def scaled(self, factor: complex) -> "SnapshotBatch":
        return SnapshotBatch(self.snapshots * factor, self.noise_power * abs(factor) ** 2)


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, matching eigenvalues

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class GridSpec:
    """Search ranges and resolutions in degrees; the azimuth range is periodic."""

    theta_min: float = 0.0
    theta_max: float = 70.0
    phi_min: float = 0.0
    phi_max: float = 360.0
    coarse_step: float = 0.5
    resolution: float = 0.005

    def __post_init__(self):
        if not (0 <= self.theta_min < self.theta_max <= 90):
            raise ValueError("theta range must satisfy 0 <= min < max <= 90 degrees")
        if not self.phi_min < self.phi_max:
            raise ValueError("phi range is empty")
        if not (0 < self.resolution <= self.coarse_step):
            raise ValueError("need 0 < resolution <= coarse_step")

    @property
    def periodic_phi(self) -> bool:
        return self.phi_max - self.phi_min >= 360.0

    def thetas(self) -> np.ndarray:
        n = int(np.floor((self.theta_max - self.theta_min) / self.coarse_step + 1e-9))
        return self.theta_min + self.coarse_step * np.arange(n + 1)

    def phis(self) -> np.ndarray:
        span = self.phi_max - self.phi_min
        n = int(np.floor(span / self.coarse_step + 1e-9))
        if not self.periodic_phi:
            n += 1
        return self.phi_min + self.coarse_step * np.arange(n)


@dataclass(frozen=True)
class SpectrumGrid:
    thetas_deg: np.ndarray
    phis_deg: np.ndarray
    values: np.ndarray  # (n_theta, n_phi)

    @property
    def values_db(self) -> np.ndarray:
        return 10 * np.log10(self.values)


@dataclass(frozen=True)
class DoaEstimate:
    theta_hat: float
    phi_hat: float
    peak_value: float
    median_value: float
    refinement_iterations: int
    low_confidence: bool
    spectrum_grid: SpectrumGrid | None = None

    @property
    def direction(self) -> Direction:
        return Direction(self.theta_hat, self.phi_hat % (2 * np.pi))

    @property
    def peak_to_median(self) -> float:
        return self.peak_value / self.median_value


def synthesize_snapshots(
    rx_field: FieldState | np.ndarray,
    noise_power: float,
    count: int = SNAPSHOTS,
    rng_seed=None,
) -> SnapshotBatch:
    """Draw ``count`` snapshots; identical seeds give identical draws.

    The unit-variance noise draw does not depend on ``noise_power``, so runs
    that differ only in noise level share their random numbers.
    """
    if noise_power < 0:
        raise ValueError("noise_power must be non-negative")
    if count < 1:
        raise ValueError("snapshot count must be >= 1")
    a = rx_field.amplitudes if isinstance(rx_field, FieldState) else np.asarray(rx_field, dtype=complex)
    rng = np.random.default_rng(rng_seed)
    m = a.size
    s = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2)
    w = (rng.standard_normal((count, m)) + 1j * rng.standard_normal((count, m))) / np.sqrt(2)
    z = s[:, None] * a[None, :] + np.sqrt(noise_power) * w
    return SnapshotBatch(z, float(noise_power))


def eigh_descending(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        w, v = scipy.linalg.eigh(matrix)
    except (np.linalg.LinAlgError, ValueError) as exc:
        mask = np.isfinite(matrix)
        peak = float(np.abs(matrix[mask]).max()) if mask.any() else float("nan")
        raise EigenDecompositionError(
            f"Hermitian eigendecomposition failed for {matrix.shape} matrix "
            f"(finite={bool(mask.all())}, max finite |R|={peak:.3g}): {exc}"
        ) from exc
    return w[::-1].copy(), v[:, ::-1].copy()


def sample_covariance(batch: SnapshotBatch) -> CovarianceEstimate:
    """``(1/L) sum z z^H`` and its eigendecomposition, eigenvalues descending."""
    z = batch.snapshots
    r = z.T @ z.conj() / z.shape[0]
    r = 0.5 * (r + r.conj().T)
    w, v = eigh_descending(r)
    return CovarianceEstimate(r, w, v)


def noise_subspace(cov: CovarianceEstimate, source_count: int = 1) -> np.ndarray:
    """Eigenvectors of the ``M - K`` smallest eigenvalues, as columns."""
    m = cov.size
    if not 1 <= source_count < m:
        raise ValueError(f"source_count must satisfy 1 <= K < M = {m}, got {source_count}")
    return cov.eigenvectors[:, source_count:]


def music_spectrum(noise_sub: np.ndarray, array: PlanarArray, direction: Direction, wavelength: float) -> float:
    """``1 / |V_N^H a|^2`` with the denominator clamped at ``SPECTRUM_FLOOR``."""
    a = steering_vector(array, direction, wavelength)
    if a.size != noise_sub.shape[0]:
        raise ValueError("steering vector length does not match the subspace dimension")
    proj = noise_sub.conj().T @ a
    return 1.0 / max(float(np.vdot(proj, proj).real), SPECTRUM_FLOOR)


def music_spectrum_at(
    signal_sub: np.ndarray,
    array: PlanarArray,
    theta,
    phi,
    wavelength: float,
) -> np.ndarray:
    """MUSIC spectrum for many directions (radians, broadcast together).

    Uses ``|V_N^H a|^2 = |a|^2 - |E_S^H a|^2`` for the complete orthonormal
    eigenbasis, with ``|a|^2 = M`` and the separable steering vector of the
    planar grid, so cost per direction is O(K * N_s^2) with no M x M work.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    shape = theta.shape
    u = unit_vector(theta.ravel(), phi.ravel())
    common, fu, fv = steering_factors(array, u, wavelength)
    n = array.side_count
    captured = np.zeros(u.shape[0])
    for k in range(signal_sub.shape[1]):
        e = signal_sub[:, k].reshape(n, n).conj()  # rows along axis_v, cols along axis_u
        proj = np.einsum("gr,gr->g", fu @ e.T, fv) * common
        captured += np.abs(proj) ** 2
    denom = np.maximum(array.size - captured, SPECTRUM_FLOOR)
    return (1.0 / denom).reshape(shape)


def spectrum_grid(cov: CovarianceEstimate, array: PlanarArray, wavelength: float, search: GridSpec = GridSpec(), source_count: int = 1) -> SpectrumGrid:
    th, ph = search.thetas(), search.phis()
    tt, pp = np.meshgrid(np.deg2rad(th), np.deg2rad(ph), indexing="ij")
    vals = music_spectrum_at(cov.eigenvectors[:, :source_count], array, tt, pp, wavelength)
    return SpectrumGrid(th, ph, vals)


def _refine(evaluate, theta0: float, phi0: float, search: GridSpec) -> tuple[float, float, float, int]:
    """Hill-climb on a 3x3 stencil, halving the stencil when the centre wins."""
    def clamp(t):
        return min(max(t, search.theta_min), search.theta_max)

    def wrap(p):
        if search.periodic_phi:
            return search.phi_min + (p - search.phi_min) % 360.0
        return min(max(p, search.phi_min), search.phi_max)

    best_t, best_p = theta0, phi0
    best_v = float(evaluate(np.array([best_t]), np.array([best_p]))[0])
    step = search.coarse_step
    iterations = 0
    offsets = np.array([-1.0, 0.0, 1.0])
    while step > search.resolution:
        step /= 2
        while True:
            iterations += 1
            tt = np.array([clamp(best_t + d * step) for d in offsets for _ in offsets])
            pp = np.array([wrap(best_p + d * step) for _ in offsets for d in offsets])
            vals = evaluate(tt, pp)
            i = int(np.argmax(vals))
            if vals[i] <= best_v:
                break
            best_t, best_p, best_v = float(tt[i]), float(pp[i]), float(vals[i])
    return best_t, best_p, best_v, iterations


def estimate_doa_from_covariance(
    cov: CovarianceEstimate,
    array: PlanarArray,
    wavelength: float,
    search: GridSpec = GridSpec(),
    source_count: int = 1,
    keep_grid: bool = False,
) -> DoaEstimate:
    if not 1 <= source_count < cov.size:
        raise ValueError(f"source_count must satisfy 1 <= K < M = {cov.size}")
    sig = cov.eigenvectors[:, :source_count]
    grid = spectrum_grid(cov, array, wavelength, search, source_count)
    it, ip = np.unravel_index(int(np.argmax(grid.values)), grid.values.shape)
    median = float(np.median(grid.values))

    def evaluate(t_deg, p_deg):
        return music_spectrum_at(sig, array, np.deg2rad(t_deg), np.deg2rad(p_deg), wavelength)

    t, p, peak, n_iter = _refine(evaluate, float(grid.thetas_deg[it]), float(grid.phis_deg[ip]), search)
    return DoaEstimate(
        theta_hat=float(np.deg2rad(t)),
        phi_hat=float(np.deg2rad(p)),
        peak_value=peak,
        median_value=median,
        refinement_iterations=n_iter,
        low_confidence=peak / median < LOW_CONFIDENCE_RATIO,
        spectrum_grid=grid if keep_grid else None,
    )


def estimate_doa(
    batch: SnapshotBatch,
    array: PlanarArray,
    wavelength: float,
    search: GridSpec = GridSpec(),
    source_count: int = 1,
    keep_grid: bool = False,
) -> DoaEstimate:
    """Coarse grid scan followed by local refinement to ``search.resolution``."""
    if batch.element_count != array.size:
        raise ValueError("snapshot length does not match the array")
    cov = sample_covariance(batch)
    return estimate_doa_from_covariance(cov, array, wavelength, search, source_count, keep_grid)
