"""Power cycling between the base station (BS) and the passive target (PT).

One iteration is: BS transmits -> PT receives, keeps ``1 - gamma`` of the
power and re-radiates the rest phase-conjugated -> BS receives, conjugates
and amplifies each element independently -> next BS transmission.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .constants import (
    AMP_GAIN_DB,
    AMP_MAX_OUTPUT_W,
    FEEDBACK_RATIO,
    ITERATIONS,
    SEED_POWER_W,
    WAVELENGTH,
)
from .geometry import PlanarArray
from .propagation import AntennaPattern, FieldState, apply_transfer, transfer_matrix

CONSECUTIVE_CONVERGED = 3
DARK_POWER_FLOOR_W = 1e-30


class UndefinedEfficiencyError(ValueError):
    pass


class PowerCurve(Protocol):
    def output_power(self, input_power: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class AmplifierModel:
    """Smooth saturating amplifier.

    ``p_out = P_max * (1 - exp(-(g p / P_max)**s))**(1/s)`` with linear
    small-signal gain ``g`` and knee sharpness ``s``; ``s = 1`` is the plain
    exponential saturation curve.  Larger ``s`` approaches ``min(g p, P_max)``.
    """

    small_signal_gain_db: float = AMP_GAIN_DB
    max_output_w: float = AMP_MAX_OUTPUT_W
    knee_sharpness: float = 1.0

    def __post_init__(self):
        if not self.max_output_w > 0:
            raise ValueError("max_output_w must be positive")
        if not self.knee_sharpness > 0:
            raise ValueError("knee_sharpness must be positive")

    @property
    def gain_linear(self) -> float:
        return 10.0 ** (self.small_signal_gain_db / 10.0)

    def output_power(self, input_power):
        p = np.asarray(input_power, dtype=float)
        x = self.gain_linear * p / self.max_output_w
        s = self.knee_sharpness
        if s == 1.0:
            out = -np.expm1(-x)
        else:
            out = (-np.expm1(-(x**s))) ** (1.0 / s)
        return self.max_output_w * out


@dataclass(frozen=True)
class TabulatedAmplifier:
    """Piecewise-linear curve through measured (input, output) points, e.g. a datasheet."""

    input_w: tuple[float, ...]
    output_w: tuple[float, ...]

    def output_power(self, input_power):
        xs = np.concatenate([[0.0], self.input_w])
        ys = np.concatenate([[0.0], self.output_w])
        return np.interp(np.asarray(input_power, dtype=float), xs, ys)


@dataclass(frozen=True)
class PowerDivider:
    feedback_ratio: float = FEEDBACK_RATIO

    def __post_init__(self):
        if not 0.0 < self.feedback_ratio < 1.0:
            raise ValueError(f"feedback ratio must lie in (0, 1), got {self.feedback_ratio!r}")


def amplify(fld: FieldState, amp: PowerCurve) -> FieldState:
    """Per-element power mapping through the amplifier curve; phases untouched."""
    a = fld.amplitudes
    mag_in = np.abs(a)
    mag_out = np.sqrt(amp.output_power(mag_in**2))
    unit = np.ones_like(a)
    nz = mag_in > 0
    unit[nz] = a[nz] / mag_in[nz]
    return FieldState(mag_out * unit, fld.wavelength)


def conjugate_phase(fld: FieldState, circuit_delay: float = 0.0) -> FieldState:
    out = np.conj(fld.amplitudes)
    if circuit_delay:
        out = out * np.exp(1j * circuit_delay)
    return FieldState(out, fld.wavelength)


def split_power(fld: FieldState, divider: PowerDivider) -> tuple[FieldState, float]:
    """Return the reflected field and the harvested power in watts."""
    g = divider.feedback_ratio
    reflected = FieldState(np.sqrt(g) * fld.amplitudes, fld.wavelength)
    return reflected, (1.0 - g) * fld.total_power


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    eta: float
    eta_pt: float
    pt_out_power: float
    bs_out_power: float


@dataclass(frozen=True)
class RoundTrip:
    bs_out: FieldState
    pt_in: FieldState
    pt_out: FieldState
    bs_in: FieldState
    harvested_power: float
    next_bs_out: FieldState


def round_trip(
    bs_out: FieldState,
    h: np.ndarray,
    amp: PowerCurve,
    divider: PowerDivider,
    circuit_delay: float = 0.0,
) -> RoundTrip:
    """One BS -> PT -> BS cycle; ``h`` maps BS amplitudes to PT amplitudes.

    The PT splits first and conjugates second; the order only affects
    bookkeeping since both operations act on separate quantities.
    """
    lam = bs_out.wavelength
    pt_in = FieldState(apply_transfer(h, bs_out.amplitudes), lam)
    reflected, harvested = split_power(pt_in, divider)
    pt_out = conjugate_phase(reflected, circuit_delay)
    # Reciprocal channel: PT -> BS transfer is the transpose.
    bs_in = FieldState(apply_transfer(h.T, pt_out.amplitudes), lam)
    next_out = amplify(conjugate_phase(bs_in, circuit_delay), amp)
    return RoundTrip(bs_out, pt_in, pt_out, bs_in, harvested, next_out)


@dataclass(frozen=True)
class ResonanceResult:
    bs_out_field: FieldState
    pt_in_field: FieldState
    pt_out_field: FieldState
    bs_in_field: FieldState
    efficiency_history: np.ndarray
    eta_pt_history: np.ndarray
    pt_out_power_history: np.ndarray
    bs_out_power_history: np.ndarray
    bs_in_power_history: np.ndarray
    amp_gain_history: np.ndarray
    harvested_power: float
    iterations_run: int
    converged: bool
    convergence_metric: float
    sustain_iteration: int | None
    dark: bool = False

    @property
    def loss_factor_history(self) -> np.ndarray:
        """Round-trip loss factor ``1 / (eta * eta_pt)`` per iteration."""
        return 1.0 / (self.efficiency_history * self.eta_pt_history)


def _rel_change(new: float, old: float) -> float:
    if old == 0.0:
        return 0.0 if new == 0.0 else np.inf
    return abs(new - old) / abs(old)


def run_resonance(
    bs: PlanarArray,
    pt: PlanarArray,
    amp: PowerCurve | None = None,
    divider: PowerDivider | None = None,
    pattern: AntennaPattern | None = None,
    seed_power: float = SEED_POWER_W,
    max_iters: int = ITERATIONS,
    tol: float = 1e-6,
    *,
    wavelength: float = WAVELENGTH,
    seed_phases=None,
    circuit_delay: float = 0.0,
    early_stop: bool = True,
    trace: Callable[[TraceRow], None] | None = None,
    transfer: np.ndarray | None = None,
) -> ResonanceResult:
    """Iterate the power cycle from a cold start until steady state.

    The BS starts with ``seed_power`` spread evenly over its elements with
    zero phases (or ``seed_phases``).  The loop stops after ``max_iters`` or,
    when ``early_stop`` is set, once the relative change of both the
    efficiency and the PT output power stays below ``tol`` for three
    consecutive iterations.  A loop whose PT output decays below
    ``DARK_POWER_FLOOR_W`` is reported as a converged dark state.
    Non-convergence is reported through ``converged=False``, never raised.
    """
    amp = amp or AmplifierModel()
    divider = divider or PowerDivider()
    pattern = pattern or AntennaPattern()
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if not seed_power > 0:
        raise ValueError("seed_power must be positive")
    h = transfer if transfer is not None else transfer_matrix(bs, pt, pattern, pattern, wavelength)

    bs_out = FieldState.uniform(seed_power, bs.size, wavelength, seed_phases)
    gamma = divider.feedback_ratio
    hist = {k: [] for k in ("eta", "eta_pt", "pt_out", "bs_out", "bs_in", "gain")}
    streak = 0
    metric = np.inf
    converged = dark = False
    sustain = None
    step = None

    for it in range(1, max_iters + 1):
        step = round_trip(bs_out, h, amp, divider, circuit_delay)
        p_bs_out = step.bs_out.total_power
        p_pt_in = step.pt_in.total_power
        p_pt_out = step.pt_out.total_power
        p_bs_in = step.bs_in.total_power
        eta = p_pt_in / p_bs_out if p_bs_out > 0 else 0.0
        eta_pt = p_bs_in / p_pt_out if p_pt_out > 0 else 0.0
        gain = step.next_bs_out.total_power / p_bs_in if p_bs_in > 0 else 0.0
        if sustain is None and eta * eta_pt > 0 and gain * gamma >= 1.0 / (eta * eta_pt):
            sustain = it

        if hist["eta"]:
            metric = max(_rel_change(eta, hist["eta"][-1]), _rel_change(p_pt_out, hist["pt_out"][-1]))
            streak = streak + 1 if metric < tol else 0
        for key, val in zip(hist, (eta, eta_pt, p_pt_out, p_bs_out, p_bs_in, gain)):
            hist[key].append(val)
        if trace is not None:
            trace(TraceRow(it, eta, eta_pt, p_pt_out, p_bs_out))

        if p_pt_out < DARK_POWER_FLOOR_W:
            dark = converged = True
            break
        if early_stop and streak >= CONSECUTIVE_CONVERGED:
            break
        bs_out = step.next_bs_out
    if not dark:
        converged = streak >= CONSECUTIVE_CONVERGED

    arr = {k: np.asarray(v, dtype=float) for k, v in hist.items()}
    return ResonanceResult(
        bs_out_field=step.bs_out,
        pt_in_field=step.pt_in,
        pt_out_field=step.pt_out,
        bs_in_field=step.bs_in,
        efficiency_history=arr["eta"],
        eta_pt_history=arr["eta_pt"],
        pt_out_power_history=arr["pt_out"],
        bs_out_power_history=arr["bs_out"],
        bs_in_power_history=arr["bs_in"],
        amp_gain_history=arr["gain"],
        harvested_power=step.harvested_power,
        iterations_run=len(arr["eta"]),
        converged=converged,
        convergence_metric=float(metric),
        sustain_iteration=sustain,
        dark=dark,
    )


def transmission_efficiency(result: ResonanceResult) -> float:
    """Final-iteration ``P_PT_in / P_BS_out``."""
    p_out = result.bs_out_field.total_power
    if p_out <= 0:
        raise UndefinedEfficiencyError("BS output power is zero; efficiency undefined")
    return result.pt_in_field.total_power / p_out
