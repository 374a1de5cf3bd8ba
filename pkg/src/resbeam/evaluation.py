"""Monte Carlo positioning experiments for the resonant (RBPS) and active (APS) modes."""
from __future__ import annotations

import dataclasses
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import constants as C
from .geometry import Direction, PlanarArray, build_upa
from .music import DoaEstimate, GridSpec, estimate_doa, synthesize_snapshots
from .propagation import AntennaPattern, FieldState, apply_transfer, transfer_matrix
from .resonance import AmplifierModel, PowerDivider, ResonanceResult, run_resonance


class Mode(str, enum.Enum):
    RBPS = "RBPS"
    APS = "APS"


@dataclass(frozen=True)
class Scenario:
    """One positioning setup.  The BS faces +z at the origin; the PT sits at
    ``distance`` along ``true_direction`` and faces -z."""

    mode: Mode = Mode.RBPS
    distance: float = 2.0
    true_direction: Direction = Direction.from_degrees(30.0, 15.0)
    side_count: int = C.SIDE_COUNT
    spacing: float = C.ELEMENT_SPACING
    wavelength: float = C.WAVELENGTH
    noise_power: float = C.NOISE_POWER_W
    seed_power: float = C.SEED_POWER_W
    trials: int = C.MONTE_CARLO_TRIALS
    rng_master_seed: int = 0
    snapshots: int = C.SNAPSHOTS
    feedback_ratio: float = C.FEEDBACK_RATIO
    amplifier: AmplifierModel = AmplifierModel()
    pattern: AntennaPattern = AntennaPattern()
    max_iters: int = C.ITERATIONS
    tol: float = 1e-6
    aps_excitation: str = "uniform"  # or "single": only the centre-most PT element radiates
    randomize_seed_phases: bool = False
    search: GridSpec = GridSpec()

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        if self.noise_power < 0 or self.seed_power < 0:
            raise ValueError("noise and seed power must be non-negative")
        if self.aps_excitation not in ("uniform", "single"):
            raise ValueError("aps_excitation must be 'uniform' or 'single'")

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    @cached_property
    def bs_array(self) -> PlanarArray:
        return build_upa(self.side_count, self.spacing)

    @cached_property
    def pt_array(self) -> PlanarArray:
        center = self.distance * self.true_direction.unit_vector
        return build_upa(self.side_count, self.spacing, center, (0.0, 0.0, -1.0))

    @cached_property
    def transfer(self) -> np.ndarray:
        """BS -> PT transfer matrix; PT -> BS is its transpose."""
        return transfer_matrix(self.bs_array, self.pt_array, self.pattern, self.pattern, self.wavelength)

    def __getstate__(self):
        # Keep pickles small for worker processes; cached arrays are rebuilt lazily.
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)


@dataclass(frozen=True)
class RmseReport:
    rmse: float
    per_trial_errors: np.ndarray  # (n, 3) metres
    theta_hats: np.ndarray
    phi_hats: np.ndarray
    mean_theta_err: float  # mean |theta_hat - theta_0|, radians
    mean_phi_err: float  # mean wrapped |phi_hat - phi_0|, radians
    low_confidence_count: int
    received_power: float
    config_echo: Scenario = field(repr=False)


@dataclass(frozen=True)
class ScenarioFailure:
    config_echo: Scenario
    error: str


def position(theta: float, phi: float, distance: float) -> np.ndarray:
    st = np.sin(theta)
    return distance * np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def position_error(theta_hat, phi_hat, theta0, phi0, distance) -> tuple[float, float, float]:
    """Cartesian error of the estimate at radius ``distance`` from the BS centre."""
    d = position(theta_hat, phi_hat, distance) - position(theta0, phi0, distance)
    return float(d[0]), float(d[1]), float(d[2])


def rmse_from_errors(errors) -> float:
    e = np.asarray(errors, dtype=float).reshape(-1, 3)
    return float(np.sqrt(np.mean(np.sum(e**2, axis=1))))


def run_aps_baseline(scenario: Scenario) -> FieldState:
    """BS field received when the PT itself radiates ``seed_power`` once."""
    n = scenario.pt_array.size
    amps = np.zeros(n, dtype=complex)
    if scenario.aps_excitation == "single":
        amps[int(np.argmin(np.linalg.norm(scenario.pt_array.element_positions - scenario.pt_array.center, axis=1)))] = np.sqrt(scenario.seed_power)
    else:
        amps[:] = np.sqrt(scenario.seed_power / n)
    return FieldState(apply_transfer(scenario.transfer.T, amps), scenario.wavelength)


def run_rbps(scenario: Scenario, seed_phases=None) -> ResonanceResult:
    return run_resonance(
        scenario.bs_array,
        scenario.pt_array,
        scenario.amplifier,
        PowerDivider(scenario.feedback_ratio),
        scenario.pattern,
        scenario.seed_power,
        scenario.max_iters,
        scenario.tol,
        wavelength=scenario.wavelength,
        seed_phases=seed_phases,
        transfer=scenario.transfer,
    )


def received_field(scenario: Scenario, seed_phases=None) -> FieldState:
    """Field at the BS elements that the estimator sees, per mode."""
    if scenario.mode is Mode.APS:
        return run_aps_baseline(scenario)
    return run_rbps(scenario, seed_phases).bs_in_field


def baseband_vector(fld: FieldState) -> np.ndarray:
    # Propagation carries exp(+ikD), so an element closer to the source lags:
    # the received phase runs as exp(-i omega tau).  The steering model uses
    # exp(+i omega tau), which matches the conjugate of the received field.
    return np.conj(fld.amplitudes)


def trial_seed(scenario: Scenario, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([scenario.rng_master_seed, trial_index])


def run_trial(
    scenario: Scenario,
    trial_index: int,
    signal: FieldState | None = None,
) -> tuple[DoaEstimate, tuple[float, float, float]]:
    seed = trial_seed(scenario, trial_index)
    noise_seed, phase_seed = seed.spawn(2)
    if signal is None or scenario.randomize_seed_phases:
        phases = None
        if scenario.randomize_seed_phases:
            phases = np.random.default_rng(phase_seed).uniform(0, 2 * np.pi, scenario.bs_array.size)
        signal = received_field(scenario, phases)
    batch = synthesize_snapshots(baseband_vector(signal), scenario.noise_power, scenario.snapshots, noise_seed)
    est = estimate_doa(batch, scenario.bs_array, scenario.wavelength, scenario.search)
    truth = scenario.true_direction
    err = position_error(est.theta_hat, est.phi_hat, truth.theta, truth.phi, scenario.distance)
    return est, err


def _trial_job(args):
    scenario, idx, signal = args
    return run_trial(scenario, idx, signal)


def _pmap(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_scenario(scenario: Scenario, workers: int = 1) -> RmseReport:
    """Run all Monte Carlo trials; the steady-state field is shared across trials."""
    signal = received_field(scenario)
    results = _pmap(_trial_job, [(scenario, i, signal) for i in range(scenario.trials)], workers)
    ests = [r[0] for r in results]
    errors = np.array([r[1] for r in results], dtype=float)
    th = np.array([e.theta_hat for e in ests])
    ph = np.array([e.phi_hat for e in ests])
    truth = scenario.true_direction
    dphi = np.abs((ph - truth.phi + np.pi) % (2 * np.pi) - np.pi)
    return RmseReport(
        rmse=rmse_from_errors(errors),
        per_trial_errors=errors,
        theta_hats=th,
        phi_hats=ph,
        mean_theta_err=float(np.mean(np.abs(th - truth.theta))),
        mean_phi_err=float(np.mean(dphi)),
        low_confidence_count=sum(e.low_confidence for e in ests),
        received_power=signal.total_power,
        config_echo=scenario,
    )


def _scenario_job(scenario):
    try:
        return run_scenario(scenario)
    except Exception as exc:  # collected per scenario, never fail-fast
        return ScenarioFailure(scenario, f"{type(exc).__name__}: {exc}")


def sweep(scenarios: list[Scenario], workers: int = 1) -> list[RmseReport | ScenarioFailure]:
    """Run scenarios in input order; failures come back as ``ScenarioFailure``."""
    if not scenarios:
        raise ValueError("sweep needs at least one scenario")
    return _pmap(_scenario_job, list(scenarios), workers)
