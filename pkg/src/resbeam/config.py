"""Experiment configuration: TOML documents with a fixed schema.

An empty document is a valid single-run configuration carrying the reference
parameters (30 GHz / 1 cm, lambda/4 spacing, 40 x 40 arrays, gamma = 0.004,
200 iterations, 100 trials, 1 mW seed power).  A non-empty ``[sweep]`` table
turns the run into a sweep over the Cartesian product of its axes, taken in
document order.  An axis named ``"a+b"`` varies ``a`` and ``b`` together
from a list of pairs.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import constants as C
from .evaluation import Mode, Scenario
from .geometry import Direction
from .music import GridSpec
from .propagation import AntennaPattern
from .resonance import AmplifierModel

KINDS = ("amplifier", "resonance", "spectrum", "rmse")


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "RBPS"
    distance_m: float = 2.0
    theta_deg: float = 0.0
    phi_deg: float = 0.0
    side_count: int = C.SIDE_COUNT
    wavelength_m: float = C.WAVELENGTH
    spacing_m: float = C.ELEMENT_SPACING
    feedback_ratio: float = C.FEEDBACK_RATIO
    amp_gain_db: float = C.AMP_GAIN_DB
    amp_max_output_w: float = C.AMP_MAX_OUTPUT_W
    amp_knee_sharpness: float = 1.0
    max_gain_dbi: float = C.MAX_GAIN_DBI
    seed_power_w: float = C.SEED_POWER_W
    iterations: int = C.ITERATIONS
    tol: float = 1e-6
    early_stop: bool = True
    noise_power_w: float = C.NOISE_POWER_W
    snapshots: int = C.SNAPSHOTS
    trials: int = C.MONTE_CARLO_TRIALS
    aps_excitation: str = "uniform"
    randomize_seed_phases: bool = False
    theta_max_deg: float = 70.0
    coarse_step_deg: float = 0.5
    resolution_deg: float = 0.005


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "results"
    trace: bool = True
    spectrum: bool = False
    trials: bool = True
    figures: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    kind: str = "resonance"
    seed: int = 0
    curve_min_w: float = 1e-7
    curve_max_w: float = 1.0
    curve_points: int = 61
    scenario: ScenarioConfig = ScenarioConfig()
    sweep: dict[str, list] = field(default_factory=dict)
    output: OutputConfig = OutputConfig()

    @property
    def is_sweep(self) -> bool:
        return bool(self.sweep)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def axis_names(self) -> list[str]:
        return [n for axis in self.sweep for n in axis.split("+")]

    def points(self) -> list[dict[str, Any]]:
        """Swept parameter assignments, one dict per scenario (``[{}]`` for a single run)."""
        if not self.sweep:
            return [{}]
        per_axis = []
        for axis, values in self.sweep.items():
            names = axis.split("+")
            per_axis.append([dict(zip(names, v if len(names) > 1 else [v])) for v in values])
        return [dict(kv for part in combo for kv in part.items()) for combo in itertools.product(*per_axis)]

    def scenario_configs(self) -> list[tuple[dict[str, Any], ScenarioConfig]]:
        return [(pt, dataclasses.replace(self.scenario, **pt)) for pt in self.points()]


_EXPERIMENT_KEYS = ("name", "kind", "seed", "curve_min_w", "curve_max_w", "curve_points")
_POSITIVE = {
    "distance_m", "side_count", "wavelength_m", "spacing_m", "amp_max_output_w",
    "amp_knee_sharpness", "seed_power_w", "iterations", "snapshots", "trials",
    "coarse_step_deg", "resolution_deg", "curve_min_w", "curve_max_w", "curve_points",
}
_NON_NEGATIVE = {"noise_power_w", "tol", "theta_deg", "seed"}


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _check_value(section: str, key: str, value) -> None:
    where = f"{section}.{key}"
    if key in _POSITIVE and not value > 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    if key in _NON_NEGATIVE and value < 0:
        raise ConfigError(f"{where}: must be non-negative, got {value!r}")
    if key == "feedback_ratio" and not 0 < value < 1:
        raise ConfigError(f"{where}: must lie in (0, 1), got {value!r}")
    if key == "theta_deg" and value > 90:
        raise ConfigError(f"{where}: must not exceed 90 degrees")
    if key == "mode" and value not in (m.value for m in Mode):
        raise ConfigError(f"{where}: must be one of RBPS, APS, got {value!r}")
    if key == "kind" and value not in KINDS:
        raise ConfigError(f"{where}: must be one of {', '.join(KINDS)}, got {value!r}")
    if key == "aps_excitation" and value not in ("uniform", "single"):
        raise ConfigError(f"{where}: must be 'uniform' or 'single', got {value!r}")


def _table(cls, section: str, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{section}] must be a table")
    defaults = {f.name: f.default for f in fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in defaults:
            raise ConfigError(f"{section}.{key}: unknown key")
        out[key] = _coerce(section, key, value, defaults[key])
        _check_value(section, key, out[key])
    return cls(**out)


def _sweep(raw: dict) -> dict[str, list]:
    if not isinstance(raw, dict):
        raise ConfigError("[sweep] must be a table")
    defaults = {f.name: f.default for f in fields(ScenarioConfig)}
    out = {}
    for axis, values in raw.items():
        names = axis.split("+")
        for n in names:
            if n not in defaults:
                raise ConfigError(f"sweep.{axis}: unknown scenario key {n!r}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{axis}: expected a non-empty list")
        coerced = []
        for v in values:
            if len(names) > 1:
                if not isinstance(v, list) or len(v) != len(names):
                    raise ConfigError(f"sweep.{axis}: each entry must be a list of {len(names)} values")
                item = [_coerce("sweep", n, x, defaults[n]) for n, x in zip(names, v)]
                for n, x in zip(names, item):
                    _check_value("sweep", n, x)
                coerced.append(item)
            else:
                x = _coerce("sweep", axis, v, defaults[axis])
                _check_value("sweep", axis, x)
                coerced.append(x)
        out[axis] = coerced
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(doc) - {"experiment", "scenario", "sweep", "output"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    exp_raw = doc.get("experiment", {})
    if not isinstance(exp_raw, dict):
        raise ConfigError("[experiment] must be a table")
    defaults = {f.name: f.default for f in fields(ExperimentConfig)}
    exp = {}
    for key, value in exp_raw.items():
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"experiment.{key}: unknown key")
        exp[key] = _coerce("experiment", key, value, defaults[key])
        _check_value("experiment", key, exp[key])
    cfg = ExperimentConfig(
        **exp,
        scenario=_table(ScenarioConfig, "scenario", doc.get("scenario", {})),
        sweep=_sweep(doc.get("sweep", {})),
        output=_table(OutputConfig, "output", doc.get("output", {})),
    )
    if cfg.curve_min_w >= cfg.curve_max_w:
        raise ConfigError("experiment.curve_min_w: must be below curve_max_w")
    for _, sc in cfg.scenario_configs():
        if sc.resolution_deg > sc.coarse_step_deg:
            raise ConfigError("scenario.resolution_deg: must not exceed coarse_step_deg")
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def emit_config(cfg: ExperimentConfig) -> str:
    """Serialize to TOML; ``parse_config(emit_config(c)) == c``."""
    doc = {
        "experiment": {k: getattr(cfg, k) for k in _EXPERIMENT_KEYS},
        "scenario": dataclasses.asdict(cfg.scenario),
        "output": dataclasses.asdict(cfg.output),
    }
    if cfg.sweep:
        doc["sweep"] = {k: list(v) for k, v in cfg.sweep.items()}
    return tomli_w.dumps(doc)


def to_scenario(sc: ScenarioConfig, seed: int) -> Scenario:
    return Scenario(
        mode=Mode(sc.mode),
        distance=sc.distance_m,
        true_direction=Direction.from_degrees(sc.theta_deg, sc.phi_deg),
        side_count=sc.side_count,
        spacing=sc.spacing_m,
        wavelength=sc.wavelength_m,
        noise_power=sc.noise_power_w,
        seed_power=sc.seed_power_w,
        trials=sc.trials,
        rng_master_seed=seed,
        snapshots=sc.snapshots,
        feedback_ratio=sc.feedback_ratio,
        amplifier=AmplifierModel(sc.amp_gain_db, sc.amp_max_output_w, sc.amp_knee_sharpness),
        pattern=AntennaPattern(sc.max_gain_dbi),
        max_iters=sc.iterations,
        tol=sc.tol,
        aps_excitation=sc.aps_excitation,
        randomize_seed_phases=sc.randomize_seed_phases,
        search=GridSpec(theta_max=sc.theta_max_deg, coarse_step=sc.coarse_step_deg, resolution=sc.resolution_deg),
    )
