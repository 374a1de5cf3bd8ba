"""Execute an :class:`ExperimentConfig` and write its artifacts."""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from . import io, plotting
from .config import ExperimentConfig, emit_config, to_scenario
from .evaluation import (
    RmseReport,
    _pmap,
    baseband_vector,
    received_field,
    run_scenario,
    trial_seed,
)
from .music import EigenDecompositionError, estimate_doa, synthesize_snapshots
from .propagation import NearFieldError
from .resonance import AmplifierModel, PowerDivider, UndefinedEfficiencyError, run_resonance

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

NUMERIC_ERRORS = (ArithmeticError, NearFieldError, EigenDecompositionError, UndefinedEfficiencyError, np.linalg.LinAlgError)


def report_trial_rows(report: RmseReport):
    for i, (t, p, e) in enumerate(zip(report.theta_hats, report.phi_hats, report.per_trial_errors)):
        yield (i, float(np.rad2deg(t)), float(np.rad2deg(p)), e[0], e[1], e[2])


TRIAL_HEADER = ("trial", "theta_hat_deg", "phi_hat_deg", "dx_m", "dy_m", "dz_m")


def report_summary(report: RmseReport) -> dict:
    sc = report.config_echo
    return {
        "mode": sc.mode.value,
        "distance_m": sc.distance,
        "theta_deg": sc.true_direction.degrees[0],
        "phi_deg": sc.true_direction.degrees[1],
        "side_count": sc.side_count,
        "noise_power_w": sc.noise_power,
        "trials": sc.trials,
        "master_seed": sc.rng_master_seed,
        "rmse_m": report.rmse,
        "mean_theta_err_deg": float(np.rad2deg(report.mean_theta_err)),
        "mean_phi_err_deg": float(np.rad2deg(report.mean_phi_err)),
        "low_confidence_trials": report.low_confidence_count,
        "received_power_w": report.received_power,
    }


def _label(point: dict) -> str:
    return ", ".join(f"{k}={io.fmt(v)}" for k, v in point.items()) or "single run"


def _resonance_job(args):
    sc, seed, want_trace = args
    scenario = to_scenario(sc, seed)
    sink = io.CsvTraceSink() if want_trace else None
    res = run_resonance(
        scenario.bs_array,
        scenario.pt_array,
        scenario.amplifier,
        PowerDivider(sc.feedback_ratio),
        scenario.pattern,
        sc.seed_power_w,
        sc.iterations,
        sc.tol,
        wavelength=sc.wavelength_m,
        early_stop=sc.early_stop,
        trace=sink,
        transfer=scenario.transfer,
    )
    return res, (sink.rows if sink else [])


def _spectrum_job(args):
    sc, seed = args
    scenario = to_scenario(sc, seed)
    fld = received_field(scenario)
    batch = synthesize_snapshots(baseband_vector(fld), scenario.noise_power, scenario.snapshots, trial_seed(scenario, 0))
    return scenario, fld.total_power, estimate_doa(batch, scenario.bs_array, scenario.wavelength, scenario.search, keep_grid=True)


class Runner:
    def __init__(self, cfg: ExperimentConfig, out: Path, workers: int = 1, stream=None):
        self.cfg = cfg
        self.out = Path(out)
        self.workers = max(1, int(workers))
        self.stream = stream if stream is not None else sys.stdout
        self.axes = cfg.axis_names()
        self.failed = 0

    def say(self, msg: str) -> None:
        print(msg, file=self.stream, flush=True)

    def key_cols(self, point: dict) -> list:
        return [point[a] for a in self.axes]

    def figure(self, fn, *args, **kw):
        if self.cfg.output.figures:
            fn(*args, **kw)

    def grouped(self, points, values):
        """Split results by every axis but the first, for one curve per group."""
        first = self.axes[0]
        curves: dict[str, list] = {}
        xs: dict[str, list] = {}
        for pt, v in zip(points, values):
            label = _label({k: pt[k] for k in self.axes[1:]}) or first
            curves.setdefault(label, []).append(v)
            xs.setdefault(label, []).append(pt[first])
        return first, xs, curves

    def plot_vs_axis(self, points, values, ylabel, name, logy=False):
        if not self.axes or not all(isinstance(p[self.axes[0]], (int, float)) for p in points):
            return
        first, xs, curves = self.grouped(points, values)
        x = next(iter(xs.values()))
        if any(v != x for v in xs.values()):
            return
        self.figure(plotting.series, x, {k: np.asarray(v) for k, v in curves.items()}, first, ylabel, self.out / name, logy=logy)

    # -- experiment kinds -------------------------------------------------
    def amplifier(self):
        sc = self.cfg.scenario
        amp = AmplifierModel(sc.amp_gain_db, sc.amp_max_output_w, sc.amp_knee_sharpness)
        p_in = np.logspace(np.log10(self.cfg.curve_min_w), np.log10(self.cfg.curve_max_w), self.cfg.curve_points)
        p_out = amp.output_power(p_in)
        gain_db = 10 * np.log10(p_out / p_in)
        io.write_csv(self.out / "amplifier.csv", ("p_in_w", "p_out_w", "gain_db"), zip(p_in, p_out, gain_db))
        self.figure(plotting.amplifier_curve, p_in, p_out, self.out / "amplifier.png")
        self.say(f"{self.cfg.name}: amplifier curve, {len(p_in)} points, max output {p_out.max():.6g} W")

    def resonance(self):
        pts = self.cfg.scenario_configs()
        jobs = [(sc, self.cfg.seed, self.cfg.output.trace) for _, sc in pts]
        results = _pmap(_resonance_job, jobs, self.workers)
        rows, trace_rows, etas, hists = [], [], [], {}
        for (point, _), (res, trace) in zip(pts, results):
            eta = res.efficiency_history[-1]
            etas.append(eta)
            hists[_label(point)] = res.pt_out_power_history
            rows.append(self.key_cols(point) + [
                eta, res.eta_pt_history[-1], res.pt_in_field.total_power, res.pt_out_field.total_power,
                res.bs_out_field.total_power, res.harvested_power, res.iterations_run, res.converged,
                res.sustain_iteration, res.dark,
            ])
            trace_rows.extend(self.key_cols(point) + list(r) for r in trace)
            self.say(
                f"{self.cfg.name}: {_label(point)}: eta={io.fmt(eta)} pt_out={io.fmt(res.pt_out_field.total_power)} W "
                f"iterations={res.iterations_run} converged={res.converged}"
            )
        header = self.axes + ["eta", "eta_pt", "pt_in_power_w", "pt_out_power_w", "bs_out_power_w",
                              "harvested_power_w", "iterations", "converged", "sustain_iteration", "dark"]
        io.write_csv(self.out / "resonance.csv", header, rows)
        if self.cfg.output.trace:
            io.write_csv(self.out / "trace.csv", self.axes + list(io.CsvTraceSink.header), trace_rows)
            self.figure(plotting.traces, hists, "PT output power (W)", self.out / "trace.png")
        self.plot_vs_axis([p for p, _ in pts], etas, "transmission efficiency", "efficiency.png")

    def spectrum(self):
        pts = self.cfg.scenario_configs()
        results = _pmap(_spectrum_job, [(sc, self.cfg.seed) for _, sc in pts], self.workers)
        rows = []
        for idx, ((point, _), (scenario, power, est)) in enumerate(zip(pts, results)):
            t0, p0 = scenario.true_direction.degrees
            th, ph = np.rad2deg(est.theta_hat), np.rad2deg(est.phi_hat)
            dphi = (ph - p0 + 180.0) % 360.0 - 180.0
            rows.append(self.key_cols(point) + [
                th, ph, th - t0, dphi, 10 * np.log10(est.peak_value), 10 * np.log10(est.peak_to_median),
                est.low_confidence, power,
            ])
            if self.cfg.output.spectrum:
                io.write_spectrum_csv(self.out / f"spectrum_{idx:03d}.csv", est.spectrum_grid)
            self.figure(plotting.spectrum, est.spectrum_grid, self.out / f"spectrum_{idx:03d}.png", (t0, p0), _label(point))
            self.say(
                f"{self.cfg.name}: {_label(point)}: theta_hat={th:.4f} phi_hat={ph:.4f} deg "
                f"peak/median={10 * np.log10(est.peak_to_median):.2f} dB"
            )
        header = self.axes + ["theta_hat_deg", "phi_hat_deg", "theta_err_deg", "phi_err_deg", "peak_db",
                              "peak_to_median_db", "low_confidence", "received_power_w"]
        io.write_csv(self.out / "doa.csv", header, rows)

    def rmse(self):
        pts = self.cfg.scenario_configs()
        rows, summaries, values = [], [], []
        for idx, (point, sc) in enumerate(pts):
            scenario = to_scenario(sc, self.cfg.seed)
            try:
                report = run_scenario(scenario, workers=self.workers)
            except NUMERIC_ERRORS as exc:
                self.failed += 1
                self.say(f"{self.cfg.name}: {_label(point)}: FAILED {type(exc).__name__}: {exc}")
                summaries.append({"point": point, "error": f"{type(exc).__name__}: {exc}"})
                values.append(np.nan)
                continue
            s = report_summary(report)
            summaries.append({"point": point, **s})
            values.append(report.rmse)
            rows.append(self.key_cols(point) + [
                report.rmse, s["mean_theta_err_deg"], s["mean_phi_err_deg"], report.low_confidence_count,
                report.received_power,
            ])
            if self.cfg.output.trials:
                io.write_csv(self.out / f"trials_{idx:03d}.csv", TRIAL_HEADER, report_trial_rows(report))
            self.say(f"{self.cfg.name}: {_label(point)}: rmse={io.fmt(report.rmse)} m over {sc.trials} trials")
        header = self.axes + ["rmse_m", "mean_theta_err_deg", "mean_phi_err_deg", "low_confidence_trials", "received_power_w"]
        io.write_csv(self.out / "rmse.csv", header, rows)
        io.write_json(self.out / "summary.json", {"experiment": self.cfg.name, "seed": self.cfg.seed, "scenarios": summaries})
        self.plot_vs_axis([p for p, _ in pts], values, "RMSE (m)", "rmse.png", logy=True)

    def run(self) -> int:
        getattr(self, self.cfg.kind)()
        return EXIT_NUMERIC if self.failed else EXIT_OK


def execute(cfg: ExperimentConfig, out=None, workers: int = 1, dry_run: bool = False, stream=None) -> int:
    """Run ``cfg``; returns a process exit status (see README for the codes)."""
    stream = stream if stream is not None else sys.stdout
    if dry_run:
        print(emit_config(cfg), end="", file=stream)
        return EXIT_OK
    out = Path(out if out is not None else cfg.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return Runner(cfg, out, workers, stream).run()
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except NUMERIC_ERRORS as exc:
        print(f"error: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

