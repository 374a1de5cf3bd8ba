import csv
import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resbeam import cli
from resbeam.config import ConfigError, ExperimentConfig, OutputConfig, ScenarioConfig, emit_config, parse_config, to_scenario
from resbeam.io import fmt, write_csv
from resbeam.runner import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK

TINY = """
[experiment]
name = "tiny"
kind = "{kind}"

[scenario]
side_count = 6
distance_m = 0.12
theta_deg = 20.0
phi_deg = 40.0
iterations = 30
trials = 3
coarse_step_deg = 1.0
resolution_deg = 0.05

[sweep]
{sweep}

[output]
spectrum = true
"""


def tiny(kind, sweep="noise_power_w = [5e-6, 2e-5]"):
    return TINY.format(kind=kind, sweep=sweep)


# -- parsing ---------------------------------------------------------------------------

def test_empty_document_gives_reference_defaults():
    cfg = parse_config("")
    sc = cfg.scenario
    assert cfg == ExperimentConfig()
    assert not cfg.is_sweep and cfg.points() == [{}]
    assert sc.wavelength_m == 0.01 and sc.spacing_m == 0.0025
    assert sc.side_count == 40 and sc.feedback_ratio == 0.004
    assert sc.iterations == 200 and sc.trials == 100 and sc.seed_power_w == 1e-3


@pytest.mark.parametrize("doc, key", [
    ("[scenario]\ndistance_m = -1", "scenario.distance_m"),
    ("[scenario]\ndistance = -1", "scenario.distance"),
    ("[scenario]\nfeedback_ratio = 1.5", "scenario.feedback_ratio"),
    ("[scenario]\nmode = 'laser'", "scenario.mode"),
    ("[experiment]\nkind = 'other'", "experiment.kind"),
    ("[sweep]\nwhatever = [1]", "sweep.whatever"),
    ("[sweep]\ntrials = []", "sweep.trials"),
    ("[output]\ncolour = true", "output.colour"),
    ("[scenario]\nside_count = 'big'", "scenario.side_count"),
])
def test_validation_names_the_key(doc, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(doc)


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[plots]\nx = 1")


def test_malformed_document_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[scenario]\ntrials = 3\ndistance_m = = 2\n")


def test_gamma_sweep_has_five_points():
    cfg = parse_config("[sweep]\nfeedback_ratio = [0.001, 0.002, 0.004, 0.008, 0.016]")
    assert cfg.is_sweep
    assert [sc.feedback_ratio for _, sc in cfg.scenario_configs()] == [0.001, 0.002, 0.004, 0.008, 0.016]


def test_compound_and_product_axes():
    cfg = parse_config('[sweep]\n"distance_m+trials" = [[2.0, 5], [2.5, 7]]\nmode = ["RBPS", "APS"]')
    pts = cfg.points()
    assert pts[0] == {"distance_m": 2.0, "trials": 5, "mode": "RBPS"}
    assert pts[-1] == {"distance_m": 2.5, "trials": 7, "mode": "APS"}
    assert cfg.axis_names() == ["distance_m", "trials", "mode"]


def test_to_scenario_maps_fields():
    sc = to_scenario(ScenarioConfig(mode="APS", theta_deg=30, phi_deg=15, noise_power_w=1e-5), seed=9)
    assert sc.mode.value == "APS" and sc.rng_master_seed == 9 and sc.noise_power == 1e-5
    assert np.rad2deg(sc.true_direction.theta) == pytest.approx(30)


finite = dict(allow_nan=False, allow_infinity=False)
scenarios = st.builds(
    ScenarioConfig,
    mode=st.sampled_from(["RBPS", "APS"]),
    distance_m=st.floats(0.1, 10, **finite),
    theta_deg=st.floats(0, 90, **finite),
    phi_deg=st.floats(-360, 720, **finite),
    side_count=st.integers(1, 64),
    feedback_ratio=st.floats(1e-6, 0.999, **finite),
    amp_gain_db=st.floats(-10, 40, **finite),
    noise_power_w=st.floats(0, 1, **finite),
    trials=st.integers(1, 1000),
    early_stop=st.booleans(),
    aps_excitation=st.sampled_from(["uniform", "single"]),
    coarse_step_deg=st.floats(0.1, 5, **finite),
    resolution_deg=st.floats(1e-3, 0.1, **finite),
)
configs = st.builds(
    ExperimentConfig,
    name=st.text(min_size=1, max_size=20),
    kind=st.sampled_from(["amplifier", "resonance", "spectrum", "rmse"]),
    seed=st.integers(0, 2**31),
    scenario=scenarios,
    sweep=st.one_of(
        st.just({}),
        st.fixed_dictionaries({"feedback_ratio": st.lists(st.floats(1e-4, 0.5, **finite), min_size=1, max_size=5)}),
        st.fixed_dictionaries({"mode": st.lists(st.sampled_from(["RBPS", "APS"]), min_size=1, max_size=2),
                               "trials": st.lists(st.integers(1, 10), min_size=1, max_size=3)}),
    ),
    output=st.builds(OutputConfig, dir=st.text(min_size=1, max_size=10), trace=st.booleans(), figures=st.booleans()),
)


@settings(max_examples=100, deadline=None)
@given(configs)
def test_parse_emit_round_trip(cfg):
    assert parse_config(emit_config(cfg)) == cfg


def test_bundled_configs_all_validate():
    names = cli.bundled_configs()
    assert {"fig5", "fig7", "fig9", "fig10", "fig11", "fig12", "fig13a", "fig13b", "fig14a", "fig14b"} <= set(names)
    for name in names:
        cli.load(name)
    fig7 = cli.load("fig7")
    assert fig7.sweep == {"feedback_ratio": [0.001, 0.002, 0.004, 0.008, 0.016]}
    assert fig7.scenario.side_count == 40 and fig7.scenario.distance_m == 2.0


# -- float formatting ---------------------------------------------------------------

@pytest.mark.parametrize("value, text", [
    (0.0, "0"), (1.0, "1"), (0.1234567891234, "0.123456789"), (123456.789012, "123456.789"),
    (2e-5, "2.00000000e-05"), (-3.5e-9, "-3.50000000e-09"), (1e-3, "0.001"),
    (True, "true"), (7, "7"), (np.float32(0.5), "0.5"), ("RBPS", "RBPS"), (None, ""),
])
def test_fmt(value, text):
    assert fmt(value) == text


def test_csv_layout(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("a", "b"), [(1.5, 2e-5), (np.int64(3), "z")])
    assert path.read_bytes() == b"a,b\n1.5,2.00000000e-05\n3,z\n"


# -- execution ------------------------------------------------------------------------

def run_cli(tmp_path, text, *extra):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(text, encoding="utf-8")
    return cli.main(["run", str(cfg), *extra])


def test_dry_run_echoes_config_only(tmp_path, capsys):
    out = tmp_path / "out"
    assert run_cli(tmp_path, tiny("rmse"), "--out", str(out), "--dry-run") == EXIT_OK
    echoed = capsys.readouterr().out
    assert parse_config(echoed) == parse_config(tiny("rmse"))
    assert not out.exists()


def test_validate_command(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(tiny("rmse"), encoding="utf-8")
    assert cli.main(["validate", str(cfg)]) == EXIT_OK
    assert "2 scenarios" in capsys.readouterr().out
    assert cli.main(["validate", "fig13a"]) == EXIT_OK


def test_exit_codes(tmp_path):
    assert run_cli(tmp_path, "[scenario]\ndistance_m = -1") == EXIT_CONFIG
    assert cli.main(["validate", str(tmp_path / "missing.toml")]) == EXIT_IO
    assert run_cli(tmp_path, tiny("rmse"), "--seed", "-1") == EXIT_CONFIG
    blocker = tmp_path / "file"
    blocker.write_text("", encoding="utf-8")
    assert run_cli(tmp_path, tiny("amplifier"), "--out", str(blocker / "sub")) == EXIT_IO
    with pytest.raises(SystemExit) as exc:
        cli.main(["run"])
    assert exc.value.code == 2


def test_numeric_failure_exit_code(tmp_path, capsys):
    doc = tiny("rmse").replace("distance_m = 0.12", "distance_m = 0.012").replace("side_count = 6", "side_count = 2")
    assert run_cli(tmp_path, doc, "--out", str(tmp_path / "o")) == EXIT_NUMERIC
    assert "NearFieldError" in capsys.readouterr().out
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert all("error" in s for s in summary["scenarios"])


def test_amplifier_run(tmp_path):
    out = tmp_path / "amp"
    assert run_cli(tmp_path, tiny("amplifier"), "--out", str(out)) == EXIT_OK
    rows = list(csv.DictReader((out / "amplifier.csv").open()))
    assert len(rows) == 61
    assert all(float(r["p_out_w"]) <= 1.0 for r in rows)
    assert (out / "amplifier.png").stat().st_size > 0


def test_resonance_run_writes_trace(tmp_path):
    out = tmp_path / "res"
    assert run_cli(tmp_path, tiny("resonance", "feedback_ratio = [0.002, 0.004]"), "--out", str(out)) == EXIT_OK
    rows = list(csv.DictReader((out / "resonance.csv").open()))
    assert [r["feedback_ratio"] for r in rows] == ["0.002", "0.004"]
    trace = list(csv.DictReader((out / "trace.csv").open()))
    assert trace[0]["iteration"] == "1"
    for name in ("trace.png", "efficiency.png"):
        assert (out / name).exists()


def test_spectrum_run(tmp_path):
    out = tmp_path / "spectra"
    assert run_cli(tmp_path, tiny("spectrum", 'mode = ["RBPS", "APS"]'), "--out", str(out)) == EXIT_OK
    rows = list(csv.DictReader((out / "doa.csv").open()))
    assert [r["mode"] for r in rows] == ["RBPS", "APS"]
    grid = list(csv.DictReader((out / "spectrum_000.csv").open()))
    assert len(grid) == 71 * 360
    assert (out / "spectrum_001.png").exists()


def test_rmse_run_columns(tmp_path):
    out = tmp_path / "rmse"
    assert run_cli(tmp_path, tiny("rmse", 'noise_power_w = [5e-6, 2e-5]\nmode = ["RBPS", "APS"]'), "--out", str(out)) == EXIT_OK
    with (out / "rmse.csv").open() as fh:
        header = next(csv.reader(fh))
    assert header[:3] == ["noise_power_w", "mode", "rmse_m"]
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["scenarios"]) == 4
    assert (out / "trials_003.csv").exists() and (out / "rmse.png").exists()


def test_artifacts_byte_identical(tmp_path):
    text = tiny("rmse")
    for name in ("a", "b"):
        assert run_cli(tmp_path, text, "--out", str(tmp_path / name), "--seed", "4") == EXIT_OK
    for f in ("rmse.csv", "trials_000.csv", "trials_001.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_override_changes_noise(tmp_path):
    text = tiny("rmse").replace("[5e-6, 2e-5]", "[1e-2]")
    run_cli(tmp_path, text, "--out", str(tmp_path / "s1"), "--seed", "1")
    run_cli(tmp_path, text, "--out", str(tmp_path / "s2"), "--seed", "2")
    assert (tmp_path / "s1" / "trials_000.csv").read_bytes() != (tmp_path / "s2" / "trials_000.csv").read_bytes()


def test_with_overrides():
    cfg = parse_config("")
    assert cfg.with_overrides(seed=5).seed == 5
    assert dataclasses.replace(cfg, seed=5) == cfg.with_overrides(seed=5)
