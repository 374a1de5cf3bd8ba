import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resbeam.evaluation import (
    Mode,
    RmseReport,
    Scenario,
    ScenarioFailure,
    position_error,
    received_field,
    rmse_from_errors,
    run_aps_baseline,
    run_rbps,
    run_scenario,
    run_trial,
    sweep,
)
from resbeam.geometry import Direction
from resbeam.music import GridSpec

FAST = GridSpec(coarse_step=1.0, resolution=0.01)


def small(**kw):
    """10 x 10 arrays 15 cm apart: a lit loop that runs in a fraction of a second."""
    base = dict(side_count=10, distance=0.15, trials=4, search=FAST, true_direction=Direction.from_degrees(20.0, 40.0))
    base.update(kw)
    return Scenario(**base)


def assert_reports_identical(a: RmseReport, b: RmseReport):
    assert a.rmse == b.rmse
    np.testing.assert_array_equal(a.per_trial_errors, b.per_trial_errors)
    np.testing.assert_array_equal(a.theta_hats, b.theta_hats)
    np.testing.assert_array_equal(a.phi_hats, b.phi_hats)
    assert (a.mean_theta_err, a.mean_phi_err, a.low_confidence_count, a.received_power) == (
        b.mean_theta_err, b.mean_phi_err, b.low_confidence_count, b.received_power
    )


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(trials=0)
    with pytest.raises(ValueError):
        Scenario(distance=-1.0)
    with pytest.raises(ValueError):
        Scenario(aps_excitation="fan")
    assert Scenario(mode="APS").mode is Mode.APS


def test_perfect_estimate_has_zero_error():
    assert position_error(0.3, 1.1, 0.3, 1.1, 2.0) == (0.0, 0.0, 0.0)


def test_small_elevation_error_first_order():
    delta = 1e-6
    dx, dy, dz = position_error(delta, 0.0, 0.0, 0.0, 2.0)
    assert dx == pytest.approx(2.0 * delta, rel=1e-9)
    assert abs(dy) < 1e-18 and abs(dz) < 1e-11


@given(arrays(float, st.tuples(st.integers(1, 50), st.just(3)), elements=st.floats(-10, 10)))
def test_rmse_formula(errors):
    expected = math.sqrt(sum(x * x + y * y + z * z for x, y, z in errors.tolist()) / len(errors))
    assert rmse_from_errors(errors) == pytest.approx(expected, rel=1e-12, abs=1e-300)


def test_report_recomputes():
    rep = run_scenario(small())
    assert rep.per_trial_errors.shape == (4, 3)
    assert rmse_from_errors(rep.per_trial_errors) == pytest.approx(rep.rmse, rel=1e-12)
    t0, p0 = rep.config_echo.true_direction.theta, rep.config_echo.true_direction.phi
    d = rep.config_echo.distance
    for (ex, ey, ez), th, ph in zip(rep.per_trial_errors, rep.theta_hats, rep.phi_hats):
        assert ex == pytest.approx(d * math.sin(th) * math.cos(ph) - d * math.sin(t0) * math.cos(p0), abs=1e-12)
        assert ey == pytest.approx(d * math.sin(th) * math.sin(ph) - d * math.sin(t0) * math.sin(p0), abs=1e-12)
        assert ez == pytest.approx(d * math.cos(th) - d * math.cos(t0), abs=1e-12)


def test_determinism_bitwise():
    assert_reports_identical(run_scenario(small()), run_scenario(small()))


def test_worker_processes_do_not_change_results():
    assert_reports_identical(run_scenario(small(), workers=1), run_scenario(small(), workers=2))


def test_seeds_change_noise_only():
    a = run_scenario(small(rng_master_seed=1, noise_power=1e-2))
    b = run_scenario(small(rng_master_seed=2, noise_power=1e-2))
    assert a.received_power == b.received_power
    assert not np.array_equal(a.per_trial_errors, b.per_trial_errors)


def test_single_noiseless_trial_rmse():
    sc = small(trials=1, noise_power=0.0)
    rep = run_scenario(sc)
    _, err = run_trial(sc, 0)
    assert rep.rmse == pytest.approx(math.sqrt(sum(e * e for e in err)), rel=1e-12)


def test_aps_zero_seed_gives_zero_field():
    assert run_aps_baseline(small(mode=Mode.APS, seed_power=0.0)).total_power == 0.0


def test_aps_single_element_is_friis():
    sc = Scenario(mode=Mode.APS, side_count=1, distance=2.0, true_direction=Direction(0.0, 0.0), aps_excitation="single")
    g = 10 ** 0.497
    expected = 1e-3 * g * g * (0.01 / (4 * math.pi * 2.0)) ** 2
    assert run_aps_baseline(sc).total_power == pytest.approx(expected, rel=1e-12)


def test_aps_receives_less_than_rbps_reference():
    sc = Scenario(trials=1)
    aps = received_field(sc.replace(mode=Mode.APS)).total_power
    rbps = received_field(sc).total_power
    assert aps < rbps


def test_rbps_signal_is_steady_state_bs_input():
    sc = small()
    np.testing.assert_array_equal(received_field(sc).amplitudes, run_rbps(sc).bs_in_field.amplitudes)


def test_randomized_seed_phases_flag_runs():
    rep = run_scenario(small(randomize_seed_phases=True, trials=2))
    assert rep.rmse < 0.01


def test_sweep_keeps_order_and_collects_failures():
    good = small(trials=2)
    broken = small(side_count=2, distance=0.012, trials=1)  # closer than the 2 wavelength floor
    out = sweep([good, broken, good.replace(rng_master_seed=3)])
    assert isinstance(out[0], RmseReport) and out[0].config_echo == good
    assert isinstance(out[1], ScenarioFailure) and "NearFieldError" in out[1].error
    assert isinstance(out[2], RmseReport) and out[2].config_echo.rng_master_seed == 3


def test_sweep_of_identical_scenarios_is_identical():
    a, b = sweep([small(trials=2), small(trials=2)])
    assert_reports_identical(a, b)


def test_sweep_rejects_empty():
    with pytest.raises(ValueError):
        sweep([])


@pytest.mark.parametrize("mode", [Mode.RBPS, Mode.APS])
def test_rmse_grows_with_distance(mode):
    """Median over 5 master seeds, 30 x 30 arrays, theta 10 deg."""
    base = Scenario(mode=mode, side_count=30, true_direction=Direction.from_degrees(10.0, 15.0), trials=5)
    med = []
    for d in (2.0, 2.5):
        med.append(np.median([run_scenario(base.replace(distance=d, rng_master_seed=s)).rmse for s in range(5)]))
    assert med[1] >= med[0]
