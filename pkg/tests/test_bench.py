import math

import numpy as np
import pytest

from ppasim.bench import (
    BenchConfig,
    NoDataError,
    SweepRecord,
    TrialResult,
    _estimator_direction,
    _invert_frequency,
    estimate_theta,
    fmt_sig,
    misaligned_half_tangent,
    rng_stream,
    run_bench_state,
    run_trials,
    sample_counts,
    source_state,
    systematic_shift_t,
    waveplate_generator,
)
from ppasim.fisher import MeasurementDirection, PPAFamily, optimal_measurement, qfi_ppa_theory
from ppasim.states import amplified_angle, bloch_vector


# ------------------------------------------------------------------- sources


def test_source_state_pure_limit():
    assert np.allclose(bloch_vector(source_state(1.0)), [0, 0, -1])


def test_source_state_fully_mixed():
    assert np.allclose(source_state(0.0).mat, np.eye(2) / 2)


def test_source_state_partial_visibility():
    r = bloch_vector(source_state(0.98))
    assert np.allclose(r, [0, 0, -0.98])


def test_source_state_rejects_out_of_range():
    with pytest.raises(ValueError):
        source_state(1.2)


def test_waveplate_generator_aligned():
    gen = waveplate_generator(0.0)
    assert np.allclose(gen.mat, np.array([[0, 0.5], [0.5, 0]]))
    assert gen.spread == pytest.approx(1.0)


def test_waveplate_generator_spread_is_tilt_independent():
    for eps in (0.0, 0.01, 0.1, -0.05):
        assert waveplate_generator(eps).spread == pytest.approx(1.0)


# --------------------------------------------------------------------- state


def test_run_bench_state_zero_phase_ideal():
    cfg = BenchConfig(theta_true=0.0, t_set=0.5)
    rho, p = run_bench_state(cfg)
    assert p == pytest.approx(0.25)
    assert np.allclose(rho.mat, np.diag([1.0, 0.0]))


def test_run_bench_state_survival_probability_frozen():
    cfg = BenchConfig(theta_true=0.040, t_set=0.044)
    _, p = run_bench_state(cfg)
    assert p == pytest.approx(0.0023351723727588563, abs=1e-15)


def test_run_bench_state_open_filter_passes_everything():
    cfg = BenchConfig(theta_true=0.3, t_set=1.0)
    _, p = run_bench_state(cfg)
    assert p == pytest.approx(1.0)


def test_run_bench_state_matches_family():
    for theta in (0.05, 0.3, 1.1):
        for t in (0.2, 0.7):
            cfg = BenchConfig(theta_true=theta, t_set=t, visibility=0.97)
            rho, p = run_bench_state(cfg)
            fam = PPAFamily(t=t, v=0.97)
            assert p == pytest.approx(fam.prob(theta), abs=1e-12)
            assert np.abs(rho.mat - fam.state(theta).mat).max() < 1e-12


def test_run_bench_state_amplifies_the_polar_angle():
    cfg = BenchConfig(theta_true=0.1, t_set=0.2)
    rho, _ = run_bench_state(cfg)
    x, y, z = bloch_vector(rho)
    polar = math.atan2(math.hypot(x, y), z)
    assert polar == pytest.approx(amplified_angle(0.1, 0.2), abs=1e-12)


# ------------------------------------------------------------------ sampling


def test_sample_counts_zero_budget():
    cfg = BenchConfig(theta_true=0.1, t_set=0.5)
    rho, p = run_bench_state(cfg)
    direction = optimal_measurement(0.1, 0.5)
    trial = sample_counts(rho, p, direction, 0, "fixed", rng_stream(0, 0))
    assert trial.n_detected == 0
    assert trial.counts_plus == trial.counts_minus == 0


def test_sample_counts_polar_direction_is_deterministic():
    # measuring along +z on a state pinned at the pole: every detected
    # photon lands in the plus port
    cfg = BenchConfig(theta_true=0.0, t_set=0.5)
    rho, p = run_bench_state(cfg)
    direction = MeasurementDirection(theta_opt=0.0, phi_opt=0.0)
    trial = sample_counts(rho, p, direction, 4000, "fixed", rng_stream(1, 0))
    assert trial.counts_minus == 0
    assert trial.counts_plus == trial.n_detected > 0


def test_sample_counts_detection_rate_tracks_survival():
    cfg = BenchConfig(theta_true=0.3, t_set=0.5)
    rho, p = run_bench_state(cfg)
    direction = optimal_measurement(0.3, 0.5)
    budget = 200_000
    trial = sample_counts(rho, p, direction, budget, "fixed", rng_stream(7, 0))
    sigma = math.sqrt(budget * p * (1 - p))
    assert abs(trial.n_detected - budget * p) < 4 * sigma


def test_sample_counts_poisson_mode_varies_total():
    cfg = BenchConfig(theta_true=0.3, t_set=0.5)
    rho, p = run_bench_state(cfg)
    direction = optimal_measurement(0.3, 0.5)
    totals = {
        sample_counts(rho, p, direction, 5000, "poisson", rng_stream(3, k)).n_detected
        for k in range(8)
    }
    assert len(totals) > 1


def test_trial_result_enforces_count_consistency():
    with pytest.raises(ValueError):
        TrialResult(theta_estimate=0.1, n_detected=10, counts_plus=4, counts_minus=5)


# ---------------------------------------------------------------- estimation


def exact_counts(theta, t, direction, n=10**9):
    """Noise-free counts at the model frequency (no sampling)."""
    fam = PPAFamily(t=t)
    rho = fam.state(theta)
    proj = direction.projector()
    q = float(np.trace(rho.mat @ proj).real)
    plus = round(n * q)
    return TrialResult(
        theta_estimate=float("nan"),
        n_detected=n,
        counts_plus=plus,
        counts_minus=n - plus,
    )


def test_estimate_theta_recovers_truth_from_exact_counts():
    for theta in (0.05, 0.2, 0.9):
        for t in (0.1, 0.5, 0.9):
            direction = optimal_measurement(theta, t)
            counts = exact_counts(theta, t, direction)
            est = estimate_theta(counts, t, direction, theta)
            assert est == pytest.approx(theta, abs=1e-8)


def test_estimate_theta_complex_filter_phase():
    # a filter phase rotates the state's azimuth; folding it into the model
    # direction reduces the problem to the real-amplitude fringe
    t = 0.5 * np.exp(0.8j)
    fam = PPAFamily(t=t)
    theta = 0.2
    rho = fam.state(theta)
    direction = optimal_measurement(theta, t)
    proj = direction.projector()
    q = float(np.trace(rho.mat @ proj).real)
    n = 10**9
    plus = round(n * q)
    counts = TrialResult(
        theta_estimate=float("nan"), n_detected=n, counts_plus=plus, counts_minus=n - plus
    )
    model_direction = _estimator_direction(direction, 0.8)
    est = estimate_theta(counts, abs(t), model_direction, theta)
    assert est == pytest.approx(theta, abs=1e-8)


def test_invert_frequency_reproduces_calibration_shift():
    # feed the estimator the exact physical frequency while it assumes a
    # miscalibrated transmission: the output must land on the closed-form
    # shifted angle
    theta, t, dt = 0.1, 0.1, 0.01
    direction = optimal_measurement(theta, t + dt)
    fam = PPAFamily(t=t)
    rho = fam.state(theta)
    q = float(np.trace(rho.mat @ direction.projector()).real)
    est, clamped = _invert_frequency(q, direction, t + dt, theta)
    assert not clamped
    assert est == pytest.approx(0.10998076567697557, abs=1e-12)
    assert est == pytest.approx(systematic_shift_t(theta, t, dt), abs=1e-12)


def test_half_tangent_shift_identity():
    # tan(theta_est/2) - tan(theta/2) = tan(Theta/2) * dt for exact input
    rng = np.random.default_rng(5)
    for _ in range(25):
        theta = float(rng.uniform(0.02, 1.2))
        t = float(rng.uniform(0.05, 0.8))
        dt = float(rng.uniform(-0.02, 0.02))
        est = systematic_shift_t(theta, t, dt)
        lhs = math.tan(est / 2) - math.tan(theta / 2)
        rhs = math.tan(amplified_angle(theta, t) / 2) * dt
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-15)


def test_invert_frequency_clamps_out_of_range():
    # an azimuthally tilted analyzer has fringe contrast below one, so a
    # saturated frequency lands outside the reachable band and is clamped
    direction = MeasurementDirection(theta_opt=math.pi / 2, phi_opt=math.pi / 4)
    est, clamped = _invert_frequency(1.0, direction, 0.5, 0.1)
    assert clamped
    assert math.isfinite(est)
    _, clamped_ok = _invert_frequency(0.5, direction, 0.5, 0.1)
    assert not clamped_ok


def test_estimate_theta_saturated_counts_stay_finite():
    direction = optimal_measurement(0.1, 0.5)
    counts = TrialResult(
        theta_estimate=float("nan"), n_detected=100, counts_plus=100, counts_minus=0
    )
    est = estimate_theta(counts, 0.5, direction, 0.1)
    assert math.isfinite(est)


def test_estimate_theta_requires_data():
    direction = optimal_measurement(0.1, 0.5)
    counts = TrialResult(
        theta_estimate=float("nan"), n_detected=0, counts_plus=0, counts_minus=0
    )
    with pytest.raises(NoDataError):
        estimate_theta(counts, 0.5, direction, 0.1)


# -------------------------------------------------------------------- trials


def test_run_trials_is_deterministic():
    cfg = BenchConfig(theta_true=0.1, t_set=0.3, photon_budget=20000, n_trials=6, seed=17)
    rec_a = run_trials(cfg)
    rec_b = run_trials(cfg)
    assert rec_a == rec_b


def test_run_trials_seed_changes_output():
    cfg1 = BenchConfig(theta_true=0.1, t_set=0.3, photon_budget=20000, n_trials=6, seed=17)
    cfg2 = BenchConfig(theta_true=0.1, t_set=0.3, photon_budget=20000, n_trials=6, seed=18)
    assert run_trials(cfg1).mean_estimate != run_trials(cfg2).mean_estimate


def test_run_trials_unbiased_at_matched_calibration():
    cfg = BenchConfig(
        theta_true=0.1, t_set=0.3, photon_budget=10**6, n_trials=24, seed=2
    )
    rec = run_trials(cfg)
    se_mean = math.sqrt(rec.variance / cfg.n_trials)
    assert abs(rec.mean_estimate - 0.1) < 4 * se_mean
    assert rec.flags == ""
    assert rec.qfi_theory == pytest.approx(qfi_ppa_theory(0.1, 0.3))


def test_run_trials_detects_calibration_bias():
    theta, t, dt = 0.1, 0.1, 0.01
    cfg = BenchConfig(
        theta_true=theta,
        t_set=t,
        delta_t=dt,
        photon_budget=10**6,
        n_trials=32,
        seed=9,
    )
    rec = run_trials(cfg)
    shift = systematic_shift_t(theta, t, dt) - theta
    bias = rec.mean_estimate - theta
    se_mean = math.sqrt(rec.variance / cfg.n_trials)
    # the bias is resolved (many sigma from zero) and matches the model
    assert bias > 5 * se_mean
    assert abs(bias - shift) < 4 * se_mean


def test_run_trials_flags_empty_budget():
    cfg = BenchConfig(theta_true=0.1, t_set=0.3, photon_budget=0, n_trials=3, seed=0)
    rec = run_trials(cfg)
    assert "no-data" in rec.flags
    assert math.isnan(rec.mean_estimate)


def test_run_trials_precision_near_qfi_bound():
    # tight-filter working point: per-photon precision should approach the
    # theory value within a few standard errors (it cannot beat it)
    cfg = BenchConfig(
        theta_true=0.040, t_set=0.044, photon_budget=10**7, n_trials=32, seed=11
    )
    rec = run_trials(cfg)
    target = qfi_ppa_theory(0.040, 0.044)
    rel_se = rec.stderr_variance / rec.variance
    se_prec = rec.precision_per_photon * rel_se
    assert abs(rec.precision_per_photon - target) < 3 * se_prec


def test_sweep_record_csv_row_formatting():
    rec = SweepRecord(
        theta_true=0.1,
        t_mag=0.3,
        mean_estimate=0.1001,
        variance=1e-8,
        mse=1.1e-8,
        mean_detected=1234.5,
        precision_per_photon=3.3,
        accuracy_per_photon=3.1,
        qfi_theory=3.5,
        stderr_variance=2e-9,
        flags="clamped=1",
    )
    row = rec.to_csv_row()
    fields = row.split(",")
    assert fields[0] == "0.1"
    assert fields[-1] == "clamped=1"
    assert len(fields) == 11
    for text in fields[:-1]:
        float(text)


def test_fmt_sig_round_trip():
    for x in (0.1, 1 / 3, 1e-17, 12345.6789, 0.0):
        assert float(fmt_sig(x)) == pytest.approx(x, rel=1e-11, abs=1e-300)


# ------------------------------------------------------------- configuration


def test_config_json_round_trip():
    cfg = BenchConfig(
        theta_true=0.1,
        t_set=0.3,
        delta_t=0.001,
        epsilon=0.01,
        visibility=0.98,
        photon_budget=5000,
        sampling_mode="poisson",
        n_trials=8,
        seed=42,
    )
    assert BenchConfig.from_json_dict(cfg.to_json_dict()) == cfg


def test_config_complex_transmission_round_trip():
    cfg = BenchConfig(theta_true=0.1, t_set=0.3 * np.exp(0.5j))
    doc = cfg.to_json_dict()
    assert isinstance(doc["t_set"], list)
    restored = BenchConfig.from_json_dict(doc)
    assert restored.t_set == pytest.approx(cfg.t_set)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"t_set": 1.5},
        {"t_set": 0.9, "delta_t": 0.2},
        {"epsilon": 1.0},
        {"visibility": 0.0},
        {"photon_budget": -1},
        {"sampling_mode": "bursty"},
        {"n_trials": 0},
        {"seed": -1},
    ],
)
def test_config_rejects_invalid_fields(kwargs):
    base = dict(theta_true=0.1, t_set=0.5)
    base.update(kwargs)
    with pytest.raises(ValueError):
        BenchConfig(**base)


# --------------------------------------------------------- systematic models


def test_systematic_shift_no_error_is_identity():
    for theta in (0.02, 0.3, 1.4):
        assert systematic_shift_t(theta, 0.2, 0.0) == pytest.approx(theta, abs=1e-15)


def test_systematic_shift_frozen_value():
    assert systematic_shift_t(0.1, 0.1, 0.01) == pytest.approx(
        0.10998076567697557, abs=1e-15
    )


def test_systematic_shift_grows_with_amplification():
    # the displacement scales with dt/t: at fixed absolute dt a weaker
    # filter is hit harder
    shift_weak = systematic_shift_t(0.1, 0.05, 0.005) - 0.1
    shift_strong = systematic_shift_t(0.1, 0.5, 0.005) - 0.1
    assert shift_weak > shift_strong > 0


def test_systematic_shift_depends_only_on_relative_error():
    a = systematic_shift_t(0.1, 0.05, 0.005)
    b = systematic_shift_t(0.1, 0.5, 0.05)
    assert a == pytest.approx(b, abs=1e-15)


def test_misaligned_half_tangent_aligned_limit():
    for theta in (0.01, 0.2, 1.0):
        assert misaligned_half_tangent(0.0, theta) == pytest.approx(
            math.tan(theta / 2), abs=1e-15
        )


def test_misaligned_half_tangent_frozen_value():
    assert misaligned_half_tangent(0.01, 0.04) == pytest.approx(
        0.02829087250444975, abs=1e-15
    )


def test_misaligned_half_tangent_floor():
    # tilt imposes a floor even at zero plate retardation
    val = misaligned_half_tangent(0.01, 0.0)
    assert val == pytest.approx(abs(math.tan(2 * 0.01)), rel=1e-12)


def test_rng_stream_path_separation():
    a = rng_stream(7, 1, 0).integers(0, 2**32, 4)
    b = rng_stream(7, 2, 0).integers(0, 2**32, 4)
    c = rng_stream(7, 1, 0).integers(0, 2**32, 4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, c)
