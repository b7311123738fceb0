import math

import numpy as np
import pytest

from ppasim.fisher import PPAFamily, qfi_ppa_theory, sld
from ppasim.quasiprob import kd_table_closed_form
from ppasim.states import (
    DensityMatrix,
    ZeroProbabilityError,
    amplified_angle,
    bloch_vector,
    density_from_bloch,
    pure_state,
)
from ppasim.tomography import (
    DEFAULT_DTHETA,
    UndefinedAngleError,
    amplified_angle_from_state,
    empirical_qfi,
    kd_from_tomography,
    rho_derivative,
    simulate_tomography,
)


def fidelity(rho, sigma):
    """Pure-vs-mixed shortcut is not enough here; use the full formula."""
    w, v = np.linalg.eigh(rho.mat)
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    inner = sq @ sigma.mat @ sq
    wi = np.linalg.eigvalsh(inner)
    return float(np.sqrt(np.clip(wi, 0, None)).sum() ** 2)


# ------------------------------------------------------------- reconstruction


def test_analytic_limit_reproduces_state_exactly():
    for theta in (0.05, 0.4, 1.2):
        rho = PPAFamily(t=0.5, v=0.95).state(theta)
        res = simulate_tomography(rho, None)
        assert np.abs(res.rho_est.mat - rho.mat).max() < 1e-12
        assert res.counts_per_basis == (0, 0, 0)
        r = bloch_vector(rho)
        assert np.allclose(res.expectations, r, atol=1e-12)


def test_finite_shots_converge_to_truth():
    rho = PPAFamily(t=0.5, v=0.95).state(0.4)
    failures = 0
    for seed in range(30):
        rng = np.random.default_rng(1000 + seed)
        res = simulate_tomography(rho, 10**5, rng)
        if fidelity(res.rho_est, rho) < 0.999:
            failures += 1
    assert failures <= 2


def test_expectations_are_unbiased():
    rho = PPAFamily(t=0.5, v=0.9).state(0.7)
    truth = bloch_vector(rho)
    rng = np.random.default_rng(7)
    samples = np.array(
        [simulate_tomography(rho, 2000, rng).expectations for _ in range(400)]
    )
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(len(samples))
    assert np.all(np.abs(mean - truth) < 4 * se + 1e-12)


def test_reconstruction_is_always_physical():
    # near-pure truth: raw linear inversion often leaves the Bloch ball,
    # the clipped estimate must not
    rho = PPAFamily(t=0.5).state(0.4)
    rng = np.random.default_rng(3)
    for _ in range(50):
        res = simulate_tomography(rho, 200, rng)
        assert np.linalg.eigvalsh(res.rho_est.mat).min() >= -1e-12
        assert np.trace(res.rho_est.mat).real == pytest.approx(1.0, abs=1e-12)


def test_finite_shots_require_rng():
    rho = PPAFamily(t=0.5).state(0.4)
    with pytest.raises(ValueError):
        simulate_tomography(rho, 100)
    with pytest.raises(ValueError):
        simulate_tomography(rho, 0, np.random.default_rng(0))


# ------------------------------------------------------------ angle read-out


def test_amplified_angle_from_state_matches_theory():
    for theta in (0.05, 0.3, 1.0):
        for t in (0.1, 0.5, 0.9):
            rho = PPAFamily(t=t).state(theta)
            assert amplified_angle_from_state(rho) == pytest.approx(
                amplified_angle(theta, t), abs=1e-12
            )


def test_amplified_angle_from_state_frozen():
    rho = PPAFamily(t=0.044).state(0.040)
    assert amplified_angle_from_state(rho) == pytest.approx(
        0.8533554566561224, abs=1e-12
    )


def test_amplified_angle_from_state_balanced_point():
    # tan(theta/2) = t puts the postselected state on the equator
    rho = PPAFamily(t=math.tan(0.2)).state(0.4)
    assert amplified_angle_from_state(rho) == pytest.approx(math.pi / 2, abs=1e-12)


def test_amplified_angle_from_state_is_length_invariant():
    # the read-out is a direction: shrinking the Bloch vector uniformly
    # (pure dephasing/depolarization after postselection) leaves it fixed
    rho = PPAFamily(t=0.3).state(0.2)
    r = bloch_vector(rho)
    shrunk = density_from_bloch(0.55 * np.asarray(r))
    assert amplified_angle_from_state(shrunk) == pytest.approx(
        amplified_angle_from_state(rho), abs=1e-12
    )


def test_amplified_angle_from_state_mixing_biases_toward_equator():
    # the depolarized component is itself reshaped by the filter, so the
    # family's v < 1 states sit at a *different* polar angle than the pure
    # ones -- pin the direction of that motion
    a = amplified_angle_from_state(PPAFamily(t=0.3).state(0.2))
    b = amplified_angle_from_state(PPAFamily(t=0.3, v=0.9).state(0.2))
    assert b > a


def test_amplified_angle_undefined_at_center():
    with pytest.raises(UndefinedAngleError):
        amplified_angle_from_state(DensityMatrix(np.eye(2) / 2))


# ----------------------------------------------------------------- derivative


def test_rho_derivative_zero_for_constant_input():
    rho = PPAFamily(t=0.5).state(0.4)
    d = rho_derivative(rho, rho, rho, DEFAULT_DTHETA)
    assert np.abs(d).max() < 1e-15


def test_rho_derivative_is_hermitian_traceless():
    fam = PPAFamily(t=0.5)
    dt = DEFAULT_DTHETA
    d = rho_derivative(fam.state(0.4 - dt), fam.state(0.4), fam.state(0.4 + dt), dt)
    assert np.abs(d - d.conj().T).max() < 1e-14
    assert abs(np.trace(d)) < 1e-14


def test_rho_derivative_matches_analytic_slope():
    theta, t = 0.2, 0.5
    fam = PPAFamily(t=t)
    dt = DEFAULT_DTHETA
    fd = rho_derivative(fam.state(theta - dt), fam.state(theta), fam.state(theta + dt), dt)
    exact = fam.derivative(theta)
    assert np.abs(fd - exact).max() < 1e-3


def test_rho_derivative_rejects_mixed_dimensions():
    q2 = DensityMatrix(np.eye(2) / 2)
    q3 = DensityMatrix(np.eye(3) / 3)
    with pytest.raises(ValueError):
        rho_derivative(q2, q2, q3, 0.01)
    with pytest.raises(ValueError):
        rho_derivative(q2, q2, q2, 0.0)


# ---------------------------------------------------------------- information


def test_empirical_qfi_exact_inputs():
    fam = PPAFamily(t=0.5)
    val = empirical_qfi(fam.state(0.2), fam.derivative(0.2))
    assert val == pytest.approx(3.7711148807566075, abs=1e-9)


def test_empirical_qfi_open_filter_is_unit():
    fam = PPAFamily(t=1.0)
    val = empirical_qfi(fam.state(0.7), fam.derivative(0.7))
    assert val == pytest.approx(1.0, abs=1e-10)


def test_empirical_qfi_discretization_error_budget():
    # noiseless three-point tomography: the only error is the symmetric
    # finite difference; it stays under 7e-3 relative on the working grid
    # and under 1e-3 once the fringe flattens out at large theta
    dt = DEFAULT_DTHETA
    for theta in (0.1, 0.2, 0.5, 1.0, 1.5):
        for t in (0.3, 0.5, 1.0):
            fam = PPAFamily(t=t, v=0.98)
            states = [
                simulate_tomography(fam.state(theta + k * dt), None).rho_est
                for k in (-1, 0, 1)
            ]
            d = rho_derivative(states[0], states[1], states[2], dt)
            est = empirical_qfi(states[1], d)
            truth = sld(fam.state(theta), fam.derivative(theta)).qfi
            rel = abs(est - truth) / truth
            assert rel < 7e-3
            if theta >= 1.0:
                assert rel < 3e-3


# ------------------------------------------------------- conditional read-out


def test_kd_from_tomography_matches_closed_form():
    for theta in (0.05, 0.2, 0.8):
        for t in (0.1, 0.5, 0.9):
            rho = PPAFamily(t=t).unfiltered_state(theta)
            table = kd_from_tomography(rho, t)
            assert np.abs(table - kd_table_closed_form(theta, t)).max() < 1e-12


def test_kd_from_tomography_open_filter():
    rho = PPAFamily(t=1.0).unfiltered_state(0.3)
    table = kd_from_tomography(rho, 1.0)
    assert np.abs(table - np.diag([0.5, 0.5])).max() < 1e-12


def test_kd_from_tomography_rejects_dead_slice():
    with pytest.raises(ZeroProbabilityError):
        kd_from_tomography(pure_state([1, 0]), 0.0)


def test_kd_from_tomography_accepts_reconstructed_input():
    # noisy but full pipeline: estimate from counts, condition, compare to
    # the closed form within a loose statistical band
    theta, t = 0.2, 0.5
    rho = PPAFamily(t=t, v=0.98).unfiltered_state(theta)
    rng = np.random.default_rng(21)
    res = simulate_tomography(rho, 10**6, rng)
    table = kd_from_tomography(res.rho_est, t)
    truth = kd_from_tomography(rho, t)
    assert np.abs(table - truth).max() < 5e-3


# ----------------------------------------------------------- noisy end-to-end


def test_noisy_qfi_pipeline_is_consistent():
    # full figure pipeline at one grid point: three tomography runs,
    # finite difference, spectral clipping -- repeated estimates must
    # scatter around the same-visibility family truth
    theta, t, v = 0.2, 0.5, 0.98
    fam = PPAFamily(t=t, v=v)
    truth = sld(fam.state(theta), fam.derivative(theta)).qfi
    dt = DEFAULT_DTHETA
    rng = np.random.default_rng(99)
    vals = []
    for _ in range(12):
        states = [
            simulate_tomography(fam.state(theta + k * dt), 10**5, rng).rho_est
            for k in (-1, 0, 1)
        ]
        d = rho_derivative(states[0], states[1], states[2], dt)
        vals.append(empirical_qfi(states[1], d))
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - truth) < 4 * se + 5e-3 * truth
    assert qfi_ppa_theory(theta, t) == pytest.approx(3.7711148807566075, abs=1e-12)


def test_density_from_bloch_round_trip_guard():
    # helper used throughout the suite; pin the orientation convention here
    rho = density_from_bloch([0.0, 0.0, -1.0])
    assert np.allclose(rho.mat, np.diag([0.0, 1.0]))
