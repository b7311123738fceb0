"""Monte Carlo model of a postselected polarimetry bench.

The simulated apparatus prepares a (possibly depolarized) vertical input,
imprints a phase theta - pi with a slightly misalignable waveplate generator,
applies the partially transmitting filter, and measures the survivors along a
projective direction.  Phase estimates invert the measured fringe in closed
form.

Systematic knobs:

* ``delta_t``: amplitude miscalibration, defined as assumed minus actual.
  The filter physically runs at ``|t_set|`` while the estimator (and the
  chosen measurement direction) use ``|t_set| + delta_t``.
* ``epsilon``: waveplate axis misalignment; the generator becomes
  cos(2 eps) sigma_x/2 + sin(2 eps) sigma_z/2.

Randomness is drawn from numpy streams keyed by (seed, trial index, stage),
so results are reproducible and independent of execution order or worker
count.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .states import (
    DensityMatrix,
    Generator,
    amplified_angle,
    make_filter,
    phase_unitary,
    postselect,
    ID2,
    SIGMA_X,
    SIGMA_Z,
)
from .fisher import MeasurementDirection, optimal_measurement, qfi_ppa_theory

__all__ = [
    "NoDataError",
    "STAGE_COUNTS",
    "BenchConfig",
    "TrialResult",
    "SweepRecord",
    "SWEEP_CSV_COLUMNS",
    "fmt_sig",
    "rng_stream",
    "source_state",
    "waveplate_generator",
    "run_bench_state",
    "sample_counts",
    "estimate_theta",
    "run_trials",
    "systematic_shift_t",
    "misaligned_half_tangent",
]

# Stage tags for RNG substreams; tomography stages live in tomography/cli.
STAGE_COUNTS = 0

SWEEP_CSV_COLUMNS = (
    "theta_true",
    "t_mag",
    "mean_estimate",
    "variance",
    "mse",
    "mean_detected",
    "precision_per_photon",
    "accuracy_per_photon",
    "qfi_theory",
    "stderr_variance",
    "flags",
)


class NoDataError(ValueError):
    """No photon survived postselection; nothing to estimate from."""


def fmt_sig(x: float) -> str:
    """Format a float with 12 significant digits (nan prints as 'nan')."""
    return format(float(x), ".12g")


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Deterministic substream keyed by (seed, *path).

    Streams for distinct keys are statistically independent, and the mapping
    does not depend on the order in which streams are created, so results
    are identical for any worker count.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed), *map(int, path))))


@dataclass(frozen=True)
class BenchConfig:
    """Full description of one bench run."""

    theta_true: float
    t_set: complex
    delta_t: float = 0.0
    epsilon: float = 0.0
    visibility: float = 1.0
    photon_budget: int = 10**6
    sampling_mode: str = "fixed"
    n_trials: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.theta_true):
            raise ValueError("theta_true must be finite")
        t = complex(self.t_set)
        if abs(t) > 1.0 + 1e-12:
            raise ValueError("|t_set| must not exceed 1")
        assumed = abs(t) + self.delta_t
        if not 0.0 <= assumed <= 1.0 + 1e-12:
            raise ValueError(
                f"assumed amplitude |t_set| + delta_t = {assumed:.6g} outside [0, 1]"
            )
        if abs(self.epsilon) >= math.pi / 4:
            raise ValueError("|epsilon| must be below pi/4")
        if not 0.0 < self.visibility <= 1.0:
            raise ValueError("visibility must lie in (0, 1]")
        if self.photon_budget < 0 or self.photon_budget != int(self.photon_budget):
            raise ValueError("photon_budget must be a non-negative integer")
        if self.sampling_mode not in ("fixed", "poisson"):
            raise ValueError("sampling_mode must be 'fixed' or 'poisson'")
        if self.n_trials < 1 or self.n_trials != int(self.n_trials):
            raise ValueError("n_trials must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def to_json_dict(self) -> dict:
        t = complex(self.t_set)
        return {
            "theta_true": self.theta_true,
            "t_set": t.real if t.imag == 0.0 else [t.real, t.imag],
            "delta_t": self.delta_t,
            "epsilon": self.epsilon,
            "visibility": self.visibility,
            "photon_budget": int(self.photon_budget),
            "sampling_mode": self.sampling_mode,
            "n_trials": int(self.n_trials),
            "seed": int(self.seed),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "BenchConfig":
        data = dict(data)
        t = data.get("t_set", 1.0)
        if isinstance(t, (list, tuple)):
            data["t_set"] = complex(t[0], t[1])
        return cls(**data)


@dataclass(frozen=True)
class TrialResult:
    """One trial: detected counts split over the two outcomes, and the estimate."""

    theta_estimate: float
    n_detected: int
    counts_plus: int
    counts_minus: int

    def __post_init__(self) -> None:
        if min(self.n_detected, self.counts_plus, self.counts_minus) < 0:
            raise ValueError("counts must be non-negative")
        if self.counts_plus + self.counts_minus != self.n_detected:
            raise ValueError("counts_plus + counts_minus must equal n_detected")


@dataclass(frozen=True)
class SweepRecord:
    """Aggregated statistics of `n_trials` bench runs at one grid point."""

    theta_true: float
    t_mag: float
    mean_estimate: float
    variance: float
    mse: float
    mean_detected: float
    precision_per_photon: float
    accuracy_per_photon: float
    qfi_theory: float
    stderr_variance: float
    flags: str = ""

    def to_csv_row(self) -> str:
        vals = [
            self.theta_true,
            self.t_mag,
            self.mean_estimate,
            self.variance,
            self.mse,
            self.mean_detected,
            self.precision_per_photon,
            self.accuracy_per_photon,
            self.qfi_theory,
            self.stderr_variance,
        ]
        return ",".join(fmt_sig(v) for v in vals) + f",{self.flags}"


def source_state(v: float) -> DensityMatrix:
    """Depolarized vertical input v |1><1| + (1 - v) 1/2, v in [0, 1]."""
    if not 0.0 <= v <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    mat = v * np.diag([0.0, 1.0]).astype(complex) + (1.0 - v) * ID2 / 2
    return DensityMatrix(mat)


def waveplate_generator(epsilon: float) -> Generator:
    """Phase generator of a waveplate misaligned by epsilon.

    cos(2 eps) sigma_x / 2 + sin(2 eps) sigma_z / 2; the eigenvalue spread
    stays exactly 1 for every epsilon, so misalignment tilts the rotation
    axis without rescaling the phase.
    """
    if abs(epsilon) >= math.pi / 4:
        raise ValueError("|epsilon| must be below pi/4")
    mat = math.cos(2 * epsilon) * SIGMA_X / 2 + math.sin(2 * epsilon) * SIGMA_Z / 2
    return Generator.from_matrix(mat)


def run_bench_state(cfg: BenchConfig) -> tuple[DensityMatrix, float]:
    """Noiseless state pipeline: source -> U(theta - pi) -> filter -> postselect.

    Returns the normalized postselected state and the survival probability.
    The filter runs at the physical amplitude t_set; ``delta_t`` only affects
    estimation (see the module docstring).
    """
    rho = source_state(cfg.visibility)
    gen = waveplate_generator(cfg.epsilon)
    u = phase_unitary(gen, cfg.theta_true - math.pi)
    rho = DensityMatrix(u @ rho.mat @ u.conj().T)
    kraus = make_filter(cfg.t_set)
    return postselect(rho, kraus.k_plus)


def sample_counts(
    rho_ps: DensityMatrix,
    p_ps: float,
    direction: MeasurementDirection,
    budget: int,
    mode: str,
    rng: np.random.Generator,
) -> TrialResult:
    """Draw one trial's detected counts.

    ``mode='fixed'`` sends exactly ``budget`` photons into the filter and
    detects Binomial(budget, p_ps) of them; ``'poisson'`` models a coherent
    source with Poisson(budget * p_ps) survivors.  Detected photons split
    binomially along the measurement direction.
    """
    if budget < 0:
        raise ValueError("photon budget must be non-negative")
    if not 0.0 <= p_ps <= 1.0 + 1e-12:
        raise ValueError("survival probability must lie in [0, 1]")
    if mode == "fixed":
        n_det = int(rng.binomial(int(budget), min(p_ps, 1.0))) if budget else 0
    elif mode == "poisson":
        n_det = int(rng.poisson(budget * p_ps))
    else:
        raise ValueError("mode must be 'fixed' or 'poisson'")
    q = float(np.trace(rho_ps.mat @ direction.projector()).real)
    q = min(max(q, 0.0), 1.0)
    plus = int(rng.binomial(n_det, q)) if n_det else 0
    return TrialResult(
        theta_estimate=math.nan,
        n_detected=n_det,
        counts_plus=plus,
        counts_minus=n_det - plus,
    )


def _fringe_params(direction: MeasurementDirection) -> tuple[float, float]:
    # q(Theta) = (1 + C sin Theta + D cos Theta)/2 for the real-amplitude
    # family measured along `direction`; written as (R, psi) of the fringe
    # q = (1 + R cos(Theta - psi))/2.
    c = -math.sin(direction.theta_opt) * math.cos(direction.phi_opt)
    d = math.cos(direction.theta_opt)
    return math.hypot(c, d), math.atan2(c, d)


def _invert_frequency(
    f: float,
    direction: MeasurementDirection,
    t_assumed: float,
    theta_prior: float,
) -> tuple[float, bool]:
    """Closed-form ML inversion of the fringe; returns (estimate, clamped)."""
    r, psi = _fringe_params(direction)
    if r < 1e-12:
        raise ValueError("measurement direction carries no fringe contrast")
    u = (2.0 * f - 1.0) / r
    clamped = abs(u) > 1.0
    u = min(max(u, -1.0), 1.0)
    b = math.acos(u)
    prior_big = amplified_angle(theta_prior, t_assumed)
    best = None
    for base in (psi + b, psi - b):
        for k in (-1, 0, 1):
            cand = base + 2.0 * math.pi * k
            if best is None or abs(cand - prior_big) < abs(best - prior_big):
                best = cand
    theta_e = 2.0 * math.atan(t_assumed * math.tan(best / 2.0))
    return theta_e, clamped


def estimate_theta(
    counts: TrialResult,
    t_assumed: float,
    direction: MeasurementDirection,
    theta_prior: float,
) -> float:
    """Invert one trial's fringe frequency into a phase estimate.

    The empirical frequency is clamped to half a count away from 0 and 1,
    and to the fringe's achievable range; the arccos branch nearest the
    amplified prior is taken and mapped back through the assumed amplitude.
    Raises :class:`NoDataError` when nothing was detected.
    """
    if counts.n_detected == 0:
        raise NoDataError("no detected photons in this trial")
    if not 0.0 < t_assumed <= 1.0 + 1e-12:
        raise ValueError("t_assumed must lie in (0, 1]")
    n = counts.n_detected
    f = counts.counts_plus / n
    f = min(max(f, 0.5 / n), 1.0 - 0.5 / n)
    theta_e, _ = _invert_frequency(f, direction, t_assumed, theta_prior)
    return theta_e


def _estimator_direction(
    direction: MeasurementDirection, phase: float
) -> MeasurementDirection:
    # The fringe model inside the estimator is written for a real filter
    # amplitude; a filter phase rotates the state's azimuth by -phase, which
    # is equivalent to shifting the measurement azimuth by +phase.
    if phase == 0.0:
        return direction
    az = math.remainder(direction.phi_opt + phase, 2.0 * math.pi)
    if az >= math.pi:
        az -= 2.0 * math.pi
    return MeasurementDirection(direction.theta_opt, az)


def run_trials(cfg: BenchConfig) -> SweepRecord:
    """Run the configured number of trials and aggregate the statistics.

    The measurement direction is the information-optimal one for the
    *assumed* amplitude |t_set| + delta_t at the true phase, mirroring a
    calibrated-but-miscalibrated experiment.  Trials are independent and
    keyed by (seed, trial index), so the record is reproducible.
    """
    if cfg.n_trials < 2:
        raise ValueError("need at least 2 trials for a variance")
    t = complex(cfg.t_set)
    t_assumed = abs(t) + cfg.delta_t
    if t_assumed <= 0.0:
        raise ValueError("assumed amplitude must be positive to estimate")
    phase = cmath.phase(t) if t != 0 else 0.0
    direction = optimal_measurement(cfg.theta_true, t_assumed * cmath.exp(1j * phase))
    model_direction = _estimator_direction(direction, phase)

    rho_ps, p_ps = run_bench_state(cfg)

    estimates: list[float] = []
    clamped = 0
    detected: list[int] = []
    for j in range(cfg.n_trials):
        rng = rng_stream(cfg.seed, j, STAGE_COUNTS)
        counts = sample_counts(
            rho_ps, p_ps, direction, cfg.photon_budget, cfg.sampling_mode, rng
        )
        detected.append(counts.n_detected)
        if counts.n_detected == 0:
            continue
        n = counts.n_detected
        f = counts.counts_plus / n
        f = min(max(f, 0.5 / n), 1.0 - 0.5 / n)
        theta_e, was_clamped = _invert_frequency(
            f, model_direction, t_assumed, cfg.theta_true
        )
        estimates.append(theta_e)
        clamped += was_clamped

    mean_detected = float(np.mean(detected))
    flags: list[str] = []
    if not estimates:
        flags.append("no-data")
        nan = math.nan
        mean_est = variance = mse = stderr = precision = accuracy = nan
    else:
        est = np.asarray(estimates)
        mean_est = float(est.mean())
        variance = float(est.var(ddof=1)) if len(est) > 1 else math.nan
        mse = float(np.mean((est - cfg.theta_true) ** 2))
        stderr = (
            variance * math.sqrt(2.0 / (len(est) - 1)) if len(est) > 1 else math.nan
        )
        precision = (
            1.0 / (variance * mean_detected)
            if variance > 0 and mean_detected > 0
            else math.nan
        )
        accuracy = (
            1.0 / (mse * mean_detected) if mse > 0 and mean_detected > 0 else math.nan
        )
        if len(est) < cfg.n_trials:
            flags.append(f"empty-trials={cfg.n_trials - len(est)}")
    if clamped:
        flags.append(f"clamped={clamped}")

    t_mag = abs(t)
    qfi = qfi_ppa_theory(cfg.theta_true, t_mag) if t_mag > 0 else math.nan
    return SweepRecord(
        theta_true=cfg.theta_true,
        t_mag=t_mag,
        mean_estimate=mean_est,
        variance=variance,
        mse=mse,
        mean_detected=mean_detected,
        precision_per_photon=precision,
        accuracy_per_photon=accuracy,
        qfi_theory=qfi,
        stderr_variance=stderr,
        flags=";".join(flags),
    )


def systematic_shift_t(theta: float, t: float, dt: float) -> float:
    """First-principles biased estimate under amplitude miscalibration.

    theta_e = 2 arctan( tan(theta/2) (1 + dt/t) ) with dt = assumed - actual;
    exact, not linearized.
    """
    if t <= 0:
        raise ValueError("actual amplitude t must be positive")
    return 2.0 * math.atan(math.tan(theta / 2.0) * (1.0 + dt / t))


def misaligned_half_tangent(epsilon: float, theta: float) -> float:
    """Half-angle tangent actually imprinted by a misaligned waveplate.

    sqrt( (sin^2(2 eps) + tan^2(theta/2)) / cos^2(2 eps) ); reduces to
    tan(theta/2) at eps = 0 and floors at |tan(2 eps)| as theta -> 0.
    """
    s = math.sin(2.0 * epsilon) ** 2
    c = math.cos(2.0 * epsilon) ** 2
    return math.sqrt((s + math.tan(theta / 2.0) ** 2) / c)
