"""Qubit state tomography and the empirical information pipeline built on it.

Tomography samples the three Pauli expectations with a finite shot budget,
linearly inverts them (unbiased in the expectations), and projects the result
back to the physical set by clipping negative eigenvalues and renormalizing.
Downstream helpers turn tomographic estimates into amplification angles,
numerical theta-derivatives, Fisher information, and conditional
quasiprobability tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .states import (
    DensityMatrix,
    PAULIS,
    ZeroProbabilityError,
    bloch_vector,
    hermitian_part,
)
from .fisher import sld
from .quasiprob import condition, kd_distribution, ppa_povm_sequence

__all__ = [
    "UndefinedAngleError",
    "TomographyResult",
    "simulate_tomography",
    "amplified_angle_from_state",
    "rho_derivative",
    "empirical_qfi",
    "kd_from_tomography",
]

DEFAULT_DTHETA = 0.035


class UndefinedAngleError(ValueError):
    """The Bloch vector is too short to define a polar angle."""


@dataclass(frozen=True)
class TomographyResult:
    """Estimated state, sampled Pauli expectations, and plus-counts per basis."""

    rho_est: DensityMatrix
    expectations: tuple[float, float, float]
    counts_per_basis: tuple[int, int, int]


def simulate_tomography(
    rho_true: DensityMatrix,
    shots_per_basis: int | None,
    rng: np.random.Generator | None = None,
) -> TomographyResult:
    """Sample Pauli-basis measurements of a qubit and reconstruct the state.

    Each basis uses its own ``shots_per_basis`` binomial draw; pass ``None``
    for the infinite-shot limit (exact expectations, zero counts).  The
    reconstruction clips negative eigenvalues of the linear inversion and
    renormalizes, so ``rho_est`` is always a valid state while
    ``expectations`` keep the raw, unbiased sampled values.
    """
    if rho_true.dim != 2:
        raise ValueError("tomography is implemented for qubits")
    r = bloch_vector(rho_true)
    if shots_per_basis is None:
        expectations = tuple(float(x) for x in r)
        counts = (0, 0, 0)
    else:
        shots = int(shots_per_basis)
        if shots < 1:
            raise ValueError("shots_per_basis must be >= 1 (or None for analytic)")
        if rng is None:
            raise ValueError("finite-shot tomography needs an RNG stream")
        ups = [int(rng.binomial(shots, (1.0 + x) / 2.0)) for x in r]
        expectations = tuple(2.0 * u / shots - 1.0 for u in ups)
        counts = tuple(ups)
    raw = (
        np.eye(2, dtype=complex)
        + sum(e * s for e, s in zip(expectations, PAULIS))
    ) / 2.0
    w, v = np.linalg.eigh(hermitian_part(raw))
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    rho_est = DensityMatrix((v * w) @ v.conj().T)
    return TomographyResult(
        rho_est=rho_est, expectations=expectations, counts_per_basis=counts
    )


def amplified_angle_from_state(rho_ps: DensityMatrix) -> float:
    """Polar Bloch angle of a postselected state, measured from +z.

    For the amplification family this equals the amplified angle Theta
    regardless of visibility, since depolarization shortens the Bloch vector
    without tilting it.  Raises :class:`UndefinedAngleError` when the Bloch
    vector length is <= 1e-9.
    """
    r = bloch_vector(rho_ps)
    plane = math.hypot(r[0], r[1])
    length = math.hypot(plane, r[2])
    if length <= 1e-9:
        raise UndefinedAngleError("Bloch vector too short to define an angle")
    return math.atan2(plane, r[2])


def rho_derivative(
    rho_minus: DensityMatrix,
    rho_0: DensityMatrix,
    rho_plus: DensityMatrix,
    dtheta: float = DEFAULT_DTHETA,
) -> np.ndarray:
    """Central-difference derivative (rho_plus - rho_minus) / (2 dtheta).

    ``rho_0`` is accepted for symmetry with the three-point measurement
    protocol; the symmetric slope does not use it.  The result is Hermitian
    and exactly traceless, with O(dtheta^2) discretization error.
    """
    if dtheta <= 0:
        raise ValueError("dtheta must be positive")
    if rho_minus.dim != rho_plus.dim or rho_minus.dim != rho_0.dim:
        raise ValueError("the three states must share a dimension")
    return hermitian_part((rho_plus.mat - rho_minus.mat) / (2.0 * dtheta))


def empirical_qfi(rho_est: DensityMatrix, drho_est) -> float:
    """QFI of a tomographically estimated family via the SLD solve."""
    return sld(rho_est, drho_est).qfi


def kd_from_tomography(rho_unpostselected_est: DensityMatrix, t: complex) -> np.ndarray:
    """Conditional quasiprobability table from an estimate of the unfiltered state.

    Builds the (A-basis, filter(t), A-basis) quasidistribution of the
    estimated state, conditions on the filter passing, and returns the 2x2
    complex table over (a, a').  Requires the estimated survival probability
    to exceed 1e-12.
    """
    seq = ppa_povm_sequence(t)
    kd = kd_distribution(rho_unpostselected_est, seq)
    p_pass = kd.values.sum(axis=(0, 2))[0]
    if p_pass.real < 1e-12:
        raise ZeroProbabilityError(
            f"estimated survival probability {p_pass.real:.3e} too small"
        )
    cond = condition(kd, 1, "+")
    return np.array(cond.values, copy=True)
