"""Quantum and classical Fisher information for postselected phase estimation.

The symmetric logarithmic derivative (SLD) is obtained by vectorizing the
Sylvester equation (rho L + L rho)/2 = drho row-major and applying a
Moore-Penrose pseudoinverse, which handles rank-deficient (pure or filtered)
states; the identity vec(X Y Z) = (X kron Z^T) vec(Y) underpinning this is
itself unit-tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .states import (
    ID2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    Generator,
    KrausPair,
    ZeroProbabilityError,
    _as_complex_matrix,
    direction_projector,
    hermitian_part,
    make_filter,
    phase_unitary,
    ppa_generator,
)

__all__ = [
    "InconsistentDerivativeError",
    "DegenerateMeasurementError",
    "PurityError",
    "SLDResult",
    "MeasurementDirection",
    "PPAFamily",
    "survival_probability",
    "sld",
    "qfi_ppa_theory",
    "qfi_postselected_pure",
    "optimal_measurement",
    "cfi",
    "sld_closed_form",
]


class InconsistentDerivativeError(ValueError):
    """drho has weight outside the reachable range of the Sylvester map."""


class DegenerateMeasurementError(ValueError):
    """A projective outcome with probability 0 or 1 carries no phase signal."""


class PurityError(ValueError):
    """Raised when a pure-state formula receives a mixed state."""


@dataclass(frozen=True)
class SLDResult:
    """SLD operator, the QFI it certifies, and the on-support defect norm."""

    lam: np.ndarray
    qfi: float
    residual: float


@dataclass(frozen=True)
class MeasurementDirection:
    """Projective qubit measurement axis, (polar, azimuth) in the analysis frame."""

    theta_opt: float
    phi_opt: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta_opt <= math.pi:
            raise ValueError("theta_opt must lie in [0, pi]")
        if not -math.pi <= self.phi_opt < math.pi:
            raise ValueError("phi_opt must lie in [-pi, pi)")

    def projector(self) -> np.ndarray:
        return direction_projector(self.theta_opt, self.phi_opt)


def survival_probability(
    theta: float, t_mag: float, delta: float = 1.0, v: float = 1.0
) -> float:
    """Postselection probability |t|^2 cos^2(delta*theta/2) + sin^2(delta*theta/2).

    The optional visibility mixes in the filter's response to the maximally
    mixed state, (1 + |t|^2)/2.
    """
    c = math.cos(delta * theta / 2.0) ** 2
    p_pure = t_mag**2 * c + (1.0 - c)
    return v * p_pure + (1.0 - v) * (1.0 + t_mag**2) / 2.0


def sld(rho: DensityMatrix, drho, rcond: float = 1e-12) -> SLDResult:
    """Solve (rho L + L rho)/2 = drho for the SLD L and report QFI = Tr(drho L).

    ``drho`` must be Hermitian with |trace| <= 1e-9.  On rank-deficient
    states the pseudoinverse returns the minimum-norm solution; any component
    of ``drho`` in the kernel-kernel block (unreachable by the Sylvester map)
    beyond 1e-6 raises :class:`InconsistentDerivativeError`.  ``residual``
    is the Frobenius norm of the defect projected onto the support of rho.
    """
    m = rho.mat
    d = rho.dim
    dm = _as_complex_matrix(drho, "drho")
    if dm.shape != m.shape:
        raise ValueError("drho dimension does not match rho")
    if np.abs(dm - dm.conj().T).max() > 1e-8:
        raise ValueError("drho must be Hermitian")
    if abs(np.trace(dm)) > 1e-9:
        raise ValueError("drho must be traceless (trace-preserving family)")

    eye = np.eye(d)
    sylv = (np.kron(m, eye) + np.kron(eye, m.T)) / 2.0
    lam = np.linalg.pinv(sylv, rcond=rcond, hermitian=True) @ dm.reshape(-1)
    lam = hermitian_part(lam.reshape(d, d))

    defect = (m @ lam + lam @ m) / 2.0 - dm
    w, vecs = np.linalg.eigh(hermitian_part(m))
    cutoff = 1e-12 * max(w.max(), 1e-300)
    on = vecs[:, w > cutoff]
    off = vecs[:, w <= cutoff]
    if off.shape[1]:
        kernel_block = off.conj().T @ dm @ off
        if np.linalg.norm(kernel_block) > 1e-6:
            raise InconsistentDerivativeError(
                "drho has weight {:.3e} outside the support of rho".format(
                    float(np.linalg.norm(kernel_block))
                )
            )
    support_defect = on.conj().T @ defect @ on
    residual = float(np.linalg.norm(support_defect))
    qfi = float(np.trace(dm @ lam).real)
    return SLDResult(lam=lam, qfi=max(qfi, 0.0), residual=residual)


@dataclass(frozen=True)
class PPAFamily:
    """theta-indexed family of postselected states for filter amplitude t.

    The input is v|0><0| + (1-v) 1/2 in the frame where the imprinted states
    are cos(theta/2)|0> + i sin(theta/2)|1>; the bench's vertical-input,
    theta - pi pipeline produces exactly the same family.  ``state`` returns
    the normalized postselected state, ``derivative`` its exact analytic
    theta-derivative (quotient rule through the normalization).
    """

    t: complex
    v: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < abs(complex(self.t)) <= 1.0 + 1e-12:
            raise ValueError("PPAFamily requires 0 < |t| <= 1")
        if not 0.0 < self.v <= 1.0:
            raise ValueError("visibility must lie in (0, 1]")
        object.__setattr__(
            self, "_kraus", make_filter(self.t)
        )
        object.__setattr__(self, "_gen", ppa_generator())
        rho0 = self.v * np.diag([1.0, 0.0]).astype(complex) + (1.0 - self.v) * ID2 / 2
        object.__setattr__(self, "_rho0", rho0)

    def _unfiltered(self, theta: float) -> np.ndarray:
        u = phase_unitary(self._gen, theta)
        return u @ self._rho0 @ u.conj().T

    def unfiltered_state(self, theta: float) -> DensityMatrix:
        """The imprinted state before the filter acts."""
        return DensityMatrix(self._unfiltered(theta))

    def prob(self, theta: float) -> float:
        k = self._kraus.k_plus
        return float(np.trace(k @ self._unfiltered(theta) @ k.conj().T).real)

    def state(self, theta: float) -> DensityMatrix:
        k = self._kraus.k_plus
        num = k @ self._unfiltered(theta) @ k.conj().T
        return DensityMatrix(num / np.trace(num).real)

    def derivative(self, theta: float) -> np.ndarray:
        k = self._kraus.k_plus
        rho = self._unfiltered(theta)
        a = self._gen.mat
        drho = 1j * (a @ rho - rho @ a)
        num = k @ rho @ k.conj().T
        dnum = k @ drho @ k.conj().T
        p = np.trace(num).real
        dp = np.trace(dnum).real
        return hermitian_part(dnum / p - num * (dp / p**2))

    def __call__(self, theta: float) -> DensityMatrix:
        return self.state(theta)


def qfi_ppa_theory(theta: float, t_mag: float, delta: float = 1.0) -> float:
    """Ideal postselected QFI (delta |t| / p_ps)^2 for the pure family."""
    if not 0.0 < t_mag <= 1.0 + 1e-12:
        raise ValueError("qfi_ppa_theory requires 0 < t_mag <= 1")
    p = survival_probability(theta, t_mag, delta)
    if p <= 0.0:
        raise ValueError("survival probability vanished")
    return (delta * t_mag / p) ** 2


def qfi_postselected_pure(rho_theta: DensityMatrix, a, k_plus) -> float:
    """Postselected QFI 4/p Tr(A rho A M) - 4/p^2 |Tr(A rho M)|^2, M = K+^dag K+.

    ``rho_theta`` is the imprinted state *before* the filter acts (the
    normalization by p = Tr(rho M) happens inside the formula), and must be
    pure to 1e-8.  Reduces to 4 Var(A) when K+ = 1, and gives exactly zero
    when the filter fully blocks the informative component (t = 0).
    """
    if abs(rho_theta.purity() - 1.0) > 1e-8:
        raise PurityError(
            f"state purity {rho_theta.purity():.10f}; formula requires a pure state"
        )
    amat = a.mat if isinstance(a, Generator) else _as_complex_matrix(a, "generator")
    k = k_plus.k_plus if isinstance(k_plus, KrausPair) else _as_complex_matrix(k_plus)
    m = k.conj().T @ k
    rho = rho_theta.mat
    p = float(np.trace(rho @ m).real)
    if p <= 1e-15:
        raise ZeroProbabilityError("postselection probability vanished")
    term1 = np.trace(amat @ rho @ amat @ m).real
    term2 = abs(np.trace(amat @ rho @ m)) ** 2
    qfi = 4.0 * term1 / p - 4.0 * term2 / p**2
    return float(max(qfi, 0.0))


def optimal_measurement(theta_prior: float, t: complex) -> MeasurementDirection:
    """QFI-achieving projective direction for the postselected qubit family.

    Polar angle from cot(theta_opt) = (1 + |t|^2)/(2|t|) * tan(theta_prior),
    azimuth arg(t); both independent of visibility.  t = 0 has no amplified
    family and raises.
    """
    t = complex(t)
    mag = abs(t)
    if not 0.0 < mag <= 1.0 + 1e-12:
        raise ValueError("optimal_measurement requires 0 < |t| <= 1")
    cot = (1.0 + mag**2) / (2.0 * mag) * math.tan(theta_prior)
    polar = math.pi / 2.0 - math.atan(cot)
    azimuth = math.atan2(t.imag, t.real)
    if azimuth >= math.pi:  # fold the branch point into [-pi, pi)
        azimuth = -math.pi
    return MeasurementDirection(theta_opt=polar, phi_opt=azimuth)


def cfi(
    direction: MeasurementDirection,
    family,
    theta: float,
    dtheta: float = 1e-5,
) -> float:
    """Classical Fisher information q'^2 / (q (1 - q)) of a projective qubit test.

    ``family`` maps theta to a DensityMatrix; if it exposes an analytic
    ``derivative`` (e.g. :class:`PPAFamily`) that is used for q', otherwise a
    central difference with step ``dtheta``.  Outcomes with q in {0, 1}
    (within 1e-12) raise :class:`DegenerateMeasurementError`.
    """
    proj = direction.projector()
    q = float(np.trace(family(theta).mat @ proj).real)
    if q < 1e-12 or q > 1.0 - 1e-12:
        raise DegenerateMeasurementError(
            f"outcome probability {q:.3e} carries no information"
        )
    if hasattr(family, "derivative"):
        dq = float(np.trace(family.derivative(theta) @ proj).real)
    else:
        qp = float(np.trace(family(theta + dtheta).mat @ proj).real)
        qm = float(np.trace(family(theta - dtheta).mat @ proj).real)
        dq = (qp - qm) / (2.0 * dtheta)
    return dq**2 / (q * (1.0 - q))


def sld_closed_form(theta: float, t: complex, v: float) -> np.ndarray:
    """Closed-form SLD of the visibility-v postselected family.

    -(v / p_ps) * [ (1-|t|^2)/2 sin(theta) 1
                    + cos(theta) (Re t sig_x^a + Im t sig_y^a)
                    + (1+|t|^2)/2 sin(theta) sig_z ]

    with the analysis-frame Paulis sig_x^a = -sigma_y, sig_y^a = +sigma_x
    and p_ps the visibility-v survival probability.  For v < 1 this equals
    :func:`sld` of the family exactly; at v = 1 it remains a valid SLD but
    differs from the minimum-norm solution by a kernel shift.
    """
    t = complex(t)
    mag = abs(t)
    if not 0.0 < mag <= 1.0 + 1e-12:
        raise ValueError("sld_closed_form requires 0 < |t| <= 1")
    if not 0.0 < v <= 1.0:
        raise ValueError("visibility must lie in (0, 1]")
    p = survival_probability(theta, mag, 1.0, v)
    sig_x_a = -SIGMA_Y
    sig_y_a = SIGMA_X
    bracket = (
        (1.0 - mag**2) / 2.0 * math.sin(theta) * ID2
        + math.cos(theta) * (t.real * sig_x_a + t.imag * sig_y_a)
        + (1.0 + mag**2) / 2.0 * math.sin(theta) * SIGMA_Z
    )
    return -(v / p) * bracket
