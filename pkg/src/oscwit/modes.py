"""Normal-mode decomposition of two coupled oscillators.

Hamiltonian convention:

    H = p1^2/(2 m1) + p2^2/(2 m2)
        + m1 w1^2 x1^2 / 2 + m2 w2^2 x2^2 / 2 + g x1 x2 / 2

With mu = sqrt(m1 m2) and mixing angle
theta = arctan2(g, mu (w1^2 - w2^2)) / 2, the coordinates

    x+ = (m1/m2)^{1/4} cos(theta) x1 + (m2/m1)^{1/4} sin(theta) x2
    x- = (m2/m1)^{1/4} cos(theta) x2 - (m1/m2)^{1/4} sin(theta) x1

decouple H into two oscillators of mass mu and frequencies
w_pm^2 = (w1^2 + w2^2)/2 +- sqrt(((w1^2 - w2^2)/2)^2 + g^2/(4 mu^2)),
the + sign belonging to x+.  The momentum rows carry the reciprocal mass
weights so the map is symplectic; uniform precession of (x_s, p_s) needs
the canonical pairing.

Note the sign of the cross term: with coupling -g x1 x2 / 2 the angle and
frequency assignment above would fail to diagonalize H; the three formulas
are mutually consistent only for +g x1 x2 / 2, which is the convention
used everywhere in this package (g may be negative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAngle, SameBasis, Unstable
from .fock import NORMAL, PHYSICAL, FockOperator, TwoModeState, annihilation_matrix

#: below this scale (relative to mu * max(w1,w2)^2) both arctan2 arguments
#: count as zero and the angle is caller-supplied
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class NormalModeSpec:
    """Physical parameters plus derived normal-mode data."""

    m1: float
    m2: float
    omega1: float
    omega2: float
    g: float
    theta: float
    omega_plus: float
    omega_minus: float
    mu: float

    @property
    def theta_folded(self) -> float:
        return fold_theta(self.theta)

    def period(self, sigma: str = "+") -> float:
        w = self.omega_plus if sigma == "+" else self.omega_minus
        return 2.0 * math.pi / w

    def omega(self, sigma: str = "+") -> float:
        return self.omega_plus if sigma == "+" else self.omega_minus


def fold_theta(theta: float) -> float:
    """Map any mixing angle into [0, pi/4].

    theta -> -theta is a sign flip of x2 and theta -> pi/2 - theta a
    relabelling of the two oscillators; both are local operations on the
    physical split, so every entanglement quantity agrees at the folded
    angle.
    """
    t = math.fmod(theta, math.pi)
    if t < 0:
        t += math.pi
    if t > math.pi / 2:
        t = math.pi - t
    if t > math.pi / 4:
        t = math.pi / 2 - t
    return t


def normal_mode_params(
    m1: float,
    m2: float,
    omega1: float,
    omega2: float,
    g: float,
    theta: float | None = None,
) -> NormalModeSpec:
    """Derive (theta, omega_pm, mu) from the physical parameters.

    ``theta`` may only be supplied in the degenerate case g = 0,
    omega1 = omega2, where any angle is a valid normal-mode choice.
    """
    if min(m1, m2) <= 0 or min(omega1, omega2) <= 0:
        raise ValueError("masses and frequencies must be positive")
    mu = math.sqrt(m1 * m2)
    y = g
    x = mu * (omega1 ** 2 - omega2 ** 2)
    scale = mu * max(omega1, omega2) ** 2
    degenerate = abs(y) <= DEGENERATE_TOL * scale and abs(x) <= DEGENERATE_TOL * scale
    if degenerate:
        if theta is None:
            raise DegenerateAngle(
                "g = 0 and omega1 = omega2: every angle is a normal-mode "
                "choice, pass theta explicitly"
            )
        angle = float(theta)
    else:
        if theta is not None:
            raise ValueError("theta may only be supplied in the degenerate case")
        angle = math.atan2(y, x) / 2.0
    avg = (omega1 ** 2 + omega2 ** 2) / 2.0
    shift = math.hypot((omega1 ** 2 - omega2 ** 2) / 2.0, g / (2.0 * mu))
    wp2 = avg + shift
    wm2 = avg - shift
    if wm2 <= 0:
        raise Unstable(f"omega_minus^2 = {wm2:.3e} <= 0: coupling beyond stability")
    return NormalModeSpec(
        m1=m1, m2=m2, omega1=omega1, omega2=omega2, g=g,
        theta=angle, omega_plus=math.sqrt(wp2), omega_minus=math.sqrt(wm2), mu=mu,
    )


def stiffness_matrix(spec: NormalModeSpec) -> np.ndarray:
    """Mass-weighted potential matrix in coordinates xi_j = sqrt(m_j) x_j."""
    return np.array(
        [
            [spec.omega1 ** 2, spec.g / (2.0 * spec.mu)],
            [spec.g / (2.0 * spec.mu), spec.omega2 ** 2],
        ]
    )


def normal_coordinates(x1, p1, x2, p2, spec: NormalModeSpec):
    """Map phase-space points to normal coordinates (x+, p+, x-, p-).

    Accepts scalars or arrays; the momentum rows use reciprocal mass
    weights so the transformation is symplectic.
    """
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    r = (spec.m1 / spec.m2) ** 0.25
    xp = r * c * np.asarray(x1) + (1.0 / r) * s * np.asarray(x2)
    xm = (1.0 / r) * c * np.asarray(x2) - r * s * np.asarray(x1)
    pp = (1.0 / r) * c * np.asarray(p1) + r * s * np.asarray(p2)
    pm = r * c * np.asarray(p2) - (1.0 / r) * s * np.asarray(p1)
    return xp, pp, xm, pm


def physical_coordinates(xp, pp, xm, pm, spec: NormalModeSpec):
    """Inverse of normal_coordinates."""
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    r = (spec.m1 / spec.m2) ** 0.25
    x1 = (1.0 / r) * (c * np.asarray(xp) - s * np.asarray(xm))
    x2 = r * (s * np.asarray(xp) + c * np.asarray(xm))
    p1 = r * (c * np.asarray(pp) - s * np.asarray(pm))
    p2 = (1.0 / r) * (s * np.asarray(pp) + c * np.asarray(pm))
    return x1, p1, x2, p2


def mode_rotation_unitary(theta: float, n_max: int) -> FockOperator:
    """Two-mode unitary U with U^dag a1 U = cos(t) a1 + sin(t) a2 etc.

    U = exp(theta (a1^dag a2 - a2^dag a1)) conserves total excitation
    number, so it is exact on every complete total-number block of the
    truncated space.  Normal-mode Fock states map to physical ones via
    |m,k>_{+-} = U^dag |m,k>_{12}.
    """
    a = annihilation_matrix(n_max).matrix
    eye = np.eye(n_max + 1)
    a1 = np.kron(a, eye)
    a2 = np.kron(eye, a)
    gen = a1.conj().T @ a2 - a2.conj().T @ a1
    w, v = np.linalg.eigh(1j * gen)
    u = (v * np.exp(-1j * theta * w)) @ v.conj().T
    if abs(theta) > 0 and np.max(np.abs(u.imag)) < 1e-13:
        u = u.real.astype(complex)
    return FockOperator(u, n_max, 2, PHYSICAL)


def transform_state(rho: TwoModeState, theta: float, target_basis: str) -> TwoModeState:
    """Re-express a two-mode state in the other mode basis.

    Exact whenever the state's total-excitation support fits inside the
    cutoff (always true for states built within the truncation from
    normal-mode data of total number <= n_max).
    """
    if target_basis not in (PHYSICAL, NORMAL):
        raise ValueError(f"unknown target basis {target_basis!r}")
    if rho.basis_tag == target_basis:
        raise SameBasis(f"state already tagged {target_basis!r}")
    u = mode_rotation_unitary(theta, rho.n_max).matrix
    if target_basis == PHYSICAL:
        # normal-mode matrix R becomes U^dag R U on physical labels
        m = u.conj().T @ rho.matrix @ u
    else:
        m = u @ rho.matrix @ u.conj().T
    return TwoModeState(m, rho.n_max, target_basis, validate=rho.validate)


def transform_operator(op: FockOperator, theta: float, target_basis: str) -> FockOperator:
    """Same basis change for operators (no trace/positivity checks)."""
    if op.modes != 2:
        raise SameBasis("basis change needs a two-mode operator")
    if op.basis_tag == target_basis:
        raise SameBasis(f"operator already tagged {target_basis!r}")
    u = mode_rotation_unitary(theta, op.n_max).matrix
    if target_basis == PHYSICAL:
        m = u.conj().T @ op.matrix @ u
    else:
        m = u @ op.matrix @ u.conj().T
    return FockOperator(m, op.n_max, 2, target_basis)
