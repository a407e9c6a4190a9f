"""Truncated Fock-space operator algebra.

Dense matrices over single- or two-mode Fock bases with a hard cutoff
``n_max`` (levels 0..n_max per mode).  Natural units hbar = mu = omega = 1
throughout; physical prefactors of position operators are positive and drop
out of every sign-level quantity, so they never enter matrix elements.

Two-mode operators carry a ``basis_tag`` recording which mode labels index
the matrix: the physical oscillators or the normal modes.  The partial
transpose (and therefore the logarithmic negativity) is only defined with
respect to the physical split, so those operations refuse normal-mode-tagged
input instead of silently producing a basis-dependent answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import (
    DimensionMismatch,
    NotHermitian,
    TruncationInsufficient,
    WrongBasisTag,
)

#: basis tag for the physical oscillator modes {a1, a2}
PHYSICAL = "a1,a2"
#: basis tag for the normal modes {a+, a-}
NORMAL = "a+,a-"

HERMITICITY_TOL = 1e-10


def _as_complex(m) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(m, dtype=complex))


def hermiticity_defect(matrix: np.ndarray) -> float:
    """Largest entrywise deviation |M - M^dag|."""
    return float(np.max(np.abs(matrix - matrix.conj().T)))


@dataclass(frozen=True)
class FockOperator:
    """Dense operator on a truncated Fock space.

    Attributes:
        matrix: square complex matrix, dimension (n_max+1)**modes.
        n_max: highest retained Fock level per mode.
        modes: 1 or 2.
        basis_tag: PHYSICAL or NORMAL for two-mode operators; single-mode
            operators default to the mode-agnostic tag "single".
    """

    matrix: np.ndarray
    n_max: int
    modes: int = 1
    basis_tag: str = "single"

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_complex(self.matrix))
        d = (self.n_max + 1) ** self.modes
        if self.matrix.shape != (d, d):
            raise DimensionMismatch(
                f"matrix shape {self.matrix.shape} != ({d}, {d}) for "
                f"n_max={self.n_max}, modes={self.modes}"
            )
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dagger(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.n_max, self.modes, self.basis_tag)

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.matrix))))
        return hermiticity_defect(self.matrix) <= tol * scale

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        if (self.n_max, self.modes) != (other.n_max, other.modes):
            raise DimensionMismatch("operator product across different spaces")
        return FockOperator(self.matrix @ other.matrix, self.n_max, self.modes, self.basis_tag)


@dataclass(frozen=True)
class HermitianBasis:
    """Trace-orthonormal Hermitian basis with element 0 proportional to 1."""

    elements: tuple
    n_max: int

    def __len__(self) -> int:
        return len(self.elements)

    def expand(self, matrix: np.ndarray) -> np.ndarray:
        """Real coefficients c_j = tr(B_j M) of a Hermitian matrix."""
        return np.array([np.trace(b @ matrix).real for b in self.elements])

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.zeros_like(self.elements[0])
        for c, b in zip(coeffs, self.elements):
            out = out + c * b
        return out


@dataclass(frozen=True)
class TwoModeState:
    """Density operator over a truncated two-mode Fock space."""

    matrix: np.ndarray
    n_max: int
    basis_tag: str
    validate: bool = field(default=True, repr=False, compare=False)

    TRACE_TOL = 1e-9
    EIG_FLOOR = -1e-9

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_complex(self.matrix))
        d = (self.n_max + 1) ** 2
        if self.matrix.shape != (d, d):
            raise DimensionMismatch(
                f"state shape {self.matrix.shape} != ({d}, {d}) for n_max={self.n_max}"
            )
        if self.basis_tag not in (PHYSICAL, NORMAL):
            raise WrongBasisTag(f"unknown basis tag {self.basis_tag!r}")
        if self.validate:
            tr = np.trace(self.matrix)
            if abs(tr - 1.0) > self.TRACE_TOL:
                raise ValueError(f"trace {tr} deviates from 1 beyond {self.TRACE_TOL}")
            if hermiticity_defect(self.matrix) > 1e-8:
                raise NotHermitian("density matrix is not Hermitian")
            w = np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2.0)
            if w[0] < self.EIG_FLOOR:
                raise ValueError(f"minimum eigenvalue {w[0]} below {self.EIG_FLOOR}")
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_pure(cls, vec: np.ndarray, n_max: int, basis_tag: str) -> "TwoModeState":
        v = np.asarray(vec, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()), n_max, basis_tag)

    def operator(self) -> FockOperator:
        return FockOperator(self.matrix, self.n_max, 2, self.basis_tag)


class Displacement(NamedTuple):
    operator: FockOperator
    unitarity_defect: float


def annihilation_matrix(n_max: int) -> FockOperator:
    """Ladder operator a with entries sqrt(n) at (n-1, n)."""
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    a = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    for n in range(1, n_max + 1):
        a[n - 1, n] = np.sqrt(n)
    return FockOperator(a, n_max, 1)


def number_matrix(n_max: int) -> FockOperator:
    return FockOperator(np.diag(np.arange(n_max + 1, dtype=complex)), n_max, 1)


def identity_matrix(n_max: int, modes: int = 1, basis_tag: str = "single") -> FockOperator:
    return FockOperator(np.eye((n_max + 1) ** modes, dtype=complex), n_max, modes, basis_tag)


def coherent_tail_mass(alpha: complex, n_max: int) -> float:
    """Probability weight of the truncated-away levels of |alpha>."""
    lam = abs(alpha) ** 2
    if lam == 0.0:
        return 0.0
    # Poisson tail P(X > n_max); regularized lower incomplete gamma.
    return float(gammainc(n_max + 1, lam))


def coherent_state(alpha: complex, n_max: int, tol: float = 1e-10) -> np.ndarray:
    """Normalized truncated coherent-state vector.

    Raises TruncationInsufficient when the Poisson tail beyond n_max
    exceeds ``tol``.
    """
    tail = coherent_tail_mass(alpha, n_max)
    if tail > tol:
        raise TruncationInsufficient(
            f"tail mass {tail:.3e} beyond n_max={n_max} exceeds tol={tol:.1e} "
            f"for |alpha|={abs(alpha):.3f}"
        )
    n = np.arange(n_max + 1)
    # log-domain to avoid overflow in alpha^n / sqrt(n!)
    if alpha == 0:
        vec = np.zeros(n_max + 1, dtype=complex)
        vec[0] = 1.0
        return vec
    logmod = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1.0) - abs(alpha) ** 2 / 2.0
    phase = np.exp(1j * np.angle(alpha) * n)
    vec = np.exp(logmod) * phase
    return vec / np.linalg.norm(vec)


def minimum_coherent_cutoff(alpha: complex, tol: float = 1e-10, margin: int = 2) -> int:
    """Smallest n_max whose coherent tail mass is below tol, plus margin."""
    lam = abs(alpha) ** 2
    n = max(8, int(lam + 12.0 * np.sqrt(lam + 1.0)))
    while coherent_tail_mass(alpha, n) > tol:
        n = int(1.5 * n) + 4
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if coherent_tail_mass(alpha, mid) > tol:
            lo = mid + 1
        else:
            hi = mid
    return lo + margin


def displacement_matrix(alpha: complex, n_max: int) -> Displacement:
    """exp(alpha a^dag - alpha* a) on the truncated space.

    The generator is anti-Hermitian so the truncated exponential is exactly
    unitary; the reported defect measures how far D|0> drifts from the
    normalized coherent expansion, i.e. the truncation error proper.
    """
    a = annihilation_matrix(n_max).matrix
    gen = alpha * a.conj().T - np.conj(alpha) * a
    # expm via eigendecomposition of the Hermitian matrix i*gen
    w, v = np.linalg.eigh(1j * gen)
    d = (v * np.exp(-1j * w)) @ v.conj().T
    op = FockOperator(d, n_max, 1)
    defect = float(np.max(np.abs(d.conj().T @ d - np.eye(n_max + 1))))
    # unitarity of the truncated exponential is exact; the meaningful defect
    # is the mismatch against the analytic coherent amplitudes
    tail = coherent_tail_mass(alpha, n_max)
    return Displacement(op, max(defect, tail))


def tensor(a: FockOperator, b: FockOperator, basis_tag: str = PHYSICAL) -> FockOperator:
    """Kronecker product, mode 1 slowest index."""
    if a.modes != 1 or b.modes != 1:
        raise DimensionMismatch("tensor expects two single-mode operators")
    if a.n_max != b.n_max:
        raise DimensionMismatch(f"mixed truncations {a.n_max} != {b.n_max}")
    return FockOperator(np.kron(a.matrix, b.matrix), a.n_max, 2, basis_tag)


def partial_transpose_matrix(matrix: np.ndarray, dim_per_mode: int) -> np.ndarray:
    d = dim_per_mode
    return (
        matrix.reshape(d, d, d, d).transpose(0, 3, 2, 1).reshape(d * d, d * d)
    )


def partial_transpose(op: FockOperator) -> FockOperator:
    """Transpose the second-mode indices; defined in the physical basis only."""
    if op.modes != 2:
        raise DimensionMismatch("partial transpose needs a two-mode operator")
    if op.basis_tag != PHYSICAL:
        raise WrongBasisTag(
            "partial transpose is taken in the physical {a1,a2} basis; "
            "rotate the operator first"
        )
    return FockOperator(
        partial_transpose_matrix(op.matrix, op.n_max + 1), op.n_max, 2, PHYSICAL
    )


def hermitian_basis(n_max: int) -> HermitianBasis:
    """Orthonormal Hermitian basis (normalized generalized Gell-Mann set).

    Element 0 is 1/sqrt(d); then all symmetric and antisymmetric pair
    matrices, then the diagonal traceless ladder.  tr(B_j B_k) = delta_jk
    holds exactly by construction.
    """
    d = n_max + 1
    mats = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1.0 / np.sqrt(2.0)
            mats.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = -1j / np.sqrt(2.0)
            m[k, j] = 1j / np.sqrt(2.0)
            mats.append(m)
    for l in range(1, d):
        diag = np.zeros(d, dtype=complex)
        diag[:l] = 1.0
        diag[l] = -l
        mats.append(np.diag(diag) / np.sqrt(l * (l + 1.0)))
    assert len(mats) == d * d
    for m in mats:
        m.setflags(write=False)
    return HermitianBasis(tuple(mats), n_max)


def eig_hermitian(op: FockOperator | np.ndarray, tol: float = HERMITICITY_TOL):
    """Eigendecomposition of a Hermitian operator, eigenvalues ascending.

    Symmetrizes (M + M^dag)/2 before solving to absorb rounding from
    products; raises NotHermitian beyond ``tol`` (relative to the largest
    entry).
    """
    m = op.matrix if isinstance(op, FockOperator) else np.asarray(op, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if hermiticity_defect(m) > tol * scale:
        raise NotHermitian(f"Hermiticity defect {hermiticity_defect(m):.2e} above tolerance")
    w, v = np.linalg.eigh((m + m.conj().T) / 2.0)
    return w, v


def trace_norm_hermitian(matrix: np.ndarray) -> float:
    w = np.linalg.eigvalsh((matrix + matrix.conj().T) / 2.0)
    return float(np.sum(np.abs(w)))


def embed_state(rho: TwoModeState, n_max_new: int) -> TwoModeState:
    """Isometric embedding into a larger per-mode cutoff.

    Needed before basis rotations whenever the state's total excitation can
    exceed the current cutoff: rotation is exact only on complete
    total-number blocks.
    """
    if n_max_new < rho.n_max:
        raise DimensionMismatch("target cutoff below current one")
    if n_max_new == rho.n_max:
        return rho
    d_old, d_new = rho.n_max + 1, n_max_new + 1
    out = np.zeros((d_new * d_new, d_new * d_new), dtype=complex)
    r4 = rho.matrix.reshape(d_old, d_old, d_old, d_old)
    out.reshape(d_new, d_new, d_new, d_new)[
        :d_old, :d_old, :d_old, :d_old
    ] = r4
    return TwoModeState(out, n_max_new, rho.basis_tag, validate=rho.validate)


def log_negativity(rho: TwoModeState, clamp: float = 1e-9) -> float:
    """log tr|rho^{Gamma_2}| (natural log), clamped to 0 within ``clamp``."""
    if rho.basis_tag != PHYSICAL:
        raise WrongBasisTag("logarithmic negativity is defined for the physical split")
    pt = partial_transpose_matrix(rho.matrix, rho.n_max + 1)
    val = float(np.log(trace_norm_hermitian(pt)))
    if abs(val) <= clamp:
        return 0.0
    return val
