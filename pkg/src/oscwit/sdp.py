"""Minimum certifiable entanglement for an observed protocol score.

Solves, over density operators rho on the truncated two-mode normal-mode
space (levels <= n per mode),

    minimize  tr(varrho_+)   subject to   tr(rho Q_K) = P,
    rho^{Gamma_2} = varrho_+ - varrho_-,   rho, varrho_± >= 0,

where the partial transpose is taken after re-expressing rho in the
physical basis on the doubled space (levels <= 2n per mode).  The optimum z
gives the minimum logarithmic negativity S_N = log(2z - 1) of any state
compatible with the score.

Reported values are honest certificates independent of solver internals:

* the primal value comes from an exactly feasible state (projected, score
  repaired by mixing), evaluated by eigendecomposition;
* the dual bound comes from a feasible dual triple (Lambda in [0,1],
  scalars via a one-dimensional concave search), so weak duality holds at
  every recorded iterate by construction.

``dual_gap`` is reported in the same (log) units as ``s_n``; a positive
certification means s_n - dual_gap = log(2 z_lb - 1) > 0.  A z-domain gap
would overstate certainty near z = 1 where the logarithm is steep.

Two engines: a primal-dual interior-point method (HKM search direction,
Mehrotra predictor-corrector, dense block linear algebra) and a
primal-dual splitting fallback for spaces too large for the Schur
complement.

An exact discrete symmetry shrinks every solve: conjugation by
exp(i phi N_tot) with phi = 2 pi k / K fixes the constraints (Q_K couples
only levels equal mod K) and, being a product of local phase unitaries on
the physical split, preserves the partial-transpose spectrum.  Averaging
over the K phases therefore maps feasible points to feasible points
without raising the objective, so the optimum is attained on states
block-diagonal in N_tot mod K, and varrho_± can be taken block-diagonal in
(n_1 - n_2) mod K.  The reduction is exact, not a truncation; tests
compare reduced and unreduced solves.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleTarget, NumericalFailure
from .fock import (
    NORMAL,
    HermitianBasis,
    TwoModeState,
    hermitian_basis,
    partial_transpose_matrix,
)
from .modes import mode_rotation_unitary
from .protocol import max_score, qk_matrix

FACE_TOL = 1e-9


# ---------------------------------------------------------------------------
# symmetric-vector packing


def _svec_data(d: int):
    """Index arrays packing Sym(d) isometrically into R^{d(d+1)/2}."""
    rows, cols = np.triu_indices(d)
    scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
    return rows, cols, scale


def _svec(m: np.ndarray, data) -> np.ndarray:
    rows, cols, scale = data
    return m[rows, cols] * scale


def _smat(v: np.ndarray, d: int, data) -> np.ndarray:
    rows, cols, scale = data
    m = np.zeros((d, d))
    vals = v / scale
    m[rows, cols] = vals
    m[cols, rows] = vals
    return m


def _symkron(a: np.ndarray, b: np.ndarray, data) -> np.ndarray:
    """svec-basis matrix of M -> (a M b^T + b M a^T)/2 for symmetric a, b."""
    rows, cols, scale = data
    full = 0.5 * (np.kron(a, b) + np.kron(b, a))
    d = a.shape[0]
    flat_up = rows * d + cols
    flat_lo = cols * d + rows
    sub = full[np.ix_(flat_up, flat_up)] + full[np.ix_(flat_up, flat_lo)]
    sub *= 0.5 * np.outer(scale, scale)
    return sub


# ---------------------------------------------------------------------------
# problem data


@dataclass
class _BlockSpace:
    """A direct sum of symmetric blocks given by index groups."""

    dim: int                       # ambient flat dimension
    groups: list                   # list of index arrays
    svec_data: list = field(init=False)
    svec_sizes: list = field(init=False)

    def __post_init__(self):
        self.svec_data = [_svec_data(len(g)) for g in self.groups]
        self.svec_sizes = [len(g) * (len(g) + 1) // 2 for g in self.groups]

    @property
    def total(self) -> int:
        return int(sum(self.svec_sizes))

    def blocks_from_full(self, m: np.ndarray) -> list:
        return [m[np.ix_(g, g)] for g in self.groups]

    def full_from_blocks(self, blocks: list) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for g, b in zip(self.groups, blocks):
            m[np.ix_(g, g)] = b
        return m

    def pack(self, blocks: list) -> np.ndarray:
        return np.concatenate(
            [_svec(b, sd) for b, sd in zip(blocks, self.svec_data)]
        ) if self.groups else np.zeros(0)

    def unpack(self, v: np.ndarray) -> list:
        out, ofs = [], 0
        for g, sd, sz in zip(self.groups, self.svec_data, self.svec_sizes):
            out.append(_smat(v[ofs:ofs + sz], len(g), sd))
            ofs += sz
        return out

    def eye(self, scale: float = 1.0) -> list:
        return [scale * np.eye(len(g)) for g in self.groups]


def _residue_groups(labels: np.ndarray, K: int, reduce: bool) -> list:
    if not reduce:
        return [np.arange(len(labels))]
    groups = []
    for r in range(K):
        idx = np.nonzero(labels % K == r)[0]
        if len(idx):
            groups.append(idx)
    return groups


@dataclass
class SdpSolution:
    """Certified result of one solve.

    ``z`` is the objective value at an exactly feasible state; ``z_lb`` the
    best feasible dual bound; ``s_n`` / ``s_n_lb`` their log-domain images
    and ``dual_gap`` their difference, so s_n - dual_gap > 0 certifies
    entanglement.
    """

    z: float
    s_n: float
    z_lb: float
    s_n_lb: float
    dual_gap: float
    iterations: int
    status: str
    rho: TwoModeState | None = None
    history: list | None = None
    wall_time: float = 0.0

    @property
    def certified(self) -> bool:
        return self.status in ("optimal", "max-iter") and self.s_n_lb > 0.0


def _sn_from_z(z: float, tol: float = 1e-12) -> float:
    t = 2.0 * z - 1.0
    if t <= 1.0 + tol:
        return 0.0
    return math.log(t)


@dataclass
class SdpProblem:
    """Assembled certification instance (see module docstring)."""

    K: int
    theta: float
    p_target: float
    n_max: int
    basis_small: HermitianBasis
    basis_large: HermitianBasis
    # internal solver data
    _q_small: np.ndarray = field(repr=False)
    _u_big: np.ndarray = field(repr=False)
    _embed_idx: np.ndarray = field(repr=False)
    _rho_space: _BlockSpace = field(repr=False)
    _big_space: _BlockSpace = field(repr=False)
    _face_basis: np.ndarray | None = field(repr=False)
    _score_active: bool = field(repr=False)
    # lazy caches: the interior-point constraint rows scale with the
    # fourth power of the cutoff and are never needed by the splitting
    # engine, and the operator-basis expansion of Q is diagnostic only
    _g_rows: np.ndarray | None = field(default=None, repr=False)
    _t_rows: np.ndarray | None = field(default=None, repr=False)
    _q_vec: np.ndarray | None = field(default=None, repr=False)

    @property
    def q_vec(self) -> np.ndarray:
        """tr(Q (B x B)_j) over the product basis, element (0,0) excluded."""
        if self._q_vec is None:
            self._q_vec = _q_expansion(self)
        return self._q_vec

    @property
    def small_dim(self) -> int:
        return (self.n_max + 1) ** 2

    @property
    def big_dim(self) -> int:
        return (2 * self.n_max + 1) ** 2

    @property
    def rho_dim(self) -> int:
        return self._q_small.shape[0] if self._face_basis is None else self._face_basis.shape[1]

    # -- linear maps ------------------------------------------------------

    def to_state_matrix(self, m: np.ndarray) -> np.ndarray:
        """Solver-variable matrix -> density matrix on the small space."""
        if self._face_basis is None:
            return m
        return self._face_basis @ m @ self._face_basis.T

    def from_state_matrix(self, m: np.ndarray) -> np.ndarray:
        if self._face_basis is None:
            return m
        return self._face_basis.T @ m @ self._face_basis

    def phi(self, rho_small: np.ndarray) -> np.ndarray:
        """Embed, rotate to the physical basis, partial-transpose."""
        d1 = self.n_max + 1
        big = np.zeros((self.big_dim, self.big_dim))
        big[np.ix_(self._embed_idx, self._embed_idx)] = rho_small
        m12 = self._u_big.T @ big @ self._u_big
        return partial_transpose_matrix(m12, 2 * self.n_max + 1).real

    def phi_adjoint(self, y_big: np.ndarray) -> np.ndarray:
        pt = partial_transpose_matrix(y_big, 2 * self.n_max + 1).real
        rot = self._u_big @ pt @ self._u_big.T
        return rot[np.ix_(self._embed_idx, self._embed_idx)]

    def expansion_coefficients(self, rho_small: np.ndarray) -> np.ndarray:
        """Coordinates of rho over the product operator basis (B_j x B_k),
        element (0,0) excluded; the complement of the fixed trace part."""
        b = self.basis_small.elements
        d2 = len(b)
        coeffs = []
        for j in range(d2):
            for k in range(d2):
                if j == 0 and k == 0:
                    continue
                coeffs.append(np.trace(np.kron(b[j], b[k]) @ rho_small).real)
        return np.array(coeffs)

    def score_of(self, rho_small: np.ndarray) -> float:
        return float(np.tensordot(self._q_small, rho_small, 2))


def build_problem(
    K: int,
    theta: float,
    p_target: float,
    n_max: int,
    symmetry_reduction: bool = True,
) -> SdpProblem:
    """Assemble the certification SDP.

    Raises InfeasibleTarget when no state within the truncation attains
    ``p_target``.  Targets exactly at the spectral edge are reduced to the
    corresponding eigenspace face, where the score constraint holds
    identically.
    """
    if not 0.0 <= p_target <= 1.0:
        raise ValueError("p_target must lie in [0, 1]")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    d1 = n_max + 1
    ds = d1 * d1
    q1 = qk_matrix(K, n_max).matrix.real
    q_small = np.kron(q1, np.eye(d1))
    w_q, v_q = np.linalg.eigh(q_small)
    lam_min, lam_max = w_q[0], w_q[-1]
    if p_target > lam_max + FACE_TOL or p_target < lam_min - FACE_TOL:
        raise InfeasibleTarget(
            f"p_target={p_target} outside the attainable range "
            f"[{lam_min:.9f}, {lam_max:.9f}] at n_max={n_max}"
        )

    degenerate_q = lam_max - lam_min < 1e-13
    face_basis = None
    score_active = True
    if degenerate_q:
        # Q is exactly (1/2) identity below the first coupling level
        score_active = False
    elif p_target > lam_max - FACE_TOL:
        face_basis = v_q[:, w_q > lam_max - FACE_TOL]
        score_active = False
    elif p_target < lam_min + FACE_TOL:
        face_basis = v_q[:, w_q < lam_min + FACE_TOL]
        score_active = False

    # sector labels: N_tot mod K on the small space, (n1 - n2) mod K on the
    # doubled physical space
    i_idx, j_idx = np.divmod(np.arange(ds), d1)
    rho_labels = i_idx + j_idx
    D1 = 2 * n_max + 1
    a_idx, b_idx = np.divmod(np.arange(D1 * D1), D1)
    big_labels = a_idx - b_idx

    if face_basis is not None:
        cols = []
        labels = []
        homogeneous = True
        for c in range(face_basis.shape[1]):
            sup = np.nonzero(np.abs(face_basis[:, c]) > 1e-11)[0]
            res = set((rho_labels[sup] % K).tolist())
            if len(res) != 1:
                homogeneous = False
                break
            labels.append(res.pop())
        if homogeneous and symmetry_reduction:
            rho_space = _BlockSpace(face_basis.shape[1],
                                    _residue_groups(np.array(labels), K, True))
        else:
            rho_space = _BlockSpace(face_basis.shape[1],
                                    [np.arange(face_basis.shape[1])])
    else:
        rho_space = _BlockSpace(ds, _residue_groups(rho_labels, K, symmetry_reduction))
    big_space = _BlockSpace(D1 * D1, _residue_groups(big_labels, K, symmetry_reduction))

    u_big = mode_rotation_unitary(theta, 2 * n_max).matrix.real
    embed_idx = np.array([i * D1 + j for i in range(d1) for j in range(d1)])

    basis_small = hermitian_basis(n_max)
    basis_large = hermitian_basis(2 * n_max)
    return SdpProblem(
        K=K, theta=theta, p_target=p_target, n_max=n_max,
        basis_small=basis_small, basis_large=basis_large,
        _q_small=q_small, _u_big=u_big, _embed_idx=embed_idx,
        _rho_space=rho_space, _big_space=big_space,
        _face_basis=face_basis, _score_active=score_active,
    )


def _q_expansion(prob: SdpProblem) -> np.ndarray:
    """q_j = tr(Q_K (B x B)_j) over the product basis, (0,0) excluded."""
    b = prob.basis_small.elements
    d1 = prob.n_max + 1
    q1 = prob._q_small
    coeffs = []
    for j in range(len(b)):
        for k in range(len(b)):
            if j == 0 and k == 0:
                continue
            coeffs.append(np.trace(np.kron(b[j], b[k]) @ q1).real)
    return np.array(coeffs)


def _assemble_constraint_rows(prob: SdpProblem) -> None:
    """Precompute the rho-side svec rows of every linear constraint.

    Row 0: trace; row 1 (when active): score; remaining rows: for each
    svec basis element E of the big blocks, the rho-space component
    V^T Phi*(E) V.  The varrho_± components of those rows are the svec
    identity, so they never need storing.
    """
    if prob._g_rows is not None:
        return
    rs, bs = prob._rho_space, prob._big_space
    n_match = bs.total
    rows = np.zeros((n_match, rs.total))
    u = prob._u_big
    D1 = 2 * prob.n_max + 1
    emb = prob._embed_idx
    sqrt2 = math.sqrt(2.0)
    row = 0
    for g, sd in zip(bs.groups, bs.svec_data):
        r_idx, c_idx, _scale = sd
        for rr, cc in zip(r_idx, c_idx):
            p_flat, q_flat = int(g[rr]), int(g[cc])
            # partial transpose of an elementary pair swaps the second-mode
            # ket/bra indices; the result is again an elementary pair
            pa, pb = divmod(p_flat, D1)
            qa, qb = divmod(q_flat, D1)
            p2 = pa * D1 + qb
            q2 = qa * D1 + pb
            up = u[:, p2][emb]
            uq = u[:, q2][emb]
            if p_flat == q_flat:
                # diagonal svec element e_p e_p^T (p2 == q2 == p here)
                m = np.outer(up, up)
            else:
                m = (np.outer(up, uq) + np.outer(uq, up)) / sqrt2
            small = prob.from_state_matrix(m)
            rows[row] = rs.pack(rs.blocks_from_full(small))
            row += 1
    t_rows = [rs.pack(rs.eye())]
    if prob._score_active:
        qs = prob.from_state_matrix(prob._q_small)
        t_rows.append(rs.pack(rs.blocks_from_full(qs)))
    prob._g_rows = rows
    prob._t_rows = np.array(t_rows)


# ---------------------------------------------------------------------------
# honest certificates


def _reference_states(prob: SdpProblem):
    """Unit-trace PSD matrices with extreme scores, for score repair."""
    w, v = np.linalg.eigh(prob._q_small)
    lo = np.outer(v[:, 0], v[:, 0])
    hi = np.outer(v[:, -1], v[:, -1])
    return (w[0], lo), (w[-1], hi)


def _project_feasible(prob: SdpProblem, rho_small: np.ndarray) -> np.ndarray:
    """Nearest convenient exactly feasible state: PSD clip, renormalize,
    then repair the score by mixing with a spectral-edge state."""
    m = (rho_small + rho_small.T) / 2.0
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0.0:
        m = np.eye(m.shape[0]) / m.shape[0]
    else:
        m = (v * w) @ v.T
        m /= np.trace(m)
    if not prob._score_active:
        return m
    p_now = prob.score_of(m)
    p_want = prob.p_target
    if abs(p_now - p_want) < 1e-15:
        return m
    (lam_lo, state_lo), (lam_hi, state_hi) = _reference_states(prob)
    ref_lam, ref = (lam_hi, state_hi) if p_want > p_now else (lam_lo, state_lo)
    t = (p_want - p_now) / (ref_lam - p_now)
    t = min(max(t, 0.0), 1.0)
    return (1.0 - t) * m + t * ref


def _primal_value(prob: SdpProblem, rho_small: np.ndarray) -> float:
    """z = tr (Phi(rho))_+ = (tr|Phi(rho)| + 1)/2 at a feasible state."""
    w = np.linalg.eigvalsh(prob.phi(rho_small))
    return 0.5 * (float(np.sum(np.abs(w))) + 1.0)


def _dual_bound(prob: SdpProblem, lam_big: np.ndarray) -> float:
    """Feasible dual value from a matrix Lambda, clipped into [0, 1].

    z >= min_{rho feasible} <rho, Phi*(Lambda)> for any 0 <= Lambda <= 1;
    the inner minimum is a one-dimensional concave search over the score
    multiplier (or a bare smallest eigenvalue when the score constraint is
    inactive).
    """
    m = (lam_big + lam_big.T) / 2.0
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, 1.0)
    lam = (v * w) @ v.T
    h_small = prob.phi_adjoint(lam)
    h = prob.from_state_matrix(h_small)
    if not prob._score_active:
        return float(np.linalg.eigvalsh(h)[0])
    qs = prob._q_small
    p = prob.p_target

    def g(mu):
        return float(np.linalg.eigvalsh(h - mu * qs)[0]) + mu * p

    lo, hi = -1.0, 1.0
    while g(lo + 1e-6 * (hi - lo)) < g(lo) and abs(lo) < 1e8:
        lo *= 2.0
    while g(hi - 1e-6 * (hi - lo)) < g(hi) and abs(hi) < 1e8:
        hi *= 2.0
    for _ in range(90):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if g(m1) < g(m2):
            lo = m1
        else:
            hi = m2
    return g(0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# interior-point engine


def _sym_inv(s: np.ndarray) -> np.ndarray:
    inv = np.linalg.inv(s)
    return (inv + inv.T) / 2.0


class _SchurSolver:
    """Cholesky of the Schur complement with one refinement pass."""

    def __init__(self, schur: np.ndarray):
        from scipy.linalg import cho_factor

        self.schur = schur
        jitter = 0.0
        scale = max(np.trace(schur) / schur.shape[0], 1e-300)
        for attempt in range(6):
            try:
                self.factor = cho_factor(
                    schur + jitter * scale * np.eye(schur.shape[0]), lower=True
                )
                return
            except np.linalg.LinAlgError:
                jitter = 1e-14 if jitter == 0.0 else jitter * 100.0
        raise NumericalFailure("Schur factorization failed")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        from scipy.linalg import cho_solve

        x = cho_solve(self.factor, rhs)
        # one step of iterative refinement; the Schur complement becomes
        # severely ill-conditioned as the barrier parameter shrinks
        resid = rhs - self.schur @ x
        x += cho_solve(self.factor, resid)
        return x


def _max_step(block: np.ndarray, direction: np.ndarray) -> float:
    """sup alpha with block + alpha * direction PSD."""
    try:
        l = np.linalg.cholesky(block)
    except np.linalg.LinAlgError:
        l = np.linalg.cholesky(block + 1e-12 * np.eye(block.shape[0]))
    t = np.linalg.solve(l, direction)
    t = np.linalg.solve(l, t.T)
    wmin = np.linalg.eigvalsh((t + t.T) / 2.0)[0]
    if wmin >= 0.0:
        return np.inf
    return -1.0 / wmin


def _solve_ipm(prob: SdpProblem, tol: float, max_iters: int, record_history: bool,
               verbose: bool = False):
    """HKM predictor-corrector on the block formulation.

    Variable blocks: rho sectors, varrho_+ sectors, varrho_- sectors.
    Constraints: trace, (score), and the partial-transpose match expressed
    in the svec basis of every big sector.
    """
    _assemble_constraint_rows(prob)
    rs, bs = prob._rho_space, prob._big_space
    n_t = prob._t_rows.shape[0]
    n_match = bs.total
    m = n_t + n_match

    b_vec = np.zeros(m)
    b_vec[0] = 1.0
    if prob._score_active:
        b_vec[1] = prob.p_target

    g_rows = prob._g_rows
    t_rows = prob._t_rows

    def a_apply(xr_blocks, xp_blocks, xq_blocks):
        out = np.empty(m)
        xr = rs.pack(xr_blocks)
        out[:n_t] = t_rows @ xr
        out[n_t:] = g_rows @ xr - bs.pack(xp_blocks) + bs.pack(xq_blocks)
        return out

    def at_apply(y):
        yr = t_rows.T @ y[:n_t] + g_rows.T @ y[n_t:]
        y_big = y[n_t:]
        return rs.unpack(yr), [-bb for bb in bs.unpack(y_big)], bs.unpack(y_big)

    # objective: tr of every varrho_+ sector
    c_r = rs.eye(0.0)
    c_p = bs.eye(1.0)
    c_q = bs.eye(0.0)

    dim_total = sum(len(g) for g in rs.groups) + 2 * sum(len(g) for g in bs.groups)
    xr, xp, xq = rs.eye(1.0 / rs.dim if rs.dim else 1.0), bs.eye(2.0), bs.eye(1.0)
    sr, sp, sq = rs.eye(1.0), bs.eye(1.0), bs.eye(1.0)
    y = np.zeros(m)

    best = {"z_up": np.inf, "z_lb": -np.inf, "rho": None, "lam": None}
    history = []

    def harvest():
        rho_raw = prob.to_state_matrix(rs.full_from_blocks(xr))
        rho_feas = _project_feasible(prob, rho_raw)
        z_up = _primal_value(prob, rho_feas)
        lam = bs.full_from_blocks([-blk for blk in bs.unpack(y[n_t:])])
        z_lb = max(_dual_bound(prob, lam), 1.0)
        if z_up < best["z_up"]:
            best["z_up"], best["rho"] = z_up, rho_feas
        if z_lb > best["z_lb"]:
            best["z_lb"], best["lam"] = z_lb, lam
        if record_history:
            history.append((best["z_up"], best["z_lb"]))
        return best["z_up"] - best["z_lb"]

    def inner(blocks_a, blocks_b):
        return sum(np.tensordot(a, b, 2) for a, b in zip(blocks_a, blocks_b))

    status = "max-iter"
    it = 0
    stalls = 0
    for it in range(1, max_iters + 1):
        # residuals
        rp = b_vec - a_apply(xr, xp, xq)
        atr, atp, atq = at_apply(y)
        rd_r = [c - a - s for c, a, s in zip(c_r, atr, sr)]
        rd_p = [c - a - s for c, a, s in zip(c_p, atp, sp)]
        rd_q = [c - a - s for c, a, s in zip(c_q, atq, sq)]
        mu = (inner(xr, sr) + inner(xp, sp) + inner(xq, sq)) / dim_total

        gap = harvest()
        scale = 1.0 + abs(best["z_up"])
        if gap <= tol * scale:
            status = "optimal"
            break

        # inverses
        sr_inv = [_sym_inv(s) for s in sr]
        sp_inv = [_sym_inv(s) for s in sp]
        sq_inv = [_sym_inv(s) for s in sq]

        # Schur complement M = A (X (.) S^-1) A^T, assembled blockwise.
        kr = [
            _symkron(x, si, sd)
            for x, si, sd in zip(xr, sr_inv, rs.svec_data)
        ]
        kp = [
            _symkron(x, si, sd)
            for x, si, sd in zip(xp, sp_inv, bs.svec_data)
        ]
        kq = [
            _symkron(x, si, sd)
            for x, si, sd in zip(xq, sq_inv, bs.svec_data)
        ]
        kr_full = _block_diag(kr)
        a_rho = np.vstack([t_rows, g_rows])
        schur = a_rho @ kr_full @ a_rho.T
        kpq = _block_diag(kp) + _block_diag(kq)
        schur[n_t:, n_t:] += kpq
        try:
            schur_solver = _SchurSolver(schur)
        except NumericalFailure:
            status = "max-iter"
            break

        def solve_newton(sigma_mu, corr_r, corr_p, corr_q):
            # standard HKM right-hand side, with the optional Mehrotra
            # correction folded into corr_*
            def xrs(xb, rdb, sib, corr):
                return [
                    x @ rd @ si - sigma_mu * si + x + co @ si
                    for x, rd, si, co in zip(xb, rdb, sib, corr)
                ]
            er = xrs(xr, rd_r, sr_inv, corr_r)
            ep = xrs(xp, rd_p, sp_inv, corr_p)
            eq = xrs(xq, rd_q, sq_inv, corr_q)
            rhs = rp + a_apply(er, ep, eq)
            dy = schur_solver.solve(rhs)
            dtr, dtp, dtq = at_apply(dy)
            ds_r = [rd - a for rd, a in zip(rd_r, dtr)]
            ds_p = [rd - a for rd, a in zip(rd_p, dtp)]
            ds_q = [rd - a for rd, a in zip(rd_q, dtq)]

            def dx_of(xb, sib, dsb, corr):
                out = []
                for x, si, dsn, co in zip(xb, sib, dsb, corr):
                    v = sigma_mu * si - x - x @ dsn @ si - co @ si
                    out.append((v + v.T) / 2.0)
                return out
            dx_r = dx_of(xr, sr_inv, ds_r, corr_r)
            dx_p = dx_of(xp, sp_inv, ds_p, corr_p)
            dx_q = dx_of(xq, sq_inv, ds_q, corr_q)
            return dy, (dx_r, dx_p, dx_q), (ds_r, ds_p, ds_q)

        zeros_r = rs.eye(0.0)
        zeros_p = bs.eye(0.0)
        zeros_q = bs.eye(0.0)
        try:
            _, dx_aff, ds_aff = solve_newton(0.0, zeros_r, zeros_p, zeros_q)
        except NumericalFailure:
            status = "max-iter"
            break

        def step_len(blocks, dirs):
            a = 1.0
            for blk, d in zip(blocks, dirs):
                a = min(a, _max_step(blk, d))
            return a

        ap_aff = min(
            step_len(xr, dx_aff[0]), step_len(xp, dx_aff[1]), step_len(xq, dx_aff[2])
        )
        ad_aff = min(
            step_len(sr, ds_aff[0]), step_len(sp, ds_aff[1]), step_len(sq, ds_aff[2])
        )
        mu_aff = (
            inner([x + min(1.0, ap_aff) * d for x, d in zip(xr, dx_aff[0])],
                  [s + min(1.0, ad_aff) * d for s, d in zip(sr, ds_aff[0])])
            + inner([x + min(1.0, ap_aff) * d for x, d in zip(xp, dx_aff[1])],
                    [s + min(1.0, ad_aff) * d for s, d in zip(sp, ds_aff[1])])
            + inner([x + min(1.0, ap_aff) * d for x, d in zip(xq, dx_aff[2])],
                    [s + min(1.0, ad_aff) * d for s, d in zip(sq, ds_aff[2])])
        ) / dim_total
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
        # do not let complementarity outrun feasibility: a small barrier
        # parameter with large residuals strands the iterate off-path
        infeas = np.linalg.norm(rp) / (1.0 + np.linalg.norm(b_vec))
        sigma = max(sigma, min(0.99, (infeas / (infeas + mu)) ** 3))

        corr_r = [dx @ ds for dx, ds in zip(dx_aff[0], ds_aff[0])]
        corr_p = [dx @ ds for dx, ds in zip(dx_aff[1], ds_aff[1])]
        corr_q = [dx @ ds for dx, ds in zip(dx_aff[2], ds_aff[2])]
        try:
            dy, dx, dsb = solve_newton(sigma * mu, corr_r, corr_p, corr_q)
        except NumericalFailure:
            status = "max-iter"
            break

        tau = 0.9 if it < 8 else 0.98

        def lengths(dx_b, ds_b):
            a = min(1.0, tau * min(step_len(xr, dx_b[0]), step_len(xp, dx_b[1]),
                                   step_len(xq, dx_b[2])))
            d = min(1.0, tau * min(step_len(sr, ds_b[0]), step_len(sp, ds_b[1]),
                                   step_len(sq, ds_b[2])))
            return a, d

        ap, ad = lengths(dx, dsb)
        if min(ap, ad) < 1e-4:
            # direction blocked by the cone boundary: fall back to a pure
            # centering step to recover interiority
            try:
                dy, dx, dsb = solve_newton(mu, zeros_r, zeros_p, zeros_q)
                ap, ad = lengths(dx, dsb)
            except NumericalFailure:
                status = "max-iter"
                break
            stalls += 1
        else:
            stalls = 0
        if verbose:
            print(
                f"  it={it:3d} mu={mu:.3e} gap={gap:.3e} sigma={sigma:.2e} "
                f"ap={ap:.2e} ad={ad:.2e} |rp|={np.linalg.norm(rp):.2e}"
            )
        if stalls >= 4 or (ap < 1e-10 and ad < 1e-10):
            status = "max-iter"
            break
        xr = [x + ap * d for x, d in zip(xr, dx[0])]
        xp = [x + ap * d for x, d in zip(xp, dx[1])]
        xq = [x + ap * d for x, d in zip(xq, dx[2])]
        sr = [s + ad * d for s, d in zip(sr, dsb[0])]
        sp = [s + ad * d for s, d in zip(sp, dsb[1])]
        sq = [s + ad * d for s, d in zip(sq, dsb[2])]
        y = y + ad * dy

    harvest()
    return best, it, status, history


def _block_diag(blocks: list) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    ofs = 0
    for b in blocks:
        k = b.shape[0]
        out[ofs:ofs + k, ofs:ofs + k] = b
        ofs += k
    return out


# ---------------------------------------------------------------------------
# first-order fallback engine


def _project_spectrahedron(prob: SdpProblem, m0: np.ndarray, warm):
    """Frobenius projection onto {rho >= 0, tr = 1, (score = p)}."""
    sym = (m0 + m0.T) / 2.0
    eye = np.eye(sym.shape[0])
    if not prob._score_active:
        # 1-D: subtract a * I before the PSD clip; trace is monotone in a
        def tr_of(a):
            w = np.linalg.eigvalsh(sym - a * eye)
            return np.clip(w, 0.0, None).sum()
        lo, hi = -1.0, 1.0
        while tr_of(lo) < 1.0:
            lo *= 2.0
        while tr_of(hi) > 1.0:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if tr_of(mid) > 1.0:
                lo = mid
            else:
                hi = mid
        a = 0.5 * (lo + hi)
        w, v = np.linalg.eigh(sym - a * eye)
        return (v * np.clip(w, 0.0, None)) @ v.T, warm
    qs = prob._q_small
    a, b = warm

    def compute(a, b):
        w, v = np.linalg.eigh(sym - a * eye - b * qs)
        wc = np.clip(w, 0.0, None)
        rho = (v * wc) @ v.T
        return rho, np.array([np.trace(rho) - 1.0, prob.score_of(rho) - prob.p_target])

    rho, h = compute(a, b)
    for _ in range(60):
        if np.max(np.abs(h)) < 1e-12:
            break
        eps = 1e-7
        _, h_a = compute(a + eps, b)
        _, h_b = compute(a, b + eps)
        jac = np.column_stack([(h_a - h) / eps, (h_b - h) / eps])
        try:
            step = np.linalg.solve(jac, -h)
        except np.linalg.LinAlgError:
            step = -h
        t = 1.0
        for _ in range(30):
            rho2, h2 = compute(a + t * step[0], b + t * step[1])
            if np.linalg.norm(h2) < np.linalg.norm(h):
                a, b, rho, h = a + t * step[0], b + t * step[1], rho2, h2
                break
            t *= 0.5
        else:
            break
    return rho, (a, b)


def _solve_pdhg(prob: SdpProblem, tol: float, max_iters: int, record_history: bool,
                warm_start=None):
    """Primal-dual splitting on min_rho max_{|Y|<=1} <Phi(rho), Y>.

    The linear map Phi is a Hilbert-Schmidt isometry, so unit step-size
    products are admissible.  Certificates are harvested periodically from
    the feasible iterates.  ``warm_start`` may carry (rho, Y, best, history)
    from another engine.
    """
    ds = prob.small_dim
    db = prob.big_dim
    if prob._face_basis is not None:
        dim = prob._face_basis.shape[1]
    else:
        dim = ds
    if warm_start is not None:
        rho, y_big, best, history = warm_start
        rho = prob.from_state_matrix(rho)
    else:
        rho = np.eye(dim) / dim
        y_big = np.zeros((db, db))
        best = {"z_up": np.inf, "z_lb": -np.inf, "rho": None}
        history = []
    rho_bar = rho.copy()
    warm = (0.0, 0.0)
    taus = 0.95
    status = "max-iter"
    it = 0
    last_gap = np.inf
    stagnant = 0

    def phi_face(mm):
        return prob.phi(prob.to_state_matrix(mm))

    def phi_adj_face(yy):
        return prob.from_state_matrix(prob.phi_adjoint(yy))

    for it in range(1, max_iters + 1):
        y_new = y_big + taus * phi_face(rho_bar)
        w, v = np.linalg.eigh((y_new + y_new.T) / 2.0)
        y_big = (v * np.clip(w, -1.0, 1.0)) @ v.T
        grad = phi_adj_face(y_big)
        rho_new, warm = _project_spectrahedron(prob, rho - taus * grad, warm)
        rho_bar = 2.0 * rho_new - rho
        rho = rho_new
        if it % 25 == 0 or it == max_iters:
            rho_feas = _project_feasible(prob, prob.to_state_matrix(rho))
            z_up = _primal_value(prob, rho_feas)
            # Y in [-1, 1] maps to Lambda = (Y + 1)/2 in [0, 1]
            z_lb = max(_dual_bound(prob, (y_big + np.eye(db)) / 2.0), 1.0)
            if z_up < best["z_up"]:
                best["z_up"], best["rho"] = z_up, rho_feas
            best["z_lb"] = max(best["z_lb"], z_lb)
            if record_history:
                history.append((best["z_up"], best["z_lb"]))
            gap = best["z_up"] - best["z_lb"]
            if gap <= tol * (1.0 + abs(best["z_up"])):
                status = "optimal"
                break
            # stop honestly once the certificates stop improving
            if gap > last_gap - 1e-4 * max(last_gap, 1e-12):
                stagnant += 1
                if stagnant >= 12:
                    break
            else:
                stagnant = 0
            last_gap = gap
    return best, it, status, history


# ---------------------------------------------------------------------------
# public solve


def solve(
    prob: SdpProblem,
    tol: float = 1e-7,
    max_iters: int | None = None,
    engine: str = "auto",
    record_history: bool = False,
) -> SdpSolution:
    """Run the certification SDP and return certified bounds.

    engine: "interior-point", "first-order", or "auto" (interior point
    unless the Schur complement would be unreasonably large).  When
    ``max_iters`` is omitted, engine defaults apply (200 interior-point
    iterations, 20000 splitting iterations).
    """
    if engine == "auto":
        m = prob._big_space.total + 2
        engine = "interior-point" if m <= 2600 else "first-order"
    t0 = time.perf_counter()
    if engine == "interior-point":
        best, iters, status, history = _solve_ipm(
            prob, tol, 200 if max_iters is None else max_iters, record_history
        )
        gap = best["z_up"] - best["z_lb"]
        if gap > tol * (1.0 + abs(best["z_up"])) and best["rho"] is not None:
            # interior-point runs can leave the primal side loose when the
            # optimal face is degenerate; polish it with warm-started
            # splitting iterations (the dual bound is usually tight already)
            db = prob.big_dim
            y_warm = np.zeros((db, db))
            if best["lam"] is not None:
                lam = (best["lam"] + best["lam"].T) / 2.0
                w, v = np.linalg.eigh(lam)
                y_warm = (v * (2.0 * np.clip(w, 0.0, 1.0) - 1.0)) @ v.T
            best, extra, pstatus, history2 = _solve_pdhg(
                prob, tol, 8000, record_history,
                warm_start=(best["rho"], y_warm, best, history),
            )
            iters += extra
            status = pstatus if pstatus == "optimal" else status
            history = history2
    elif engine == "first-order":
        best, iters, status, history = _solve_pdhg(
            prob, tol, 20000 if max_iters is None else max_iters, record_history
        )
    else:
        raise ValueError(f"unknown engine {engine!r}")
    wall = time.perf_counter() - t0
    z_up, z_lb = best["z_up"], max(best["z_lb"], 1.0)
    if not math.isfinite(z_up):
        raise NumericalFailure("no feasible primal point was recovered")
    s_up, s_lb = _sn_from_z(z_up), _sn_from_z(z_lb)
    rho_state = None
    if best["rho"] is not None:
        rho_state = TwoModeState(
            best["rho"].astype(complex), prob.n_max, NORMAL, validate=False
        )
    return SdpSolution(
        z=z_up, s_n=s_up, z_lb=z_lb, s_n_lb=s_lb,
        dual_gap=max(s_up - s_lb, 0.0),
        iterations=iters, status=status, rho=rho_state,
        history=history if record_history else None,
        wall_time=wall,
    )


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    K: int
    n_max: int
    tol: float
    rows: list

    COLUMNS = ("theta", "p_target", "z", "s_n", "dual_gap", "status",
               "iterations", "wall_time")

    def monotonicity_violations(self, slack: float = 1e-6) -> list:
        """Certified values should not decrease along theta or p.

        Compares lower-bounded values against upper values so solver gaps
        cannot produce spurious reports.
        """
        ok_rows = [r for r in self.rows if r["status"] in ("optimal", "max-iter")]
        out = []
        by_theta = {}
        by_p = {}
        for r in ok_rows:
            by_theta.setdefault(round(r["theta"], 12), []).append(r)
            by_p.setdefault(round(r["p_target"], 12), []).append(r)
        for key, rows in by_theta.items():
            rows = sorted(rows, key=lambda r: r["p_target"])
            for a, b in zip(rows, rows[1:]):
                if (b["s_n"] - b["dual_gap"]) < (a["s_n"] - a["dual_gap"]) - (
                    a["dual_gap"] + b["dual_gap"] + slack
                ):
                    out.append(("p", key, a["p_target"], b["p_target"]))
        for key, rows in by_p.items():
            rows = sorted(rows, key=lambda r: r["theta"])
            for a, b in zip(rows, rows[1:]):
                if (b["s_n"] - b["dual_gap"]) < (a["s_n"] - a["dual_gap"]) - (
                    a["dual_gap"] + b["dual_gap"] + slack
                ):
                    out.append(("theta", key, a["theta"], b["theta"]))
        return out

    def to_csv(self, include_timing: bool = False) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            wall = f"{r['wall_time']:.3f}" if include_timing else "0.000"
            lines.append(
                f"{r['theta']:.12g},{r['p_target']:.12g},{r['z']:.12g},"
                f"{r['s_n']:.12g},{r['dual_gap']:.12g},{r['status']},"
                f"{r['iterations']},{wall}"
            )
        return "\n".join(lines) + "\n"


def _solve_cell(args):
    K, n_max, theta, p, tol, engine = args
    try:
        problem = build_problem(K, theta, p, n_max)
        sol = solve(problem, tol=tol, engine=engine)
        return {
            "theta": theta, "p_target": p, "z": sol.z, "s_n": sol.s_n,
            "dual_gap": sol.dual_gap, "status": sol.status,
            "iterations": sol.iterations, "wall_time": sol.wall_time,
        }
    except InfeasibleTarget:
        return {
            "theta": theta, "p_target": p, "z": float("nan"),
            "s_n": float("nan"), "dual_gap": float("nan"),
            "status": "infeasible", "iterations": 0, "wall_time": 0.0,
        }
    except NumericalFailure:
        return {
            "theta": theta, "p_target": p, "z": float("nan"),
            "s_n": float("nan"), "dual_gap": float("nan"),
            "status": "failed", "iterations": 0, "wall_time": 0.0,
        }


def sweep(
    theta_grid,
    p_grid,
    K: int,
    n_max: int,
    tol: float = 1e-7,
    engine: str = "auto",
    threads: int = 1,
) -> SweepResult:
    """One certification solve per grid point; failures recorded per cell."""
    jobs = [
        (K, n_max, float(th), float(p), tol, engine)
        for th in theta_grid for p in p_grid
    ]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_solve_cell, jobs))
    else:
        rows = [_solve_cell(j) for j in jobs]
    return SweepResult(K=K, n_max=n_max, tol=tol, rows=rows)


def truncation_study(K: int, theta: float, n_list, tol: float = 1e-7,
                     engine: str = "auto") -> list:
    """Certified minimum entanglement of maximally violating states per n.

    For each truncation the target is the top eigenvalue of the protocol
    operator there, which lands on the eigenspace face.
    """
    rows = []
    for n in n_list:
        p_max, _ = max_score(K, n)
        try:
            problem = build_problem(K, theta, p_max, n)
            sol = solve(problem, tol=tol, engine=engine)
            rows.append({
                "n_max": int(n), "p_target": p_max, "z": sol.z, "s_n": sol.s_n,
                "dual_gap": sol.dual_gap, "status": sol.status,
                "iterations": sol.iterations,
            })
        except (InfeasibleTarget, NumericalFailure) as exc:
            rows.append({
                "n_max": int(n), "p_target": p_max, "z": float("nan"),
                "s_n": float("nan"), "dual_gap": float("nan"),
                "status": type(exc).__name__, "iterations": 0,
            })
    return rows
