import math

import numpy as np
import pytest

from oscwit.errors import InfeasibleTarget
from oscwit.fock import NORMAL, PHYSICAL, TwoModeState, embed_state, log_negativity
from oscwit.modes import fold_theta, transform_state
from oscwit.protocol import max_score
from oscwit.sdp import SweepResult, build_problem, solve, sweep, truncation_study

rng = np.random.default_rng(7)


def random_normal_density(n_max):
    d = (n_max + 1) ** 2
    m = rng.normal(size=(d, d))
    m = m @ m.T
    return m / np.trace(m)


class TestBuild:
    def test_half_always_feasible(self):
        for n in (0, 1, 2, 3):
            prob = build_problem(3, 0.3 if n >= 3 else 0.0, 0.5, n)
            assert prob.p_target == 0.5

    def test_infeasible_target(self):
        with pytest.raises(InfeasibleTarget):
            build_problem(3, np.pi / 4, 0.68, 3)
        with pytest.raises(InfeasibleTarget):
            build_problem(3, np.pi / 4, 0.55, 2)

    def test_q_vec_expansion_identity(self):
        # tr(rho Q) = 1/2 + x . q for any unit-trace state
        prob = build_problem(3, 0.7, 0.6, 3)
        for _ in range(20):
            rho = random_normal_density(3)
            x = prob.expansion_coefficients(rho)
            assert prob.score_of(rho) == pytest.approx(
                0.5 + float(x @ prob.q_vec), abs=1e-10
            )

    def test_phi_preserves_trace_and_is_isometry(self):
        prob = build_problem(3, 0.5, 0.5, 2)
        ds = prob.small_dim
        r = rng.normal(size=(ds, ds))
        r = r + r.T
        out = prob.phi(r)
        assert np.trace(out) == pytest.approx(np.trace(r), abs=1e-12)
        assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(r), abs=1e-10)


class TestSolve:
    def test_theta_zero_never_certifies(self):
        for p in (0.55, 0.6, 0.66):
            sol = solve(build_problem(3, 0.0, p, 3), tol=1e-7)
            assert sol.s_n <= sol.dual_gap + 1e-12
            assert not sol.certified

    def test_half_target_separable(self):
        sol = solve(build_problem(3, np.pi / 4, 0.5, 3), tol=1e-7)
        assert sol.s_n <= sol.dual_gap + 1e-12
        assert not sol.certified

    def test_certified_positive_at_high_score(self):
        # frozen by solver cross-checks at n = 2..4; see the n=4 value below
        sol = solve(build_problem(3, np.pi / 4, 0.66, 3), tol=1e-7)
        assert sol.certified
        assert sol.s_n - sol.dual_gap > 0.6
        assert sol.s_n == pytest.approx(0.661655, abs=5e-4)

    def test_value_shrinks_with_truncation_headroom(self):
        # same score target, one more level per mode: minimum entanglement
        # can only drop
        s3 = solve(build_problem(3, np.pi / 4, 0.65, 3), tol=1e-6)
        s4 = solve(build_problem(3, np.pi / 4, 0.65, 4), tol=1e-6)
        assert s4.s_n <= s3.s_n + s3.dual_gap + s4.dual_gap + 1e-6
        assert s4.certified

    def test_weak_duality_along_iterates(self):
        sol = solve(build_problem(3, np.pi / 4, 0.62, 3), tol=1e-7,
                    record_history=True)
        assert sol.history
        for z_up, z_lb in sol.history:
            assert z_up >= z_lb - 1e-12

    def test_symmetry_reduction_matches_full(self):
        for (theta, p, n) in [(np.pi / 4, 0.64, 3), (0.45, 0.58, 3)]:
            red = solve(build_problem(3, theta, p, n, symmetry_reduction=True),
                        tol=1e-6)
            full = solve(build_problem(3, theta, p, n, symmetry_reduction=False),
                         tol=1e-6)
            tol = red.dual_gap + full.dual_gap + 1e-9
            assert abs(red.s_n - full.s_n) <= max(tol, 1e-6)

    def test_folded_angle_agrees(self):
        theta = 1.0  # beyond pi/4; folds to pi/2 - 1
        folded = fold_theta(theta)
        assert folded == pytest.approx(math.pi / 2 - 1.0)
        a = solve(build_problem(3, theta, 0.64, 3), tol=1e-7)
        b = solve(build_problem(3, folded, 0.64, 3), tol=1e-7)
        assert a.s_n == pytest.approx(b.s_n, abs=a.dual_gap + b.dual_gap + 1e-6)

    def test_max_iter_reports_honest_gap(self):
        sol = solve(build_problem(3, np.pi / 4, 0.64, 3), tol=1e-12, max_iters=4)
        assert sol.status == "max-iter"
        assert sol.z >= sol.z_lb - 1e-12
        assert sol.dual_gap > 0

    def test_first_order_engine_agrees(self):
        ipm = solve(build_problem(3, np.pi / 4, 0.66, 3), tol=1e-7)
        pdhg = solve(build_problem(3, np.pi / 4, 0.66, 3), tol=1e-4,
                     engine="first-order")
        assert abs(pdhg.s_n - ipm.s_n) <= pdhg.dual_gap + ipm.dual_gap + 1e-9
        assert pdhg.certified


class TestReconstruction:
    def test_minimizer_consistency(self):
        prob = build_problem(3, np.pi / 4, 0.64, 3)
        sol = solve(prob, tol=1e-7)
        rho = sol.rho.matrix.real
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)
        assert prob.score_of(rho) == pytest.approx(0.64, abs=1e-7)
        assert np.linalg.eigvalsh((rho + rho.T) / 2.0)[0] >= -1e-8
        # independent quantifier evaluation dominates the certified bound;
        # the rotation is exact only with doubled cutoff headroom
        state = TwoModeState(rho.astype(complex), 3, NORMAL, validate=False)
        doubled = embed_state(state, 6)
        physical = transform_state(doubled, np.pi / 4, PHYSICAL)
        sn_direct = log_negativity(
            TwoModeState(physical.matrix, 6, PHYSICAL, validate=False)
        )
        assert sn_direct >= sol.s_n - sol.dual_gap - 1e-9
        assert sn_direct == pytest.approx(sol.s_n, abs=1e-6)

    def test_expansion_roundtrip(self):
        prob = build_problem(3, 0.4, 0.5, 2)
        rho = random_normal_density(2)
        x = prob.expansion_coefficients(rho)
        d = prob.small_dim
        recon = np.eye(d) / d
        idx = 0
        b = prob.basis_small.elements
        for j in range(len(b)):
            for k in range(len(b)):
                if j == 0 and k == 0:
                    continue
                recon = recon + x[idx] * np.kron(b[j], b[k]).real
                idx += 1
        assert np.max(np.abs(recon - rho)) < 1e-10


class TestFaceTargets:
    def test_max_score_target_certifies(self):
        p3, _ = max_score(3, 3)
        sol = solve(build_problem(3, np.pi / 4, p3, 3), tol=1e-7)
        assert sol.certified
        # frozen: only maximally violating (rotated product) states attain
        # the top score, and they carry about 0.729 nats
        assert sol.s_n == pytest.approx(0.7292, abs=1e-3)

    def test_below_first_coupling_is_separable(self):
        sol = solve(build_problem(3, np.pi / 4, 0.5, 2), tol=1e-7)
        assert sol.s_n <= sol.dual_gap


class TestSweep:
    def test_small_grid(self):
        res = sweep([0.0, np.pi / 4], [0.5, 0.62], 3, 3, tol=1e-6)
        assert len(res.rows) == 4
        by = {(round(r["theta"], 6), r["p_target"]): r for r in res.rows}
        assert by[(0.0, 0.5)]["s_n"] <= by[(0.0, 0.5)]["dual_gap"]
        assert by[(0.0, 0.62)]["s_n"] <= by[(0.0, 0.62)]["dual_gap"]
        hot = by[(round(np.pi / 4, 6), 0.62)]
        assert hot["s_n"] - hot["dual_gap"] > 0.3
        assert res.monotonicity_violations() == []

    def test_infeasible_cells_recorded(self):
        res = sweep([0.0], [0.5, 0.9], 3, 2, tol=1e-6)
        status = {r["p_target"]: r["status"] for r in res.rows}
        assert status[0.5] == "optimal"
        assert status[0.9] == "infeasible"

    def test_threaded_sweep_matches_serial(self):
        grid = ([0.0, np.pi / 4], [0.5, 0.6])
        serial = sweep(grid[0], grid[1], 3, 3, tol=1e-6, threads=1)
        threaded = sweep(grid[0], grid[1], 3, 3, tol=1e-6, threads=2)
        for a, b in zip(serial.rows, threaded.rows):
            assert (a["theta"], a["p_target"], a["status"]) == (
                b["theta"], b["p_target"], b["status"]
            )
            assert a["s_n"] == pytest.approx(
                b["s_n"], abs=a["dual_gap"] + b["dual_gap"] + 1e-9
            )

    def test_csv_deterministic(self):
        res = sweep([0.0], [0.5], 3, 2, tol=1e-6)
        assert res.to_csv() == res.to_csv()
        header = res.to_csv().splitlines()[0]
        assert header.split(",") == list(SweepResult.COLUMNS)
        # timing column is zeroed unless explicitly requested
        assert res.to_csv().splitlines()[1].endswith(",0.000")


class TestTruncationStudy:
    def test_rows(self):
        rows = truncation_study(3, np.pi / 4, [1, 2, 3, 4], tol=1e-6)
        by = {r["n_max"]: r for r in rows}
        # below the first protocol coupling the top score is 1/2 and the
        # vacuum attains it: no entanglement
        assert by[1]["p_target"] == pytest.approx(0.5)
        assert by[1]["s_n"] <= by[1]["dual_gap"]
        assert by[2]["s_n"] <= by[2]["dual_gap"]
        # at the coupling the maximally violating face is entangled; within
        # a plateau of the top score the certified minimum relaxes as the
        # space grows (frozen solver values, cross-checked at tol 1e-7)
        assert by[3]["p_target"] == pytest.approx(0.662867503968, abs=1e-10)
        assert by[4]["p_target"] == pytest.approx(by[3]["p_target"], abs=1e-12)
        assert by[3]["s_n"] == pytest.approx(0.7292, abs=1e-3)
        assert by[4]["s_n"] == pytest.approx(0.6981, abs=1e-3)
        assert by[4]["s_n"] < by[3]["s_n"]
