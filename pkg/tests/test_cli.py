import json
import math
from pathlib import Path

import pytest

from oscwit.cli import main


def run(args):
    return main(args)


class TestBounds:
    def test_table(self, tmp_path, capsys):
        assert run(["bounds", "--out", str(tmp_path)]) == 0
        csv = (tmp_path / "bounds.csv").read_text().splitlines()
        rows = {line.split(",")[0]: line.split(",") for line in csv[1:]}
        assert rows["3"][1] == "2/3"
        assert rows["4"][1] == "1/2"
        assert rows["5"][1] == "3/5"
        assert float(rows["3"][3]) == pytest.approx(0.697334774, abs=1e-8)
        assert (tmp_path / "bounds_manifest.json").exists()


class TestSimulate:
    def test_default_gaussian_within_bound(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_rounds": 20000, "g": 0.3,
                                   "omega1": 1.2, "omega2": 0.9}))
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        rec = json.loads((tmp_path / "simulate.json").read_text())[0]
        assert rec["p_value"] <= 2 / 3 + 4 * rec["stderr"]
        assert rec["descriptor"].startswith("gaussian")

    def test_point_mass_pattern(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "distribution": {"kind": "point", "x1": -1.0, "x2": -1.0},
            "n_rounds": 5000,
        }))
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        rec = json.loads((tmp_path / "simulate.json").read_text())[0]
        # opposite-sign point mass scores 2/3 via the (-,+,+) slot pattern
        signs = ["+" if c[0] else "-" for c in rec["counts"]]
        assert signs == ["-", "+", "+"]
        assert rec["p_value"] == pytest.approx(2 / 3, abs=4 * rec["stderr"] + 1e-12)

    def test_seed_determinism(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_rounds": 4000, "seed": 9}))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(["simulate", "--config", str(cfg), "--out", str(out1)]) == 0
        assert run(["simulate", "--config", str(cfg), "--out", str(out2)]) == 0
        assert (out1 / "simulate.json").read_bytes() == (out2 / "simulate.json").read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_rounds": 2000, "seed": 9}))
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path),
                    "--seed", "123"]) == 0
        rec = json.loads((tmp_path / "simulate.json").read_text())[0]
        assert rec["seed"] == 123
        manifest = json.loads((tmp_path / "simulate_manifest.json").read_text())
        assert manifest["config"]["seed"] == 123

    def test_degenerate_angle_uses_config_theta(self, tmp_path):
        # equal uncoupled oscillators: every angle is a normal-mode choice,
        # so the configured theta must be honored
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "m1": 1.0, "m2": 1.0, "omega1": 1.0, "omega2": 1.0, "g": 0.0,
            "theta": 0.3, "n_rounds": 2000,
        }))
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        rec = json.loads((tmp_path / "simulate.json").read_text())[0]
        assert rec["theta"] == pytest.approx(0.3)


class TestCertify:
    def test_tiny_grid(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "K": 3, "n_max": 2, "theta_grid": [0.0, math.pi / 4],
            "p_grid": [0.5], "tol": 1e-6,
        }))
        assert run(["certify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "certify.csv").read_text().splitlines()
        assert lines[0].startswith("theta,p_target,z,s_n")
        for line in lines[1:]:
            parts = line.split(",")
            assert float(parts[3]) <= float(parts[4]) + 1e-12  # s_n <= gap
            assert parts[7] == "0.000"  # timing zeroed by default
        manifest = json.loads((tmp_path / "certify_manifest.json").read_text())
        assert manifest["config"]["n_max"] == 2

    def test_certifying_cell(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "K": 3, "n_max": 3, "theta_grid": [math.pi / 4],
            "p_grid": [0.66], "tol": 1e-6,
        }))
        assert run(["certify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        row = (tmp_path / "certify.csv").read_text().splitlines()[1].split(",")
        assert float(row[3]) - float(row[4]) > 0.5  # certified entanglement


class TestCompare:
    def test_bundled_states(self, tmp_path):
        assert run(["compare", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "compare.csv").read_text().splitlines()
        rows = {}
        for line in lines[1:]:
            parts = line.split(",")
            rows[parts[0]] = parts
        top = rows["max_eigenstate_n8"]
        assert float(top[1]) > 2 / 3          # protocol score beats the bound
        assert top[7] == "True"               # dynamic witness detects
        assert float(top[3]) > 0              # duan margin positive
        assert top[4] == "False"              # zhang blind
        assert float(top[6]) > 0              # abiuso margin positive
        single = rows["family_levels_4"]
        assert single[5] == "True"            # single-level state: hz detects
        vac = rows["vacuum"]
        assert vac[4] == "False" and vac[5] == "False" and vac[7] == "False"

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"K": 3, "bogus": 1}))
        assert run(["compare", "--config", str(cfg), "--out", str(tmp_path)]) == 2


class TestWitnessCmd:
    def test_report(self, tmp_path):
        assert run(["witness", "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "witness.json").read_text())
        assert rep["K"] == 3 and rep["proj_level"] == 2
        assert rep["erf_check_max_abs_error"] < 1e-8
        assert rep["min_eigenvalue"] == pytest.approx(0.060881, abs=1e-5)
        assert rep["optimality_probe"]["expectation"] < 0


class TestErrors:
    def test_bad_distribution_kind(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"distribution": {"kind": "nope"}}))
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_unreadable_config(self, tmp_path):
        assert run(["simulate", "--config", str(tmp_path / "missing.json"),
                    "--out", str(tmp_path)]) == 2

    def test_infeasible_grid_cells_do_not_crash(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "K": 3, "n_max": 2, "theta_grid": [0.0],
            "p_grid": [0.5, 0.9], "tol": 1e-6,
        }))
        assert run(["certify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "certify.csv").read_text().splitlines()
        statuses = {l.split(",")[1]: l.split(",")[5] for l in lines[1:]}
        assert statuses["0.9"] == "infeasible"
