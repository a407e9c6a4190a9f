"""Command-line harness: reproducible scenario runs with manifests.

Subcommands: bounds, simulate, certify, compare, witness.  Every run
resolves its configuration (JSON file over built-in defaults, unknown keys
rejected), executes deterministically for a given seed, and writes the
outputs plus a manifest sufficient to reproduce them byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classical import (
    ClassicalDistribution,
    bimodal,
    gaussian_cloud,
    point_mass,
    ring,
    simulate_classical_score,
    uniform_box,
)
from .criteria import (
    abiuso_margin,
    duan_detects,
    family_state,
    hillery_zubairy_detects,
    moments,
    zhang_detects,
)
from .errors import ConfigError, NumericalFailure, OscwitError, UnstableStep
from .fock import NORMAL, PHYSICAL, TwoModeState, log_negativity
from .modes import normal_mode_params
from .protocol import ProtocolSpec, classical_bound, max_score, score_state
from .sdp import sweep
from .witness import (
    coherent_expectation,
    coherent_witness_erf,
    nondecomposability_check,
    optimality_probe,
)


def _resolve_config(defaults: dict, path: str | None, overrides: dict) -> dict:
    cfg = dict(defaults)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, val in overrides.items():
        if val is not None:
            if key not in defaults:
                raise ConfigError(f"unknown override {key}")
            cfg[key] = val
    return cfg


def _write_manifest(out_dir: Path, command: str, cfg: dict, outputs: list) -> None:
    manifest = {
        "command": command,
        "config": cfg,
        "code_version": __version__,
        "outputs": sorted(outputs),
    }
    path = out_dir / f"{command}_manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _distribution_from_config(spec: dict) -> ClassicalDistribution:
    kinds = {
        "gaussian": lambda p: gaussian_cloud(
            p.get("scale", 1.0), tuple(p.get("center", (0.0, 0.0, 0.0, 0.0)))
        ),
        "point": lambda p: point_mass(
            p.get("x1", 1.0), p.get("p1", 0.0), p.get("x2", 1.0), p.get("p2", 0.0)
        ),
        "ring": lambda p: ring(p.get("radius", 1.0)),
        "bimodal": lambda p: bimodal(p.get("offset", 1.5), p.get("scale", 0.3)),
        "uniform": lambda p: uniform_box(p.get("half_width", 1.0)),
    }
    kind = spec.get("kind")
    if kind not in kinds:
        raise ConfigError(f"unknown distribution kind {kind!r}")
    params = {k: v for k, v in spec.items() if k != "kind"}
    allowed = {
        "gaussian": {"scale", "center"}, "point": {"x1", "p1", "x2", "p2"},
        "ring": {"radius"}, "bimodal": {"offset", "scale"},
        "uniform": {"half_width"},
    }[kind]
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"unknown distribution keys for {kind}: {sorted(unknown)}")
    return kinds[kind](params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_bounds(args) -> int:
    defaults = {"k_list": [2, 3, 4, 5], "n_max": 30}
    cfg = _resolve_config(defaults, args.config, {})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["K,classical_bound,classical_bound_float,quantum_max_truncated,n_max"]
    print(f"{'K':>3} {'classical':>12} {'quantum max':>14}  (truncation {cfg['n_max']})")
    for k in cfg["k_list"]:
        bound = classical_bound(int(k))
        p_max, _ = max_score(int(k), int(cfg["n_max"]))
        print(f"{k:>3} {str(bound):>12} {p_max:>14.9f}")
        lines.append(
            f"{k},{bound},{float(bound):.12g},{p_max:.12g},{cfg['n_max']}"
        )
    (out_dir / "bounds.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out_dir, "bounds", cfg, ["bounds.csv"])
    return 0


SIMULATE_DEFAULTS = {
    "distribution": {"kind": "gaussian", "scale": 1.0},
    "m1": 1.0, "m2": 1.0, "omega1": 1.0, "omega2": 1.0, "g": 0.0,
    "theta": 0.7853981633974483,  # pi/4; used only when the angle is free
    "K": 3, "sigma": "+", "t0": 0.0,
    "n_rounds": 100000, "n_seeds": 1, "seed": 1,
}


def cmd_simulate(args) -> int:
    cfg = _resolve_config(SIMULATE_DEFAULTS, args.config,
                          {"seed": args.seed})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dist = _distribution_from_config(cfg["distribution"])
    try:
        spec = normal_mode_params(
            cfg["m1"], cfg["m2"], cfg["omega1"], cfg["omega2"], cfg["g"],
        )
    except OscwitError:
        spec = normal_mode_params(
            cfg["m1"], cfg["m2"], cfg["omega1"], cfg["omega2"], cfg["g"],
            theta=cfg["theta"],
        )
    protocol = ProtocolSpec(int(cfg["K"]), cfg["sigma"], cfg["t0"])
    records = []
    for i in range(int(cfg["n_seeds"])):
        seed = int(cfg["seed"]) + i
        est = simulate_classical_score(dist, spec, protocol,
                                       int(cfg["n_rounds"]), seed)
        records.append({
            "descriptor": dist.descriptor, "K": protocol.K,
            "theta": spec.theta, "seed": seed,
            "n_rounds": int(cfg["n_rounds"]),
            "p_value": est.p_value, "stderr": est.stderr,
            "counts": [list(c) for c in est.counts],
        })
        bound = float(classical_bound(protocol.K))
        flag = "" if est.p_value <= bound + 4 * est.stderr else "  <-- BOUND EXCEEDED"
        print(f"seed={seed}: p={est.p_value:.6f} (stderr {est.stderr:.2g}, "
              f"classical bound {bound:.6f}){flag}")
    (out_dir / "simulate.json").write_text(
        json.dumps(records, sort_keys=True, indent=1) + "\n"
    )
    _write_manifest(out_dir, "simulate", cfg, ["simulate.json"])
    return 0


CERTIFY_DEFAULTS = {
    "K": 3, "n_max": 3,
    "theta_grid": None,  # defaults to 5 angles in [0, pi/4]
    "p_grid": None,      # defaults to 5 scores across the feasible range
    "tol": 1e-6, "engine": "auto", "threads": 1, "record_timing": False,
}


def cmd_certify(args) -> int:
    cfg = _resolve_config(CERTIFY_DEFAULTS, args.config, {
        "tol": args.tol, "threads": args.threads,
    })
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    k = int(cfg["K"])
    n_max = int(cfg["n_max"])
    theta_grid = cfg["theta_grid"]
    if theta_grid is None:
        theta_grid = [i * math.pi / 16.0 for i in range(5)]
    p_grid = cfg["p_grid"]
    if p_grid is None:
        # stay clear of the spectral edge, where solves are facial and slow
        p_top, _ = max_score(k, n_max)
        p_hi = 0.5 + 0.9 * (p_top - 0.5)
        p_grid = [0.5 + i * (p_hi - 0.5) / 4.0 for i in range(5)]
    cfg["theta_grid"] = [float(t) for t in theta_grid]
    cfg["p_grid"] = [float(p) for p in p_grid]
    res = sweep(theta_grid, p_grid, k, n_max, tol=float(cfg["tol"]),
                engine=cfg["engine"], threads=int(cfg["threads"]))
    (out_dir / "certify.csv").write_text(
        res.to_csv(include_timing=bool(cfg["record_timing"]))
    )
    violations = res.monotonicity_violations()
    certified = sum(
        1 for r in res.rows
        if r["status"] in ("optimal", "max-iter") and r["s_n"] - r["dual_gap"] > 0
    )
    print(f"{len(res.rows)} cells solved; {certified} certify entanglement")
    print(f"monotonicity violations: {len(violations)}")
    _write_manifest(out_dir, "certify", cfg, ["certify.csv"])
    return 0


COMPARE_DEFAULTS = {
    "K": 3, "theta": 0.7853981633974483, "n_max": 8,
    "states": [
        {"kind": "max_eigenstate"},
        {"kind": "family", "psi": [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]],
         "support_mode": "levels"},
        {"kind": "family", "psi": [[0.7071067811865476, 0.0],
                                   [0.7071067811865476, 0.0]],
         "support_mode": "multiples"},
        {"kind": "vacuum"},
    ],
    "c_grid": None, "kappa_grid": [0.5, 1.0, 2.0], "sigma_grid": [0.5, 1.0, 2.0],
}


def _compare_row(label, state_physical, state_normal, cfg):
    k = int(cfg["K"])
    score = score_state(state_normal, k)
    s_n = log_negativity(state_physical)
    m = moments(state_physical)
    c_grid = cfg["c_grid"]
    _, duan_best, _ = duan_detects(m, c_grid)
    try:
        zh = zhang_detects(m).detected
    except OscwitError:
        zh = False  # simplified test inapplicable (nonzero first moments)
    hz = hillery_zubairy_detects(m).detected
    ab_best = min(
        abiuso_margin(m, float(kp), float(sg))
        for kp in cfg["kappa_grid"] for sg in cfg["sigma_grid"]
    )
    dew = score > float(classical_bound(k))
    return {
        "descriptor": label, "score": score, "s_n": s_n,
        "duan_min_margin": duan_best, "zhang": zh, "hz": hz,
        "abiuso_min_margin": ab_best, "dew": dew,
    }


def cmd_compare(args) -> int:
    cfg = _resolve_config(COMPARE_DEFAULTS, args.config, {})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    k = int(cfg["K"])
    n_max = int(cfg["n_max"])
    theta = float(cfg["theta"])
    rows = []
    for spec in cfg["states"]:
        kind = spec.get("kind")
        if kind == "vacuum":
            d = n_max + 1
            vac = np.zeros(d * d)
            vac[0] = 1.0
            normal = TwoModeState.from_pure(vac, n_max, NORMAL)
            physical = TwoModeState.from_pure(vac, n_max, PHYSICAL)
            rows.append(_compare_row("vacuum", physical, normal, cfg))
            continue
        if kind == "max_eigenstate":
            _, vec = max_score(k, n_max)
            psi = vec
            mode = "levels"
            label = f"max_eigenstate_n{n_max}"
        elif kind == "family":
            psi = np.array([complex(re, im) for re, im in spec["psi"]])
            mode = spec.get("support_mode", "levels")
            label = f"family_{mode}_{len(psi)}"
        else:
            raise ConfigError(f"unknown state kind {kind!r}")
        fs = family_state(psi, K=k, theta=theta, n_max=n_max, support_mode=mode)
        rows.append(_compare_row(label, fs.state_physical, fs.state_normal, cfg))
    header = ("descriptor,score,s_n,duan_min_margin,zhang,hz,"
              "abiuso_min_margin,dew")
    lines = [header]
    for r in rows:
        lines.append(
            f"{r['descriptor']},{r['score']:.12g},{r['s_n']:.12g},"
            f"{r['duan_min_margin']:.12g},{r['zhang']},{r['hz']},"
            f"{r['abiuso_min_margin']:.12g},{r['dew']}"
        )
        print(f"{r['descriptor']:>28}: score={r['score']:.4f} "
              f"S_N={r['s_n']:.4f} duan>{0 if r['duan_min_margin']>0 else '!'}"
              f" zhang={r['zhang']} hz={r['hz']} dew={r['dew']}")
    (out_dir / "compare.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out_dir, "compare", cfg, ["compare.csv"])
    return 0


WITNESS_DEFAULTS = {
    "K": 3, "proj_level": 2, "parent_n_max": None,
    "erf_r_values": [0.0, 0.5, 1.0, 2.0],
    "probe_epsilon": 0.1, "probe_n_max": 40,
}


def cmd_witness(args) -> int:
    cfg = _resolve_config(WITNESS_DEFAULTS, args.config, {})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    k = int(cfg["K"])
    proj = int(cfg["proj_level"])
    parent = cfg["parent_n_max"]
    parent = 2 * proj + 2 if parent is None else int(parent)
    min_eig = nondecomposability_check(k, proj, parent)
    err = 0.0
    for r in cfg["erf_r_values"]:
        err = max(err, abs(coherent_expectation(float(r), K=k)
                           - coherent_witness_erf(float(r), K=k)))
    from .fock import identity_matrix

    probe = identity_matrix(int(cfg["probe_n_max"]), modes=2, basis_tag=NORMAL)
    r_star, probe_value = optimality_probe(probe, float(cfg["probe_epsilon"]), K=k)
    report = {
        "K": k, "proj_level": proj, "parent_truncation": parent,
        "min_eigenvalue": min_eig,
        "erf_check_max_abs_error": err,
        "optimality_probe": {
            "epsilon": float(cfg["probe_epsilon"]),
            "r_star": r_star, "expectation": probe_value,
        },
    }
    print(f"projected partial-transpose minimum eigenvalue: {min_eig:+.6f} "
          f"(level {proj}, parent {parent})")
    print(f"erf closed-form max abs error: {err:.2e}")
    print(f"optimality probe: r={r_star:.2f} gives expectation {probe_value:.3e}")
    (out_dir / "witness.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n"
    )
    _write_manifest(out_dir, "witness", cfg, ["witness.json"])
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oscwit",
        description="Precession-protocol entanglement certification for "
                    "coupled oscillators",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("bounds", cmd_bounds), ("simulate", cmd_simulate),
                     ("certify", cmd_certify), ("compare", cmd_compare),
                     ("witness", cmd_witness)]:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON configuration file")
        p.add_argument("--out", default="oscwit_out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, UnstableStep, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OscwitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
