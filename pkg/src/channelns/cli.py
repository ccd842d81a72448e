"""Command-line interface: run, verify, calibrate, report.

Exit codes: 0 success, 2 configuration / usage error, 3 numerical abort,
4 verification failure. Every CSV/JSON artifact embeds the tool version and,
for runs, the config hash; identical config + seed reproduce artifacts
byte-for-byte.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__, estimates
from .config import ConfigError, load_config
from .fields import read_checkpoint, sobolev_norm, write_checkpoint
from .grid import make_grid
from .inequalities import (
    EnsembleSpec,
    calibrate_constant,
    ensemble_report,
    ibp_identity_check,
)
from .fields import random_field
from .solver import CflError, SolverAbort, build_forcing, build_initial, run
from .stokes import vnorm_gradient_ratio

VERIFY_SUITES = {
    "gn2d": ["gn2d"],
    "sobolev3d": ["sobolev3d"],
    "poincare": ["poincare_gradient", "poincare_stokes"],
    "minkowski": ["minkowski"],
    "lemma1": ["lemma1", "nl1"],
    "aniso_l6": ["aniso_l6"],
    "eee": ["eee1", "eee2", "eee3", "agmon_slice"],
}

_TRAJ_CONSTANT_KEYS = ("k1", "decay_l2", "decay_l22", "diff_ineq_dh", "diff_ineq_v")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _dump_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_outdir(cfg_dir, override):
    outdir = override or os.environ.get("CHANNELNS_OUTDIR") or cfg_dir
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _load_constants(cfg):
    mode = cfg.constants["mode"]
    constants = {k: 1.0 for k in _TRAJ_CONSTANT_KEYS}
    if mode == "unit":
        return constants
    if mode == "user":
        values = cfg.constants["values"]
    else:
        with open(cfg.constants["file"]) as fh:
            values = json.load(fh).get("constants", {})
    for key, val in values.items():
        if key not in constants:
            raise ConfigError(f"unknown constant {key!r} (expected one of {_TRAJ_CONSTANT_KEYS})")
        constants[key] = float(val)
    return constants


def cmd_run(args):
    cfg = load_config(args.config)
    outdir = _resolve_outdir(cfg.output["dir"], args.outdir)
    g = cfg.grid
    grid = make_grid(g["nx"], g["ny"], g["nz"], g["px"], g["py"], g["L"])
    seed = cfg.solver["seed"]

    if cfg.initial["checkpoint"]:
        u0, _ = read_checkpoint(cfg.initial["checkpoint"], grid, divergence_free=True, no_slip=True)
    else:
        u0 = build_initial(grid, cfg.initial["family"], cfg.initial["params"], seed)
    if cfg.forcing["checkpoint"]:
        from .solver import SteadyForcing

        f_field, _ = read_checkpoint(cfg.forcing["checkpoint"], grid)
        forcing = SteadyForcing(f_field)
    else:
        forcing = build_forcing(grid, cfg.forcing["family"], cfg.forcing["params"], seed)
    constants = _load_constants(cfg)

    from .solver import SolverConfig

    scfg = SolverConfig(
        dt=cfg.solver["dt"],
        t_end=cfg.solver["t_end"],
        scheme=cfg.solver["scheme"],
        dealias=cfg.solver["dealias"],
        cfl_safety=cfg.solver["cfl_safety"],
        adaptive_dt=cfg.solver["adaptive_dt"],
        output_every=cfg.output["every"],
    )
    chk_every = cfg.output["checkpoint_every"]
    chk_dir = os.path.join(outdir, "checkpoints")
    if chk_every:
        os.makedirs(chk_dir, exist_ok=True)
    counter = {"n": 0}

    def on_record(state, rec):
        if chk_every and counter["n"] % chk_every == 0:
            write_checkpoint(
                os.path.join(chk_dir, f"chk_{state.step_index:08d}.fld"), state.u, state.t
            )
        counter["n"] += 1

    header = [f"channelns {__version__}", f"config_hash {cfg.config_hash()}"]
    csv_path = os.path.join(outdir, "diagnostics.csv")
    try:
        final_state, traj = run(u0, cfg.solver["nu"], scfg, forcing=forcing, on_record=on_record)
    except SolverAbort as err:
        if err.trajectory is not None:
            err.trajectory.write_csv(csv_path, header)
        if err.state is not None:
            os.makedirs(chk_dir, exist_ok=True)
            write_checkpoint(os.path.join(chk_dir, "last_good.fld"), err.state.u, err.state.t)
        print(f"error: {err}", file=sys.stderr)
        return 3
    except CflError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3

    traj.write_csv(csv_path, header)
    write_checkpoint(os.path.join(outdir, "final.fld"), final_state.u, final_state.t)

    F = max(traj.meta["F_sampled"], 0.0)
    big_l = g["L"]
    nu = cfg.solver["nu"]
    sup_crit = float(np.max(traj.column("crit")))
    u0_l2 = math.sqrt(traj.records[0].E)
    u0_h1 = sobolev_norm(u0, 1)
    k1 = estimates.bound_k1(F, big_l, nu, traj.meta["t_end"], u0_l2, constants["k1"])
    k2 = estimates.bound_k2(k1, traj.meta["t_end"], sup_crit, u0_h1, F)
    k_final = estimates.bound_k_final(k1, k2, u0_h1, F)

    reports = {}
    held = []
    if cfg.monitors["k1_bound"]:
        rep = estimates.k1_bound_check(traj, F, big_l, C=constants["k1"])
        reports["k1"] = rep.as_dict()
        held.append(rep.details["violations"] == 0)
    if cfg.monitors["decay_bounds"]:
        rep_e, rep_i = estimates.decay_bound_check(traj, F, big_l, C=constants["decay_l2"])
        reports["decay_l2"] = rep_e.as_dict()
        reports["decay_l22"] = rep_i.as_dict()
        held += [rep_e.details["violations"] == 0, rep_i.details["violations"] == 0]
    if cfg.monitors["diff_ineqs"] and len(traj.records) >= 3:
        rep_a, rep_b = estimates.diff_ineq_monitor(
            traj, F, C=(constants["diff_ineq_dh"], constants["diff_ineq_v"])
        )
        reports["diff_ineq_dh"] = rep_a.as_dict()
        reports["diff_ineq_v"] = rep_b.as_dict()
        held += [
            rep_a.details["fraction_held"] >= 0.99,
            rep_b.details["fraction_held"] >= 0.99,
        ]
    if cfg.monitors["energy_budget"]:
        resid, rep = estimates.energy_budget(traj)
        reports["energy_budget"] = rep.as_dict()

    all_held = bool(all(held)) if held else True
    bounds = {
        "_meta": {"version": __version__, "config_hash": cfg.config_hash()},
        "F": F,
        "sup_crit": sup_crit,
        "u0_l2": u0_l2,
        "u0_h1": u0_h1,
        "K1": k1,
        "K2": k2,
        "K": k_final,
        "constants": constants,
        "vnorm_equivalence": vnorm_gradient_ratio(final_state.u)
        if traj.records[-1].E > 0
        else None,
        "reports": reports,
        "all_bounds_held": all_held,
    }
    _dump_json(os.path.join(outdir, "bounds.json"), bounds)
    print(
        f"sup|grad w_tilde|_2 = {sup_crit:.6e}; bounds held: {'yes' if all_held else 'NO'}"
    )
    return 0


def _verify_grid(args):
    return make_grid(args.nx, args.ny, args.nz, 2 * math.pi, 2 * math.pi, args.L)


def _summary_rows(reports):
    rows = []
    for rep in reports:
        const = rep.calibrated if rep.calibrated is not None else rep.extreme_ratio
        if rep.id == "minkowski":
            viol = rep.violations_at(1.0)
        else:
            viol = rep.violations_at(const)
        rows.append((rep.id, rep.n_samples, rep.sup_ratio, const, viol))
    return rows


def _write_summary_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("id,n,sup_ratio,calibrated_C,violations\n")
        for rid, n, sup, const, viol in rows:
            fh.write(f"{rid},{n},{sup!r},{const!r},{viol}\n")


def cmd_verify(args):
    grid = _verify_grid(args)
    outdir = _resolve_outdir(args.out, None)
    spec = EnsembleSpec(seed=args.seed, count=args.n, decay=args.decay, kmax=args.kmax, mz=args.mz)
    suites = list(VERIFY_SUITES) + ["ibp"] if args.suite == "all" else [args.suite]
    failed = False
    reports = []
    payload = {"_meta": {"version": __version__, "seed": args.seed, "n": args.n}}
    for suite in suites:
        if suite == "ibp":
            worst = 0.0
            mismatches = []
            for i in range(args.n):
                u = random_field(
                    grid,
                    [args.seed, i],
                    decay=spec.decay,
                    flags=("divergence_free", "no_slip"),
                    kmax=spec.kmax,
                    mz=spec.mz,
                )
                rep = ibp_identity_check(u)
                mismatches.append(rep.rel_mismatch)
                worst = max(worst, rep.rel_mismatch)
            payload["ibp"] = {"max_rel_mismatch": worst, "mismatches": mismatches, "tol": args.tol}
            print(f"ibp: max relative mismatch {worst:.3e} over {args.n} samples")
            if worst > args.tol:
                failed = True
            continue
        for verifier in VERIFY_SUITES[suite]:
            rep = ensemble_report(grid, verifier, spec)
            reports.append(rep)
            payload[verifier] = rep.as_dict()
            print(
                f"{verifier}: n={rep.n_samples} degenerate={rep.degenerate_count} "
                f"sup_ratio={rep.sup_ratio:.6g} inf_ratio={rep.inf_ratio:.6g}"
            )
            if verifier == "minkowski" and rep.violations_at(1.0) > 0:
                failed = True
    _dump_json(os.path.join(outdir, f"verify_{args.suite}.json"), payload)
    if reports:
        _write_summary_csv(os.path.join(outdir, "inequality_summary.csv"), _summary_rows(reports))
    return 4 if failed else 0


def cmd_calibrate(args):
    grid = _verify_grid(args)
    spec = EnsembleSpec(seed=args.seed, count=args.n, decay=args.decay, kmax=args.kmax, mz=args.mz)
    constants = {}
    reports = []
    if args.suite == "trajectory":
        if not args.config:
            print("error: calibrate --suite trajectory needs --config", file=sys.stderr)
            return 2
        cfg = load_config(args.config)
        g = cfg.grid
        run_grid = make_grid(g["nx"], g["ny"], g["nz"], g["px"], g["py"], g["L"])
        u0 = build_initial(run_grid, cfg.initial["family"], cfg.initial["params"], cfg.solver["seed"])
        forcing = build_forcing(run_grid, cfg.forcing["family"], cfg.forcing["params"], cfg.solver["seed"])
        from .solver import SolverConfig

        scfg = SolverConfig(
            dt=cfg.solver["dt"], t_end=cfg.solver["t_end"], output_every=cfg.output["every"]
        )
        _, traj = run(u0, cfg.solver["nu"], scfg, forcing=forcing)
        constants = estimates.calibrate_trajectory_constants(traj, traj.meta["F_sampled"], g["L"])
    else:
        suites = list(VERIFY_SUITES) if args.suite == "all" else [args.suite]
        for suite in suites:
            for verifier in VERIFY_SUITES[suite]:
                try:
                    c, rep = calibrate_constant(grid, verifier, spec)
                except ValueError as err:
                    print(f"error: {err}", file=sys.stderr)
                    return 2
                constants[verifier] = c
                reports.append(rep)
                print(f"{verifier}: calibrated constant {c:.6g} (raw {rep.extreme_ratio:.6g})")
    payload = {
        "_meta": {"version": __version__, "seed": args.seed, "n": args.n, "suite": args.suite},
        "constants": constants,
    }
    _dump_json(args.out, payload)
    return 0


def cmd_report(args):
    csv_path = os.path.join(args.indir, "diagnostics.csv")
    bounds_path = os.path.join(args.indir, "bounds.json")
    names = None
    rows = []
    with open(csv_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if names is None:
                names = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    data = {name: np.array([r[i] for r in rows]) for i, name in enumerate(names)}
    print(f"{'column':>10} {'min':>14} {'max':>14} {'final':>14}")
    for name in names:
        col = data[name]
        print(f"{name:>10} {col.min():>14.6e} {col.max():>14.6e} {col[-1]:>14.6e}")
    payload = {"columns": {k: v for k, v in data.items()}}
    if os.path.exists(bounds_path):
        with open(bounds_path) as fh:
            bounds = json.load(fh)
        payload["bounds"] = bounds
        print(f"sup|grad w_tilde|_2 = {bounds['sup_crit']:.6e}")
        print(f"K1 = {bounds['K1']:.6e}  K2 = {bounds['K2']:.6e}  K = {bounds['K']:.6e}")
        for name, rep in sorted(bounds.get("reports", {}).items()):
            status = "held" if rep.get("held", True) else "VIOLATED"
            print(f"  {name}: margin {rep.get('margin', float('nan')):.3e} ({status})")
        print(f"all bounds held: {'yes' if bounds['all_bounds_held'] else 'NO'}")
    _dump_json(os.path.join(args.indir, "report.json"), payload)
    return 0


def _add_grid_args(p, nz_default=33):
    p.add_argument("--nx", type=int, default=16)
    p.add_argument("--ny", type=int, default=16)
    p.add_argument("--nz", type=int, default=nz_default)
    p.add_argument("--L", type=float, default=1.0)


def _add_ensemble_args(p, n_default):
    p.add_argument("--n", type=int, default=n_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--decay", type=float, default=4.0)
    p.add_argument("--kmax", type=int, default=None)
    p.add_argument("--mz", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="channelns",
        description="Channel-flow spectral solver with regularity diagnostics "
        "and inequality verifiers",
    )
    parser.add_argument("--version", action="version", version=f"channelns {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a configured flow and monitor bounds")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--outdir", default=None, help="override output.dir")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run inequality / identity verifiers")
    p_ver.add_argument(
        "--suite", required=True, choices=sorted(VERIFY_SUITES) + ["all", "ibp"]
    )
    _add_ensemble_args(p_ver, 100)
    _add_grid_args(p_ver)
    p_ver.add_argument("--tol", type=float, default=1e-6, help="ibp mismatch tolerance")
    p_ver.add_argument("--out", default="out")
    p_ver.set_defaults(func=cmd_verify)

    p_cal = sub.add_parser("calibrate", help="calibrate inequality or trajectory constants")
    p_cal.add_argument(
        "--suite", required=True, choices=sorted(VERIFY_SUITES) + ["all", "trajectory"]
    )
    _add_ensemble_args(p_cal, 200)
    _add_grid_args(p_cal)
    p_cal.add_argument("--config", default=None, help="run config for --suite trajectory")
    p_cal.add_argument("--out", default="constants.json")
    p_cal.set_defaults(func=cmd_calibrate)

    p_rep = sub.add_parser("report", help="summarize the artifacts of a run directory")
    p_rep.add_argument("--in", dest="indir", required=True)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
