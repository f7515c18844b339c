"""Command-line entry points: power, simulate, optimize, sweep, wigner.

Exit codes: 0 success, 2 configuration error, 3 numerical failure. All data
files are deterministic for a fixed configuration; wall-clock metadata lives
only in manifest.json.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
from scipy.constants import hbar

from . import feasibility, io
from .config import ConfigError, RunConfig, parse_config
from .dynamics import DISPLACED, constant_schedule, evolve
from .errors import IntegratorFailureError, KerrBlockadeError, TruncationOverflowError
from .fock import PhaseSpaceGrid, QuantumState, fock_state, vacuum_state, wigner
from .optimize import OptimizerConfig, optimize_initialization
from .protocol import (
    BlockadeParams,
    ErrorSpec,
    ProtocolConfig,
    build_protocol_schedule,
    default_hold_duration,
    derive_blockade_params,
    run_protocol,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _protocol_config(cfg: RunConfig, dim_override=None, errors=None) -> ProtocolConfig:
    p = cfg.protocol
    if errors is None:
        errors = ErrorSpec(delta_alpha=p.delta_alpha, l1_init=p.l1_init_err,
                           l2_init=p.l2_init_err, l1_hold=p.l1_hold_err,
                           l2_hold=p.l2_hold_err)
    return ProtocolConfig(
        tau_init_s=p.tau_init_s,
        l1_fractions=tuple(p.l1_fractions),
        l2_mid_fraction=p.l2_mid_fraction,
        hold_duration_s=p.hold_duration_s,
        scan_to_peak=p.scan_to_peak,
        final_displacement=p.final_displacement,
        lab_dim=dim_override or p.lab_dim,
        displaced_dim=p.displaced_dim,
        eval_window_s=p.eval_window_s,
        errors=errors,
        samples=p.samples,
        rtol=p.rtol,
        atol=p.atol,
    )


def _blockade_params(cfg: RunConfig, kerr=None) -> BlockadeParams:
    if kerr is None:
        kerr = _kerr(cfg)
    if kerr == 0:
        # linear cavity: no blockade working point, drives relax to zero and
        # the protocol reduces to displacement + decay
        return BlockadeParams(kerr=0.0, alpha=complex(cfg.blockade.alpha),
                              n=cfg.blockade.n, kappa=cfg.cavity.kappa(),
                              l_nl=0.0, l1=0.0, l2=0.0, delta=0.0)
    return derive_blockade_params(kerr, cfg.blockade.alpha, cfg.blockade.n,
                                  cfg.cavity.kappa(), omega_c=cfg.cavity.omega_rad_s)


def _kerr(cfg: RunConfig) -> float:
    mode = feasibility.CavityMode(cfg.cavity.omega_rad_s, cfg.cavity.q_factor,
                                  cfg.cavity.kappa_rad_s, veff_m3=cfg.cavity.veff_m3,
                                  vmode_m3=cfg.cavity.vmode_m3)
    return feasibility.kerr_strength(mode, feasibility.MaterialParams(
        cfg.material.chi3_m2_v2, cfg.material.epsilon_r))


def cmd_power(cfg: RunConfig, out_dir: str, config_text: str) -> int:
    cav, mat, blk = cfg.cavity, cfg.material, cfg.blockade
    kappa = cav.kappa()
    kerr = _kerr(cfg)
    beta = feasibility.beta_shortcut(kerr)
    rows = [
        ("omega_rad_s", cav.omega_rad_s, "rad/s", "input"),
        ("kappa_rad_s", kappa, "rad/s",
         "input override" if cav.kappa_rad_s is not None else "omega/Q"),
        ("u_rad_s", kerr, "rad/s", "3*hbar*omega^2*chi3/(4*eps0*veff*eps_r^2)"),
        ("beta_rad_s", beta, "rad/s", "0.01*u (no field data)"),
    ]
    blockade_possible = kerr > 0 and blk.alpha != 0
    if blockade_possible:
        params = derive_blockade_params(kerr, blk.alpha, blk.n, kappa)
        p1 = feasibility.one_photon_power(params.l1, cav.omega_rad_s, kappa)
        p2 = feasibility.two_photon_power(params.l2, beta, kappa, 0.0,
                                          cav.omega_rad_s,
                                          cav.omega_rad_s - cav.mode_spacing_rad_s)
        rows += [
            ("lambda_nl_rad_s", abs(params.l_nl), "rad/s", "2*u*alpha"),
            ("lambda1_abs_rad_s", abs(params.l1), "rad/s",
             "lambda_nl*|lambda_nl^2/(2u^2)-n+i*kappa/(4u)|"),
            ("lambda2_rad_s", params.l2.real, "rad/s", "-lambda_nl^2/(4u)"),
            ("delta_rad_s", params.delta, "rad/s", "-|lambda_nl|^2/u"),
            ("p1_watt", p1, "W", "hbar*omega*|lambda1|^2/kappa"),
            ("p2_watt", p2, "W",
             "(|lambda2|/beta)*((kappa/2)^2+delta2^2)/(2*kappa)*hbar*sqrt(w1*w2)"),
        ]
    else:
        rows += [(k, 0.0, "rad/s" if "rad" in k else "W", "zero (no nonlinearity)")
                 for k in ("lambda_nl_rad_s", "lambda1_abs_rad_s", "lambda2_rad_s",
                           "delta_rad_s", "p1_watt", "p2_watt")]
    rows.append(("blockade_possible", bool(blockade_possible), "bool",
                 "u > 0 and alpha != 0"))
    io.write_csv(os.path.join(out_dir, "power.csv"),
                 ("quantity", "value", "unit", "formula"), rows)
    io.write_manifest(os.path.join(out_dir, "manifest.json"), config_text, "power")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out_dir: str, config_text: str,
                 dim_override=None, frame="lab") -> int:
    params = _blockade_params(cfg)
    pconf = _protocol_config(cfg, dim_override)
    summary_path = os.path.join(out_dir, "summary.json")
    traj_path = os.path.join(out_dir, "trajectory.csv")
    try:
        if frame == DISPLACED:
            hold = cfg.protocol.hold_duration_s or default_hold_duration(params)
            dim = dim_override or pconf.displaced_dim
            sched = constant_schedule(hold, params.l_nl, frame=DISPLACED,
                                      blockade_n=params.n)
            traj = evolve(vacuum_state(dim), sched, 0.0, params.kappa,
                          rtol=pconf.rtol, atol=pconf.atol, samples=pconf.samples,
                          keep_states=True)
            window = pconf.eval_window_s if pconf.eval_window_s is not None \
                else 2.0 / params.kappa
            p1_peak, t_peak, idx = traj.peak("p1", t_max=min(window, hold))
            n_peak, t_npeak, _ = traj.peak("n_expect", t_max=min(window, hold))
            g2_at_peak = float(traj.g2[idx])
            summary = {
                "frame": "displaced",
                "peak_p1": p1_peak, "peak_p1_time_s": t_peak,
                "g2_at_peak": g2_at_peak if math.isfinite(g2_at_peak) else None,
                "peak_n": n_peak, "peak_n_time_s": t_npeak,
                "eval_window_s": window,
                "failed": False,
            }
            checkpoints = {"hold_peak": QuantumState(traj.states[idx]),
                           "final": traj.final_state()}
            schedule = sched
        else:
            result = run_protocol(params, pconf)
            traj = result.trajectory
            g2 = result.g2_at_peak
            summary = {
                "frame": "lab",
                "peak_p1": result.peak_p1,
                "peak_p1_time_s": result.peak_p1_time,
                "g2_at_peak": g2 if math.isfinite(g2) else None,
                "peak_n": result.peak_n,
                "peak_n_time_s": result.peak_n_time,
                "moment_loss_after_init": result.moment_loss_after_init,
                "final_p1_lab": float(result.final_state.populations()[1]),
                "eval_window_s": result.eval_window_s,
                "flags": result.flags,
                "failed": False,
            }
            checkpoints = traj.checkpoints or {}
            schedule = build_protocol_schedule(params, pconf)
    except (IntegratorFailureError, TruncationOverflowError) as exc:
        if exc.partial is not None:
            io.trajectory_to_csv(traj_path, exc.partial)
        io.write_json(summary_path, {"failed": True, "error": str(exc),
                                     "t_fail_s": exc.time_s})
        io.write_manifest(os.path.join(out_dir, "manifest.json"), config_text,
                          "simulate", {"failed": True})
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    io.trajectory_to_csv(traj_path, traj)
    io.write_json(summary_path, summary)
    io.schedule_to_csv(os.path.join(out_dir, "schedule.csv"), schedule)
    for name, state in checkpoints.items():
        io.state_to_csv(os.path.join(out_dir, f"state_{name}.csv"), state)
    io.write_manifest(os.path.join(out_dir, "manifest.json"), config_text, "simulate")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, out_dir: str, config_text: str) -> int:
    params = _blockade_params(cfg)
    pconf = _protocol_config(cfg)
    o = cfg.optimizer
    oconf = OptimizerConfig(weights=tuple(o.weights), initial_step=o.initial_step,
                            backtrack=o.backtrack, max_iterations=o.max_iterations,
                            loss_tol=o.loss_tol, fd_step_rel=o.fd_step_rel,
                            smoothing_eps=o.smoothing_eps)
    result = optimize_initialization(params, pconf, oconf)
    io.schedule_to_csv(os.path.join(out_dir, "schedule.csv"), result.schedule)
    io.write_csv(os.path.join(out_dir, "loss_curve.csv"),
                 ("iteration", "loss", "step_size"), result.history)
    io.write_json(os.path.join(out_dir, "summary.json"),
                  {"final_loss": result.loss, "converged": result.converged,
                   "iterations": len(result.history) - 1})
    io.write_manifest(os.path.join(out_dir, "manifest.json"), config_text, "optimize")
    return EXIT_OK


def _protocol_metrics(cfg: RunConfig, errors: ErrorSpec, tau_override=None):
    params = _blockade_params(cfg)
    pconf = _protocol_config(cfg, errors=errors)
    if tau_override is not None:
        pconf = replace(pconf, tau_init_s=tau_override)
    res = run_protocol(params, pconf)
    return {"g2": res.g2_at_peak, "p1_peak": res.peak_p1,
            "loss": res.moment_loss_after_init, "n_peak": res.peak_n,
            "p1_watt": feasibility.one_photon_power(params.l1,
                                                    cfg.cavity.omega_rad_s,
                                                    params.kappa)}


def _sweep_point(args):
    """One sweep evaluation; module-level so worker pools can pickle it."""
    cfg, axis, value = args
    blk, cav = cfg.blockade, cfg.cavity
    if axis == "delta_alpha":
        return _protocol_metrics(cfg, ErrorSpec(delta_alpha=value))
    if axis == "lambda1_init_err":
        return _protocol_metrics(cfg, ErrorSpec(l1_init=value))
    if axis == "lambda2_init_err":
        return _protocol_metrics(cfg, ErrorSpec(l2_init=value))
    if axis == "hold_err_grid":
        e1, e2 = value
        return _protocol_metrics(cfg, ErrorSpec(l1_hold=e1, l2_hold=e2))
    if axis == "tau":
        return _protocol_metrics(cfg, ErrorSpec(), tau_override=value)
    if axis == "alpha":
        kerr = _kerr(cfg)
        kappa = cav.kappa()
        out = {"g2": math.nan, "p1_peak": math.nan, "loss": math.nan,
               "n_peak": math.nan, "p1_watt": math.nan, "alpha": value}
        if value == 0:
            return out
        params = derive_blockade_params(kerr, value, blk.n, kappa)
        dim = cfg.protocol.displaced_dim
        window = cfg.protocol.eval_window_s or 2.0 / kappa
        sched = constant_schedule(max(default_hold_duration(params), window),
                                  params.l_nl, frame=DISPLACED, blockade_n=blk.n)
        traj = evolve(vacuum_state(dim), sched, 0.0, kappa, samples=cfg.protocol.samples)
        p1_peak, _, idx = traj.peak("p1", t_max=window)
        out.update({
            "p1_peak": p1_peak,
            "g2": float(traj.g2[idx]),
            "n_peak": traj.peak("n_expect", t_max=window)[0],
            "p1_watt": feasibility.one_photon_power(params.l1, cav.omega_rad_s, kappa),
        })
        return out
    if axis in ("q", "veff"):
        kappa_std = cav.kappa()
        if axis == "q":
            kerr = _kerr(cfg)
            kappa = kappa_std * (cav.q_factor / value)
        else:
            mode = feasibility.CavityMode(cav.omega_rad_s, cav.q_factor,
                                          cav.kappa_rad_s, veff_m3=value)
            kerr = feasibility.kerr_strength(mode, feasibility.MaterialParams(
                cfg.material.chi3_m2_v2, cfg.material.epsilon_r))
            kappa = kappa_std
        dim = cfg.protocol.displaced_dim
        sw = cfg.sweep
        if sw.fixed_p1_watt is not None:
            alpha, l_nl, n_peak = feasibility.occupation_at_fixed_power(
                sw.fixed_p1_watt, kerr, kappa, cav.omega_rad_s, blk.n, dim)
            params = derive_blockade_params(kerr, alpha, blk.n, kappa)
            return {"alpha": alpha, "lambda_nl": l_nl, "lambda1_abs": abs(params.l1),
                    "n_peak": n_peak, "p1_watt": sw.fixed_p1_watt,
                    "g2": math.nan, "p1_peak": math.nan, "loss": math.nan,
                    "reachable": True}
        target = sw.target_n_peak if sw.target_n_peak is not None else 0.5
        alpha, p1 = feasibility.power_for_target_occupation(
            target, kerr, kappa, cav.omega_rad_s, blk.n, dim)
        if alpha is None:
            return {"alpha": math.nan, "lambda_nl": math.nan, "lambda1_abs": math.nan,
                    "n_peak": target, "p1_watt": math.nan, "g2": math.nan,
                    "p1_peak": math.nan, "loss": math.nan, "reachable": False}
        params = derive_blockade_params(kerr, alpha, blk.n, kappa)
        return {"alpha": alpha, "lambda_nl": abs(params.l_nl),
                "lambda1_abs": abs(params.l1), "n_peak": target, "p1_watt": p1,
                "g2": math.nan, "p1_peak": math.nan, "loss": math.nan,
                "reachable": True}
    raise ConfigError("sweep.axis", f"unhandled axis {axis!r}")


_AXIS_COLUMN = {
    "delta_alpha": "delta_alpha_frac",
    "lambda1_init_err": "lambda1_init_err_frac",
    "lambda2_init_err": "lambda2_init_err_frac",
    "tau": "tau_s",
    "q": "q_factor",
    "veff": "veff_m3",
    "alpha": "alpha",
}


def cmd_sweep(cfg: RunConfig, out_dir: str, config_text: str, jobs: int = 1) -> int:
    sw = cfg.sweep
    if sw.scale == "log":
        values = np.geomspace(sw.min, sw.max, sw.count)
    else:
        values = np.linspace(sw.min, sw.max, sw.count)

    if sw.axis == "hold_err_grid":
        points = [(float(a), float(b)) for a in values for b in values]
        axis_cols = ["lambda1_hold_err_frac", "lambda2_hold_err_frac"]
    else:
        points = [float(v) for v in values]
        axis_cols = [_AXIS_COLUMN[sw.axis]]

    tasks = [(cfg, sw.axis, p) for p in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks, chunksize=1))
    else:
        results = [_sweep_point(t) for t in tasks]

    extra_cols = []
    if sw.axis in ("q", "veff"):
        extra_cols = ["alpha", "lambda_nl", "lambda1_abs", "reachable"]
    metric_cols = [m for m in sw.metrics]
    columns = axis_cols + extra_cols + metric_cols
    rows = []
    any_nonfinite = False
    for point, res in zip(points, results):
        head = list(point) if isinstance(point, tuple) else [point]
        row = (head + [res.get(c, math.nan) for c in extra_cols]
               + [res.get(m, math.nan) for m in metric_cols])
        finite = all(math.isfinite(float(v)) for v in row
                     if not isinstance(v, (str, bool)))
        any_nonfinite = any_nonfinite or not finite
        rows.append((row, finite))
    if any_nonfinite and "reachable" not in columns:
        columns = columns + ["finite_flag"]
        rows = [row + [finite] for row, finite in rows]
    else:
        rows = [row for row, _ in rows]
    table = io.ResultTable(columns, rows)
    table.write_csv(os.path.join(out_dir, "sweep.csv"))
    io.write_manifest(os.path.join(out_dir, "manifest.json"), config_text, "sweep",
                      {"points": len(points)})
    return EXIT_OK


def cmd_wigner(cfg: RunConfig, out_dir: str, config_text: str, checkpoint: str,
               grid_min=None, grid_max=None, grid_points: int = 81) -> int:
    if checkpoint == "vacuum":
        dim = cfg.protocol.displaced_dim
        state = vacuum_state(max(dim, 15))
    elif checkpoint == "fock1":
        state = fock_state(1, max(cfg.protocol.displaced_dim, 15))
    else:
        path = os.path.join(out_dir, f"state_{checkpoint}.csv")
        if not os.path.exists(path):
            print(f"unknown checkpoint {checkpoint!r}: no state file {path}",
                  file=sys.stderr)
            return EXIT_CONFIG
        state = io.state_from_csv(path)
    half = grid_max if grid_max is not None else abs(cfg.blockade.alpha) + 3.0
    lo = grid_min if grid_min is not None else -half
    grid = PhaseSpaceGrid.from_bounds(lo, half, grid_points, lo, half, grid_points)
    result = wigner(state, grid)
    io.wigner_to_csv(os.path.join(out_dir, "wigner.csv"), result)
    io.write_manifest(os.path.join(out_dir, "manifest.json"), config_text, "wigner",
                      {"checkpoint": checkpoint,
                       "truncation_flag": result.out_of_range})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kerrblockade",
        description="Kerr-cavity photon-blockade simulation and feasibility toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out-dir", default=None,
                       help="output directory (default: config output.directory)")

    p_power = sub.add_parser("power", help="pump-power budget from cavity/material")
    common(p_power)

    p_sim = sub.add_parser("simulate", help="run the blockade protocol")
    common(p_sim)
    p_sim.add_argument("--dim", type=int, default=None, help="Fock truncation override")
    p_sim.add_argument("--frame", choices=["lab", "displaced"], default="lab")

    p_opt = sub.add_parser("optimize", help="optimize the initialization pulses")
    common(p_opt)

    p_swp = sub.add_parser("sweep", help="parameter sweeps over errors/cavity axes")
    common(p_swp)
    p_swp.add_argument("--jobs", type=int, default=1, help="parallel worker count")

    p_wig = sub.add_parser("wigner", help="phase-space distribution of a checkpoint")
    common(p_wig)
    p_wig.add_argument("--checkpoint", required=True,
                       help="stored checkpoint name, or 'vacuum' / 'fock1'")
    p_wig.add_argument("--grid-min", type=float, default=None)
    p_wig.add_argument("--grid-max", type=float, default=None)
    p_wig.add_argument("--grid-points", type=int, default=81)

    return parser


_REQUIRED_SECTIONS = {
    "power": ("cavity", "material"),
    "simulate": ("cavity", "material", "blockade"),
    "optimize": ("cavity", "material", "blockade"),
    "sweep": ("cavity", "material", "blockade", "sweep"),
    "wigner": (),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            config_text = fh.read()
        cfg = parse_config(config_text, required=_REQUIRED_SECTIONS[args.command])
    except FileNotFoundError:
        print(f"config file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out_dir or cfg.output.directory
    os.makedirs(out_dir, exist_ok=True)

    try:
        if args.command == "power":
            return cmd_power(cfg, out_dir, config_text)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, config_text,
                                dim_override=args.dim, frame=args.frame)
        if args.command == "optimize":
            return cmd_optimize(cfg, out_dir, config_text)
        if args.command == "sweep":
            return cmd_sweep(cfg, out_dir, config_text, jobs=args.jobs)
        if args.command == "wigner":
            return cmd_wigner(cfg, out_dir, config_text, args.checkpoint,
                              args.grid_min, args.grid_max, args.grid_points)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegratorFailureError, TruncationOverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KerrBlockadeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
