"""Gradient-descent shaping of the initialization pulses.

The objective simulates only the initialization phase (vacuum start,
dissipation on) and scores the result with the smoothed weighted moment loss
against the target coherent amplitude. Free parameters are the real and
imaginary parts of the drive values at the two interior segment boundaries;
the outer endpoints stay pinned to zero and to the hold working point, so the
hold phase is untouched by the optimization. The warm start is the exact
linear-cavity solution, which leaves the search inside the locally convex
basin for weak nonlinearity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import LAB, DriveSchedule, evolve
from .fock import MOMENT_WEIGHTS, smoothed_moment_loss, vacuum_state
from .protocol import (
    BlockadeParams,
    ProtocolConfig,
    _init_segments,
    build_protocol_schedule,
    default_lab_dim,
    resolve_tau,
    warm_start_interior,
)


@dataclass(frozen=True)
class OptimizerConfig:
    weights: tuple = MOMENT_WEIGHTS
    initial_step: float = 0.05          # in normalized parameter units
    backtrack: float = 0.5
    max_iterations: int = 500
    loss_tol: float = 1e-4
    fd_step_rel: float = 1e-6
    smoothing_eps: float = 1e-12
    free_mask: tuple = (True,) * 8      # which interior components move
    sim_rtol: float = 1e-10             # objective sims run tighter than the
    sim_atol: float = 1e-12             # default so finite differences resolve

    def __post_init__(self):
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if self.initial_step <= 0 or not 0 < self.backtrack < 1:
            raise ValueError("steps must be positive and backtrack in (0, 1)")
        if len(self.free_mask) != 8:
            raise ValueError("free_mask selects among the 8 interior components")


def finite_diff_gradient(objective, point: np.ndarray, h_rel: float = 1e-6,
                         scale: np.ndarray | float = 1.0) -> np.ndarray:
    """Central-difference gradient; steps are h_rel * max(|x_i|, scale_i)."""
    point = np.asarray(point, dtype=float)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), point.shape)
    grad = np.empty_like(point)
    for i in range(point.size):
        h = h_rel * max(abs(point[i]), scale[i])
        xp = point.copy(); xp[i] += h
        xm = point.copy(); xm[i] -= h
        fp, fm = objective(xp), objective(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"objective non-finite near component {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


@dataclass
class OptimizeResult:
    schedule: DriveSchedule
    loss: float
    history: list          # rows of (iteration, loss, step_size)
    converged: bool
    interior: np.ndarray


def initialization_loss(params: BlockadeParams, config: ProtocolConfig,
                        interior: np.ndarray, weights=MOMENT_WEIGHTS,
                        eps: float = 1e-12, rtol: float = 1e-10,
                        atol: float = 1e-12) -> float:
    """Smoothed moment loss of the simulated initialization phase only."""
    tau = resolve_tau(params, config)
    segs = _init_segments(params, config, np.asarray(interior, float), tau)
    sched = DriveSchedule(segs, frame=LAB, blockade_n=params.n)
    dim = config.lab_dim or default_lab_dim(params.alpha)
    traj = evolve(vacuum_state(dim), sched, params.kerr, params.kappa,
                  rtol=rtol, atol=atol, samples=2, keep_states=True)
    return smoothed_moment_loss(traj.final_state(), params.alpha, weights, eps)


def optimize_initialization(params: BlockadeParams, config: ProtocolConfig,
                            opt: OptimizerConfig | None = None):
    """Descend the initialization loss from the linear-cavity warm start.

    Returns an OptimizeResult whose schedule includes the (unmodified) hold
    segment. The accepted-loss sequence is non-increasing; a backtracking
    line search rejects any step that raises the smoothed loss. Deterministic
    for fixed inputs.
    """
    opt = opt or OptimizerConfig()
    x0 = warm_start_interior(params, config)

    if all(w == 0 for w in opt.weights):
        sched = build_protocol_schedule(params, config, interior=x0)
        return OptimizeResult(sched, 0.0, [(0, 0.0, 0.0)], True, x0)

    # normalize so gradient components are comparable across drive scales
    tau = resolve_tau(params, config)
    drive_floor = max(abs(params.alpha) / tau, abs(params.l1), 1.0)
    l2_floor = max(abs(params.l2), 1e-3 * drive_floor)
    scales = np.array([drive_floor] * 4 + [l2_floor] * 4)
    free = np.asarray(opt.free_mask, dtype=bool)

    def objective(xn):
        return initialization_loss(params, config, xn * scales, opt.weights,
                                   opt.smoothing_eps, opt.sim_rtol, opt.sim_atol)

    xn = x0 / scales
    loss = objective(xn)
    history = [(0, loss, 0.0)]
    converged = False
    step = opt.initial_step

    for it in range(1, opt.max_iterations + 1):
        grad = finite_diff_gradient(objective, xn, opt.fd_step_rel, scale=1.0)
        grad = np.where(free, grad, 0.0)
        gnorm = np.linalg.norm(grad)
        if gnorm == 0.0:
            converged = True
            break
        direction = -grad / gnorm
        accepted = False
        trial = step
        while trial > 1e-14:
            cand = xn + trial * direction
            cand_loss = objective(cand)
            if cand_loss < loss:
                xn, loss = cand, cand_loss
                accepted = True
                break
            trial *= opt.backtrack
        if not accepted:
            converged = True
            break
        history.append((it, loss, trial))
        # reuse the accepted step, allowing mild regrowth
        step = min(2.0 * trial, opt.initial_step)
        if history[-2][1] - loss < opt.loss_tol:
            converged = True
            break

    sched = build_protocol_schedule(params, config, interior=xn * scales)
    return OptimizeResult(sched, float(loss), history, converged, xn * scales)
