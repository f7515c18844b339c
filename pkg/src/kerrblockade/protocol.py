"""Blockade drive-parameter derivation and the three-phase pulse protocol.

The protocol displaces the cavity to a coherent amplitude alpha
(initialization), holds the drives at the blockade working point while the
displaced-frame two-level dynamics pumps the single-photon level, then
displaces back (final displacement). All run_protocol simulation happens in
the lab frame; single-photon metrics are read off in the displaced frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    DISPLACED,
    LAB,
    DriveSchedule,
    Segment,
    Trajectory,
    concatenate,
    constant_schedule,
    evolve,
)
from .errors import MultiRootError
from .fock import (
    QuantumState,
    coherent_state,
    displacement_operator,
    moment_loss,
    vacuum_state,
)


@dataclass(frozen=True)
class BlockadeParams:
    """Working-point drive parameters for an effective n-level blockade.

    With l_nl = 2*kerr*alpha, the choices

        l1    = l_nl * (|l_nl|^2/(2 kerr^2) - n + i*kappa/(4 kerr))
        l2    = -l_nl^2 / (4 kerr)
        delta = -|l_nl|^2 / kerr

    displace the driven Kerr cavity onto l_nl*adag(adag a - n) + h.c.; the
    i*kappa/(4 kerr) part of l1 cancels the drive the dissipator acquires
    under the frame change. For real positive alpha the |l_nl|^2 in l1 equals
    l_nl^2; the modulus keeps the working point covariant under a global
    phase of alpha.
    """

    kerr: float
    alpha: complex
    n: int
    kappa: float
    l_nl: complex
    l1: complex
    l2: complex
    delta: float
    laser_frequency: float | None = None

    def validate(self, rel=1e-12):
        def close(x, y):
            scale = max(abs(x), abs(y), 1e-300)
            return abs(x - y) <= rel * scale

        assert close(self.l_nl, 2 * self.kerr * self.alpha)
        assert close(self.l2, -self.l_nl**2 / (4 * self.kerr))
        assert close(self.delta, -abs(self.l_nl) ** 2 / self.kerr)
        assert close(self.l1, self.l_nl * (abs(self.l_nl) ** 2 / (2 * self.kerr**2)
                                           - self.n + 1j * self.kappa / (4 * self.kerr)))
        return self


def derive_blockade_params(kerr: float, alpha: complex, n: int, kappa: float,
                           omega_c: float | None = None) -> BlockadeParams:
    """Map (kerr, alpha, n, kappa) to the blockade working point.

    A linear cavity (kerr = 0) has no blockade working point and raises
    ZeroDivisionError. ``omega_c`` optionally yields the absolute one-photon
    laser frequency omega_c - 2*kerr + delta.
    """
    if n < 1:
        raise ValueError("blockade level n must be a positive integer")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if kerr == 0:
        raise ZeroDivisionError("kerr strength is zero: linear cavity has no "
                                "blockade parameters")
    alpha = complex(alpha)
    l_nl = 2 * kerr * alpha
    l1 = l_nl * (abs(l_nl) ** 2 / (2 * kerr**2) - n + 1j * kappa / (4 * kerr))
    l2 = -(l_nl**2) / (4 * kerr)
    delta = -abs(l_nl) ** 2 / kerr
    laser = None if omega_c is None else omega_c - 2 * kerr + delta
    return BlockadeParams(kerr=kerr, alpha=alpha, n=n, kappa=kappa, l_nl=l_nl,
                          l1=l1, l2=complex(l2), delta=float(delta),
                          laser_frequency=laser)


def linear_init_amplitude(alpha: complex, tau: float) -> complex:
    """Constant drive that displaces a lossless linear cavity by alpha in tau."""
    if tau <= 0:
        raise ValueError("initialization time must be positive")
    return 1j * complex(alpha) / tau


@dataclass(frozen=True)
class ErrorSpec:
    """Fractional drive errors injected into the protocol phases.

    ``delta_alpha`` switches the initialization to an ideal coherent state of
    amplitude alpha*(1 + delta_alpha) instead of simulating the pulses; the
    other entries multiply the corresponding drive magnitudes.
    """

    delta_alpha: float | None = None
    l1_init: float = 0.0
    l2_init: float = 0.0
    l1_hold: float = 0.0
    l2_hold: float = 0.0

    def __post_init__(self):
        for name in ("l1_init", "l2_init", "l1_hold", "l2_hold"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{name} fractional error must lie in [-1, 1]")
        if self.delta_alpha is not None and not -1.0 <= self.delta_alpha <= 1.0:
            raise ValueError("delta_alpha fractional error must lie in [-1, 1]")


EXACT_OPERATOR = "exact-operator"
REVERSED_SCHEDULE = "reversed-schedule"


@dataclass(frozen=True)
class ProtocolConfig:
    """Timings, truncations, and error injection for one protocol run."""

    tau_init_s: float | None = None            # default 0.01/kappa
    l1_fractions: tuple = (0.25, 0.5, 0.25)    # ramp-up / plateau / ramp-to-target
    l2_mid_fraction: float = 0.5               # slow-ramp endpoint as fraction of target
    hold_duration_s: float | None = None       # default pi/(2|l_nl|)
    scan_to_peak: bool = False                 # extend hold window to capture the peak
    final_displacement: str = EXACT_OPERATOR
    lab_dim: int | None = None                 # default truncation policy
    displaced_dim: int = 15
    eval_window_s: float | None = None         # default 2/kappa
    errors: ErrorSpec = field(default_factory=ErrorSpec)
    samples: int = 400
    rtol: float = 1e-8
    atol: float = 1e-12

    def __post_init__(self):
        f = self.l1_fractions
        if len(f) != 3 or any(x <= 0 for x in f) or abs(sum(f) - 1.0) > 1e-9:
            raise ValueError("l1_fractions must be three positive numbers summing to 1")
        if not 0 <= self.l2_mid_fraction <= 1:
            raise ValueError("l2_mid_fraction must lie in [0, 1]")
        if self.final_displacement not in (EXACT_OPERATOR, REVERSED_SCHEDULE):
            raise ValueError(f"unknown final displacement mode {self.final_displacement!r}")
        if self.tau_init_s is not None and self.tau_init_s <= 0:
            raise ValueError("tau_init_s must be positive")


def default_lab_dim(alpha) -> int:
    """Truncation policy for lab-frame states around a coherent amplitude."""
    a = abs(alpha)
    return max(int(math.ceil(a * a + 7.0 * a + 10.0)), 15)


def resolve_tau(params: BlockadeParams, config: ProtocolConfig) -> float:
    return config.tau_init_s if config.tau_init_s is not None else 0.01 / params.kappa


def default_hold_duration(params: BlockadeParams) -> float:
    """Half-period of the displaced-frame two-level cycle, pi/(2|l_nl|)."""
    if params.l_nl == 0:
        return 1.0 / params.kappa
    return math.pi / (2.0 * abs(params.l_nl))


def _segment_response(duration, l1s, l1e, lam):
    """Exact response of da/dt = -lam*a - i*l1(t) over one linear-ramp segment.

    Returns (decay, forced) so that a(end) = decay * a(start) + forced.
    """
    c1 = (l1e - l1s) / duration
    x = lam * duration
    if abs(x) > 1e-6:
        e = np.exp(-x)
        i0 = (1.0 - e) / lam                       # int exp(-lam(T-s)) ds
        i1 = (duration - i0) / lam                 # int exp(-lam(T-s)) s ds
    else:
        # series in lam*T for near-lossless, near-resonant segments
        i0 = duration * (1 - x / 2 + x**2 / 6 - x**3 / 24)
        i1 = duration**2 * (0.5 - x / 3 + x**2 / 8 - x**3 / 30)
        e = np.exp(-x)
    forced = -1j * (l1s * i0 + c1 * i1)
    return e, forced


def linear_cavity_response(segments, kappa: float, a0: complex = 0.0) -> complex:
    """Mean field after piecewise-linear one-photon driving of a linear cavity.

    Integrates da/dt = -(i*delta + kappa/2) a - i*l1(t) exactly per segment.
    Two-photon drive is ignored (it does not move the mean field at a0 = 0 to
    first order and is zero in the warm-start use case for a linear cavity).
    """
    a = complex(a0)
    for seg in segments:
        lam = 1j * seg.delta + kappa / 2.0
        decay, forced = _segment_response(seg.duration_s, seg.l1_start, seg.l1_end, lam)
        a = decay * a + forced
    return a


def _init_segments(params: BlockadeParams, config: ProtocolConfig,
                   interior: np.ndarray, tau: float):
    """Three initialization segments from the interior-endpoint vector.

    ``interior`` packs [Re l1@b1, Im l1@b1, Re l1@b2, Im l1@b2,
    Re l2@b1, Im l2@b1, Re l2@b2, Im l2@b2] where b1, b2 are the two interior
    segment boundaries; the outer endpoints stay pinned to zero and to the
    hold-phase working point.
    """
    f1, f2, f3 = config.l1_fractions
    l1b1 = interior[0] + 1j * interior[1]
    l1b2 = interior[2] + 1j * interior[3]
    l2b1 = interior[4] + 1j * interior[5]
    l2b2 = interior[6] + 1j * interior[7]
    return (
        Segment(f1 * tau, 0.0, l1b1, 0.0, l2b1, params.delta),
        Segment(f2 * tau, l1b1, l1b2, l2b1, l2b2, params.delta),
        Segment(f3 * tau, l1b2, params.l1, l2b2, params.l2, params.delta),
    )


def warm_start_interior(params: BlockadeParams, config: ProtocolConfig) -> np.ndarray:
    """Interior endpoints that displace a *linear* cavity exactly to alpha.

    The plateau level p of the one-photon drive solves the closed-form linear
    response a(tau) = alpha including dissipation and detuning; the
    two-photon drive ramps to l2_mid_fraction of its target by the end of the
    plateau. With kerr = 0 and l2 = 0 the resulting initialized state is an
    exact coherent state of amplitude alpha.
    """
    tau = resolve_tau(params, config)

    def final_a(p):
        interior = np.array([p.real, p.imag, p.real, p.imag, 0, 0, 0, 0])
        segs = _init_segments(params, config, interior, tau)
        return linear_cavity_response(segs, params.kappa)

    # response is affine in the plateau level: a(tau) = r0 + rp * p
    r0 = final_a(0.0)
    rp = final_a(1.0) - r0
    rp_i = final_a(1.0j) - r0
    # complex-linear combination: a = r0 + p_re*rp_re_dir + p_im*rp_im_dir
    # solve 2x2 real system for p
    b = np.array([(params.alpha - r0).real, (params.alpha - r0).imag])
    m = np.array([[rp.real, rp_i.real], [rp.imag, rp_i.imag]])
    pre, pim = np.linalg.solve(m, b)
    p = pre + 1j * pim

    f1, f2, _ = config.l1_fractions
    q2 = config.l2_mid_fraction * params.l2
    q1 = q2 * f1 / (f1 + f2)  # single linear ramp across the first two segments
    return np.array([p.real, p.imag, p.real, p.imag,
                     q1.real, q1.imag, q2.real, q2.imag])


def build_protocol_schedule(params: BlockadeParams, config: ProtocolConfig,
                            interior: np.ndarray | None = None) -> DriveSchedule:
    """Initialization ramps plus the constant hold segment, lab frame.

    The final displacement phase is appended by run_protocol according to the
    configured mode (it has no segments in exact-operator mode).
    """
    tau = resolve_tau(params, config)
    if params.alpha == 0:
        hold = config.hold_duration_s or default_hold_duration(params)
        return DriveSchedule(
            (Segment(tau, 0, 0, 0, 0, params.delta),
             Segment(hold, 0, 0, 0, 0, params.delta)),
            frame=LAB, blockade_n=params.n)
    if interior is None:
        interior = warm_start_interior(params, config)
    init = _init_segments(params, config, interior, tau)
    hold_t = config.hold_duration_s or default_hold_duration(params)
    if config.scan_to_peak:
        hold_t = max(3.0 * hold_t, 12.0 / params.kappa)
    hold = Segment(hold_t, params.l1, params.l1, params.l2, params.l2, params.delta)
    return DriveSchedule(init + (hold,), frame=LAB, blockade_n=params.n)


def alpha_from_drive(l1_magnitude: float, kerr: float, n: int, kappa: float):
    """Invert |l1| back to (l_nl, alpha) on the blockade working line.

    Solves |l1|^2 = l_nl^2 [(l_nl^2/(2 kerr^2) - n)^2 + (kappa/(4 kerr))^2]
    for l_nl >= 0 by bisection. When kappa/(4 kerr) < n/sqrt(3) the map is
    non-monotone; if the magnitude then admits several roots a MultiRootError
    listing all of them is raised.
    """
    if l1_magnitude < 0:
        raise ValueError("drive magnitude must be nonnegative")
    if kerr <= 0 or kappa <= 0 or n < 1:
        raise ValueError("kerr, kappa must be positive and n >= 1")
    if l1_magnitude == 0:
        return 0.0, 0.0
    c = kappa / (4.0 * kerr)
    target = l1_magnitude**2

    def g(lnl):
        y = lnl * lnl
        return y * ((y / (2 * kerr**2) - n) ** 2 + c * c)

    def bisect(lo, hi, increasing=True):
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = g(mid)
            if (val < target) == increasing:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def expand_upper():
        hi = 2.0 * kerr  # alpha = 1 as a seed scale
        while g(hi) < target:
            hi *= 2.0
        return hi

    if c >= n / math.sqrt(3.0):
        lnl = bisect(0.0, expand_upper())
        return lnl, lnl / (2.0 * kerr)

    # stationary points of g in y = lnl^2, via u = y/(2 kerr^2):
    # 3u^2 - 4nu + (n^2 + c^2) = 0
    disc = math.sqrt(n * n - 3 * c * c)
    u_lo, u_hi = (2 * n - disc) / 3.0, (2 * n + disc) / 3.0
    y_max, y_min = 2 * kerr**2 * u_lo, 2 * kerr**2 * u_hi
    l_max, l_min = math.sqrt(y_max), math.sqrt(y_min)
    g_localmax, g_localmin = g(l_max), g(l_min)
    if g_localmin < target < g_localmax:
        roots = []
        for lnl in (bisect(0.0, l_max),
                    bisect(l_max, l_min, increasing=False),
                    bisect(l_min, expand_upper())):
            roots.append((lnl, lnl / (2.0 * kerr)))
        raise MultiRootError(roots)
    if target >= g_localmax:
        lo = l_min
        lnl = bisect(lo, expand_upper())
    else:
        lnl = bisect(0.0, l_max)
    return lnl, lnl / (2.0 * kerr)


@dataclass
class ProtocolResult:
    """Outcome of one protocol run; metrics are displaced-frame quantities."""

    trajectory: Trajectory
    peak_p1: float
    peak_p1_time: float
    g2_at_peak: float
    peak_n: float
    peak_n_time: float
    moment_loss_after_init: float
    final_state: QuantumState
    eval_window_s: float
    hold_start_s: float
    hold_end_s: float
    flags: list

    def __post_init__(self):
        span_ok = self.hold_start_s - 1e-15 <= self.peak_p1_time <= self.hold_end_s + 1e-15
        if not span_ok:
            raise ValueError("peak time fell outside the hold span")


def run_protocol(params: BlockadeParams, config: ProtocolConfig | None = None,
                 schedule: DriveSchedule | None = None) -> ProtocolResult:
    """Simulate the full three-phase protocol in the lab frame.

    Initialization starts from vacuum unless ``errors.delta_alpha`` is set, in
    which case the post-initialization state is replaced by an ideal coherent
    state of amplitude alpha*(1 + delta_alpha). Single-photon probability and
    g2(0) are evaluated in the displaced frame over an early-time window
    (default 2/kappa): in the strongly damped regime the hold dynamics
    saturates on the cavity lifetime scale and the quoted generation
    probability refers to the short-time behavior, before saturation.
    """
    config = config or ProtocolConfig()
    err = config.errors
    dim = config.lab_dim or default_lab_dim(params.alpha)
    flags = []

    if schedule is None:
        flags.append("optimizer_not_run")
    full = schedule if schedule is not None else build_protocol_schedule(params, config)
    init_segments, hold_segment = full.segments[:-1], full.segments[-1]

    # fractional drive errors scale the segment drive values
    if err.l1_init or err.l2_init:
        init_segments = tuple(s.scaled(1 + err.l1_init, 1 + err.l2_init)
                              for s in init_segments)
    hold_segment = hold_segment.scaled(1 + err.l1_hold, 1 + err.l2_hold)

    if err.delta_alpha is not None:
        state_init = coherent_state(params.alpha * (1 + err.delta_alpha), dim)
        if state_init.truncation_warning:
            flags.append("truncation_warning")
        init_traj = None
        t_init = sum(s.duration_s for s in init_segments)
        flags.append("initialization_substituted")
    else:
        init_sched = DriveSchedule(init_segments, frame=LAB, blockade_n=params.n)
        init_traj = evolve(vacuum_state(dim), init_sched, params.kerr, params.kappa,
                           rtol=config.rtol, atol=config.atol,
                           samples=max(config.samples // 4, 16),
                           keep_states=True, moment_ref=params.alpha)
        state_init = init_traj.final_state()
        t_init = init_sched.total_duration

    loss_after_init = moment_loss(state_init, params.alpha)

    hold_sched = DriveSchedule((hold_segment,), frame=LAB, blockade_n=params.n)
    hold_traj = evolve(state_init, hold_sched, params.kerr, params.kappa,
                       rtol=config.rtol, atol=config.atol, samples=config.samples,
                       keep_states=True)

    # displaced-frame metrics along the hold
    d_minus = displacement_operator(-params.alpha, dim)
    ns = np.arange(dim)
    p1_d = np.empty(len(hold_traj.states))
    n_d = np.empty_like(p1_d)
    g2_d = np.full_like(p1_d, np.nan)
    for k, rho in enumerate(hold_traj.states):
        rd = d_minus @ rho @ d_minus.conj().T
        pops = np.real(np.diag(rd))
        p1_d[k] = pops[1]
        n_d[k] = float(np.dot(ns, pops))
        nn1 = max(float(np.dot(ns * (ns - 1.0), pops)), 0.0)
        if n_d[k] > 1e-12:
            g2_d[k] = nn1 / n_d[k] ** 2

    if config.eval_window_s is not None:
        window = config.eval_window_s
    elif config.scan_to_peak:
        window = hold_segment.duration_s
    else:
        window = 2.0 / params.kappa
    window = min(window, hold_segment.duration_s)
    mask = hold_traj.times <= window
    if not mask.any():
        mask[0] = True
    idx_p1 = np.flatnonzero(mask)[np.argmax(p1_d[mask])]
    idx_n = np.flatnonzero(mask)[np.argmax(n_d[mask])]

    state_hold_end = QuantumState(hold_traj.states[-1])

    if config.final_displacement == EXACT_OPERATOR:
        rho_final = d_minus @ state_hold_end.density() @ d_minus.conj().T
        final_state = QuantumState(rho_final)
        final_traj = None
    else:
        init_for_reversal = DriveSchedule(init_segments, frame=LAB, blockade_n=params.n)
        rev = init_for_reversal.reversed_negated()
        final_traj = evolve(state_hold_end, rev, params.kerr, params.kappa,
                            rtol=config.rtol, atol=config.atol,
                            samples=max(config.samples // 4, 16), keep_states=True)
        final_state = final_traj.final_state()

    pieces = [tr for tr in (init_traj, hold_traj, final_traj) if tr is not None]
    combined = concatenate(pieces) if len(pieces) > 1 else pieces[0]
    flags.extend(combined.flags or [])

    checkpoints = {
        "init_end": state_init,
        "hold_peak": QuantumState(hold_traj.states[idx_p1]),
        "hold_end": state_hold_end,
        "final": final_state,
    }
    combined.checkpoints = checkpoints

    hold_start = t_init if err.delta_alpha is None else 0.0
    return ProtocolResult(
        trajectory=combined,
        peak_p1=float(p1_d[idx_p1]),
        peak_p1_time=hold_start + float(hold_traj.times[idx_p1]),
        g2_at_peak=float(g2_d[idx_p1]),
        peak_n=float(n_d[idx_n]),
        peak_n_time=hold_start + float(hold_traj.times[idx_n]),
        moment_loss_after_init=float(loss_after_init),
        final_state=final_state,
        eval_window_s=window,
        hold_start_s=hold_start,
        hold_end_s=hold_start + hold_segment.duration_s,
        flags=sorted(set(flags)),
    )


def peak_blockade_occupation(l_nl: float, kappa: float, n: int = 1,
                             dim: int = 15, samples: int = 400,
                             window_s: float | None = None):
    """Peak mean photon number of the displaced-frame hold from vacuum.

    Evolves the blockade Hamiltonian with dissipation over a window long
    enough to capture the damped-oscillation transient (or ``window_s``).
    Returns (n_peak, t_peak).
    """
    if l_nl == 0:
        return 0.0, 0.0
    t_pi = math.pi / (2.0 * abs(l_nl))
    t_end = window_s if window_s is not None else max(3.0 * t_pi, 12.0 / kappa)
    sched = constant_schedule(t_end, l_nl, frame=DISPLACED, blockade_n=n)
    traj = evolve(vacuum_state(dim), sched, 0.0, kappa, samples=samples)
    val, t, _ = traj.peak("n_expect")
    return val, t
