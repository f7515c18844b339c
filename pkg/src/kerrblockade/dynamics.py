"""Hamiltonian builders and Lindblad master-equation integration.

Drives are piecewise linear in time; each schedule segment is integrated
separately so segment boundaries are exact step points of the adaptive
Runge-Kutta integrator. Density matrices are dense (dims stay below ~60) and
evolve vectorized under

    drho/dt = -i[H(t), rho] + kappa (a rho adag - 1/2 {adag a, rho}).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    IntegratorFailureError,
    InvalidDimensionError,
    TruncationOverflowError,
)
from .fock import (
    QuantumState,
    displacement_operator,
    ladder_operators,
    moment_loss as _coherent_moment_loss,
    number_operator,
    require_hermitian,
)

LAB = "lab"
DISPLACED = "displaced"


def build_lab_hamiltonian(l1: complex, l2: complex, delta: float, kerr: float,
                          dim: int) -> np.ndarray:
    """Single-mode cavity Hamiltonian with one- and two-photon drives.

    H = delta*adag a + (l1*adag + l2*adag^2 + h.c.) + kerr*adag^2 a^2,
    all coefficients in rad/s.
    """
    if (kerr != 0 or l2 != 0) and dim < 4:
        raise InvalidDimensionError("dim >= 4 required with Kerr or two-photon drive")
    a, adag = ladder_operators(dim)
    h = delta * (adag @ a) + kerr * (adag @ adag @ a @ a)
    drive = l1 * adag + l2 * (adag @ adag)
    h = h + drive + drive.conj().T
    return require_hermitian(h)


def build_blockade_hamiltonian(l_nl: complex, n: int, dim: int) -> np.ndarray:
    """Displaced-frame target Hamiltonian l_nl*adag(adag a - n) + h.c.

    Its only couplings are of the |m+1><m| + h.c. form, and the |n+1><n|
    element vanishes, which truncates the drive ladder at level n. The number
    operator is built with exact integer diagonal so that element is an exact
    zero rather than a round-off residue.
    """
    if n < 1:
        raise ValueError("blockade level n must be a positive integer")
    if dim < n + 3:
        raise InvalidDimensionError(f"dim >= n + 3 = {n + 3} required")
    a, adag = ladder_operators(dim)
    h = l_nl * (adag @ (number_operator(dim) - n * np.eye(dim)))
    return require_hermitian(h + h.conj().T)


@dataclass(frozen=True)
class Segment:
    """One piecewise-linear span: drives ramp linearly, detuning constant."""

    duration_s: float
    l1_start: complex = 0.0
    l1_end: complex = 0.0
    l2_start: complex = 0.0
    l2_end: complex = 0.0
    delta: float = 0.0
    allow_jump: bool = False

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError("segment duration must be positive")

    def l1_at(self, t: float) -> complex:
        f = t / self.duration_s
        return self.l1_start + (self.l1_end - self.l1_start) * f

    def l2_at(self, t: float) -> complex:
        f = t / self.duration_s
        return self.l2_start + (self.l2_end - self.l2_start) * f

    def scaled(self, l1_factor=1.0, l2_factor=1.0) -> "Segment":
        return Segment(self.duration_s,
                       l1_factor * self.l1_start, l1_factor * self.l1_end,
                       l2_factor * self.l2_start, l2_factor * self.l2_end,
                       self.delta, self.allow_jump)


def _continuous(x, y, tol=1e-9):
    scale = max(abs(x), abs(y), 1.0)
    return abs(x - y) <= tol * scale


@dataclass(frozen=True)
class DriveSchedule:
    """Ordered piecewise-linear drive segments with a frame tag.

    ``frame`` is "lab" (full cavity Hamiltonian; l1/l2 are the one- and
    two-photon drive amplitudes) or "displaced" (the l1 channel is read as
    the blockade drive amplitude of level ``blockade_n``; l2 must be zero).
    """

    segments: tuple
    frame: str = LAB
    blockade_n: int = 1

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        if self.frame not in (LAB, DISPLACED):
            raise ValueError(f"unknown frame {self.frame!r}")
        for prev, nxt in zip(segs, segs[1:]):
            if nxt.allow_jump:
                continue
            if not (_continuous(prev.l1_end, nxt.l1_start)
                    and _continuous(prev.l2_end, nxt.l2_start)):
                raise ValueError("drive endpoints discontinuous between segments "
                                 "(set allow_jump to permit)")
        if self.frame == DISPLACED:
            for s in segs:
                if s.l2_start != 0 or s.l2_end != 0:
                    raise ValueError("displaced-frame schedules use only the l1 channel")
        object.__setattr__(self, "segments", segs)

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration_s for s in self.segments))

    def boundaries(self) -> np.ndarray:
        ts = [0.0]
        for s in self.segments:
            ts.append(ts[-1] + s.duration_s)
        return np.array(ts)

    def reversed_negated(self) -> "DriveSchedule":
        """Time-mirrored schedule with negated drives.

        Playing this after the original undoes the original's displacement in
        the linear-response limit (the drive integral flips sign).
        """
        segs = tuple(
            Segment(s.duration_s, -s.l1_end, -s.l1_start, -s.l2_end, -s.l2_start,
                    s.delta, s.allow_jump)
            for s in reversed(self.segments)
        )
        first = segs[0]
        segs = (Segment(first.duration_s, first.l1_start, first.l1_end,
                        first.l2_start, first.l2_end, first.delta,
                        allow_jump=True),) + segs[1:]
        return DriveSchedule(segs, frame=self.frame, blockade_n=self.blockade_n)

    def scaled(self, l1_factor=1.0, l2_factor=1.0) -> "DriveSchedule":
        return DriveSchedule(tuple(s.scaled(l1_factor, l2_factor) for s in self.segments),
                             frame=self.frame, blockade_n=self.blockade_n)


def constant_schedule(duration_s, l1, l2=0.0, delta=0.0, frame=LAB,
                      blockade_n=1) -> DriveSchedule:
    seg = Segment(duration_s, l1, l1, l2, l2, delta)
    return DriveSchedule((seg,), frame=frame, blockade_n=blockade_n)


@dataclass
class Trajectory:
    """Sampled observables along one evolution; times strictly increasing.

    g2 entries are NaN where the mean photon number sits below the g2 floor.
    ``states`` (density matrices at the sample times) is populated only when
    evolve() was asked to keep them.
    """

    times: np.ndarray
    n_expect: np.ndarray
    a_expect: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    g2: np.ndarray
    trace_err: np.ndarray
    moment_loss: np.ndarray | None = None
    states: list | None = None
    checkpoints: dict | None = None
    flags: list | None = None

    def final_state(self) -> QuantumState:
        if self.states is None:
            raise ValueError("trajectory was recorded without states")
        return QuantumState(self.states[-1])

    def peak(self, field="p1", t_max=None):
        """(value, time, index) of the maximum of a recorded field.

        ``t_max`` restricts the search to times <= t_max.
        """
        arr = getattr(self, field)
        mask = np.ones_like(self.times, dtype=bool)
        if t_max is not None:
            mask = self.times <= t_max
            if not mask.any():
                mask[0] = True
        idx = np.flatnonzero(mask)[np.argmax(arr[mask])]
        return float(arr[idx]), float(self.times[idx]), int(idx)

    def offset_times(self, t0: float) -> "Trajectory":
        out = Trajectory(self.times + t0, self.n_expect, self.a_expect, self.p0,
                         self.p1, self.p2, self.g2, self.trace_err,
                         self.moment_loss, self.states, self.checkpoints, self.flags)
        return out


def concatenate(trajs) -> Trajectory:
    """Join trajectories end to end, dropping duplicated boundary samples."""
    trajs = list(trajs)
    parts = [trajs[0]]
    t_end = trajs[0].times[-1]
    for tr in trajs[1:]:
        shifted = tr.offset_times(t_end)
        parts.append(shifted)
        t_end = shifted.times[-1]

    def cat(getter):
        pieces = []
        for k, tr in enumerate(parts):
            arr = getter(tr)
            if arr is None:
                return None
            pieces.append(arr if k == 0 else arr[1:])
        return np.concatenate(pieces)

    states = None
    if all(tr.states is not None for tr in parts):
        states = list(parts[0].states)
        for tr in parts[1:]:
            states.extend(tr.states[1:])
    flags = sorted({f for tr in parts if tr.flags for f in tr.flags})
    return Trajectory(
        times=cat(lambda t: t.times),
        n_expect=cat(lambda t: t.n_expect),
        a_expect=cat(lambda t: t.a_expect),
        p0=cat(lambda t: t.p0),
        p1=cat(lambda t: t.p1),
        p2=cat(lambda t: t.p2),
        g2=cat(lambda t: t.g2),
        trace_err=cat(lambda t: t.trace_err),
        moment_loss=cat(lambda t: t.moment_loss),
        states=states,
        checkpoints=None,
        flags=flags,
    )


def _segment_hamiltonian_parts(seg: Segment, frame: str, blockade_n: int,
                               kerr: float, dim: int):
    """Static part and drive coefficient matrices for one segment.

    Lab frame: H(t) = Hstat + l1(t) AD + conj(l1) A + l2(t) AD2 + conj(l2) A2.
    Displaced frame: the l1 channel multiplies adag(adag a - n); the Kerr term
    is not included (the blockade Hamiltonian is used as-is).
    """
    a, adag = ladder_operators(dim)
    nmat = number_operator(dim)
    if frame == LAB:
        hstat = seg.delta * nmat + kerr * (adag @ adag @ a @ a)
        drive1 = adag
        drive2 = adag @ adag
    else:
        hstat = seg.delta * nmat
        drive1 = adag @ (nmat - blockade_n * np.eye(dim))
        drive2 = np.zeros((dim, dim), dtype=complex)
    return hstat, drive1, drive2, a, adag, nmat


def evolve(state0: QuantumState, schedule: DriveSchedule, kerr: float,
           kappa: float, *, rtol: float = 1e-8, atol: float = 1e-12,
           samples: int = 400, keep_states: bool = False,
           moment_ref: complex | None = None,
           record_displacement: complex | None = None,
           method: str = "DOP853", top_population_tol: float = 1e-7,
           g2_floor: float = 1e-12) -> Trajectory:
    """Integrate the master equation along a piecewise-linear drive schedule.

    Records ``samples`` evenly spaced times plus every segment boundary.
    ``record_displacement`` shifts the frame of the *recorded observables*
    only: each sampled state is conjugated by D(-d) before populations and
    moments are read off (the stored states stay in the evolution frame).
    ``moment_ref`` adds a moment-loss record against that coherent amplitude.

    Raises TruncationOverflowError if the top two Fock levels accumulate more
    than ``top_population_tol`` population, and IntegratorFailureError if the
    adaptive integrator gives up; both carry the partial trajectory.
    """
    dim = state0.dim
    rho = state0.density().astype(complex)
    total = schedule.total_duration
    grid = np.linspace(0.0, total, samples)
    bounds = schedule.boundaries()
    record_times = np.unique(np.concatenate([grid, bounds]))

    disp = None
    if record_displacement is not None and record_displacement != 0:
        disp = displacement_operator(record_displacement, dim)

    ns = np.arange(dim)
    a_op, _ = ladder_operators(dim)

    rec = {k: [] for k in ("t", "n", "a", "p0", "p1", "p2", "g2", "tr", "ml")}
    kept = [] if keep_states else None

    def record(t_abs, rho_now):
        if disp is not None:
            r = disp.conj().T @ rho_now @ disp
        else:
            r = rho_now
        pops = np.real(np.diag(r))
        tr = float(pops.sum())
        nbar = float(np.dot(ns, pops))
        nn1 = max(float(np.dot(ns * (ns - 1.0), pops)), 0.0)
        rec["t"].append(t_abs)
        rec["n"].append(nbar)
        rec["a"].append(complex(np.trace(r @ a_op)))
        rec["p0"].append(pops[0])
        rec["p1"].append(pops[1] if dim > 1 else 0.0)
        rec["p2"].append(pops[2] if dim > 2 else 0.0)
        rec["g2"].append(nn1 / nbar**2 if nbar > g2_floor else np.nan)
        rec["tr"].append(abs(tr - 1.0))
        if moment_ref is not None:
            rec["ml"].append(_coherent_moment_loss(QuantumState(r), moment_ref))
        if keep_states:
            kept.append(rho_now.copy())
        top = pops[-1] + (pops[-2] if dim > 1 else 0.0)
        if top > top_population_tol:
            raise TruncationOverflowError(t_abs, top, partial=_build(rec, kept))

    def _build(rec, kept):
        if not rec["t"]:
            return None
        return Trajectory(
            times=np.array(rec["t"]),
            n_expect=np.array(rec["n"]),
            a_expect=np.array(rec["a"]),
            p0=np.array(rec["p0"]),
            p1=np.array(rec["p1"]),
            p2=np.array(rec["p2"]),
            g2=np.array(rec["g2"]),
            trace_err=np.array(rec["tr"]),
            moment_loss=np.array(rec["ml"]) if rec["ml"] else None,
            states=kept,
            flags=["truncation_warning"] if state0.truncation_warning else [],
        )

    record(0.0, rho)

    for seg, b0, b1 in zip(schedule.segments, bounds[:-1], bounds[1:]):
        hstat, d1, d2, a, adag, nmat = _segment_hamiltonian_parts(
            seg, schedule.frame, schedule.blockade_n, kerr, dim)
        dur = seg.duration_s
        l1s, l1e = seg.l1_start, seg.l1_end
        l2s, l2e = seg.l2_start, seg.l2_end

        def rhs(t, y):
            f = t / dur
            l1 = l1s + (l1e - l1s) * f
            l2 = l2s + (l2e - l2s) * f
            h = hstat + l1 * d1 + np.conj(l1) * d1.conj().T
            if l2 != 0:
                h = h + l2 * d2 + np.conj(l2) * d2.conj().T
            r = y.reshape(dim, dim)
            dr = -1j * (h @ r - r @ h)
            dr += kappa * (a @ r @ adag - 0.5 * (nmat @ r + r @ nmat))
            return dr.ravel()

        inner = record_times[(record_times > b0 + 1e-18 * total)
                             & (record_times <= b1)]
        t_eval = np.clip(inner - b0, 0.0, dur)
        if t_eval.size == 0 or t_eval[-1] < dur:
            t_eval = np.append(t_eval, dur)
        sol = solve_ivp(rhs, (0.0, dur), rho.ravel(), t_eval=t_eval,
                        method=method, rtol=rtol, atol=atol)
        if sol.status != 0:
            t_reached = sol.t[-1] if sol.t.size else b0
            raise IntegratorFailureError(b0 + t_reached, sol.message,
                                         partial=_build(rec, kept))
        for t_loc, col in zip(sol.t, sol.y.T):
            record(b0 + t_loc, col.reshape(dim, dim))
        rho = sol.y[:, -1].reshape(dim, dim)

    return _build(rec, kept)
