import math

import numpy as np
import pytest

from kerrblockade.dynamics import (
    DISPLACED,
    LAB,
    DriveSchedule,
    Segment,
    build_blockade_hamiltonian,
    build_lab_hamiltonian,
    concatenate,
    constant_schedule,
    evolve,
)
from kerrblockade.errors import InvalidDimensionError, TruncationOverflowError
from kerrblockade.fock import coherent_state, ladder_operators, vacuum_state

KAPPA = 1.934e8


def test_lab_hamiltonian_linear_drive():
    dim = 6
    a, adag = ladder_operators(dim)
    h = build_lab_hamiltonian(3.0e7, 0.0, 0.0, 0.0, dim)
    assert np.allclose(h, 3.0e7 * (a + adag))


def test_lab_hamiltonian_two_photon_element():
    l2 = 5.0e6
    h = build_lab_hamiltonian(0.0, l2, 0.0, 0.0, 8)
    assert h[2, 0] == pytest.approx(math.sqrt(2) * l2)


def test_lab_hamiltonian_diagonal():
    delta, kerr = -7.04e7, 4.4e6
    h = build_lab_hamiltonian(1e6, 2e6, delta, kerr, 10)
    for m in range(10):
        assert h[m, m].real == pytest.approx(delta * m + kerr * m * (m - 1))


def test_lab_hamiltonian_dim_guard():
    with pytest.raises(InvalidDimensionError):
        build_lab_hamiltonian(0.0, 1e6, 0.0, 0.0, 3)


def test_blockade_hamiltonian_n1_elements():
    l_nl = 1.76e7
    h = build_blockade_hamiltonian(l_nl, 1, 10)
    # the one-photon level decouples from the two-photon level
    assert h[2, 1] == 0.0
    # hand evaluation: adag(adag a - 1)|0> = -adag|0> = -|1>
    assert h[1, 0] == pytest.approx(-l_nl)


def test_blockade_hamiltonian_n2_elements():
    l_nl = 2.2e7
    h = build_blockade_hamiltonian(l_nl, 2, 12)
    assert h[3, 2] == 0.0
    # adag(adag a - 2)|1> = (1-2) adag |1> = -sqrt(2)|2>
    assert h[2, 1] == pytest.approx(-math.sqrt(2) * l_nl)


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment(-1e-9)
    with pytest.raises(ValueError):
        Segment(0.0)


def test_schedule_continuity():
    s1 = Segment(1e-9, 0.0, 1e8, 0.0, 0.0, 0.0)
    s2 = Segment(1e-9, 2e8, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        DriveSchedule((s1, s2))
    DriveSchedule((s1, Segment(1e-9, 2e8, 0.0, 0.0, 0.0, 0.0, allow_jump=True)))
    DriveSchedule((s1, Segment(1e-9, 1e8, 0.0, 0.0, 0.0, 0.0)))


def test_displaced_frame_rejects_l2():
    seg = Segment(1e-8, 1e7, 1e7, 1e6, 1e6, 0.0)
    with pytest.raises(ValueError):
        DriveSchedule((seg,), frame=DISPLACED)


def test_evolve_pure_decay_oracle():
    # H = 0, kappa > 0: <n>(t) = 4 exp(-kappa t)
    traj = evolve(coherent_state(2.0, 30), constant_schedule(10.0 / KAPPA, 0.0),
                  0.0, KAPPA, samples=60)
    expected = 4.0 * np.exp(-KAPPA * traj.times)
    rel = np.abs(traj.n_expect - expected) / np.maximum(expected, 1e-30)
    assert rel.max() < 1e-6


def test_evolve_resonant_linear_drive():
    # U = kappa = delta = 0, constant drive: <a>(t) = -i l1 t
    l1 = 2.0e8
    t_end = 5e-9
    traj = evolve(vacuum_state(20), constant_schedule(t_end, l1), 0.0, 0.0,
                  samples=40)
    expected = -1j * l1 * traj.times
    assert np.abs(traj.a_expect - expected).max() < 1e-6 * abs(l1 * t_end)


def _scalar_rk4_mean_field(segments, kappa, nstep_per_seg=6000):
    """Independent oracle: fixed-step RK4 on da/dt = -(i d + k/2) a - i l1(t)."""
    a = 0.0 + 0.0j
    for seg in segments:
        lam = 1j * seg.delta + kappa / 2.0
        dt = seg.duration_s / nstep_per_seg

        def f(t, y):
            l1 = seg.l1_start + (seg.l1_end - seg.l1_start) * t / seg.duration_s
            return -lam * y - 1j * l1

        for i in range(nstep_per_seg):
            t = i * dt
            k1 = f(t, a)
            k2 = f(t + dt / 2, a + dt / 2 * k1)
            k3 = f(t + dt / 2, a + dt / 2 * k2)
            k4 = f(t + dt, a + dt * k3)
            a = a + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return a


def test_evolve_linear_cavity_mean_field_oracle():
    # ramped drive with detuning and dissipation on, zero Kerr
    delta = -5.0e7
    segs = (
        Segment(2e-9, 0.0, 4e8j, 0.0, 0.0, delta),
        Segment(3e-9, 4e8j, 1e8j, 0.0, 0.0, delta),
    )
    sched = DriveSchedule(segs, frame=LAB)
    traj = evolve(vacuum_state(25), sched, 0.0, KAPPA, samples=30)
    oracle = _scalar_rk4_mean_field(segs, KAPPA)
    assert abs(traj.a_expect[-1] - oracle) < 1e-6 * max(abs(oracle), 1.0)


def test_trace_and_positivity_over_long_evolution():
    # kappa*t up to 10 with drive on: trace drift < 1e-8 per unit kappa*t,
    # minimum eigenvalue >= -1e-7 throughout
    l1 = 0.3 * KAPPA
    traj = evolve(vacuum_state(20), constant_schedule(10.0 / KAPPA, l1), 0.0,
                  KAPPA, samples=40, keep_states=True)
    kt = np.maximum(KAPPA * traj.times, 1e-12)
    assert (traj.trace_err / np.maximum(kt, 1.0)).max() < 1e-8
    assert traj.trace_err.max() < 1e-6
    for rho in traj.states[::4]:
        assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() >= -1e-7


def test_truncation_overflow_detected():
    # strong resonant drive in a tiny space runs into the ceiling
    with pytest.raises(TruncationOverflowError) as exc:
        evolve(vacuum_state(6), constant_schedule(40.0 / KAPPA, 2.0 * KAPPA),
               0.0, KAPPA, samples=200)
    assert exc.value.time_s > 0


def test_integrator_convergence_on_tolerance_halving():
    sched = constant_schedule(8.93e-8, 1.232e8 + 1.934e8j, -1.76e7, -7.04e7)
    base = evolve(coherent_state(2.0, 30), sched, 4.4e6, KAPPA, samples=50)
    tight = evolve(coherent_state(2.0, 30), sched, 4.4e6, KAPPA, samples=50,
                   rtol=0.5e-8, atol=0.5e-12)
    assert np.abs(base.p1 - tight.p1).max() < 1e-6


def test_record_displacement_frame():
    # recording displaced by alpha maps a coherent state to vacuum records
    alpha = 1.5
    traj = evolve(coherent_state(alpha, 30), constant_schedule(1e-12, 0.0),
                  0.0, 0.0, samples=3, record_displacement=alpha)
    assert traj.p0[0] == pytest.approx(1.0, abs=1e-8)
    assert traj.n_expect[0] == pytest.approx(0.0, abs=1e-8)


def test_trajectory_g2_nan_when_undefined():
    traj = evolve(vacuum_state(10), constant_schedule(1e-9, 0.0), 0.0, KAPPA,
                  samples=5)
    assert np.isnan(traj.g2).all()


def test_concatenate_and_peak():
    t1 = evolve(vacuum_state(12), constant_schedule(1e-9, 1e8), 0.0, 0.0,
                samples=10, keep_states=True)
    t2 = evolve(t1.final_state(), constant_schedule(1e-9, 1e8), 0.0, 0.0,
                samples=10, keep_states=True)
    joined = concatenate([t1, t2])
    assert np.all(np.diff(joined.times) > 0)
    assert joined.times[-1] == pytest.approx(2e-9)
    val, t, idx = joined.peak("n_expect")
    assert idx == len(joined.times) - 1
    # restricting the window must restrict the peak
    val_w, t_w, _ = joined.peak("n_expect", t_max=1e-9)
    assert t_w <= 1e-9 and val_w <= val


def test_reversed_negated_undoes_linear_displacement():
    segs = (
        Segment(2e-9, 0.0, 5e8j, 0.0, 0.0, 0.0),
        Segment(2e-9, 5e8j, 1e8j, 0.0, 0.0, 0.0),
    )
    sched = DriveSchedule(segs, frame=LAB)
    fwd = evolve(vacuum_state(25), sched, 0.0, 0.0, samples=10, keep_states=True)
    disp = fwd.a_expect[-1]
    assert abs(disp) > 0.5
    back = evolve(fwd.final_state(), sched.reversed_negated(), 0.0, 0.0,
                  samples=10)
    assert abs(back.a_expect[-1]) < 1e-6 * abs(disp)
