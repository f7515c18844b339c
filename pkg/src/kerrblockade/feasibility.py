"""Physical-parameter chain: Kerr strength, four-wave-mixing coupling, and
pump-power budgets from cavity and material parameters.

All frequencies and rates are rad/s at the interfaces, powers in watts,
volumes in m^3, and chi3 in m^2/V^2. Quantities quoted in MHz or ns elsewhere
convert at the boundary as plain 1e6 s^-1 and 1e-9 s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import epsilon_0, hbar

from .protocol import alpha_from_drive, derive_blockade_params, peak_blockade_occupation


@dataclass(frozen=True)
class CavityMode:
    """One resonance of the triply resonant cavity.

    ``kappa`` defaults to omega/Q when not given explicitly; the explicit
    override exists because quoted decay rates do not always follow that
    convention.
    """

    omega: float                 # rad/s
    q_factor: float
    kappa: float | None = None   # rad/s
    veff_m3: float | None = None     # Kerr effective volume
    vmode_m3: float | None = None    # field-normalization volume
    detuning: float = 0.0
    spacing: float = 0.0         # ladder spacing for the triply resonant comb

    def __post_init__(self):
        if self.omega <= 0 or self.q_factor <= 0:
            raise ValueError("omega and Q must be positive")
        if self.veff_m3 is not None and self.veff_m3 <= 0:
            raise ValueError("effective volume must be positive")
        if self.vmode_m3 is not None and self.vmode_m3 <= 0:
            raise ValueError("mode volume must be positive")
        if self.kappa is None:
            object.__setattr__(self, "kappa", self.omega / self.q_factor)


@dataclass(frozen=True)
class MaterialParams:
    chi3_m2_v2: float
    epsilon_r: float
    reference_permittivity: float | None = None   # F/m; defaults to eps0*eps_r

    def __post_init__(self):
        if self.chi3_m2_v2 < 0:
            raise ValueError("chi3 must be nonnegative")
        if self.epsilon_r < 1:
            raise ValueError("relative permittivity must be >= 1")
        if self.reference_permittivity is None:
            object.__setattr__(self, "reference_permittivity",
                               epsilon_0 * self.epsilon_r)


@dataclass(frozen=True)
class ModeFieldGrid:
    """Uniform 3-D sampling of the three mode profiles, max|phi_i| = 1."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    chi3_map: np.ndarray | None = None

    def __post_init__(self):
        shape = (len(self.x), len(self.y), len(self.z))
        for name in ("phi1", "phi2", "phi3"):
            prof = np.asarray(getattr(self, name), dtype=complex)
            if prof.shape != shape:
                raise ValueError(f"{name} shape {prof.shape} != grid shape {shape}")
            if abs(np.abs(prof).max() - 1.0) > 1e-6:
                raise ValueError(f"{name} must be normalized so max|phi| = 1")
            object.__setattr__(self, name, prof)
        if self.chi3_map is not None and np.asarray(self.chi3_map).shape != shape:
            raise ValueError("chi3 map shape does not match the grid")


def kerr_strength(mode: CavityMode, material: MaterialParams) -> float:
    """Single-photon Kerr shift as a rate, 3 hbar omega^2 chi3 / (4 eps0 Veff eps_r^2)."""
    if mode.veff_m3 is None:
        raise ValueError("CavityMode needs veff_m3 for the Kerr strength")
    return (3.0 * hbar * mode.omega**2 * material.chi3_m2_v2
            / (4.0 * epsilon_0 * mode.veff_m3 * material.epsilon_r**2))


def overlap_integral(fields: ModeFieldGrid) -> complex:
    """Trapezoidal quadrature of chi3(r) * phi1*^2 * phi2 * phi3 over the grid.

    Returns m^5/V^2 when a chi3 map is present, m^3 otherwise.
    """
    integrand = np.conj(fields.phi1) ** 2 * fields.phi2 * fields.phi3
    if fields.chi3_map is not None:
        integrand = integrand * fields.chi3_map
    part = np.trapezoid(integrand, fields.z, axis=2)
    part = np.trapezoid(part, fields.y, axis=1)
    return complex(np.trapezoid(part, fields.x, axis=0))


def fwm_beta(modes, material: MaterialParams, overlap: complex) -> complex:
    """Four-wave-mixing two-photon coupling rate between the three modes.

    beta = (3 eps0 hbar / 8) * sqrt(w1^2 w2 w3 / (V1^2 V2 V3 e1^2 e2 e3)) * overlap,
    with reference permittivities e_i in F/m and mode volumes in m^3. The
    explicit hbar makes beta a rate; ``overlap`` must carry the chi3 factor
    (units m^5/V^2).
    """
    m1, m2, m3 = modes
    for m in (m1, m2, m3):
        if m.vmode_m3 is None:
            raise ValueError("all three CavityModes need vmode_m3")
    eps = material.reference_permittivity
    radicand = (m1.omega**2 * m2.omega * m3.omega
                / (m1.vmode_m3**2 * m2.vmode_m3 * m3.vmode_m3 * eps**4))
    return (3.0 * epsilon_0 * hbar / 8.0) * math.sqrt(radicand) * overlap


def beta_shortcut(kerr: float, ratio: float = 0.01) -> float:
    """Conservative coupling estimate used when no field data is available."""
    return ratio * kerr


def one_photon_power(l1: complex, omega: float, kappa: float) -> float:
    """Input power sustaining the one-photon drive, hbar*omega*|l1|^2/kappa."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return hbar * omega * abs(l1) ** 2 / kappa


def steady_mode_field(a_in: complex, kappa2: float, delta: float) -> complex:
    """Steady classical mode field sqrt(kappa2)*a_in / (kappa2/2 - i*delta)."""
    if kappa2 <= 0:
        raise ValueError("kappa2 must be positive")
    return math.sqrt(kappa2) * a_in / (kappa2 / 2.0 - 1j * delta)


def two_photon_power(l2: complex, beta: float, kappa: float, delta2: float,
                     omega1: float, omega2: float) -> float:
    """Pump power per two-photon-drive laser (the two pumps are symmetric).

    P2 = (|l2|/beta) * ((kappa/2)^2 + delta2^2) / (2 kappa) * hbar*sqrt(w1 w2);
    P3 equals P2 under the symmetric-detuning assumption.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return (abs(l2) / beta * ((kappa / 2.0) ** 2 + delta2**2) / (2.0 * kappa)
            * hbar * math.sqrt(omega1 * omega2))


@dataclass(frozen=True)
class PowerBudget:
    """Derived drive amplitudes and pump powers at one working point."""

    kerr: float
    beta: float
    alpha: float
    l_nl: complex
    l1: complex
    l2: complex
    delta: float
    p1_watt: float
    p2_watt: float
    p3_watt: float
    a2: complex = 0.0
    a3: complex = 0.0
    a2_in: complex = 0.0
    a3_in: complex = 0.0


def power_budget(mode: CavityMode, material: MaterialParams, alpha: float,
                 n: int = 1, beta: float | None = None,
                 delta2: float = 0.0) -> PowerBudget:
    """Full chain from cavity/material parameters to pump powers at amplitude alpha."""
    kerr = kerr_strength(mode, material)
    if beta is None:
        beta = beta_shortcut(kerr) if kerr > 0 else 0.0
    if kerr == 0 or alpha == 0:
        return PowerBudget(kerr, beta, alpha, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    params = derive_blockade_params(kerr, alpha, n, mode.kappa)
    omega2 = mode.omega - mode.spacing
    p1 = one_photon_power(params.l1, mode.omega, mode.kappa)
    p2 = two_photon_power(params.l2, beta, mode.kappa, delta2, mode.omega, omega2)
    # classical input fields consistent with the symmetric power split
    a2_in = math.sqrt(p2 / (hbar * omega2))
    a2 = steady_mode_field(a2_in, mode.kappa, delta2)
    a3 = steady_mode_field(a2_in, mode.kappa, -delta2)
    return PowerBudget(kerr, beta, alpha, params.l_nl, params.l1, params.l2,
                       params.delta, p1, p2, p2, a2, a3, a2_in, a2_in)


def alpha_for_peak_occupation(target: float, kerr: float, kappa: float,
                              n: int = 1, dim: int = 15,
                              alpha_max: float = 2e4):
    """Smallest alpha whose displaced-frame hold reaches the target peak <n>.

    The peak occupation grows monotonically with alpha toward a ceiling below
    1; returns None when the target exceeds the reachable ceiling.
    """
    if target <= 0:
        return 0.0

    def peak(alpha):
        return peak_blockade_occupation(2 * kerr * alpha, kappa, n, dim)[0]

    lo, hi = 0.0, 1.0
    while peak(hi) < target:
        hi *= 2.0
        if hi > alpha_max:
            return None
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if peak(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def power_for_target_occupation(target: float, kerr: float, kappa: float,
                                omega: float, n: int = 1, dim: int = 15):
    """One-photon pump power needed to reach a target peak occupation.

    Returns (alpha, p1_watt) or (None, None) when unreachable.
    """
    alpha = alpha_for_peak_occupation(target, kerr, kappa, n, dim)
    if alpha is None:
        return None, None
    params = derive_blockade_params(kerr, alpha, n, kappa) if alpha else None
    p1 = one_photon_power(params.l1, omega, kappa) if alpha else 0.0
    return alpha, p1


def occupation_at_fixed_power(p1_watt: float, kerr: float, kappa: float,
                              omega: float, n: int = 1, dim: int = 15):
    """Peak displaced-frame occupation achievable at a fixed one-photon power.

    Inverts the drive magnitude at that power to the working-point amplitude,
    then simulates the hold. Returns (alpha, l_nl, n_peak).
    """
    l1_mag = math.sqrt(p1_watt * kappa / (hbar * omega))
    l_nl, alpha = alpha_from_drive(l1_mag, kerr, n, kappa)
    n_peak, _ = peak_blockade_occupation(l_nl, kappa, n, dim)
    return alpha, l_nl, n_peak


def power_map(axis: str, values, mode: CavityMode, material: MaterialParams,
              targets, n: int = 1, dim: int = 15,
              kappa_ref: float | None = None, q_ref: float = 1e7):
    """Sweep V_eff or Q and tabulate the power needed per target occupation.

    ``axis`` is "veff" or "q". For the Q sweep, kappa scales as
    kappa_ref * (q_ref / Q) when kappa_ref is given, else omega/Q. Rows are
    (axis value, target, alpha, l_nl, |l1|, p1_watt, reachable); unreachable
    targets are flagged rather than aborting the sweep.
    """
    if axis not in ("veff", "q"):
        raise ValueError("axis must be 'veff' or 'q'")
    rows = []
    for v in values:
        if axis == "veff":
            m = CavityMode(mode.omega, mode.q_factor, mode.kappa, veff_m3=v,
                           vmode_m3=mode.vmode_m3)
            kerr = kerr_strength(m, material)
            kappa = m.kappa
        else:
            kerr = kerr_strength(mode, material)
            kappa = (kappa_ref * (q_ref / v)) if kappa_ref is not None else mode.omega / v
        for target in targets:
            alpha = alpha_for_peak_occupation(target, kerr, kappa, n, dim)
            if alpha is None:
                rows.append((v, target, math.nan, math.nan, math.nan, math.nan, False))
                continue
            params = derive_blockade_params(kerr, alpha, n, kappa)
            p1 = one_photon_power(params.l1, mode.omega, kappa)
            rows.append((v, target, alpha, abs(params.l_nl), abs(params.l1), p1, True))
    return rows
