"""Truncated-Fock-space linear algebra for a single cavity mode.

Operators are plain dense complex ndarrays of shape (dim, dim); units are
rad/s for Hamiltonians and dimensionless for ladder/displacement operators.
States are wrapped in :class:`QuantumState` so that pure kets and density
matrices flow through the same observable helpers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import (
    DimensionMismatchError,
    InvalidDimensionError,
    UndefinedCorrelationError,
)

MOMENT_WEIGHTS = (10.0, 1.0, 1.0, 1.0)


def _check_dim(dim):
    if not isinstance(dim, (int, np.integer)) or dim < 2:
        raise InvalidDimensionError(f"Fock truncation must be an integer >= 2, got {dim!r}")


def ladder_operators(dim: int):
    """Annihilation and creation operators on a ``dim``-level Fock space.

    a[m, m+1] = sqrt(m+1); the creation operator is the conjugate transpose.
    """
    _check_dim(dim)
    a = np.zeros((dim, dim), dtype=complex)
    ms = np.arange(dim - 1)
    a[ms, ms + 1] = np.sqrt(ms + 1.0)
    return a, a.conj().T


def number_operator(dim: int) -> np.ndarray:
    _check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def parity_operator(dim: int) -> np.ndarray:
    _check_dim(dim)
    return np.diag((-1.0) ** np.arange(dim)).astype(complex)


def require_hermitian(op: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Validate Hermiticity to ``tol`` relative; returns the operator."""
    scale = max(np.abs(op).max(), 1.0)
    dev = np.abs(op - op.conj().T).max()
    if dev > tol * scale:
        raise ValueError(f"operator not Hermitian: max deviation {dev:.3e} (scale {scale:.3e})")
    return op


@dataclass(frozen=True)
class QuantumState:
    """Pure ket (1-D array) or density matrix (2-D array) on a truncated space.

    ``truncation_warning`` is set by constructors that detect the truncation
    may be too small to faithfully hold the state.
    """

    data: np.ndarray
    truncation_warning: bool = False

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=complex)
        if arr.ndim not in (1, 2):
            raise ValueError("state must be a vector or a square matrix")
        if arr.ndim == 2 and arr.shape[0] != arr.shape[1]:
            raise ValueError("density matrix must be square")
        if arr.shape[0] < 2:
            raise InvalidDimensionError("state needs at least 2 Fock levels")
        if not np.all(np.isfinite(arr.view(float))):
            raise ValueError("state contains non-finite entries")
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density(self) -> np.ndarray:
        """Density-matrix representation (outer product for pure states)."""
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def populations(self) -> np.ndarray:
        if self.is_pure:
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data))


def validate_state(state: QuantumState, norm_tol=1e-10, herm_tol=1e-10,
                   trace_tol=1e-8, eig_floor=-1e-8) -> QuantumState:
    """Enforce physicality invariants; returns the state unchanged."""
    if state.is_pure:
        norm = np.linalg.norm(state.data)
        if abs(norm - 1.0) > norm_tol:
            raise ValueError(f"pure state norm deviates from 1 by {abs(norm - 1.0):.3e}")
    else:
        rho = state.data
        require_hermitian(rho, herm_tol)
        tr = np.trace(rho).real
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace deviates from 1 by {abs(tr - 1.0):.3e}")
        min_eig = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if min_eig < eig_floor:
            raise ValueError(f"density matrix has negative eigenvalue {min_eig:.3e}")
    return state


def fock_state(n: int, dim: int) -> QuantumState:
    _check_dim(dim)
    if not 0 <= n < dim:
        raise InvalidDimensionError(f"Fock level {n} outside truncation {dim}")
    ket = np.zeros(dim, dtype=complex)
    ket[n] = 1.0
    return QuantumState(ket)


def vacuum_state(dim: int) -> QuantumState:
    return fock_state(0, dim)


def coherent_state(alpha: complex, dim: int) -> QuantumState:
    """Coherent state, renormalized to unit norm after truncation.

    Sets the truncation warning when |alpha|^2 > dim - 5|alpha|, i.e. when the
    Poisson tail is not comfortably inside the truncated space.
    """
    _check_dim(dim)
    alpha = complex(alpha)
    ns = np.arange(dim)
    if alpha == 0:
        ket = np.zeros(dim, dtype=complex)
        ket[0] = 1.0
        return QuantumState(ket)
    # log-space Poisson amplitudes: alpha^n / sqrt(n!) * exp(-|alpha|^2/2)
    log_mag = ns * np.log(abs(alpha)) - 0.5 * gammaln(ns + 1.0) - abs(alpha) ** 2 / 2.0
    phase = np.exp(1j * ns * np.angle(alpha))
    ket = np.exp(log_mag) * phase
    ket = ket / np.linalg.norm(ket)
    warn = abs(alpha) ** 2 > dim - 5.0 * abs(alpha)
    return QuantumState(ket, truncation_warning=bool(warn))


def thermal_state(nbar: float, dim: int) -> QuantumState:
    """Thermal (geometric-population) state with mean ``nbar``, renormalized."""
    _check_dim(dim)
    if nbar < 0:
        raise ValueError("mean occupation must be nonnegative")
    if nbar == 0:
        return QuantumState(np.diag(np.r_[1.0, np.zeros(dim - 1)]).astype(complex))
    ns = np.arange(dim)
    pops = (nbar / (1.0 + nbar)) ** ns / (1.0 + nbar)
    pops = pops / pops.sum()
    return QuantumState(np.diag(pops).astype(complex))


@lru_cache(maxsize=32)
def _displacement_eigensystem(dim: int):
    # Hermitian generator i(adag - a); D(r) = expm(r(adag - a)) for real r.
    a, adag = ladder_operators(dim)
    herm = 1j * (adag - a)
    mu, v = np.linalg.eigh(herm)
    return mu, v


def displacement_operator(alpha: complex, dim: int) -> np.ndarray:
    """Matrix exponential of (alpha * adag - conj(alpha) * a).

    Evaluated through the eigendecomposition of the fixed generator
    i(adag - a) combined with number-operator phase rotations, which is the
    exact matrix exponential up to round-off and stays unitary to truncation
    error.
    """
    _check_dim(dim)
    alpha = complex(alpha)
    r = abs(alpha)
    mu, v = _displacement_eigensystem(dim)
    core = (v * np.exp(-1j * r * mu)) @ v.conj().T
    if r == 0.0:
        return core
    theta = np.angle(alpha)
    rot = np.exp(1j * theta * np.arange(dim))
    return (rot[:, None] * core) * rot.conj()[None, :]


def expectation(op: np.ndarray, state: QuantumState) -> complex:
    """<psi|op|psi> for pure states, Tr(rho @ op) for density matrices."""
    op = np.asarray(op)
    if op.shape != (state.dim, state.dim):
        raise DimensionMismatchError(
            f"operator shape {op.shape} does not match state dim {state.dim}"
        )
    if state.is_pure:
        return complex(np.vdot(state.data, op @ state.data))
    return complex(np.trace(state.data @ op))


def g2_zero(state: QuantumState, floor: float = 1e-12) -> float:
    """Zero-delay second-order correlation <adag adag a a> / <adag a>^2.

    Only the Fock populations enter. Raises UndefinedCorrelationError when
    the mean photon number is below ``floor``.
    """
    pops = state.populations()
    ns = np.arange(state.dim)
    nbar = float(np.dot(ns, pops))
    if nbar < floor:
        raise UndefinedCorrelationError(
            f"mean photon number {nbar:.3e} below floor {floor:.1e}"
        )
    nn1 = float(np.dot(ns * (ns - 1.0), pops))
    return max(nn1, 0.0) / nbar**2


def moment_deltas(state: QuantumState, alpha: complex):
    """Mismatches of the first field moments against a coherent target.

    Returns (d1, d2, d3, d4) with d1 = <a> - alpha, d2 = <adag a> - |alpha|^2,
    d3 = <a^2> - alpha^2, d4 = <a^3> - alpha^3.
    """
    a, _ = ladder_operators(state.dim)
    a2 = a @ a
    rho = state.density()
    ea = np.trace(rho @ a)
    en = np.trace(rho @ (a.conj().T @ a)).real
    ea2 = np.trace(rho @ a2)
    ea3 = np.trace(rho @ (a2 @ a))
    alpha = complex(alpha)
    return (
        complex(ea - alpha),
        complex(en - abs(alpha) ** 2),
        complex(ea2 - alpha**2),
        complex(ea3 - alpha**3),
    )


def moment_loss(state: QuantumState, alpha: complex,
                weights=MOMENT_WEIGHTS) -> float:
    """Weighted sum of moment-mismatch magnitudes, c1|d1| + ... + c4|d4|."""
    deltas = moment_deltas(state, alpha)
    return float(sum(w * abs(d) for w, d in zip(weights, deltas)))


def smoothed_moment_loss(state: QuantumState, alpha: complex,
                         weights=MOMENT_WEIGHTS, eps: float = 1e-12) -> float:
    """Moment loss with |z| replaced by sqrt(|z|^2 + eps^2).

    Differentiable at the zeros; for small eps the minima move by less than
    the optimizer's convergence tolerance.
    """
    deltas = moment_deltas(state, alpha)
    return float(sum(w * np.sqrt(abs(d) ** 2 + eps**2) for w, d in zip(weights, deltas)))


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Rectangular grid over Re(beta), Im(beta) with optional sampled values."""

    re: np.ndarray
    im: np.ndarray
    values: np.ndarray | None = None
    out_of_range: bool = False

    def __post_init__(self):
        re = np.asarray(self.re, dtype=float)
        im = np.asarray(self.im, dtype=float)
        if re.size < 2 or im.size < 2:
            raise ValueError("grid axes need at least 2 points")
        if np.any(np.diff(re) <= 0) or np.any(np.diff(im) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_bounds(cls, re_min, re_max, n_re, im_min, im_max, n_im):
        return cls(np.linspace(re_min, re_max, n_re), np.linspace(im_min, im_max, n_im))

    def integral(self) -> float:
        """Trapezoidal integral of the sampled values over the grid."""
        if self.values is None:
            raise ValueError("grid carries no values")
        return float(np.trapezoid(np.trapezoid(self.values, self.im, axis=1), self.re))


def wigner(state: QuantumState, grid: PhaseSpaceGrid) -> PhaseSpaceGrid:
    """Wigner function via the displaced-parity form.

    W(beta) = (2/pi) Tr[rho D(beta) P D(beta)^dag] with P = diag((-1)^n), so
    that the integral over the complex plane (dRe dIm) is 1. Grid points with
    |beta|^2 > dim/2 flag the result as outside the reliable truncation
    region.
    """
    dim = state.dim
    signs = (-1.0) ** np.arange(dim)
    mu, v = _displacement_eigensystem(dim)
    ns = np.arange(dim)
    rho = None if state.is_pure else state.data
    vals = np.empty((grid.re.size, grid.im.size))
    for i, x in enumerate(grid.re):
        for j, y in enumerate(grid.im):
            beta = x + 1j * y
            r = abs(beta)
            core = (v * np.exp(-1j * r * mu)) @ v.conj().T
            if r > 0:
                rot = np.exp(1j * np.angle(beta) * ns)
                d = (rot[:, None] * core) * rot.conj()[None, :]
            else:
                d = core
            if state.is_pure:
                phi = d.conj().T @ state.data
                vals[i, j] = (2.0 / np.pi) * float(np.dot(signs, np.abs(phi) ** 2))
            else:
                m = d.conj().T @ rho @ d
                vals[i, j] = (2.0 / np.pi) * float(np.dot(signs, np.real(np.diag(m))))
    r2max = max(grid.re[0] ** 2, grid.re[-1] ** 2) + max(grid.im[0] ** 2, grid.im[-1] ** 2)
    flagged = bool(r2max > dim / 2.0)
    return PhaseSpaceGrid(grid.re, grid.im, values=vals,
                          out_of_range=flagged or grid.out_of_range)
