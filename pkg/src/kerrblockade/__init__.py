"""Driven-dissipative Kerr-cavity photon blockade toolkit.

Simulates the single-mode master equation under piecewise-linear one- and
two-photon drives, derives and optimizes the displacement-based blockade
protocol, and evaluates pump-power budgets for triply resonant cavities.
"""

__version__ = "0.1.0"

from .dynamics import (  # noqa: F401
    DriveSchedule,
    Segment,
    Trajectory,
    build_blockade_hamiltonian,
    build_lab_hamiltonian,
    evolve,
)
from .fock import (  # noqa: F401
    PhaseSpaceGrid,
    QuantumState,
    coherent_state,
    displacement_operator,
    expectation,
    fock_state,
    g2_zero,
    ladder_operators,
    moment_loss,
    thermal_state,
    vacuum_state,
    wigner,
)
from .optimize import OptimizerConfig, optimize_initialization  # noqa: F401
from .protocol import (  # noqa: F401
    BlockadeParams,
    ErrorSpec,
    ProtocolConfig,
    ProtocolResult,
    alpha_from_drive,
    build_protocol_schedule,
    derive_blockade_params,
    linear_init_amplitude,
    run_protocol,
)
