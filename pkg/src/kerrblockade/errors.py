"""Exception types shared across the package."""


class KerrBlockadeError(Exception):
    """Base class for errors raised by this package."""


class InvalidDimensionError(KerrBlockadeError):
    """Fock truncation too small for the requested construction."""


class DimensionMismatchError(KerrBlockadeError):
    """Operator and state live on different truncated spaces."""


class UndefinedCorrelationError(KerrBlockadeError):
    """g2(0) requested for a state with mean photon number below the floor."""


class TruncationOverflowError(KerrBlockadeError):
    """Population reached the top of the truncated Fock space during evolution.

    Carries the time stamp at which the overflow was detected and the partial
    trajectory accumulated so far (may be None).
    """

    def __init__(self, time_s, population, partial=None):
        self.time_s = time_s
        self.population = population
        self.partial = partial
        super().__init__(
            f"top-two-level population {population:.3e} exceeded tolerance "
            f"at t={time_s:.6e} s"
        )


class IntegratorFailureError(KerrBlockadeError):
    """The adaptive integrator failed (e.g. step size underflow)."""

    def __init__(self, time_s, message, partial=None):
        self.time_s = time_s
        self.partial = partial
        super().__init__(f"integration failed near t={time_s:.6e} s: {message}")


class MultiRootError(KerrBlockadeError):
    """Drive-magnitude inversion found several consistent amplitudes.

    ``roots`` lists all (lambda_nl, alpha) pairs; the caller selects one.
    """

    def __init__(self, roots):
        self.roots = list(roots)
        pretty = ", ".join(f"alpha={a:.6g}" for _, a in self.roots)
        super().__init__(f"drive magnitude has multiple consistent roots: {pretty}")


class ConfigError(KerrBlockadeError):
    """Invalid or missing configuration entry; ``keypath`` names the culprit."""

    def __init__(self, keypath, message):
        self.keypath = keypath
        super().__init__(f"{keypath}: {message}")
