"""Exception hierarchy. Everything raised on purpose derives from
IsocycleError so callers (and the CLI) can tell intended failures from bugs.
"""


class IsocycleError(Exception):
    """Base class for all deliberate failures."""


class SingularModeError(IsocycleError):
    """A spectral resolvent was asked to invert a (near-)zero mode."""


class ModelError(IsocycleError):
    """A model definition failed validation; message carries a JSON pointer."""


class DomainError(IsocycleError):
    """An evaluation left the region where the representation is valid."""


class ConvergenceError(IsocycleError):
    """A fixed-point stage exhausted max_iter without meeting tol."""


class QuadratureError(IsocycleError):
    """The quadrature self-check (doubled panels) exceeded qtol."""


class FingerprintError(IsocycleError):
    """A solution file does not belong to the model it is used with."""
