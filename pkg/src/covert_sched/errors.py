"""Exception hierarchy shared by all solvers."""


class CovertSchedError(Exception):
    """Base class for all package errors."""


class ModelError(CovertSchedError):
    """Invalid model data or dimension mismatch."""


class InputError(CovertSchedError, ValueError):
    """Malformed argument (non-symmetric matrix, bad probability, ...)."""


class DivergenceError(CovertSchedError):
    """An iteration failed to converge within its budget."""


class TruncationError(CovertSchedError, IndexError):
    """A ladder or belief index ran past the available depth."""


class DepthError(TruncationError):
    """Exact belief shifted off the end of its support."""


class ResourceError(CovertSchedError):
    """Requested problem size exceeds a configured cap."""


class NotApplicableError(CovertSchedError):
    """Operation requires a property the model does not have (e.g. unstable A)."""


class MixError(CovertSchedError):
    """Records with different metadata cannot be pooled."""
