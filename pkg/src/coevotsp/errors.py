"""Exception types shared across the package.

The CLI maps these onto exit codes: validation errors exit 1, runtime
errors exit 2, capacity errors exit 3.
"""


class StructuralError(ValueError):
    """Inputs violate a structural precondition (sizes, membership, dims)."""


class ParseError(ValueError):
    """A file could not be parsed; the message names the offending line/field."""


class ValidationError(ValueError):
    """A run configuration failed validation; the message names the field."""


class CapacityError(RuntimeError):
    """An exact computation exceeds its size limit (e.g. oracle n_max)."""


class IntegrityError(RuntimeError):
    """Cross-cycle bookkeeping is inconsistent (missing/misaligned records)."""
