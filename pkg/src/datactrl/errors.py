"""Exception hierarchy shared by all modules.

The CLI maps these onto its exit-code contract: validation errors are
exit 1, data-quality (rank / persistence of excitation) errors are
exit 2, infeasible synthesis problems are exit 3 and numerical
failures are exit 4.
"""


class DataCtrlError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DataCtrlError):
    """Malformed input: bad shapes, non-finite entries, bad parameters."""


class DimensionError(ValidationError):
    """Matrix dimensions incompatible with the requested operation."""


class RankError(DataCtrlError):
    """Data is rank deficient: persistence of excitation or a required
    full-rank condition fails."""


class InfeasibleError(DataCtrlError):
    """A synthesis program (SDP or constrained least squares) admits no
    solution for the given data."""


class NumericError(DataCtrlError):
    """An otherwise well-posed computation failed numerically."""
