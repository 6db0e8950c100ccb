"""Exception hierarchy shared by all repcx modules.

Every error carries a stable machine-greppable code so the CLI can print
one `CODE: message` line to stderr and map the class to an exit status
(validation/format -> 1, I/O -> 2).
"""


class RepcxError(Exception):
    """Base class for all repcx-specific failures."""

    code = "REPCX_E"


class FormatError(RepcxError):
    """A file does not conform to its documented binary layout."""

    code = "REPCX_E_FORMAT"


class UnsupportedDtypeError(FormatError):
    """A file declares a dtype outside the supported set."""

    code = "REPCX_E_DTYPE"


class ValidationError(RepcxError):
    """Well-formed input with invalid content (shapes, ranges, non-finite)."""

    code = "REPCX_E_VALIDATION"


class DimensionError(ValidationError):
    """Array dimensions incompatible with the requested operation."""

    code = "REPCX_E_DIMENSION"


class ParameterError(ValidationError):
    """An argument violates its documented range or combination rules."""

    code = "REPCX_E_PARAMETER"


class InsufficientDataError(ValidationError):
    """The operation needs more samples than the input provides."""

    code = "REPCX_E_INSUFFICIENT_DATA"
