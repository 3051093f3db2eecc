"""Exception hierarchy shared by all docshift modules."""


class DocshiftError(Exception):
    """Base class for all toolkit errors."""


class ParseError(DocshiftError):
    """Malformed annotation or sidecar record."""


class ValidationError(DocshiftError):
    """Structurally valid input violating a domain invariant."""


class ConfigError(DocshiftError):
    """Bad parameter or configuration value."""


class OracleError(DocshiftError):
    """Oracle unreachable, timed out, or protocol violation."""


class PlacementError(DocshiftError):
    """No feasible location for a move target on the page."""


class AlignmentError(DocshiftError):
    """Predictions do not line up with the gold dataset."""
