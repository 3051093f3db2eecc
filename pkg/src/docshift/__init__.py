"""docshift: distribution-shift generation and scoring for document-image datasets."""

from .model import (
    BoundingBox,
    Document,
    Entity,
    ShiftKind,
    Word,
    dataset_stats,
    normalize_box,
    parse_ie_document,
    serialize_document,
)
from .errors import (
    AlignmentError,
    ConfigError,
    DocshiftError,
    OracleError,
    ParseError,
    PlacementError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "Document", "Entity", "Word", "ShiftKind",
    "parse_ie_document", "serialize_document", "normalize_box", "dataset_stats",
    "DocshiftError", "ParseError", "ValidationError", "ConfigError",
    "OracleError", "PlacementError", "AlignmentError",
    "__version__",
]
