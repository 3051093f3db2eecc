"""Inference harness for the document-shift toolkit's oracle protocols."""

from .backends import MaskedLMBackend, OracleServerConfig, PredictorBackend
from .protocol import PROTOCOL_VERSION, handle_request, serve_stdio, serve_tcp

__version__ = "0.1.0"

__all__ = [
    "MaskedLMBackend",
    "OracleServerConfig",
    "PredictorBackend",
    "PROTOCOL_VERSION",
    "handle_request",
    "serve_stdio",
    "serve_tcp",
    "__version__",
]
