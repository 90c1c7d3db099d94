"""Model sidecar: serves text-infilling log-probabilities and label-word
probabilities over the line-delimited JSON scorer protocol."""

from .adapters import MASK, ModelAdapter, StubAdapter, load_adapter
from .server import PROTOCOL_NAME, SidecarConfig, serve

__all__ = [
    "MASK",
    "ModelAdapter",
    "PROTOCOL_NAME",
    "SidecarConfig",
    "StubAdapter",
    "load_adapter",
    "serve",
]
