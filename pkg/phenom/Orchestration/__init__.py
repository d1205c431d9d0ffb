"""Orchestration module: command implementations and run manifests."""

# Explicit exports for easier importing
from phenom.Orchestration.embedder import WellEmbedder
from phenom.Orchestration.manifest import RunManifest

__all__ = [
    "RunManifest",
    "WellEmbedder"
]
