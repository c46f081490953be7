"""
Artifact persistence for the beam management simulator
"""

from .repository import ArtifactRepository, dumps

__all__ = ["ArtifactRepository", "dumps"]
