"""
Protocol interfaces for the beam management simulator
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np


class ArtifactStoreInterface(ABC):
    """Interface for artifact persistence"""

    @abstractmethod
    def write_json(self, path: Union[str, Path], document: Any, sort_keys: bool = False) -> Path:
        """Write one JSON document"""
        pass

    @abstractmethod
    def read_json(self, path: Union[str, Path], model: Optional[type] = None) -> Any:
        """Read one JSON document, optionally validated into a model"""
        pass

    @abstractmethod
    def write_jsonl(self, path: Union[str, Path], records: Iterable[Any]) -> Path:
        """Write JSON-lines records"""
        pass

    @abstractmethod
    def read_jsonl(self, path: Union[str, Path]) -> Iterable[Dict[str, Any]]:
        """Iterate over JSON-lines records"""
        pass


class MetricsInterface(ABC):
    """Interface for run metrics collection"""

    @abstractmethod
    def record_stage(self, stage: str, seconds: float) -> None:
        """Record the duration of a pipeline stage"""
        pass

    @abstractmethod
    def increment(self, counter: str, amount: int = 1) -> None:
        """Increment a named counter"""
        pass

    @abstractmethod
    def get_metrics(self) -> Dict[str, Any]:
        """Get current metrics"""
        pass


class PredictorInterface(ABC):
    """Interface for trained beam predictors"""

    @abstractmethod
    def predict_proba(self, inputs: np.ndarray) -> np.ndarray:
        """Probabilities over Set A for a batch of inputs"""
        pass


class BeamPolicyInterface(ABC):
    """Interface for serving-beam selection policies"""

    @abstractmethod
    def rank(self, observation: Any) -> np.ndarray:
        """Set A beam indices ordered from most to least preferred"""
        pass
