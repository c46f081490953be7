"""
Paths for the Experiment Utility
"""

from pathlib import Path
from typing import Sequence, Union

from src.core.errors import ArtifactIOError, ConfigError


class ExperimentPaths:
    """Output directories and input-file checks for the experiment CLI"""

    def __init__(self, root: Union[str, Path] = "data"):
        self.root = Path(root)
        self.datasets_dir = self.root / "datasets"
        self.weights_dir = self.root / "weights"
        self.results_dir = self.root / "results"
        self.reports_dir = self.root / "reports"
        self.drops_dir = self.root / "drops"

        # Matrix cells evaluated at the same time
        self.default_max_concurrency = 2

    def dataset_file(self, name: str) -> Path:
        return self.datasets_dir / f"{name}.jsonl"

    def weights_file(self, name: str) -> Path:
        return self.weights_dir / f"{name}.json"

    def validate_input_file(self, file_path: Union[str, Path], suffixes: Sequence[str] = (".json",)) -> Path:
        """Validate and return Path object for input file"""
        path = Path(file_path)
        if not path.exists():
            raise ArtifactIOError(f"Input file not found: {file_path}")
        if path.suffix not in suffixes:
            raise ConfigError(f"Input file must be one of {list(suffixes)}: {file_path}")
        return path
