import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Type, TypeVar, Union

import orjson
import pandas as pd
from pydantic import BaseModel, ValidationError
from tenacity import RetryError, retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from src.core.config import logger
from src.core.errors import ArtifactIOError
from src.core.interfaces import ArtifactStoreInterface

ModelT = TypeVar("ModelT", bound=BaseModel)
PathLike = Union[str, Path]

ORJSON_OPTIONS = orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS

# ---------------------------------------------------
# File-backed Artifact Repository
# ---------------------------------------------------


def _to_plain(document: Any) -> Any:
    if isinstance(document, BaseModel):
        return document.model_dump(mode="json", by_alias=True)
    return document


def dumps(document: Any, sort_keys: bool = False) -> bytes:
    """Serialize a pydantic model or plain structure with orjson."""
    options = ORJSON_OPTIONS | (orjson.OPT_SORT_KEYS if sort_keys else 0)
    return orjson.dumps(_to_plain(document), option=options)


class ArtifactRepository(ArtifactStoreInterface):
    """
    Reads and writes experiment artifacts under one root directory.

    Writes go to a temporary file that is renamed into place, and are retried
    on transient OS errors before surfacing as ``ArtifactIOError``.
    """

    def __init__(self, root: PathLike = ".", max_retries: int = 3, retry_delay: float = 0.05):
        self.root = Path(root)
        self.max_retries = max_retries
        self.retry_delay = retry_delay

    def resolve(self, path: PathLike) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.root / path

    # ---- low-level --------------------------------------------------------

    def _retrying(self, fn, *args):
        wrapped = retry(
            stop=stop_after_attempt(self.max_retries),
            wait=wait_exponential(multiplier=self.retry_delay, max=1.0),
            retry=retry_if_exception_type(OSError),
            reraise=False,
        )(fn)
        try:
            return wrapped(*args)
        except RetryError as e:
            cause = e.last_attempt.exception()
            logger.error(f"Artifact operation failed after {self.max_retries} attempts: {cause}")
            raise ArtifactIOError(str(cause)) from cause

    @staticmethod
    def _atomic_write(path: Path, payload: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def write_bytes(self, path: PathLike, payload: bytes) -> Path:
        target = self.resolve(path)
        self._retrying(self._atomic_write, target, payload)
        logger.debug(f"✅ Wrote {len(payload)} bytes to {target}")
        return target

    def read_bytes(self, path: PathLike) -> bytes:
        target = self.resolve(path)
        if not target.exists():
            raise ArtifactIOError(f"Artifact not found: {target}")
        return self._retrying(target.read_bytes)

    # ---- documents --------------------------------------------------------

    def write_json(self, path: PathLike, document: Any, sort_keys: bool = False) -> Path:
        return self.write_bytes(path, dumps(document, sort_keys=sort_keys))

    def read_json(self, path: PathLike, model: Optional[Type[ModelT]] = None) -> Any:
        raw = self.read_bytes(path)
        try:
            data = orjson.loads(raw)
            return model.model_validate(data) if model is not None else data
        except (orjson.JSONDecodeError, ValidationError) as e:
            logger.error(f"Corrupt artifact {self.resolve(path)}: {e}")
            raise ArtifactIOError(f"Corrupt artifact {self.resolve(path)}: {e}") from e

    def write_jsonl(self, path: PathLike, records: Iterable[Any]) -> Path:
        payload = b"".join(dumps(record) + b"\n" for record in records)
        return self.write_bytes(path, payload)

    def read_jsonl(self, path: PathLike) -> Iterator[Dict[str, Any]]:
        raw = self.read_bytes(path)
        for line_no, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                yield orjson.loads(line)
            except orjson.JSONDecodeError as e:
                logger.error(f"Corrupt line {line_no} in {self.resolve(path)}: {e}")
                raise ArtifactIOError(f"Corrupt line {line_no} in {self.resolve(path)}: {e}") from e

    # ---- tables -----------------------------------------------------------

    def write_csv(self, path: PathLike, rows: Union[pd.DataFrame, Sequence[Dict[str, Any]]]) -> Path:
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
        return self.write_bytes(path, frame.to_csv(index=False).encode())

    def write_columns(self, path: PathLike, columns: Sequence[Sequence[float]], header: str = "") -> Path:
        """Whitespace-separated columns with an optional '#' header, readable by gnuplot."""
        lines = [f"# {header}"] if header else []
        lines.extend(" ".join(f"{value:.6g}" for value in row) for row in zip(*columns))
        return self.write_bytes(path, ("\n".join(lines) + "\n").encode())

    def exists(self, path: PathLike) -> bool:
        return self.resolve(path).exists()

    def list(self, pattern: str = "*") -> List[Path]:
        return sorted(self.root.glob(pattern))
