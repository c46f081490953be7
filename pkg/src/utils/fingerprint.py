"""
SHA-256 fingerprints of configurations, measurement streams and results.
"""

import hashlib
from typing import Any, Iterable

import numpy as np
import orjson
from pydantic import BaseModel

from src.core.config import SimConfig

HASH_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS


def document_hash(document: Any) -> str:
    """Hash of a JSON-compatible document with sorted keys."""
    if isinstance(document, BaseModel):
        document = document.model_dump(mode="json")
    return hashlib.sha256(orjson.dumps(document, option=HASH_OPTIONS)).hexdigest()


def config_hash(config: SimConfig) -> str:
    return document_hash(config.to_dict())


def array_hash(arrays: Iterable[np.ndarray]) -> str:
    """Hash of the raw bytes, shapes and dtypes of a sequence of arrays."""
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array)
        digest.update(str((array.shape, array.dtype.str)).encode())
        digest.update(array.tobytes())
    return digest.hexdigest()
