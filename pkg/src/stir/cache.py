"""On-disk caches: embedding vectors (binary) and pipeline stage results (JSON).

One file per key, filename = hex content hash. Writes go through a
temp-file + rename so concurrent pipelines sharing a cache never observe
partial files; corrupted entries are treated as misses with a warning.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
import threading
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

_MAGIC = b"STE1"
_VERSION = 1
# magic(4) + version u16 + dim u32 + 6 pad bytes = 16-byte header
_HEADER = struct.Struct("<4sHI6x")


def content_key(*parts) -> str:
    """Hex content hash of an arbitrary tuple of key parts."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return hashlib.blake2b(key, digest_size=16).hexdigest()


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class EmbeddingCache:
    """Persistent float32 vector cache.

    Values are stored as a little-endian float32 array behind a 16-byte
    header (magic, version, dim); a stored entry may hold one vector or a
    stack of vectors, reshaped to (n, dim) on read.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._write_lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / key

    def get(self, key: str) -> np.ndarray | None:
        path = self._path(key)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return None
        except OSError as exc:
            logger.warning("cache read failed for %s: %s; treating as miss", key, exc)
            return None
        try:
            if len(data) < _HEADER.size:
                raise ValueError("truncated header")
            magic, version, dim = _HEADER.unpack_from(data)
            if magic != _MAGIC or version != _VERSION:
                raise ValueError(f"bad magic/version {magic!r}/{version}")
            body = data[_HEADER.size:]
            if dim == 0 or len(body) % (4 * dim) != 0:
                raise ValueError(f"body length {len(body)} not a multiple of dim {dim}")
            return np.frombuffer(body, dtype="<f4").reshape(-1, dim).copy()
        except ValueError as exc:
            logger.warning("corrupted cache entry %s (%s); treating as miss", key, exc)
            return None

    def put(self, key: str, value: np.ndarray):
        arr = np.atleast_2d(np.asarray(value, dtype=np.float32))
        data = _HEADER.pack(_MAGIC, _VERSION, arr.shape[1]) + arr.astype("<f4").tobytes()
        with self._write_lock:
            _atomic_write(self._path(key), data)

    def get_or_compute(self, key: str, compute) -> np.ndarray:
        cached = self.get(key)
        if cached is not None:
            return cached
        value = np.atleast_2d(np.asarray(compute(), dtype=np.float32))
        self.put(key, value)
        return value


class StageCache:
    """JSON cache for intermediate pipeline stage results."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._write_lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        try:
            with open(path) as f:
                return json.load(f)
        except FileNotFoundError:
            return None
        except (OSError, ValueError) as exc:
            logger.warning("corrupted stage cache entry %s (%s); treating as miss", key, exc)
            return None

    def put(self, key: str, value: dict):
        data = json.dumps(value, sort_keys=True).encode("utf-8")
        with self._write_lock:
            _atomic_write(self._path(key), data)
