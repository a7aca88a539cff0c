"""On-disk cache of solved value fields, keyed by a content hash.

Reads are lock-free; writes go to a temporary file followed by an atomic
rename, so concurrent workers never see a partial file.  The directory comes
from ``REACHNAV_CACHE_DIR``; setting it to ``off`` disables the disk layer.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from collections import OrderedDict
from dataclasses import asdict, is_dataclass
from pathlib import Path

from ..grid import ValueField

ENV_VAR = "REACHNAV_CACHE_DIR"

_MEMORY_SLOTS = 16
_memory: OrderedDict = OrderedDict()


def cache_dir():
    val = os.environ.get(ENV_VAR)
    if val is None:
        return Path.home() / ".cache" / "reachnav"
    if val.strip().lower() in ("", "off", "none"):
        return None
    return Path(val)


def _plain(obj):
    if is_dataclass(obj):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "value") and hasattr(obj, "name"):
        return obj.name
    return obj


def content_key(*parts):
    """Stable hex digest of bytes and JSON-able parts."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, (bytes, bytearray)):
            h.update(p)
        else:
            h.update(json.dumps(_plain(p), sort_keys=True, default=repr).encode())
        h.update(b"\x00")
    return h.hexdigest()[:32]


def cached_field(key, compute):
    """Return the field stored under ``key``, computing and storing it on a miss."""
    if key in _memory:
        _memory.move_to_end(key)
        return _memory[key]
    root = cache_dir()
    path = root / f"{key}.vf" if root is not None else None
    if path is not None and path.exists():
        vf = ValueField.load(path)
    else:
        vf = compute()
        if path is not None:
            root.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=root, suffix=".tmp")
            os.close(fd)
            try:
                vf.save(tmp)
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
    _memory[key] = vf
    while len(_memory) > _MEMORY_SLOTS:
        _memory.popitem(last=False)
    return vf


def clear_memory():
    _memory.clear()
