"""
Binary checkpoint files

Layout: 8-byte magic, uint32 format version, uint32 manifest length, UTF-8
JSON manifest, little-endian float32 parameter blob, SHA-256 of everything
before the digest. The manifest lists (name, shape, offset) per array plus
free-form metadata.
"""

import hashlib
import json
import logging
import os
import struct
from collections import OrderedDict
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from ..errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"KIXCKPT\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII")
_DIGEST_SIZE = 32
_BLOB_DTYPE = np.dtype("<f4")


def write_arrays(path: str, arrays: Mapping[str, np.ndarray], metadata: Dict[str, Any]) -> str:
    """Write named arrays and metadata atomically (temp file, then rename)"""
    entries = []
    chunks = []
    offset = 0
    for name, array in arrays.items():
        blob = np.ascontiguousarray(array, dtype=_BLOB_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(np.shape(array)), "offset": offset})
        chunks.append(blob)
        offset += len(blob)

    manifest = json.dumps({"arrays": entries, "metadata": metadata}, sort_keys=True).encode("utf-8")
    body = _HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest)) + manifest + b"".join(chunks)
    digest = hashlib.sha256(body).digest()

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as f:
        f.write(body)
        f.write(digest)
    os.replace(tmp_path, path)
    logger.debug(f"Wrote {len(entries)} arrays ({offset} bytes) to {path}")
    return path


def read_arrays(path: str) -> Tuple["OrderedDict[str, np.ndarray]", Dict[str, Any]]:
    """Read a checkpoint, verifying magic, version and checksum"""
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        raw = f.read()

    if len(raw) < _HEADER.size + _DIGEST_SIZE:
        raise CheckpointError(f"checksum failure: {path} is truncated ({len(raw)} bytes)")
    body, digest = raw[:-_DIGEST_SIZE], raw[-_DIGEST_SIZE:]
    magic, version, manifest_len = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"version mismatch: {path} has format {version}, expected {FORMAT_VERSION}")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"checksum failure: {path} is corrupt or truncated")

    start = _HEADER.size
    manifest = json.loads(body[start:start + manifest_len].decode("utf-8"))
    blob = body[start + manifest_len:]
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in manifest["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        array = np.frombuffer(blob, dtype=_BLOB_DTYPE, count=count, offset=entry["offset"])
        arrays[entry["name"]] = array.astype(np.float32).reshape(entry["shape"])
    return arrays, manifest["metadata"]
