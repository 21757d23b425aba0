"""Binary weight checkpoints.

Layout: 4-byte magic ``SKIM``, little-endian uint32 version, uint64 manifest
length, UTF-8 JSON manifest ``{name: {"shape": [...], "offset": int}}`` with
offsets counted in float64 elements, then raw little-endian float64 data.
"""

import json
import struct

import numpy as np

from ..errors import CheckpointError

MAGIC = b"SKIM"
VERSION = 1


def _as_array(v):
    return np.asarray(v.data if hasattr(v, "requires_grad") else v, dtype="<f8")


def dumps(tensors):
    names = sorted(tensors)
    manifest = {}
    chunks = []
    offset = 0
    for name in names:
        arr = _as_array(tensors[name])
        manifest[name] = {"shape": list(arr.shape), "offset": offset}
        offset += arr.size
        chunks.append(np.ascontiguousarray(arr).tobytes())
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def loads(blob):
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, length = struct.unpack("<IQ", blob[4:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    manifest = json.loads(blob[16 : 16 + length].decode())
    body = np.frombuffer(blob, dtype="<f8", offset=16 + length)
    out = {}
    for name in sorted(manifest):
        entry = manifest[name]
        size = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        if start + size > body.size:
            raise CheckpointError(f"checkpoint truncated at {name!r}")
        out[name] = body[start : start + size].reshape(entry["shape"]).astype(np.float64)
    return out


def save(path, tensors):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
