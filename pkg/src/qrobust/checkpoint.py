"""Model checkpoint files.

Layout::

    QROBUST-CKPT 1\\n
    <one-line JSON header>\\n
    <float64 little-endian parameter block>

The header always has ``family`` and ``shapes`` (one shape per parameter
array, in block order); the rest is family-specific (``num_qubits``,
``layers``, ``num_classes``, ``seed``, ...). Parameters are concatenated
in C order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"QROBUST-CKPT 1\n"


def write_checkpoint(path, header: dict, arrays) -> None:
    header = dict(header)
    header["shapes"] = [list(np.shape(a)) for a in arrays]
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    Path(path).write_bytes(MAGIC + line + b"\n" + blob)


def read_checkpoint(path):
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[len(MAGIC):end])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed header: {exc}") from None
    if "family" not in header or "shapes" not in header:
        raise FormatError(f"{path}: header lacks family/shapes")
    body = data[end + 1:]
    arrays = []
    offset = 0
    for shape in header["shapes"]:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if offset + nbytes > len(body):
            raise FormatError(f"{path}: parameter block truncated at byte {len(MAGIC) + end + 1 + offset}")
        arrays.append(np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64))
        offset += nbytes
    if offset != len(body):
        raise FormatError(f"{path}: {len(body) - offset} trailing bytes after parameter block")
    return header, arrays


def load_model(path):
    """Load either model family from a checkpoint."""
    header, arrays = read_checkpoint(path)
    family = header["family"]
    if family == "qvc":
        from .qvc import QvcModel

        return QvcModel.from_checkpoint(header, arrays)
    if family in ("mlp", "convnet"):
        from .classical import ClassicalModel

        return ClassicalModel.from_checkpoint(header, arrays)
    raise FormatError(f"{path}: unknown model family {family!r}")
