"""Parameter checkpoint file: versioned JSON container.

Each entry maps a parameter name to its shape and flat little-endian
float32 payload (base64). Round-trips bit-exactly; an arbitrary JSON
`header` field carries model configuration for shape validation on load.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from .tensor import Tensor

FORMAT_VERSION = 1


def _encode(arr: np.ndarray) -> dict:
    flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
    return {"shape": list(arr.shape), "data": base64.b64encode(flat.tobytes()).decode("ascii")}


def _decode(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    arr = np.frombuffer(raw, dtype="<f4").copy()
    shape = tuple(entry["shape"])
    if arr.size != int(np.prod(shape)):
        raise DataError(f"checkpoint entry has {arr.size} values for shape {shape}")
    return arr.reshape(shape)


def save_checkpoint(path, params: dict[str, Tensor], buffers: dict[str, np.ndarray],
                    header: dict | None = None) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "header": header or {},
        "params": {name: _encode(p.data) for name, p in sorted(params.items())},
        "buffers": {name: _encode(b) for name, b in sorted(buffers.items())},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_checkpoint(path):
    """Return (params, buffers, header); params are float32 leaf Tensors."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('version')!r}")
    params = {name: Tensor(_decode(e), requires_grad=True) for name, e in doc["params"].items()}
    buffers = {name: _decode(e) for name, e in doc["buffers"].items()}
    return params, buffers, doc.get("header", {})
