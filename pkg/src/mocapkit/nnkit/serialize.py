"""Versioned parameter files: JSON manifest + base64 float64 payloads.

A deliberately boring format: one JSON document holding a format version,
an arbitrary model manifest (architecture description), and every parameter
as little-endian float64 bytes. Writing is byte-deterministic, which keeps
repeated training runs with the same seed byte-identical on disk.
"""

import base64

import numpy as np

from ..errors import ValidationError
from ..serialize import dump_json, load_json

FORMAT_VERSION = 1


def save_params(path, manifest, params):
    """``params`` maps name -> Tensor or ndarray."""
    blob = {}
    for name in sorted(params):
        data = getattr(params[name], "data", params[name])
        arr = np.asarray(data, dtype="<f8")
        blob[name] = {
            "shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii"),
        }
    dump_json(
        {"format_version": FORMAT_VERSION, "manifest": manifest, "params": blob},
        path,
    )


def load_params(path):
    doc = load_json(path)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported parameter file version {version!r}")
    params = {}
    for name, entry in doc["params"].items():
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        params[name] = arr.reshape(entry["shape"])
    return doc["manifest"], params
