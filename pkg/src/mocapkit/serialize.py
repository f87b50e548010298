"""Canonical JSON helpers.

All files the toolkit writes go through :func:`canonical_dumps` so that equal
inputs produce byte-identical output: keys sorted, floats rounded to 1e-6,
compact separators, newline-terminated. NaN is mapped to JSON null on the way
out and back to NaN on the way in (occluded marker positions are carried but
untrusted).
"""

import json
import math

import numpy as np

FLOAT_DECIMALS = 6


def _canon(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        if math.isnan(obj):
            return None
        return round(obj, FLOAT_DECIMALS)
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, dict):
        return {k: _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    return obj


def canonical_dumps(obj):
    """Serialize ``obj`` to the canonical JSON text form."""
    text = json.dumps(_canon(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return text + "\n"


def dump_json(obj, path):
    with open(path, "w") as fh:
        fh.write(canonical_dumps(obj))


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
