"""JSON-lines trace output with fixed 17-significant-digit floats.

``json.dumps`` writes the shortest round-trip repr; the fixed format here
keeps traces byte-stable across Python versions.
"""
from __future__ import annotations

import json
import math
from typing import IO, Any

import numpy as np

TRACE_FORMAT = "crowdnav-trace"
TRACE_VERSION = 1


def _float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def dumps(obj: Any) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class TraceWriter:
    def __init__(self, f: IO[str]):
        self.f = f

    def header(self, **fields):
        self.write({"record": "header", "format": TRACE_FORMAT, "version": TRACE_VERSION, **fields})

    def write(self, record: dict):
        self.f.write(dumps(record))
        self.f.write("\n")


def read_trace(path):
    """Parse a trace file back into a list of dicts (Infinity/NaN accepted)."""
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
