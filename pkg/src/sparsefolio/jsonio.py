"""Deterministic serialization for machine-readable output files.

The stdlib json encoder ties float formatting to float.__repr__ and key
order to dict iteration, both of which are easy to perturb accidentally.
Output files are promised byte-identical across runs, so this module owns
one fixed convention: floats at 17 significant digits (lossless for IEEE
doubles), keys in the order the caller built them, two-space indentation.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = ["format_float", "dumps"]


def format_float(x: float) -> str:
    """17-significant-digit decimal form; round-trips any finite double."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialized")
    return format(x, ".17g")


def _escape(s: str) -> str:
    out = ["\""]
    for ch in s:
        if ch == "\"":
            out.append("\\\"")
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append("\"")
    return "".join(out)


def _emit(obj, indent: int, pieces: list) -> None:
    pad = "  " * indent
    if obj is None:
        pieces.append("null")
    elif obj is True:
        pieces.append("true")
    elif obj is False:
        pieces.append("false")
    elif isinstance(obj, str):
        pieces.append(_escape(obj))
    elif isinstance(obj, (int, np.integer)):
        pieces.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        pieces.append(format_float(obj))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), indent, pieces)
    elif isinstance(obj, dict):
        if not obj:
            pieces.append("{}")
            return
        pieces.append("{\n")
        inner = "  " * (indent + 1)
        for k, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON keys must be strings, got {type(key).__name__}")
            pieces.append(inner)
            pieces.append(_escape(key))
            pieces.append(": ")
            _emit(value, indent + 1, pieces)
            pieces.append(",\n" if k + 1 < len(obj) else "\n")
        pieces.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            pieces.append("[]")
            return
        flat = all(
            isinstance(v, (int, float, np.integer, np.floating, str, bool))
            or v is None
            for v in obj
        )
        if flat:
            pieces.append("[")
            for k, v in enumerate(obj):
                _emit(v, indent, pieces)
                if k + 1 < len(obj):
                    pieces.append(", ")
            pieces.append("]")
            return
        pieces.append("[\n")
        inner = "  " * (indent + 1)
        for k, v in enumerate(obj):
            pieces.append(inner)
            _emit(v, indent + 1, pieces)
            pieces.append(",\n" if k + 1 < len(obj) else "\n")
        pieces.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Serialize to deterministic JSON text (trailing newline included)."""
    pieces: list = []
    _emit(obj, 0, pieces)
    pieces.append("\n")
    return "".join(pieces)
