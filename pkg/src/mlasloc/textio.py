"""Tiny text/CSV helpers shared across exports.

Floats are written with ``repr`` so that values survive a write/read round
trip bit-exactly; reruns of a deterministic pipeline therefore produce
byte-identical files.
"""

from __future__ import annotations

import math

import numpy as np


def fmt(value) -> str:
    """Format one CSV field; floats via repr, everything else via str."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, float):
        # np.float64 subclasses float but reprs as np.float64(...); strip that
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_rows(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
