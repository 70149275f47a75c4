"""Text formatting shared by every CSV and file format the package emits.

Floats are written with ``repr``: the shortest decimal string that parses
back to the same double.  Re-emitting a parsed file therefore reproduces it
byte for byte.
"""

from __future__ import annotations

import numpy as np

__all__ = ["fmt"]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))
