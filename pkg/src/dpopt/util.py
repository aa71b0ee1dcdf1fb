"""Small numeric helpers shared by the parameter derivations."""
from __future__ import annotations

import math


def floori(v: float) -> int:
    """Floor with a relative 1e-9 nudge, so closed forms that are exact
    integers in real arithmetic (e.g. n^(2/3) at powers of two) do not lose
    a unit to floating-point rounding."""
    return int(math.floor(v + 1e-9 * abs(v) + 1e-12))
