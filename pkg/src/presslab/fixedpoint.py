"""Q.7 fixed-point helpers.

Every charge, weight and counter in the simulator is an ``int`` holding a
value in units of ``2**-FRAC_BITS``. With the default timing profile one
tick of row-open time is exactly one unit of EACT, which is why the
fractional width is tied to ``log2(tRC)``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

FRAC_BITS = 7
ONE = 1 << FRAC_BITS

Number = Union[int, float, Fraction, str]


def as_fraction(x: Number) -> Fraction:
    # floats go through repr so 0.35 means 35/100, not the nearest double
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def fx_ceil(x: Number) -> int:
    return math.ceil(as_fraction(x) * ONE)


def fx_floor(x: Number) -> int:
    return math.floor(as_fraction(x) * ONE)


def fx_exact(x: Number) -> int:
    """Encode ``x``; raise if it is not representable on the Q.7 grid."""
    v = as_fraction(x) * ONE
    if v.denominator != 1:
        raise ValueError(f"{x} is not representable with {FRAC_BITS} fractional bits")
    return int(v)


def fx_to_fraction(v: int) -> Fraction:
    return Fraction(v, ONE)


def fx_to_float(v: int) -> float:
    return v / ONE


def truncate_frac_bits(v: int, b: int) -> int:
    """Drop all but ``b`` fractional bits (toward zero for nonnegative v)."""
    if not 0 <= b <= FRAC_BITS:
        raise ValueError(f"frac bits must be in [0, {FRAC_BITS}], got {b}")
    mask = (1 << (FRAC_BITS - b)) - 1
    return v & ~mask


def fx_str(v: int) -> str:
    """Shortest exact decimal rendering of a fixed-point value."""
    whole, frac = divmod(v, ONE)
    if frac == 0:
        return str(whole)
    # 2**-7 has at most 7 decimal digits
    digits = f"{frac * 10**FRAC_BITS // ONE:0{FRAC_BITS}d}".rstrip("0")
    return f"{whole}.{digits}"
