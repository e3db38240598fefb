"""Integer arithmetic behind return lengths: gcd and the eventual return horizon."""

import logging
from math import gcd
from typing import Iterable, Optional

logger = logging.getLogger(__name__)


def lengths_gcd(lengths: Iterable[int]) -> int:
    """Euclid over a set of positive lengths; 0 for the empty set."""
    result = 0
    for length in lengths:
        if int(length) != length or length < 1:
            raise ValueError(f"Return lengths must be positive integers, got {length}")
        result = gcd(result, int(length))
    return result


def eventual_horizon(lengths: Iterable[int]) -> Optional[int]:
    """Smallest t0 such that every t >= t0 is a nonnegative integer combination of lengths.

    Returns None unless the gcd is 1. The empty combination represents 0.
    """
    values = sorted(set(int(v) for v in lengths))
    if not values or lengths_gcd(values) != 1:
        return None
    smallest = values[0]
    # Schur: the largest gap is below smallest * largest.
    limit = smallest * values[-1] + smallest
    representable = [False] * (limit + 1)
    representable[0] = True
    for t in range(1, limit + 1):
        representable[t] = any(t >= v and representable[t - v] for v in values)

    run = 0
    for t in range(limit + 1):
        run = run + 1 if representable[t] else 0
        if run == smallest:
            return t - smallest + 1
    raise AssertionError(f"No run of {smallest} representable lengths below {limit}")
