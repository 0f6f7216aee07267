"""Closed-form train/test gap bounds for the trained agent.

Both calculators use the proof constant ln(2/delta); the corresponding
lemma statement prints ln(1/delta), but the derivation (and hence this
module) carries the factor 2 from the two-sided concentration inequality.
"""

from __future__ import annotations

import math

from .errors import DomainError


def _validate(beta: float, delta: float, n: int | None = None) -> None:
    if beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    if not 0 < delta < 1:
        raise DomainError(f"delta must be in (0, 1), got {delta}")
    if n is not None and (not isinstance(n, int) or n < 1):
        raise DomainError(f"n must be a positive integer, got {n}")


def hoeffding_gap_bound(beta: float, delta: float, n: int) -> float:
    """sqrt(beta * ln(2/delta) / (2n)): the train/test loss gap bound."""
    _validate(beta, delta, n)
    return math.sqrt(beta * math.log(2.0 / delta) / (2.0 * n))


def generalization_bound(beta: float, delta: float, n: int) -> float:
    """Exactly twice the gap bound: distance to the optimal function set."""
    return 2.0 * hoeffding_gap_bound(beta, delta, n)


def min_train_size(beta: float, delta: float, epsilon: float) -> int:
    """Smallest n with hoeffding_gap_bound(beta, delta, n) <= epsilon."""
    _validate(beta, delta)
    if epsilon <= 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    if beta == 0:
        return 1
    n = max(1, math.ceil(beta * math.log(2.0 / delta) / (2.0 * epsilon**2)))
    # Guard against float edges so the returned n is exactly minimal.
    while hoeffding_gap_bound(beta, delta, n) > epsilon:
        n += 1
    while n > 1 and hoeffding_gap_bound(beta, delta, n - 1) <= epsilon:
        n -= 1
    return n
