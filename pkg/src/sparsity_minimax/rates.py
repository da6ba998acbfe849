"""Closed-form separation rates, all dimensionless (multiply by sigma^2).

Branch boundaries compare against the real-valued ``sqrt(n)``.
"""

import math
from typing import NamedTuple

import numpy as np

from .errors import DomainError

DEFAULT_VALIDITY_FRACTION = 0.5


class RateValue(NamedTuple):
    psi2: float
    regime: str

    def __float__(self):
        return self.psi2


class TableRate(NamedTuple):
    value: float
    regime: str
    valid: bool = True

    def __float__(self):
        return self.value


def _check_q(k0, q, n):
    if not (0 <= k0 and 1 <= q <= n - k0):
        raise DomainError(f"need 0 <= k0 and 1 <= q <= n - k0; got k0={k0}, q={q}, n={n}")


def _min_branch(k0, q, n):
    a = math.log1p(k0 / q)
    b = math.log1p(k0 / math.sqrt(n))
    return min(a * a / b, a)


def psi2(k0, q, n):
    _check_q(k0, q, n)
    rn = math.sqrt(n)
    if k0 <= rn:
        return RateValue(math.log1p(rn / q), "sparse")
    if q <= k0:
        return RateValue(_min_branch(k0, q, n), "intermediate")
    return RateValue(k0 / (q * math.log1p(k0 / rn)), "dense")


def psi2_array(k0, q, n):
    """Vectorized :func:`psi2` over an integer array ``q``."""
    q = np.asarray(q, dtype=float)
    if q.size and (q.min() < 1 or q.max() > n - k0 or k0 < 0):
        raise DomainError(f"q outside 1..n-k0 for k0={k0}, n={n}")
    rn = math.sqrt(n)
    if k0 <= rn:
        return np.log1p(rn / q)
    lk = math.log1p(k0 / rn)
    a = np.log1p(k0 / q)
    return np.where(q <= k0, np.minimum(a * a / lk, a), k0 / (q * lk))


def psi2_var(k0, q, n):
    _check_q(k0, q, n)
    rn = math.sqrt(n)
    if k0 <= rn:
        if q <= rn:
            return RateValue(math.log1p(rn / q), "sparse")
        return RateValue(math.sqrt(rn / q), "sparse-dense")
    if q <= k0:
        return RateValue(_min_branch(k0, q, n), "intermediate")
    return RateValue(math.sqrt(k0 / q) / math.log1p(k0 / rn), "dense")


def table_rate_kv(k0, delta, n):
    """Squared separation distance over ``sigma^2``, up to constants, known variance."""
    if not 1 <= delta <= n - k0 or k0 < 0:
        raise DomainError(f"need 1 <= delta <= n - k0; got k0={k0}, delta={delta}, n={n}")
    rn = math.sqrt(n)
    if k0 <= rn:
        if delta >= rn:
            return TableRate(rn, "k0<=sqrt(n), delta>=sqrt(n)")
        return TableRate(delta * psi2(k0, delta, n).psi2, "k0<=sqrt(n), delta<sqrt(n)")
    value = delta * psi2(k0, delta, n).psi2
    if delta <= math.sqrt(k0 * rn):
        return TableRate(value, "k0>sqrt(n), delta<=sqrt(k0 sqrt(n))")
    if delta <= k0:
        return TableRate(value, "k0>sqrt(n), sqrt(k0 sqrt(n))<delta<=k0")
    return TableRate(value, "k0>sqrt(n), delta>k0")


def table_rate_uv(k0, delta, n, c=DEFAULT_VALIDITY_FRACTION):
    """Unknown-variance counterpart; ``valid`` is false when ``delta > c n``."""
    if delta < 1 or k0 < 0 or n < 1:
        raise DomainError(f"need delta >= 1, k0 >= 0; got k0={k0}, delta={delta}, n={n}")
    valid = delta <= c * n
    rn = math.sqrt(n)
    if k0 <= rn:
        if delta <= rn:
            return TableRate(delta * math.log1p(rn / delta), "k0<=sqrt(n), delta<=sqrt(n)", valid)
        return TableRate(math.sqrt(delta * rn), "k0<=sqrt(n), delta>sqrt(n)", valid)
    lk = math.log1p(k0 / rn)
    if delta <= math.sqrt(k0 * rn):
        return TableRate(delta * math.log1p(k0 / delta),
                         "k0>sqrt(n), delta<=sqrt(k0 sqrt(n))", valid)
    if delta <= k0:
        return TableRate(delta * math.log1p(k0 / delta) ** 2 / lk,
                         "k0>sqrt(n), sqrt(k0 sqrt(n))<delta<=k0", valid)
    return TableRate(math.sqrt(delta * k0) / lk, "k0>sqrt(n), delta>k0", valid)


def lower_bound_am(m, p):
    """``tanh(arccosh((1 + p) / (1 - p)) / m)``."""
    if m < 2 or m % 2:
        raise DomainError(f"m must be an even integer >= 2, got {m}")
    if not 0.0 <= p < 1.0:
        raise DomainError(f"p must lie in [0, 1), got {p}")
    return math.tanh(math.acosh((1.0 + p) / (1.0 - p)) / m)
