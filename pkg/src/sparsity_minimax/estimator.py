"""Adaptive estimate of the number of nonzero means, with a magnitude certificate."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rates
from .errors import DomainError
from .kernels import gaussian_survival
from .model import exceedance_counts
from .tests_kv import (
    _check_alpha,
    _scaled,
    bulk_scale,
    bulk_threshold,
    dyadic_l,
    hc_params,
    hc_threshold,
    inter_applicable,
    inter_params,
    inter_threshold,
    stat_bulk,
    stat_inter,
)

DEFAULT_CERTIFICATE_CONSTANT = 2.0
NOT_APPLICABLE = -math.inf


@dataclass(frozen=True)
class DyadicK0:
    k_min: int
    levels: tuple

    @property
    def k_max(self):
        return self.levels[-1]


@dataclass
class SparsityEstimate:
    k_hat: int
    k_hc: float
    k_b: float
    k_i: float
    certificate: np.ndarray
    details: dict = field(default_factory=dict)

    @property
    def certificate_q(self):
        return np.arange(1, self.certificate.size + 1)


def k0_collection(n):
    """``ceil(sqrt n)`` doubled while it stays at most ``n``; the last level lies in ``(n/2, n]``."""
    if n < 4:
        raise DomainError(f"n must be at least 4, got {n}")
    k_min = math.isqrt(n - 1) + 1  # ceil(sqrt(n))
    levels = []
    k = k_min
    while k <= n:
        levels.append(k)
        k *= 2
    return DyadicK0(k_min, tuple(levels))


def alpha_weight(k0, k_min, alpha):
    ratio = k0 / k_min
    j = math.log2(ratio) if ratio >= 1 else -1.0
    if ratio < 1 or abs(j - round(j)) > 1e-12:
        raise DomainError(f"k0={k0} is not on the dyadic grid starting at {k_min}")
    return 2.0 * alpha / ((1.0 + round(j)) ** 2 * math.pi ** 2)


def _hc_estimate(x, alpha):
    n = x.size
    level = alpha / 3.0
    par = hc_params(n, level)
    grid = par.grid
    counts = exceedance_counts(x, np.append(par.t_star, grid))
    tail = gaussian_survival(grid)
    ratio = (counts[1:] - 2.0 * n * tail - hc_threshold(grid, level, n)) / (1.0 - 2.0 * tail)
    return max(float(counts[0]), float(np.max(ratio)), 0.0)


def estimate_hc(y, alpha, sigma):
    _check_alpha(alpha)
    return _hc_estimate(_scaled(y, sigma), alpha)


def _bulk_estimate(x, alpha, cache):
    n = x.size
    coll = k0_collection(n)
    best, arg = -math.inf, None
    for k0 in coll.levels:
        s = bulk_scale(k0, n)
        key = ("Z", s)
        if key not in cache:
            cache[key] = stat_bulk(x, s, 1.0)
        level = alpha_weight(k0, coll.k_min, alpha)
        value = cache[key] - (bulk_threshold(k0, level, n) - k0)
        if value > best:
            best, arg = value, k0
    return best, arg


def estimate_bulk(y, alpha, sigma, cache=None):
    _check_alpha(alpha)
    return _bulk_estimate(_scaled(y, sigma), alpha, {} if cache is None else cache)[0]


def _inter_estimate(x, alpha, cache):
    n = x.size
    coll = k0_collection(n)
    best, arg = NOT_APPLICABLE, None
    for k0 in coll.levels:
        if not inter_applicable(k0, n):
            continue
        dl = dyadic_l(k0, n)
        level = alpha_weight(k0, coll.k_min, alpha)
        for l in dl.levels:
            r, w = inter_params(k0, l, n)
            key = ("V", r, w)
            if key not in cache:
                cache[key] = stat_inter(x, r, w, 1.0)
            allowance = inter_threshold(k0, l, dl.l_min, level, n) - k0 - l
            value = (cache[key] - allowance) / (1.0 + l / k0)
            if value > best:
                best, arg = value, (k0, l)
    return best, arg


def estimate_inter(y, alpha, sigma, cache=None):
    """Supremum over qualifying ``(k0, l)``; ``-inf`` when no ``k0`` reaches ``20 sqrt(n)``."""
    _check_alpha(alpha)
    return _inter_estimate(_scaled(y, sigma), alpha, {} if cache is None else cache)[0]


def certificate(k_hat, n, sigma, c=DEFAULT_CERTIFICATE_CONSTANT):
    """``c * sigma * psi_{k_hat, q}`` for ``q = 1..n - k_hat``."""
    q = np.arange(1, n - k_hat + 1)
    return c * sigma * np.sqrt(rates.psi2_array(k_hat, q, n))


def estimate_sparsity(y, alpha, sigma, c=DEFAULT_CERTIFICATE_CONSTANT, cache=None):
    _check_alpha(alpha)
    x = _scaled(y, sigma)
    n = x.size
    cache = {} if cache is None else cache
    k_hc = _hc_estimate(x, alpha)
    k_b, arg_b = _bulk_estimate(x, alpha, cache)
    k_i, arg_i = _inter_estimate(x, alpha, cache)
    parts = [math.ceil(k_hc), math.ceil(k_b), 0]
    if k_i != NOT_APPLICABLE:
        parts.append(math.ceil(k_i))
    k_hat = min(max(parts), n)
    return SparsityEstimate(
        k_hat, k_hc, k_b, k_i, certificate(k_hat, n, sigma, c),
        details={"bulk_argmax_k0": arg_b, "inter_argmax": arg_i, "constant": c})
