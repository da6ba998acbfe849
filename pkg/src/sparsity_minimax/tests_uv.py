"""Tests for ``H0: ||theta||_0 <= k0`` when only a band ``[sigma_lo, sigma_hi]`` for the noise is known.

The bulk and intermediate statistics integrate the logarithm of the
empirical characteristic function against weights orthogonal to ``u^2``,
which removes the leading dependence on the unknown variance.
"""

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DegenerateInput, DomainError, MissingCalibration
from .kernels import _GL_W, _GL_X, gaussian_density, gaussian_survival, pl_coefficients
from .model import BandNoise, RngStream, empirical_cf, exceedance_counts, sample, values_of
from .tests_kv import (
    DiagnosticRow,
    TestVerdict,
    _check_alpha,
    _verdict,
    dyadic_l,
    inter_applicable,
)

CF_FLOOR = 1e-12
CACHE_ENV = "SPARSITY_MINIMAX_CACHE"


def _band(band):
    if not isinstance(band, BandNoise):
        raise DomainError(f"unknown-variance tests need a BandNoise, got {band!r}")
    return band


def _flag(verdict, clamped):
    if clamped:
        verdict.flags = verdict.flags + ("degenerate-CF",)
    return verdict


# ----------------------------------------------------- variance estimate


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2_hat: float
    v: float
    cf_value: float
    clamped: bool


def variance_frequency(k0, n, sigma_plus):
    if not sigma_plus > 0:
        raise DomainError(f"sigma_plus must be positive, got {sigma_plus}")
    return math.sqrt(2.0 / sigma_plus ** 2 * max(math.log1p(k0 / math.sqrt(n)), 1.0))


def sigma_hat2(y, v):
    """``-2 / v^2 * log(phi_n(v))`` with ``phi_n`` floored at ``CF_FLOOR``."""
    if not v > 0:
        raise DomainError(f"frequency must be positive, got {v}")
    cf = empirical_cf(y, v)
    clamped = not cf > CF_FLOOR
    return VarianceEstimate(-2.0 / (v * v) * math.log(max(cf, CF_FLOOR)), v, cf, clamped)


# -------------------------------------------------------------- HC-var


def hc_var_t_star(n, alpha):
    _check_alpha(alpha)
    return max(1, math.ceil(2.0 * math.sqrt(2.0 * math.log(4.0 * n / alpha))))


def hc_var_threshold(t, alpha, n, k0, band):
    """Three-term allowance; the variance-error term is zero at ``k0 = 0``."""
    _check_alpha(alpha)
    t = np.asarray(t, dtype=float)
    log_term = np.log(t * t * math.pi ** 2 / alpha)
    out = np.sqrt(4.0 * n * gaussian_survival(t) * log_term) + (2.0 / 3.0) * log_term
    if k0 > 0:
        ratio = (band.sigma_hi / band.sigma_lo) ** 3
        out = out + (8.0 * t * ratio * k0 / math.log1p(k0 / math.sqrt(n))
                     * gaussian_density(t) * math.sqrt(math.log(6.0 / alpha)))
    return float(out) if out.ndim == 0 else out


def _hc_var_rows(vals, k0, alpha, band):
    n = vals.size
    sp = band.sigma_hi
    est = sigma_hat2(vals, variance_frequency(k0, n, sp))
    sig = math.sqrt(est.sigma2_hat)
    t_star = hc_var_t_star(n, alpha)
    grid = np.arange(1, t_star + 1)
    counts = exceedance_counts(vals / sp, np.append(t_star, grid))
    rows = [DiagnosticRow("HC-cap", f"t={t_star}", float(counts[0]), float(k0 + 1),
                          bool(counts[0] >= k0 + 1))]
    with np.errstate(divide="ignore"):  # sig = 0 sends every tail to zero
        scaled = grid * sp / sig
    thr = (k0 + 2.0 * (n - k0) * gaussian_survival(scaled)
           + hc_var_threshold(grid, alpha, n, k0, band))
    for t, c, u in zip(grid, counts[1:], np.atleast_1d(thr)):
        rows.append(DiagnosticRow("HC", f"t={int(t)}", float(c), float(u), bool(c >= u)))
    return rows, est.clamped


def test_hc_var(y, k0, alpha, band):
    band = _band(band)
    vals = values_of(y)
    _check_k0(k0, vals.size)
    rows, clamped = _hc_var_rows(vals, k0, alpha, band)
    return _flag(_verdict(rows), clamped)


def _check_k0(k0, n):
    if not 0 <= k0 < n:
        raise DomainError(f"k0 must satisfy 0 <= k0 < n={n}, got {k0}")


# ------------------------------------------------------------ Bulk-var

# composite Simpson rule with 257 nodes on [0, 1]; exact for the cubic
# (4u - 3) u^2, so the variance term cancels to rounding error
_SIMPSON_U = np.linspace(0.0, 1.0, 257)
_SIMPSON_W = np.full(257, 2.0)
_SIMPSON_W[1::2] = 4.0
_SIMPSON_W[0] = _SIMPSON_W[-1] = 1.0
_SIMPSON_W /= 3.0 * 256
_BULK_WEIGHTS = _SIMPSON_W * (4.0 * _SIMPSON_U - 3.0)


def bulk_var_scale(k0, n):
    if k0 <= math.sqrt(n):
        return 1.0
    return max(math.sqrt(1.0 + math.log(k0 / math.sqrt(n))), 1.0)


def _log_cf(vals, freqs):
    cf = empirical_cf(vals, freqs)
    clamped = int(np.count_nonzero(~(cf > CF_FLOOR)))
    return np.log(np.maximum(cf, CF_FLOOR)), clamped


def stat_bulk_var_detail(y, s, sigma_plus):
    """Return ``(Z_var, clamped_node_count)``."""
    vals = values_of(y)
    logs, clamped = _log_cf(vals, s * _SIMPSON_U / sigma_plus)
    return vals.size * float(np.dot(_BULK_WEIGHTS, logs)), clamped


def stat_bulk_var(y, s, sigma_plus):
    return stat_bulk_var_detail(y, s, sigma_plus)[0]


def bulk_var_threshold(k0, alpha, n):
    _check_alpha(alpha)
    spread = max(math.sqrt(k0 * math.sqrt(n)), math.sqrt(n))
    return (1.09 * k0 + 16.0 * k0 * k0 / n
            + 4.0 * math.sqrt(math.e) * spread * math.sqrt(math.log(2.0 / alpha)))


def _bulk_var_row(vals, k0, alpha, band):
    s = bulk_var_scale(k0, vals.size)
    z, clamped = stat_bulk_var_detail(vals, s, band.sigma_hi)
    thr = bulk_var_threshold(k0, alpha, vals.size)
    return DiagnosticRow("Bulk", f"s={s!r}", z, thr, bool(z >= thr)), clamped


def test_bulk_var(y, k0, alpha, band):
    band = _band(band)
    vals = values_of(y)
    _check_k0(k0, vals.size)
    row, clamped = _bulk_var_row(vals, k0, alpha, band)
    return _flag(_verdict([row]), clamped)


# ----------------------------------------------------------- Inter-var

# 16 panels of 16-point Gauss-Legendre on [0, 1]; the integrand is even in u
_IV_X, _IV_W = np.polynomial.legendre.leggauss(16)
_IV_EDGES = np.linspace(0.0, 1.0, 17)
_IV_U = (0.5 * (_IV_EDGES[:-1] + _IV_EDGES[1:])[:, None]
         + (0.5 / 16) * _IV_X[None, :]).ravel()
_IV_WT = np.tile((0.5 / 16) * _IV_W, 16)


def inter_var_params(k0, l, n):
    if l not in dyadic_l(k0, n).levels:
        raise DomainError(f"l={l} is not in the dyadic collection for k0={k0}, n={n}")
    r = math.sqrt(16.0 * math.log(k0 / l))
    w = math.sqrt(math.log(l / math.sqrt(n)))
    return r, w, pl_coefficients(r)


def inter_var_weights(r, coeffs):
    """Quadrature weights on ``_IV_U`` for ``2 r P(r u) phi(r u)`` over ``[0, 1]``."""
    ru = r * _IV_U
    return 2.0 * r * _IV_WT * coeffs.poly(ru) * gaussian_density(ru)


def stat_inter_var_detail(y, r, w, sigma_plus, coeffs=None):
    vals = values_of(y)
    coeffs = pl_coefficients(r) if coeffs is None else coeffs
    logs, clamped = _log_cf(vals, w * _IV_U / sigma_plus)
    return vals.size * float(np.dot(inter_var_weights(r, coeffs), logs)), clamped


def stat_inter_var(y, r, w, sigma_plus, coeffs=None):
    return stat_inter_var_detail(y, r, w, sigma_plus, coeffs)[0]


def inter_var_threshold(k0, l, l_min, alpha, n, coeffs):
    _check_alpha(alpha)
    weight = math.pi ** 2 * (1.0 + math.log2(l / l_min)) ** 2 / (3.0 * alpha)
    return (k0 * (1.0 + coeffs.delta_l) + 32.0 * k0 * k0 / n
            + 8.0 * math.sqrt(l * math.sqrt(n) * math.log(weight)))


def _inter_var_rows(vals, k0, alpha, band):
    n = vals.size
    dl = dyadic_l(k0, n)
    rows, clamped = [], 0
    for l in dl.levels:
        r, w, coeffs = inter_var_params(k0, l, n)
        v, c = stat_inter_var_detail(vals, r, w, band.sigma_hi, coeffs)
        clamped += c
        thr = inter_var_threshold(k0, l, dl.l_min, alpha, n, coeffs)
        rows.append(DiagnosticRow("Inter", f"l={l}", v, thr, bool(v >= thr)))
    return rows, clamped


def test_inter_var(y, k0, alpha, band):
    band = _band(band)
    vals = values_of(y)
    _check_alpha(alpha)
    rows, clamped = _inter_var_rows(vals, k0, alpha, band)
    return _flag(_verdict(rows), clamped)


# ------------------------------------------------------ trim + combined


@dataclass(frozen=True)
class TrimResult:
    trimmed_indices: np.ndarray
    u_draw: float
    threshold: float
    residual_k0: int
    kept: np.ndarray


def trim(y, sigma_plus, rng, k0=0):
    """Drop entries above ``(U + 1) sigma_plus n^2`` for a uniform draw ``U``."""
    vals = values_of(y)
    gen = rng.generator if isinstance(rng, RngStream) else rng
    u = float(gen.random())
    threshold = (u + 1.0) * sigma_plus * vals.size ** 2
    big = np.abs(vals) > threshold
    idx = np.flatnonzero(big)
    return TrimResult(idx, u, threshold, int(k0 - idx.size), vals[~big])


def test_combined_var(y, k0, alpha, band, rng):
    band = _band(band)
    vals = values_of(y)
    _check_k0(k0, vals.size)
    _check_alpha(alpha)
    tr = trim(vals, band.sigma_hi, rng, k0)
    head = DiagnosticRow("Trim", f"u={tr.u_draw!r}", float(tr.trimmed_indices.size),
                         float(k0), tr.residual_k0 < 0)
    if tr.residual_k0 < 0:
        return TestVerdict(True, "Trim", [head])
    kept, k_res = tr.kept, tr.residual_k0
    if k_res >= kept.size:
        # every remaining entry may be nonzero under the null
        return TestVerdict(False, None, [head])
    inter = inter_applicable(k_res, kept.size)
    level = alpha / 3.0 if inter else alpha / 2.0
    rows, clamped = _hc_var_rows(kept, k_res, level, band)
    row, c = _bulk_var_row(kept, k_res, level, band)
    rows.append(row)
    clamped += c
    if inter:
        more, c = _inter_var_rows(kept, k_res, level, band)
        rows += more
        clamped += c
    verdict = _verdict(rows)
    verdict.diagnostics.insert(0, head)
    return _flag(verdict, clamped)


# ----------------------------------------------------------------- S4


def stat_s4(y, denominator="squared"):
    """Normalized fourth moment minus 3.

    ``denominator="squared"`` divides ``n sum y^4`` by ``(sum y^2)^2``;
    ``"literal"`` divides by ``sum y^2`` and is kept for comparison only.
    """
    vals = values_of(y)
    sq = vals * vals
    s2 = float(np.sum(sq))
    if s2 == 0.0:
        raise DegenerateInput("S4 is undefined for the zero vector")
    s4 = float(np.dot(sq, sq))
    if denominator == "squared":
        return vals.size * s4 / (s2 * s2) - 3.0
    if denominator == "literal":
        return vals.size * s4 / s2 - 3.0
    raise DomainError(f"unknown denominator convention {denominator!r}")


class S4Calibration:
    """Null ``1 - gamma/2`` quantiles of :func:`stat_s4`, keyed by ``(n, gamma)``."""

    COLUMNS = ("n", "gamma", "quantile", "reps", "seed")

    def __init__(self, rows=()):
        self._rows = {}
        for row in rows:
            self.add(*row)

    def add(self, n, gamma, quantile, reps, seed):
        self._rows[(int(n), float(gamma))] = (float(quantile), int(reps), int(seed))

    def quantile(self, n, gamma):
        try:
            return self._rows[(int(n), float(gamma))][0]
        except KeyError:
            raise MissingCalibration(f"no S4 calibration for n={n}, gamma={gamma}") from None

    def __contains__(self, key):
        return (int(key[0]), float(key[1])) in self._rows

    def save(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# sparsity_minimax {__version__}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for (n, gamma), (q, reps, seed) in sorted(self._rows.items()):
                writer.writerow([n, repr(gamma), repr(q), reps, seed])

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.DictReader(lines)
        return cls((r["n"], r["gamma"], r["quantile"], r["reps"], r["seed"]) for r in reader)


def calibrate_s4(n, gamma, reps=100_000, seed=0, table=None):
    """Simulate the null quantile of S4 at level ``gamma/2`` and add it to ``table``."""
    _check_alpha(gamma)
    table = S4Calibration() if table is None else table
    zero = np.zeros(n)
    stats = np.empty(reps)
    for i in range(reps):
        stats[i] = stat_s4(sample(zero, 1.0, RngStream(seed, i)))
    table.add(n, gamma, float(np.quantile(stats, 1.0 - gamma / 2.0)), reps, seed)
    return table


def s4_calibration(n, gamma, reps=100_000, seed=0, cache_dir=None):
    """Load the cached table from ``$SPARSITY_MINIMAX_CACHE`` and fill in missing entries."""
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    path = Path(cache_dir) / "s4_calibration.csv" if cache_dir else None
    table = S4Calibration.load(path) if path and path.exists() else S4Calibration()
    if (n, gamma) not in table:
        calibrate_s4(n, gamma, reps, seed, table)
        if path:
            path.parent.mkdir(parents=True, exist_ok=True)
            table.save(path)
    return table


def test_s4(y, gamma, calibration):
    vals = values_of(y)
    q = calibration.quantile(vals.size, gamma)
    stat = stat_s4(vals)
    reject = stat > q
    row = DiagnosticRow("S4", f"gamma={gamma!r}", stat, q, reject)
    return TestVerdict(reject, "S4" if reject else None, [row])


# ---------------------------------------------------------- sigma band


@dataclass(frozen=True)
class SigmaBand:
    sigma_bar2: float
    sigma_tilde: float
    lo: float
    hi: float

    def noise(self):
        return BandNoise(self.lo, self.hi)


def sigma_band(y, convention="covering"):
    """Dyadic noise band from the smallest half of the squared observations.

    ``convention="covering"`` returns ``[tilde/2.2, 16 tilde]``, which
    contains ``sigma`` whenever ``sigma / 8.5 <= bar <= 1.05 sigma``.
    ``"literal"`` returns ``[tilde/16, 2.2 tilde]`` for comparison.
    """
    vals = values_of(y)
    n = vals.size
    if n < 2:
        raise DomainError("sigma_band needs at least two observations")
    sq = np.sort(vals * vals)[: n // 2]
    bar2 = 2.0 / n * float(np.sum(sq))
    if bar2 <= 0.0:
        raise DegenerateInput("half of the observations are exactly zero")
    tilde = 2.0 ** math.floor(math.log2(math.sqrt(bar2)))
    if convention == "covering":
        return SigmaBand(bar2, tilde, tilde / 2.2, 16.0 * tilde)
    if convention == "literal":
        return SigmaBand(bar2, tilde, tilde / 16.0, 2.2 * tilde)
    raise DomainError(f"unknown band convention {convention!r}")


for _fn in (test_hc_var, test_bulk_var, test_inter_var, test_combined_var, test_s4):
    _fn.__test__ = False
