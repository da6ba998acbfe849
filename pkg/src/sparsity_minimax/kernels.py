"""Special functions and empirical characteristic-function kernels.

Three evaluation routes exist for the oscillatory kernels:

* adaptive Gauss-Legendre quadrature (:func:`kappa`, :func:`eta`), the
  reference used in unit tests;
* a closed form through the Faddeeva function (:func:`kappa_closed`,
  :func:`eta_closed`), used for arguments beyond a table's range;
* cubic-spline tables on a uniform ``|x|`` grid (:func:`kappa_table`,
  :func:`eta_table`), used by the Monte Carlo harness.
"""

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import log_ndtr, ndtr, wofz

from . import _hot
from .errors import DomainError, PanelBudgetExceeded

SQRT_2PI = math.sqrt(2.0 * math.pi)

# 15-point Gauss-Legendre rule on [-1, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(15)

TABLE_POINTS = 4096
TABLE_XMAX = 40.0
TABLE_TOL = 1e-6


def gaussian_density(t):
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * t * t) / SQRT_2PI


def gaussian_survival(t):
    """Upper tail ``P(N(0,1) > t)``.

    Values below the smallest subnormal double come back as ``0.0``; use
    :func:`log_gaussian_survival` when the magnitude matters.
    """
    t = np.asarray(t, dtype=float)
    out = ndtr(-t)
    far = t > 30.0
    if np.any(far):
        out = np.where(far, np.exp(log_ndtr(-np.where(far, t, 0.0))), out)
    return out[()] if out.ndim == 0 else out


def log_gaussian_survival(t):
    return log_ndtr(-np.asarray(t, dtype=float))


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_panels: int = 20000


DEFAULT_QUAD = QuadratureSpec()


def _gl_panel(f, lo, hi):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return half * float(np.dot(_GL_W, f(mid + half * _GL_X)))


def quad_integrate(f, a, b, spec=DEFAULT_QUAD, initial_panels=1):
    """Integrate a vectorized ``f`` over ``[a, b]``.

    Panels are split greedily (largest error first) until the summed error
    estimate drops below ``max(abs_tol, rel_tol * |I|)``. Each panel's error
    is the gap between one 15-point rule and two half-panel rules.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    initial_panels = max(1, int(initial_panels))
    if initial_panels > spec.max_panels:
        raise PanelBudgetExceeded(
            f"{initial_panels} initial panels exceed budget {spec.max_panels}")

    def refine(lo, hi):
        mid = 0.5 * (lo + hi)
        coarse = _gl_panel(f, lo, hi)
        fine = _gl_panel(f, lo, mid) + _gl_panel(f, mid, hi)
        return fine, abs(fine - coarse)

    edges = np.linspace(a, b, initial_panels + 1)
    heap = []
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = refine(lo, hi)
        heap.append((-e, lo, hi, val))
        total += val
        err += e
    heapq.heapify(heap)
    panels = initial_panels
    while err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        if panels >= spec.max_panels:
            raise PanelBudgetExceeded(
                f"error {err:.3e} after {panels} panels on [{a}, {b}]")
        neg_e, lo, hi, val = heapq.heappop(heap)
        total -= val
        err += neg_e
        mid = 0.5 * (lo + hi)
        for plo, phi in ((lo, mid), (mid, hi)):
            v, e = refine(plo, phi)
            heapq.heappush(heap, (-e, plo, phi, v))
            total += v
            err += e
        panels += 1
    return sign * total


# ----------------------------------------------------- oscillatory kernels


def _check_positive(name, value):
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value}")


def _map_scalar(fn, x):
    x = np.asarray(x, dtype=float)
    out = np.array([fn(float(v)) for v in x.ravel()]).reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def kappa(x, s, spec=DEFAULT_QUAD):
    """Bulk kernel ``2 * int_0^1 (1 - u) exp(s^2 u^2 / 2) cos(s u x) du`` by quadrature."""
    _check_positive("s", s)

    def one(xv):
        panels = max(1, math.ceil(s * abs(xv) / math.pi))
        return 2.0 * quad_integrate(
            lambda u: (1.0 - u) * np.exp(0.5 * s * s * u * u) * np.cos(s * u * xv),
            0.0, 1.0, spec, panels)

    return _map_scalar(one, x)


def _normal_mass(r):
    """``P(|N(0,1)| <= r)``."""
    return 1.0 - 2.0 * float(gaussian_survival(r))


def eta(x, r, w, spec=DEFAULT_QUAD):
    """Intermediate kernel, with mean one under the standard normal, by quadrature."""
    _check_positive("r", r)
    _check_positive("w", w)
    scale = r / _normal_mass(r)

    def one(xv):
        panels = max(1, math.ceil(w * abs(xv) / math.pi))
        # the integrand is even in u, so fold [-1, 1] onto [0, 1]
        return 2.0 * scale * quad_integrate(
            lambda u: gaussian_density(r * u) * np.exp(0.5 * w * w * u * u) * np.cos(w * u * xv),
            0.0, 1.0, spec, panels)

    return _map_scalar(one, x)


def inter_mean_kernel(x, r, w, spec=DEFAULT_QUAD):
    """Expectation of ``eta(x + Z, r, w)`` for ``Z ~ N(0, 1)``."""
    _check_positive("r", r)
    _check_positive("w", w)
    mass = _normal_mass(r)

    def one(xv):
        if xv == 0.0:
            return 1.0  # the integral is the normalizing mass itself
        freq = xv * w / r
        panels = max(1, math.ceil(abs(freq) * r / math.pi))
        return 2.0 * quad_integrate(
            lambda u: gaussian_density(u) * np.cos(u * freq), 0.0, r, spec, panels) / mass

    return _map_scalar(one, x)


def _gauss_fourier(p, b):
    """``int_0^1 exp(p u^2 + i b u) du`` via the Faddeeva function, ``p != 0``."""
    b = np.asarray(b, dtype=float)
    if p < 0:
        rq = math.sqrt(-p)
        z0 = b / (2.0 * rq)
        return (math.sqrt(math.pi) / (2.0 * rq)) * (
            wofz(z0) - np.exp(p + 1j * b) * wofz(1j * rq + z0))
    # growing Gaussian: evaluate at -|b| where wofz stays in its stable
    # half-plane, then conjugate back
    ra = math.sqrt(p)
    nb = -np.abs(b)
    z0 = 1j * nb / (2.0 * ra)
    z1 = ra + 1j * nb / (2.0 * ra)
    val = (math.sqrt(math.pi) / (2.0 * ra)) * (-1j) * (
        wofz(-z0) - np.exp(p + 1j * nb) * wofz(-z1))
    return np.where(b > 0, np.conj(val), val)


def kappa_closed(x, s):
    _check_positive("s", s)
    p = 0.5 * s * s
    b = s * np.asarray(x, dtype=float)
    g0 = _gauss_fourier(p, b)
    g1 = (np.exp(p + 1j * b) - 1.0 - 1j * b * g0) / (2.0 * p)
    out = 2.0 * np.real(g0 - g1)
    return out[()] if np.ndim(out) == 0 else out


def eta_closed(x, r, w):
    _check_positive("r", r)
    _check_positive("w", w)
    p = 0.5 * (w * w - r * r)
    b = w * np.asarray(x, dtype=float)
    if p == 0.0:
        g0 = np.where(b == 0, 1.0 + 0j, (np.exp(1j * b) - 1.0) / (1j * np.where(b == 0, 1.0, b)))
    else:
        g0 = _gauss_fourier(p, b)
    out = 2.0 * r / (_normal_mass(r) * SQRT_2PI) * np.real(g0)
    return out[()] if np.ndim(out) == 0 else out


# ------------------------------------------------------- mean kernels


def bulk_mean_kernel(x):
    """``1 - 2(1 - cos x) / x^2``; nondecreasing on ``[0, pi]`` with range ``[0, 1]``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    half = 0.5 * xs
    # 1 - cos x = 2 sin^2(x/2) avoids cancellation for moderate x
    direct = 1.0 - (np.sin(half) / half) ** 2
    x2 = x * x
    series = x2 / 12.0 - x2 * x2 / 360.0 + x2 * x2 * x2 / 20160.0
    out = np.where(small, series, direct)
    return out[()] if out.ndim == 0 else out


# coefficients of x^(2j), j = 2..12, for 1 + sin(x)/x + 4(cos x - 1)/x^2
_VAR_SERIES = np.array([(-1) ** j * (2 * j - 2) / math.factorial(2 * j + 2) for j in range(2, 13)])


def bulk_var_kernel(x):
    """``1 + sin(x)/x + 4(cos x - 1)/x^2``, bounded by 1.09."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1.0
    xs = np.where(small, 1.0, x)
    direct = 1.0 + np.sin(xs) / xs + 4.0 * (np.cos(xs) - 1.0) / (xs * xs)
    x2 = x * x
    series = np.polynomial.polynomial.polyval(x2, _VAR_SERIES) * x2 * x2
    out = np.where(small, series, direct)
    return out[()] if out.ndim == 0 else out


# ------------------------------------------------------- polynomial weight


@dataclass(frozen=True)
class PlCoefficients:
    kappa_l: float
    zeta_l: float
    gamma_l: float
    delta_l: float

    def poly(self, t):
        """``gamma (zeta t^2 - kappa)``, orthogonal to ``t^2`` under the truncated normal."""
        t = np.asarray(t, dtype=float)
        return self.gamma_l * (self.zeta_l * t * t - self.kappa_l)


def pl_coefficients(r):
    """Truncated-normal moments ``int_{-r}^r t^k phi(t) dt`` for k = 4, 2 and the derived weights."""
    if not r >= 4.0:
        raise DomainError(f"r must be at least 4, got {r}")
    dens = float(gaussian_density(r))
    tail = float(gaussian_survival(r))
    k4 = -2.0 * r ** 3 * dens - 6.0 * r * dens + 3.0 * (1.0 - 2.0 * tail)
    k2 = -2.0 * r * dens + 1.0 - 2.0 * tail
    gam = 1.0 / (k4 - k2)
    delta = 4.0 * gam * (r + 4.0 / r) * dens
    return PlCoefficients(k4, k2, gam, delta)


# ------------------------------------------------------- tabulated kernels


def _fixed_cos_rule(freq, xmax, weight):
    """Composite GL nodes ``u`` on [0, 1] and weights ``a`` with ``a_k = w_k * weight(u_k)``.

    One panel per half period of ``cos(freq * xmax * u)`` plus one spare keeps
    the 15-point rule at double precision for every ``|x| <= xmax``.
    """
    panels = int(math.ceil(freq * xmax / math.pi)) + 1
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    u = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    wts = (half[:, None] * _GL_W[None, :]).ravel()
    return u, wts * weight(u)


class KernelTable:
    """Even kernel sampled on ``|x| in [0, xmax]`` and evaluated by cubic spline.

    ``exact`` is used for arguments beyond ``xmax``.
    """

    def __init__(self, grid_values, xmax, exact):
        npts = grid_values.shape[0]
        grid = np.linspace(0.0, xmax, npts)
        spline = CubicSpline(grid, grid_values, bc_type=((1, 0.0), "not-a-knot"))
        self.xmax = float(xmax)
        self.h = grid[1] - grid[0]
        self.coef = np.ascontiguousarray(spline.c)
        self.exact = exact
        self.value_at_zero = float(grid_values[0])

    def __call__(self, x):
        xabs = np.abs(np.asarray(x, dtype=np.float64))
        flat = np.ascontiguousarray(xabs.ravel())
        out = _hot.spline_eval(flat, self.coef, self.h)
        far = flat > self.xmax
        if np.any(far):
            out[far] = self.exact(flat[far])
        return out.reshape(xabs.shape)

    def sum(self, x):
        return float(np.sum(self(x)))


def _tabulate(freq, weight, scale, xmax, npts):
    grid = np.linspace(0.0, xmax, npts)
    u, a = _fixed_cos_rule(freq, xmax, weight)
    return scale * _hot.cos_matvec(grid, freq * u, a)


@lru_cache(maxsize=64)
def kappa_table(s, xmax=TABLE_XMAX, npts=TABLE_POINTS):
    _check_positive("s", s)
    vals = _tabulate(s, lambda u: (1.0 - u) * np.exp(0.5 * s * s * u * u), 2.0, xmax, npts)
    return KernelTable(vals, xmax, lambda x: kappa_closed(x, s))


@lru_cache(maxsize=256)
def eta_table(r, w, xmax=TABLE_XMAX, npts=TABLE_POINTS):
    _check_positive("r", r)
    _check_positive("w", w)
    scale = 2.0 * r / _normal_mass(r)
    vals = _tabulate(w, lambda u: gaussian_density(r * u) * np.exp(0.5 * w * w * u * u),
                     scale, xmax, npts)
    return KernelTable(vals, xmax, lambda x: eta_closed(x, r, w))
