"""Reference implementations that share no code with the package.

Values are computed with mpmath at 40 digits or with plain composite rules
on very fine grids.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 40


def normal_tail(t):
    return mp.erfc(mp.mpf(t) / mp.sqrt(2)) / 2


def normal_pdf(t):
    t = mp.mpf(t)
    return mp.exp(-t * t / 2) / mp.sqrt(2 * mp.pi)


def trapezoid(f, a, b, points=1_000_000):
    """Composite trapezoid rule on ``points`` equispaced nodes, vectorized f."""
    x = np.linspace(a, b, points)
    y = f(x)
    h = (b - a) / (points - 1)
    return h * (np.sum(y) - 0.5 * (y[0] + y[-1]))


def kappa_trapezoid(x, s):
    return 2.0 * trapezoid(lambda u: (1 - u) * np.exp(s * s * u * u / 2) * np.cos(s * u * x), 0.0, 1.0)


def eta_trapezoid(x, r, w):
    mass = 1 - 2 * float(normal_tail(r))
    dens = lambda u: np.exp(-(r * u) ** 2 / 2) / np.sqrt(2 * np.pi)
    val = trapezoid(lambda u: dens(u) * np.exp(w * w * u * u / 2) * np.cos(w * u * x), -1.0, 1.0)
    return r / mass * val


def psi_trapezoid(x, r, w):
    mass = 1 - 2 * float(normal_tail(r))
    val = trapezoid(lambda u: np.exp(-u * u / 2) / np.sqrt(2 * np.pi) * np.cos(u * x * w / r), -r, r)
    return val / mass


def truncated_moment(k, r):
    r = mp.mpf(r)
    return mp.quad(lambda t: t ** k * normal_pdf(t), [-r, 0, r])


def pl_orthogonality(r, zeta, kap, gam):
    """``int_{-r}^{r} gam (zeta t^2 - kap) phi(t) t^2 dt`` in 40-digit arithmetic."""
    r = mp.mpf(r)
    return mp.quad(lambda t: gam * (zeta * t * t - kap) * normal_pdf(t) * t * t, [-r, 0, r])
