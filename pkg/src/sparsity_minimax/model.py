"""Gaussian sequence model: parameter vectors, noise contexts and sampling."""

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _hot
from .errors import DomainError, ParseError, SpecError


class ParameterVector:
    """Immutable mean vector with cached magnitudes in decreasing order.

    ``magnitude(i)`` is 1-based; ``magnitude(0)`` is ``+inf`` by convention.
    Ties keep their input order (stable sort).
    """

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64).ravel()
        if arr.size == 0:
            raise SpecError("parameter vector must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise SpecError("parameter vector must be finite")
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self):
        return self._values

    @property
    def n(self):
        return self._values.size

    def __len__(self):
        return self._values.size

    def __array__(self, dtype=None, copy=None):
        return self._values if dtype is None else self._values.astype(dtype)

    @cached_property
    def order(self):
        """Indices sorting ``|theta|`` from largest to smallest, ties by position."""
        return np.argsort(-np.abs(self._values), kind="stable")

    @cached_property
    def sorted_magnitudes(self):
        mags = np.abs(self._values)[self.order]
        mags.setflags(write=False)
        return mags

    def magnitude(self, i):
        if i == 0:
            return math.inf
        if not 1 <= i <= self.n:
            raise DomainError(f"order index {i} outside 0..{self.n}")
        return float(self.sorted_magnitudes[i - 1])

    def __repr__(self):
        return f"ParameterVector(n={self.n}, nnz={sparsity(self)})"


def _as_array(theta):
    if isinstance(theta, ParameterVector):
        return theta.values
    return np.asarray(theta, dtype=np.float64)


def sparsity(theta):
    """Number of entries that are exactly nonzero."""
    return int(np.count_nonzero(_as_array(theta)))


def distance_to_sparse(theta, k):
    """Euclidean distance from ``theta`` to the set of ``k``-sparse vectors."""
    pv = theta if isinstance(theta, ParameterVector) else ParameterVector(theta)
    if not 0 <= k <= pv.n:
        raise DomainError(f"k={k} outside 0..{pv.n}")
    tail = pv.sorted_magnitudes[int(k):]
    return float(math.sqrt(float(np.dot(tail, tail))))


def exceedance_count(values, t):
    """``#{i : |v_i| >= t}``; closed inequality."""
    return int(np.count_nonzero(np.abs(np.asarray(values, dtype=float)) >= t))


def exceedance_counts(values, thresholds):
    """Vectorized :func:`exceedance_count` over several thresholds."""
    mags = np.sort(np.abs(np.asarray(values, dtype=float)))
    thr = np.asarray(thresholds, dtype=float)
    return mags.size - np.searchsorted(mags, thr, side="left")


# ------------------------------------------------------------------ noise


@dataclass(frozen=True)
class KnownNoise:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class BandNoise:
    sigma_lo: float
    sigma_hi: float

    def __post_init__(self):
        if not 0 < self.sigma_lo < self.sigma_hi:
            raise DomainError(
                f"need 0 < sigma_lo < sigma_hi, got {self.sigma_lo}, {self.sigma_hi}")


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    noise: object = None

    def __post_init__(self):
        arr = np.array(self.y, dtype=np.float64).ravel()
        arr.setflags(write=False)
        object.__setattr__(self, "y", arr)

    @property
    def n(self):
        return self.y.size


def values_of(y):
    """Raw float array from an :class:`Observation` or array-like."""
    if isinstance(y, Observation):
        return y.y
    return np.asarray(y, dtype=np.float64).ravel()


# -------------------------------------------------------------------- RNG


@dataclass(frozen=True)
class RngStream:
    """Counter-based generator keyed by ``(seed, stream_id)``.

    Streams with distinct ids are independent and reproducible regardless
    of the order in which they are consumed.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        object.__setattr__(self, "_gen", np.random.Generator(np.random.Philox(key=key)))

    @property
    def generator(self):
        return self._gen

    def normal(self, size):
        return self._gen.standard_normal(size)

    def uniform(self):
        return float(self._gen.random())


def sample(theta, sigma, rng):
    """Draw ``y = theta + sigma * z``; ``rng`` is an :class:`RngStream` or numpy Generator."""
    th = _as_array(theta)
    gen = rng.generator if isinstance(rng, RngStream) else rng
    return Observation(th + sigma * gen.standard_normal(th.size), KnownNoise(float(sigma)))


def empirical_cf(y, u):
    """Real part of the empirical characteristic function at frequencies ``u``."""
    vals = values_of(y)
    if vals.size == 0:
        raise DomainError("empirical_cf of an empty observation")
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    out = _hot.cos_sum(vals, u_arr) / vals.size
    return float(out[0]) if np.ndim(u) == 0 else out


# ---------------------------------------------------------- construction


def make_theta(spec):
    """Build a :class:`ParameterVector` from a dict or an explicit array.

    Recognized shapes::

        {"shape": "k-spike", "n": 500, "k": 10, "amplitude": 4.0}
        {"shape": "dense-flat", "n": 500, "delta": 100, "amplitude": 0.5}
        {"shape": "mixed", "n": 500, "parts": [{"count": 5, "amplitude": 9},
                                                {"count": 50, "amplitude": 0.7}]}
        {"shape": "explicit", "values": [...]}

    Nonzero entries occupy the leading positions.
    """
    if isinstance(spec, ParameterVector):
        return spec
    if not isinstance(spec, dict):
        return ParameterVector(spec)
    shape = spec.get("shape")
    if shape == "explicit":
        if "values" not in spec:
            raise SpecError("explicit shape needs 'values'")
        return ParameterVector(spec["values"])
    try:
        n = int(spec["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"missing or invalid n in {spec!r}") from exc
    if n < 1:
        raise SpecError(f"n must be positive, got {n}")
    if shape in ("k-spike", "dense-flat"):
        key = "k" if shape == "k-spike" else "delta"
        count = int(spec.get(key, spec.get("count", -1)))
        parts = [{"count": count, "amplitude": spec.get("amplitude")}]
    elif shape == "mixed":
        parts = spec.get("parts")
        if not parts:
            raise SpecError("mixed shape needs a non-empty 'parts' list")
    else:
        raise SpecError(f"unknown shape {shape!r}")
    theta = np.zeros(n)
    pos = 0
    for part in parts:
        count = int(part.get("count", -1))
        amp = part.get("amplitude")
        if amp is None or count < 0:
            raise SpecError(f"part {part!r} needs count >= 0 and amplitude")
        if pos + count > n:
            raise SpecError(f"{pos + count} nonzero entries requested but n={n}")
        theta[pos:pos + count] = float(amp)
        pos += count
    return ParameterVector(theta)


# ------------------------------------------------------------------- I/O


def write_vector(path, values):
    """Write a header line ``n`` followed by one value per line."""
    arr = np.asarray(values, dtype=float).ravel()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{arr.size}\n")
        for v in arr:
            fh.write(f"{float(v)!r}\n")


def read_vector(path):
    """Inverse of :func:`write_vector`; raises :class:`ParseError` with a line number."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"header must be an integer count, got {lines[0]!r}", line=1) from None
    body = [(i + 2, ln.strip()) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != n:
        raise ParseError(f"header declares {n} values, found {len(body)}", line=1)
    out = np.empty(n)
    for j, (lineno, text) in enumerate(body):
        try:
            out[j] = float(text)
        except ValueError:
            raise ParseError(f"not a number: {text!r}", line=lineno) from None
        if not math.isfinite(out[j]):
            raise ParseError(f"non-finite value: {text!r}", line=lineno)
    return out
