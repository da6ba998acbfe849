"""Monte Carlo estimation of rejection rates, risks and separation distances.

Replication ``r`` always draws from ``RngStream(seed, r)``. A run therefore
gives the same per-replication verdicts whatever the number of worker
processes, and repeated calls with one seed reuse common random numbers.
"""

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import kernels, tests_kv, tests_uv
from .errors import DomainError, FamilyViolation, NonMonotone, SpecError
from .model import BandNoise, ParameterVector, RngStream, distance_to_sparse, make_theta, sparsity

# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class MCConfig:
    reps: int = 2000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.reps < 1 or self.workers < 1:
            raise DomainError("reps and workers must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must fit in an unsigned 64-bit integer")


@dataclass
class MCReport:
    estimate: float
    std_error: float
    reps: int
    seed: int
    diagnostics: dict = field(default_factory=dict)


def _report(hits, cfg, diagnostics=None):
    p = hits / cfg.reps
    return MCReport(p, math.sqrt(p * (1.0 - p) / cfg.reps), cfg.reps, cfg.seed, diagnostics or {})


@dataclass
class RiskEstimate:
    type1: MCReport
    type2: MCReport
    risk: float
    worst_case_family: tuple

    def __post_init__(self):
        if abs(self.risk - (self.type1.estimate + self.type2.estimate)) > 1e-15:
            raise ValueError("risk must equal type1 + type2")


# ------------------------------------------------------------- test handle


KV_TESTS = {
    "hc": tests_kv.test_hc,
    "bulk": tests_kv.test_bulk,
    "inter": tests_kv.test_inter,
    "combined": tests_kv.test_combined,
}
UV_TESTS = {
    "hc_var": tests_uv.test_hc_var,
    "bulk_var": tests_uv.test_bulk_var,
    "inter_var": tests_uv.test_inter_var,
    "combined_var": tests_uv.test_combined_var,
}


@dataclass(frozen=True)
class TestHandle:
    """Picklable binding of a named test to ``(k0, alpha)`` and, for band tests, the band.

    Called as ``handle(y, sigma, generator)``; known-variance tests use the
    true ``sigma`` and band tests ignore it.
    """

    __test__ = False

    name: str
    k0: int
    alpha: float
    band: BandNoise | None = None

    def __post_init__(self):
        if self.name not in KV_TESTS and self.name not in UV_TESTS:
            raise SpecError(f"unknown test {self.name!r}; choose from "
                            f"{sorted(KV_TESTS) + sorted(UV_TESTS)}")
        if self.name in UV_TESTS and self.band is None:
            raise SpecError(f"test {self.name!r} needs a noise band")

    def __call__(self, y, sigma, gen):
        if self.name in KV_TESTS:
            return KV_TESTS[self.name](y, self.k0, self.alpha, sigma)
        if self.name == "combined_var":
            return tests_uv.test_combined_var(y, self.k0, self.alpha, self.band, gen)
        return UV_TESTS[self.name](y, self.k0, self.alpha, self.band)


def _verdict_parts(out):
    if isinstance(out, tests_kv.TestVerdict):
        return out.reject, out.fired_by
    return bool(out), None


def _run_chunk(test, theta, sigma, seed, lo, hi):
    rejects = np.zeros(hi - lo, dtype=bool)
    fired = Counter()
    for j, r in enumerate(range(lo, hi)):
        gen = RngStream(seed, r).generator
        y = theta + sigma * gen.standard_normal(theta.size)
        try:
            reject, tag = _verdict_parts(test(y, sigma, gen))
        except Exception as exc:
            raise RuntimeError(f"replication {r} (seed {seed}) failed: {exc}") from exc
        rejects[j] = reject
        if reject and tag is not None:
            fired[tag] += 1
    return rejects, fired


def _chunks(reps, workers):
    bounds = np.linspace(0, reps, min(workers, reps) + 1).astype(int)
    return list(zip(bounds[:-1], bounds[1:]))


def reject_vector(test, theta, sigma, cfg):
    """Per-replication verdicts in replication order, plus the fired-by tally."""
    theta = np.asarray(make_theta(theta).values, dtype=float)
    if cfg.workers == 1:
        return _run_chunk(test, theta, sigma, cfg.seed, 0, cfg.reps)
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(_run_chunk, test, theta, sigma, cfg.seed, lo, hi)
                   for lo, hi in _chunks(cfg.reps, cfg.workers)]
        parts = [f.result() for f in futures]
    fired = Counter()
    for _, c in parts:
        fired.update(c)
    return np.concatenate([p[0] for p in parts]), fired


def mc_reject_rate(test, theta, sigma, cfg):
    rejects, fired = reject_vector(test, theta, sigma, cfg)
    return _report(int(np.count_nonzero(rejects)), cfg,
                   {"fired_by": dict(sorted(fired.items()))})


def _stat_chunk(stat, theta, sigma, seed, lo, hi):
    out = np.empty(hi - lo)
    for j, r in enumerate(range(lo, hi)):
        gen = RngStream(seed, r).generator
        out[j] = stat(theta + sigma * gen.standard_normal(theta.size))
    return out


def mc_statistic(stat, theta, sigma, cfg):
    """Per-replication values of ``stat(y)``; returns ``(mean, standard error, values)``."""
    theta = np.asarray(make_theta(theta).values, dtype=float)
    if cfg.workers == 1:
        vals = _stat_chunk(stat, theta, sigma, cfg.seed, 0, cfg.reps)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_stat_chunk, stat, theta, sigma, cfg.seed, lo, hi)
                       for lo, hi in _chunks(cfg.reps, cfg.workers)]
            vals = np.concatenate([f.result() for f in futures])
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return float(np.mean(vals)), se, vals


# -------------------------------------------------------------------- risk


@dataclass(frozen=True)
class Family:
    tag: str
    theta: ParameterVector
    null: bool


def null_family(tag, theta):
    return Family(tag, make_theta(theta), True)


def alt_family(tag, theta):
    return Family(tag, make_theta(theta), False)


def _validate(fam, k0, delta, rho):
    nnz = sparsity(fam.theta)
    if fam.null:
        if nnz > k0:
            raise FamilyViolation(f"null family {fam.tag!r} has {nnz} > k0={k0} nonzeros")
        return
    if nnz > k0 + delta:
        raise FamilyViolation(f"alternative {fam.tag!r} has {nnz} > k0+delta={k0 + delta} nonzeros")
    dist = distance_to_sparse(fam.theta, k0)
    if dist < rho * (1.0 - 1e-12):
        raise FamilyViolation(f"alternative {fam.tag!r} lies at distance {dist} < rho={rho}")


def _worst(test, fams, sigma, cfg, accept):
    best, tag = None, None
    for fam in fams:
        rep = mc_reject_rate(test, fam.theta, sigma, cfg)
        if accept:
            p = 1.0 - rep.estimate
            rep = MCReport(p, rep.std_error, rep.reps, rep.seed, rep.diagnostics)
        if best is None or rep.estimate > best.estimate:
            best, tag = rep, fam.tag
    if best is None:
        best = MCReport(0.0, 0.0, cfg.reps, cfg.seed)
    return best, tag


def mc_risk(test, k0, delta, rho, families, cfg, sigma=1.0):
    """Worst type I error over null families plus worst type II error over alternatives."""
    if not families:
        raise DomainError("at least one family is required")
    for fam in families:
        _validate(fam, k0, delta, rho)
    t1, tag1 = _worst(test, [f for f in families if f.null], sigma, cfg, accept=False)
    t2, tag2 = _worst(test, [f for f in families if not f.null], sigma, cfg, accept=True)
    return RiskEstimate(t1, t2, t1.estimate + t2.estimate, (tag1, tag2))


# ------------------------------------------------------- separation search


def default_null_families(n, k0, sigma=1.0):
    """Zero, ``k0`` spikes at ``8 sigma sqrt(log n)`` and ``k0`` flat entries at ``0.5 sigma``."""
    fams = [null_family("zero", np.zeros(n))]
    if k0 > 0:
        fams.append(null_family("spiky", make_theta(
            {"shape": "k-spike", "n": n, "k": k0, "amplitude": 8.0 * sigma * math.sqrt(math.log(n))})))
        fams.append(null_family("flat", make_theta(
            {"shape": "dense-flat", "n": n, "delta": k0, "amplitude": 0.5 * sigma})))
    return fams


@dataclass(frozen=True)
class SpikeTemplate:
    """``delta`` entries at amplitude ``a`` after ``k0`` null entries at ``max(null_amplitude, a)``.

    With ``null_amplitude=None`` the null entries share the amplitude ``a``.
    Either way the distance to ``k0``-sparse vectors is ``sqrt(delta) * a``.
    """

    tag: str
    n: int
    k0: int
    delta: int
    null_amplitude: float | None = None

    def theta(self, a):
        th = np.zeros(self.n)
        top = a if self.null_amplitude is None else max(self.null_amplitude, a)
        th[:self.k0] = top
        th[self.k0:self.k0 + self.delta] = a
        return th

    def rho(self, a):
        return math.sqrt(self.delta) * a


def default_alternatives(n, k0, delta, sigma=1.0):
    templates = [SpikeTemplate("equal", n, k0, delta)]
    if k0 > 0:
        templates.append(SpikeTemplate("spiky-null", n, k0, delta, 8.0 * sigma * math.sqrt(math.log(n))))
    return templates


@dataclass
class SeparationResult:
    rho: float
    amplitude: float
    type1: float
    trace: list

    def __float__(self):
        return self.rho


def separation_search(test, k0, delta, gamma, families, cfg, sigma=1.0, start=1.0,
                      rel_tol=0.05, max_steps=12):
    """Largest ``rho`` whose estimated risk exceeds ``gamma``, by bracketing then bisection.

    ``families`` is ``(null_families, templates)``. The bisection is
    geometric in amplitude and stops once the bracket is within ``rel_tol``
    or after ``max_steps`` halvings. Returns ``+inf`` when the worst null
    rejection rate alone exceeds ``gamma``.
    """
    nulls, templates = families
    for fam in nulls:
        _validate(fam, k0, delta, 0.0)
    type1 = max((mc_reject_rate(test, f.theta, sigma, cfg).estimate for f in nulls), default=0.0)
    trace = []
    if type1 > gamma:
        return SeparationResult(math.inf, math.inf, type1, trace)

    def risk(a):
        worst = 0.0
        for tpl in templates:
            rep = mc_reject_rate(test, tpl.theta(a), sigma, cfg)
            worst = max(worst, 1.0 - rep.estimate)
        value = type1 + worst
        trace.append((a, value))
        return value

    a = start
    if risk(a) > gamma:
        lo = a
        for _ in range(40):
            a *= 2.0
            if risk(a) <= gamma:
                hi = a
                break
            lo = a
        else:
            raise NonMonotone(f"risk stayed above gamma up to amplitude {a}: {trace}")
    else:
        hi = a
        for _ in range(40):
            a /= 2.0
            if risk(a) > gamma:
                lo = a
                break
            hi = a
        else:
            raise NonMonotone(f"risk stayed below gamma down to amplitude {a}: {trace}")
    for _ in range(max_steps):
        if hi / lo <= 1.0 + rel_tol:
            break
        mid = math.sqrt(lo * hi)
        if risk(mid) > gamma:
            lo = mid
        else:
            hi = mid
    amp = math.sqrt(lo * hi)
    return SeparationResult(templates[0].rho(amp), amp, type1, trace)


# ----------------------------------------------------------------- oracles


def oracle_mean_bulk(theta, s):
    """Exact mean of the bulk statistic at ``sigma = 1``."""
    vals = make_theta(theta).values
    return float(np.sum(kernels.bulk_mean_kernel(s * vals)))


def oracle_mean_inter(theta, r, w):
    """Exact mean of the intermediate statistic at ``sigma = 1``."""
    vals = make_theta(theta).values
    uniq, counts = np.unique(vals, return_counts=True)
    psi = kernels.inter_mean_kernel(uniq, r, w)
    return float(np.dot(counts, 1.0 - np.atleast_1d(psi)))


# ------------------------------------------------------------- experiments


@dataclass
class Experiment:
    """Parsed experiment file with ``model``, ``test``, ``mc`` and ``output`` blocks."""

    model: dict
    test: dict
    mc: dict
    output: dict

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise SpecError("experiment file must hold a mapping")
        unknown = set(raw) - {"model", "test", "mc", "output"}
        if unknown:
            raise SpecError(f"unknown experiment blocks: {sorted(unknown)}")
        blocks = {}
        for key in ("model", "test", "mc", "output"):
            block = raw.get(key) or {}
            if not isinstance(block, dict):
                raise SpecError(f"block {key!r} must be a mapping")
            blocks[key] = block
        return cls(**blocks)
