"""Command-line front end.

Settings resolve as flags > ``--config`` file > built-in defaults. Every
command writes CSV with a single ``#`` metadata line (version, command,
seed). Exit status: 0 success, 1 a level check failed, 2 usage or I/O error.
"""

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field

import yaml

from . import __version__, estimator, harness, rates
from .errors import DomainError, ParseError, SparsityError, SpecError
from .model import BandNoise, read_vector

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    command: str
    n: int = 500
    k0: list = field(default_factory=lambda: [0])
    delta: list = field(default_factory=list)
    points: list = field(default_factory=list)
    amplitudes: list = field(default_factory=list)
    alpha: float = 0.1
    gamma: float = 0.5
    sigma: float = 1.0
    sigma_lo: float | None = None
    sigma_hi: float | None = None
    tests: list = field(default_factory=lambda: ["combined"])
    reps: int = 2000
    seed: int = 0
    workers: int = 1
    out: str | None = None
    data: str | None = None
    validity_fraction: float = rates.DEFAULT_VALIDITY_FRACTION

    @property
    def band(self):
        if self.sigma_lo is None and self.sigma_hi is None:
            return None
        return BandNoise(self.sigma_lo, self.sigma_hi)

    @property
    def mc(self):
        return harness.MCConfig(self.reps, self.seed, self.workers)


_COMMAND_DEFAULTS = {
    "calibrate": {"k0": [0, 5, 23, 100], "tests": ["hc", "bulk", "combined"]},
    "power-curve": {"k0": [0], "delta": [5], "amplitudes": [1.0, 2.0, 3.0, 4.0, 5.0], "reps": 500},
    "separation": {"points": [[0, 5]], "reps": 400},
    "estimate": {},
    "rates": {"k0": [], "delta": []},
}

# keys accepted in each block of a config file
_FILE_KEYS = {
    "model": {"n", "k0", "delta", "points", "amplitudes", "sigma", "sigma_lo", "sigma_hi", "data"},
    "test": {"tests", "name", "alpha", "gamma", "validity_fraction"},
    "mc": {"reps", "seed", "workers"},
    "output": {"out", "path"},
}


def _as_list(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [value]


def _coerce(name, value, kind):
    try:
        if kind == "int":
            out = int(value)
            if out != float(value):
                raise ValueError
            return out
        if kind == "float":
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
    except (TypeError, ValueError):
        raise UsageError(f"field {name!r}: expected {kind}, got {value!r}") from None
    return value


def _load_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    try:
        exp = harness.Experiment.from_dict(raw)
    except SpecError as exc:
        raise UsageError(f"config {path}: {exc}") from None
    flat = {}
    for block in ("model", "test", "mc", "output"):
        values = getattr(exp, block)
        unknown = set(values) - _FILE_KEYS[block]
        if unknown:
            raise UsageError(f"config {path}: unknown keys in {block!r}: {sorted(unknown)}")
        for key, value in values.items():
            key = {"name": "tests", "path": "out"}.get(key, key)
            flat[key] = value
    return flat


def build_config(args):
    settings = dict(_COMMAND_DEFAULTS[args.command])
    if args.config:
        settings.update(_load_file(args.config))
    for key in ("n", "k0", "delta", "alpha", "gamma", "sigma", "sigma_lo", "sigma_hi",
                "tests", "reps", "seed", "workers", "out", "data", "amplitudes"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "point", None):
        settings["points"] = [_parse_point(p) for p in args.point]
    return _validate(ExperimentConfig(args.command, **_normalize(settings)))


def _parse_point(text):
    try:
        k0, delta = text.split(":")
        return [int(k0), int(delta)]
    except ValueError:
        raise UsageError(f"point {text!r} must look like K0:DELTA") from None


def _normalize(settings):
    out = dict(settings)
    for key, kind in (("k0", "int"), ("delta", "int"), ("amplitudes", "float")):
        if key in out:
            out[key] = [_coerce(key, v, kind) for v in _as_list(out[key])]
    if "tests" in out:
        out["tests"] = [str(t) for t in _as_list(out["tests"])]
    if "points" in out:
        pts = []
        for p in out["points"] or []:
            if not isinstance(p, (list, tuple)) or len(p) != 2:
                raise UsageError(f"field 'points': each entry must be [k0, delta], got {p!r}")
            pts.append([_coerce("points", p[0], "int"), _coerce("points", p[1], "int")])
        out["points"] = pts
    for key in ("n", "reps", "seed", "workers"):
        if key in out:
            out[key] = _coerce(key, out[key], "int")
    for key in ("alpha", "gamma", "sigma", "validity_fraction"):
        if key in out:
            out[key] = _coerce(key, out[key], "float")
    for key in ("sigma_lo", "sigma_hi"):
        if out.get(key) is not None:
            out[key] = _coerce(key, out[key], "float")
    return out


def _validate(cfg):
    if cfg.n < 4:
        raise UsageError("field 'n': must be at least 4")
    for name in ("alpha", "gamma"):
        if not 0 < getattr(cfg, name) < 1:
            raise UsageError(f"field {name!r}: must lie in (0, 1)")
    if not cfg.sigma > 0:
        raise UsageError("field 'sigma': must be positive")
    if (cfg.sigma_lo is None) != (cfg.sigma_hi is None):
        raise UsageError("fields 'sigma_lo' and 'sigma_hi' must be given together")
    if cfg.sigma_lo is not None and not 0 < cfg.sigma_lo < cfg.sigma_hi:
        raise UsageError("fields 'sigma_lo', 'sigma_hi': need 0 < sigma_lo < sigma_hi")
    if cfg.reps < 1 or cfg.workers < 1:
        raise UsageError("fields 'reps' and 'workers' must be at least 1")
    if not 0 <= cfg.seed < 2 ** 64:
        raise UsageError("field 'seed': must fit in an unsigned 64-bit integer")
    known = set(harness.KV_TESTS) | set(harness.UV_TESTS)
    for t in cfg.tests:
        if t not in known:
            raise UsageError(f"field 'tests': unknown test {t!r}; choose from {sorted(known)}")
        if t in harness.UV_TESTS and cfg.band is None:
            raise UsageError(f"field 'tests': {t!r} needs --sigma-lo and --sigma-hi")
    if cfg.command in ("calibrate", "power-curve"):
        for k0 in cfg.k0:
            if not 0 <= k0 < cfg.n:
                raise UsageError(f"field 'k0': {k0} outside 0..n-1")
    return cfg


# ---------------------------------------------------------------- output


def _emit(cfg, header, rows):
    buf = io.StringIO()
    buf.write(f"# sparsity_minimax {__version__} command={cfg.command} seed={cfg.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    text = buf.getvalue()
    if cfg.out:
        try:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise UsageError(f"cannot write {cfg.out}: {exc.strerror}") from None
    else:
        sys.stdout.write(text)


def _handle(cfg, name, k0):
    return harness.TestHandle(name, k0, cfg.alpha, cfg.band if name in harness.UV_TESTS else None)


def _sigmas(cfg, name):
    if name in harness.UV_TESTS:
        return [cfg.sigma_lo, cfg.sigma_hi]
    return [cfg.sigma]


# -------------------------------------------------------------- commands


def cmd_calibrate(cfg):
    rows, failed = [], False
    for name in cfg.tests:
        for k0 in cfg.k0:
            if name in ("inter", "inter_var") and k0 < 20 * math.sqrt(cfg.n):
                continue
            for sigma in _sigmas(cfg, name):
                for fam in harness.default_null_families(cfg.n, k0, sigma):
                    rep = harness.mc_reject_rate(_handle(cfg, name, k0), fam.theta, sigma, cfg.mc)
                    ok = rep.estimate <= cfg.alpha + 3.0 * math.sqrt(
                        cfg.alpha * (1.0 - cfg.alpha) / cfg.reps)
                    failed |= not ok
                    rows.append([name, cfg.n, k0, cfg.alpha, sigma, fam.tag, rep.estimate,
                                 rep.std_error, "pass" if ok else "fail"])
    _emit(cfg, ["test", "n", "k0", "alpha", "sigma", "family", "estimate", "se", "result"], rows)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_power_curve(cfg):
    rows = []
    for name in cfg.tests:
        for k0 in cfg.k0:
            for delta in cfg.delta:
                if not 1 <= delta <= cfg.n - k0:
                    raise UsageError(f"field 'delta': {delta} outside 1..n-k0")
                for sigma in _sigmas(cfg, name):
                    for tpl in harness.default_alternatives(cfg.n, k0, delta, sigma):
                        for amp in cfg.amplitudes:
                            rep = harness.mc_reject_rate(_handle(cfg, name, k0), tpl.theta(amp),
                                                         sigma, cfg.mc)
                            rows.append([f"{name}:k0={k0}:delta={delta}:sigma={sigma!r}", tpl.tag,
                                         amp, tpl.rho(amp), rep.estimate, rep.std_error, cfg.seed])
    _emit(cfg, ["experiment", "family", "amplitude", "rho", "estimate", "se", "seed"], rows)
    return EXIT_OK


def cmd_separation(cfg):
    rows = []
    for name in cfg.tests:
        for k0, delta in cfg.points:
            if not (0 <= k0 < cfg.n and 1 <= delta <= cfg.n - k0):
                raise UsageError(f"field 'points': ({k0}, {delta}) outside the valid range")
            worst = None
            for sigma in _sigmas(cfg, name):
                fams = (harness.default_null_families(cfg.n, k0, sigma),
                        harness.default_alternatives(cfg.n, k0, delta, sigma))
                res = harness.separation_search(_handle(cfg, name, k0), k0, delta, cfg.gamma,
                                                fams, cfg.mc, sigma=sigma, start=2.0 * sigma)
                if worst is None or res.rho > worst.rho:
                    worst = res
            rate = rates.table_rate_uv(k0, delta, cfg.n, cfg.validity_fraction) \
                if name in harness.UV_TESTS else rates.table_rate_kv(k0, delta, cfg.n)
            rows.append([f"{name}:k0={k0}:delta={delta}", "worst", worst.amplitude, worst.rho,
                         worst.rho ** 2, rate.value, rate.regime, cfg.seed])
    _emit(cfg, ["experiment", "family", "amplitude", "rho", "rho2", "table_rate", "regime",
                "seed"], rows)
    return EXIT_OK


def cmd_estimate(cfg):
    if not cfg.data:
        raise UsageError("estimate needs --data PATH")
    if cfg.band is not None:
        raise UsageError("estimate supports known sigma only; pass --sigma")
    try:
        y = read_vector(cfg.data)
    except OSError as exc:
        raise UsageError(f"cannot read {cfg.data}: {exc.strerror}") from None
    est = estimator.estimate_sparsity(y, cfg.alpha, cfg.sigma)
    rows = [["k_hat", "", est.k_hat], ["k_hc", "", est.k_hc], ["k_b", "", est.k_b],
            ["k_i", "", "not-applicable" if est.k_i == estimator.NOT_APPLICABLE else est.k_i]]
    rows += [["certificate", int(q), float(b)] for q, b in zip(est.certificate_q, est.certificate)]
    _emit(cfg, ["quantity", "q", "value"], rows)
    return EXIT_OK


def cmd_rates(cfg):
    points = list(cfg.points) or [[k0, d] for k0 in cfg.k0 for d in cfg.delta]
    if not points:
        raise UsageError("rates needs a nonempty grid (--k0 and --delta, or points)")
    rows = []
    for k0, delta in points:
        try:
            kv = rates.table_rate_kv(k0, delta, cfg.n)
            uv = rates.table_rate_uv(k0, delta, cfg.n, cfg.validity_fraction)
        except DomainError as exc:
            rows.append([cfg.n, k0, delta, "", "", "", "", "", f"skipped: {exc}"])
            continue
        rows.append([cfg.n, k0, delta, kv.value, kv.regime, uv.value, uv.regime,
                     int(uv.valid), "" if uv.valid else "out-of-validity"])
    _emit(cfg, ["n", "k0", "delta", "rate_kv", "regime_kv", "rate_uv", "regime_uv",
                "uv_valid", "warning"], rows)
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "power-curve": cmd_power_curve,
    "separation": cmd_separation,
    "estimate": cmd_estimate,
    "rates": cmd_rates,
}


def _parser():
    parser = argparse.ArgumentParser(prog="sparsity-minimax", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML file with model/test/mc/output blocks")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--out", help="CSV destination (default stdout)")
        p.add_argument("--alpha", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--k0", help="integer or comma-separated list")
        p.add_argument("--sigma", type=float)
        p.add_argument("--sigma-lo", dest="sigma_lo", type=float)
        p.add_argument("--sigma-hi", dest="sigma_hi", type=float)
        p.add_argument("--tests", help="comma-separated test names")
        if name in ("power-curve", "rates"):
            p.add_argument("--delta", help="integer or comma-separated list")
        if name == "power-curve":
            p.add_argument("--amplitudes", help="comma-separated amplitudes")
        if name in ("separation", "rates"):
            p.add_argument("--point", action="append", help="K0:DELTA, repeatable")
        if name == "separation":
            p.add_argument("--gamma", type=float)
        if name == "estimate":
            p.add_argument("--data", help="file: count on line 1, one value per line")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"error: {cfg.data}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SparsityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
