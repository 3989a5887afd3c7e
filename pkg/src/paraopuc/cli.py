"""Command line driver: one subcommand per experiment family.

Configuration is an INI file (see ``configs/``) whose ``[run]`` section holds
n, r, trials, seed, theta0, windows and decouple; command-specific keys live
in a section named after the command.  Flags override file values.

Every run writes its data files plus ``manifest.json`` to ``--out-dir``.
Data files depend only on the configuration, never on the worker count.
Set ``SOURCE_DATE_EPOCH`` to pin the manifest timestamps as well.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from paraopuc import __version__
from paraopuc.errors import ConfigError, DomainError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4

DEFAULTS = {
    "zeros": {"n": 71, "r": 0.5, "trials": 1},
    "poisson": {"n": 400, "r": 0.5, "trials": 5000, "windows": "0:1, 1:2"},
    "fracmom": {"n": 60, "r": 0.5, "trials": 2000, "s": 0.5, "theta": 1.0, "max_distance": 15},
    "lyapunov": {"r": 0.5, "steps": 200000, "theta": 1.0, "theta_alt": 2.5},
    "localize": {"n": 200, "r": 0.9, "trials": 1, "halfwidth_factor": 0.5},
    "decouple": {"n": 2048, "r": 0.5, "trials": 500, "windows": "0:1", "decouple": "log"},
    "selftest": {},
}
BASE = {"n": 100, "r": 0.5, "trials": 100, "seed": 0, "theta0": 0.0, "windows": "0:1", "decouple": ""}


def _fmt(x) -> str:
    return "%.17g" % x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


def parse_windows(text: str):
    wins = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = (float(x) for x in part.split(":"))
        except ValueError as exc:
            raise ConfigError(f"malformed window {part!r}; expected a:b") from exc
        if not a < b:
            raise ConfigError(f"window {part!r} needs a < b")
        wins.append((a, b))
    if not wins:
        raise ConfigError("at least one window is required")
    return tuple(wins)


def load_settings(command: str, args) -> dict:
    """Merge built-in defaults, the config file and flag overrides."""
    settings = dict(BASE)
    settings.update(DEFAULTS[command])
    if args.config:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not parser.read(args.config):
            raise ConfigError(f"cannot read config file {args.config}")
        for section in ("run", command):
            if parser.has_section(section):
                settings.update(parser.items(section))
    for key in ("seed", "trials", "n", "r"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _get(settings, key, kind):
    try:
        return kind(settings[key])
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {settings.get(key)!r}") from exc


def experiment_config(settings):
    from paraopuc.pointproc import ExperimentConfig

    dec = str(settings.get("decouple", "") or "").strip()
    decouple = None if dec in ("", "none", "off") else (dec if dec == "log" else _get(settings, "decouple", int))
    return ExperimentConfig(
        n=_get(settings, "n", int),
        r=_get(settings, "r", float),
        trials=_get(settings, "trials", int),
        seed=_get(settings, "seed", int),
        theta0=_get(settings, "theta0", float),
        windows=parse_windows(settings["windows"]),
        decouple=decouple,
    )


def _check(results, name, ok, detail):
    results.append({"criterion": name, "passed": bool(ok), "detail": detail})


def cmd_zeros(settings, out: Path, workers):
    from paraopuc.phase import RESIDUAL_LIMIT
    from paraopuc.pointproc import run_ensemble

    cfg = experiment_config(settings)
    ens = run_ensemble(cfg, workers)
    rows = []
    for t, spec in enumerate(ens):
        for j, (a, res) in enumerate(zip(spec.angles, spec.residual_log)):
            rows.append((t, j, float(a), float(res)))
    write_csv(out / "zeros.csv", ("trial", "index", "theta", "residual_log"), rows)
    worst = max(float(np.max(s.residual_log)) for s in ens)
    complete = all(len(s) == cfg.size for s in ens)
    checks = []
    _check(checks, "every trial has n zeros", complete, {"size": cfg.size})
    _check(checks, "residuals below 1e-8", worst < math.log(RESIDUAL_LIMIT), {"worst_residual_log": worst})
    summary = {"config": cfg.to_dict(), "trials": len(ens), "worst_residual_log": worst}
    return summary, checks


def cmd_poisson(settings, out: Path, workers):
    from paraopuc import pointproc as pp

    cfg = experiment_config(settings)
    ens = pp.run_ensemble(cfg, workers)
    counts = pp.ensemble_counts(ens, cfg)
    write_csv(
        out / "counts.csv",
        ["trial"] + [f"w{i}" for i in range(len(cfg.windows))],
        [(t, *map(int, row)) for t, row in enumerate(counts)],
    )
    windows = []
    checks = []
    for w, (a, b) in enumerate(cfg.windows):
        hist = pp.histogram_from_counts(counts[:, w], (a, b))
        lam = b - a
        tv = pp.poisson_distance(hist, lam)
        mult = pp.multiplicity_from_counts(counts[:, w], (a, b))
        m = int(math.floor(math.log(cfg.size))) if cfg.size > 2 else 0
        ref = [pp.bernoulli_poisson_reference(m, min(1.0, lam / m), k) for k in range(6)] if m > 0 else []
        mean = float(counts[:, w].mean())
        mean_se = float(counts[:, w].std(ddof=1) / math.sqrt(cfg.trials)) if cfg.trials > 1 else math.inf
        windows.append(
            {
                "histogram": hist.to_dict(),
                "tv_to_poisson": tv,
                "mean_count": mean,
                "mean_count_stderr": mean_se,
                "multiplicity": mult.to_dict(),
                "bernoulli_reference": ref,
            }
        )
        _check(checks, f"window {w} TV < 0.03", tv < 0.03, {"tv": tv})
        p0 = hist.pmf.get(0, 0.0)
        _check(checks, f"window {w} |pmf(0) - e^-lam| < 0.02", abs(p0 - math.exp(-lam)) < 0.02, {"pmf0": p0})
        _check(
            checks,
            f"window {w} P(>=2) <= (b-a)^2/2 + 3 stderr",
            mult.probability <= mult.bound + 3 * mult.stderr,
            mult.to_dict(),
        )
    summary = {"config": cfg.to_dict(), "windows": windows}
    if len(cfg.windows) > 1:
        joint = pp.joint_from_counts(counts, cfg.windows)
        summary["joint"] = joint.to_dict()
        corr = joint.correlation[np.triu_indices(len(cfg.windows), 1)]
        worst = float(np.max(np.abs(corr)))
        _check(checks, "|corr| < 0.05 across windows", worst < 0.05, {"max_abs_corr": worst})
    if cfg.trials >= 30 and cfg.decouple is None:
        pdm = pp.phase_derivative_mean(cfg, workers)
        summary["phase_derivative_mean"] = {"mean": pdm.mean, "stderr": pdm.stderr, "expected": cfg.n}
    return summary, checks


def cmd_fracmom(settings, out: Path, workers):
    from paraopuc.analysis import fit_exponential, fractional_moment_profile, moment_bound, write_profile_csv

    n = _get(settings, "n", int)
    s = _get(settings, "s", float)
    dmax = min(_get(settings, "max_distance", int), n - 1)
    prof = fractional_moment_profile(
        n,
        _get(settings, "r", float),
        s,
        theta=_get(settings, "theta", float),
        trials=_get(settings, "trials", int),
        seed=_get(settings, "seed", int),
        distances=range(0, dmax + 1),
    )
    write_profile_csv(prof, out / "profile.csv")
    bound = moment_bound(s)
    fit = fit_exponential(prof, skip_diagonal=True)
    checks = []
    _check(
        checks,
        "diagonal moment <= bound + 3 stderr",
        prof.moments[0] <= bound + 3 * prof.stderrs[0],
        {"moment": prof.moments[0], "stderr": prof.stderrs[0], "bound": bound},
    )
    _check(
        checks,
        "negative log-moment slope beyond 3 stderr",
        fit.D_fit > 3 * fit.slope_stderr,
        fit._asdict(),
    )
    summary = {
        "n": n,
        "s": s,
        "bound": bound,
        "profile": {"distances": prof.distances, "moments": prof.moments, "stderrs": prof.stderrs},
        "rejected": prof.rejected,
        "fit": fit._asdict(),
        "meta": prof.meta,
    }
    print(f"bound 2^(2-s)/cos(pi s/2) = {bound:.6g}")
    return summary, checks


def cmd_lyapunov(settings, out: Path, workers):
    from paraopuc.analysis import lyapunov_closed_form, lyapunov_estimate, lyapunov_quadrature

    r = _get(settings, "r", float)
    steps = _get(settings, "steps", int)
    seed = _get(settings, "seed", int)
    closed = lyapunov_closed_form(r)
    quad = lyapunov_quadrature(r)
    estimates = []
    for key in ("theta", "theta_alt"):
        th = _get(settings, key, float)
        est = lyapunov_estimate(r, complex(math.cos(th), math.sin(th)), steps, seed)
        estimates.append({"theta": th, "gamma": est.gamma, "stderr": est.stderr})
        if key == "theta":
            write_csv(out / "trace.csv", ("steps", "estimate"), [(int(k), float(v)) for k, v in zip(est.steps, est.trace)])
    checks = []
    err = abs(estimates[0]["gamma"] - closed)
    _check(checks, "|estimate - closed form| < 0.005", err < 0.005, {"error": err})
    _check(checks, "closed form vs quadrature < 1e-10", abs(closed - quad) < 1e-10, {"diff": abs(closed - quad)})
    print(f"closed form {closed:.7f}  estimate {estimates[0]['gamma']:.7f} +- {estimates[0]['stderr']:.2g}")
    summary = {"r": r, "steps": steps, "seed": seed, "closed_form": closed, "quadrature": quad, "estimates": estimates}
    return summary, checks


def cmd_localize(settings, out: Path, workers):
    from paraopuc.analysis import block_eigenpairs, count_bad_eigenfunctions, localization_profile
    from paraopuc.cmv import decouple_model, decoupling_scheme
    from paraopuc.core import STREAM_DECOUPLING, RngStream, derive_seed, sample_para_model

    cfg = experiment_config(settings)
    rows = []
    rates, good, bad_counts = [], [], []
    for t in range(cfg.trials):
        seed = derive_seed(cfg.seed, t)
        model = sample_para_model(cfg.size, cfg.r, seed)
        if cfg.scheme is not None:
            model = decouple_model(model, cfg.scheme[1], RngStream(seed, STREAM_DECOUPLING))
        pairs = block_eigenpairs(model)
        for j, p in enumerate(pairs):
            prof = localization_profile(p)
            rows.append((t, j, float(p.angle), prof.center, float(prof.fit_rate), float(prof.fit_r2), float(p.residual)))
            rates.append(prof.fit_rate)
            good.append(prof.fit_r2 > 0.5)
        if model.cuts:
            width = _get(settings, "halfwidth_factor", float) * math.log(cfg.n)
            bad_counts.append(count_bad_eigenfunctions(model, width, pairs))
    write_csv(out / "eigen.csv", ("trial", "index", "angle", "center", "rate", "r2", "residual"), rows)
    median = float(np.median(rates))
    frac = float(np.mean(good))
    checks = []
    _check(checks, "median decay rate > 0", median > 0, {"median_rate": median})
    _check(checks, "r2 > 0.5 on >= 80% of eigenpairs", frac >= 0.8, {"fraction": frac})
    summary = {"config": cfg.to_dict(), "median_rate": median, "fraction_r2_above_half": frac}
    if bad_counts:
        summary["bad_eigenfunctions"] = {"mean": float(np.mean(bad_counts)), "per_trial": bad_counts}
    return summary, checks


def cmd_decouple(settings, out: Path, workers):
    from paraopuc.pointproc import decoupling_agreement

    cfg = experiment_config(settings)
    if cfg.decouple is None:
        raise ConfigError("decouple needs decouple = log or a block size")
    agr = decoupling_agreement(cfg, workers)
    rows = []
    for t in range(cfg.trials):
        for w in range(len(cfg.windows)):
            rows.append((t, w, int(agr.counts_full[t, w]), int(agr.counts_decoupled[t, w])))
    write_csv(out / "counts.csv", ("trial", "window", "coupled", "decoupled"), rows)
    checks = []
    for w, f in enumerate(agr.fractions):
        _check(checks, f"window {w} agreement >= 0.85", f >= 0.85, {"fraction": f})
    return {"config": cfg.to_dict(), "agreement": agr.to_dict()}, checks


def cmd_selftest(settings, out: Path, workers):
    from paraopuc.analysis import lyapunov_closed_form, lyapunov_quadrature
    from paraopuc.cmv import build_cmv, inverse_iteration, resolvent_entry, resolvent_oracle, unitarity_defect
    from paraopuc.core import ParaModel, sample_para_model
    from paraopuc.phase import compute_spectrum

    checks = []
    free = compute_spectrum(ParaModel.from_coefficients(np.zeros(63)))
    err = float(np.max(np.abs(free.angles - 2 * np.pi * np.arange(64) / 64)))
    _check(checks, "free spectrum n=64", err < 1e-10, {"max_error": err})
    model = sample_para_model(100, 0.9, 11)
    c = build_cmv(model)
    spec = compute_spectrum(model)
    worst = max(inverse_iteration(c, a).residual for a in spec.angles)
    _check(checks, "inverse iteration confirms all zeros", worst < 1e-8, {"worst_residual": worst})
    _check(checks, "unitarity", unitarity_defect(c) < 1e-12, {"defect": unitarity_defect(c)})
    small = sample_para_model(12, 0.5, 4)
    cs = build_cmv(small)
    rel = 0.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        # the oracle loses ~|z|^-n to cancellation, so stay in the annulus 1/2 <= |z| <= 1
        z = rng.uniform(0.5, 1.0) * np.exp(2j * np.pi * rng.random())
        k, l = (int(x) for x in rng.integers(0, 12, 2))
        a, b = resolvent_entry(cs, z, k, l), resolvent_oracle(small, z, k, l)
        rel = max(rel, abs(a - b) / abs(a))
    _check(checks, "resolvent dual path", rel < 1e-6, {"max_rel_error": rel})
    diff = abs(lyapunov_closed_form(0.5) - lyapunov_quadrature(0.5))
    _check(checks, "Lyapunov closed form vs quadrature", diff < 1e-10, {"diff": diff})
    return {"checks": len(checks)}, checks


COMMANDS = {
    "zeros": cmd_zeros,
    "poisson": cmd_poisson,
    "fracmom": cmd_fracmom,
    "lyapunov": cmd_lyapunov,
    "localize": cmd_localize,
    "decouple": cmd_decouple,
    "selftest": cmd_selftest,
}


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paraopuc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [run] and [%s] sections" % name)
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--r", type=float)
        p.add_argument("--workers", type=int, default=None, help="default: all CPUs")
        p.add_argument("--out-dir", default=f"out/{name}")
        p.add_argument("--check", action="store_true", help="exit 4 when an acceptance threshold fails")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out_dir)
    started = _timestamp()
    try:
        settings = load_settings(args.command, args)
        out.mkdir(parents=True, exist_ok=True)
        summary, checks = COMMANDS[args.command](settings, out, args.workers)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    summary["checks"] = checks
    write_json(out / "summary.json", summary)
    for c in checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['criterion']}")
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "tool": "paraopuc",
        "version": __version__,
        "command": args.command,
        "config": {k: str(v) for k, v in sorted(settings.items())},
        "seed": int(settings.get("seed", 0)),
        "started": started,
        "finished": _timestamp(),
        "outputs": {p.name: _sha256(p) for p in files},
    }
    write_json(out / "manifest.json", manifest)
    if args.check and not all(c["passed"] for c in checks):
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
