"""Ensembles of random spectra and the window-count statistics run on them."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from paraopuc.cmv import decouple_model, decoupling_scheme
from paraopuc.core import STREAM_DECOUPLING, TWO_PI, RngStream, derive_seed, sample_para_model
from paraopuc.errors import ConfigError, DomainError, SolverError
from paraopuc.phase import Spectrum, arc_count, compute_spectrum, phase_probe, window_arc, window_count

TAIL_CAP = 64
POISSON_TAIL = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment.

    ``decouple`` is None (plain models), ``"log"`` (floor(ln n) blocks of size
    floor(n / ln n), model size N = blocks * block) or an explicit block size
    dividing n.
    """

    n: int
    r: float
    trials: int
    seed: int = 0
    theta0: float = 0.0
    windows: Tuple[Tuple[float, float], ...] = ((0.0, 1.0),)
    decouple: Optional[Union[str, int]] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if not 0.0 < self.r < 1.0:
            raise ConfigError(f"r must lie in (0, 1), got {self.r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        wins = tuple((float(a), float(b)) for a, b in self.windows)
        object.__setattr__(self, "windows", wins)
        size = self.size
        for a, b in wins:
            if not a < b:
                raise ConfigError(f"window ({a}, {b}) needs a < b")
            if b - a >= size:
                raise ConfigError(f"window ({a}, {b}) covers the whole circle")
        for i in range(len(wins)):
            for j in range(i + 1, len(wins)):
                if _arcs_overlap(wins[i], wins[j], size):
                    raise ConfigError(f"windows {wins[i]} and {wins[j]} overlap")

    @property
    def scheme(self) -> Optional[Tuple[int, int]]:
        """(model size, block size) when decoupling is requested."""
        if self.decouple is None:
            return None
        if self.decouple == "log":
            big_n, block, _ = decoupling_scheme(self.n)
            return big_n, block
        block = int(self.decouple)
        if block < 1 or self.n % block:
            raise ConfigError(f"block {block} does not divide n={self.n}")
        return self.n, block

    @property
    def size(self) -> int:
        """Dimension of the sampled models (N under the logarithmic scheme)."""
        if self.decouple == "log":
            return decoupling_scheme(self.n)[0]
        return self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["windows"] = [list(w) for w in self.windows]
        d["size"] = self.size
        return d


def _arcs_overlap(w1, w2, size) -> bool:
    # open arcs (a, b) in units of 2 pi / size, compared modulo the circle
    a1, b1 = w1
    a2, b2 = w2
    shift = math.floor((a2 - a1) / size) * size
    a2, b2 = a2 - shift, b2 - shift
    # now a1 <= a2 < a1 + size
    return a2 < b1 or b2 > a1 + size


def _trial_model(cfg: ExperimentConfig, t: int):
    seed = derive_seed(cfg.seed, t)
    model = sample_para_model(cfg.size, cfg.r, seed)
    scheme = cfg.scheme
    if scheme is not None:
        model = decouple_model(model, scheme[1], RngStream(seed, STREAM_DECOUPLING))
    return model


def _solve_trial(args) -> Spectrum:
    cfg, t = args
    try:
        return compute_spectrum(_trial_model(cfg, t))
    except SolverError as exc:
        raise SolverError(f"trial {t}: {exc}", trial=t) from exc


def _map(fn, cfg: ExperimentConfig, workers: int):
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or cfg.trials == 1:
        return [fn(j) for j in jobs]
    chunk = max(1, cfg.trials // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))


def run_ensemble(cfg: ExperimentConfig, workers: Optional[int] = 1) -> List[Spectrum]:
    """Spectra of cfg.trials independent models, trial t keyed by derive_seed(seed, t).

    Results come back in trial order whatever the worker count.
    """
    return _map(_solve_trial, cfg, workers)


def ensemble_counts(ensemble: Sequence[Spectrum], cfg: ExperimentConfig) -> np.ndarray:
    """Counts per (trial, window) as an integer array."""
    out = np.empty((len(ensemble), len(cfg.windows)), dtype=np.int64)
    for t, spec in enumerate(ensemble):
        for w, (a, b) in enumerate(cfg.windows):
            out[t, w] = window_count(spec, cfg.theta0, a, b, len(spec))
    return out


@dataclass(frozen=True)
class CountHistogram:
    """Empirical pmf of one window's count; counts >= 64 are lumped into ``tail_mass``."""

    window: Tuple[float, float]
    pmf: Dict[int, float]
    trials: int
    tail_mass: float = 0.0

    def __post_init__(self):
        total = math.fsum(self.pmf.values()) + self.tail_mass
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"frequencies sum to {total}")

    def mean(self) -> float:
        return math.fsum(k * p for k, p in self.pmf.items())

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "pmf": {str(k): v for k, v in sorted(self.pmf.items())},
            "trials": self.trials,
            "tail_mass": self.tail_mass,
        }


def histogram_from_counts(counts, window, trials=None) -> CountHistogram:
    counts = np.asarray(counts, dtype=np.int64)
    trials = len(counts) if trials is None else trials
    values, freq = np.unique(counts, return_counts=True)
    pmf = {int(k): int(c) / trials for k, c in zip(values, freq) if k < TAIL_CAP}
    tail = int(freq[values >= TAIL_CAP].sum()) / trials
    return CountHistogram(tuple(window), pmf, trials, tail)


def count_histogram(ensemble: Sequence[Spectrum], cfg: ExperimentConfig, window_index: int = 0) -> CountHistogram:
    a, b = cfg.windows[window_index]
    counts = [window_count(spec, cfg.theta0, a, b, len(spec)) for spec in ensemble]
    return histogram_from_counts(counts, (a, b))


def poisson_distance(hist: CountHistogram, lam: float) -> float:
    """Total variation distance between the histogram and Poisson(lam)."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    top = max(max(hist.pmf, default=0), int(stats.poisson.isf(POISSON_TAIL, lam)) + 1)
    top = min(top, TAIL_CAP - 1)
    ks = np.arange(top + 1)
    ref = stats.poisson.pmf(ks, lam)
    emp = np.array([hist.pmf.get(int(k), 0.0) for k in ks])
    # mass beyond `top`: the Poisson tail against the lumped histogram tail
    tail_ref = float(stats.poisson.sf(top, lam))
    tail_emp = hist.tail_mass + math.fsum(p for k, p in hist.pmf.items() if k > top)
    return 0.5 * (math.fsum(np.abs(emp - ref)) + abs(tail_emp - tail_ref))


@dataclass(frozen=True)
class JointWindowResult:
    windows: Tuple[Tuple[float, float], ...]
    joint_pmf: Dict[Tuple[int, ...], float]
    product_pmf: Dict[Tuple[int, ...], float]
    covariance: np.ndarray
    correlation: np.ndarray
    trials: int

    def to_dict(self) -> dict:
        return {
            "windows": [list(w) for w in self.windows],
            "joint_pmf": {",".join(map(str, k)): v for k, v in sorted(self.joint_pmf.items())},
            "poisson_product": {",".join(map(str, k)): v for k, v in sorted(self.product_pmf.items())},
            "covariance": self.covariance.tolist(),
            "correlation": self.correlation.tolist(),
            "trials": self.trials,
        }


def joint_window_test(ensemble: Sequence[Spectrum], cfg: ExperimentConfig) -> JointWindowResult:
    """Joint pmf of counts in all windows against the product of Poisson marginals."""
    if len(cfg.windows) < 2:
        raise DomainError("need at least two windows")
    return joint_from_counts(ensemble_counts(ensemble, cfg), cfg.windows)


def joint_from_counts(counts, windows) -> JointWindowResult:
    counts = np.asarray(counts)
    trials = counts.shape[0]
    tuples, freq = np.unique(counts, axis=0, return_counts=True)
    joint = {tuple(int(v) for v in row): int(c) / trials for row, c in zip(tuples, freq)}
    lams = [b - a for a, b in windows]
    product = {
        key: float(np.prod([stats.poisson.pmf(k, lam) for k, lam in zip(key, lams)])) for key in joint
    }
    cov = np.atleast_2d(np.cov(counts.T.astype(float), ddof=1)) if trials > 1 else np.zeros((len(windows),) * 2)
    sd = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cov / np.outer(sd, sd)
    return JointWindowResult(tuple(windows), joint, product, cov, corr, trials)


@dataclass(frozen=True)
class MultiplicityEstimate:
    probability: float
    stderr: float
    wilson_low: float
    wilson_high: float
    bound: float
    trials: int

    def to_dict(self) -> dict:
        return asdict(self)


def multiplicity_from_counts(counts, window) -> MultiplicityEstimate:
    counts = np.asarray(counts)
    trials = len(counts)
    hits = int(np.count_nonzero(counts >= 2))
    p = hits / trials
    ci = stats.binomtest(hits, trials).proportion_ci(confidence_level=0.95, method="wilson")
    a, b = window
    return MultiplicityEstimate(
        p, math.sqrt(p * (1.0 - p) / trials), float(ci.low), float(ci.high), (b - a) ** 2 / 2.0, trials
    )


def multiplicity_probability(ensemble: Sequence[Spectrum], cfg: ExperimentConfig, window_index: int = 0) -> MultiplicityEstimate:
    """Frequency of two or more zeros in the window, with a 95% Wilson interval."""
    a, b = cfg.windows[window_index]
    counts = [window_count(spec, cfg.theta0, a, b, len(spec)) for spec in ensemble]
    return multiplicity_from_counts(counts, (a, b))


def _probe_trial(args) -> float:
    cfg, t = args
    return phase_probe(_trial_model(cfg, t), cfg.theta0).eta_prime


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    stderr: float
    trials: int


def phase_derivative_mean(cfg: ExperimentConfig, workers: Optional[int] = 1) -> MeanEstimate:
    """Monte Carlo mean of eta'(theta0) over the ensemble."""
    if cfg.trials < 30:
        raise ConfigError("phase_derivative_mean needs at least 30 trials")
    values = np.asarray(_map(_probe_trial, cfg, workers))
    return MeanEstimate(
        math.fsum(values) / len(values), float(np.std(values, ddof=1) / math.sqrt(len(values))), len(values)
    )


@dataclass(frozen=True)
class DecouplingAgreement:
    n: int
    size: int
    block: int
    fractions: List[float]
    trials: int
    counts_full: np.ndarray = field(repr=False, default=None)
    counts_decoupled: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "size": self.size,
            "block": self.block,
            "fractions": list(self.fractions),
            "trials": self.trials,
        }


def _agreement_trial(args):
    cfg, t = args
    seed = derive_seed(cfg.seed, t)
    size, block = cfg.scheme
    full = sample_para_model(size, cfg.r, seed)
    dec = decouple_model(full, block, RngStream(seed, STREAM_DECOUPLING))
    out = []
    for a, b in cfg.windows:
        lo, hi = window_arc(cfg.theta0, a, b, size)
        out.append((arc_count(full, lo, hi), arc_count(dec, lo, hi)))
    return out


def decoupling_agreement(cfg: ExperimentConfig, workers: Optional[int] = 1) -> DecouplingAgreement:
    """Fraction of trials where C and its decoupled version give equal window counts.

    Both share every interior coefficient; only the block-boundary entries
    (and beta) are redrawn for the decoupled model.
    """
    if cfg.scheme is None:
        raise ConfigError("decoupling_agreement needs a decoupling scheme")
    size, block = cfg.scheme
    res = np.asarray(_map(_agreement_trial, cfg, workers), dtype=np.int64)
    full, dec = res[:, :, 0], res[:, :, 1]
    fractions = [float(np.mean(full[:, w] == dec[:, w])) for w in range(len(cfg.windows))]
    return DecouplingAgreement(cfg.n, size, block, fractions, cfg.trials, full, dec)


def bernoulli_poisson_reference(m: int, p: float, k: int) -> float:
    """Binomial(m, p) probability of k successes."""
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    return float(stats.binom.pmf(k, m, p))
