"""Fractional moments, decay fits, Lyapunov exponents and eigenvector localization."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate

from paraopuc import _kernels
from paraopuc.cmv import EigenPair, build_cmv, factorize, inverse_iteration
from paraopuc.core import (
    STREAM_COEFFICIENTS,
    RngStream,
    _disk_draws,
    derive_seed,
    sample_para_model,
)
from paraopuc.errors import DiagnosticsError, DomainError, NearSingularError
from paraopuc.phase import segment_spectra

MAX_REJECTION = 0.10
SUPPORT_FLOOR = 1e-13


def moment_bound(s: float) -> float:
    """2^{2-s} / cos(pi s / 2): uniform bound on E|F_kl(z)|^s."""
    if not 0.0 < s < 1.0:
        raise DomainError("s must lie in (0, 1)")
    return 2.0 ** (2.0 - s) / math.cos(math.pi * s / 2.0)


@dataclass(frozen=True)
class DecayProfile:
    s: float
    distances: List[int]
    moments: List[float]
    stderrs: List[float]
    trials: int = 0
    rejected: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.distances)
        if d.size > 1 and np.any(np.diff(d) <= 0):
            raise DomainError("distances must be strictly increasing")
        if not np.all(np.isfinite(self.moments)):
            raise DomainError("moments must be finite")

    def to_csv_rows(self):
        return [(d, m, e) for d, m, e in zip(self.distances, self.moments, self.stderrs)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class ExponentialFit(NamedTuple):
    C_fit: float
    D_fit: float
    r2: float
    slope_stderr: float


def fractional_moment_profile(
    n: int,
    r: float,
    s: float,
    theta: float = 1.0,
    trials: int = 1000,
    seed: int = 0,
    distances: Optional[Sequence[int]] = None,
    z_radius: float = 1.0,
) -> DecayProfile:
    """Monte Carlo E|F_{k,k+d}(z)|^s at z = z_radius e^{i theta}.

    k sits mid-matrix so that k + max(d) stays inside.  Draws whose LU hits a
    near-singular pivot are replaced by fresh seeds and counted.
    """
    if not 0.0 < s < 1.0:
        raise DomainError("s must lie in (0, 1)")
    if trials < 1:
        raise DomainError("trials must be positive")
    if distances is None:
        distances = range(0, min(n, 16))
    distances = [int(d) for d in distances]
    if distances[0] < 0 or distances[-1] >= n:
        raise DomainError("distances must lie in [0, n)")
    k = (n - 1 - distances[-1]) // 2
    z = z_radius * complex(math.cos(theta), math.sin(theta))
    cols = np.asarray(distances) + k
    samples = np.empty((trials, len(distances)))
    rejected = 0
    attempt = 0
    t = 0
    while t < trials:
        model = sample_para_model(n, r, derive_seed(seed, attempt))
        attempt += 1
        try:
            lu = factorize(build_cmv(model), z)
        except NearSingularError:
            rejected += 1
            if rejected > MAX_REJECTION * trials:
                raise DiagnosticsError(f"{rejected} near-singular draws out of {attempt}")
            continue
        e = np.zeros(n, dtype=np.complex128)
        e[k] = 1.0
        row = lu.solve(e, trans=1)
        f = 2.0 * z * row[cols]
        f[cols == k] += 1.0
        samples[t] = np.abs(f) ** s
        t += 1
    means = [math.fsum(col) / trials for col in samples.T]
    errs = [float(np.std(col, ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf for col in samples.T]
    meta = {"n": n, "r": r, "theta": theta, "seed": seed, "row": k, "z_radius": z_radius}
    return DecayProfile(float(s), distances, means, errs, trials, rejected, meta)


def fit_exponential(profile: DecayProfile, skip_diagonal: bool = False) -> ExponentialFit:
    """Least squares of log moment = log C - D d; returns C, D, r^2 and the slope stderr."""
    d = np.asarray(profile.distances, dtype=float)
    m = np.asarray(profile.moments, dtype=float)
    if skip_diagonal:
        keep = d > 0
        d, m = d[keep], m[keep]
    if d.size < 3:
        raise DomainError("need at least three distances")
    if np.any(m <= 0):
        raise DomainError("moments must be positive to fit logarithms")
    y = np.log(m)
    x = d - d.mean()
    sxx = float(np.dot(x, x))
    slope = float(np.dot(x, y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * d.mean())
    resid = y - (intercept + slope * d)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    se = math.sqrt(ss_res / (d.size - 2) / sxx)
    return ExponentialFit(math.exp(intercept), -slope, r2, se)


def lyapunov_closed_form(r: float) -> float:
    """(r^2 + (1 - r^2) log(1 - r^2)) / (2 r^2) for alpha uniform on the disk of radius r."""
    if not 0.0 < r < 1.0:
        raise DomainError("r must lie in (0, 1)")
    r2 = r * r
    return (r2 + (1.0 - r2) * math.log1p(-r2)) / (2.0 * r2)


def lyapunov_quadrature(r: float) -> float:
    """-(1/2) E log(1 - |alpha|^2) by adaptive quadrature of the radial density 2 t / r^2."""
    if not 0.0 < r < 1.0:
        raise DomainError("r must lie in (0, 1)")
    val, _ = integrate.quad(lambda t: t * math.log1p(-t * t), 0.0, r, epsabs=1e-15, epsrel=1e-13)
    return -val / (r * r)


@dataclass(frozen=True)
class LyapunovEstimate:
    gamma: float
    stderr: float
    steps: np.ndarray
    trace: np.ndarray


def lyapunov_estimate(r: float, z: complex, steps: int, seed: int = 0, batches: int = 20) -> LyapunovEstimate:
    """(1/n) log ||T_n(z)|| for i.i.d. uniform coefficients, renormalized every step.

    ``trace`` holds the running estimate at ``batches`` checkpoints; the
    standard error comes from the spread of per-batch growth rates.
    """
    if steps < 1:
        raise DomainError("steps must be positive")
    batches = max(1, min(int(batches), int(steps)))
    checkpoints = np.unique(np.linspace(0, steps, batches + 1).round().astype(np.int64)[1:])
    if r == 0:
        # T_k = diag(z^k, 1): its norm is max(|z|^k, 1), no products needed
        logs = np.maximum(checkpoints * math.log(abs(z)), 0.0) if z != 0 else np.zeros(len(checkpoints))
    else:
        if not 0.0 < r < 1.0:
            raise DomainError("r must lie in [0, 1)")
        alpha = _disk_draws(RngStream(seed, STREAM_COEFFICIENTS).generator(), r, steps)
        logs = _kernels.transfer_log_growth(alpha, complex(z), checkpoints)
    trace = logs / checkpoints
    gamma = float(trace[-1])
    if len(checkpoints) > 1:
        widths = np.diff(np.concatenate([[0], checkpoints]))
        rates = np.diff(np.concatenate([[0.0], logs])) / widths
        stderr = float(np.std(rates, ddof=1) / math.sqrt(len(rates)))
    else:
        stderr = math.inf
    return LyapunovEstimate(gamma, stderr, checkpoints, trace)


@dataclass(frozen=True)
class LocalizationProfile:
    center: int
    log_abs: np.ndarray
    fit_rate: float
    fit_r2: float


def localization_profile(pair: EigenPair) -> LocalizationProfile:
    """Center = first argmax of |v|; rate from log|v(m)| ~ c - rate |m - center|.

    Only entries above 1e-13 enter the fit.  With no such entry off the
    center the rate is reported as +inf.
    """
    v = np.abs(np.asarray(pair.vector))
    center = int(np.argmax(v))
    with np.errstate(divide="ignore"):
        log_abs = np.log(v)
    idx = np.nonzero(v > SUPPORT_FLOOR)[0]
    dist = np.abs(idx - center).astype(float)
    if np.count_nonzero(dist > 0) == 0:
        return LocalizationProfile(center, log_abs, math.inf, math.nan)
    y = log_abs[idx]
    x = dist - dist.mean()
    sxx = float(np.dot(x, x))
    slope = float(np.dot(x, y - y.mean()) / sxx)
    resid = y - y.mean() - slope * x
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 - float(np.dot(resid, resid)) / ss_tot if ss_tot > 0 else 1.0
    return LocalizationProfile(center, log_abs, -slope, r2)


def block_eigenpairs(model) -> List[EigenPair]:
    """Eigenpairs block by block; vectors vanish exactly outside their block."""
    c = build_cmv(model)
    ends = list(model.cuts) + [model.n - 1]
    pairs = []
    start = 0
    for end, angles in zip(ends, segment_spectra(model)):
        sub = c.block(start, end + 1)
        for a in angles:
            p = inverse_iteration(sub, a)
            v = np.zeros(model.n, dtype=np.complex128)
            v[start : end + 1] = p.vector
            pairs.append(EigenPair(p.angle, v, p.residual))
        start = end + 1
    return pairs


def count_bad_eigenfunctions(model, window_halfwidth: float, pairs: Optional[List[EigenPair]] = None) -> int:
    """Eigenpairs whose localization center lies within the half-width of a cut.

    A cut at index p separates coordinates p and p+1; a center m counts when
    |m - (p + 1/2)| < window_halfwidth + 1/2 for some cut.
    """
    if not model.cuts:
        return 0
    if pairs is None:
        pairs = block_eigenpairs(model)
    centers = np.array([localization_profile(p).center for p in pairs])
    mids = np.asarray(model.cuts, dtype=float) + 0.5
    dist = np.abs(centers[:, None] - mids[None, :]).min(axis=1)
    return int(np.count_nonzero(dist < window_halfwidth + 0.5))


def write_profile_csv(profile: DecayProfile, path) -> None:
    with open(path, "w") as fh:
        fh.write("distance,moment,stderr\n")
        for d, m, e in profile.to_csv_rows():
            fh.write(f"{d},{m:.17g},{e:.17g}\n")
