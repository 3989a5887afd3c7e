"""Monotone Blaschke phase and the certified spectrum solver.

On the circle B_N(e^{it}) = beta z Phi_{N-1}/Phi*_{N-1} has modulus one and a
strictly increasing continuous phase eta(t).  The zeros of Phi_N(., beta) are
exactly the solutions of eta(t) = 0 mod 2 pi, so locating all n zeros reduces
to n bracketed scalar crossings, and eta(2 pi) - eta(0) = 2 pi n certifies that
none were missed.

The lifted phase is accumulated step by step through the Schur-type map of the
ratio Phi_k/Phi*_k, each step contributing t - 2 arg(1 - alpha_k e^{i(.)}) with
the arg confined to (-pi/2, pi/2).  This lift is continuous in t by
construction, so no sampling resolution is needed to unwrap it.

Decoupled models (unimodular interior coefficients) factor into independent
segments; each segment is solved on its own and the angles merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from paraopuc import _kernels
from paraopuc.core import TWO_PI, ParaModel
from paraopuc.errors import DomainError, SingularEvaluationError, SolverError
from paraopuc.szego import evolve

DEFAULT_TOL = 1e-12
RESIDUAL_LIMIT = 1e-8
MIN_SEPARATION = 1e-12
MAX_ROUNDS = 40
MAX_GRID = 1 << 22
NEWTON_ITERATIONS = 100


@dataclass(frozen=True)
class PhaseProbe:
    theta: float
    eta_mod_2pi: float
    eta_prime: float


@dataclass(frozen=True)
class Spectrum:
    """Sorted zero angles of Phi_n(., beta) in [0, 2 pi).

    ``residual_log[j]`` is log(|Phi(e^{i angles[j]})| / max over the solver
    grid of |Phi|) for the factor (segment) polynomial carrying that zero.
    """

    angles: np.ndarray
    residual_log: np.ndarray
    model_seed: int = 0
    winding: int = 0

    def __len__(self):
        return len(self.angles)

    def points(self) -> np.ndarray:
        return np.exp(1j * self.angles)


def phase_probe(model: ParaModel, theta: float) -> PhaseProbe:
    """eta mod 2 pi and eta'(theta) from the Szego value and derivative channels.

    eta = arg beta + theta + arg Phi_{N-1} - arg Phi*_{N-1} and, with
    d/dtheta arg f(e^{itheta}) = Re(z f'(z)/f(z)),
    eta' = 1 + Re(z Phi'/Phi) - Re(z Phi*'/Phi*).
    """
    z = complex(math.cos(theta), math.sin(theta))
    st = evolve(model.seq, z)
    if st.phi_star == 0 or st.phi == 0:
        raise SingularEvaluationError(f"Phi*_(N-1) vanishes at theta={theta}")
    eta = model.boundary_angle + theta + np.angle(st.phi) - np.angle(st.phi_star)
    eta_prime = 1.0 + (z * st.dphi / st.phi).real - (z * st.dphi_star / st.phi_star).real
    if not math.isfinite(eta_prime):
        raise SingularEvaluationError(f"non-finite phase derivative at theta={theta}")
    if eta_prime < -1e-9:
        raise SingularEvaluationError(f"negative phase derivative {eta_prime} at theta={theta}")
    return PhaseProbe(float(theta), float(eta % TWO_PI), float(max(eta_prime, 0.0)))


def segments(model: ParaModel) -> List[Tuple[np.ndarray, np.ndarray, float]]:
    """Split at unimodular coefficients into independent (re, im, boundary angle) blocks.

    If |alpha_p| = 1 then (Phi_{p+1}, Phi*_{p+1}) = Phi_{p+1} (1, c) with
    c = -alpha_p, and the later polynomials are Phi_{p+1} times those of the
    coefficients conj(c) alpha_k.  Phi_n is therefore the product of the
    segment paraorthogonal polynomials.
    """
    alpha = model.coefficients()
    ends = list(model.cuts) + [model.n - 1]
    out = []
    start = 0
    factor = 1.0 + 0.0j
    for end in ends:
        block = alpha[start : end + 1] * factor
        inner = np.ascontiguousarray(block[:-1])
        last = complex(block[-1])
        gamma = math.atan2(last.imag, last.real)
        out.append((inner.real.copy(), inner.imag.copy(), gamma))
        factor = factor * (-last.conjugate() / abs(last))
        start = end + 1
    return out


def _solve_segment(ar, ai, gamma, tol):
    n = ar.shape[0] + 1
    grid = 8 * n
    for _ in range(MAX_ROUNDS):
        angles, res, log_max, winding, failures = _kernels.solve_levels(
            ar, ai, gamma, grid, tol, NEWTON_ITERATIONS
        )
        angles = np.mod(angles, TWO_PI)
        order = np.argsort(angles)
        angles = angles[order]
        rel = res[order] - log_max
        ok = (
            failures == 0
            and abs(winding - n) < 1e-6
            and bool(np.all(rel < math.log(RESIDUAL_LIMIT)))
            and _separated(angles)
        )
        if ok:
            return angles, rel
        if 2 * grid > MAX_GRID:
            break
        grid *= 2
    raise SolverError(
        f"spectrum solve failed: winding={winding:.6f} (expected {n}), "
        f"unconverged={failures}, grid={grid}"
    )


def _separated(angles) -> bool:
    if len(angles) < 2:
        return True
    gaps = np.diff(angles)
    wrap = angles[0] + TWO_PI - angles[-1]
    return bool(np.all(gaps > MIN_SEPARATION) and wrap > MIN_SEPARATION)


def segment_spectra(model: ParaModel, tol: float = DEFAULT_TOL) -> List[np.ndarray]:
    """Sorted zero angles of each decoupled segment, in index order."""
    return [_solve_segment(ar, ai, g, tol)[0] for ar, ai, g in segments(model)]


def compute_spectrum(model: ParaModel, tol: float = DEFAULT_TOL) -> Spectrum:
    """All n zeros of Phi_n(., beta) as sorted angles in [0, 2 pi).

    Raises SolverError if the winding certificate, residual check or
    separation check still fails after the grid refinement cap.
    """
    if not tol >= 1e-13:
        raise DomainError(f"tol must be at least 1e-13, got {tol}")
    all_angles = []
    all_res = []
    for ar, ai, gamma in segments(model):
        angles, rel = _solve_segment(ar, ai, gamma, tol)
        all_angles.append(angles)
        all_res.append(rel)
    angles = np.concatenate(all_angles)
    res = np.concatenate(all_res)
    order = np.argsort(angles, kind="stable")
    angles = angles[order]
    if not _separated(angles):
        raise SolverError("zeros of different segments coincide")
    return Spectrum(angles, res[order], int(model.seed), model.n)


def arc_count(model: ParaModel, lo: float, hi: float) -> int:
    """Number of zeros in the open arc (lo, hi), read off the lifted phase.

    Needs only two phase evaluations per segment; hi - lo must lie in (0, 2 pi).
    """
    if not 0.0 < hi - lo < TWO_PI:
        raise DomainError("arc length must lie in (0, 2 pi)")
    return int(sum(_kernels.count_levels(ar, ai, g, float(lo), float(hi)) for ar, ai, g in segments(model)))


def window_arc(theta0: float, a: float, b: float, n_scale: int) -> Tuple[float, float]:
    """Endpoints theta0 + 2 pi a / n_scale and theta0 + 2 pi b / n_scale."""
    if not a < b:
        raise DomainError("window needs a < b")
    if int(n_scale) != n_scale or n_scale < 1:
        raise DomainError("n_scale must be a positive integer")
    if b - a >= n_scale:
        raise DomainError("window must be shorter than the full circle")
    return theta0 + TWO_PI * a / n_scale, theta0 + TWO_PI * b / n_scale


def window_count(spec: Spectrum, theta0: float, a: float, b: float, n_scale: int) -> int:
    """Number of spectrum angles in the open arc of the rescaled window (a, b) at theta0."""
    lo, hi = window_arc(theta0, a, b, n_scale)
    length = hi - lo
    offset = np.mod(np.asarray(spec.angles) - lo, TWO_PI)
    return int(np.count_nonzero((offset > 0.0) & (offset < length)))
