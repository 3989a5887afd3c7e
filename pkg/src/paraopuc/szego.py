"""Szego recurrence: orthogonal, reversed, second-kind and paraorthogonal values.

Monic polynomials are propagated with a shared per-point scale::

    Phi_{k+1}  = z Phi_k - conj(alpha_k) Phi*_k
    Phi*_{k+1} = Phi*_k  - alpha_k z Phi_k

together with their z-derivatives.  Normalized values phi_k = Phi_k / prod rho_j
are recovered from the accumulated ``log_rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from paraopuc import _kernels
from paraopuc.core import ParaModel, VerblunskySequence
from paraopuc.errors import DomainError

Number = Union[complex, np.ndarray]


@dataclass(frozen=True)
class RecurrenceState:
    """Scaled (Phi_k, Phi*_k) and their z-derivatives after ``step`` steps.

    True values are ``exp(log_scale) * phi`` etc.  ``log_rho`` is
    sum_{j<step} log rho_j (``-inf`` past a unimodular coefficient).  Fields are
    complex scalars for scalar z and arrays for array z.
    """

    phi: Number
    phi_star: Number
    log_scale: Union[float, np.ndarray]
    dphi: Number
    dphi_star: Number
    step: int
    log_rho: float = 0.0

    def values(self):
        s = np.exp(self.log_scale)
        return s * self.phi, s * self.phi_star

    def derivatives(self):
        s = np.exp(self.log_scale)
        return s * self.dphi, s * self.dphi_star

    def normalized(self):
        """(phi_k, phi*_k) for the orthonormal polynomials."""
        s = np.exp(self.log_scale - self.log_rho)
        return s * self.phi, s * self.phi_star


@dataclass(frozen=True)
class SecondKindState:
    """Scaled (Psi_k, Psi*_k): the recurrence run with -alpha_k."""

    psi: Number
    psi_star: Number
    log_scale: Union[float, np.ndarray]
    step: int
    log_rho: float = 0.0

    def values(self):
        s = np.exp(self.log_scale)
        return s * self.psi, s * self.psi_star

    def normalized(self):
        s = np.exp(self.log_scale - self.log_rho)
        return s * self.psi, s * self.psi_star


@dataclass(frozen=True)
class TransferMatrix:
    """Scaled T_k(z) = A(alpha_{k-1}, z) ... A(alpha_0, z).

    ``A(a, z) = rho^{-1} [[z, -conj(a)], [-a z, 1]]`` has determinant z, so
    ``det(entries) * exp(2 * log_scale) == z**step`` exactly.  Applied to
    (1, 1) the product gives (phi_k, phi*_k); applied to (1, -1) it gives
    (psi_k, -psi*_k).
    """

    entries: np.ndarray
    log_scale: float
    step: int

    def matrix(self) -> np.ndarray:
        return math.exp(self.log_scale) * self.entries

    def apply(self, vec) -> np.ndarray:
        return self.matrix() @ np.asarray(vec, dtype=np.complex128)


def _coefficients(seq) -> np.ndarray:
    if isinstance(seq, ParaModel):
        return seq.interior
    if isinstance(seq, VerblunskySequence):
        return seq.interior
    return np.asarray(seq, dtype=np.complex128).reshape(-1)


def _log_rho(alpha: np.ndarray, upto: int) -> float:
    mods2 = np.abs(alpha[:upto]) ** 2
    if np.any(mods2 >= 1.0):
        return -math.inf
    return float(np.sum(0.5 * np.log1p(-mods2)))


def _check_upto(alpha, upto):
    if upto is None:
        return len(alpha)
    if int(upto) != upto or not 0 <= upto <= len(alpha):
        raise DomainError(f"upto must lie in [0, {len(alpha)}], got {upto}")
    return int(upto)


def _check_disk(z):
    if np.any(np.abs(z) > 1.0 + 1e-12):
        raise DomainError("evaluation point must lie in the closed unit disk")


def _run(alpha, z, upto, sign, deriv):
    scalar = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=np.complex128)).ravel()
    out = _kernels.szego_evolve(np.ascontiguousarray(alpha, dtype=np.complex128), zs, upto, sign, deriv)
    if scalar:
        return tuple(complex(v[0]) if np.iscomplexobj(v) else float(v[0]) for v in out)
    shape = np.shape(z)
    return tuple(v.reshape(shape) for v in out)


def evolve(seq, z, upto=None) -> RecurrenceState:
    """Propagate (Phi, Phi*, dPhi, dPhi*) from k = 0 to ``upto`` at z (scalar or array)."""
    alpha = _coefficients(seq)
    upto = _check_upto(alpha, upto)
    _check_disk(z)
    phi, phis, dphi, dphis, logs = _run(alpha, z, upto, 1.0, True)
    return RecurrenceState(phi, phis, logs, dphi, dphis, upto, _log_rho(alpha, upto))


def second_kind_evolve(seq, z, upto=None) -> SecondKindState:
    """Second-kind polynomials Psi_k (coefficients -alpha_k), Psi_0 = 1."""
    alpha = _coefficients(seq)
    upto = _check_upto(alpha, upto)
    _check_disk(z)
    psi, psis, _, _, logs = _run(alpha, z, upto, -1.0, False)
    return SecondKindState(psi, psis, logs, upto, _log_rho(alpha, upto))


def paraorthogonal_value(model: ParaModel, z, second_kind: bool = False):
    """Scaled Phi_n(z, beta) = z Phi_{n-1} - conj(beta) Phi*_{n-1} and its log scale.

    With ``second_kind`` the same is done for Psi_n (beta -> -beta).
    """
    sign = -1.0 if second_kind else 1.0
    beta = sign * model.boundary
    p, ps, _, _, logs = _run(model.interior, z, model.n - 1, sign, False)
    return z * p - beta.conjugate() * ps, logs


def paraorthogonal_star_value(model: ParaModel, z, second_kind: bool = False):
    """Scaled Phi*_n(z, beta) = Phi*_{n-1} - beta z Phi_{n-1} (or Psi*_n)."""
    sign = -1.0 if second_kind else 1.0
    beta = sign * model.boundary
    p, ps, _, _, logs = _run(model.interior, z, model.n - 1, sign, False)
    return ps - beta * z * p, logs


def transfer_product(seq, z: complex, upto=None) -> TransferMatrix:
    """Scaled product of transfer matrices up to ``upto`` (0 gives the identity)."""
    alpha = _coefficients(seq)
    upto = _check_upto(alpha, upto)
    _check_disk(z)
    z = complex(z)
    m = np.eye(2, dtype=np.complex128)
    log_scale = 0.0
    for a in alpha[:upto]:
        a = complex(a)
        r = 1.0 / math.sqrt(1.0 - abs(a) ** 2)
        step = r * np.array([[z, -a.conjugate()], [-a * z, 1.0]])
        m = step @ m
        s = float(np.abs(m).max())
        if s > 1e2 or s < 1e-2:
            m /= s
            log_scale += math.log(s)
    return TransferMatrix(m, log_scale, upto)


def ratio_bound(radius: float) -> float:
    """2 / sqrt(1 - r^2): bound on consecutive normalized polynomial ratios."""
    return 2.0 / math.sqrt(1.0 - radius * radius)


def ratio_bound_check(seq, z_grid) -> float:
    """Largest |phi_{k+1}/phi_k| or |phi_k/phi_{k+1}| over k and the grid."""
    alpha = _coefficients(seq)
    zs = np.asarray(z_grid, dtype=np.complex128).ravel()
    if np.any(np.abs(np.abs(zs) - 1.0) > 1e-12):
        raise DomainError("grid points must be unimodular")
    p = np.ones_like(zs)
    ps = np.ones_like(zs)
    worst = 0.0
    for a in alpha:
        rho = math.sqrt(1.0 - abs(a) ** 2)
        np_ = (zs * p - np.conj(a) * ps) / rho
        ps = (ps - a * zs * p) / rho
        ratio = np.abs(np_) / np.abs(p)
        worst = max(worst, float(ratio.max()), float((1.0 / ratio).max()))
        # keep |p| = 1: only ratios matter
        scale = np.abs(np_)
        p = np_ / scale
        ps = ps / scale
    return worst
