"""Five-diagonal CMV matrices, decoupling, banded resolvents and eigenvectors.

C = L M with L = Theta_0 + Theta_2 + ... and M = 1 + Theta_1 + Theta_3 + ...
(direct sums), Theta_k = [[conj(a_k), rho_k], [rho_k, -a_k]] acting on
coordinates k, k+1.  For the paraorthogonal model |a_{n-1}| = 1, so the last
Theta degenerates to the 1x1 block conj(a_{n-1}) and the n x n matrix is
unitary.  Bands are stored as ``bands[d + 2, i] = C[i, i + d]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import lapack

from paraopuc.core import (
    STREAM_DECOUPLING,
    TWO_PI,
    ParaModel,
    RngStream,
    VerblunskySequence,
)
from paraopuc.errors import ConvergenceError, DomainError, NearSingularError
from paraopuc.szego import evolve, paraorthogonal_star_value, second_kind_evolve

PIVOT_FLOOR = 1e-14
SHIFT_OFFSET = 1e-10
MAX_ITERATIONS = 50
RESIDUAL_TARGET = 1e-8


@dataclass(frozen=True, eq=False)
class BandedCmv:
    dim: int
    bands: np.ndarray
    boundaries: tuple = ()

    def __post_init__(self):
        bands = np.array(self.bands, dtype=np.complex128)
        if bands.shape != (5, self.dim):
            raise DomainError(f"bands must have shape (5, {self.dim})")
        bands.flags.writeable = False
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "boundaries", tuple(sorted(int(b) for b in self.boundaries)))

    def entry(self, i: int, j: int) -> complex:
        d = j - i
        if abs(d) > 2 or not (0 <= i < self.dim and 0 <= j < self.dim):
            return 0j
        return complex(self.bands[d + 2, i])

    def to_dense(self) -> np.ndarray:
        n = self.dim
        out = np.zeros((n, n), dtype=np.complex128)
        for d in range(-2, 3):
            i = np.arange(max(0, -d), min(n, n - d))
            out[i, i + d] = self.bands[d + 2, i]
        return out

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.complex128)
        n = self.dim
        out = np.zeros(n, dtype=np.complex128)
        for d in range(-2, 3):
            i = np.arange(max(0, -d), min(n, n - d))
            out[i] += self.bands[d + 2, i] * v[i + d]
        return out

    def block(self, start: int, stop: int) -> "BandedCmv":
        """Principal submatrix on indices start..stop-1."""
        return BandedCmv(stop - start, self.bands[:, start:stop].copy())

    def rmatvec(self, v) -> np.ndarray:
        """C^* v."""
        v = np.asarray(v, dtype=np.complex128)
        n = self.dim
        out = np.zeros(n, dtype=np.complex128)
        for d in range(-2, 3):
            i = np.arange(max(0, -d), min(n, n - d))
            out[i + d] += np.conj(self.bands[d + 2, i]) * v[i]
        return out


@dataclass(frozen=True)
class EigenPair:
    angle: float
    vector: np.ndarray
    residual: float


def _theta_bands(alpha, rho, parity, n):
    """Tridiagonal bands (offsets -1, 0, +1) of the direct sum of Theta_k, k = parity mod 2."""
    t = np.zeros((3, n), dtype=np.complex128)
    t[1, :] = 1.0
    for k in range(parity, n, 2):
        t[1, k] = np.conj(alpha[k])
        if k + 1 < n:
            t[2, k] = rho[k]  # (k, k+1)
            t[0, k + 1] = rho[k]  # (k+1, k)
            t[1, k + 1] = -alpha[k]
    return t


def build_cmv(model: ParaModel) -> BandedCmv:
    """Band form of the n x n CMV matrix of alpha_0..alpha_{n-2}, beta."""
    n = model.n
    alpha = model.coefficients()
    rho = np.append(model.seq.rho, 0.0)
    lb = _theta_bands(alpha, rho, 0, n)
    mb = _theta_bands(alpha, rho, 1, n)
    bands = np.zeros((5, n), dtype=np.complex128)
    # C[i, i+d1+d2] += L[i, i+d1] M[i+d1, i+d1+d2]
    for d1 in (-1, 0, 1):
        for d2 in (-1, 0, 1):
            i = np.arange(max(0, -d1, -d1 - d2), min(n, n - d1, n - d1 - d2))
            bands[d1 + d2 + 2, i] += lb[d1 + 1, i] * mb[d2 + 1, i + d1]
    return BandedCmv(n, bands, model.cuts)


def decoupling_scheme(n: int) -> Tuple[int, int, int]:
    """(N, block, blocks) with blocks = floor(ln n), block = floor(n / ln n), N = blocks * block."""
    if n < 3:
        raise DomainError("decoupling needs n >= 3")
    blocks = int(math.floor(math.log(n)))
    block = int(math.floor(n / math.log(n)))
    return blocks * block, block, blocks


def decouple_model(model: ParaModel, block: int, rng: Optional[RngStream] = None) -> ParaModel:
    """Replace alpha at block-1, 2 block-1, ..., n-1 by fresh unimodular draws.

    The last replacement is the boundary beta itself.  The CMV matrix of the
    result is block diagonal with blocks of size ``block``.
    """
    n = model.n
    if int(block) != block or block < 1 or n % block:
        raise DomainError(f"block must be a positive divisor of n={n}, got {block}")
    block = int(block)
    if rng is None:
        rng = RngStream(model.seed, STREAM_DECOUPLING)
    gen = rng.generator()
    count = n // block
    angles = TWO_PI * gen.random(count)
    interior = np.array(model.interior)
    cuts = []
    for m in range(count - 1):
        p = (m + 1) * block - 1
        interior[p] = complex(math.cos(angles[m]), math.sin(angles[m]))
        cuts.append(p)
    seq = VerblunskySequence(interior, model.radius, tuple(sorted(set(model.cuts) | set(cuts))))
    meta = dict(model.meta)
    meta["block"] = block
    return ParaModel(seq, angles[-1], model.seed, meta)


def _lapack_band(c: BandedCmv, z: complex) -> np.ndarray:
    # LAPACK general band layout with kl = ku = 2 and room for fill-in:
    # ab[kl + ku + i - j, j] = A[i, j]
    n = c.dim
    ab = np.zeros((7, n), dtype=np.complex128)
    for d in range(-2, 3):
        i = np.arange(max(0, -d), min(n, n - d))
        ab[4 - d, i + d] = c.bands[d + 2, i]
    ab[4, :] -= z
    return ab


@dataclass(frozen=True)
class BandedLU:
    """Partial-pivoting LU factors of C - z (LAPACK zgbtrf)."""

    lu: np.ndarray
    ipiv: np.ndarray
    z: complex

    def pivots(self) -> np.ndarray:
        return self.lu[4, :]

    def solve(self, rhs, trans: int = 0) -> np.ndarray:
        """Solve with (C - z) (trans=0), its transpose (1) or its adjoint (2)."""
        b = np.array(rhs, dtype=np.complex128)
        x, info = lapack.zgbtrs(self.lu, 2, 2, b, self.ipiv, trans=trans)
        if info != 0:
            raise NearSingularError(self.z, 0.0)
        return x

    def log_abs_det(self) -> float:
        return float(np.sum(np.log(np.abs(self.pivots()))))

    def det_phase(self) -> complex:
        u = self.pivots()
        swaps = int(np.count_nonzero(self.ipiv != np.arange(len(self.ipiv))))
        ph = np.prod(u / np.abs(u))
        return complex(ph * (-1) ** swaps)


def factorize(c: BandedCmv, z: complex) -> BandedLU:
    """Banded LU of C - z; raises NearSingularError when a pivot falls below 1e-14."""
    z = complex(z)
    lu, ipiv, info = lapack.zgbtrf(_lapack_band(c, z), 2, 2)
    piv = np.abs(lu[4, :])
    if info != 0 or piv.min() < PIVOT_FLOOR:
        raise NearSingularError(z, float(piv.min()))
    return BandedLU(lu, ipiv, z)


def banded_solve(c: BandedCmv, z: complex, rhs) -> np.ndarray:
    """Solve (C - z) x = rhs."""
    return factorize(c, z).solve(rhs)


def backward_error(c: BandedCmv, z: complex, x, rhs) -> float:
    r = c.matvec(x) - z * np.asarray(x) - np.asarray(rhs)
    return float(np.linalg.norm(r) / np.linalg.norm(rhs))


def resolvent_column(c: BandedCmv, z: complex, l: int) -> np.ndarray:
    e = np.zeros(c.dim, dtype=np.complex128)
    e[l] = 1.0
    return banded_solve(c, z, e)


def resolvent_row(c: BandedCmv, z: complex, k: int) -> np.ndarray:
    """Row k of (C - z)^{-1}, from one transposed solve."""
    e = np.zeros(c.dim, dtype=np.complex128)
    e[k] = 1.0
    return factorize(c, z).solve(e, trans=1)


def resolvent_matrix(c: BandedCmv, z: complex) -> np.ndarray:
    lu = factorize(c, z)
    return lu.solve(np.eye(c.dim, dtype=np.complex128))


def resolvent_entry(c: BandedCmv, z: complex, k: int, l: int) -> complex:
    """G_kl(z) = [(C - z)^{-1}]_kl."""
    return complex(resolvent_column(c, z, l)[k])


def caratheodory_entry(c: BandedCmv, z: complex, k: int, l: int) -> complex:
    """F_kl(z) = delta_kl + 2 z G_kl(z), the entries of (C + z)(C - z)^{-1}."""
    return (1.0 if k == l else 0.0) + 2.0 * complex(z) * resolvent_entry(c, z, k, l)


def _finite_caratheodory(model: ParaModel, z: complex) -> complex:
    # F = Psi*_n / Phi*_n, normalised by F(0) = 1
    num, ls_num = paraorthogonal_star_value(model, z, second_kind=True)
    den, ls_den = paraorthogonal_star_value(model, z)
    return complex(num / den * math.exp(ls_num - ls_den))


def caratheodory_F(model: ParaModel, z: complex) -> Tuple[complex, complex]:
    """F(z) of the spectral measure two ways: (banded F_00, Psi*_n/Phi*_n)."""
    banded = caratheodory_entry(build_cmv(model), z, 0, 0)
    return banded, _finite_caratheodory(model, z)


def _oracle_channels(model: ParaModel, z: complex, m: int):
    """(chi_m, x_m, y_m, Upsilon_m) from normalized phi, phi*, psi, psi*."""
    st = evolve(model.seq, z, m)
    phi, phis = st.normalized()
    sk = second_kind_evolve(model.seq, z, m)
    psi, psis = sk.normalized()
    if m % 2 == 0:
        k = m // 2
        w = z ** (-k)
        return w * phis, w * phi, w * psi, -w * psis
    k = (m + 1) // 2
    w = z ** (-k)
    return z * w * phi, w * phis, -w * psis, z * w * psi


def resolvent_oracle(model: ParaModel, z: complex, k: int, l: int) -> complex:
    """G_kl(z) assembled from orthogonal and second-kind polynomials.

    With p = y + F x and pi = Upsilon + F chi (0-based indices)::

        G_kl = chi_l p_k / (2z)   if k > l, or k = l odd
        G_kl = pi_l x_k / (2z)    if k < l, or k = l even

    Unstabilised: meant for small n as an independent check of the banded path.
    """
    z = complex(z)
    if not 0.0 < abs(z) <= 1.0 + 1e-12:
        raise DomainError("oracle needs 0 < |z| <= 1")
    if model.cuts:
        raise DomainError("oracle needs a model without interior unimodular coefficients")
    n = model.n
    if not (0 <= k < n and 0 <= l < n):
        raise DomainError("index out of range")
    f = _finite_caratheodory(model, z)
    chi_k, x_k, y_k, up_k = _oracle_channels(model, z, k)
    chi_l, x_l, y_l, up_l = _oracle_channels(model, z, l)
    if k > l or (k == l and k % 2 == 1):
        return chi_l * (y_k + f * x_k) / (2.0 * z)
    return (up_l + f * chi_l) * x_k / (2.0 * z)


def oracle_p_pi(model: ParaModel, z: complex, m: int) -> Tuple[complex, complex]:
    """(p_m, pi_m) of the oracle assembly; |pi_m| = |p_m| on the circle."""
    f = _finite_caratheodory(model, z)
    chi, x, y, up = _oracle_channels(model, complex(z), m)
    return y + f * x, up + f * chi


def _rayleigh(c: BandedCmv, v) -> complex:
    return complex(np.vdot(v, c.matvec(v)))


def inverse_iteration(c: BandedCmv, theta_seed: float, max_iter: int = MAX_ITERATIONS) -> EigenPair:
    """Eigenpair near e^{i theta_seed} by shifted inverse iteration with angle refinement.

    The shift sits 1e-10 inside the circle at the current angle estimate, which
    is replaced by arg(v^* C v) after each step.
    """
    n = c.dim
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    theta = float(theta_seed)
    offset = SHIFT_OFFSET
    best = None
    for _ in range(max_iter):
        shift = (1.0 - offset) * complex(math.cos(theta), math.sin(theta))
        try:
            lu = factorize(c, shift)
        except NearSingularError:
            offset *= 10.0
            continue
        w = lu.solve(v)
        v = w / np.linalg.norm(w)
        lam = _rayleigh(c, v)
        theta = math.atan2(lam.imag, lam.real) % TWO_PI
        res = float(np.linalg.norm(c.matvec(v) - complex(math.cos(theta), math.sin(theta)) * v))
        if best is None or res < best.residual:
            best = EigenPair(theta, v.copy(), res)
        if res < RESIDUAL_TARGET * 1e-2:
            break
    if best is None or best.residual >= RESIDUAL_TARGET:
        raise ConvergenceError(
            f"inverse iteration near theta={theta_seed} did not converge "
            f"(best residual {None if best is None else best.residual})"
        )
    return best


def unitarity_defect(c: BandedCmv) -> float:
    """max |(C^* C - I)_ij| computed in band form (C^* C has offsets -4..4)."""
    n = c.dim
    prod = np.zeros((9, n), dtype=np.complex128)
    # (C^*C)[m+d1, m+d2] += conj(C[m, m+d1]) C[m, m+d2]
    for d1 in range(-2, 3):
        for d2 in range(-2, 3):
            m = np.arange(max(0, -d1, -d2), min(n, n - d1, n - d2))
            prod[d2 - d1 + 4, m + d1] += np.conj(c.bands[d1 + 2, m]) * c.bands[d2 + 2, m]
    prod[4, :] -= 1.0
    return float(np.abs(prod).max())


def resolvent_ratio(c: BandedCmv, z: complex, k: int, l: int, i: int, j: int) -> float:
    """|G_kl| / |G_ij|."""
    g = resolvent_matrix(c, z)
    return float(abs(g[k, l]) / abs(g[i, j]))


def ratio_bound_resolvent(c: BandedCmv, z: complex) -> float:
    """Worst ratio between horizontally or vertically adjacent resolvent entries."""
    g = np.abs(resolvent_matrix(c, z))
    with np.errstate(divide="ignore", invalid="ignore"):
        rows = g[1:, :] / g[:-1, :]
        cols = g[:, 1:] / g[:, :-1]
        ratios = np.concatenate([rows.ravel(), cols.ravel()])
        ratios = np.concatenate([ratios, 1.0 / ratios])
    ratios = ratios[np.isfinite(ratios)]
    return float(ratios.max()) if ratios.size else 1.0


def dynamical_moment(c: BandedCmv, k, l: int, j_max: int):
    """sup over |j| <= j_max of |<delta_k, C^j delta_l>| by repeated band products.

    ``k`` may be an index array, in which case an array is returned.
    """
    if int(j_max) != j_max or j_max < 1:
        raise DomainError("j_max must be a positive integer")
    n = c.dim
    fwd = np.zeros(n, dtype=np.complex128)
    fwd[l] = 1.0
    bwd = fwd.copy()
    best = np.abs(fwd)
    for _ in range(int(j_max)):
        fwd = c.matvec(fwd)
        bwd = c.rmatvec(bwd)
        best = np.maximum(best, np.maximum(np.abs(fwd), np.abs(bwd)))
    if np.ndim(k) == 0:
        return float(best[k])
    return best[np.asarray(k)]


def write_matrix_csv(c: BandedCmv, path) -> None:
    """Nonzero entries as rows (row, col, re, im)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "re", "im"])
        for i in range(c.dim):
            for d in range(-2, 3):
                j = i + d
                if 0 <= j < c.dim:
                    v = c.bands[d + 2, i]
                    if v != 0:
                        w.writerow([i, j, "%.17g" % v.real, "%.17g" % v.imag])
