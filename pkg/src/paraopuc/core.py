"""Random Verblunsky coefficients, reproducible streams and rotations.

Every random quantity is drawn from a Philox generator keyed by
``(master_seed, stream_index)`` through :class:`numpy.random.SeedSequence`
spawn keys.  Philox is counter based, so a given draw depends only on the key
and its position in the stream, never on how work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from paraopuc.errors import DomainError

TWO_PI = 2.0 * math.pi
UNIMODULAR_TOL = 1e-14

# stream indices inside one model seed
STREAM_COEFFICIENTS = 0
STREAM_DECOUPLING = 1


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random stream."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            value = getattr(self, name)
            if not 0 <= int(value) < 2**64:
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.Philox(ss))


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trial ``index`` under ``master_seed``; pure and schedule-free."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _as_generator(rng: Union[RngStream, np.random.Generator]) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def _check_radius(radius: float) -> float:
    radius = float(radius)
    if not 0.0 < radius < 1.0:
        raise DomainError(f"radius must lie in (0, 1), got {radius}")
    return radius


def uniform_disk(rng: Union[RngStream, np.random.Generator], radius: float) -> complex:
    """One draw from the uniform (area) distribution on the disk ``|w| < radius``.

    Uses the inverse CDF of the modulus, ``radius * sqrt(u) * exp(2 pi i v)``,
    consuming exactly two uniforms.  Passing an :class:`RngStream` returns the
    first draw of that stream.
    """
    radius = _check_radius(radius)
    u, v = _as_generator(rng).random(2)
    return complex(radius * math.sqrt(u) * complex(math.cos(TWO_PI * v), math.sin(TWO_PI * v)))


def _disk_draws(gen: np.random.Generator, radius: float, size: int) -> np.ndarray:
    # same layout as ``size`` consecutive uniform_disk calls: (u_k, v_k) pairs
    uv = gen.random((size, 2))
    angle = TWO_PI * uv[:, 1]
    return radius * np.sqrt(uv[:, 0]) * (np.cos(angle) + 1j * np.sin(angle))


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.complex128).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class VerblunskySequence:
    """Interior coefficients alpha_0..alpha_{n-2}.

    ``cuts`` lists indices forced onto the unit circle by decoupling; every
    other entry satisfies ``|alpha| < radius``.
    """

    interior: np.ndarray
    radius: float
    cuts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "interior", _frozen(self.interior))
        object.__setattr__(self, "cuts", tuple(sorted(int(c) for c in self.cuts)))
        if not 0.0 < self.radius <= 1.0:
            raise DomainError(f"radius must lie in (0, 1], got {self.radius}")
        mods = np.abs(self.interior)
        free = np.ones(len(mods), dtype=bool)
        if self.cuts:
            idx = np.asarray(self.cuts)
            if idx.min() < 0 or idx.max() >= len(mods):
                raise DomainError("cut index outside the interior range")
            if np.any(np.abs(mods[idx] - 1.0) > UNIMODULAR_TOL):
                raise DomainError("cut coefficients must be unimodular")
            free[idx] = False
        if not np.all(np.isfinite(mods)):
            raise DomainError("coefficients must be finite")
        if np.any(mods[free] >= self.radius):
            raise DomainError("interior coefficient outside the disk of the given radius")

    def __len__(self):
        return len(self.interior)

    @property
    def rho(self) -> np.ndarray:
        rho = np.sqrt(np.maximum(0.0, 1.0 - np.abs(self.interior) ** 2))
        if self.cuts:
            rho[list(self.cuts)] = 0.0
        return rho

    def __eq__(self, other):
        if not isinstance(other, VerblunskySequence):
            return NotImplemented
        return (
            self.radius == other.radius
            and self.cuts == other.cuts
            and self.interior.shape == other.interior.shape
            and bool(np.all(self.interior == other.interior))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ParaModel:
    """A paraorthogonal model: interior coefficients plus the boundary beta.

    beta is stored by its angle so it never drifts off the circle.
    """

    seq: VerblunskySequence
    boundary_angle: float
    seed: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "boundary_angle", float(self.boundary_angle) % TWO_PI)

    @property
    def n(self) -> int:
        return len(self.seq) + 1

    @property
    def boundary(self) -> complex:
        return complex(math.cos(self.boundary_angle), math.sin(self.boundary_angle))

    @property
    def radius(self) -> float:
        return self.seq.radius

    @property
    def interior(self) -> np.ndarray:
        return self.seq.interior

    @property
    def cuts(self) -> tuple:
        return self.seq.cuts

    def coefficients(self) -> np.ndarray:
        """alpha_0..alpha_{n-1}, the last one being beta."""
        return np.append(self.seq.interior, self.boundary)

    def __eq__(self, other):
        if not isinstance(other, ParaModel):
            return NotImplemented
        return (
            self.seq == other.seq
            and self.boundary_angle == other.boundary_angle
            and self.seed == other.seed
        )

    __hash__ = None

    @classmethod
    def from_coefficients(
        cls,
        interior: Sequence[complex],
        beta: complex = 1.0,
        radius: float | None = None,
        seed: int = 0,
        cuts: Sequence[int] = (),
    ) -> "ParaModel":
        """Build a model from explicit coefficients (tests, hand-made cases)."""
        interior = np.asarray(interior, dtype=np.complex128).reshape(-1)
        if abs(abs(beta) - 1.0) > 1e-12:
            raise DomainError("beta must be unimodular")
        if radius is None:
            # smallest admissible radius
            free = np.delete(np.abs(interior), list(cuts))
            top = float(free.max()) if free.size else 0.0
            radius = math.nextafter(top, 2.0) if top > 0 else 1e-300
        seq = VerblunskySequence(interior, radius, tuple(cuts))
        return cls(seq, math.atan2(complex(beta).imag, complex(beta).real), seed)


def sample_para_model(n: int, radius: float, seed: int) -> ParaModel:
    """Draw alpha_0..alpha_{n-2} uniform in ``D(0, radius)`` and beta uniform on the circle.

    Coefficient k consumes uniforms 2k and 2k+1 of the Philox stream
    ``(seed, 0)``; beta consumes uniform 2(n-1).
    """
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    radius = _check_radius(radius)
    gen = RngStream(seed, STREAM_COEFFICIENTS).generator()
    interior = _disk_draws(gen, radius, int(n) - 1)
    angle = TWO_PI * gen.random()
    return ParaModel(VerblunskySequence(interior, radius), angle, int(seed))


def rotate_model(model: ParaModel, phi: float) -> ParaModel:
    """Coefficients of the measure rotated by ``phi``: alpha_k -> e^{-i(k+1)phi} alpha_k.

    The zeros of the rotated model are the original zeros shifted by ``+phi``.
    """
    k = np.arange(1, model.n, dtype=float)
    factors = np.cos(k * phi) - 1j * np.sin(k * phi)
    interior = model.interior * factors
    seq = VerblunskySequence(interior, model.radius, model.cuts)
    return ParaModel(seq, model.boundary_angle - model.n * phi, model.seed, dict(model.meta))
