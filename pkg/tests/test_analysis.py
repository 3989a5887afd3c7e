import math

import numpy as np
import pytest

from paraopuc.analysis import (
    DecayProfile,
    block_eigenpairs,
    count_bad_eigenfunctions,
    fit_exponential,
    fractional_moment_profile,
    localization_profile,
    lyapunov_closed_form,
    lyapunov_estimate,
    lyapunov_quadrature,
    moment_bound,
)
from paraopuc.cmv import EigenPair, build_cmv, decouple_model, decoupling_scheme, inverse_iteration
from paraopuc.core import ParaModel, derive_seed, sample_para_model
from paraopuc.errors import DomainError
from paraopuc.phase import compute_spectrum


def test_moment_bound_constant():
    assert moment_bound(0.5) == pytest.approx(4.0, abs=1e-12)


def test_diagonal_moment_below_bound():
    p = fractional_moment_profile(30, 0.5, 0.5, trials=400, seed=1, distances=range(0, 4))
    assert p.moments[0] <= 4.0 + 2 * p.stderrs[0]
    assert p.rejected == 0


def test_moments_vanish_at_origin():
    p = fractional_moment_profile(20, 0.5, 0.5, trials=10, seed=1, distances=range(0, 5), z_radius=0.0)
    assert p.moments[0] == 1.0
    assert all(m == 0.0 for m in p.moments[1:])


def test_profile_validation():
    with pytest.raises(DomainError):
        fractional_moment_profile(20, 0.5, 1.0, trials=10)
    with pytest.raises(DomainError):
        DecayProfile(0.5, [0, 2, 1], [1, 1, 1], [0, 0, 0])


def test_fit_exponential_synthetic():
    d = list(range(8))
    p = DecayProfile(0.5, d, list(2.0 * np.exp(-0.3 * np.arange(8))), [0.0] * 8)
    fit = fit_exponential(p)
    assert fit.D_fit == pytest.approx(0.3, abs=1e-10)
    assert fit.C_fit == pytest.approx(2.0, rel=1e-10)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    flat = fit_exponential(DecayProfile(0.5, d, [0.7] * 8, [0.0] * 8))
    assert flat.D_fit == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        fit_exponential(DecayProfile(0.5, [0, 1, 2], [1.0, 0.0, 1.0], [0, 0, 0]))
    with pytest.raises(DomainError):
        fit_exponential(DecayProfile(0.5, [0, 1], [1.0, 0.5], [0, 0]))


def test_decay_fit_positive():
    p = fractional_moment_profile(60, 0.5, 0.5, trials=300, seed=2)
    assert fit_exponential(p, skip_diagonal=True).D_fit > 0


def test_lyapunov_closed_form():
    assert lyapunov_closed_form(0.5) == pytest.approx(0.0684769, abs=5e-8)
    for r in np.arange(0.1, 1.0, 0.1):
        assert lyapunov_closed_form(r) > 0
        assert abs(lyapunov_closed_form(r) - lyapunov_quadrature(r)) < 1e-10
    assert lyapunov_closed_form(1e-3) / (1e-6 / 4) == pytest.approx(1.0, rel=1e-5)
    for r in (0.0, 1.0):
        with pytest.raises(DomainError):
            lyapunov_closed_form(r)


def test_lyapunov_free_is_zero():
    est = lyapunov_estimate(0.0, np.exp(0.4j), 1000)
    assert est.gamma == 0.0


def test_lyapunov_independent_of_z():
    a = lyapunov_estimate(0.5, np.exp(1j), 50_000, seed=3)
    b = lyapunov_estimate(0.5, np.exp(2.2j), 50_000, seed=4)
    assert abs(a.gamma - b.gamma) < 2 * math.hypot(a.stderr, b.stderr)
    assert len(a.trace) == 20 and a.steps[-1] == 50_000


def test_localization_delta_and_free():
    v = np.zeros(10, dtype=complex)
    v[4] = 1
    prof = localization_profile(EigenPair(0.0, v, 0.0))
    assert prof.center == 4 and prof.fit_rate == math.inf
    m = ParaModel.from_coefficients(np.zeros(59))
    c = build_cmv(m)
    for a in compute_spectrum(m).angles[::7]:
        assert abs(localization_profile(inverse_iteration(c, a)).fit_rate) < 0.01


def test_localization_center_is_first_argmax():
    v = np.array([0.1, 0.5, 0.2, 0.5, 0.1], dtype=complex)
    v /= np.linalg.norm(v)
    assert localization_profile(EigenPair(0.0, v, 0.0)).center == 1


def test_localized_eigenvectors():
    m = sample_para_model(200, 0.9, 1)
    c = build_cmv(m)
    profs = [localization_profile(inverse_iteration(c, a)) for a in compute_spectrum(m).angles]
    assert np.median([p.fit_rate for p in profs]) > 0
    assert np.mean([p.fit_r2 > 0.5 for p in profs]) >= 0.8


def test_block_eigenpairs_supported_in_blocks():
    m = decouple_model(sample_para_model(60, 0.9, 2), 20)
    pairs = block_eigenpairs(m)
    assert len(pairs) == 60
    for i, p in enumerate(pairs):
        b = i // 20
        outside = np.delete(p.vector, np.arange(20 * b, 20 * b + 20))
        assert np.all(outside == 0)
        assert p.residual < 1e-8


def test_count_bad_edge_cases():
    m = sample_para_model(40, 0.9, 1)
    assert count_bad_eigenfunctions(m, 5) == 0
    d = decouple_model(m, 10)
    assert count_bad_eigenfunctions(d, 40) == 40


def test_count_bad_trend():
    ratios = []
    for n in (256, 1024):
        big_n, block, _ = decoupling_scheme(n)
        counts = []
        for t in range(6):
            s = derive_seed(11, t)
            d = decouple_model(sample_para_model(big_n, 0.9, s), block)
            counts.append(count_bad_eigenfunctions(d, 0.5 * math.log(n)))
        ratios.append(np.mean(counts) / big_n)
    assert ratios[1] < 0.15
    assert ratios[1] < ratios[0]
