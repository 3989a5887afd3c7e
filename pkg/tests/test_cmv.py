import math

import numpy as np
import pytest

from paraopuc.cmv import (
    build_cmv,
    banded_solve,
    backward_error,
    caratheodory_entry,
    caratheodory_F,
    decouple_model,
    decoupling_scheme,
    dynamical_moment,
    factorize,
    inverse_iteration,
    oracle_p_pi,
    ratio_bound_resolvent,
    resolvent_entry,
    resolvent_matrix,
    resolvent_oracle,
    resolvent_ratio,
    unitarity_defect,
    write_matrix_csv,
)
from paraopuc.core import ParaModel, RngStream, sample_para_model
from paraopuc.errors import DomainError, NearSingularError
from paraopuc.phase import compute_spectrum
from paraopuc.szego import paraorthogonal_value


def dense_cmv(alpha):
    """Reference C = L M built densely from the Theta blocks."""
    n = len(alpha)
    rho = np.sqrt(np.maximum(0, 1 - np.abs(alpha) ** 2))

    def theta_sum(start):
        t = np.eye(n, dtype=complex)
        for k in range(start, n, 2):
            if k + 1 < n:
                t[k : k + 2, k : k + 2] = [[np.conj(alpha[k]), rho[k]], [rho[k], -alpha[k]]]
            else:
                t[k, k] = np.conj(alpha[k])
        return t

    return theta_sum(0) @ theta_sum(1)


def test_matches_dense_product():
    m = sample_para_model(13, 0.8, 2)
    assert np.allclose(build_cmv(m).to_dense(), dense_cmv(m.coefficients()), atol=1e-15)


def test_free_case_eigenvectors():
    m = ParaModel.from_coefficients(np.zeros(3), beta=1.0)
    c = build_cmv(m)
    for k in range(4):
        lam = np.exp(2j * np.pi * k / 4)
        ev, vecs = np.linalg.eig(c.to_dense())
        j = np.argmin(np.abs(ev - lam))
        assert abs(ev[j] - lam) < 1e-12
        v = vecs[:, j]
        assert np.linalg.norm(c.matvec(v) - lam * v) < 1e-10


def test_unitarity_defect():
    assert unitarity_defect(build_cmv(sample_para_model(64, 0.5, 9))) < 1e-13
    for seed in range(10):
        c = build_cmv(sample_para_model(200, 0.95, seed))
        d = c.to_dense()
        assert unitarity_defect(c) == pytest.approx(np.abs(d.conj().T @ d - np.eye(200)).max(), abs=1e-15)
        assert unitarity_defect(c) < 1e-12


def test_two_by_two_explicit():
    a0, a1 = 0.3 - 0.2j, np.exp(0.4j)
    m = ParaModel.from_coefficients([a0], beta=a1)
    r0 = math.sqrt(1 - abs(a0) ** 2)
    expect = np.array([[np.conj(a0), np.conj(a1) * r0], [r0, -np.conj(a1) * a0]])
    assert np.allclose(build_cmv(m).to_dense(), expect, atol=1e-15)


def test_decouple_boundaries():
    m = sample_para_model(12, 0.5, 3)
    d = decouple_model(m, 4, RngStream(3, 1))
    assert d.cuts == (3, 7)
    assert np.all(np.abs(np.abs(d.interior[[3, 7]]) - 1) < 1e-14)
    assert np.array_equal(np.delete(d.interior, [3, 7]), np.delete(m.interior, [3, 7]))
    c = build_cmv(d).to_dense()
    for b in (4, 8):
        assert np.all(c[:b, b:] == 0) and np.all(c[b:, :b] == 0)
    assert unitarity_defect(build_cmv(d)) < 1e-13


def test_decouple_difference_rows():
    n, block = 60, 12
    m = sample_para_model(n, 0.5, 5)
    d = decouple_model(m, block)
    diff = build_cmv(m).to_dense() - build_cmv(d).to_dense()
    rows = np.count_nonzero(np.any(np.abs(diff) > 0, axis=1))
    assert rows <= 4 * (n // block)


def test_decouple_errors():
    m = sample_para_model(12, 0.5, 3)
    for block in (0, 5, -4):
        with pytest.raises(DomainError):
            decouple_model(m, block)


def test_decoupling_scheme():
    assert decoupling_scheme(2048) == (1876, 268, 7)
    assert decoupling_scheme(512) == (492, 82, 6)


def test_solve_at_zero_is_adjoint():
    c = build_cmv(sample_para_model(50, 0.7, 1))
    inv = resolvent_matrix(c, 0.0)
    assert np.abs(inv - c.to_dense().conj().T).max() < 1e-11


def test_solve_round_trip_and_backward_error():
    rng = np.random.default_rng(0)
    c = build_cmv(sample_para_model(128, 0.6, 2))
    for _ in range(100):
        z = math.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
        y = rng.standard_normal(128) + 1j * rng.standard_normal(128)
        rhs = c.matvec(y) - z * y
        x = banded_solve(c, z, rhs)
        assert backward_error(c, z, x, rhs) < 1e-10
        assert np.linalg.norm(x - y) < 1e-10 * np.linalg.norm(y) / (1 - abs(z) + 1e-3)


def test_near_singular_guard():
    m = ParaModel.from_coefficients(np.zeros(7), beta=1.0)
    with pytest.raises(NearSingularError) as info:
        banded_solve(build_cmv(m), 1.0, np.ones(8))
    assert info.value.z == 1.0


def test_determinant_matches_paraorthogonal_value():
    rng = np.random.default_rng(4)
    for n in (5, 17, 64):
        m = sample_para_model(n, 0.8, n)
        c = build_cmv(m)
        for _ in range(5):
            z = 0.9 * np.exp(2j * np.pi * rng.random())
            lu = factorize(c, z)
            v, ls = paraorthogonal_value(m, z)
            # det(C - z) = (-1)^n Phi_n(z)
            assert lu.log_abs_det() == pytest.approx(math.log(abs(v)) + ls, abs=1e-8)
            assert abs(lu.det_phase() - (-1) ** n * v / abs(v)) < 1e-8


def test_caratheodory_entry_at_zero():
    c = build_cmv(sample_para_model(10, 0.5, 1))
    for k in range(10):
        for l in range(10):
            assert caratheodory_entry(c, 0.0, k, l) == (1.0 if k == l else 0.0)


def test_caratheodory_diagonal_positive():
    c = build_cmv(sample_para_model(30, 0.5, 6))
    for t in np.linspace(0.1, 6, 12):
        for k in range(30):
            assert caratheodory_entry(c, 0.99 * np.exp(1j * t), k, k).real >= 0


def test_resolvent_oracle_agrees():
    rng = np.random.default_rng(8)
    m = sample_para_model(8, 0.5, 3)
    c = build_cmv(m)
    for _ in range(20):
        z = rng.uniform(0.5, 1.0) * np.exp(2j * np.pi * rng.random())
        k, l = (int(x) for x in rng.integers(0, 8, 2))
        g = resolvent_entry(c, z, k, l)
        assert abs(resolvent_oracle(m, z, k, l) - g) < 1e-6 * abs(g)


def test_oracle_accuracy_degrades_near_origin():
    # unstabilized assembly: relative error grows like eps |z|^-n
    m = sample_para_model(16, 0.5, 4)
    c = build_cmv(m)
    errs = []
    for rad in (0.3, 0.6, 1.0):
        z = rad * np.exp(0.7j)
        g = resolvent_matrix(c, z)
        o = np.array([[resolvent_oracle(m, z, k, l) for l in range(16)] for k in range(16)])
        errs.append(np.max(np.abs(o - g) / np.abs(g)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] < 1e-8


def test_oracle_diagonal_near_zero():
    m = sample_para_model(8, 0.5, 3)
    z = 1e-7
    assert abs(1 + 2 * z * resolvent_oracle(m, z, 0, 0) - 1) < 1e-6


def test_p_pi_balance_on_circle():
    m = sample_para_model(10, 0.6, 2)
    for t in (0.3, 1.7, 4.0):
        z = np.exp(1j * t)
        for k in range(10):
            p, pi = oracle_p_pi(m, z, k)
            assert abs(abs(p) - abs(pi)) < 1e-9 * abs(p)


def test_caratheodory_function():
    m = sample_para_model(16, 0.5, 12)
    a, b = caratheodory_F(m, 0.0)
    assert a == 1 and b == pytest.approx(1, abs=1e-15)
    rng = np.random.default_rng(1)
    for t in rng.uniform(0, 2 * np.pi, 100):
        a, b = caratheodory_F(m, 0.9 * np.exp(1j * t))
        assert abs(a - b) < 1e-10 * abs(a)
        assert a.real >= 0
    angles = compute_spectrum(m).angles
    t = 0.5 * (angles[0] + angles[1])
    vals = [caratheodory_F(m, rho * np.exp(1j * t))[0].real for rho in (0.9, 0.99, 0.999)]
    assert vals[0] > vals[1] > vals[2] > 0
    # Re F ~ (1 - rho) off the spectrum
    assert vals[2] < 0.2 * vals[1] < 0.04 * vals[0]


def test_inverse_iteration_free():
    c = build_cmv(ParaModel.from_coefficients(np.zeros(3), beta=1.0))
    p = inverse_iteration(c, 0.0)
    assert p.residual < 1e-10
    assert abs(np.linalg.norm(p.vector) - 1) < 1e-12
    # the mode for eigenvalue 1 has equal weight on every coordinate
    assert np.allclose(np.abs(p.vector), 0.5, atol=1e-9)


def test_inverse_iteration_all_pairs_orthogonal():
    m = sample_para_model(100, 0.5, 11)
    c = build_cmv(m)
    pairs = [inverse_iteration(c, a) for a in compute_spectrum(m).angles]
    assert max(p.residual for p in pairs) < 1e-8
    v = np.array([p.vector for p in pairs])
    gram = np.abs(v.conj() @ v.T)
    assert np.abs(gram - np.eye(100)).max() < 1e-6


def test_resolvent_ratio_bound():
    bound = 2 / math.sqrt(0.75)
    assert bound == pytest.approx(2.3094, abs=1e-4)
    rng = np.random.default_rng(2)
    for seed in range(50):
        c = build_cmv(sample_para_model(40, 0.5, seed))
        assert ratio_bound_resolvent(c, np.exp(2j * np.pi * rng.random())) <= bound
    c = build_cmv(ParaModel.from_coefficients(np.zeros(15), beta=1.0))
    assert resolvent_ratio(c, 0.99, 3, 4, 3, 4) == 1.0


def test_dynamical_moment():
    c = build_cmv(sample_para_model(40, 0.5, 1))
    assert dynamical_moment(c, 7, 7, 5) == pytest.approx(1.0)
    assert dynamical_moment(c, 30, 5, 10) == 0.0
    assert 0 < dynamical_moment(c, 9, 5, 10) <= 1.0
    with pytest.raises(DomainError):
        dynamical_moment(c, 1, 1, 0)


def test_dynamical_moment_decays():
    dist = np.arange(0, 41, 5)
    acc = np.zeros(len(dist))
    for seed in range(200):
        c = build_cmv(sample_para_model(100, 0.9, seed))
        acc += dynamical_moment(c, 30 + dist, 30, 400)
    slope = np.polyfit(dist, np.log(acc / 200), 1)[0]
    assert slope < 0


def test_matrix_csv(tmp_path):
    c = build_cmv(sample_para_model(6, 0.5, 1))
    path = tmp_path / "c.csv"
    write_matrix_csv(c, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "row,col,re,im"
    d = c.to_dense()
    assert len(lines) - 1 == np.count_nonzero(d)
    i, j, re, im = lines[1].split(",")
    assert complex(float(re), float(im)) == d[int(i), int(j)]
