import math

import numpy as np
import pytest

from paraopuc.core import derive_seed, sample_para_model
from paraopuc.errors import ConfigError, DomainError
from paraopuc.phase import Spectrum, compute_spectrum, window_count
from paraopuc.pointproc import (
    CountHistogram,
    ExperimentConfig,
    bernoulli_poisson_reference,
    count_histogram,
    decoupling_agreement,
    ensemble_counts,
    joint_window_test,
    multiplicity_probability,
    phase_derivative_mean,
    poisson_distance,
    run_ensemble,
)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(10, 0.5, 5, windows=((1, 0),))
    with pytest.raises(ConfigError):
        ExperimentConfig(10, 0.5, 5, windows=((0, 1), (0, 1)))
    with pytest.raises(ConfigError):
        ExperimentConfig(10, 0.5, 5, windows=((0, 2), (1, 3)))
    with pytest.raises(ConfigError):
        ExperimentConfig(10, 0.5, 5, windows=((8, 11), (0.5, 1)))  # overlap through wrap
    with pytest.raises(ConfigError):
        ExperimentConfig(10, 0.5, 0)
    with pytest.raises(ConfigError):
        ExperimentConfig(10, 1.5, 5)
    with pytest.raises(ConfigError):
        ExperimentConfig(10, 0.5, 5, decouple=3).scheme
    ExperimentConfig(10, 0.5, 5, windows=((0, 1), (1, 2), (9, 10)))
    assert ExperimentConfig(2048, 0.5, 1, decouple="log").size == 1876


def test_single_trial_is_composition():
    cfg = ExperimentConfig(30, 0.5, 1, seed=4)
    (spec,) = run_ensemble(cfg)
    direct = compute_spectrum(sample_para_model(30, 0.5, derive_seed(4, 0)))
    assert np.array_equal(spec.angles, direct.angles)


def test_ensemble_complete_and_deterministic():
    cfg = ExperimentConfig(40, 0.7, 12, seed=9)
    a = run_ensemble(cfg, workers=1)
    b = run_ensemble(cfg, workers=2)
    assert all(len(s) == 40 for s in a)
    for x, y in zip(a, b):
        assert x.angles.tobytes() == y.angles.tobytes()


def test_histogram_examples():
    spec = Spectrum(np.sort(np.random.default_rng(0).uniform(0, 2 * np.pi, 10)), np.zeros(10))
    cfg = ExperimentConfig(10, 0.5, 1, windows=((-0.5 + 1e-9, 9.5),))
    h = count_histogram([spec] * 3, cfg)
    assert h.pmf == {10: 1.0} or h.pmf == {9: 1.0}
    cfg0 = ExperimentConfig(10, 0.5, 1, windows=((0.3, 0.3 + 1e-12),))
    assert count_histogram([spec], cfg0).pmf == {0: 1.0}
    with pytest.raises(DomainError):
        CountHistogram((0, 1), {0: 0.5}, 2)


def test_poisson_distance_examples():
    pmf = {k: math.exp(-1) / math.factorial(k) for k in range(64)}
    pmf[0] += 1 - sum(pmf.values())
    assert poisson_distance(CountHistogram((0, 1), pmf, 1), 1.0) < 1e-12
    point = CountHistogram((0, 1), {0: 1.0}, 1)
    assert poisson_distance(point, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    tail = CountHistogram((0, 1), {0: 0.5}, 2, tail_mass=0.5)
    assert poisson_distance(tail, 1.0) == pytest.approx(0.5 * (abs(0.5 - math.exp(-1)) + (1 - math.exp(-1)) + 0.5), abs=1e-12)
    with pytest.raises(DomainError):
        poisson_distance(point, 0.0)


def test_joint_and_multiplicity():
    cfg = ExperimentConfig(60, 0.6, 200, seed=3, windows=((0, 1), (1, 2)))
    ens = run_ensemble(cfg)
    res = joint_window_test(ens, cfg)
    assert sum(res.joint_pmf.values()) == pytest.approx(1.0)
    assert res.product_pmf[(0, 0)] == pytest.approx(math.exp(-2))
    assert res.correlation.shape == (2, 2)
    m = multiplicity_probability(ens, cfg, 0)
    assert m.wilson_low <= m.probability <= m.wilson_high
    assert m.bound == 0.5
    with pytest.raises(DomainError):
        joint_window_test(ens, ExperimentConfig(60, 0.6, 200, windows=((0, 1),)))
    degenerate = ExperimentConfig(60, 0.6, 200, windows=((0, 1e-12),))
    assert multiplicity_probability(ens, degenerate, 0).probability == 0.0


def test_count_conservation_and_density():
    cfg = ExperimentConfig(50, 0.5, 300, seed=5, theta0=0.01, windows=tuple((k, k + 1) for k in range(50)))
    ens = run_ensemble(cfg)
    counts = ensemble_counts(ens, cfg)
    assert np.all(counts.sum(axis=1) == 50)
    col = counts[:, 7]
    assert abs(col.mean() - 1.0) < 3 * col.std(ddof=1) / math.sqrt(len(col))


def test_phase_derivative_mean_free_and_small():
    from paraopuc import pointproc

    cfg = ExperimentConfig(20, 0.5, 40, seed=1)
    est = phase_derivative_mean(cfg)
    assert est.mean > 0 and est.trials == 40
    with pytest.raises(ConfigError):
        phase_derivative_mean(ExperimentConfig(20, 0.5, 10))


def test_decoupling_agreement_runs():
    cfg = ExperimentConfig(60, 0.5, 40, seed=2, windows=((0, 0.5),), decouple=60)
    res = decoupling_agreement(cfg)
    assert 0.5 < res.fractions[0] <= 1.0
    with pytest.raises(ConfigError):
        decoupling_agreement(ExperimentConfig(60, 0.5, 4))


def test_block_arc_counts_equal_block_size():
    from paraopuc.cmv import decouple_model
    from paraopuc.phase import arc_count, segment_spectra

    d = decouple_model(sample_para_model(60, 0.5, 1), 20)
    for angles in segment_spectra(d):
        assert len(angles) == 20
    assert arc_count(d, -1e-9, 2 * np.pi - 2e-9) == 60


def test_bernoulli_reference():
    assert bernoulli_poisson_reference(10, 0.1, 0) == pytest.approx(0.9**10)
    assert bernoulli_poisson_reference(10, 0.1, 11) == 0.0
    assert bernoulli_poisson_reference(10**6, 1e-6, 0) == pytest.approx(math.exp(-1), rel=1e-6)
    with pytest.raises(DomainError):
        bernoulli_poisson_reference(3, 1.5, 0)
