"""Decoupling surrogate, scaling regressions and Gaussian identities."""

import numpy as np
import pytest

from fbmlab.bounds import (
    DecouplingExperiment,
    catalog,
    decoupling_scaling,
    density_shift_integral,
    density_shift_slope,
    factorisation_scaling,
    lemma_a1_mc,
    lemma_a1_oracle,
    lemma_a2_check,
    surrogate_expectation,
    true_expectation,
)

H_LEVELS = [2.0 ** -k for k in range(1, 7)]


def test_catalog_entries_are_well_formed():
    cat = catalog()
    for name, entry in cat.items():
        assert entry.name == name
        ts = entry.times(0.1)
        assert len(ts) == entry.p + entry.q + 1
        assert ts[0] == 0.0
        assert np.all(np.diff(ts) > 0)
        z = np.zeros((5, entry.p + entry.q))
        out = entry.evaluate(z, 0.1)
        assert out.shape == (5,)


def test_experiment_validation():
    with pytest.raises(ValueError):
        DecouplingExperiment("nope", 0.75, 0.1)
    with pytest.raises(ValueError):
        DecouplingExperiment("step2", 0.4, 0.1)
    with pytest.raises(ValueError):
        DecouplingExperiment("step2", 0.75, 0.1, mc_samples=10)


def test_constant_functional_true_expectation_is_one():
    exp = DecouplingExperiment("constant", 0.75, 0.1, mc_samples=2000)
    res = true_expectation(exp)
    assert res["mean"] == pytest.approx(1.0)
    assert res["stderr"] == 0.0
    with pytest.raises(ValueError):
        surrogate_expectation(exp)


def test_true_expectation_common_random_numbers():
    exp = DecouplingExperiment("step2", 0.75, 0.25, mc_samples=5000, seed=3)
    z = np.random.default_rng(0).standard_normal((5000, 3))
    a = true_expectation(exp, normals=z)
    b = true_expectation(exp, normals=z)
    assert a == b


def test_surrogate_positive_and_decaying():
    vals = [
        surrogate_expectation(
            DecouplingExperiment("step2", 0.75, h, mc_samples=1000))
        for h in (0.5, 0.25, 0.125)
    ]
    assert all(v > 0 for v in vals)
    assert vals[0] > vals[1] > vals[2]


def test_decoupling_scaling_step2_smoke():
    res = decoupling_scaling("step2", 0.75, H_LEVELS, mc_samples=50_000, seed=0)
    assert res["status"] in ("PASS", "INCONCLUSIVE")
    assert len(res["per_h"]) == len(H_LEVELS)
    # cells without sampled events are never treated as informative
    for row in res["per_h"]:
        if row["stderr"] == 0:
            assert not row["usable"]


def test_decoupling_scaling_needs_enough_levels():
    with pytest.raises(ValueError):
        decoupling_scaling("step2", 0.75, [0.5, 0.25], mc_samples=1000)


@pytest.mark.parametrize("h", [0.6, 0.75])
def test_factorisation_slope_matches_exponent(h):
    res = factorisation_scaling(h, [2.0 ** -k for k in range(3, 9)])
    assert abs(res["slope"] - (2 - 2 * h)) <= 0.3


def test_lemma_a1_oracle_values():
    assert lemma_a1_oracle(0.0) == 0.0
    assert lemma_a1_oracle(2.0) == 2.0
    with pytest.raises(ValueError):
        lemma_a1_oracle(-1.0)


def test_lemma_a1_mc_close():
    for theta in (0.5, 2.0):
        mc = lemma_a1_mc(theta, samples=200_000, seed=1)
        assert mc == pytest.approx(lemma_a1_oracle(theta), rel=0.02)


def test_lemma_a2_bounds_hold():
    res = lemma_a2_check(0.7, 1.3, samples=100_000, seed=2)
    assert res["pass"]
    assert res["lhs1"] <= 1.3 * 1.01
    with pytest.raises(ValueError):
        lemma_a2_check(1.0, 1.0, samples=10)


def test_density_shift_integral_positive_and_level_damped():
    v0 = density_shift_integral(0.7, 64, a=0.0)
    v2 = density_shift_integral(0.7, 64, a=2.0)
    assert v0 > 0
    assert v2 < v0  # exp(-a^2/...) damping


@pytest.mark.slow
def test_density_shift_decay_rate():
    res = density_shift_slope(0.6, n_values=(256, 512, 1024))
    assert res["slope"] <= -(1 - 0.6) + 0.3
