import math

import numpy as np
import pytest

from rlbridge import bayes, bridge, oracle
from rlbridge import length_law as ll
from rlbridge.bridge import BridgeSpec
from rlbridge.errors import DomainError, InsufficientSampleError


def test_definition_sampler_matches_bridge_covariance(ou):
    times = np.array([0.3, 0.9, 1.6])
    law = ll.atoms({2.0: 1.0})
    v, tau = oracle.sample_definition(ou, law, times, 80_000, np.random.default_rng(1))
    assert np.all(tau == 2.0)
    exact = bridge.covariance_matrix(BridgeSpec(ou, 2.0), times)
    assert np.allclose(np.cov(v.T), exact, atol=0.01)


def test_definition_sampler_zeros(brownian):
    law = ll.uniform(0.5, 1.5)
    times = np.array([0.0, 0.4, 1.0, 1.6])
    v, tau = oracle.sample_definition(brownian, law, times, 5000, np.random.default_rng(2))
    assert np.all(v[:, 0] == 0.0)
    assert np.all((v == 0.0)[:, 1:] == (times[None, 1:] >= tau[:, None]))


def test_definition_sampler_validation(brownian, two_atoms):
    with pytest.raises(DomainError):
        oracle.sample_definition(brownian, two_atoms, [0.5, 0.4], 10, np.random.default_rng(0))


def test_empirical_posterior_pinned(brownian, two_atoms):
    emp = oracle.empirical_posterior(brownian, two_atoms, 1.5, 0.0, None, 20_000, seed=3)
    assert emp.discrete and list(emp.frequencies) == [1.0, 0.0]
    assert emp.count == pytest.approx(10_000, rel=0.05)


def test_empirical_posterior_live(brownian, two_atoms):
    emp = oracle.empirical_posterior(brownian, two_atoms, 0.5, 0.8, 0.02, 400_000, seed=4)
    post = bayes.posterior_single(brownian, two_atoms, (0.5, 0.8))
    assert oracle.total_variation(post, emp) < 4 * emp.std_errors.max()


def test_wide_window_recovers_prior(brownian):
    law = ll.exponential(1.0)
    emp = oracle.empirical_posterior(brownian, law, 0.3, 0.0, None, 20_000, seed=5)
    pinned_share = emp.count / 20_000
    assert pinned_share == pytest.approx(1 - math.exp(-0.3), abs=4 * math.sqrt(0.26 * 0.74 / 20_000))


def test_insufficient_sample(brownian, two_atoms):
    with pytest.raises(InsufficientSampleError):
        oracle.empirical_posterior(brownian, two_atoms, 0.5, 3.0, 1e-4, 2000, seed=0)
    with pytest.raises(DomainError):
        oracle.empirical_posterior(brownian, two_atoms, 0.5, 0.3, -1.0, 2000, seed=0)


def test_standard_error_shrinks_with_sample_size(brownian, two_atoms):
    small = oracle.empirical_posterior(brownian, two_atoms, 0.5, 0.3, 0.05, 20_000, seed=6)
    large = oracle.empirical_posterior(brownian, two_atoms, 0.5, 0.3, 0.05, 320_000, seed=6)
    ratio = small.std_errors.max() / large.std_errors.max()
    assert ratio == pytest.approx(4.0, rel=0.15)


def test_empirical_predictive_mean(brownian, two_atoms):
    emp = oracle.empirical_predictive(brownian, two_atoms, 0.5, 0.8, 1.5, 0.02, 400_000, seed=7)
    pred = bayes.predict(brownian, two_atoms, (0.5, 0.8), 1.5)
    mean, se = emp.mean()
    assert abs(mean - pred.mean()) < 4 * se


def test_markov_test_single_length(brownian):
    rep = oracle.markov_ci_test(brownian, ll.atoms({2.0: 1.0}), (0.5, 1.0, 1.5), lambda y: y,
                                100_000, seed=1)
    assert rep["pass"] and rep["check"] == "markov"


def test_markov_negative_control_fails(brownian, two_atoms):
    rep = oracle.markov_ci_test(brownian, two_atoms, (0.3, 0.6, 1.5), lambda y: y,
                                100_000, seed=1, conditioning="increment")
    assert not rep["pass"]


def test_markov_test_validation(brownian, two_atoms):
    with pytest.raises(DomainError):
        oracle.markov_ci_test(brownian, two_atoms, (0.6, 0.3, 1.5), lambda y: y, 1000, 0)
    with pytest.raises(DomainError):
        oracle.markov_ci_test(brownian, two_atoms, (0.3, 0.6, 1.5), lambda y: y, 1000, 0, conditioning="x")


def test_convergence_report(brownian):
    law = ll.atoms({0.5: 0.3, 1.0: 0.3, 2.0: 0.4})
    rep = oracle.convergence_check(brownian, law, u=1.0, n_paths=300, seed=2)
    assert rep["target"] == pytest.approx(0.6)
    gaps = rep["mean_abs_gap"]
    assert gaps[-1] < gaps[0]
    assert rep["pass"]
    # variance of xi_1 given tau = 2 is 1 * (2 - 1) / 2
    assert rep["predictive_second_moment"]["limit"] == pytest.approx(0.4 * 0.5, rel=1e-12)


def test_convergence_needs_gap_near_zero(brownian):
    with pytest.raises(DomainError):
        oracle.convergence_check(brownian, ll.exponential(1.0), u=1.0, eps=0.1, n_paths=10)
