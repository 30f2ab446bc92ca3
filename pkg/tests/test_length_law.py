import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlbridge import length_law as ll
from rlbridge.errors import DomainError


def test_exponential_cdf():
    assert ll.cdf(ll.exponential(1.0), 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)


def test_atom_cdf_includes_atom(two_atoms):
    assert ll.cdf(two_atoms, 1.5) == 0.5
    assert ll.cdf(two_atoms, 1.0) == 0.5
    assert ll.cdf(two_atoms, 0.999) == 0.0
    assert ll.cdf(two_atoms, 0.0) == 0.0


def test_integrate_examples(two_atoms):
    one = lambda r: np.ones_like(np.asarray(r, dtype=float))
    ident = lambda r: np.asarray(r, dtype=float)
    assert ll.integrate(two_atoms, one) == 1.0
    assert ll.integrate(two_atoms, ident) == 1.5
    assert ll.integrate(ll.exponential(1.0), ident) == pytest.approx(1.0, abs=1e-9)
    assert ll.integrate(ll.exponential(1.0), one) == pytest.approx(1.0, abs=1e-9)


def test_windows_are_half_open(two_atoms):
    one = lambda r: np.ones_like(np.asarray(r, dtype=float))
    assert ll.integrate(two_atoms, one, (1.0, 2.0)) == 0.5  # atom at 1 excluded, at 2 included
    assert ll.integrate(two_atoms, one, (0.5, 1.0)) == 0.5


def test_uniform_and_mixture():
    u = ll.uniform(1.0, 3.0)
    assert ll.cdf(u, 2.0) == pytest.approx(0.5)
    mix = ll.mixture([(0.25, ll.atoms({0.5: 1.0})), (0.75, ll.exponential(2.0))])
    assert mix.total_mass == pytest.approx(1.0)
    assert ll.cdf(mix, 0.5) == pytest.approx(0.25 + 0.75 * (1 - math.exp(-1.0)))
    assert ll.mean(mix) == pytest.approx(0.25 * 0.5 + 0.75 * 0.5, abs=1e-9)


def test_law_validation():
    with pytest.raises(DomainError):
        ll.atoms({0.0: 1.0})
    with pytest.raises(DomainError):
        ll.atoms({1.0: 0.5})
    with pytest.raises(DomainError):
        ll.exponential(-1.0)
    with pytest.raises(DomainError):
        ll.uniform(2.0, 1.0)


def test_parse_spec():
    assert ll.parse_spec("atoms:1=0.5,2=0.5").atom_masses.tolist() == [0.5, 0.5]
    assert ll.cdf(ll.parse_spec("exp:2"), 1.0) == pytest.approx(1 - math.exp(-2))
    assert ll.cdf(ll.parse_spec("uniform:1,2"), 1.5) == pytest.approx(0.5)
    j = ll.parse_spec('{"kind": "mixture", "parts": [{"weight": 0.5, "kind": "atoms", "points": [[1, 1]]},'
                      ' {"weight": 0.5, "kind": "exponential", "rate": 1}]}')
    assert j.total_mass == pytest.approx(1.0)
    for bad in ("gamma:2", "atoms:1=x", "uniform:1"):
        with pytest.raises(DomainError):
            ll.parse_spec(bad)


def test_quantile_inverts_cdf():
    law = ll.mixture([(0.3, ll.atoms({1.0: 1.0})), (0.7, ll.uniform(0.5, 2.5))])
    u = np.linspace(0.01, 0.99, 50)
    q = ll.quantile(law, u)
    f = np.asarray(ll.cdf(law, q))
    assert np.all(f >= u - 1e-9)
    # just below the quantile the CDF has not yet reached the level
    assert np.all(np.asarray(ll.cdf(law, q - 1e-7)) < u + 1e-9)


def test_sample_tau_examples():
    rng = np.random.default_rng(1)
    assert set(ll.sample_tau(ll.atoms({3.0: 1.0}), rng, 100)) == {3.0}
    draws = ll.sample_tau(ll.exponential(1.0), rng, 10**6)
    assert abs(draws.mean() - 1.0) < 3 * draws.std() / 1e3
    draws = ll.sample_tau(ll.uniform(1.0, 2.0), rng, 10**6)
    frac = (draws <= 1.5).mean()
    assert abs(frac - 0.5) < 3 * 0.5 / 1e3


def test_quadrature_nodes_reproduce_moments():
    law = ll.exponential(1.3)
    r, w = ll.quadrature_nodes(law, (0.4, math.inf))
    assert w.sum() == pytest.approx(math.exp(-1.3 * 0.4), rel=1e-10)
    assert (w * r).sum() == pytest.approx(ll.integrate(law, lambda x: x, (0.4, math.inf)), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(rate=st.floats(0.1, 5.0), a=st.floats(0.01, 3.0), width=st.floats(0.05, 4.0),
       w=st.floats(0.05, 0.95), t=st.floats(0.0, 6.0))
def test_normalization_and_cdf_consistency(rate, a, width, w, t):
    law = ll.mixture([(w, ll.exponential(rate)), (1 - w, ll.uniform(a, a + width))])
    one = lambda r: np.ones_like(np.asarray(r, dtype=float))
    assert ll.integrate(law, one) == pytest.approx(1.0, abs=1e-9)
    assert ll.integrate(law, one, (0.0, t)) == pytest.approx(float(ll.cdf(law, t)), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0.05, 10.0), st.floats(0.01, 1.0)), min_size=1, max_size=6,
                unique_by=lambda p: round(p[0], 6)))
def test_atom_laws_normalize(points):
    total = sum(p for _, p in points)
    law = ll.atoms([(r, p / total) for r, p in points])
    grid = np.linspace(0, 11, 200)
    f = np.asarray(ll.cdf(law, grid))
    assert np.all(np.diff(f) >= 0)
    assert f[-1] == pytest.approx(1.0, abs=1e-9)
