import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from typicality import approx, oracle
from typicality.approx import Branch, Kind
from typicality.errors import DomainError, RegimeError
from typicality.observables import RunningStats
from typicality.spectrum import EnergySpectrum, build_spin_spectrum

S0112 = EnergySpectrum.from_levels([0, 1, 1, 2])
TWO = EnergySpectrum.from_levels([0, 1])


@pytest.mark.parametrize("spec, lam, mu", [(S0112, 4.0, 0.0), (TWO, 2.0, 0.0)])
def test_multipliers_at_estar(spec, lam, mu):
    sol = approx.solve_lagrange(spec, spec.e_star)
    assert sol.branch is Branch.AT
    assert abs(sol.lam - lam) < 1e-9 and abs(sol.mu - mu) < 1e-9


@pytest.mark.parametrize("energy, branch", [(0.5, Branch.BELOW), (0.05, Branch.BELOW),
                                            (1.5, Branch.ABOVE), (1.97, Branch.ABOVE)])
def test_multipliers_solve_constraints(energy, branch):
    sol = approx.solve_lagrange(S0112, energy)
    assert sol.branch is branch
    r1, r2 = approx.constraint_residuals(S0112, energy, sol.lam, sol.mu)
    assert max(abs(r1), abs(r2)) < 1e-10
    assert np.all(sol.rates_for(S0112) > 0)
    assert sol.z == pytest.approx(oracle.lagrange_scan(S0112, energy), rel=1e-10)


def test_multipliers_half_energy_frozen():
    # z solves 1 + 2/(z+1) + ... ; value from the dense-scan oracle
    sol = approx.solve_lagrange(S0112, 0.5)
    assert sol.z == pytest.approx(0.3660254037844385, rel=1e-12)
    assert sol.lam == pytest.approx(1.6906, abs=1e-4)
    assert sol.mu == pytest.approx(4.6188, abs=1e-4)


@pytest.mark.parametrize("energy", [0.0, -1.0, 2.0, 3.0])
def test_energy_outside_spectrum(energy):
    with pytest.raises(DomainError):
        approx.solve_lagrange(S0112, energy)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.floats(0.02, 0.98), st.integers(0, 2 ** 32 - 1))
def test_random_spectra_residuals(n, frac, seed):
    rng = np.random.default_rng(seed)
    spec = build_spin_spectrum(n, rng.uniform(0.5, 2.0, n))
    energy = frac * spec.e_max
    sol = approx.solve_lagrange(spec, energy)
    assert sol.residual_norm < 1e-10
    dist = approx.feee_approx_I(spec, energy, sol)
    assert abs(dist.means.sum() - 1) < 1e-10
    assert abs(np.dot(spec.eigenvalues, dist.means) - energy) < 1e-10


def test_rates_approach_n_near_estar():
    gaps = []
    for d in (0.3, 0.1, 0.03, 0.01):
        rates = approx.feee_approx_I(S0112, 1.0 - d).rates
        gaps.append(np.max(np.abs(rates - 4.0)))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_rpse_approx():
    d = approx.rpse_approx(2)
    assert d.kind is Kind.RPSE
    np.testing.assert_array_equal(d.rates, [2, 2])
    np.testing.assert_array_equal(d.means, [0.5, 0.5])
    assert approx.rpse_approx(4).pdf(0, 0.0) == 4.0


def test_variance_of_sum(rng):
    eta = approx.rpse_approx(16).sample(1_000_000, rng).sum(axis=1)
    var = eta.var(ddof=1)
    se = math.sqrt((np.mean((eta - eta.mean()) ** 4) - var ** 2) / eta.size)
    assert abs(var - 1 / 16) < 3 * se


def test_first_form_at_estar_is_rpse():
    a = approx.feee_approx_I(S0112, 1.0)
    np.testing.assert_allclose(a.rates, approx.rpse_approx(4).rates)
    assert approx.mean_entropy_feee_I(S0112, 1.0) == pytest.approx(approx.mean_entropy_rpse(4))


def test_two_level_first_form():
    d = approx.feee_approx_I(TWO, 0.25)
    np.testing.assert_allclose(d.means, [0.75, 0.25], rtol=1e-10)


def test_first_form_entropy_monte_carlo(rng):
    dist = approx.feee_approx_I(TWO, 0.5)
    eta = dist.sample(1_000_000, rng)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -np.where(eta > 0, eta * np.log(eta), 0.0).sum(axis=1)
    stats = RunningStats.of(s)
    assert abs(stats.mean - approx.mean_entropy_feee_I(TWO, 0.5)) < 3 * stats.sem


def test_first_form_goes_negative_at_low_energy():
    spec = build_spin_spectrum(10)
    assert approx.mean_entropy_feee_I(spec, 10 * 0.01) < 0
    assert approx.mean_entropy_feee_I(spec, 10 * 0.05) > 0


@pytest.mark.parametrize("spec, energy, a1", [(S0112, 0.6, 0.5), (TWO, 0.5, 0.5)])
def test_second_form_ground_weight(spec, energy, a1):
    d = approx.feee_approx_II(spec, energy)
    assert d.kind is Kind.FEEE_II
    assert d.ground_delta == pytest.approx(a1, abs=1e-15)
    assert abs(d.means.sum() - 1) < 1e-12
    assert abs(np.dot(spec.eigenvalues, d.means) - energy) < 1e-12


def test_second_form_two_level_rate():
    np.testing.assert_allclose(approx.feee_approx_II(TWO, 0.5).rates[1:], [2.0])


def test_second_form_regime():
    with pytest.raises(RegimeError):
        approx.feee_approx_II(S0112, 1.5)
    with pytest.raises(ValueError):
        approx.feee_approx_II(S0112, 0.6).pdf(0, 0.1)


def test_second_form_stationarity():
    prm = approx.second_form_parameters(S0112, 0.6)
    assert prm["lam"] == 0 and prm["inv_a2"] == 0
    assert prm["mu"] == pytest.approx(5.0)
    res = approx.second_form_residuals(S0112, 0.6, **prm)
    assert np.max(np.abs(res)) < 1e-12


def test_second_form_entropy_value():
    # term-by-term sum over the means (0.5, 0.2, 0.2, 0.1)
    m = [0.5, 0.2, 0.2, 0.1]
    by_hand = -sum(x * math.log(x) for x in m) - (1 - approx.EULER_GAMMA) * 0.5
    assert approx.mean_entropy_feee_II(S0112, 0.6) == pytest.approx(by_hand, rel=1e-14)
    assert by_hand == pytest.approx(1.0092150970037836, rel=1e-14)


def test_closed_form_scales():
    assert approx.mean_entropy_feee_II_closed(S0112, 0.6) == pytest.approx(1.0092150970037836, rel=1e-13)
    # e = E/N evaluates to the value quoted for the per-state scaling
    assert approx.mean_entropy_feee_II_closed(S0112, 0.6, "per_state") == pytest.approx(0.90, abs=0.002)
    with pytest.raises(ValueError):
        approx.mean_entropy_feee_II_closed(S0112, 0.6, "bogus")


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.floats(0.01, 0.99), st.integers(0, 2 ** 32 - 1))
def test_closed_form_equals_sum(n, frac, seed):
    rng = np.random.default_rng(seed)
    spec = build_spin_spectrum(n, rng.uniform(0.5, 2.0, n))
    limit = min(spec.e_max, (spec.n_states - 1) / spec.constants.s0)
    energy = frac * limit
    a = approx.mean_entropy_feee_II(spec, energy)
    b = approx.mean_entropy_feee_II_closed(spec, energy)
    assert abs(a - b) < 1e-12
    assert a >= 0


def test_second_form_entropy_vanishes_at_zero_energy():
    assert approx.mean_entropy_feee_II(S0112, 1e-12) < 1e-9


@pytest.mark.parametrize("n, expected", [(1, approx.EULER_GAMMA - 1), (16, math.log(16) - 1 + approx.EULER_GAMMA)])
def test_rpse_mean_entropy_formula(n, expected):
    assert approx.mean_entropy_rpse(n) == pytest.approx(expected, rel=1e-15)


def test_rpse_mean_entropy_large_n():
    assert abs(approx.mean_entropy_rpse(1024) - oracle.rpse_exact_mean_entropy(1024)) < 1e-3
    assert approx.mean_entropy_rpse(16) == pytest.approx(2.3498, abs=1e-4)


@pytest.mark.parametrize("n, width", [(4, 0.5), (10_000, 0.01)])
def test_rel_width_formula(n, width):
    assert approx.entropy_rel_width_rpse(n) == pytest.approx(width, rel=1e-15)
