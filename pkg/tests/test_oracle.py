import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from typicality import approx, oracle
from typicality.errors import BoundError, DimensionError, DomainError, NumericError, SingularityError
from typicality.feee import FeeeTarget
from typicality.spectrum import EnergySpectrum, build_spin_spectrum

S0112 = EnergySpectrum.from_levels([0, 1, 1, 2])


@pytest.mark.parametrize("a, u, v, det", [
    (np.eye(3), np.zeros(3), np.zeros(3), 1.0),
    (np.eye(3), [1, 0, 0], [1, 0, 0], 2.0),
    (2 * np.eye(2), [0, 0], [5, 5], 4.0),
    (np.diag([1.0, 2.0, 3.0]), [1, 1, 1], [1, 1, 1], 6.0 * (1 + 1 + 0.5 + 1 / 3)),
])
def test_rank1_examples(a, u, v, det):
    assert oracle.det_rank1_update(a, u, v) == pytest.approx(det, rel=1e-14)


def test_rankk_examples():
    assert oracle.det_rankk_update(np.eye(3), np.zeros((3, 2))) == pytest.approx(1.0)
    u = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    assert oracle.det_rankk_update(np.eye(3), u) == pytest.approx(4.0)
    # complex U uses the conjugate transpose
    uc = np.array([[1j], [0], [0]])
    assert oracle.det_rankk_update(np.eye(3), uc) == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_lemmas_match_direct(n, k, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + n * np.eye(n)
    u, v = rng.normal(size=n), rng.normal(size=n)
    direct = oracle.direct_det(a + np.outer(u, v))
    assert oracle.det_rank1_update(a, u, v) == pytest.approx(direct, rel=1e-9, abs=1e-9)
    U = rng.normal(size=(n, k))
    direct = oracle.direct_det(a + U @ U.T)
    assert oracle.det_rankk_update(a, U) == pytest.approx(direct, rel=1e-9, abs=1e-9)


def test_singular_and_bad_shapes():
    with pytest.raises(SingularityError):
        oracle.det_rank1_update(np.zeros((2, 2)), [1, 0], [0, 1])
    with pytest.raises(SingularityError):
        oracle.det_rankk_update(np.diag([1.0, 0.0]), np.ones((2, 1)))
    with pytest.raises(DimensionError):
        oracle.direct_det(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        oracle.direct_det(np.eye(65))
    with pytest.raises(DimensionError):
        oracle.direct_det([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(DimensionError):
        oracle.det_rank1_update(np.eye(2), [1, 0, 0], [1, 0])


@pytest.mark.parametrize("n", [2, 4, 8])
def test_sphere_metric(n, rng):
    p = rng.dirichlet(np.ones(n))[:-1]
    d = oracle.rpse_metric_det(p)
    assert d["direct"] == pytest.approx(d["closed"], rel=1e-10)
    assert d["total"] == pytest.approx(d["expected_total"], rel=1e-10)


@pytest.mark.parametrize("n_spins", [2, 3])
def test_surface_metric(n_spins, rng):
    spec = build_spin_spectrum(n_spins, rng.uniform(0.5, 2, n_spins))
    t = FeeeTarget.build(spec, 0.37 * spec.e_max)
    verts = oracle.surface_vertices(t)
    for _ in range(20):
        # random mixture of the vertices lies strictly inside the surface
        p = rng.dirichlet(np.ones(len(verts))) @ verts
        d = oracle.feee_metric_det(p[t.free], t)
        assert d["direct"] == pytest.approx(d["closed"], rel=1e-8)
        assert d["with_phases"] == pytest.approx(d["bracket_form"], rel=1e-8)


def test_surface_metric_needs_interior():
    t = FeeeTarget.build(S0112, 1.0)
    with pytest.raises(DomainError):
        oracle.feee_metric_det([0.0, 0.2], t)


def _sqrt_profile_mass(edges):
    # density sqrt(2x)(1 - 2x) on [0, 1/2], integrated exactly
    prim = (2 / 3) * edges ** 1.5 - (4 / 5) * edges ** 2.5
    mass = np.diff(prim)
    return mass / mass.sum()


def test_quadrature_against_closed_form():
    t = FeeeTarget.build(S0112, 1.0)
    table = oracle.feee_marginal_quadrature(t, 0, bins=30)
    assert table.edges[-1] == pytest.approx(0.5)
    assert np.abs(table.probabilities - _sqrt_profile_mass(table.edges)).max() < 1e-3


@pytest.mark.parametrize("energy", [0.5, 1.0, 1.4])
def test_quadrature_normalized_and_refined(energy):
    t = FeeeTarget.build(S0112, energy)
    coarse = oracle.feee_marginal_quadrature(t, 0, bins=30, resolution=420)
    fine = oracle.feee_marginal_quadrature(t, 0, bins=30, resolution=840)
    assert coarse.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(coarse.probabilities - fine.probabilities).max() < 1e-4


def test_quadrature_degenerate_levels_agree():
    t = FeeeTarget.build(S0112, 0.7)
    a = oracle.feee_marginal_quadrature(t, 1, bins=20, lo=0, hi=0.7)
    b = oracle.feee_marginal_quadrature(t, 2, bins=20, lo=0, hi=0.7)
    np.testing.assert_allclose(a.density, b.density, atol=1e-12)


def test_quadrature_size_limit():
    t = FeeeTarget.build(build_spin_spectrum(3), 1.0)
    with pytest.raises(DimensionError):
        oracle.feee_marginal_quadrature(t, 0)


def test_surface_vertices():
    t = FeeeTarget.build(S0112, 1.0)
    v = oracle.surface_vertices(t)
    # eigenstates 1, 2 at E plus the (0, 3) mixture
    assert len(v) == 3
    np.testing.assert_allclose(v @ S0112.eigenvalues, 1.0)
    np.testing.assert_allclose(v.sum(axis=1), 1.0)


@pytest.mark.parametrize("n_spins, proposal", [(2, "polytope"), (2, "box"), (3, "polytope")])
def test_rejection_samples(n_spins, proposal):
    spec = build_spin_spectrum(n_spins)
    t = FeeeTarget.build(spec, 0.3 * n_spins)
    sampler = oracle.RejectionSampler(t, proposal=proposal)
    p = sampler.sample(20_000, np.random.default_rng(1))
    assert p.shape == (20_000, spec.n_states)
    assert np.max(np.abs(p @ spec.eigenvalues - t.energy)) < 1e-12
    assert sampler.max_ratio <= 1.0
    assert 0 < sampler.acceptance <= 1


def test_rejection_matches_quadrature():
    t = FeeeTarget.build(S0112, 0.6)
    p = oracle.feee_rejection_sample(t, 100_000, np.random.default_rng(2))
    ref = oracle.feee_marginal_quadrature(t, 0, bins=30)
    counts, _ = np.histogram(p[:, 0], bins=ref.edges)
    assert 0.5 * np.abs(counts / counts.sum() - ref.probabilities).sum() < 0.02


def test_rejection_bound_violation_detected():
    t = FeeeTarget.build(S0112, 1.0)
    sampler = oracle.RejectionSampler(t, safety=0.5, max_rescans=0)
    with pytest.raises(BoundError):
        sampler.sample(1000, np.random.default_rng(0))


def test_rejection_rescan_recovers():
    t = FeeeTarget.build(S0112, 1.0)
    sampler = oracle.RejectionSampler(t, safety=0.9, max_rescans=3)
    sampler.sample(1000, np.random.default_rng(0))
    assert sampler.max_ratio <= 1.0


def test_rejection_size_limit():
    t = FeeeTarget.build(build_spin_spectrum(4), 1.0)
    with pytest.raises(DimensionError):
        oracle.RejectionSampler(t)


def test_shell_sample_matches_rejection():
    t = FeeeTarget.build(build_spin_spectrum(3), 0.9)
    ws = oracle.feee_shell_sample(t, 100_000, np.random.default_rng(3), width=0.01)
    ref = oracle.feee_rejection_sample(t, 100_000, np.random.default_rng(4))
    x = np.linspace(0, 1, 401)
    for k in (0, 4, 7):
        emp = np.searchsorted(np.sort(ref[:, k]), x, side="right") / len(ref)
        assert np.max(np.abs(emp - ws.cdf(k, x))) < 0.015


def test_weighted_ks_unit_weights():
    rng = np.random.default_rng(5)
    p = rng.dirichlet(np.ones(4), 2000)
    ws = oracle.WeightedSample(p, np.ones(len(p)))
    cdf = stats.beta(1, 3).cdf
    assert ws.ks_to(0, cdf) == pytest.approx(stats.kstest(p[:, 0], cdf).statistic, rel=1e-12)


@pytest.mark.parametrize("energy", [0.1, 0.5, 0.99, 1.0, 1.3, 1.9])
def test_lagrange_scan_agrees(energy):
    z = oracle.lagrange_scan(S0112, energy)
    sol = approx.solve_lagrange(S0112, energy)
    if energy == 1.0:
        assert math.isinf(z)
    else:
        assert z == pytest.approx(sol.z, rel=1e-10)


def test_lagrange_scan_domain():
    with pytest.raises(DomainError):
        oracle.lagrange_scan(S0112, 2.5)


@pytest.mark.parametrize("n, value", [(1, 0.0), (2, 0.5), (4, 1 / 2 + 1 / 3 + 1 / 4)])
def test_exact_mean_entropy(n, value):
    assert oracle.rpse_exact_mean_entropy(n) == pytest.approx(value, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_mean_entropy_integral(n):
    assert oracle.rpse_mean_entropy_integral(n) == pytest.approx(oracle.rpse_exact_mean_entropy(n), abs=1e-7)
    with pytest.raises(DimensionError):
        oracle.rpse_mean_entropy_integral(5)


def test_marginal_cdf_pdf():
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(oracle.rpse_marginal_cdf(x, 2), x)
    assert oracle.rpse_marginal_pdf(0.0, 4) == pytest.approx(3.0)
    assert oracle.rpse_entropy_std_asymptotic(1) == pytest.approx(0.5384, abs=1e-4)
