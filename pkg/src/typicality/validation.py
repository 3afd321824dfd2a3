"""Oracle suite run by ``typicality validate``.

``quick`` covers the deterministic identities and cheap sampler checks;
``full`` adds the sampler cross-validations (a minute or two).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import approx, oracle
from .errors import NumericError
from .feee import ChainConfig, FeeeChain, FeeeTarget
from .observables import Histogram, RunningStats, total_variation
from .rpse import sample_entropies, sample_simplex_batch
from .spectrum import EnergySpectrum, build_spin_spectrum


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measured": float(self.measured),
                "tolerance": float(self.tolerance), "detail": self.detail}

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{tag}  {self.name}: measured {self.measured:.6g}, tolerance {self.tolerance:.3g}{extra}"


def _below(name, measured, tol, detail="") -> Check:
    return Check(name, bool(measured < tol), measured, tol, detail)


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# --- random instances ------------------------------------------------------------

def random_matrix(rng, dim: int) -> np.ndarray:
    # well conditioned: identity plus a modest random part
    return np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))


def random_interior(target: FeeeTarget, rng, tries: int = 100_000) -> np.ndarray:
    """Free populations of a random strictly interior point (rejection from
    Dirichlet points of the surface vertex hull)."""
    v = oracle.surface_vertices(target)
    for _ in range(tries):
        w = rng.dirichlet(np.ones(len(v)))
        p = w @ v
        if np.all(p > 1e-9):
            return p[target.free]
    raise NumericError("no interior point found")


def random_spin_spectrum(rng, max_spins: int = 6) -> EnergySpectrum:
    n = int(rng.integers(1, max_spins + 1))
    return build_spin_spectrum(n, rng.uniform(0.5, 2.0, n))


# --- checks -------------------------------------------------------------------------

def check_rank1(rng, trials: int = 100, dim: int = 8) -> Check:
    worst = 0.0
    for _ in range(trials):
        a = random_matrix(rng, dim)
        u, v = rng.standard_normal(dim), rng.standard_normal(dim)
        worst = max(worst, _rel(oracle.det_rank1_update(a, u, v), oracle.direct_det(a + np.outer(u, v))))
    return _below("rank-one determinant update", worst, 1e-10, f"{trials} random {dim}x{dim}")


def check_rankk(rng, trials: int = 100, dim: int = 8, k: int = 2) -> Check:
    worst = 0.0
    for _ in range(trials):
        a = random_matrix(rng, dim)
        u = rng.standard_normal((dim, k))
        worst = max(worst, _rel(oracle.det_rankk_update(a, u), oracle.direct_det(a + u @ u.T)))
    return _below("rank-k determinant update", worst, 1e-10, f"{trials} random {dim}x{dim}, k={k}")


def check_metric(rng, n_spins: int, energy: float, points: int = 20) -> list[Check]:
    spec = build_spin_spectrum(n_spins)
    target = FeeeTarget.build(spec, energy)
    worst_det = worst_phase = 0.0
    for _ in range(points):
        q = random_interior(target, rng)
        r = oracle.feee_metric_det(q, target)
        worst_det = max(worst_det, _rel(r["direct"], r["closed"]))
        worst_phase = max(worst_phase, _rel(r["with_phases"], r["bracket_form"]))
    n = spec.n_states
    return [
        _below(f"surface metric determinant, N={n}", worst_det, 1e-8, f"{points} interior points"),
        _below(f"metric times phase block equals bracket, N={n}", worst_phase, 1e-8),
    ]


def check_sphere_metric(rng, n_states: int = 8, points: int = 20) -> Check:
    worst = 0.0
    for _ in range(points):
        p = rng.dirichlet(np.ones(n_states))[:-1]
        r = oracle.rpse_metric_det(p)
        worst = max(worst, _rel(r["direct"], r["closed"]), _rel(r["total"], r["expected_total"]))
    return _below(f"sphere metric determinant, N={n_states}", worst, 1e-8)


def check_lagrange(rng, pairs: int = 20) -> list[Check]:
    spec = EnergySpectrum.from_levels([0, 1, 1, 2])
    sol = approx.solve_lagrange(spec, spec.e_star)
    at_star = max(abs(sol.lam - 4.0), abs(sol.mu))
    worst_res = worst_z = 0.0
    for _ in range(pairs):
        sp = random_spin_spectrum(rng)
        e = sp.e_max * rng.uniform(0.02, 0.98)
        s = approx.solve_lagrange(sp, e)
        r1, r2 = approx.constraint_residuals(sp, e, s.lam, s.mu)
        worst_res = max(worst_res, abs(r1), abs(r2))
        worst_z = max(worst_z, _rel(s.z, oracle.lagrange_scan(sp, e)))
    return [
        _below("multipliers at E* are (N, 0)", at_star, 1e-9, "spectrum (0,1,1,2)"),
        _below("constraint residuals", worst_res, 1e-10, f"{pairs} random spectra"),
        _below("bisection vs dense scan (relative, in z)", worst_z, 1e-10),
    ]


def check_second_form(rng, pairs: int = 20) -> list[Check]:
    worst_res = worst_eq = 0.0
    for _ in range(pairs):
        sp = random_spin_spectrum(rng)
        e_lim = min(sp.e_max, (sp.n_states - 1) / sp.constants.s0)
        e = e_lim * rng.uniform(0.05, 0.95)
        prm = approx.second_form_parameters(sp, e)
        res = approx.second_form_residuals(sp, e, **prm)
        worst_res = max(worst_res, float(np.max(np.abs(res))))
        worst_eq = max(worst_eq, abs(approx.mean_entropy_feee_II(sp, e)
                                     - approx.mean_entropy_feee_II_closed(sp, e)))
    return [
        _below("pinned-ground parameters solve the stationarity system", worst_res, 1e-12),
        _below("pinned-ground entropy: sum vs spectrum constants", worst_eq, 1e-12),
    ]


def check_simplex_entropy() -> Check:
    worst = max(abs(oracle.rpse_exact_mean_entropy(n) - oracle.rpse_mean_entropy_integral(n))
                for n in (2, 3, 4))
    return _below("harmonic-sum mean entropy vs simplex integral, N<=4", worst, 1e-7)


def check_quadrature() -> list[Check]:
    spec = EnergySpectrum.from_levels([0, 1, 1, 2])
    target = FeeeTarget.build(spec, 1.0)
    base = oracle.feee_marginal_quadrature(target, 0, 30)
    fine = oracle.feee_marginal_quadrature(target, 0, 30, resolution=840)
    m1 = oracle.feee_marginal_quadrature(target, 1, 30)
    m2 = oracle.feee_marginal_quadrature(target, 2, 30)
    # analytic: density of P_1 proportional to sqrt(2x)(1 - 2x) on [0, 1/2]
    x = base.edges
    prim = (2 / 3) * x ** 1.5 - (4 / 5) * x ** 2.5
    exact = np.diff(prim) / (prim[-1] - prim[0])
    return [
        _below("quadrature normalization", abs(base.probabilities.sum() - 1.0), 1e-6),
        _below("quadrature refinement (bin mass change)",
               float(np.max(np.abs(base.probabilities - fine.probabilities))), 1e-4),
        _below("degenerate-level symmetry of marginals",
               float(np.max(np.abs(m1.density - m2.density))), 1e-12),
        _below("quadrature vs analytic P_1 marginal (bin mass)",
               float(np.max(np.abs(base.probabilities - exact))), 1e-3),
    ]


def check_rejection_bound(rng, proposals: int = 1_000_000) -> Check:
    target = FeeeTarget.build(build_spin_spectrum(3), 1.0)
    s = oracle.RejectionSampler(target)
    ratio = 0.0
    accepted = 0
    done = 0
    while done < proposals:
        k = min(1 << 17, proposals - done)
        q = s._propose(k, rng)
        r = oracle._density_grid(target, q) / s.bound
        ratio = max(ratio, float(r.max()))
        accepted += int(np.count_nonzero(rng.random(k) < r))
        done += k
    ok = ratio <= 1.0 and accepted > 0
    return Check("rejection envelope never exceeded", ok, ratio, 1.0,
                 f"{proposals} proposals, acceptance {accepted / proposals:.3f}")


def check_rpse_ks(rng, samples: int = 100_000) -> list[Check]:
    out = []
    crit = 1.63 / math.sqrt(samples)
    for n in (2, 3, 4):
        p = sample_simplex_batch(2 ** n, samples, rng)
        d = stats.kstest(p[:, 0], lambda x: oracle.rpse_marginal_cdf(x, 2 ** n)).statistic
        out.append(_below(f"random-state marginal KS, n={n}", d, crit))
    return out


def check_rpse_entropy(rng, samples: int = 100_000) -> Check:
    worst = 0.0
    for n in range(2, 11):
        ent, _ = sample_entropies(2 ** n, samples, rng)
        s = RunningStats.of(ent)
        worst = max(worst, abs(s.mean - oracle.rpse_exact_mean_entropy(2 ** n)) / s.sem)
    return _below("random-state mean entropy vs exact (standard errors)", worst, 4.0, "n=2..10")


def check_variance_identity(rng, draws: int = 1_000_000, n_states: int = 16) -> Check:
    eta = approx.rpse_approx(n_states).sample(draws, rng).sum(axis=1)
    s = RunningStats.of(eta)
    var = s.variance
    # standard error of the sample variance from the fourth central moment
    m4 = float(np.mean((eta - s.mean) ** 4))
    se = math.sqrt(max(m4 - var * var, 0.0) / draws)
    return _below(f"variance of the summed surrogates, N={n_states} (standard errors)",
                  abs(var - 1.0 / n_states) / se, 3.0)


def marginal_tv(n_spins: int, energy: float, rng, samples: int = 100_000, bins: int = 30,
                burn_in: int = 20_000, thinning: int = 10, backend=None) -> dict:
    """Total variation between P_1 histograms of the independent samplers."""
    spec = build_spin_spectrum(n_spins)
    target = FeeeTarget.build(spec, energy)
    hi = float(oracle.surface_vertices(target)[:, 0].max())
    rej = oracle.feee_rejection_sample(target, samples, rng)
    cfg = ChainConfig(steps=burn_in + samples * thinning, burn_in=burn_in, thinning=thinning)
    chain = FeeeChain(target, cfg, rng, backend)
    mh = np.concatenate(list(chain.batches()))
    h_rej = Histogram(0.0, hi, bins).add(rej[:, 0])
    h_mh = Histogram(0.0, hi, bins).add(mh[:, 0])
    out = {"rejection_vs_mh": total_variation(h_rej.counts, h_mh.counts)}
    if spec.n_states == 4:
        quad = oracle.feee_marginal_quadrature(target, 0, bins, 0.0, hi).probabilities
        out["quadrature_vs_rejection"] = total_variation(quad, h_rej.counts)
        out["quadrature_vs_mh"] = total_variation(quad, h_mh.counts)
    return out


def check_three_way(rng, backend=None) -> list[Check]:
    out = []
    for n in (2, 3):
        for pair, tv in marginal_tv(n, 1.0, rng, backend=backend).items():
            out.append(_below(f"P_1 marginal TV {pair.replace('_', ' ')}, N={2 ** n}", tv, 0.05))
    return out


def check_approx_I_defect() -> Check:
    spec = build_spin_spectrum(10)
    sweep = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3)
    vals = [approx.mean_entropy_feee_I(spec, 10 * e) for e in sweep]
    low = min(vals)
    return Check("first approximation goes negative at small eps", low < 0, low, 0.0,
                 "n=10, eps in " + ", ".join(map(str, sweep)))


def run_checks(level: str = "quick", seed: int = 0, backend=None) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = [check_rank1(rng), check_rankk(rng)]
    checks += check_metric(rng, 2, 1.0)
    checks += check_metric(rng, 3, 1.3)
    checks.append(check_sphere_metric(rng))
    checks += check_lagrange(rng)
    checks += check_second_form(rng)
    checks.append(check_simplex_entropy())
    checks += check_quadrature()
    checks.append(check_approx_I_defect())
    if level == "full":
        checks.append(check_rejection_bound(rng))
        checks += check_rpse_ks(rng)
        checks.append(check_rpse_entropy(rng))
        checks.append(check_variance_identity(rng))
        checks += check_three_way(rng, backend)
    return checks
