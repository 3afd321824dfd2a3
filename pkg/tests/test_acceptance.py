"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a PASS/FAIL line (also repeated in the terminal summary).
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from typicality import approx, oracle, validation
from typicality.feee import ChainConfig, FeeeChain, FeeeTarget
from typicality.observables import Histogram, RunningStats, gaussian_fit, shannon_entropy_rows
from typicality.rpse import sample_entropies, sample_simplex_batch
from typicality.spectrum import build_spin_spectrum


def report(number, passed, text):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {text}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def report_checks(number, checks):
    ok = all(c.passed for c in checks)
    worst = "; ".join(f"{c.name} {c.measured:.3g} < {c.tolerance:g}" for c in checks)
    report(number, ok, worst)
    return ok


def feee_rows(n_spins, eps, samples, thinning, seed, burn_in=None):
    spec = build_spin_spectrum(n_spins)
    target = FeeeTarget.build(spec, eps * n_spins)
    cfg = ChainConfig(steps=0, burn_in=burn_in, thinning=thinning)
    cfg.steps = cfg.resolved_burn_in(spec.n_states) + samples * thinning
    chain = FeeeChain(target, cfg, np.random.default_rng(seed))
    return np.concatenate(list(chain.batches()))


_CHAINS = {}


def cached_feee(n_spins, eps, samples, thinning, seed):
    key = (n_spins, eps, samples, thinning, seed)
    if key not in _CHAINS:
        _CHAINS[key] = feee_rows(*key)
    return _CHAINS[key]


# --- 1 --------------------------------------------------------------------------

def test_criterion_1_rpse_marginal_law():
    crit = 1.63 / math.sqrt(1e5)
    rng = np.random.default_rng(101)
    parts, ok = [], True
    for n in (2, 3, 4):
        t0 = time.perf_counter()
        p = sample_simplex_batch(2 ** n, 100_000, rng)
        d = stats.kstest(p[:, 0], lambda x: oracle.rpse_marginal_cdf(x, 2 ** n)).statistic
        dt = time.perf_counter() - t0
        ok &= d < crit and dt < 10
        parts.append(f"n={n} KS {d:.4f} ({dt:.2f} s)")
    report(1, ok, ", ".join(parts) + f"; critical {crit:.4f}, 10 s")
    assert ok


# --- 2 --------------------------------------------------------------------------

def test_criterion_2_rpse_mean_entropy():
    rng = np.random.default_rng(102)
    worst_se = worst_gap = 0.0
    ok = True
    for n in range(2, 11):
        N = 2 ** n
        ent, _ = sample_entropies(N, 100_000, rng)
        s = RunningStats.of(ent)
        exact = oracle.rpse_exact_mean_entropy(N)
        z = abs(s.mean - exact) / s.sem
        gap = abs(approx.mean_entropy_rpse(N) - exact)
        ok &= z < 4 and gap < 1 / N + 1e-3
        worst_se = max(worst_se, z)
        worst_gap = max(worst_gap, gap * N)
    report(2, ok, f"max |MC - exact| {worst_se:.2f} SE (< 4); "
                  f"max N*|closed - exact| {worst_gap:.3f} (< 1 + N*1e-3)")
    assert ok


# --- 3 --------------------------------------------------------------------------

def _entropy_spread(n, rng):
    ent, _ = sample_entropies(2 ** n, 10_000, rng)
    s = RunningStats.of(ent)
    return s.std, s.std / s.mean


@pytest.fixture(scope="module")
def entropy_spreads():
    rng = np.random.default_rng(103)
    return {n: _entropy_spread(n, rng) for n in (11, 13, 15)}


def test_criterion_3_monotone_width(entropy_spreads):
    sig = [entropy_spreads[n][0] for n in (11, 13, 15)]
    ok = sig[0] > sig[1] > sig[2]
    report("3b", ok, "sigma_S at n=11,13,15: " + ", ".join(f"{s:.5f}" for s in sig) + " (decreasing)")
    assert ok


@pytest.mark.xfail(strict=True, reason="the exact width ratio is 0.419, outside 15% of 1/2")
def test_criterion_3_width_ratio(entropy_spreads):
    ratio = entropy_spreads[13][1] / entropy_spreads[11][1]
    exact = (oracle.rpse_entropy_std_asymptotic(2 ** 13) / oracle.rpse_exact_mean_entropy(2 ** 13)) / (
        oracle.rpse_entropy_std_asymptotic(2 ** 11) / oracle.rpse_exact_mean_entropy(2 ** 11))
    ok = abs(ratio / 0.5 - 1) < 0.15
    report("3a", ok, f"(sigma/mean)(2^13) / (sigma/mean)(2^11) = {ratio:.4f}, "
                     f"target 0.5 +- 15%; exact asymptotic value {exact:.4f}")
    assert ok


# --- 4 --------------------------------------------------------------------------

def test_criterion_4_lagrange():
    assert report_checks(4, validation.check_lagrange(np.random.default_rng(104)))


# --- 5 --------------------------------------------------------------------------

def test_criterion_5_three_way_agreement():
    rng = np.random.default_rng(105)
    t0 = time.perf_counter()
    tv = {f"N=4 {k}": v for k, v in validation.marginal_tv(2, 1.0, rng).items()}
    tv.update({f"N=8 {k}": v for k, v in validation.marginal_tv(3, 1.0, rng).items()})
    dt = time.perf_counter() - t0
    ok = max(tv.values()) < 0.05 and dt < 120
    report(5, ok, ", ".join(f"{k} {v:.4f}" for k, v in tv.items()) + f" (< 0.05, {dt:.0f} s)")
    assert ok


# --- 6 --------------------------------------------------------------------------

def _batch_counts(values, edges, batches=20):
    """Bin counts and their standard errors by batch means, so the
    autocorrelation of the chain is reflected in the error bars."""
    per = np.array([np.histogram(b, bins=edges)[0] for b in np.array_split(values, batches)])
    return per.sum(axis=0), np.sqrt(batches) * per.std(axis=0, ddof=1)


def _decreasing(values, edges):
    """First bin holds the most and no later bin rises above its
    predecessor by more than three standard errors of the difference."""
    c, se = _batch_counts(values, edges)
    rises = c[1:] - c[:-1] - 3 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    return bool(np.argmax(c) == 0 and np.all(rises <= 0))


def _interior_mode(values, edges):
    c, se = _batch_counts(values, edges)
    k = int(np.argmax(c))
    end = 0 if c[0] >= c[-1] else -1
    return 0 < k < len(c) - 1 and c[k] - c[end] > 3 * math.sqrt(se[k] ** 2 + se[end] ** 2)


def _entropy_sigma(rows):
    ent = shannon_entropy_rows(rows)
    return gaussian_fit(Histogram(ent.min(), ent.max() + 1e-12, 50).add(ent))["sigma"]


def test_criterion_6_feee_shapes():
    spec = build_spin_spectrum(6)
    rows = cached_feee(6, 0.2, 200_000, 10, 106)
    means = approx.feee_approx_I(spec, 0.2 * 6).means
    shapes = {}
    for k in (2, 43):
        edges = np.linspace(0.0, 6 * means[k - 1], 31)
        shapes[f"P_{k}"] = _decreasing(rows[:, k - 1], edges)
    low = cached_feee(6, 0.1, 200_000, 10, 107)
    shapes["P_1 mode (eps=0.1)"] = _interior_mode(low[:, 0], np.linspace(0.0, 1.0, 41))
    sig6 = _entropy_sigma(rows)
    # same chain as the eps = 0.2 point of criterion 7
    sig10 = _entropy_sigma(cached_feee(10, 0.2, 20_000, 50, 202))
    ok = all(shapes.values()) and sig10 < sig6
    text = ", ".join(f"{k} {'ok' if v else 'no'}" for k, v in shapes.items())
    report(6, ok, f"{text}; entropy sigma n=6 {sig6:.4f} > n=10 {sig10:.4f} at eps 0.2")
    assert ok


# --- 7 --------------------------------------------------------------------------

def test_criterion_7_second_approximation():
    spec = build_spin_spectrum(10)
    worst, parts = 0.0, []
    for i, eps in enumerate((0.05, 0.1, 0.2, 0.3)):
        rows = cached_feee(10, eps, 20_000, 50, 200 + i)
        mc = float(shannon_entropy_rows(rows).mean())
        pred = approx.mean_entropy_feee_II(spec, 10 * eps)
        rel = abs(pred - mc) / mc
        worst = max(worst, rel)
        parts.append(f"eps {eps}: MC {mc:.4f} vs {pred:.4f}")
    defect = validation.check_approx_I_defect()
    ok = worst < 0.05 and defect.passed
    report(7, ok, "; ".join(parts) + f"; worst {worst:.3%} (< 5%); "
                  f"first approximation minimum {defect.measured:.4f} (< 0)")
    assert ok


# --- 8, 9, 10 -----------------------------------------------------------------------

def test_criterion_8_determinant_identities():
    rng = np.random.default_rng(108)
    checks = [validation.check_rank1(rng), validation.check_rankk(rng)]
    checks += validation.check_metric(rng, 2, 1.0)
    checks += validation.check_metric(rng, 3, 1.3)
    assert report_checks(8, checks)


def test_criterion_9_second_form_closed_form():
    assert report_checks(9, validation.check_second_form(np.random.default_rng(109)))


def test_criterion_10_variance_identity():
    assert report_checks(10, [validation.check_variance_identity(np.random.default_rng(110))])


# --- 11 -----------------------------------------------------------------------

RUNS = [
    ["spectrum", "--spins", "3"],
    ["sample-rpse", "--spins", "5", "--samples", "20000", "--seed", "3", "--save-samples"],
    ["sample-rpse", "--spins", "5", "--samples", "20000", "--seed", "3", "--chains", "4"],
    ["sample-feee", "--spins", "4", "--eps", "0.2", "--samples", "5000", "--seed", "3", "--save-samples"],
    ["sample-feee", "--spins", "4", "--eps", "0.2", "--samples", "5000", "--seed", "3", "--chains", "3"],
    ["approx", "--spins", "6", "--eps", "0.05,0.1,0.2,0.3"],
]


def test_criterion_11_determinism(tmp_path):
    same = []
    for i, args in enumerate(RUNS):
        outputs = []
        for rep in range(2):
            out = tmp_path / f"run{i}_{rep}"
            res = subprocess.run([sys.executable, "-m", "typicality", *args, "--out-dir", str(out)],
                                 capture_output=True)
            assert res.returncode == 0, res.stderr
            files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
            outputs.append((res.stdout, files))
        same.append(outputs[0] == outputs[1])
        assert json.loads(outputs[0][0])["command"] == args[0]
    ok = all(same)
    report(11, ok, f"{sum(same)}/{len(same)} CLI runs byte-identical on rerun (stdout and every file)")
    assert ok
