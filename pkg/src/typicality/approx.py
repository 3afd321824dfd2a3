"""Maximum-entropy (minimum-information) approximations to the ensembles.

Populations are replaced by independent surrogates eta_k >= 0 whose *means*
satisfy the constraints.  The resulting laws are products of exponentials:

* random pure states: every eta_k has rate N;
* fixed energy, first form: rate lambda + mu*E_k, with (lambda, mu) fixed by
  sum 1/(lambda + mu E_k) = 1 and sum E_k/(lambda + mu E_k) = E;
* fixed energy, second form: eta_1 pinned at a_1 = 1 - E/(N-1) * S0 and rate
  (N-1) E_k / E for the excited states (lambda = 0, mu = (N-1)/E).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, NumericError, RegimeError
from .spectrum import EnergySpectrum

EULER_GAMMA = 0.57721566490153286061
#: relative distance from E* treated as E = E*
ESTAR_TOL = 1e-14
RESIDUAL_TOL = 1e-10


class Branch(str, Enum):
    BELOW = "below_estar"
    AT = "at_estar"
    ABOVE = "above_estar"


class Kind(str, Enum):
    RPSE = "RPSE"
    FEEE_I = "FEEE_I"
    FEEE_II = "FEEE_II"


@dataclass(frozen=True)
class LagrangeSolution:
    lam: float
    mu: float
    residual_norm: float
    branch: Branch
    z: float = math.inf

    def rates_for(self, spec: EnergySpectrum) -> np.ndarray:
        return self.lam + self.mu * spec.eigenvalues


@dataclass(frozen=True, eq=False)
class ApproxDistribution:
    kind: Kind
    rates: np.ndarray
    ground_delta: float | None = None

    @property
    def means(self) -> np.ndarray:
        m = 1.0 / self.rates
        if self.ground_delta is not None:
            m = m.copy()
            m[0] = self.ground_delta
        return m

    def pdf(self, k: int, eta) -> np.ndarray:
        """Density of eta_k (the pinned ground variable has no density)."""
        if self.ground_delta is not None and k == 0:
            raise ValueError("eta_1 is a point mass under the second approximation")
        r = self.rates[k]
        eta = np.asarray(eta, dtype=float)
        return np.where(eta >= 0, r * np.exp(-r * eta), 0.0)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        eta = rng.standard_exponential((count, self.rates.size)) / self.rates
        if self.ground_delta is not None:
            eta[:, 0] = self.ground_delta
        return eta


def _check_energy(spec: EnergySpectrum, energy: float) -> None:
    if not (0.0 < energy < spec.e_max):
        raise DomainError(f"energy {energy!r} outside (0, {spec.e_max!r})")


def _moments(z: float, e: np.ndarray) -> tuple[float, float]:
    w = 1.0 / (z + e)
    return float(w.sum()), float(np.dot(e, w))


def _bisect(f, lo: float, hi: float) -> float:
    """Bisect an increasing `f` with f(lo) < 0 < f(hi) to floating resolution."""
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def constraint_residuals(spec: EnergySpectrum, energy: float, lam: float, mu: float) -> tuple[float, float]:
    r = lam + mu * spec.eigenvalues
    return float(np.sum(1.0 / r) - 1.0), float(np.sum(spec.eigenvalues / r) - energy)


def solve_lagrange(spec: EnergySpectrum, energy: float) -> LagrangeSolution:
    """Multipliers of the first fixed-energy approximation.

    With z = lambda/mu the pair reduces to mu = sum 1/(z + E_k) and
    g(z) = sum E_k/(z + E_k) / sum 1/(z + E_k) = E, which is increasing in z
    on (0, inf) (values from 0 up to E*) and on (-inf, -E_N) (values from
    E* up to E_N).  Each branch is bisected after bracket expansion.
    """
    _check_energy(spec, energy)
    e = spec.eigenvalues
    n = e.size
    e_star = spec.e_star
    if abs(energy - e_star) <= ESTAR_TOL * max(e_star, 1.0):
        return LagrangeSolution(float(n), 0.0, 0.0, Branch.AT)

    def g(z):
        s0, s1 = _moments(z, e)
        return s1 / s0

    if energy < e_star:
        lo, hi = 1e-6, 10.0 * spec.e_max
        for _ in range(400):
            if g(lo) < energy:
                break
            lo /= 4.0
        else:
            raise NumericError("could not bracket the Lagrange root from below")
        for _ in range(400):
            if g(hi) > energy:
                break
            hi *= 4.0
        else:
            raise NumericError("could not bracket the Lagrange root from above")
        # g is increasing in log z as well; bisecting there keeps relative precision
        t = _bisect(lambda s: g(math.exp(s)) - energy, math.log(lo), math.log(hi))
        z = math.exp(t)
        branch = Branch.BELOW
    else:
        # z = -E_N - 1/w, w in (0, inf); g increases with w
        top = spec.e_max
        if np.count_nonzero(e == top) == n:
            raise DomainError("flat spectrum")

        def gw(w):
            return g(-top - 1.0 / w)

        lo, hi = 1e-6 / max(top, 1.0), 10.0
        for _ in range(400):
            if gw(lo) < energy:
                break
            lo /= 4.0
        else:
            raise NumericError("could not bracket the Lagrange root from below")
        for _ in range(400):
            if gw(hi) > energy:
                break
            hi *= 4.0
        else:
            raise NumericError("could not bracket the Lagrange root from above")
        t = _bisect(lambda s: gw(math.exp(s)) - energy, math.log(lo), math.log(hi))
        z = -top - math.exp(-t)
        branch = Branch.ABOVE

    mu = _moments(z, e)[0]
    lam = z * mu
    r1, r2 = constraint_residuals(spec, energy, lam, mu)
    res = max(abs(r1), abs(r2))
    if not np.all(lam + mu * e > 0):
        raise NumericError("multipliers give a non-positive rate")
    if res >= RESIDUAL_TOL:
        raise NumericError(f"Lagrange residual {res:.3g} above {RESIDUAL_TOL}")
    return LagrangeSolution(lam, mu, res, branch, z)


def rpse_approx(n_states: int) -> ApproxDistribution:
    if n_states < 1:
        raise DomainError("need at least one state")
    return ApproxDistribution(Kind.RPSE, np.full(n_states, float(n_states)))


def feee_approx_I(spec: EnergySpectrum, energy: float,
                  solution: LagrangeSolution | None = None) -> ApproxDistribution:
    sol = solution if solution is not None else solve_lagrange(spec, energy)
    return ApproxDistribution(Kind.FEEE_I, sol.rates_for(spec))


def second_form_parameters(spec: EnergySpectrum, energy: float) -> dict:
    """lambda, mu, a_1, 1/a_2 of the pinned-ground approximation."""
    if not energy > 0:
        raise DomainError("energy must be positive")
    n = spec.n_states
    s0 = spec.constants.s0
    a1 = 1.0 - energy / (n - 1) * s0
    return {"lam": 0.0, "mu": (n - 1) / energy, "a1": a1, "inv_a2": 0.0}


def feee_approx_II(spec: EnergySpectrum, energy: float) -> ApproxDistribution:
    prm = second_form_parameters(spec, energy)
    a1 = prm["a1"]
    if a1 < 0:
        raise RegimeError(f"a_1 = {a1:.6g} < 0: the pinned-ground approximation "
                          "does not apply at this energy")
    e = spec.eigenvalues
    rates = np.empty(e.size)
    rates[0] = math.inf
    rates[1:] = prm["mu"] * e[1:]
    return ApproxDistribution(Kind.FEEE_II, rates, ground_delta=a1)


def second_form_residuals(spec: EnergySpectrum, energy: float, lam: float, mu: float,
                          a1: float, inv_a2: float) -> np.ndarray:
    """Residuals of the stationarity system at the given parameters.

    Entries: mean normalization, mean energy (both with eta_1 pinned at a1),
    d/da_1 and d/da_2 of the ground-variable part of the Lagrangian.
    """
    e = spec.eigenvalues
    r = lam + mu * e[1:]
    norm = a1 + np.sum(1.0 / r) - 1.0
    ener = e[0] * a1 + np.sum(e[1:] / r) - energy
    d_a1 = -(lam + mu * e[0])
    d_a2 = 0.5 * inv_a2
    return np.array([norm, ener, d_a1, d_a2])


def mean_entropy_rpse(n_states: int) -> float:
    return math.log(n_states) - (1.0 - EULER_GAMMA)


def entropy_rel_width_rpse(n_states: int) -> float:
    if n_states < 2:
        raise DomainError("need N >= 2")
    return 1.0 / math.sqrt(n_states)


def _entropy_from_rates(r: np.ndarray) -> float:
    return float(np.sum(np.log(r) / r)) - (1.0 - EULER_GAMMA)


def mean_entropy_feee_I(spec: EnergySpectrum, energy: float,
                        solution: LagrangeSolution | None = None) -> float:
    sol = solution if solution is not None else solve_lagrange(spec, energy)
    return _entropy_from_rates(sol.rates_for(spec))


def _xlogx(x: float) -> float:
    return x * math.log(x) if x > 0 else 0.0


def mean_entropy_feee_II(spec: EnergySpectrum, energy: float) -> float:
    """Mean entropy under the pinned-ground law, summed term by term."""
    dist = feee_approx_II(spec, energy)
    m = dist.means
    return float(-sum(_xlogx(float(x)) for x in m) - (1.0 - EULER_GAMMA) * (1.0 - m[0]))


def mean_entropy_feee_II_closed(spec: EnergySpectrum, energy: float,
                                scale: str = "exact") -> float:
    """Same quantity through the spectrum constants S0 and F0.

    With ``scale="exact"`` the per-state energy is e = E/(N-1), the value for
    which this form equals the term-by-term sum.  ``scale="per_state"`` uses
    e = E/N, which differs at O(1/N) and is kept for comparison.
    """
    feee_approx_II(spec, energy)  # regime check
    c = spec.constants
    if scale == "exact":
        e = energy / (spec.n_states - 1)
    elif scale == "per_state":
        e = energy / spec.n_states
    else:
        raise ValueError(f"unknown scale {scale!r}")
    x = e * c.s0
    return -_xlogx(1.0 - x) - x * math.log(e) + e * c.f0 - (1.0 - EULER_GAMMA) * x
