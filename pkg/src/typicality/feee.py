"""Fixed-expectation-energy ensemble: geometric density and a random-walk sampler.

Two populations are eliminated through the constraints sum P = 1 and
sum P E = E.  Calling them ``lo`` and ``hi`` (E_hi > E_lo) and writing q for
the remaining free populations,

    P_hi = b + sum_j a_j q_j
    P_lo = 1 - b - sum_j (1 + a_j) q_j
    a_j  = (E_lo - E_j) / (E_hi - E_lo),   b = (E - E_lo) / (E_hi - E_lo)

and the surface density (unnormalized) is

    sqrt(b - b**2 + sum_j a_j (1 + a_j) q_j)

on the set where every population is non-negative.  The bracket equals
(sum_k P_k E_k**2 - E**2) / (E_hi - E_lo)**2, so switching to another
eliminated pair only rescales the density by a constant; the law of P does
not depend on the choice.

The default pair for `FeeeTarget.build` is the top level and the next lower
one.  The sampler defaults to eliminating the ground state and a
first-excited state instead (``eliminate="ground"``): with the top pair,
every proposal has to keep the tiny top-level populations non-negative and
the usable step size collapses as N grows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import _backend
from .approx import solve_lagrange
from .errors import ConsistencyFault, DomainError, InitializationError, UsageError
from .rpse import PopulationVector
from .spectrum import EnergySpectrum

log = logging.getLogger(__name__)

#: in-domain brackets down to -BRACKET_TOL are round-off and read as zero density
BRACKET_TOL = 1e-12


class OutOfDomain(DomainError):
    """Free populations whose reconstruction has a negative entry."""


def _last_index(e: np.ndarray, mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[-1])


@dataclass(frozen=True, eq=False)
class FeeeTarget:
    spectrum: EnergySpectrum
    energy: float
    a: np.ndarray
    b: float
    free: np.ndarray
    lo: int
    hi: int

    @classmethod
    def build(cls, spectrum: EnergySpectrum, energy: float, eliminate="top") -> "FeeeTarget":
        """Target at expectation energy `energy`.

        `eliminate` is ``"top"`` (last state of the highest level and last
        state of the next lower level), ``"ground"`` (ground state and last
        state of the first excited level) or an explicit ``(lo, hi)`` pair of
        0-based indices with E_hi > E_lo.
        """
        e = spectrum.eigenvalues
        energy = float(energy)
        if not (0.0 < energy < spectrum.e_max):
            raise DomainError(f"energy {energy!r} must lie in (0, {spectrum.e_max!r})")
        if eliminate == "top":
            hi = e.size - 1
            below = e < e[hi]
            if not below.any():
                raise DomainError("flat spectrum has no fixed-energy surface")
            lo = _last_index(e, below)
        elif eliminate == "ground":
            lo = 0
            above = e > e[0]
            if not above.any():
                raise DomainError("flat spectrum has no fixed-energy surface")
            first = e[above][0]
            hi = _last_index(e, e == first)
        else:
            lo, hi = (int(i) for i in eliminate)
        if lo == hi or not (0 <= lo < e.size and 0 <= hi < e.size):
            raise DomainError(f"bad eliminated pair {(lo, hi)}")
        gap = e[hi] - e[lo]
        if not gap > 0:
            raise DomainError("eliminated pair needs E_hi > E_lo")
        free = np.array([k for k in range(e.size) if k not in (lo, hi)], dtype=np.intp)
        a = (e[lo] - e[free]) / gap
        b = (energy - e[lo]) / gap
        a.setflags(write=False)
        free.setflags(write=False)
        return cls(spectrum, energy, a, b, free, lo, hi)

    @property
    def n_states(self) -> int:
        return self.spectrum.n_states

    @property
    def n_free(self) -> int:
        return self.free.size

    @property
    def curvature(self) -> np.ndarray:
        """a_j (1 + a_j), the coefficients of q in the bracket."""
        return self.a * (1.0 + self.a)

    def rechart(self, eliminate) -> "FeeeTarget":
        return FeeeTarget.build(self.spectrum, self.energy, eliminate)

    def fill(self, q) -> np.ndarray:
        """Full population vector for free populations `q` (no domain check)."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_free,):
            raise DomainError(f"expected {self.n_free} free populations, got {q.shape}")
        p = np.empty(self.n_states)
        p[self.free] = q
        p[self.hi] = self.b + np.dot(self.a, q)
        p[self.lo] = 1.0 - self.b - np.dot(1.0 + self.a, q)
        return p

    def free_part(self, p) -> np.ndarray:
        return np.asarray(p, dtype=float)[self.free]


def reconstruct(q, target: FeeeTarget) -> PopulationVector:
    p = target.fill(q)
    if np.any(p < 0):
        raise OutOfDomain("reconstructed populations are negative")
    return PopulationVector(np.minimum(p, 1.0))


def in_domain(q, target: FeeeTarget) -> bool:
    return bool(np.all(target.fill(q) >= 0))


def bracket(q, target: FeeeTarget) -> float:
    q = np.asarray(q, dtype=float)
    return target.b - target.b * target.b + float(np.dot(target.curvature, q))


def feee_density(q, target: FeeeTarget) -> float:
    """Unnormalized surface density (normalization constant set to 1)."""
    if not in_domain(q, target):
        return 0.0
    br = bracket(q, target)
    if br < -BRACKET_TOL:
        raise ConsistencyFault(f"negative bracket {br!r} inside the domain")
    return math.sqrt(br) if br > 0 else 0.0


def energy_variance(p, spectrum: EnergySpectrum) -> float:
    """sum P_k E_k**2 - (sum P_k E_k)**2 of a population vector."""
    p = np.asarray(p, dtype=float)
    e = spectrum.eigenvalues
    mean = float(np.dot(p, e))
    return float(np.dot(p, e * e)) - mean * mean


@dataclass
class ChainConfig:
    steps: int
    burn_in: int | None = None
    thinning: int = 10
    proposal_scale: float = 0.5
    adapt: bool = True
    adapt_window: int = 500
    accept_band: tuple[float, float] = (0.2, 0.5)
    eliminate: object = "ground"

    @classmethod
    def for_samples(cls, samples: int, **kw) -> "ChainConfig":
        """Config whose run keeps exactly `samples` states after burn-in.

        Needs an explicit `burn_in` (the default depends on N).
        """
        thinning = kw.get("thinning", cls.thinning)
        burn_in = kw.get("burn_in")
        if burn_in is None:
            raise UsageError("for_samples needs burn_in")
        return cls(steps=burn_in + samples * thinning, **kw)

    def resolved_burn_in(self, n_states: int) -> int:
        if self.burn_in is not None:
            return self.burn_in
        return default_burn_in(n_states)

    def validate(self, n_states: int) -> None:
        burn = self.resolved_burn_in(n_states)
        if burn < 0 or self.steps < 0:
            raise UsageError("steps and burn_in must be non-negative")
        if self.thinning < 1:
            raise UsageError("thinning must be at least 1")
        if not self.proposal_scale > 0:
            raise UsageError("proposal_scale must be positive")
        if self.adapt_window < 1:
            raise UsageError("adapt_window must be positive")


def default_burn_in(n_states: int) -> int:
    """At least 10 (N - 2) steps; large N gets the longer relaxation the
    random walk needs once the step scale shrinks like 1/N."""
    return max(10 * (n_states - 2), 20 * n_states * int(math.ceil(math.log2(max(n_states, 2)))))


@dataclass
class ChainState:
    current: np.ndarray
    density_value: float
    step_index: int = 0
    accepted_count: int = 0
    proposal_scale: float = 0.5
    base_sd: np.ndarray = field(default=None, repr=False)

    @property
    def proposal_sd(self) -> np.ndarray:
        return self.proposal_scale * self.base_sd

    @property
    def bracket(self) -> float:
        return self.density_value ** 2

    def copy(self) -> "ChainState":
        return replace(self, current=self.current.copy())


def proposal_sd_base(target: FeeeTarget) -> np.ndarray:
    """Mean free populations under the first max-entropy approximation."""
    sol = solve_lagrange(target.spectrum, target.energy)
    return 1.0 / sol.rates_for(target.spectrum)[target.free]


def feasible_anchor(target: FeeeTarget) -> np.ndarray:
    """Strictly positive point on the surface: uniform populations mixed
    with the ground state (E < E*) or the top state (E >= E*)."""
    spec = target.spectrum
    n = spec.n_states
    u = np.full(n, 1.0 / n)
    e_star = spec.e_star
    if target.energy < e_star:
        t = target.energy / e_star
        p = t * u
        p[0] += 1.0 - t
    else:
        t = (spec.e_max - target.energy) / (spec.e_max - e_star)
        p = t * u
        p[-1] += 1.0 - t
    return p


def initial_state(target: FeeeTarget, scale: float = 0.5) -> ChainState:
    """Start at the first-approximation mean populations, pulled toward
    `feasible_anchor` by bisection if that point has zero density."""
    sol = solve_lagrange(target.spectrum, target.energy)
    means = 1.0 / sol.rates_for(target.spectrum)
    anchor = feasible_anchor(target)
    base_sd = means[target.free].copy()

    def density_at(p):
        return feee_density(p[target.free], target)

    start = means
    if density_at(start) <= 0:
        lo_t, hi_t = 0.0, 1.0  # fraction of the way toward the anchor
        if density_at(anchor) <= 0:
            raise InitializationError("no interior starting point found")
        for _ in range(60):
            mid = 0.5 * (lo_t + hi_t)
            if density_at((1 - mid) * means + mid * anchor) > 0:
                hi_t = mid
            else:
                lo_t = mid
        start = (1 - hi_t) * means + hi_t * anchor
    q = start[target.free]
    p = target.fill(q)
    dens = feee_density(q, target)
    if not dens > 0:
        raise InitializationError("starting point has zero density")
    return ChainState(p, dens, proposal_scale=scale, base_sd=base_sd)


def propose(state: ChainState, target: FeeeTarget, rng: np.random.Generator) -> np.ndarray:
    """q + Z with Z ~ N(0, diag(proposal_sd**2))."""
    z = rng.standard_normal(target.n_free)
    return state.current[target.free] + state.proposal_sd * z


def _advance(state: ChainState, target: FeeeTarget, rng, n_steps: int, thin: int,
             out: np.ndarray | None, kernels) -> tuple[int, int]:
    if out is None:
        out = np.empty((0, target.n_states))
    acc, br, written, fault = kernels.mh_advance(
        rng, state.current, target.free, target.lo, target.hi,
        np.ascontiguousarray(target.a), np.ascontiguousarray(target.curvature),
        np.ascontiguousarray(state.base_sd), float(state.proposal_scale), float(target.b),
        float(state.bracket), int(n_steps), int(thin), out, BRACKET_TOL)
    if fault:
        raise ConsistencyFault("negative bracket inside the domain during sampling")
    state.step_index += n_steps
    state.accepted_count += acc
    state.density_value = math.sqrt(br)
    return acc, written


def mh_step(state: ChainState, target: FeeeTarget, rng: np.random.Generator,
            backend: str | None = None) -> ChainState:
    """One Metropolis-Hastings step; returns the updated copy of `state`."""
    new = state.copy()
    _advance(new, target, rng, 1, 0, None, _backend.get(backend))
    return new


class FeeeChain:
    """Single random-walk chain with burn-in adaptation of the proposal scale."""

    def __init__(self, target: FeeeTarget, config: ChainConfig, rng: np.random.Generator,
                 backend: str | None = None):
        config.validate(target.n_states)
        if config.eliminate is not None and not _same_chart(target, config.eliminate):
            target = target.rechart(config.eliminate)
        self.target = target
        self.config = config
        self.rng = rng
        self.kernels = _backend.get(backend)
        self.burn_in = config.resolved_burn_in(target.n_states)
        self.state = initial_state(target, config.proposal_scale)
        self.burn_in_accepted = 0
        self.sampled_steps = 0
        self.sampled_accepted = 0
        self._burned = False

    @property
    def n_kept(self) -> int:
        return max(0, self.config.steps - self.burn_in) // self.config.thinning

    def run_burn_in(self) -> None:
        if self._burned:
            return
        cfg = self.config
        steps = min(self.burn_in, cfg.steps)
        if cfg.adapt:
            lo, hi = cfg.accept_band
            done = 0
            while done < steps:
                n = min(cfg.adapt_window, steps - done)
                acc, _ = _advance(self.state, self.target, self.rng, n, 0, None, self.kernels)
                self.burn_in_accepted += acc
                done += n
                if n == cfg.adapt_window:
                    rate = acc / n
                    if rate < lo:
                        self.state.proposal_scale *= 0.5
                    elif rate > hi:
                        self.state.proposal_scale *= 2.0
        elif steps:
            acc, _ = _advance(self.state, self.target, self.rng, steps, 0, None, self.kernels)
            self.burn_in_accepted += acc
        self._burned = True

    def batches(self, batch: int = 4096) -> Iterator[np.ndarray]:
        """Kept population vectors, `batch` rows at a time."""
        self.run_burn_in()
        thin = self.config.thinning
        remaining = self.n_kept
        buf = np.empty((min(batch, max(remaining, 1)), self.target.n_states))
        while remaining > 0:
            k = min(batch, remaining)
            acc, written = _advance(self.state, self.target, self.rng, k * thin, thin,
                                    buf[:k], self.kernels)
            self.sampled_steps += k * thin
            self.sampled_accepted += acc
            remaining -= written
            yield buf[:written].copy()

    @property
    def acceptance_rate(self) -> float:
        if self.sampled_steps == 0:
            return math.nan
        return self.sampled_accepted / self.sampled_steps

    def summary(self) -> dict:
        return {
            "acceptance_rate": self.acceptance_rate,
            "burn_in": self.burn_in,
            "burn_in_acceptance": self.burn_in_accepted / self.burn_in if self.burn_in else math.nan,
            "proposal_scale": self.state.proposal_scale,
            "thinning": self.config.thinning,
            "kept": self.n_kept,
            "eliminated": [int(self.target.lo), int(self.target.hi)],
        }


def _same_chart(target: FeeeTarget, eliminate) -> bool:
    other = target.rechart(eliminate)
    return (other.lo, other.hi) == (target.lo, target.hi)


def run_chain(target: FeeeTarget, config: ChainConfig, rng: np.random.Generator,
              backend: str | None = None) -> Iterator[np.ndarray]:
    """Stream of kept population vectors (one array of length N each)."""
    chain = FeeeChain(target, config, rng, backend)
    for rows in chain.batches():
        yield from rows
