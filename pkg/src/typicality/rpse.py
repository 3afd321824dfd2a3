"""Random pure states: uniform populations on the simplex plus uniform phases.

Populations come from the sequential power transform of N - 1 uniforms
xi in (0, 1]:

    P_1 = 1 - xi_1**(1/(N-1))
    P_J = (1 - xi_J**(1/(N-J))) * prod_{i<J} xi_i**(1/(N-i))
    P_N = prod_{i<N} xi_i**(1/(N-i))

which is exact for the density (N-1)! on the simplex.  The products are
carried as running sums of logarithms, so P_N does not underflow at large N.

Seed-to-sample mapping: a ``numpy.random.Generator`` supplies ``u`` via
``Generator.random`` (N - 1 draws per state, in index order) and
``xi = 1 - u``; since ``u`` lies in [0, 1), ``xi`` never hits zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DimensionError, UsageError

TWO_PI = 2.0 * math.pi
NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PopulationVector:
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise DimensionError("populations must be a non-empty 1-d array")
        if np.any(p < 0) or np.any(p > 1):
            raise UsageError("populations must lie in [0, 1]")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise UsageError(f"populations sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def __len__(self):
        return self.p.size

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)


@dataclass(frozen=True, eq=False)
class PureState:
    populations: PopulationVector
    phases: np.ndarray

    @property
    def amplitudes(self) -> np.ndarray:
        return np.sqrt(self.populations.p) * np.exp(1j * self.phases)


def populations_from_uniforms(xi) -> np.ndarray:
    """Apply the power transform to explicit draws ``xi`` in (0, 1]."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0) or np.any(xi > 1):
        raise UsageError("transform inputs must lie in (0, 1]")
    n = xi.size + 1
    t = np.log(xi) / np.arange(n - 1, 0, -1, dtype=float)
    logprod = np.concatenate(([0.0], np.cumsum(t)))
    p = np.empty(n)
    p[:-1] = -np.expm1(t) * np.exp(logprod[:-1])
    p[-1] = np.exp(logprod[-1])
    return p


def sample_simplex(n_states: int, rng: np.random.Generator) -> PopulationVector:
    if n_states < 1:
        raise UsageError("need at least one state")
    out = np.empty((1, n_states))
    _backend.kernels.rpse_fill(rng, out)
    return PopulationVector(out[0])


def sample_simplex_batch(n_states: int, count: int, rng: np.random.Generator,
                         backend: str | None = None) -> np.ndarray:
    """`count` independent draws as rows of a (count, n_states) array."""
    if n_states < 1:
        raise UsageError("need at least one state")
    out = np.empty((count, n_states))
    _backend.get(backend).rpse_fill(rng, out)
    return out


def sample_entropies(n_states: int, count: int, rng: np.random.Generator,
                     populations=(), backend: str | None = None):
    """Shannon entropies of `count` draws, streaming (no (count, N) buffer).

    Returns ``(entropy, pops)`` where ``pops[:, i]`` holds population
    ``populations[i]`` (0-based) of each draw.
    """
    idx = np.asarray(populations, dtype=np.intp)
    if np.any(idx < 0) or np.any(idx >= n_states):
        raise UsageError(f"population index out of range for N={n_states}")
    entropy = np.empty(count)
    pops = np.empty((count, idx.size))
    _backend.get(backend).rpse_observe(rng, n_states, entropy, idx, pops)
    return entropy, pops


def sample_phases(n_states: int, rng: np.random.Generator) -> np.ndarray:
    return TWO_PI * rng.random(n_states)


def assemble_state(p: PopulationVector, phases) -> PureState:
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (len(p),):
        raise DimensionError(f"{len(p)} populations but {phases.size} phases")
    return PureState(p, np.mod(phases, TWO_PI))


def sample_state(n_states: int, rng: np.random.Generator) -> PureState:
    p = sample_simplex(n_states, rng)
    return assemble_state(p, sample_phases(n_states, rng))


def rpse_density(p: PopulationVector) -> float:
    """(N-1)! on the simplex interior; zero outside it."""
    arr = np.asarray(p, dtype=float)
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > NORM_TOL:
        return 0.0
    return float(math.factorial(arr.size - 1))
