"""Energy spectra of non-interacting spin-1/2 systems and user-supplied level lists.

Energies are dimensionless multiples of the unit frequency (hbar*omega0 = 1).
Degenerate levels are kept as repeated entries because every downstream
density is indexed by individual eigenstates, not by levels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CapacityError, DegenerateGroundError, DimensionError, UsageError

log = logging.getLogger(__name__)

#: largest spin count `build_spin_spectrum` accepts unless told otherwise
MAX_SPINS = 24


@dataclass(frozen=True)
class SpectrumConstants:
    e_star: float
    e_max: float
    s0: float
    f0: float


@dataclass(frozen=True, eq=False)
class EnergySpectrum:
    """Sorted eigenvalues with the ground state at zero."""

    eigenvalues: np.ndarray
    n_spins: int | None = None
    frequencies: tuple[float, ...] | None = None

    def __post_init__(self):
        e = np.array(self.eigenvalues, dtype=float)
        if e.ndim != 1 or e.size < 2:
            raise DimensionError("a spectrum needs at least two eigenvalues")
        if not np.all(np.isfinite(e)):
            raise UsageError("eigenvalues must be finite")
        if np.any(np.diff(e) < 0):
            raise UsageError("eigenvalues must be sorted ascending")
        if e[0] != 0.0:
            raise UsageError(f"ground state must sit at zero energy, got {e[0]!r}")
        e.setflags(write=False)
        object.__setattr__(self, "eigenvalues", e)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def n_states(self) -> int:
        return self.eigenvalues.size

    @property
    def e_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def e_star(self) -> float:
        return float(self.eigenvalues.mean())

    @cached_property
    def constants(self) -> SpectrumConstants:
        return constants(self)

    @classmethod
    def from_levels(cls, values: Sequence[float], shift: bool = True) -> "EnergySpectrum":
        """Sort `values` and, if `shift`, move the minimum to zero."""
        e = np.sort(np.asarray(values, dtype=float), kind="stable")
        if e.size and e[0] != 0.0:
            if not shift:
                raise UsageError(f"lowest eigenvalue is {e[0]!r}, expected 0")
            log.warning("shifting spectrum by %r so the ground state is at zero", -e[0])
            e = e - e[0]
        return cls(e)

    def __eq__(self, other):
        if not isinstance(other, EnergySpectrum):
            return NotImplemented
        return np.array_equal(self.eigenvalues, other.eigenvalues)

    __hash__ = None


def build_spin_spectrum(n: int, frequencies: Sequence[float] | None = None,
                        max_spins: int = MAX_SPINS) -> EnergySpectrum:
    """All 2**n Zeeman levels sum_k omega_k m_k, m_k = -1/2 or +1/2.

    Configurations are enumerated with the last spin varying fastest and
    spin-down first; the stable sort keeps that order among degenerate levels.
    """
    if int(n) != n or n < 1:
        raise UsageError(f"number of spins must be a positive integer, got {n!r}")
    n = int(n)
    if n > max_spins:
        raise CapacityError(f"{n} spins means 2**{n} states, above the cap of {max_spins} spins")
    if frequencies is None:
        frequencies = [1.0] * n
    w = np.asarray(frequencies, dtype=float)
    if w.shape != (n,):
        raise DimensionError(f"expected {n} frequencies, got {w.size}")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise UsageError("frequencies must be positive")

    idx = np.arange(1 << n, dtype=np.int64)
    energies = np.zeros(idx.size)
    for k in range(n):
        up = (idx >> (n - 1 - k)) & 1
        energies += w[k] * (up - 0.5)
    energies -= energies.min()
    energies = np.sort(energies, kind="stable")
    energies[0] = 0.0
    return EnergySpectrum(energies, n_spins=n, frequencies=tuple(float(x) for x in w))


def constants(spec: EnergySpectrum) -> SpectrumConstants:
    e = spec.eigenvalues
    excited = e[1:]
    if np.any(excited == 0):
        raise DegenerateGroundError("ground level is degenerate; S0 and F0 are undefined")
    s0 = float(np.sum(1.0 / excited))
    f0 = float(np.sum(np.log(excited) / excited))
    return SpectrumConstants(e_star=float(e.mean()), e_max=float(e[-1]), s0=s0, f0=f0)


def read_spectrum(path: str | Path, shift: bool = True) -> EnergySpectrum:
    """Read one eigenvalue per line; blank lines and ``#`` comments are skipped."""
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise UsageError(f"{path}:{lineno}: not a number: {line!r}") from None
    return EnergySpectrum.from_levels(values, shift=shift)


def write_spectrum(spec: EnergySpectrum, path: str | Path) -> None:
    with open(path, "w") as fh:
        for x in spec.eigenvalues:
            fh.write(f"{float(x)!r}\n")


def degeneracies(spec: EnergySpectrum, decimals: int = 12) -> list[tuple[float, int]]:
    """(level, multiplicity) pairs, levels rounded to `decimals` for grouping."""
    levels, counts = np.unique(np.round(spec.eigenvalues, decimals), return_counts=True)
    return [(float(l), int(c)) for l, c in zip(levels, counts)]


def binomial_levels(n: int) -> list[tuple[int, int]]:
    return [(k, math.comb(n, k)) for k in range(n + 1)]
