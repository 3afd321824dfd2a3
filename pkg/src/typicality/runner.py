"""Reproducible runs behind the command line.

Seeding: chain i of a run with seed s draws from
``Generator(PCG64(SeedSequence(s, spawn_key=(i,))))``, which is what
``SeedSequence(s).spawn(chains)[i]`` produces.  Chains run on a thread pool
(the kernels release the GIL) and are merged in chain order, so outputs do
not depend on scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, _backend, approx, oracle
from .errors import DomainError, RegimeError, UsageError
from .feee import ChainConfig, FeeeChain, FeeeTarget
from .observables import Histogram, RunningStats, shannon_entropy_rows
from .rpse import sample_entropies, sample_simplex_batch
from .spectrum import EnergySpectrum, build_spin_spectrum, degeneracies, read_spectrum

SCHEMA_VERSION = 1
COMMANDS = ("spectrum", "sample-rpse", "sample-feee", "approx", "validate")
BATCH = 1 << 16


@dataclass
class RunConfig:
    command: str
    n_spins: int | None = None
    spectrum_file: str | None = None
    frequencies: list[float] | None = None
    eps: list[float] = field(default_factory=list)
    samples: int = 100_000
    burn_in: int | None = None
    thinning: int = 10
    proposal_scale: float = 0.5
    bins: int = 50
    range: tuple[float, float] | None = None
    pop_range: tuple[float, float] | None = None
    populations: list[int] | None = None
    seed: int = 0
    chains: int = 1
    out_dir: str = "."
    save_samples: bool = False
    backend: str | None = None
    level: str = "quick"

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.command != "validate" and self.n_spins is None and self.spectrum_file is None:
            raise UsageError("give --spins or --spectrum-file")
        if self.n_spins is not None and self.spectrum_file is not None:
            raise UsageError("--spins and --spectrum-file are exclusive")
        if self.samples < 1:
            raise UsageError("--samples must be positive")
        if self.chains < 1:
            raise UsageError("--chains must be positive")
        if self.bins < 1:
            raise UsageError("--bins must be positive")
        if self.thinning < 1:
            raise UsageError("--thinning must be positive")
        if self.burn_in is not None and self.burn_in < 0:
            raise UsageError("--burn-in must be non-negative")
        if not self.proposal_scale > 0:
            raise UsageError("--proposal-scale must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise UsageError("--seed must fit in 64 bits")
        for name in ("range", "pop_range"):
            r = getattr(self, name)
            if r is not None and not (len(r) == 2 and r[0] < r[1]):
                raise UsageError(f"--{name.replace('_', '-')} needs LO < HI")
        if self.command in ("sample-feee", "approx") and not self.eps:
            raise UsageError("--eps is required")
        if self.command == "sample-feee" and len(self.eps) != 1:
            raise UsageError("sample-feee takes a single --eps")
        if self.level not in ("quick", "full"):
            raise UsageError("--level is quick or full")
        if self.backend is not None and self.backend not in _backend.available():
            raise UsageError(f"backend {self.backend!r} not available "
                             f"(have {', '.join(_backend.available())})")

    def spectrum(self) -> EnergySpectrum:
        if self.spectrum_file is not None:
            return read_spectrum(self.spectrum_file)
        return build_spin_spectrum(self.n_spins, self.frequencies)

    def echo(self) -> dict:
        d = asdict(self)
        for k in ("range", "pop_range"):
            if d[k] is not None:
                d[k] = list(d[k])
        d.pop("out_dir")
        return d


CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"command"}
# option names that differ from the field they set
CONFIG_ALIASES = {"spins": "n_spins"}


def chain_generators(seed: int, chains: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(ss))
            for ss in np.random.SeedSequence(seed).spawn(chains)]


def split_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (i < extra) for i in range(parts)]


def _spins(spec: EnergySpectrum) -> float:
    """Spin count used for per-spin quantities (log2 N for file spectra)."""
    return float(spec.n_spins) if spec.n_spins else math.log2(spec.n_states)


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _stats(s: RunningStats) -> dict:
    if s.count < 2:
        return {"mean": s.mean if s.count else None, "std": None, "rel_width": None,
                "n_samples": s.count}
    return s.finalize()


# --- observable accumulation ---------------------------------------------------

@dataclass
class Tally:
    """Per-chain accumulators; merged across chains in chain order."""

    entropy: Histogram
    per_spin: Histogram
    pops: list[Histogram]
    rows: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def empty(cls, cfg: "_Layout") -> "Tally":
        return cls(Histogram(*cfg.entropy_range, cfg.bins),
                   Histogram(*cfg.per_spin_range, cfg.bins),
                   [Histogram(*r, cfg.bins) for r in cfg.pop_ranges])

    def add(self, entropy: np.ndarray, pops: np.ndarray, spins: float, keep: bool) -> None:
        self.entropy = self.entropy.add(entropy)
        self.per_spin = self.per_spin.add(entropy / spins)
        self.pops = [h.add(pops[:, i]) for i, h in enumerate(self.pops)]
        if keep:
            self.rows.append(np.column_stack([entropy, pops]))

    def merge(self, other: "Tally") -> "Tally":
        return Tally(self.entropy.merge(other.entropy), self.per_spin.merge(other.per_spin),
                     [a.merge(b) for a, b in zip(self.pops, other.pops)],
                     self.rows + other.rows)


@dataclass
class _Layout:
    bins: int
    entropy_range: tuple[float, float]
    per_spin_range: tuple[float, float]
    pop_index: np.ndarray  # 0-based
    pop_ranges: list[tuple[float, float]]


def _layout(cfg: RunConfig, spec: EnergySpectrum, pop_hi) -> _Layout:
    n = spec.n_states
    one_based = cfg.populations if cfg.populations is not None else sorted({1, 2, n})
    for k in one_based:
        if not 1 <= k <= n:
            raise UsageError(f"population index {k} outside 1..{n}")
    idx = np.asarray([k - 1 for k in one_based], dtype=np.intp)
    s_max = math.log(n)
    ent = tuple(cfg.range) if cfg.range else (0.0, s_max)
    spins = _spins(spec)
    per_spin = (ent[0] / spins, ent[1] / spins)
    if cfg.pop_range:
        ranges = [tuple(cfg.pop_range)] * idx.size
    else:
        ranges = [(0.0, float(pop_hi(int(k)))) for k in idx]
    return _Layout(cfg.bins, ent, per_spin, idx, ranges)


def _write_outputs(out: Path, tally: Tally, layout: _Layout, summary: dict, save: bool) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str):
        (out / name).write_text(text)
        written.append(name)

    put("hist_entropy.csv", tally.entropy.to_csv())
    put("hist_entropy_per_spin.csv", tally.per_spin.to_csv())
    for k, h in zip(layout.pop_index, tally.pops):
        put(f"hist_P{int(k) + 1}.csv", h.to_csv())
    if save:
        rows = np.concatenate(tally.rows) if tally.rows else np.empty((0, 1 + layout.pop_index.size))
        buf = [",".join(["entropy"] + [f"P{int(k) + 1}" for k in layout.pop_index])]
        buf += [",".join(repr(float(v)) for v in r) for r in rows]
        put("samples.csv", "\n".join(buf) + "\n")
    written.append("summary.json")
    summary["files"] = sorted(written)
    (out / "summary.json").write_text(dump_json(summary))
    return written


def _measured(tally: Tally, layout: _Layout) -> dict:
    return {
        "entropy": _stats(tally.entropy.stats),
        "entropy_per_spin": _stats(tally.per_spin.stats),
        "populations": {f"P{int(k) + 1}": {**_stats(h.stats), "out_of_range": h.out_of_range}
                        for k, h in zip(layout.pop_index, tally.pops)},
    }


def _header(cfg: RunConfig, spec: EnergySpectrum) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": cfg.command,
        "backend": _backend.get(cfg.backend).NAME,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "spectrum": _spectrum_info(spec),
    }


def _spectrum_info(spec: EnergySpectrum) -> dict:
    info = {"n_states": spec.n_states, "n_spins": spec.n_spins,
            "e_star": spec.e_star, "e_max": spec.e_max}
    try:
        c = spec.constants
        info.update(s0=c.s0, f0=c.f0)
    except DomainError:
        info.update(s0=None, f0=None)
    return info


# --- commands --------------------------------------------------------------------

def run_spectrum(cfg: RunConfig) -> dict:
    spec = cfg.spectrum()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "spectrum.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "energy"])
        for i, e in enumerate(spec.eigenvalues, 1):
            w.writerow([i, repr(float(e))])
    summary = _header(cfg, spec)
    summary["degeneracies"] = [{"energy": e, "count": c} for e, c in degeneracies(spec)]
    summary["files"] = ["spectrum.csv", "summary.json"]
    (out / "summary.json").write_text(dump_json(summary))
    return summary


def _rpse_chain(spec, layout, count, rng, spins, keep, backend) -> Tally:
    tally = Tally.empty(layout)
    n = spec.n_states
    done = 0
    while done < count:
        k = min(BATCH, count - done)
        if keep:
            p = sample_simplex_batch(n, k, rng, backend)
            ent, pops = shannon_entropy_rows(p), p[:, layout.pop_index]
        else:
            ent, pops = sample_entropies(n, k, rng, layout.pop_index, backend)
        tally.add(ent, pops, spins, keep)
        done += k
    return tally


def run_sample_rpse(cfg: RunConfig) -> dict:
    spec = cfg.spectrum()
    n = spec.n_states
    layout = _layout(cfg, spec, lambda k: min(1.0, 16.0 / n) if n > 16 else 1.0)
    spins = _spins(spec)
    rngs = chain_generators(cfg.seed, cfg.chains)
    counts = split_counts(cfg.samples, cfg.chains)
    with ThreadPoolExecutor(max_workers=cfg.chains) as pool:
        parts = list(pool.map(
            lambda a: _rpse_chain(spec, layout, a[0], a[1], spins, cfg.save_samples, cfg.backend),
            zip(counts, rngs)))
    tally = parts[0]
    for t in parts[1:]:
        tally = tally.merge(t)
    summary = _header(cfg, spec)
    summary["measured"] = _measured(tally, layout)
    summary["predicted"] = {
        "entropy_mean_exact": oracle.rpse_exact_mean_entropy(n),
        "entropy_mean_approx": approx.mean_entropy_rpse(n) if n > 1 else None,
        "entropy_rel_width_approx": approx.entropy_rel_width_rpse(n) if n > 1 else None,
        "population_mean": 1.0 / n,
    }
    _write_outputs(Path(cfg.out_dir), tally, layout, summary, cfg.save_samples)
    return summary


def _feee_predictions(spec: EnergySpectrum, energy: float, pop_index=()) -> dict:
    sol = approx.solve_lagrange(spec, energy)
    means = 1.0 / sol.rates_for(spec)
    pred = {
        "lagrange": {"lam": sol.lam, "mu": sol.mu, "branch": sol.branch.value,
                     "residual": sol.residual_norm},
        "entropy_mean_approx_I": approx.mean_entropy_feee_I(spec, energy, sol),
        "population_means_approx_I": {f"P{int(k) + 1}": means[k] for k in pop_index},
    }
    try:
        prm = approx.second_form_parameters(spec, energy)
        pred["a1"] = prm["a1"]
        pred["entropy_mean_approx_II"] = approx.mean_entropy_feee_II(spec, energy)
        pred["approx_II_note"] = None
    except RegimeError as exc:
        pred["entropy_mean_approx_II"] = None
        pred["approx_II_note"] = str(exc)
    except DomainError as exc:
        pred["a1"] = None
        pred["entropy_mean_approx_II"] = None
        pred["approx_II_note"] = str(exc)
    return pred


def run_sample_feee(cfg: RunConfig) -> dict:
    spec = cfg.spectrum()
    spins = _spins(spec)
    eps = cfg.eps[0]
    energy = eps * spins
    if not 0 < energy < spec.e_max:
        raise UsageError(f"--eps must lie in (0, {spec.e_max / spins!r})")
    target = FeeeTarget.build(spec, energy)
    verts = oracle.surface_vertices(target) if spec.n_states <= 64 else None
    if verts is not None:
        pop_hi = lambda k: float(verts[:, k].max())
    else:
        pop_hi = lambda k: 1.0
    layout = _layout(cfg, spec, pop_hi)
    counts = split_counts(cfg.samples, cfg.chains)
    rngs = chain_generators(cfg.seed, cfg.chains)

    def one(args):
        count, rng = args
        chain_cfg = ChainConfig(steps=0, burn_in=cfg.burn_in, thinning=cfg.thinning,
                                proposal_scale=cfg.proposal_scale)
        burn = chain_cfg.resolved_burn_in(spec.n_states)
        chain_cfg.steps = burn + count * cfg.thinning
        chain = FeeeChain(target, chain_cfg, rng, cfg.backend)
        tally = Tally.empty(layout)
        for rows in chain.batches():
            tally.add(shannon_entropy_rows(rows), rows[:, layout.pop_index], spins,
                      cfg.save_samples)
        return tally, chain.summary()

    with ThreadPoolExecutor(max_workers=cfg.chains) as pool:
        parts = list(pool.map(one, zip(counts, rngs)))
    tally = parts[0][0]
    for t, _ in parts[1:]:
        tally = tally.merge(t)
    chains = [s for _, s in parts]
    steps = sum(s["kept"] * s["thinning"] for s in chains)
    accepted = sum(s["acceptance_rate"] * s["kept"] * s["thinning"] for s in chains)
    summary = _header(cfg, spec)
    summary.update(energy=energy, eps=eps, chains=chains,
                   acceptance_rate=accepted / steps if steps else None)
    summary["measured"] = _measured(tally, layout)
    summary["predicted"] = _feee_predictions(spec, energy, layout.pop_index)
    _write_outputs(Path(cfg.out_dir), tally, layout, summary, cfg.save_samples)
    return summary


def run_approx(cfg: RunConfig) -> dict:
    spec = cfg.spectrum()
    spins = _spins(spec)
    rows = []
    for eps in cfg.eps:
        energy = eps * spins
        if not 0 < energy < spec.e_max:
            raise UsageError(f"--eps {eps!r} outside (0, {spec.e_max / spins!r})")
        pred = _feee_predictions(spec, energy)
        rows.append({"eps": eps, "energy": energy, **pred})
    summary = _header(cfg, spec)
    summary["predicted"] = {
        "rpse_entropy_mean_approx": approx.mean_entropy_rpse(spec.n_states),
        "rpse_entropy_mean_exact": oracle.rpse_exact_mean_entropy(spec.n_states),
        "curve": [{k: v for k, v in r.items() if k != "population_means_approx_I"} for r in rows],
    }
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "approx.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "energy", "lam", "mu", "branch", "entropy_approx_I",
                    "a1", "entropy_approx_II"])
        for r in rows:
            lag = r["lagrange"]
            s2 = r["entropy_mean_approx_II"]
            a1 = r.get("a1")
            w.writerow([repr(r["eps"]), repr(r["energy"]), repr(lag["lam"]), repr(lag["mu"]),
                        lag["branch"], repr(r["entropy_mean_approx_I"]),
                        "" if a1 is None else repr(a1), "" if s2 is None else repr(s2)])
    summary["files"] = ["approx.csv", "summary.json"]
    (out / "summary.json").write_text(dump_json(summary))
    return summary


def run_validate(cfg: RunConfig) -> dict:
    from .validation import run_checks

    checks = run_checks(cfg.level, cfg.seed, cfg.backend)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": "validate",
        "level": cfg.level,
        "seed": cfg.seed,
        "backend": _backend.get(cfg.backend).NAME,
        "checks": [c.as_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary["files"] = ["summary.json"]
    (out / "summary.json").write_text(dump_json(summary))
    return summary


RUNNERS = {
    "spectrum": run_spectrum,
    "sample-rpse": run_sample_rpse,
    "sample-feee": run_sample_feee,
    "approx": run_approx,
    "validate": run_validate,
}


def run(cfg: RunConfig) -> dict:
    cfg.validate()
    return RUNNERS[cfg.command](cfg)


def read_config_file(path: str | os.PathLike) -> dict:
    """key = value lines; ``#`` starts a comment; keys are long option names
    (``spins``, ``burn-in``) or RunConfig field names.  Values stay strings;
    the CLI parser converts them."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = CONFIG_ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = val
    return values
