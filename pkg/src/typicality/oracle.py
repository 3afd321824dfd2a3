"""Brute-force references used to validate the samplers and closed forms.

Nothing here shares code paths with the quantities it checks: determinants
are taken directly (LAPACK LU with partial pivoting), the fixed-energy
marginals come from grid quadrature, an independent rejection sampler or
thin-shell conditioning of uniform simplex draws,
and the random-state references are exact formulas.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import (BoundError, DimensionError, DomainError, InsufficientDataError, NumericError,
                     SingularityError)
from .feee import BRACKET_TOL, FeeeTarget, bracket
from .observables import shannon_entropy_rows

MAX_DIM = 64


def _square(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError("expected a square matrix")
    if a.shape[0] > MAX_DIM:
        raise DimensionError(f"matrix larger than {MAX_DIM}x{MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise DimensionError("matrix has non-finite entries")
    return a


def direct_det(a) -> float:
    return np.linalg.det(_square(a))


def _solve(a, rhs):
    try:
        x = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        raise SingularityError("matrix is singular") from None
    if not np.all(np.isfinite(x)):
        raise SingularityError("matrix is singular")
    return x


def det_rank1_update(a, u, v) -> float:
    """det(A + u v^T) as (1 + v^T A^-1 u) det(A)."""
    a = _square(a)
    u = np.asarray(u).ravel()
    v = np.asarray(v).ravel()
    if u.size != a.shape[0] or v.size != a.shape[0]:
        raise DimensionError("vector length does not match the matrix")
    det_a = np.linalg.det(a)
    if det_a == 0:
        raise SingularityError("matrix is singular")
    return (1.0 + v @ _solve(a, u)) * det_a


def det_rankk_update(a, u) -> float:
    """det(A + U U^H) as det(I + U^H A^-1 U) det(A)."""
    a = _square(a)
    u = np.asarray(u)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] != a.shape[0]:
        raise DimensionError("U needs as many rows as A")
    det_a = np.linalg.det(a)
    if det_a == 0:
        raise SingularityError("matrix is singular")
    uh = u.conj().T
    small = np.eye(u.shape[1]) + uh @ _solve(a, u)
    return np.linalg.det(small) * det_a


# --- metric tensors of the population coordinates --------------------------

def rpse_metric(p_free) -> np.ndarray:
    """Induced metric on (P_1..P_{N-1}) of the unit sphere, P_N eliminated."""
    p = np.asarray(p_free, dtype=float)
    last = 1.0 - p.sum()
    return np.diag(1.0 / (4.0 * p)) + 1.0 / (4.0 * last)


def rpse_metric_det(p_free) -> dict:
    """Population-block determinant (direct and closed form) and the full
    determinant including the phase block, which should be 4**-(N-1)."""
    p = np.asarray(p_free, dtype=float)
    last = 1.0 - p.sum()
    if np.any(p <= 0) or last <= 0:
        raise DomainError("point must be strictly inside the simplex")
    n = p.size + 1
    direct = direct_det(rpse_metric(p))
    closed = 1.0 / (4.0 ** (n - 1) * last * np.prod(p))
    phase = last * np.prod(p)
    return {"direct": direct, "closed": closed, "total": direct * phase,
            "expected_total": 4.0 ** -(n - 1)}


def feee_metric(q, target: FeeeTarget) -> np.ndarray:
    """Induced metric on the free populations of the fixed-energy surface.

    g_ij = delta_ij/(4 q_i) + d_i f1 d_j f1/(4 f1) + d_i f2 d_j f2/(4 f2) with
    f1 = P_hi, f2 = P_lo, d f1/d q_j = a_j and d f2/d q_j = -(1 + a_j).
    """
    q = np.asarray(q, dtype=float)
    p = target.fill(q)
    f1, f2 = p[target.hi], p[target.lo]
    d1 = target.a
    d2 = -(1.0 + target.a)
    return np.diag(1.0 / (4.0 * q)) + np.outer(d1, d1) / (4.0 * f1) + np.outer(d2, d2) / (4.0 * f2)


def feee_metric_det(q, target: FeeeTarget) -> dict:
    """Direct determinant of the surface metric next to its closed form

        ((1 + R11)(1 + R22) - R12**2) * prod_j 1/(4 q_j)

    R11 = sum q a^2 / f1, R22 = sum q (1+a)^2 / f2,
    R12 = sum q a (1+a) / sqrt(f1 f2).  Also returns the product with the
    phase-block determinant prod_k P_k and the bracket / 4**(N-2) it should
    equal.
    """
    q = np.asarray(q, dtype=float)
    p = target.fill(q)
    if np.any(p <= 0):
        raise DomainError("metric needs a strictly interior point")
    f1, f2 = p[target.hi], p[target.lo]
    a = target.a
    r11 = np.sum(q * a * a) / f1
    r22 = np.sum(q * (1 + a) ** 2) / f2
    r12 = np.sum(q * a * (1 + a)) / math.sqrt(f1 * f2)
    scale = np.prod(1.0 / (4.0 * q))
    closed = ((1 + r11) * (1 + r22) - r12 * r12) * scale
    direct = direct_det(feee_metric(q, target))
    m = q.size
    return {
        "direct": direct,
        "closed": closed,
        "with_phases": closed * np.prod(p),
        "bracket_form": bracket(q, target) / 4.0 ** m,
    }


# --- fixed-energy marginals by quadrature ------------------------------------

def _chart_with_free(target: FeeeTarget, index: int) -> FeeeTarget:
    if index in target.free:
        return target
    e = target.spectrum.eigenvalues
    others = [k for k in range(e.size) if k != index]
    for lo, hi in itertools.permutations(others, 2):
        if e[hi] > e[lo]:
            return target.rechart((lo, hi))
    raise DomainError(f"no chart keeps population {index} free")


@dataclass(frozen=True)
class MarginalTable:
    edges: np.ndarray
    density: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return self.density * np.diff(self.edges)


def feee_marginal_quadrature(target: FeeeTarget, index: int, bins: int = 30,
                             lo: float | None = None, hi: float | None = None,
                             resolution: int = 420) -> MarginalTable:
    """Normalized marginal density of population `index` (0-based), N = 4.

    The squared density is linear in the other free population, so the
    inner integral over its feasible interval is done in closed form; the
    outer one is a trapezoid rule with `resolution` nodes, aligned with the
    histogram bins and clipped to the feasible interval.  The range defaults
    to [0, largest feasible value].
    """
    if target.n_states != 4:
        raise DimensionError("quadrature oracle needs N = 4")
    chart = _chart_with_free(target, index)
    ix = int(np.flatnonzero(chart.free == index)[0])
    iy = 1 - ix
    span = surface_vertices(chart)[:, index]
    x_min, x_max = span.min(), span.max()
    lo = 0.0 if lo is None else lo
    hi = x_max if hi is None else hi
    per_bin = max(1, math.ceil(resolution / bins))
    x = np.linspace(lo, hi, bins * per_bin + 1)
    # clip sub-cells to the feasible interval: the marginal may jump at its ends
    x0 = np.clip(x[:-1], x_min, x_max)
    x1 = np.clip(x[1:], x_min, x_max)
    f0 = _inner_integral(chart, ix, iy, x0)
    f1 = _inner_integral(chart, ix, iy, x1)
    cell = 0.5 * (f0 + f1) * (x1 - x0)
    mass = cell.reshape(bins, per_bin).sum(axis=1)
    total = mass.sum()
    if not total > 0:
        raise NumericError("marginal has zero mass on the requested range")
    edges = np.linspace(lo, hi, bins + 1)
    return MarginalTable(edges, mass / (total * np.diff(edges)))


def _inner_integral(t: FeeeTarget, ix: int, iy: int, x: np.ndarray) -> np.ndarray:
    """Integral over y of sqrt(bracket) at each fixed x, N = 4 chart."""
    a, b = t.a, t.b
    # each constraint reads c + d y >= 0
    cons = [
        (np.zeros_like(x), 1.0),
        (b + a[ix] * x, a[iy]),
        (1.0 - b - (1.0 + a[ix]) * x, -(1.0 + a[iy])),
    ]
    y_lo = np.zeros_like(x)
    y_hi = np.full_like(x, np.inf)
    ok = x >= 0
    for c, d in cons:
        if d > 0:
            y_lo = np.maximum(y_lo, -c / d)
        elif d < 0:
            y_hi = np.minimum(y_hi, c / -d)
        else:
            ok &= c >= 0
    ok &= y_hi > y_lo
    alpha = b - b * b + t.curvature[ix] * x
    beta = t.curvature[iy]
    out = np.zeros_like(x)
    y_lo, y_hi = y_lo[ok], y_hi[ok]
    if beta == 0:
        out[ok] = np.sqrt(np.clip(alpha[ok], 0, None)) * (y_hi - y_lo)
    else:
        f_hi = np.clip(alpha[ok] + beta * y_hi, 0, None) ** 1.5
        f_lo = np.clip(alpha[ok] + beta * y_lo, 0, None) ** 1.5
        out[ok] = 2.0 * (f_hi - f_lo) / (3.0 * beta)
    return out


def _density_grid(target: FeeeTarget, q: np.ndarray) -> np.ndarray:
    """sqrt(bracket) on rows of free populations, zero outside the domain."""
    p_hi = target.b + q @ target.a
    p_lo = 1.0 - target.b - q @ (1.0 + target.a)
    ok = (p_hi >= 0) & (p_lo >= 0) & np.all(q >= 0, axis=1)
    br = target.b - target.b ** 2 + q @ target.curvature
    if np.any(ok & (br < -BRACKET_TOL)):
        raise NumericError("negative bracket inside the domain")
    return np.where(ok & (br > 0), np.sqrt(np.clip(br, 0, None)), 0.0)


# --- independent rejection sampler ------------------------------------------

def free_box(target: FeeeTarget) -> np.ndarray:
    """Per-coordinate upper bounds of the feasible free populations."""
    return surface_vertices(target)[:, target.free].max(axis=0)


def surface_vertices(target: FeeeTarget) -> np.ndarray:
    """Vertices of the fixed-energy slice of the simplex, as full vectors.

    The slice is the convex hull of the eigenstates at exactly energy E and
    of the two-level mixtures crossing E along every simplex edge.
    """
    e = target.spectrum.eigenvalues
    energy = target.energy
    rows = []
    for k in np.flatnonzero(e == energy):
        v = np.zeros(e.size)
        v[k] = 1.0
        rows.append(v)
    for i in np.flatnonzero(e < energy):
        for j in np.flatnonzero(e > energy):
            v = np.zeros(e.size)
            v[j] = (energy - e[i]) / (e[j] - e[i])
            v[i] = 1.0 - v[j]
            rows.append(v)
    if not rows:
        raise DomainError("fixed-energy surface is empty")
    return np.array(rows)


class _PolytopeProposal:
    """Uniform draws on a convex polytope given by its vertices.

    The hull is split into simplices (Delaunay); a simplex is picked with
    probability proportional to its volume and a point inside it with flat
    Dirichlet weights.
    """

    def __init__(self, vertices: np.ndarray):
        from scipy.spatial import Delaunay

        m = vertices.shape[1]
        self.dim = m
        if m == 0:
            self.cells = np.zeros((1, 1, 0))
        elif m == 1:
            self.cells = np.array([[[vertices.min()], [vertices.max()]]])
        else:
            tri = Delaunay(vertices)
            self.cells = vertices[tri.simplices]
        edges = self.cells[:, 1:, :] - self.cells[:, :1, :]
        vol = np.abs(np.linalg.det(edges)) if m else np.ones(1)
        if not vol.sum() > 0:
            raise DomainError("fixed-energy surface has no interior")
        self.weights = vol / vol.sum()

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        pick = rng.choice(len(self.cells), size=count, p=self.weights)
        w = rng.standard_exponential((count, self.dim + 1))
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("bi,bij->bj", w, self.cells[pick])


class RejectionSampler:
    """Exact independent draws from the fixed-energy density.

    Proposals are uniform on the feasible polytope of the free populations
    (or on its bounding box with ``proposal="box"``) and are accepted with
    probability density / envelope.  The envelope is the largest density over
    the polytope vertices and a coarse grid over the box, times a safety
    factor; since the squared density is linear the vertex scan already finds
    the maximum.  A proposal above the envelope triggers a finer re-scan and
    a restart; after `max_rescans` the sampler gives up with BoundError.
    """

    MAX_STATES = 8

    def __init__(self, target: FeeeTarget, grid: int = 9, safety: float = 1.1,
                 max_rescans: int = 3, proposal: str = "polytope"):
        if target.n_states > self.MAX_STATES:
            raise DimensionError(f"rejection oracle limited to N <= {self.MAX_STATES}")
        if proposal not in ("polytope", "box"):
            raise DimensionError(f"unknown proposal {proposal!r}")
        self.target = target
        self.vertices = surface_vertices(target)[:, target.free]
        self.box = self.vertices.max(axis=0)
        self._polytope = _PolytopeProposal(self.vertices) if proposal == "polytope" else None
        self.safety = safety
        self.grid = grid
        self.max_rescans = max_rescans
        self.bound = self._scan(grid)
        self.proposals = 0
        self.accepted = 0
        self.max_ratio = 0.0

    def _scan(self, grid: int) -> float:
        axes = [np.linspace(0.0, u, grid) for u in self.box]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        pts = np.vstack([pts, self.vertices])
        peak = float(_density_grid(self.target, pts).max())
        if not peak > 0:
            raise BoundError("density vanishes on the whole scan grid")
        return self.safety * peak

    def _propose(self, count: int, rng) -> np.ndarray:
        if self._polytope is not None:
            return self._polytope.draw(count, rng)
        return rng.random((count, self.target.n_free)) * self.box

    def sample(self, count: int, rng: np.random.Generator, batch: int = 1 << 16) -> np.ndarray:
        for attempt in range(self.max_rescans + 1):
            try:
                return self._sample(count, rng, batch)
            except BoundError:
                if attempt == self.max_rescans:
                    raise
                self.grid = 2 * self.grid - 1
                self.bound = max(self._scan(self.grid), self.max_ratio * self.bound)
                self.max_ratio = 0.0
        raise AssertionError("unreachable")

    def _sample(self, count: int, rng, batch: int) -> np.ndarray:
        t = self.target
        kept = []
        have = 0
        while have < count:
            q = self._propose(batch, rng)
            u = rng.random(batch)
            ratio = _density_grid(t, q) / self.bound
            self.proposals += batch
            self.max_ratio = max(self.max_ratio, float(ratio.max()))
            if self.max_ratio > 1.0:
                raise BoundError(f"density exceeded the envelope by {self.max_ratio:.4g}x")
            keep = q[u < ratio][: count - have]
            kept.append(keep)
            have += len(keep)
            self.accepted += len(keep)
        q = np.concatenate(kept)
        out = np.empty((count, t.n_states))
        out[:, t.free] = q
        out[:, t.hi] = t.b + q @ t.a
        out[:, t.lo] = 1.0 - t.b - q @ (1.0 + t.a)
        np.clip(out, 0.0, 1.0, out=out)
        return out

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposals if self.proposals else math.nan


def feee_rejection_sample(target: FeeeTarget, count: int, rng: np.random.Generator,
                          **kw) -> np.ndarray:
    """`count` independent fixed-energy population vectors, one per row."""
    return RejectionSampler(target, **kw).sample(count, rng)


@dataclass
class WeightedSample:
    populations: np.ndarray
    weights: np.ndarray

    def cdf(self, index: int, x) -> np.ndarray:
        """Weighted empirical CDF of population `index` at points `x`."""
        col = self.populations[:, index]
        order = np.argsort(col)
        cum = np.concatenate([[0.0], np.cumsum(self.weights[order])]) / self.weights.sum()
        return cum[np.searchsorted(col[order], x, side="right")]

    def ks_to(self, index: int, cdf) -> float:
        """Weighted Kolmogorov-Smirnov distance of one marginal to `cdf`."""
        col = np.sort(self.populations[:, index])
        emp = self.cdf(index, col)
        ref = cdf(col)
        before = np.concatenate([[0.0], emp[:-1]])
        return float(max(np.max(np.abs(emp - ref)), np.max(np.abs(before - ref))))


def feee_shell_sample(target: FeeeTarget, count: int, rng: np.random.Generator,
                      width: float | None = None, batch: int = 1 << 18,
                      max_draws: int = 1 << 30) -> WeightedSample:
    """Fixed-energy populations by thin-shell conditioning, any N.

    Uniform simplex draws with |sum P E - E| < width, weighted by the
    square root of the energy variance. Bias is O(width**2).
    """
    e = target.spectrum.eigenvalues
    n = e.size
    if width is None:
        width = 2e-3 * target.spectrum.e_max
    rows, drawn, kept = [], 0, 0
    while kept < count:
        if drawn >= max_draws:
            raise InsufficientDataError(f"shell kept {kept} of {count} after {drawn} draws")
        p = rng.dirichlet(np.ones(n), batch)
        drawn += batch
        p = p[np.abs(p @ e - target.energy) < width]
        rows.append(p)
        kept += len(p)
    p = np.concatenate(rows)[:count]
    var = np.maximum(p @ (e * e) - (p @ e) ** 2, 0.0)
    return WeightedSample(p, np.sqrt(var))


# --- Lagrange multipliers by scanning -----------------------------------------

def lagrange_scan(spectrum, energy: float, points: int = 20001) -> float:
    """z = lambda/mu from a dense scan of the energy constraint followed by
    Brent refinement, independent of the bisection solver.

    Below E* the scan runs over log z on (0, inf); above E* over
    t = log(-(z + E_N)) on the branch z < -E_N.  Returns inf at E = E*.
    """
    e = spectrum.eigenvalues
    top = float(e[-1])
    if not 0 < energy < top:
        raise DomainError("energy outside the spectrum")
    e_star = float(e.mean())
    if energy == e_star:
        return math.inf

    def g(z):
        w = 1.0 / (z + e)
        return float(np.dot(e, w) / w.sum())

    if energy < e_star:
        to_z = math.exp
        grid = np.linspace(-40.0, 40.0, points)
    else:
        def to_z(t):
            return -top - math.exp(t)
        # keep exp(t) resolvable next to E_N
        grid = np.linspace(math.log(max(top, 1.0)) - 25.0, 40.0, points)
    resid = np.array([g(to_z(t)) - energy for t in grid])
    flips = np.flatnonzero(np.sign(resid[:-1]) != np.sign(resid[1:]))
    if flips.size != 1:
        raise NumericError(f"scan found {flips.size} sign changes")
    i = int(flips[0])
    t = optimize.brentq(lambda t: g(to_z(t)) - energy, grid[i], grid[i + 1],
                        xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return to_z(t)


# --- random-state references --------------------------------------------------

def rpse_marginal_pdf(x, n_states: int) -> np.ndarray:
    """Beta(1, N-1) density of a single uniform-simplex population."""
    x = np.asarray(x, dtype=float)
    inside = (x >= 0) & (x <= 1)
    return np.where(inside, (n_states - 1) * np.clip(1 - x, 0, 1) ** (n_states - 2), 0.0)


def rpse_marginal_cdf(x, n_states: int) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return 1.0 - (1.0 - x) ** (n_states - 1)


def rpse_exact_mean_entropy(n_states: int) -> float:
    """Mean Shannon entropy of the uniform simplex: H_N - 1 = sum_{k=2}^N 1/k."""
    if n_states < 1:
        raise DomainError("need at least one state")
    return math.fsum(1.0 / k for k in range(2, n_states + 1))


def rpse_entropy_std_asymptotic(n_states: int) -> float:
    """Large-N standard deviation of the uniform-simplex entropy.

    Writing P_k = eta_k / sum(eta) with unit exponentials eta and expanding to
    first order in the fluctuations gives S = ln N - mean(f(eta)) + const
    with f(x) = x ln x - (2 - gamma) x, so Var S ~ Var f(eta) / N with

        Var f = Gamma''(3) - psi(2)**2 - 2 (2 - gamma) (2 psi(3) - psi(2)) + (2 - gamma)**2
              ~ 0.2899.
    """
    from scipy.special import polygamma, psi

    g = -float(psi(1.0))
    psi2, psi3 = float(psi(2.0)), float(psi(3.0))
    second = 2.0 * (psi3 ** 2 + float(polygamma(1, 3.0)))  # Gamma''(3)
    c = 2.0 - g
    var_f = second - psi2 ** 2 - 2.0 * c * (2.0 * psi3 - psi2) + c * c
    return math.sqrt(var_f / n_states)


def rpse_mean_entropy_integral(n_states: int, nodes: int = 100) -> float:
    """(N-1)! times the integral of the entropy over the simplex, N <= 4.

    The simplex is mapped onto the unit cube by P_k = u_k prod_{i<k}(1 - u_i)
    (Jacobian prod_k (1 - u_k)^(N-2-k)) and integrated with a tensor
    Gauss-Legendre rule; the log endpoint singularities limit the error to
    about 1e-8 at 100 nodes per axis.
    """
    if n_states == 1:
        return 0.0
    if n_states > 4:
        raise DimensionError("direct integration only for N <= 4")
    d = n_states - 1
    x, w = np.polynomial.legendre.leggauss(nodes)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    u = np.meshgrid(*([x] * d), indexing="ij")
    weight = np.ones_like(u[0])
    for wk in np.meshgrid(*([w] * d), indexing="ij"):
        weight *= wk
    rest = np.ones_like(u[0])
    pops = []
    for k, uk in enumerate(u):
        pops.append(rest * uk)
        weight *= (1.0 - uk) ** (d - 1 - k)
        rest = rest * (1.0 - uk)
    pops.append(rest)
    ent = shannon_entropy_rows(np.stack(pops, axis=-1))
    return math.factorial(d) * float(np.sum(weight * ent))
