"""Pure-numpy versions of the routines in ``_kernels.pyx``.

Random draws are consumed in the same order as the compiled versions, so the
two backends agree up to floating-point summation order.
"""

import math

import numpy as np

NAME = "python"

TINY = 1e-300
# rows per vectorized batch is chosen so a batch holds about this many doubles
_BATCH_DOUBLES = 1 << 22


def _simplex_rows(u, n):
    t = np.log1p(-u) / np.arange(n - 1, 0, -1, dtype=float)
    logprod = np.cumsum(t, axis=1)
    excl = np.empty_like(logprod)
    excl[:, 0] = 0.0
    excl[:, 1:] = logprod[:, :-1]
    p = np.empty((u.shape[0], n))
    p[:, :-1] = -np.expm1(t) * np.exp(excl)
    p[:, -1] = np.exp(logprod[:, -1])
    return p, t, excl, logprod[:, -1]


def rpse_fill(generator, out):
    m, n = out.shape
    if n == 1:
        out[:, 0] = 1.0
        return
    step = max(1, _BATCH_DOUBLES // n)
    for start in range(0, m, step):
        stop = min(m, start + step)
        u = generator.random((stop - start, n - 1))
        out[start:stop] = _simplex_rows(u, n)[0]


def rpse_observe(generator, n, entropy, pop_index, pops):
    m = entropy.shape[0]
    if n == 1:
        entropy[:] = 0.0
        pops[:, :] = 1.0
        return
    step = max(1, _BATCH_DOUBLES // n)
    for start in range(0, m, step):
        stop = min(m, start + step)
        u = generator.random((stop - start, n - 1))
        p, t, excl, last = _simplex_rows(u, n)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.empty_like(p)
            logp[:, :-1] = np.log(-np.expm1(t)) + excl
            logp[:, -1] = last
            terms = np.where(p >= TINY, p * logp, 0.0)
        entropy[start:stop] = -terms.sum(axis=1)
        if len(pop_index):
            pops[start:stop] = p[:, pop_index]


def mh_advance(generator, state, free, lo, hi, a, c, sd, scale, b, bracket,
               n_steps, thin, out, tol=1e-12):
    d = free.shape[0]
    n = state.shape[0]
    if thin > 0 and out.shape[0] < n_steps // thin:
        raise ValueError("output buffer too small")
    base = b - b * b
    one_plus_a = 1.0 + a
    step_sd = scale * sd
    accepted = written = fault = 0
    q = state[free]
    for step in range(n_steps):
        z = generator.standard_normal(d)
        u = generator.random()
        y = q + step_sd * z
        if d == 0 or y.min() >= 0.0:
            yhi = b + float(np.dot(a, y))
            ylo = 1.0 - b - float(np.dot(one_plus_a, y))
            if yhi >= 0.0 and ylo >= 0.0:
                br = base + float(np.dot(c, y))
                if br < -tol:
                    fault = 1
                    break
                if br > 0.0 and u < math.sqrt(br / bracket):
                    q = y
                    state[free] = y
                    state[hi] = yhi
                    state[lo] = ylo
                    bracket = br
                    accepted += 1
        if thin > 0 and (step + 1) % thin == 0:
            out[written] = state
            written += 1
    return accepted, bracket, written, fault
