# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Each routine draws from the numpy BitGenerator behind a ``numpy.random.Generator``
in exactly the order the pure-Python versions in ``_pykernels`` do, so both
backends walk the same random stream.  The GIL is released while looping.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, expm1, log, log1p, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal_fill,
    random_standard_uniform,
    random_standard_uniform_fill,
)

NAME = "cython"

cdef double TINY = 1e-300


cdef bitgen_t* _bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("not a numpy BitGenerator")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline void _simplex_row(bitgen_t* rng, Py_ssize_t n, double* u, double* p) noexcept nogil:
    # P_J = (1 - xi_J^(1/(N-J))) * prod_{i<J} xi_i^(1/(N-i)), xi = 1 - u in (0, 1]
    cdef Py_ssize_t j
    cdef double t, logprod = 0.0
    random_standard_uniform_fill(rng, n - 1, u)
    for j in range(n - 1):
        t = log1p(-u[j]) / <double>(n - 1 - j)
        p[j] = -expm1(t) * exp(logprod)
        logprod += t
    p[n - 1] = exp(logprod)


def rpse_fill(generator, double[:, ::1] out):
    """Fill every row of `out` with an independent uniform-simplex draw."""
    cdef Py_ssize_t m = out.shape[0], n = out.shape[1], i
    if n == 1:
        out[:, 0] = 1.0
        return
    cdef double[::1] u = np.empty(n - 1)
    bg = generator.bit_generator
    cdef bitgen_t* rng = _bitgen(bg)
    with bg.lock, nogil:
        for i in range(m):
            _simplex_row(rng, n, &u[0], &out[i, 0])


def rpse_observe(generator, Py_ssize_t n, double[::1] entropy, const Py_ssize_t[::1] pop_index,
                 double[:, ::1] pops):
    """Draw len(entropy) simplex points of dimension n without storing them.

    Writes the Shannon entropy of each draw and the populations listed in
    `pop_index` (one column each in `pops`).
    """
    cdef Py_ssize_t m = entropy.shape[0], k = pop_index.shape[0]
    cdef Py_ssize_t i, j, r
    cdef double t, logprod, pj, logp, s
    if n == 1:
        entropy[:] = 0.0
        for r in range(k):
            pops[:, r] = 1.0
        return
    cdef double[::1] u = np.empty(n - 1)
    cdef double[::1] p = np.empty(n)
    bg = generator.bit_generator
    cdef bitgen_t* rng = _bitgen(bg)
    with bg.lock, nogil:
        for i in range(m):
            random_standard_uniform_fill(rng, n - 1, &u[0])
            logprod = 0.0
            s = 0.0
            for j in range(n - 1):
                t = log1p(-u[j]) / <double>(n - 1 - j)
                pj = -expm1(t) * exp(logprod)
                p[j] = pj
                if pj >= TINY:
                    logp = log(-expm1(t)) + logprod
                    s -= pj * logp
                logprod += t
            pj = exp(logprod)
            p[n - 1] = pj
            if pj >= TINY:
                s -= pj * logprod
            entropy[i] = s
            for r in range(k):
                pops[i, r] = p[pop_index[r]]


def mh_advance(generator, double[::1] state, const Py_ssize_t[::1] free, Py_ssize_t lo, Py_ssize_t hi,
               const double[::1] a, const double[::1] c, const double[::1] sd, double scale, double b,
               double bracket, Py_ssize_t n_steps, Py_ssize_t thin, double[:, ::1] out,
               double tol=1e-12):
    """Random-walk Metropolis steps on the fixed-energy surface.

    `state` is the full population vector and is updated in place.  Free
    coordinates move by scale*sd*Z; the two eliminated populations follow
    from the constraints.  The target is sqrt(bracket) with
    bracket = b - b**2 + sum_j c_j q_j, c_j = a_j (1 + a_j).

    Returns (accepted, bracket, written, fault) where fault is 1 when an
    in-domain proposal had bracket < -tol.
    """
    cdef Py_ssize_t d = free.shape[0], n = state.shape[0]
    cdef Py_ssize_t step, j, written = 0, accepted = 0
    cdef int ok, fault = 0
    cdef double y, sa, sy, sc, yhi, ylo, br, u
    cdef double base = b - b * b
    cdef double[::1] z = np.empty(max(d, 1))
    cdef double[::1] ybuf = np.empty(max(d, 1))
    if thin > 0 and out.shape[0] < n_steps // thin:
        raise ValueError("output buffer too small")
    if thin > 0 and out.shape[1] != n:
        raise ValueError("output buffer has the wrong width")
    bg = generator.bit_generator
    cdef bitgen_t* rng = _bitgen(bg)
    with bg.lock, nogil:
        for step in range(n_steps):
            random_standard_normal_fill(rng, d, &z[0])
            u = random_standard_uniform(rng)
            ok = 1
            sa = 0.0
            sy = 0.0
            sc = 0.0
            for j in range(d):
                y = state[free[j]] + scale * sd[j] * z[j]
                if y < 0.0:
                    ok = 0
                    break
                ybuf[j] = y
                sa += a[j] * y
                sy += y
                sc += c[j] * y
            if ok:
                yhi = b + sa
                ylo = 1.0 - b - (sy + sa)
                if yhi < 0.0 or ylo < 0.0:
                    ok = 0
            if ok:
                br = base + sc
                if br < -tol:
                    fault = 1
                    break
                if br > 0.0 and u < sqrt(br / bracket):
                    for j in range(d):
                        state[free[j]] = ybuf[j]
                    state[hi] = yhi
                    state[lo] = ylo
                    bracket = br
                    accepted += 1
            if thin > 0 and (step + 1) % thin == 0:
                for j in range(n):
                    out[written, j] = state[j]
                written += 1
    return accepted, bracket, written, fault
