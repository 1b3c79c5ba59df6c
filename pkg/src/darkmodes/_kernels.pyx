# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled block Lindblad kernel.

Mirrors ``darkmodes._kernels_py`` exactly; see ``darkmodes._sectors`` for the
block layout.  Complex arrays are handled as interleaved (re, im) doubles so
the inner loops stay free of C99 complex-multiply NaN fixups.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()

ctypedef cnp.int64_t i64


cdef void _rhs(const double* rho, double* out, double* x,
               const i64* sizes, const i64* offsets, const i64* starts,
               const i64* n_exc, const i64* jump_target, i64 nb,
               const double* hd, const i64* hi, const i64* hp,
               double gamma) noexcept nogil:
    cdef i64 b, s, off, st, ne, ex0, i, j, p, c, t, ts, toff, a, q
    cdef double hr, him, rr, ri, dr, di, w
    cdef const double* rrow
    cdef double* xrow
    for b in range(nb):
        s = sizes[b]
        off = offsets[b]
        st = starts[b]
        ne = n_exc[b]
        ex0 = s - ne
        # x = H_b rho_b
        for i in range(2 * s * s):
            x[i] = 0.0
        for i in range(s):
            xrow = x + 2 * i * s
            for p in range(hp[st + i], hp[st + i + 1]):
                c = hi[p] - st
                hr = hd[2 * p]
                him = hd[2 * p + 1]
                rrow = rho + 2 * (off + c * s)
                for j in range(s):
                    rr = rrow[2 * j]
                    ri = rrow[2 * j + 1]
                    xrow[2 * j] += hr * rr - him * ri
                    xrow[2 * j + 1] += hr * ri + him * rr
        # out = -i (x - x^dag) - gamma/2 {P_e, rho}
        for i in range(s):
            for j in range(s):
                a = 2 * (i * s + j)
                q = 2 * (j * s + i)
                dr = x[a] - x[q]
                di = x[a + 1] + x[q + 1]
                w = 0.0
                if i >= ex0:
                    w += 0.5 * gamma
                if j >= ex0:
                    w += 0.5 * gamma
                out[2 * off + a] = di - w * rho[2 * off + a]
                out[2 * off + a + 1] = -dr - w * rho[2 * off + a + 1]
    # sigma_- rho sigma_+ feeds the excited tail into the head of the target block
    for b in range(nb):
        t = jump_target[b]
        ne = n_exc[b]
        if t < 0 or ne == 0:
            continue
        s = sizes[b]
        off = offsets[b]
        ex0 = s - ne
        ts = sizes[t]
        toff = offsets[t]
        for i in range(ne):
            for j in range(ne):
                a = 2 * (toff + i * ts + j)
                q = 2 * (off + (ex0 + i) * s + ex0 + j)
                out[a] += gamma * rho[q]
                out[a + 1] += gamma * rho[q + 1]


cdef void _hermitize(double* rho, const i64* sizes, const i64* offsets, i64 nb) noexcept nogil:
    cdef i64 b, s, off, i, j, a, q
    cdef double re, im
    for b in range(nb):
        s = sizes[b]
        off = offsets[b]
        for i in range(s):
            rho[2 * (off + i * s + i) + 1] = 0.0
            for j in range(i + 1, s):
                a = 2 * (off + i * s + j)
                q = 2 * (off + j * s + i)
                re = 0.5 * (rho[a] + rho[q])
                im = 0.5 * (rho[a + 1] - rho[q + 1])
                rho[a] = re
                rho[a + 1] = im
                rho[q] = re
                rho[q + 1] = -im


def _check(rho, h_data):
    if rho.dtype != np.complex128 or not rho.flags.c_contiguous:
        raise TypeError("rho must be a contiguous complex128 array")
    if h_data.dtype != np.complex128 or not h_data.flags.c_contiguous:
        raise TypeError("h_data must be a contiguous complex128 array")


def lindblad_rhs_blocks(rho, const i64[::1] sizes, const i64[::1] offsets,
                        const i64[::1] starts, const i64[::1] n_exc,
                        const i64[::1] jump_target, h_data,
                        const i64[::1] h_indices, const i64[::1] h_indptr,
                        double gamma):
    """Right-hand side of the master equation for a packed block state."""
    _check(rho, h_data)
    out = np.empty_like(rho)
    cdef double[::1] rv = rho.view(np.float64)
    cdef double[::1] ov = out.view(np.float64)
    cdef double[::1] hv = h_data.view(np.float64)
    cdef i64 nb = sizes.shape[0]
    cdef i64 smax = 0
    cdef i64 b
    for b in range(nb):
        if sizes[b] > smax:
            smax = sizes[b]
    cdef double* x = <double*> malloc(max(2 * smax * smax, 1) * sizeof(double))
    if x == NULL:
        raise MemoryError()
    try:
        with nogil:
            _rhs(&rv[0], &ov[0], x, &sizes[0], &offsets[0], &starts[0], &n_exc[0],
                 &jump_target[0], nb, &hv[0] if hv.shape[0] else NULL,
                 &h_indices[0] if h_indices.shape[0] else NULL, &h_indptr[0], gamma)
    finally:
        free(x)
    return out


def rk4_advance(rho, const i64[::1] sizes, const i64[::1] offsets,
                const i64[::1] starts, const i64[::1] n_exc,
                const i64[::1] jump_target, h_data,
                const i64[::1] h_indices, const i64[::1] h_indptr,
                double gamma, double dt, long n_steps):
    """Advance ``rho`` in place by ``n_steps`` classical RK4 steps of size ``dt``.

    The state is re-Hermitized after every step.
    """
    _check(rho, h_data)
    cdef double[::1] rv = rho.view(np.float64)
    cdef double[::1] hv = h_data.view(np.float64)
    cdef i64 n = rv.shape[0]
    cdef i64 nb = sizes.shape[0]
    cdef i64 smax = 0
    cdef i64 b, i, step
    for b in range(nb):
        if sizes[b] > smax:
            smax = sizes[b]
    cdef double* k = <double*> malloc(n * sizeof(double))
    cdef double* acc = <double*> malloc(n * sizeof(double))
    cdef double* tmp = <double*> malloc(n * sizeof(double))
    cdef double* x = <double*> malloc(max(2 * smax * smax, 1) * sizeof(double))
    if k == NULL or acc == NULL or tmp == NULL or x == NULL:
        free(k); free(acc); free(tmp); free(x)
        raise MemoryError()
    cdef double* r = &rv[0]
    cdef const double* hd = &hv[0] if hv.shape[0] else NULL
    cdef const i64* hi = &h_indices[0] if h_indices.shape[0] else NULL
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    try:
        with nogil:
            for step in range(n_steps):
                _rhs(r, k, x, &sizes[0], &offsets[0], &starts[0], &n_exc[0],
                     &jump_target[0], nb, hd, hi, &h_indptr[0], gamma)
                for i in range(n):
                    acc[i] = k[i]
                    tmp[i] = r[i] + half * k[i]
                _rhs(tmp, k, x, &sizes[0], &offsets[0], &starts[0], &n_exc[0],
                     &jump_target[0], nb, hd, hi, &h_indptr[0], gamma)
                for i in range(n):
                    acc[i] += 2.0 * k[i]
                    tmp[i] = r[i] + half * k[i]
                _rhs(tmp, k, x, &sizes[0], &offsets[0], &starts[0], &n_exc[0],
                     &jump_target[0], nb, hd, hi, &h_indptr[0], gamma)
                for i in range(n):
                    acc[i] += 2.0 * k[i]
                    tmp[i] = r[i] + dt * k[i]
                _rhs(tmp, k, x, &sizes[0], &offsets[0], &starts[0], &n_exc[0],
                     &jump_target[0], nb, hd, hi, &h_indptr[0], gamma)
                for i in range(n):
                    r[i] += sixth * (acc[i] + k[i])
                _hermitize(r, &sizes[0], &offsets[0], nb)
    finally:
        free(k)
        free(acc)
        free(tmp)
        free(x)
    return rho
