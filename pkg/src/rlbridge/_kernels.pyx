# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contract and random streams as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, exp
from libc.stdint cimport uint64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t key, uint64_t ctr) nogil:
    return (<double>(mix64(key + (ctr + 1) * GOLDEN) >> 11) + 0.5) * TWO_M53


cdef inline double normal(uint64_t key, uint64_t k) nogil:
    cdef double u1 = uniform(key, 2 * k + 1)
    cdef double u2 = uniform(key, 2 * k + 2)
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


def path_keys(seed, path_index):
    idx = np.atleast_1d(np.asarray(path_index, dtype=np.uint64))
    cdef uint64_t[:] iv = idx
    cdef Py_ssize_t i, n = iv.shape[0]
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[:] ov = out
    cdef uint64_t base = mix64(<uint64_t>(seed % 2**64))
    for i in range(n):
        ov[i] = mix64(base ^ mix64((iv[i] + 1) * GOLDEN))
    return out


def uniforms(keys, counters):
    cdef uint64_t[:] kv = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef uint64_t[:] cv = np.ascontiguousarray(np.atleast_1d(counters), dtype=np.uint64)
    cdef Py_ssize_t i, j, n = kv.shape[0], m = cv.shape[0]
    out = np.empty((n, m))
    cdef double[:, :] ov = out
    for i in range(n):
        for j in range(m):
            ov[i, j] = uniform(kv[i], cv[j])
    return out


def normals(keys, Py_ssize_t m):
    cdef uint64_t[:] kv = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t i, j, n = kv.shape[0]
    out = np.empty((n, m))
    cdef double[:, :] ov = out
    for i in range(n):
        for j in range(m):
            ov[i, j] = normal(kv[i], j)
    return out


def sample_bridge_batch(grid, rho_g, q_g, tau, rho_tau, q_tau, keys, double q0):
    cdef double[:] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef double[:] rg = np.ascontiguousarray(rho_g, dtype=np.float64)
    cdef double[:] qg = np.ascontiguousarray(q_g, dtype=np.float64)
    cdef double[:] tv = np.ascontiguousarray(tau, dtype=np.float64)
    cdef double[:] rt = np.ascontiguousarray(rho_tau, dtype=np.float64)
    cdef double[:] qt = np.ascontiguousarray(q_tau, dtype=np.float64)
    cdef uint64_t[:] kv = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t n = tv.shape[0], m = g.shape[0], i, k
    out = np.zeros((n, m))
    cdef double[:, :] ov = out
    cdef double x, rho_p, q_p, ru, qu, b_pu, b_ur, b_pr, var, slope
    with nogil:
        for i in range(n):
            x = 0.0
            rho_p = 0.0
            q_p = q0
            for k in range(m):
                if g[k] >= tv[i]:
                    break
                if g[k] <= 0.0:
                    continue
                ru = rg[k]
                qu = qg[k]
                b_pu = ru * q_p - rho_p * qu
                b_ur = rt[i] * qu - ru * qt[i]
                b_pr = rt[i] * q_p - rho_p * qt[i]
                slope = b_ur / b_pr
                var = b_pu * b_ur / b_pr
                if var < 0.0:
                    var = 0.0
                x = slope * x + sqrt(var) * normal(kv[i], k)
                ov[i, k] = x
                rho_p = ru
                q_p = qu
    return out


def atom_posterior_batch(x, double rho_t, double q_t, double rho_p, double q_p,
                         rho_r, q_r, log_mass):
    cdef double[:] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:] rr = np.ascontiguousarray(rho_r, dtype=np.float64)
    cdef double[:] qr = np.ascontiguousarray(q_r, dtype=np.float64)
    cdef double[:] lm = np.ascontiguousarray(log_mass, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], a = rr.shape[0], i, j
    out = np.empty((n, a))
    cdef double[:, :] ov = out
    coef = np.empty(a)
    base = np.empty(a)
    cdef double[:] cf = coef
    cdef double[:] bs = base
    cdef double b_tr, b_pr, b_pt = rho_t * q_p - rho_p * q_t, mx, tot, s
    for j in range(a):
        b_tr = rr[j] * q_t - rho_t * qr[j]
        b_pr = rr[j] * q_p - rho_p * qr[j]
        cf[j] = 0.5 * b_pr / (b_tr * b_pt)
        bs[j] = 0.5 * log(rr[j] / b_tr) + lm[j]
    with nogil:
        for i in range(n):
            mx = -1e308
            for j in range(a):
                s = bs[j] - cf[j] * xv[i] * xv[i]
                ov[i, j] = s
                if s > mx:
                    mx = s
            tot = 0.0
            for j in range(a):
                ov[i, j] = exp(ov[i, j] - mx)
                tot += ov[i, j]
            for j in range(a):
                ov[i, j] /= tot
    return out
