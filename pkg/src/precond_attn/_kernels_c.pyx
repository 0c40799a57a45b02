# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
# cython: language_level=3
"""Compiled twin of _kernels_py: same functions, same accumulation order,
same libm calls, so results are bitwise identical to the pure backend
(the build uses -ffp-contract=off to rule out FMA contraction).
Keep the two files in sync; tests/test_backends.py checks every kernel.
"""

from cpython cimport array
from libc.math cimport erf, exp, fabs, log, sqrt

import array

cdef double INV_SQRT2 = 0.7071067811865476     # 1/sqrt(2)
cdef double INV_SQRT_2PI = 0.3989422804014327  # 1/sqrt(2*pi)

cdef array.array _D = array.array("d", [])


cdef inline array.array _zeros(Py_ssize_t n):
    return array.clone(_D, n, True)


def zeros(n):
    return _zeros(n)


def matmul(double[::1] a, Py_ssize_t ar, Py_ssize_t ac, double[::1] b, Py_ssize_t bc):
    cdef array.array out_a = _zeros(ar * bc)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j, k
    cdef double aik
    with nogil:
        for i in range(ar):
            for k in range(ac):
                aik = a[i * ac + k]
                for j in range(bc):
                    out[i * bc + j] += aik * b[k * bc + j]
    return out_a


def transpose(double[::1] a, Py_ssize_t r, Py_ssize_t c):
    cdef array.array out_a = _zeros(r * c)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(r):
            for j in range(c):
                out[j * r + i] = a[i * c + j]
    return out_a


def add(double[::1] a, double[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef array.array out_a = _zeros(n)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = a[i] + b[i]
    return out_a


def add_rowbcast(double[::1] a, Py_ssize_t r, Py_ssize_t c, double[::1] b):
    cdef array.array out_a = _zeros(r * c)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(r):
            for j in range(c):
                out[i * c + j] = a[i * c + j] + b[j]
    return out_a


def acc(double[::1] a, double[::1] b):
    cdef Py_ssize_t i, n = b.shape[0]
    with nogil:
        for i in range(n):
            a[i] += b[i]


def scale(double[::1] a, double s):
    cdef Py_ssize_t n = a.shape[0]
    cdef array.array out_a = _zeros(n)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = a[i] * s
    return out_a


def scale_inplace(double[::1] a, double s):
    cdef Py_ssize_t i, n = a.shape[0]
    with nogil:
        for i in range(n):
            a[i] *= s


def colsum(double[::1] a, Py_ssize_t r, Py_ssize_t c):
    cdef array.array out_a = _zeros(c)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(r):
            for j in range(c):
                out[j] += a[i * c + j]
    return out_a


def row_norms(double[::1] a, Py_ssize_t r, Py_ssize_t c):
    cdef array.array out_a = _zeros(r)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j
    cdef double s, v
    with nogil:
        for i in range(r):
            s = 0.0
            for j in range(c):
                v = a[i * c + j]
                s += v * v
            out[i] = sqrt(s)
    return out_a


def frobenius(double[::1] a):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double s = 0.0
    with nogil:
        for i in range(n):
            s += a[i] * a[i]
    return sqrt(s)


def softmax_rows(double[::1] a, Py_ssize_t r, Py_ssize_t c):
    cdef array.array out_a = _zeros(r * c)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j, base
    cdef double m, s, e
    with nogil:
        for i in range(r):
            base = i * c
            m = a[base]
            for j in range(1, c):
                if a[base + j] > m:
                    m = a[base + j]
            s = 0.0
            for j in range(c):
                e = exp(a[base + j] - m)
                out[base + j] = e
                s += e
            for j in range(c):
                out[base + j] /= s
    return out_a


def softmax_rows_backward(double[::1] y, double[::1] g, Py_ssize_t r, Py_ssize_t c):
    cdef array.array out_a = _zeros(r * c)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j, base
    cdef double d
    with nogil:
        for i in range(r):
            base = i * c
            d = 0.0
            for j in range(c):
                d += g[base + j] * y[base + j]
            for j in range(c):
                out[base + j] = y[base + j] * (g[base + j] - d)
    return out_a


def gelu(double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef array.array out_a = _zeros(n)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i
    cdef double v
    with nogil:
        for i in range(n):
            v = x[i]
            out[i] = 0.5 * v * (1.0 + erf(v * INV_SQRT2))
    return out_a


def gelu_backward(double[::1] x, double[::1] g):
    cdef Py_ssize_t n = x.shape[0]
    cdef array.array out_a = _zeros(n)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i
    cdef double v, d
    with nogil:
        for i in range(n):
            v = x[i]
            d = 0.5 * (1.0 + erf(v * INV_SQRT2)) + v * INV_SQRT_2PI * exp(-0.5 * v * v)
            out[i] = g[i] * d
    return out_a


def layer_norm_rows(double[::1] x, Py_ssize_t r, Py_ssize_t c,
                    double[::1] gain, double[::1] offset, double eps):
    cdef array.array y_a = _zeros(r * c)
    cdef array.array xhat_a = _zeros(r * c)
    cdef array.array istd_a = _zeros(r)
    cdef double[::1] y = y_a
    cdef double[::1] xhat = xhat_a
    cdef double[::1] istd = istd_a
    cdef Py_ssize_t i, j, base
    cdef double s, mean, var, d, inv, xh
    with nogil:
        for i in range(r):
            base = i * c
            s = 0.0
            for j in range(c):
                s += x[base + j]
            mean = s / c
            var = 0.0
            for j in range(c):
                d = x[base + j] - mean
                var += d * d
            var /= c
            inv = 1.0 / sqrt(var + eps)
            istd[i] = inv
            for j in range(c):
                xh = (x[base + j] - mean) * inv
                xhat[base + j] = xh
                y[base + j] = gain[j] * xh + offset[j]
    return y_a, xhat_a, istd_a


def layer_norm_rows_backward(double[::1] g, double[::1] xhat, double[::1] istd,
                             double[::1] gain, Py_ssize_t r, Py_ssize_t c):
    cdef array.array gx_a = _zeros(r * c)
    cdef array.array ggain_a = _zeros(c)
    cdef array.array goff_a = _zeros(c)
    cdef double[::1] gx = gx_a
    cdef double[::1] ggain = ggain_a
    cdef double[::1] goffset = goff_a
    cdef Py_ssize_t i, j, base
    cdef double m1, m2, gh
    with nogil:
        for i in range(r):
            base = i * c
            m1 = 0.0
            m2 = 0.0
            for j in range(c):
                gh = g[base + j] * gain[j]
                m1 += gh
                m2 += gh * xhat[base + j]
            m1 /= c
            m2 /= c
            for j in range(c):
                gh = g[base + j] * gain[j]
                gx[base + j] = (gh - m1 - xhat[base + j] * m2) * istd[i]
                ggain[j] += g[base + j] * xhat[base + j]
                goffset[j] += g[base + j]
    return gx_a, ggain_a, goff_a


def cross_entropy(double[::1] logits, Py_ssize_t r, Py_ssize_t c, targets):
    cdef array.array probs_a = _zeros(r * c)
    cdef double[::1] probs = probs_a
    cdef double total = 0.0
    cdef Py_ssize_t i, j, base, t
    cdef double m, s, e
    for i in range(r):
        t = targets[i]
        base = i * c
        m = logits[base]
        for j in range(1, c):
            if logits[base + j] > m:
                m = logits[base + j]
        s = 0.0
        for j in range(c):
            e = exp(logits[base + j] - m)
            probs[base + j] = e
            s += e
        for j in range(c):
            probs[base + j] /= s
        total += m + log(s) - logits[base + t]
    return total / r, probs_a


def cross_entropy_backward(double[::1] probs, Py_ssize_t r, Py_ssize_t c,
                           targets, double coef):
    cdef array.array gx_a = _zeros(r * c)
    cdef double[::1] gx = gx_a
    cdef Py_ssize_t i, j, base, t
    cdef double p
    for i in range(r):
        t = targets[i]
        base = i * c
        for j in range(c):
            p = probs[base + j]
            if j == t:
                p -= 1.0
            gx[base + j] = p * coef
    return gx_a


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double b1, double b2, double eps, double wd,
                double bc1, double bc2):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi, mi, vi, mh, vh, pi
    with nogil:
        for i in range(n):
            gi = g[i]
            mi = b1 * m[i] + (1.0 - b1) * gi
            vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
            m[i] = mi
            v[i] = vi
            mh = mi / bc1
            vh = vi / bc2
            pi = p[i]
            p[i] = pi - lr * (mh / (sqrt(vh) + eps)) - (lr * wd) * pi


def jacobi_sweeps(double[::1] w, Py_ssize_t n, Py_ssize_t k, double tol,
                  Py_ssize_t max_sweeps):
    cdef Py_ssize_t sweep, p, q, i
    cdef double al, be, ga, wp, wq, denom, ratio, zeta, t, cs, sn
    cdef double worst = 0.0
    cdef double f2 = 0.0
    cdef double tiny2
    cdef bint rotated
    with nogil:
        for i in range(n * k):
            f2 += w[i] * w[i]
    tiny2 = 1e-28 * f2
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        worst = 0.0
        with nogil:
            for p in range(k - 1):
                for q in range(p + 1, k):
                    al = 0.0
                    be = 0.0
                    ga = 0.0
                    for i in range(n):
                        wp = w[i * k + p]
                        wq = w[i * k + q]
                        al += wp * wp
                        be += wq * wq
                        ga += wp * wq
                    if al <= tiny2 or be <= tiny2:
                        continue
                    denom = sqrt(al * be)
                    ratio = fabs(ga) / denom
                    if ratio > worst:
                        worst = ratio
                    if ratio <= tol:
                        continue
                    rotated = True
                    zeta = (be - al) / (2.0 * ga)
                    t = (1.0 if zeta >= 0.0 else -1.0) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                    cs = 1.0 / sqrt(1.0 + t * t)
                    sn = cs * t
                    for i in range(n):
                        wp = w[i * k + p]
                        wq = w[i * k + q]
                        w[i * k + p] = cs * wp - sn * wq
                        w[i * k + q] = sn * wp + cs * wq
        if not rotated:
            return sweep, True, worst
    return max_sweeps, False, worst


def gather_rows(double[::1] table, ids, Py_ssize_t c):
    cdef Py_ssize_t n = len(ids)
    cdef array.array out_a = _zeros(n * c)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j, t
    for i in range(n):
        t = ids[i]
        for j in range(c):
            out[i * c + j] = table[t * c + j]
    return out_a


def scatter_add_rows(double[::1] gtable, ids, double[::1] g, Py_ssize_t c):
    cdef Py_ssize_t n = len(ids)
    cdef Py_ssize_t i, j, t
    for i in range(n):
        t = ids[i]
        for j in range(c):
            gtable[t * c + j] += g[i * c + j]


def slice_cols(double[::1] a, Py_ssize_t r, Py_ssize_t c, Py_ssize_t off,
               Py_ssize_t width):
    cdef array.array out_a = _zeros(r * width)
    cdef double[::1] out = out_a
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(r):
            for j in range(width):
                out[i * width + j] = a[i * c + off + j]
    return out_a


def put_cols(double[::1] dst, Py_ssize_t r, Py_ssize_t dst_cols, Py_ssize_t off,
             double[::1] src, Py_ssize_t width):
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(r):
            for j in range(width):
                dst[i * dst_cols + off + j] = src[i * width + j]
