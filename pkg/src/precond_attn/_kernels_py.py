"""Pure-Python compute kernels over flat row-major float64 buffers.

This is the reference backend. ``_kernels_c`` is a Cython twin exporting the
same functions with the same accumulation order and the same libm calls, so
the two produce bitwise-identical results (the extension is compiled with
-ffp-contract=off to keep it that way). Any change here must be mirrored
there; tests/test_backends.py enforces the contract.

Buffers are ``array('d')`` in row-major order; shapes travel as separate
arguments. No validation happens at this level, callers are responsible.
"""

from __future__ import annotations

import math
from array import array
from operator import add as _fadd
from operator import mul as _fmul

INV_SQRT2 = 0.7071067811865476     # 1/sqrt(2)
INV_SQRT_2PI = 0.3989422804014327  # 1/sqrt(2*pi)


def zeros(n):
    return array("d", bytes(8 * n))


def matmul(a, ar, ac, b, bc):
    """(ar x ac) @ (ac x bc); each output entry accumulates k = 0..ac-1 in order."""
    out = zeros(ar * bc)
    bt = transpose(b, ac, bc)
    for i in range(ar):
        row = a[i * ac:(i + 1) * ac]
        base = i * bc
        for j in range(bc):
            # sum() accumulates k = 0..ac-1 left to right in a C double,
            # exactly like the compiled kernel's inner loop
            out[base + j] = sum(map(_fmul, row, bt[j * ac:(j + 1) * ac]))
    return out


def transpose(a, r, c):
    out = zeros(r * c)
    for i in range(r):
        base = i * c
        for j in range(c):
            out[j * r + i] = a[base + j]
    return out


def add(a, b):
    return array("d", map(_fadd, a, b))


def add_rowbcast(a, r, c, b):
    """a (r x c) plus a single row b (len c) added to every row."""
    out = zeros(r * c)
    for i in range(r):
        base = i * c
        for j in range(c):
            out[base + j] = a[base + j] + b[j]
    return out


def acc(a, b):
    """In-place a += b."""
    for i in range(len(b)):
        a[i] += b[i]


def scale(a, s):
    out = zeros(len(a))
    for i in range(len(a)):
        out[i] = a[i] * s
    return out


def scale_inplace(a, s):
    for i in range(len(a)):
        a[i] *= s


def colsum(a, r, c):
    out = zeros(c)
    for i in range(r):
        base = i * c
        for j in range(c):
            out[j] += a[base + j]
    return out


def row_norms(a, r, c):
    out = zeros(r)
    for i in range(r):
        base = i * c
        s = 0.0
        for j in range(c):
            v = a[base + j]
            s += v * v
        out[i] = math.sqrt(s)
    return out


def frobenius(a):
    s = 0.0
    for v in a:
        s += v * v
    return math.sqrt(s)


def softmax_rows(a, r, c):
    """Row-wise softmax with max subtraction."""
    out = zeros(r * c)
    for i in range(r):
        base = i * c
        m = a[base]
        for j in range(1, c):
            if a[base + j] > m:
                m = a[base + j]
        s = 0.0
        for j in range(c):
            e = math.exp(a[base + j] - m)
            out[base + j] = e
            s += e
        for j in range(c):
            out[base + j] /= s
    return out


def softmax_rows_backward(y, g, r, c):
    """Given y = softmax_rows(x) and upstream g, return dL/dx."""
    out = zeros(r * c)
    for i in range(r):
        base = i * c
        d = 0.0
        for j in range(c):
            d += g[base + j] * y[base + j]
        for j in range(c):
            out[base + j] = y[base + j] * (g[base + j] - d)
    return out


def gelu(x):
    out = zeros(len(x))
    for i in range(len(x)):
        v = x[i]
        out[i] = 0.5 * v * (1.0 + math.erf(v * INV_SQRT2))
    return out


def gelu_backward(x, g):
    out = zeros(len(x))
    for i in range(len(x)):
        v = x[i]
        d = 0.5 * (1.0 + math.erf(v * INV_SQRT2)) + v * INV_SQRT_2PI * math.exp(-0.5 * v * v)
        out[i] = g[i] * d
    return out


def layer_norm_rows(x, r, c, gain, offset, eps):
    """Per-row standardization followed by elementwise gain and offset.

    Returns (y, xhat, istd); the latter two are caches for the backward pass.
    """
    y = zeros(r * c)
    xhat = zeros(r * c)
    istd = zeros(r)
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
        inv = 1.0 / math.sqrt(var + eps)
        istd[i] = inv
        for j in range(c):
            xh = (x[base + j] - mean) * inv
            xhat[base + j] = xh
            y[base + j] = gain[j] * xh + offset[j]
    return y, xhat, istd


def layer_norm_rows_backward(g, xhat, istd, gain, r, c):
    gx = zeros(r * c)
    ggain = zeros(c)
    goffset = zeros(c)
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
    return gx, ggain, goffset


def cross_entropy(logits, r, c, targets):
    """Mean negative log-likelihood over rows. Returns (loss, probs)."""
    probs = zeros(r * c)
    total = 0.0
    for i in range(r):
        base = i * c
        m = logits[base]
        for j in range(1, c):
            if logits[base + j] > m:
                m = logits[base + j]
        s = 0.0
        for j in range(c):
            e = math.exp(logits[base + j] - m)
            probs[base + j] = e
            s += e
        for j in range(c):
            probs[base + j] /= s
        total += m + math.log(s) - logits[base + targets[i]]
    return total / r, probs


def cross_entropy_backward(probs, r, c, targets, coef):
    """coef is upstream_grad / r, applied to (probs - onehot)."""
    gx = zeros(r * c)
    for i in range(r):
        base = i * c
        t = targets[i]
        for j in range(c):
            p = probs[base + j]
            if j == t:
                p -= 1.0
            gx[base + j] = p * coef
    return gx


def adam_update(p, g, m, v, lr, b1, b2, eps, wd, bc1, bc2):
    """One decoupled-weight-decay Adam step, in place on p, m, v.

    bc1/bc2 are the bias corrections 1 - beta**t, precomputed by the caller
    so both backends consume the exact same doubles.
    """
    for i in range(len(p)):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        mh = mi / bc1
        vh = vi / bc2
        pi = p[i]
        p[i] = pi - lr * (mh / (math.sqrt(vh) + eps)) - (lr * wd) * pi


def jacobi_sweeps(w, n, k, tol, max_sweeps):
    """One-sided Jacobi orthogonalization of the k columns of w (n x k), in place.

    Cyclic sweeps over column pairs p < q; a pair is rotated when
    |<wp,wq>| > tol * ||wp|| * ||wq||. Columns whose squared mass has fallen
    below 1e-28 of the total are deflated (skipped): their singular values
    sit at the rounding floor, far under any rank cutoff, and chasing their
    direction would keep the sweep rotating forever on rank-deficient input.
    Returns (sweeps_done, converged, worst_ratio_of_last_sweep). Afterwards
    the column norms of w are the singular values, in no particular order.
    """
    f2 = 0.0
    for v in w:
        f2 += v * v
    tiny2 = 1e-28 * f2
    worst = 0.0
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        worst = 0.0
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
                denom = math.sqrt(al * be)
                ratio = abs(ga) / denom
                if ratio > worst:
                    worst = ratio
                if ratio <= tol:
                    continue
                rotated = True
                zeta = (be - al) / (2.0 * ga)
                t = (1.0 if zeta >= 0.0 else -1.0) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                for i in range(n):
                    wp = w[i * k + p]
                    wq = w[i * k + q]
                    w[i * k + p] = cs * wp - sn * wq
                    w[i * k + q] = sn * wp + cs * wq
        if not rotated:
            return sweep, True, worst
    return max_sweeps, False, worst


def gather_rows(table, ids, c):
    out = zeros(len(ids) * c)
    for i, t in enumerate(ids):
        out[i * c:(i + 1) * c] = table[t * c:(t + 1) * c]
    return out


def scatter_add_rows(gtable, ids, g, c):
    """gtable[ids[i], :] += g[i, :] for each i, in order."""
    for i, t in enumerate(ids):
        gbase = i * c
        tbase = t * c
        for j in range(c):
            gtable[tbase + j] += g[gbase + j]


def slice_cols(a, r, c, off, width):
    out = zeros(r * width)
    for i in range(r):
        base = i * c + off
        out[i * width:(i + 1) * width] = a[base:base + width]
    return out


def put_cols(dst, r, dst_cols, off, src, width):
    """Copy src (r x width) into dst (r x dst_cols) at column offset off."""
    for i in range(r):
        base = i * dst_cols + off
        dst[base:base + width] = src[i * width:(i + 1) * width]
