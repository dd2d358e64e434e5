# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled group kernels. Same API as ``_pykernels``."""

from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t

cdef extern from "_p256core.h" nogil:
    ctypedef struct jpt:
        pass
    void jpt_set_inf(jpt *r)
    int jpt_is_inf(const jpt *p)
    void jpt_add(jpt *r, const jpt *a, const jpt *b)
    void jpt_from_affine(jpt *r, const unsigned char *x, const unsigned char *y)
    int jpt_to_affine(const jpt *p, unsigned char *x, unsigned char *y)
    int c_on_curve "p256_on_curve"(const unsigned char *x, const unsigned char *y)
    int c_decompress "p256_decompress"(const unsigned char *x, int odd, unsigned char *y)
    int c_msm_rows "p256_msm_rows"(const jpt *bases, int m, const unsigned char *scalars,
                                   int rows, jpt *out)
    void c_fixed_build "p256_fixed_build"(jpt *tab, const jpt *p)
    void c_fixed_mul "p256_fixed_mul"(jpt *r, const jpt *tab, const unsigned char *k32)
    void c_ladder "p256_ladder"(jpt *r, const jpt *p, const unsigned char *k33)
    int c_zp_msm_rows "zp_msm_rows"(const uint64_t *bases, int m, const uint64_t *scalars,
                                    int rows, uint64_t p, uint64_t *out)

NAME = "compiled"

P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551


cdef void _load(jpt *r, object pt):
    cdef bytes xb, yb
    if pt is None:
        jpt_set_inf(r)
        return
    xb = int(pt[0]).to_bytes(32, "big")
    yb = int(pt[1]).to_bytes(32, "big")
    jpt_from_affine(r, xb, yb)


cdef object _store(const jpt *p):
    cdef unsigned char x[32]
    cdef unsigned char y[32]
    if not jpt_to_affine(p, x, y):
        return None
    return (int.from_bytes(x[:32], "big"), int.from_bytes(y[:32], "big"))


def on_curve(x, y):
    if not (0 <= x < P and 0 <= y < P):
        return False
    cdef bytes xb = int(x).to_bytes(32, "big")
    cdef bytes yb = int(y).to_bytes(32, "big")
    return bool(c_on_curve(xb, yb))


def decompress(x, odd):
    """y for a compressed point, or None when x has no square root."""
    cdef bytes xb = int(x).to_bytes(32, "big")
    cdef unsigned char y[32]
    if not c_decompress(xb, 1 if odd else 0, y):
        return None
    return int.from_bytes(y[:32], "big")


def add(a, b):
    cdef jpt pa, pb, r
    _load(&pa, a)
    _load(&pb, b)
    jpt_add(&r, &pa, &pb)
    return _store(&r)


def mul(k, pt):
    """Variable-time k*pt for public scalars."""
    return msm_rows([[k]], [pt])[0]


def mul_ct(k, pt):
    """Constant-time k*pt (Montgomery ladder) for secret scalars."""
    cdef jpt p, r
    cdef bytes kb
    cdef const unsigned char *kp
    if pt is None:
        return None
    k = k % N
    k1 = k + N
    k2 = k + 2 * N
    # both candidates are computed; the choice is a mask on the top bit
    sel = (k1 >> 256) & 1
    kk = k2 ^ ((k1 ^ k2) & -sel)
    kb = kk.to_bytes(33, "big")
    kp = kb
    _load(&p, pt)
    with nogil:
        c_ladder(&r, &p, kp)
    return _store(&r)


def msm_rows(rows, bases):
    """For each row of scalars, return sum_i row[i] * bases[i]."""
    cdef int m = len(bases)
    cdef int nrows = len(rows)
    cdef jpt *cb = <jpt *>malloc(sizeof(jpt) * (m if m > 0 else 1))
    cdef jpt *out = <jpt *>malloc(sizeof(jpt) * (nrows if nrows > 0 else 1))
    cdef bytes ks
    cdef const unsigned char *kp
    cdef int i, rc
    if cb == NULL or out == NULL:
        free(cb)
        free(out)
        raise MemoryError()
    try:
        for i in range(m):
            _load(&cb[i], bases[i])
        parts = []
        for row in rows:
            if len(row) != m:
                raise ValueError("scalar row length does not match base count")
            for k in row:
                parts.append((k % N).to_bytes(32, "big"))
        ks = b"".join(parts)
        kp = ks
        with nogil:
            rc = c_msm_rows(cb, m, kp, nrows, out)
        if rc != 0:
            raise MemoryError()
        return [_store(&out[i]) for i in range(nrows)]
    finally:
        free(cb)
        free(out)


cdef class FixedBase:
    """Precomputed window table for repeated multiplication of one point."""

    cdef jpt *tab
    cdef readonly object point

    def __cinit__(self, pt):
        self.tab = <jpt *>malloc(sizeof(jpt) * 16 * 64)
        if self.tab == NULL:
            raise MemoryError()
        self.point = pt
        cdef jpt p
        _load(&p, pt)
        with nogil:
            c_fixed_build(self.tab, &p)

    def __dealloc__(self):
        free(self.tab)

    def mul(self, k):
        cdef jpt r
        cdef bytes kb = (k % N).to_bytes(32, "big")
        cdef const unsigned char *kp = kb
        with nogil:
            c_fixed_mul(&r, self.tab, kp)
        return _store(&r)


def zp_msm_rows(rows, bases, p):
    """For each row, return prod_i bases[i]**row[i] mod p (p < 2**32)."""
    cdef int m = len(bases)
    cdef int nrows = len(rows)
    cdef uint64_t cp = p
    cdef uint64_t *cb = <uint64_t *>malloc(sizeof(uint64_t) * (m if m > 0 else 1))
    cdef uint64_t *cs = <uint64_t *>malloc(sizeof(uint64_t) * (m * nrows if m * nrows > 0 else 1))
    cdef uint64_t *out = <uint64_t *>malloc(sizeof(uint64_t) * (nrows if nrows > 0 else 1))
    cdef int i, j, rc
    if cb == NULL or cs == NULL or out == NULL:
        free(cb)
        free(cs)
        free(out)
        raise MemoryError()
    try:
        for i in range(m):
            cb[i] = bases[i]
        i = 0
        for row in rows:
            if len(row) != m:
                raise ValueError("scalar row length does not match base count")
            for j in range(m):
                cs[i] = row[j]
                i += 1
        with nogil:
            rc = c_zp_msm_rows(cb, m, cs, nrows, cp, out)
        if rc != 0:
            raise MemoryError()
        return [out[i] for i in range(nrows)]
    finally:
        free(cb)
        free(cs)
        free(out)
