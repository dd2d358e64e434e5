"""Pure-Python group kernels, used when the compiled extension is unavailable.

Mirrors ``_ckernels`` exactly: affine points are ``(x, y)`` int tuples and
``None`` is the point at infinity. Internally points are Jacobian triples.
"""

from __future__ import annotations

NAME = "python"

P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B

_INF = (1, 1, 0)


def _jdouble(p):
    x1, y1, z1 = p
    if z1 == 0:
        return _INF
    delta = z1 * z1 % P
    gamma = y1 * y1 % P
    beta = x1 * gamma % P
    alpha = 3 * (x1 - delta) * (x1 + delta) % P
    x3 = (alpha * alpha - 8 * beta) % P
    z3 = ((y1 + z1) ** 2 - gamma - delta) % P
    y3 = (alpha * (4 * beta - x3) - 8 * gamma * gamma) % P
    return (x3, y3, z3)


def _jadd(a, b):
    if a[2] == 0:
        return b
    if b[2] == 0:
        return a
    x1, y1, z1 = a
    x2, y2, z2 = b
    z1z1 = z1 * z1 % P
    z2z2 = z2 * z2 % P
    u1 = x1 * z2z2 % P
    u2 = x2 * z1z1 % P
    s1 = y1 * z2 * z2z2 % P
    s2 = y2 * z1 * z1z1 % P
    h = (u2 - u1) % P
    rr = (s2 - s1) % P
    if h == 0:
        return _jdouble(a) if rr == 0 else _INF
    rr = 2 * rr % P
    i = 4 * h * h % P
    j = h * i % P
    v = u1 * i % P
    x3 = (rr * rr - j - 2 * v) % P
    y3 = (rr * (v - x3) - 2 * s1 * j) % P
    z3 = ((z1 + z2) ** 2 - z1z1 - z2z2) * h % P
    return (x3, y3, z3)


def _load(pt):
    if pt is None:
        return _INF
    return (pt[0] % P, pt[1] % P, 1)


def _store(p):
    x, y, z = p
    if z == 0:
        return None
    zi = pow(z, P - 2, P)
    zi2 = zi * zi % P
    return (x * zi2 % P, y * zi2 * zi % P)


def on_curve(x, y):
    if not (0 <= x < P and 0 <= y < P):
        return False
    return (y * y - (x * x * x - 3 * x + B)) % P == 0


def decompress(x, odd):
    rhs = (x * x * x - 3 * x + B) % P
    y = pow(rhs, (P + 1) // 4, P)
    if y * y % P != rhs:
        return None
    return P - y if (y & 1) != bool(odd) and y else y


def add(a, b):
    return _store(_jadd(_load(a), _load(b)))


def mul(k, pt):
    """Variable-time k*pt for public scalars."""
    return msm_rows([[k]], [pt])[0]


def mul_ct(k, pt):
    """Ladder multiplication with a fixed 257-bit schedule.

    Python big integers are not constant time; this mirrors the compiled
    ladder's operation sequence, not its timing guarantees.
    """
    if pt is None:
        return None
    k = k % N
    k1 = k + N
    k2 = k + 2 * N
    sel = (k1 >> 256) & 1
    kk = k2 ^ ((k1 ^ k2) & -sel)
    p = _load(pt)
    r0, r1 = p, _jdouble(p)
    for i in range(255, -1, -1):
        if (kk >> i) & 1:
            r0, r1 = _jadd(r0, r1), _jdouble(r1)
        else:
            r0, r1 = _jdouble(r0), _jadd(r0, r1)
    return _store(r0)


def _table(p):
    t = [_INF, p, _jdouble(p)]
    for _ in range(3, 16):
        t.append(_jadd(t[-1], p))
    return t


def msm_rows(rows, bases):
    """For each row of scalars, return sum_i row[i] * bases[i]."""
    m = len(bases)
    tables = [_table(_load(b)) for b in bases]
    out = []
    for row in rows:
        if len(row) != m:
            raise ValueError("scalar row length does not match base count")
        ks = [k % N for k in row]
        acc = _INF
        for w in range(63, -1, -1):
            if acc[2] != 0:
                for _ in range(4):
                    acc = _jdouble(acc)
            shift = 4 * w
            for k, tab in zip(ks, tables):
                d = (k >> shift) & 0xF
                if d:
                    acc = _jadd(acc, tab[d])
        out.append(_store(acc))
    return out


class FixedBase:
    """Precomputed window table for repeated multiplication of one point."""

    __slots__ = ("point", "_tab")

    def __init__(self, pt):
        self.point = pt
        base = _load(pt)
        self._tab = []
        for _ in range(64):
            row = [_INF, base]
            for _ in range(2, 16):
                row.append(_jadd(row[-1], base))
            self._tab.append(row)
            for _ in range(4):
                base = _jdouble(base)

    def mul(self, k):
        k = k % N
        acc = _INF
        for w in range(64):
            d = (k >> (4 * w)) & 0xF
            if d:
                acc = _jadd(acc, self._tab[w][d])
        return _store(acc)


def zp_msm_rows(rows, bases, p):
    """For each row, return prod_i bases[i]**row[i] mod p."""
    m = len(bases)
    out = []
    for row in rows:
        if len(row) != m:
            raise ValueError("scalar row length does not match base count")
        acc = 1
        for b, k in zip(bases, row):
            acc = acc * pow(b, k, p) % p
        out.append(acc)
    return out
