"""Independent reference implementations used only by the tests.

None of these share code paths with the package's optimised routines.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction

# ---------------------------------------------------------------- P-256, textbook affine

P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
A = P - 3
B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
G = (0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296,
     0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5)


def ec_add(p1, p2):
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2 and (y1 + y2) % P == 0:
        return None
    if p1 == p2:
        lam = (3 * x1 * x1 + A) * pow(2 * y1, -1, P) % P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, P) % P
    x3 = (lam * lam - x1 - x2) % P
    return (x3, (lam * (x1 - x3) - y1) % P)


def ec_mul(k, pt):
    k %= N
    acc = None
    while k:
        if k & 1:
            acc = ec_add(acc, pt)
        pt = ec_add(pt, pt)
        k >>= 1
    return acc


def on_curve(pt):
    x, y = pt
    return (y * y - (x * x * x + A * x + B)) % P == 0


def crypto_mul_gen(k):
    """k*G through the ``cryptography`` package (OpenSSL)."""
    from cryptography.hazmat.primitives.asymmetric import ec

    nums = ec.derive_private_key(k, ec.SECP256R1()).public_key().public_numbers()
    return (nums.x, nums.y)


# ---------------------------------------------------------------- test group


def dlog_bruteforce(group, h):
    acc = 1
    for m in range(group.order):
        if acc == h:
            return m
        acc = acc * group.generator % group.p
    raise ValueError("not in subgroup")


# ---------------------------------------------------------------- unfused responder


def reference_respond(query, matrix, group, rng):
    """R[i][j] = m_ij * (sum_k X[i][k] * Q[k][j] + f), built from single ElGamal operations."""
    from credstuff.group import add, scalar_mul

    pk = query.pk
    out = []
    for j in range(2):
        for xrow in matrix:
            acc = query.f
            for k, x in enumerate(xrow):
                acc = add(pk, acc, scalar_mul(pk, x, query.q[k][j], rng), rng)
            out.append(scalar_mul(pk, rng.randrange(1, group.order), acc, rng))
    return out


# ---------------------------------------------------------------- cuckoo reference model


class MultisetModel:
    def __init__(self):
        self.items = Counter()

    def insert(self, x):
        self.items[x] += 1

    def delete(self, x):
        if not self.items[x]:
            raise KeyError(x)
        self.items[x] -= 1

    def contains(self, x):
        return self.items[x] > 0


# ---------------------------------------------------------------- FDR brute force


def _zipf(n_pwds, s):
    w = [Fraction(1) / Fraction(k) ** s if s == int(s) else 1.0 / k ** s for k in range(1, n_pwds + 1)]
    tot = sum(w)
    return [x / tot for x in w]


def fdr_bruteforce(n, n_pwds, s, w, fpr_col, fpr_cnt):
    """Enumerate every draw and, per draw, every attempt sequence H can make.

    H fully observes the draw, so an optimal history-dependent strategy wins a
    draw iff some legal attempt sequence plants pwd0 in >= w suspicious sets.
    """
    probs = _zipf(n_pwds, s)
    fc, fk = Fraction(str(fpr_col)), Fraction(str(fpr_cnt))

    def max_planted(pwd0, pwds, flags):
        best = 0

        def dfs(tried, done):
            nonlocal best
            planted = sum(1 for i in range(n) if flags[i] and pwds[i] != pwd0 and (i, pwd0) in tried)
            best = max(best, planted)
            for i in range(n):
                if done[i]:
                    continue
                for p in range(n_pwds):
                    if (i, p) in tried:
                        continue
                    nd = list(done)
                    nd[i] = p == pwds[i]
                    dfs(tried | {(i, p)}, tuple(nd))

        dfs(frozenset(), (False,) * n)
        return best

    total = Fraction(0)
    for pwd0 in range(n_pwds):
        for pwds in itertools.product(range(n_pwds), repeat=n):
            for flags in itertools.product((False, True), repeat=n):
                p = probs[pwd0] * math.prod(probs[q] for q in pwds)
                for f in flags:
                    p *= fc if f else 1 - fc
                if p and max_planted(pwd0, pwds, flags) >= w:
                    total += p
    return float(total * fk)


# ---------------------------------------------------------------- TDR brute force


def _ads_outcomes(tpr_col, tpr_cnt):
    col, cnt = Fraction(str(tpr_col)), Fraction(str(tpr_cnt))
    hi, lo = max(col, cnt), min(col, cnt)
    cnt_hi = cnt >= col
    outs = [((True, True), lo), ((not cnt_hi, cnt_hi), hi - lo), ((False, False), 1 - hi)]
    return [(v, p) for v, p in outs if p > 0]


def _lexmax(vectors):
    return max(vectors, key=lambda v: (v[0], -v[1]))


def tdr_bruteforce(n, n_pwds, s, w, tpr_col, tpr_cnt, has2fa=frozenset()):
    """Exact (E|accessed|, E|detected|) under the lexicographic optimum.

    For every draw, builds the full set of (accessed, detected) expectation
    vectors achievable by deterministic history-dependent strategies, then
    takes the lexicographic optimum. Arithmetic is exact (Fractions).
    """
    probs = _zipf(n_pwds, s)
    outs = _ads_outcomes(tpr_col, tpr_cnt)
    tfa = tuple(i + 1 in has2fa for i in range(n))

    def achievable(match, attempted, in_set):
        # attempted: tuple of site indices in order; in_set: frozenset of sites holding the password
        vecs = {(Fraction(0), Fraction(0))}
        l = len(attempted) + 1
        for i in range(n):
            if i in attempted:
                continue
            per_outcome = []
            for (col, cnt), p in outs:
                acc = l > w and match[i] and not (col and tfa[i])
                det = acc and cnt and len(in_set - {i}) >= w
                add = col and (not match[i] or tfa[i])
                nxt = in_set | {i} if add else in_set
                child = achievable(match, attempted + (i,), nxt)
                per_outcome.append([(p * (int(acc) + a), p * (int(det) + d)) for a, d in child])
            for combo in itertools.product(*per_outcome):
                vecs.add((sum(c[0] for c in combo), sum(c[1] for c in combo)))
        return vecs

    ea = ed = Fraction(0)
    for leaked in range(n_pwds):
        for pwds in itertools.product(range(n_pwds), repeat=n):
            p = probs[leaked] * math.prod(probs[q] for q in pwds)
            if not p:
                continue
            match = tuple(q == leaked for q in pwds)
            a, d = _lexmax(achievable(match, (), frozenset()))
            ea += p * a
            ed += p * d
    return float(ea), float(ed)
