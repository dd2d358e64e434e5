/* P-256 arithmetic: 4x64-bit Montgomery field, Jacobian points (a = -3),
 * Straus multi-scalar multiplication, fixed-base window tables and a
 * Montgomery ladder for secret scalars. Plus a tiny Z_p^* kernel for p < 2^32. */
#ifndef CREDSTUFF_P256CORE_H
#define CREDSTUFF_P256CORE_H

#include <stdint.h>
#include <stdlib.h>
#include <string.h>

typedef uint64_t u64;
typedef unsigned __int128 u128;

typedef struct { u64 v[4]; } fe;
typedef struct { fe X, Y, Z; } jpt;  /* Z == 0 encodes the point at infinity */

static const u64 FE_P[4] = {0xffffffffffffffffULL, 0x00000000ffffffffULL,
                            0x0000000000000000ULL, 0xffffffff00000001ULL};
static const fe FE_RR = {{0x0000000000000003ULL, 0xfffffffbffffffffULL,
                          0xfffffffffffffffeULL, 0x00000004fffffffdULL}};
static const fe FE_ONE = {{0x0000000000000001ULL, 0xffffffff00000000ULL,
                           0xffffffffffffffffULL, 0x00000000fffffffeULL}};
static const fe FE_B = {{0xd89cdf6229c4bddfULL, 0xacf005cd78843090ULL,
                         0xe5a220abf7212ed6ULL, 0xdc30061d04874834ULL}};
static const fe FE_RAW_ONE = {{1, 0, 0, 0}};

/* constant-time select: r = mask ? a : b, mask all-ones or zero */
static inline void fe_select(fe *r, const fe *a, const fe *b, u64 mask) {
    for (int j = 0; j < 4; j++) r->v[j] = (a->v[j] & mask) | (b->v[j] & ~mask);
}

static inline void fe_mul(fe *r, const fe *a, const fe *b) {
    u64 t[6] = {0, 0, 0, 0, 0, 0};
    for (int i = 0; i < 4; i++) {
        u128 c = 0;
        for (int j = 0; j < 4; j++) {
            c += (u128)a->v[j] * b->v[i] + t[j];
            t[j] = (u64)c;
            c >>= 64;
        }
        c += t[4];
        t[4] = (u64)c;
        t[5] = (u64)(c >> 64);
        /* -p^{-1} mod 2^64 == 1 for this prime */
        u64 m = t[0];
        c = (u128)m * FE_P[0] + t[0];
        c >>= 64;
        for (int j = 1; j < 4; j++) {
            c += (u128)m * FE_P[j] + t[j];
            t[j - 1] = (u64)c;
            c >>= 64;
        }
        c += t[4];
        t[3] = (u64)c;
        t[4] = t[5] + (u64)(c >> 64);
    }
    u64 d[4], bw = 0;
    for (int j = 0; j < 4; j++) {
        u128 s = (u128)t[j] - FE_P[j] - bw;
        d[j] = (u64)s;
        bw = (u64)(s >> 64) & 1;
    }
    u64 mask = (u64)0 - (t[4] | (bw ^ 1));
    for (int j = 0; j < 4; j++) r->v[j] = (d[j] & mask) | (t[j] & ~mask);
}

static inline void fe_sqr(fe *r, const fe *a) { fe_mul(r, a, a); }

static inline void fe_add(fe *r, const fe *a, const fe *b) {
    u64 t[4], d[4], bw = 0;
    u128 c = 0;
    for (int j = 0; j < 4; j++) {
        c += (u128)a->v[j] + b->v[j];
        t[j] = (u64)c;
        c >>= 64;
    }
    u64 carry = (u64)c;
    for (int j = 0; j < 4; j++) {
        u128 s = (u128)t[j] - FE_P[j] - bw;
        d[j] = (u64)s;
        bw = (u64)(s >> 64) & 1;
    }
    u64 mask = (u64)0 - (carry | (bw ^ 1));
    for (int j = 0; j < 4; j++) r->v[j] = (d[j] & mask) | (t[j] & ~mask);
}

static inline void fe_sub(fe *r, const fe *a, const fe *b) {
    u64 t[4], bw = 0;
    for (int j = 0; j < 4; j++) {
        u128 s = (u128)a->v[j] - b->v[j] - bw;
        t[j] = (u64)s;
        bw = (u64)(s >> 64) & 1;
    }
    u64 mask = (u64)0 - bw;
    u128 c = 0;
    for (int j = 0; j < 4; j++) {
        c += (u128)t[j] + (FE_P[j] & mask);
        r->v[j] = (u64)c;
        c >>= 64;
    }
}

static inline int fe_is_zero(const fe *a) {
    return (a->v[0] | a->v[1] | a->v[2] | a->v[3]) == 0;
}

static inline int fe_equal(const fe *a, const fe *b) {
    return ((a->v[0] ^ b->v[0]) | (a->v[1] ^ b->v[1]) |
            (a->v[2] ^ b->v[2]) | (a->v[3] ^ b->v[3])) == 0;
}

/* a^(p-2); the exponent is public so the pattern does not depend on data */
static void fe_inv(fe *r, const fe *a) {
    static const u64 E[4] = {0xfffffffffffffffdULL, 0x00000000ffffffffULL,
                             0x0000000000000000ULL, 0xffffffff00000001ULL};
    fe acc = FE_ONE;
    for (int i = 255; i >= 0; i--) {
        fe_sqr(&acc, &acc);
        if ((E[i / 64] >> (i % 64)) & 1) fe_mul(&acc, &acc, a);
    }
    *r = acc;
}

static void fe_from_bytes(fe *r, const unsigned char *b) {
    fe raw;
    for (int j = 0; j < 4; j++) {
        u64 w = 0;
        for (int k = 0; k < 8; k++) w = (w << 8) | b[(3 - j) * 8 + k];
        raw.v[j] = w;
    }
    fe_mul(r, &raw, &FE_RR);
}

static void fe_to_bytes(unsigned char *b, const fe *a) {
    fe raw;
    fe_mul(&raw, a, &FE_RAW_ONE);
    for (int j = 0; j < 4; j++) {
        u64 w = raw.v[j];
        for (int k = 7; k >= 0; k--) {
            b[(3 - j) * 8 + k] = (unsigned char)(w & 0xff);
            w >>= 8;
        }
    }
}

static inline void jpt_set_inf(jpt *r) {
    r->X = FE_ONE;
    r->Y = FE_ONE;
    memset(&r->Z, 0, sizeof(fe));
}

static inline int jpt_is_inf(const jpt *p) { return fe_is_zero(&p->Z); }

static void jpt_double(jpt *r, const jpt *p) {
    fe delta, gamma, beta, alpha, t1, t2, beta4, x3, y3, z3;
    fe_sqr(&delta, &p->Z);
    fe_sqr(&gamma, &p->Y);
    fe_mul(&beta, &p->X, &gamma);
    fe_sub(&t1, &p->X, &delta);
    fe_add(&t2, &p->X, &delta);
    fe_mul(&alpha, &t1, &t2);
    fe_add(&t1, &alpha, &alpha);
    fe_add(&alpha, &t1, &alpha);
    fe_add(&beta4, &beta, &beta);
    fe_add(&beta4, &beta4, &beta4);
    fe_sqr(&x3, &alpha);
    fe_sub(&x3, &x3, &beta4);
    fe_sub(&x3, &x3, &beta4);
    fe_add(&z3, &p->Y, &p->Z);
    fe_sqr(&z3, &z3);
    fe_sub(&z3, &z3, &gamma);
    fe_sub(&z3, &z3, &delta);
    fe_sub(&t1, &beta4, &x3);
    fe_mul(&y3, &alpha, &t1);
    fe_sqr(&t2, &gamma);
    fe_add(&t2, &t2, &t2);
    fe_add(&t2, &t2, &t2);
    fe_add(&t2, &t2, &t2);
    fe_sub(&y3, &y3, &t2);
    r->X = x3;
    r->Y = y3;
    r->Z = z3;
}

static void jpt_add(jpt *r, const jpt *a, const jpt *b) {
    if (jpt_is_inf(a)) { *r = *b; return; }
    if (jpt_is_inf(b)) { *r = *a; return; }
    fe z1z1, z2z2, u1, u2, s1, s2, h, i, j, rr, v, t, x3, y3, z3;
    fe_sqr(&z1z1, &a->Z);
    fe_sqr(&z2z2, &b->Z);
    fe_mul(&u1, &a->X, &z2z2);
    fe_mul(&u2, &b->X, &z1z1);
    fe_mul(&s1, &a->Y, &b->Z);
    fe_mul(&s1, &s1, &z2z2);
    fe_mul(&s2, &b->Y, &a->Z);
    fe_mul(&s2, &s2, &z1z1);
    fe_sub(&h, &u2, &u1);
    fe_sub(&rr, &s2, &s1);
    if (fe_is_zero(&h)) {
        if (fe_is_zero(&rr)) { jpt_double(r, a); return; }
        jpt_set_inf(r);
        return;
    }
    fe_add(&rr, &rr, &rr);
    fe_add(&i, &h, &h);
    fe_sqr(&i, &i);
    fe_mul(&j, &h, &i);
    fe_mul(&v, &u1, &i);
    fe_sqr(&x3, &rr);
    fe_sub(&x3, &x3, &j);
    fe_sub(&x3, &x3, &v);
    fe_sub(&x3, &x3, &v);
    fe_sub(&t, &v, &x3);
    fe_mul(&y3, &rr, &t);
    fe_mul(&t, &s1, &j);
    fe_add(&t, &t, &t);
    fe_sub(&y3, &y3, &t);
    fe_add(&z3, &a->Z, &b->Z);
    fe_sqr(&z3, &z3);
    fe_sub(&z3, &z3, &z1z1);
    fe_sub(&z3, &z3, &z2z2);
    fe_mul(&z3, &z3, &h);
    r->X = x3;
    r->Y = y3;
    r->Z = z3;
}

static void jpt_from_affine(jpt *r, const unsigned char *x, const unsigned char *y) {
    fe_from_bytes(&r->X, x);
    fe_from_bytes(&r->Y, y);
    r->Z = FE_ONE;
}

/* returns 0 for infinity, 1 otherwise */
static int jpt_to_affine(const jpt *p, unsigned char *x, unsigned char *y) {
    if (jpt_is_inf(p)) return 0;
    fe zi, zi2, ax, ay;
    fe_inv(&zi, &p->Z);
    fe_sqr(&zi2, &zi);
    fe_mul(&ax, &p->X, &zi2);
    fe_mul(&ay, &p->Y, &zi2);
    fe_mul(&ay, &ay, &zi);
    fe_to_bytes(x, &ax);
    fe_to_bytes(y, &ay);
    return 1;
}

static int p256_on_curve(const unsigned char *x, const unsigned char *y) {
    fe fx, fy, lhs, rhs, t;
    fe_from_bytes(&fx, x);
    fe_from_bytes(&fy, y);
    fe_sqr(&lhs, &fy);
    fe_sqr(&rhs, &fx);
    fe_mul(&rhs, &rhs, &fx);
    fe_add(&t, &fx, &fx);
    fe_add(&t, &t, &fx);
    fe_sub(&rhs, &rhs, &t);
    fe_add(&rhs, &rhs, &FE_B);
    return fe_equal(&lhs, &rhs);
}

/* y with y^2 = x^3 - 3x + b and the requested parity; 0 if x is not on the curve */
static int p256_decompress(const unsigned char *x, int odd, unsigned char *y) {
    static const u64 E[4] = {0x0000000000000000ULL, 0x0000000040000000ULL,
                             0x4000000000000000ULL, 0x3fffffffc0000000ULL};
    fe fx, rhs, t, acc = FE_ONE;
    fe_from_bytes(&fx, x);
    fe_sqr(&rhs, &fx);
    fe_mul(&rhs, &rhs, &fx);
    fe_add(&t, &fx, &fx);
    fe_add(&t, &t, &fx);
    fe_sub(&rhs, &rhs, &t);
    fe_add(&rhs, &rhs, &FE_B);
    for (int i = 255; i >= 0; i--) {
        fe_sqr(&acc, &acc);
        if ((E[i / 64] >> (i % 64)) & 1) fe_mul(&acc, &acc, &rhs);
    }
    fe_sqr(&t, &acc);
    if (!fe_equal(&t, &rhs)) return 0;
    fe_to_bytes(y, &acc);
    if ((y[31] & 1) != (odd & 1)) {
        fe zero = {{0, 0, 0, 0}};
        fe_sub(&acc, &zero, &acc);
        fe_to_bytes(y, &acc);
    }
    return 1;
}

static inline unsigned nibble_at(const unsigned char *k32, int w) {
    unsigned char byte = k32[31 - w / 2];
    return (w & 1) ? (byte >> 4) : (byte & 0x0f);
}

/* Straus with 4-bit windows; rows share the per-base tables.
 * scalars: rows * m * 32 bytes big-endian; out: rows points. */
static int p256_msm_rows(const jpt *bases, int m, const unsigned char *scalars,
                         int rows, jpt *out) {
    jpt *tab = (jpt *)malloc(sizeof(jpt) * 16 * (size_t)(m > 0 ? m : 1));
    if (!tab) return -1;
    for (int i = 0; i < m; i++) {
        jpt *t = tab + 16 * i;
        jpt_set_inf(&t[0]);
        t[1] = bases[i];
        jpt_double(&t[2], &bases[i]);
        for (int d = 3; d < 16; d++) jpt_add(&t[d], &t[d - 1], &bases[i]);
    }
    for (int row = 0; row < rows; row++) {
        const unsigned char *ks = scalars + (size_t)row * m * 32;
        jpt acc;
        jpt_set_inf(&acc);
        for (int w = 63; w >= 0; w--) {
            if (!jpt_is_inf(&acc)) {
                for (int s = 0; s < 4; s++) jpt_double(&acc, &acc);
            }
            for (int i = 0; i < m; i++) {
                unsigned d = nibble_at(ks + 32 * i, w);
                if (d) jpt_add(&acc, &acc, &tab[16 * i + d]);
            }
        }
        out[row] = acc;
    }
    free(tab);
    return 0;
}

/* fixed-base table: tab[w*16 + d] = d * 16^w * P */
static void p256_fixed_build(jpt *tab, const jpt *p) {
    jpt base = *p;
    for (int w = 0; w < 64; w++) {
        jpt *t = tab + 16 * w;
        jpt_set_inf(&t[0]);
        t[1] = base;
        for (int d = 2; d < 16; d++) jpt_add(&t[d], &t[d - 1], &base);
        for (int s = 0; s < 4; s++) jpt_double(&base, &base);
    }
}

static void p256_fixed_mul(jpt *r, const jpt *tab, const unsigned char *k32) {
    jpt acc;
    jpt_set_inf(&acc);
    for (int w = 0; w < 64; w++) {
        unsigned d = nibble_at(k32, w);
        if (d) jpt_add(&acc, &acc, &tab[16 * w + d]);
    }
    *r = acc;
}

static inline void jpt_cswap(jpt *a, jpt *b, u64 bit) {
    u64 mask = (u64)0 - bit;
    fe *fa[3] = {&a->X, &a->Y, &a->Z};
    fe *fb[3] = {&b->X, &b->Y, &b->Z};
    for (int c = 0; c < 3; c++) {
        for (int j = 0; j < 4; j++) {
            u64 t = (fa[c]->v[j] ^ fb[c]->v[j]) & mask;
            fa[c]->v[j] ^= t;
            fb[c]->v[j] ^= t;
        }
    }
}

/* Montgomery ladder over a fixed 257-bit scalar. k33 is k + n or k + 2n
 * (chosen by the caller in constant time) so bit 256 is always set and the
 * iteration count never depends on k. Exceptional additions (R0 = +-R1) only
 * occur with negligible probability for a prime-order point. */
static void p256_ladder(jpt *r, const jpt *p, const unsigned char *k33) {
    jpt r0 = *p, r1;
    jpt_double(&r1, p);
    for (int i = 255; i >= 0; i--) {
        u64 bit = (k33[32 - i / 8] >> (i % 8)) & 1;
        jpt_cswap(&r0, &r1, bit);
        jpt_add(&r1, &r0, &r1);
        jpt_double(&r0, &r0);
        jpt_cswap(&r0, &r1, bit);
    }
    *r = r0;
}

/* ---- Z_p^* with p < 2^32 ---- */

static inline u64 zp_pow(u64 b, u64 e, u64 p) {
    u64 acc = 1;
    b %= p;
    while (e) {
        if (e & 1) acc = acc * b % p;
        b = b * b % p;
        e >>= 1;
    }
    return acc;
}

/* out[row] = prod_i bases[i]^scalars[row*m + i] mod p, 4-bit windows per base */
static int zp_msm_rows(const u64 *bases, int m, const u64 *scalars, int rows,
                       u64 p, u64 *out) {
    int bits = 0;
    for (int k = 0; k < rows * m; k++) {
        int b = 64 - (scalars[k] ? __builtin_clzll(scalars[k]) : 64);
        if (b > bits) bits = b;
    }
    int windows = (bits + 3) / 4;
    u64 *tab = (u64 *)malloc(sizeof(u64) * 16 * (size_t)(m > 0 ? m : 1));
    if (!tab) return -1;
    for (int i = 0; i < m; i++) {
        u64 *t = tab + 16 * i;
        t[0] = 1;
        for (int d = 1; d < 16; d++) t[d] = t[d - 1] * (bases[i] % p) % p;
    }
    for (int row = 0; row < rows; row++) {
        const u64 *ks = scalars + (size_t)row * m;
        u64 acc = 1;
        for (int w = windows - 1; w >= 0; w--) {
            for (int s = 0; s < 4; s++) acc = acc * acc % p;
            for (int i = 0; i < m; i++) {
                unsigned d = (unsigned)((ks[i] >> (4 * w)) & 0xf);
                if (d) acc = acc * tab[16 * i + d] % p;
            }
        }
        out[row] = acc;
    }
    free(tab);
    return 0;
}

#endif
