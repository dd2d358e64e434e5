"""Prime-order groups and additively homomorphic (exponential) ElGamal.

Two groups are provided:

* ``P256`` - the NIST P-256 curve, compressed 33-byte point encoding.
* ``TEST_GROUP`` - the order-65537 subgroup of Z_p^* for a 32-bit prime p,
  4-byte encoding, with a discrete-log table so ciphertexts can be decoded
  in tests. Decoding is never needed by the protocol itself.

Group elements are opaque Python values (affine tuples / ``None`` for the
curve, ints for the test group). All group-level operations are written
additively: ``add`` is the group law and ``mul`` is scalar multiplication.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

from ._backend import kernels

Element = Any

_SYSRAND = secrets.SystemRandom()


class InvalidElement(ValueError):
    """Bytes or value that is not an element of the group."""


class InvalidCiphertext(ValueError):
    """A ciphertext component is not a group element."""


class P256Group:
    name = "p256"
    wire_id = 1
    element_size = 33
    p = kernels.P
    order = kernels.N
    b = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
    generator = (
        0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296,
        0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5,
    )
    identity = None

    @cached_property
    def _gen_table(self):
        return kernels.FixedBase(self.generator)

    def is_element(self, e: Element) -> bool:
        # cofactor 1: every affine point on the curve is in the prime-order group
        if e is None:
            return True
        if not (isinstance(e, tuple) and len(e) == 2):
            return False
        x, y = e
        return isinstance(x, int) and isinstance(y, int) and kernels.on_curve(x, y)

    def add(self, a: Element, b: Element) -> Element:
        return kernels.add(a, b)

    def neg(self, a: Element) -> Element:
        return None if a is None else (a[0], (-a[1]) % self.p)

    def mul(self, k: int, a: Element) -> Element:
        return kernels.mul(k % self.order, a)

    def mul_ct(self, k: int, a: Element) -> Element:
        return kernels.mul_ct(k % self.order, a)

    def mul_gen(self, k: int) -> Element:
        return self._gen_table.mul(k % self.order)

    def fixed_base(self, a: Element):
        return kernels.FixedBase(a)

    def msm_rows(self, rows: Sequence[Sequence[int]], bases: Sequence[Element]) -> list:
        return kernels.msm_rows(rows, bases)

    def encode(self, e: Element) -> bytes:
        if e is None:
            return bytes(33)
        x, y = e
        return bytes([2 | (y & 1)]) + x.to_bytes(32, "big")

    def decode(self, data: bytes) -> Element:
        if len(data) != 33:
            raise InvalidElement("P-256 element must be 33 bytes")
        if data == bytes(33):
            return None
        prefix = data[0]
        if prefix not in (2, 3):
            raise InvalidElement("bad point prefix")
        x = int.from_bytes(data[1:], "big")
        if x >= self.p:
            raise InvalidElement("x coordinate out of range")
        y = kernels.decompress(x, prefix & 1)
        if y is None:
            raise InvalidElement("point not on curve")
        return (x, y)

    def __repr__(self) -> str:
        return "P256Group()"


class ModPGroup:
    """Order-r subgroup of Z_p^* with r | p - 1. Elements are residues."""

    wire_id = 2
    element_size = 4

    def __init__(self, p: int, order: int, generator: int, name: str = "test"):
        self.p = p
        self.order = order
        self.generator = generator
        self.name = name
        self.identity = 1

    @cached_property
    def _dlog(self) -> dict[int, int]:
        table = {}
        acc = 1
        for m in range(self.order):
            table[acc] = m
            acc = acc * self.generator % self.p
        return table

    def is_element(self, e: Element) -> bool:
        return (
            isinstance(e, int)
            and not isinstance(e, bool)
            and 1 <= e < self.p
            and pow(e, self.order, self.p) == 1
        )

    def add(self, a: Element, b: Element) -> Element:
        return a * b % self.p

    def neg(self, a: Element) -> Element:
        return pow(a, -1, self.p)

    def mul(self, k: int, a: Element) -> Element:
        return pow(a, k % self.order, self.p)

    # the test group makes no side-channel claims
    mul_ct = mul

    def mul_gen(self, k: int) -> Element:
        return pow(self.generator, k % self.order, self.p)

    def fixed_base(self, a: Element):
        return _ModPFixed(self, a)

    def msm_rows(self, rows: Sequence[Sequence[int]], bases: Sequence[Element]) -> list:
        r = self.order
        return kernels.zp_msm_rows([[k % r for k in row] for row in rows], list(bases), self.p)

    def encode(self, e: Element) -> bytes:
        return e.to_bytes(4, "big")

    def decode(self, data: bytes) -> Element:
        if len(data) != 4:
            raise InvalidElement("test-group element must be 4 bytes")
        e = int.from_bytes(data, "big")
        if not self.is_element(e):
            raise InvalidElement("residue outside the order-r subgroup")
        return e

    def dlog(self, e: Element) -> int:
        """Discrete log base g; only feasible because r is tiny."""
        return self._dlog[e]

    def __repr__(self) -> str:
        return f"ModPGroup(p={self.p}, order={self.order})"


class _ModPFixed:
    __slots__ = ("group", "point")

    def __init__(self, group: ModPGroup, point: int):
        self.group = group
        self.point = point

    def mul(self, k: int) -> int:
        return pow(self.point, k % self.group.order, self.group.p)


P256 = P256Group()
# p = 65537 * 65514 + 1 is prime; g = 2^((p-1)/r) mod p
TEST_GROUP = ModPGroup(p=4293591019, order=65537, generator=3398509064)

GROUPS = {"production": P256, "p256": P256, "test": TEST_GROUP}
GROUPS_BY_WIRE_ID = {P256.wire_id: P256, TEST_GROUP.wire_id: TEST_GROUP}


def get_group(name: str):
    try:
        return GROUPS[name]
    except KeyError:
        raise ValueError(f"unknown group {name!r}; choose from {sorted(GROUPS)}") from None


# ---------------------------------------------------------------- ElGamal


@dataclass(frozen=True)
class Ciphertext:
    v: Element
    w: Element

    def to_bytes(self, group) -> bytes:
        return group.encode(self.v) + group.encode(self.w)

    @classmethod
    def from_bytes(cls, group, data: bytes) -> "Ciphertext":
        n = group.element_size
        if len(data) != 2 * n:
            raise InvalidCiphertext("wrong ciphertext length")
        try:
            return cls(group.decode(data[:n]), group.decode(data[n:]))
        except InvalidElement as exc:
            raise InvalidCiphertext(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class PublicKey:
    group: Any
    u_point: Element

    @cached_property
    def table(self):
        return self.group.fixed_base(self.u_point)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, PublicKey)
            and self.group is other.group
            and self.u_point == other.u_point
        )

    def __hash__(self) -> int:
        return hash((self.group.name, self.u_point))

    def to_bytes(self) -> bytes:
        return self.group.encode(self.u_point)


@dataclass(frozen=True)
class KeyPair:
    sk: int = field(repr=False)
    pk: PublicKey


def random_scalar(group, rng=None, nonzero: bool = False) -> int:
    rng = rng or _SYSRAND
    return rng.randrange(1 if nonzero else 0, group.order)


def gen(group="production", rng=None) -> KeyPair:
    """Fresh keypair. ``u`` is drawn from [1, r) so U is never the identity."""
    if isinstance(group, str):
        group = get_group(group)
    u = random_scalar(group, rng, nonzero=True)
    return KeyPair(u, PublicKey(group, group.mul_gen(u)))


def encrypt(pk: PublicKey, m: int, rng=None) -> Ciphertext:
    g = pk.group
    y = random_scalar(g, rng)
    return Ciphertext(g.mul_gen(y), g.add(g.mul_gen(m), pk.table.mul(y)))


def validate(pk: PublicKey, c: Any) -> bool:
    """Ciphertext-space membership: both components are group elements."""
    if not isinstance(c, Ciphertext):
        return False
    return pk.group.is_element(c.v) and pk.group.is_element(c.w)


def _require_valid(pk: PublicKey, *cts: Ciphertext) -> None:
    for c in cts:
        if not validate(pk, c):
            raise InvalidCiphertext("ciphertext component is not a group element")


def rerandomize(pk: PublicKey, c: Ciphertext, rng=None) -> Ciphertext:
    g = pk.group
    y = random_scalar(g, rng)
    return Ciphertext(g.add(c.v, g.mul_gen(y)), g.add(c.w, pk.table.mul(y)))


def add(pk: PublicKey, c1: Ciphertext, c2: Ciphertext, rng=None) -> Ciphertext:
    _require_valid(pk, c1, c2)
    g = pk.group
    return rerandomize(pk, Ciphertext(g.add(c1.v, c2.v), g.add(c1.w, c2.w)), rng)


def scalar_mul(pk: PublicKey, k: int, c: Ciphertext, rng=None) -> Ciphertext:
    _require_valid(pk, c)
    g = pk.group
    return rerandomize(pk, Ciphertext(g.mul(k, c.v), g.mul(k, c.w)), rng)


def zero_test(kp: KeyPair, c: Any) -> bool:
    """True iff ``c`` encrypts zero under ``kp`` (W = u*V). Invalid input is false."""
    if not validate(kp.pk, c):
        return False
    g = kp.pk.group
    return g.mul_ct(kp.sk, c.v) == c.w


def decode(kp: KeyPair, c: Ciphertext) -> int:
    """Recover m from enc(m). Test group only."""
    g = kp.pk.group
    if not hasattr(g, "dlog"):
        raise TypeError("decode needs a group with a discrete-log table")
    _require_valid(kp.pk, c)
    gm = g.add(c.w, g.neg(g.mul(kp.sk, c.v)))
    return g.dlog(gm)
