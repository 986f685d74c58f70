"""Affine point arithmetic on BLS12-381 G1 and its sextic twist.

Points are affine coordinate tuples; None is the point at infinity.
G1 lives on y^2 = x^3 + 4 over Fq, the twist on y^2 = x^3 + 4(1+u)
over Fq2. Serialization is uncompressed big-endian with ZCash-style
flag bits in the first byte (bit 6 marks infinity).
"""

from __future__ import annotations

from typing import Optional

from gmpy2 import invert, mpz

from .fields import (
    P,
    R,
    Fq2,
    FQ2_ZERO,
    fq2_add,
    fq2_inv,
    fq2_mul,
    fq2_neg,
    fq2_scale,
    fq2_sqr,
    fq2_sub,
)

G1Point = Optional[tuple]  # (x, y) in Fq
G2Point = Optional[tuple]  # (x, y) in Fq2

B1 = mpz(4)
B2: Fq2 = (mpz(4), mpz(4))

G1_GENERATOR: G1Point = (
    mpz(0x17F1D3A73197D7942695638C4FA9AC0FC3688C4F9774B905A14E3A3F171BAC586C55E83FF97A1AEFFB3AF00ADB22C6BB),
    mpz(0x08B3F481E3AAA0F1A09E30ED741D8AE4FCF5E095D5D00AF600DB18CB2C04B3EDD03CC744A2888AE40CAA232946C5E7E1),
)

G2_GENERATOR: G2Point = (
    (
        mpz(352701069587466618187139116011060144890029952792775240219908644239793785735715026873347600343865175952761926303160),
        mpz(3059144344244213709971259814753781636986470325476647558659373206291635324768958432433509563104347017837885763365758),
    ),
    (
        mpz(1985150602287291935568054521177171638300868978215655730859378665066344726373823718423869104263333984641494340347905),
        mpz(927553665492332455747201965776037880757740193453592970025027978793976877002675564980949289727957565575433344219582),
    ),
)

G1_COFACTOR = 0x396C8C005555E1568C00AAAB0000AAAB


# --- G1 ---------------------------------------------------------------------

def g1_is_on_curve(p: G1Point) -> bool:
    if p is None:
        return True
    x, y = p
    return (y * y - (x * x * x + B1)) % P == 0


def g1_neg(p: G1Point) -> G1Point:
    if p is None:
        return None
    return (p[0], -p[1] % P)


def g1_double(p: G1Point) -> G1Point:
    if p is None:
        return None
    x, y = p
    if y == 0:
        return None
    lam = 3 * x * x % P * invert(2 * y % P, P) % P
    x3 = (lam * lam - 2 * x) % P
    return (x3, (lam * (x - x3) - y) % P)


def g1_add(p: G1Point, q: G1Point) -> G1Point:
    if p is None:
        return q
    if q is None:
        return p
    x1, y1 = p
    x2, y2 = q
    if x1 == x2:
        if (y1 + y2) % P == 0:
            return None
        return g1_double(p)
    lam = (y2 - y1) % P * invert((x2 - x1) % P, P) % P
    x3 = (lam * lam - x1 - x2) % P
    return (x3, (lam * (x1 - x3) - y1) % P)


def g1_mul(p: G1Point, k: int) -> G1Point:
    k = int(k) % int(R)
    if p is None or k == 0:
        return None
    # 4-bit fixed window
    table = [None, p]
    for _ in range(14):
        table.append(g1_add(table[-1], p))
    acc: G1Point = None
    for shift in range(k.bit_length() - (k.bit_length() % 4 or 4), -1, -4):
        if acc is not None:
            acc = g1_double(g1_double(g1_double(g1_double(acc))))
        d = (k >> shift) & 0xF
        if d:
            acc = g1_add(acc, table[d])
    return acc


def g1_in_subgroup(p: G1Point) -> bool:
    return g1_is_on_curve(p) and g1_mul_raw(p, int(R)) is None


def g1_mul_raw(p: G1Point, k: int) -> G1Point:
    """Scalar multiplication without reduction mod R (cofactor clearing)."""
    acc: G1Point = None
    add = p
    while k:
        if k & 1:
            acc = g1_add(acc, add)
        add = g1_double(add)
        k >>= 1
    return acc


def g1_serialize(p: G1Point) -> bytes:
    if p is None:
        return bytes([0x40]) + bytes(95)
    x, y = p
    return int(x).to_bytes(48, "big") + int(y).to_bytes(48, "big")


def g1_deserialize(data: bytes) -> G1Point:
    if len(data) != 96:
        raise ValueError(f"G1 encoding must be 96 bytes, got {len(data)}")
    flags = data[0] & 0xE0
    if flags == 0x40:
        if any(data[1:]):
            raise ValueError("G1 infinity encoding has stray bits")
        return None
    if flags != 0:
        raise ValueError("bad G1 flag bits")
    x = int.from_bytes(data[:48], "big")
    y = int.from_bytes(data[48:], "big")
    if x >= P or y >= P:
        raise ValueError("G1 coordinate out of range")
    p = (mpz(x), mpz(y))
    if not g1_is_on_curve(p):
        raise ValueError("G1 point not on curve")
    return p


# --- G2 (twist) ---------------------------------------------------------------

def g2_is_on_curve(p: G2Point) -> bool:
    if p is None:
        return True
    x, y = p
    rhs = fq2_add(fq2_mul(fq2_sqr(x), x), B2)
    return fq2_sqr(y) == rhs


def g2_neg(p: G2Point) -> G2Point:
    if p is None:
        return None
    return (p[0], fq2_neg(p[1]))


def g2_double(p: G2Point) -> G2Point:
    if p is None:
        return None
    x, y = p
    if y == FQ2_ZERO:
        return None
    lam = fq2_mul(fq2_scale(fq2_sqr(x), 3), fq2_inv(fq2_scale(y, 2)))
    x3 = fq2_sub(fq2_sqr(lam), fq2_scale(x, 2))
    return (x3, fq2_sub(fq2_mul(lam, fq2_sub(x, x3)), y))


def g2_add(p: G2Point, q: G2Point) -> G2Point:
    if p is None:
        return q
    if q is None:
        return p
    x1, y1 = p
    x2, y2 = q
    if x1 == x2:
        if fq2_add(y1, y2) == FQ2_ZERO:
            return None
        return g2_double(p)
    lam = fq2_mul(fq2_sub(y2, y1), fq2_inv(fq2_sub(x2, x1)))
    x3 = fq2_sub(fq2_sub(fq2_sqr(lam), x1), x2)
    return (x3, fq2_sub(fq2_mul(lam, fq2_sub(x1, x3)), y1))


def g2_mul(p: G2Point, k: int) -> G2Point:
    k = int(k) % int(R)
    if p is None or k == 0:
        return None
    table = [None, p]
    for _ in range(14):
        table.append(g2_add(table[-1], p))
    acc: G2Point = None
    for shift in range(k.bit_length() - (k.bit_length() % 4 or 4), -1, -4):
        if acc is not None:
            acc = g2_double(g2_double(g2_double(g2_double(acc))))
        d = (k >> shift) & 0xF
        if d:
            acc = g2_add(acc, table[d])
    return acc


def g2_in_subgroup(p: G2Point) -> bool:
    if not g2_is_on_curve(p):
        return False
    acc: G2Point = None
    add = p
    k = int(R)
    while k:
        if k & 1:
            acc = g2_add(acc, add)
        add = g2_double(add)
        k >>= 1
    return acc is None


def g2_serialize(p: G2Point) -> bytes:
    if p is None:
        return bytes([0x40]) + bytes(191)
    (x0, x1), (y0, y1) = p
    return b"".join(int(c).to_bytes(48, "big") for c in (x1, x0, y1, y0))


def g2_deserialize(data: bytes) -> G2Point:
    if len(data) != 192:
        raise ValueError(f"G2 encoding must be 192 bytes, got {len(data)}")
    flags = data[0] & 0xE0
    if flags == 0x40:
        if any(data[1:]):
            raise ValueError("G2 infinity encoding has stray bits")
        return None
    if flags != 0:
        raise ValueError("bad G2 flag bits")
    coords = [int.from_bytes(data[i * 48:(i + 1) * 48], "big") for i in range(4)]
    if any(c >= P for c in coords):
        raise ValueError("G2 coordinate out of range")
    x1, x0, y1, y0 = (mpz(c) for c in coords)
    p = ((x0, x1), (y0, y1))
    if not g2_is_on_curve(p):
        raise ValueError("G2 point not on twist")
    return p


# --- fixed-base windowed tables -----------------------------------------------

class FixedBaseTable:
    """Precomputed 4-bit windows for repeated exponentiation of one base.

    Generic over the group: ``add`` combines two elements (identity is
    None for points), ``double`` doubles one. Build cost is ~1k group
    ops, amortized after a handful of scalar multiplications.
    """

    def __init__(self, base, add, double, bits: int = 256):
        self._add = add
        windows = []
        cur = base
        for _ in range((bits + 3) // 4):
            row = [None, cur]
            for _ in range(14):
                row.append(add(row[-1], cur))
            windows.append(row)
            cur = double(double(double(double(cur))))
        self._windows = windows

    def mul(self, k: int):
        acc = None
        add = self._add
        w = 0
        k = int(k)
        while k:
            d = k & 0xF
            if d:
                acc = add(acc, self._windows[w][d])
            k >>= 4
            w += 1
        return acc
