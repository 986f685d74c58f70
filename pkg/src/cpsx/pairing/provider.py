"""Abstract bilinear group provider and its BLS12-381 implementation.

The ABE layer talks only to :class:`BilinearGroupProvider`; everything
curve-specific (tower arithmetic, Miller loop, encodings) stays behind
this interface, and the provider in use is recorded by ``group_id`` in
serialized public parameters so ciphertexts name the group they live in.
"""

from __future__ import annotations

import abc
import hashlib
import secrets
from functools import lru_cache
from typing import Iterable, Optional

from gmpy2 import mpz

from . import curve, fields, pairing as _pairing
from .curve import FixedBaseTable, G1Point, G2Point
from .fields import FQ12_ONE, Fq12, P, R, fq12_conj, fq12_mul, fq12_sqr

Scalar = int
GtElement = Fq12

SCALAR_BYTES = 32
G1_BYTES = 96
G2_BYTES = 192
GT_BYTES = 576


class BilinearGroupProvider(abc.ABC):
    """Capability record for a type-3 pairing group of prime order.

    All element parameters and return values are opaque handles; callers
    move them across trust boundaries only through the *_to_bytes /
    *_from_bytes codecs.
    """

    group_id: str

    @property
    @abc.abstractmethod
    def order(self) -> int:
        """Prime order shared by G1, G2 and GT."""

    @abc.abstractmethod
    def random_scalar(self) -> Scalar:
        """Uniform scalar in [1, order-1]."""

    # Source group 1
    @abc.abstractmethod
    def g1_gen_mul(self, k: Scalar) -> G1Point: ...

    @abc.abstractmethod
    def g1_mul(self, p: G1Point, k: Scalar) -> G1Point: ...

    @abc.abstractmethod
    def g1_add(self, p: G1Point, q: G1Point) -> G1Point: ...

    @abc.abstractmethod
    def hash_to_g1(self, token: bytes) -> G1Point: ...

    @abc.abstractmethod
    def g1_to_bytes(self, p: G1Point) -> bytes: ...

    @abc.abstractmethod
    def g1_from_bytes(self, data: bytes) -> G1Point: ...

    # Source group 2
    @abc.abstractmethod
    def g2_gen_mul(self, k: Scalar) -> G2Point: ...

    @abc.abstractmethod
    def g2_mul(self, q: G2Point, k: Scalar) -> G2Point: ...

    @abc.abstractmethod
    def g2_add(self, p: G2Point, q: G2Point) -> G2Point: ...

    @abc.abstractmethod
    def g2_to_bytes(self, q: G2Point) -> bytes: ...

    @abc.abstractmethod
    def g2_from_bytes(self, data: bytes) -> G2Point: ...

    # Target group
    @abc.abstractmethod
    def gt_gen_mul(self, k: Scalar) -> GtElement:
        """e(g1, g2)^k for the fixed generators."""

    @abc.abstractmethod
    def gt_mul(self, a: GtElement, b: GtElement) -> GtElement: ...

    @abc.abstractmethod
    def gt_inv(self, a: GtElement) -> GtElement: ...

    @abc.abstractmethod
    def gt_pow(self, a: GtElement, k: Scalar) -> GtElement: ...

    @abc.abstractmethod
    def gt_identity(self) -> GtElement: ...

    @abc.abstractmethod
    def gt_to_bytes(self, a: GtElement) -> bytes: ...

    @abc.abstractmethod
    def gt_from_bytes(self, data: bytes) -> GtElement: ...

    # Pairing
    @abc.abstractmethod
    def pair(self, p: G1Point, q: G2Point) -> GtElement: ...

    @abc.abstractmethod
    def multi_pair(self, pairs: Iterable[tuple[G1Point, G2Point]]) -> GtElement:
        """Product of e(p_i, q_i), sharing one Miller loop."""

    # Scalar codec shared by every provider.
    def scalar_to_bytes(self, k: Scalar) -> bytes:
        return int(k % self.order).to_bytes(SCALAR_BYTES, "big")

    def scalar_from_bytes(self, data: bytes) -> Scalar:
        if len(data) != SCALAR_BYTES:
            raise ValueError(f"scalar encoding must be {SCALAR_BYTES} bytes")
        return int.from_bytes(data, "big") % self.order


# --- BLS12-381 ---------------------------------------------------------------

_H2C_TAG = b"cpsx-hash-to-g1:"


@lru_cache(maxsize=8192)
def _hash_to_g1_cached(token: bytes) -> G1Point:
    # Try-and-increment: p = 3 mod 4, so a square root (when one exists)
    # is rhs^((p+1)/4). The cofactor multiply lands the point in the
    # r-order subgroup.
    sqrt_exp = (P + 1) // 4
    ctr = 0
    while True:
        digest = hashlib.sha512(
            _H2C_TAG + ctr.to_bytes(4, "big") + token
        ).digest()
        x = mpz(int.from_bytes(digest, "big") % P)
        rhs = (x * x * x + curve.B1) % P
        y = pow(rhs, sqrt_exp, P)
        if y * y % P == rhs:
            y = min(y, P - y)
            pt = curve.g1_mul_raw((x, mpz(y)), curve.G1_COFACTOR)
            if pt is not None:
                return pt
        ctr += 1


def _gt_acc(a: Optional[GtElement], b: GtElement) -> GtElement:
    return b if a is None else fq12_mul(a, b)


class Bls12381Provider(BilinearGroupProvider):
    """Pure-Python BLS12-381 backend with fixed-base windows for the generators."""

    group_id = "bls12381"

    def __init__(self) -> None:
        self._g1_table: Optional[FixedBaseTable] = None
        self._g2_table: Optional[FixedBaseTable] = None
        self._gt_table: Optional[FixedBaseTable] = None
        self._gt_gen: Optional[GtElement] = None

    @property
    def order(self) -> int:
        return int(R)

    def random_scalar(self) -> Scalar:
        return secrets.randbelow(self.order - 1) + 1

    # Source group 1
    def g1_gen_mul(self, k: Scalar) -> G1Point:
        if self._g1_table is None:
            self._g1_table = FixedBaseTable(
                curve.G1_GENERATOR, curve.g1_add, curve.g1_double
            )
        return self._g1_table.mul(k % self.order)

    def g1_mul(self, p: G1Point, k: Scalar) -> G1Point:
        return curve.g1_mul(p, k)

    def g1_add(self, p: G1Point, q: G1Point) -> G1Point:
        return curve.g1_add(p, q)

    def hash_to_g1(self, token: bytes) -> G1Point:
        return _hash_to_g1_cached(bytes(token))

    def g1_to_bytes(self, p: G1Point) -> bytes:
        return curve.g1_serialize(p)

    def g1_from_bytes(self, data: bytes) -> G1Point:
        return curve.g1_deserialize(data)

    # Source group 2
    def g2_gen_mul(self, k: Scalar) -> G2Point:
        if self._g2_table is None:
            self._g2_table = FixedBaseTable(
                curve.G2_GENERATOR, curve.g2_add, curve.g2_double
            )
        return self._g2_table.mul(k % self.order)

    def g2_mul(self, q: G2Point, k: Scalar) -> G2Point:
        return curve.g2_mul(q, k)

    def g2_add(self, p: G2Point, q: G2Point) -> G2Point:
        return curve.g2_add(p, q)

    def g2_to_bytes(self, q: G2Point) -> bytes:
        return curve.g2_serialize(q)

    def g2_from_bytes(self, data: bytes) -> G2Point:
        return curve.g2_deserialize(data)

    # Target group
    def gt_gen_mul(self, k: Scalar) -> GtElement:
        if self._gt_table is None:
            if self._gt_gen is None:
                self._gt_gen = _pairing.pairing(
                    curve.G1_GENERATOR, curve.G2_GENERATOR
                )
            self._gt_table = FixedBaseTable(self._gt_gen, _gt_acc, fq12_sqr)
        out = self._gt_table.mul(k % self.order)
        return FQ12_ONE if out is None else out

    def gt_mul(self, a: GtElement, b: GtElement) -> GtElement:
        return fq12_mul(a, b)

    def gt_inv(self, a: GtElement) -> GtElement:
        # GT is inside the cyclotomic subgroup, where conjugation inverts.
        return fq12_conj(a)

    def gt_pow(self, a: GtElement, k: Scalar) -> GtElement:
        k = int(k) % self.order
        if k == 0:
            return FQ12_ONE
        acc = a
        for bit in bin(k)[3:]:
            acc = fq12_sqr(acc)
            if bit == "1":
                acc = fq12_mul(acc, a)
        return acc

    def gt_identity(self) -> GtElement:
        return FQ12_ONE

    def gt_to_bytes(self, a: GtElement) -> bytes:
        out = bytearray()
        for half in a:
            for c in half:
                for coeff in c:
                    out += int(coeff).to_bytes(48, "big")
        return bytes(out)

    def gt_from_bytes(self, data: bytes) -> GtElement:
        if len(data) != GT_BYTES:
            raise ValueError(f"GT encoding must be {GT_BYTES} bytes")
        coeffs = [
            mpz(int.from_bytes(data[i * 48:(i + 1) * 48], "big"))
            for i in range(12)
        ]
        if any(c >= P for c in coeffs):
            raise ValueError("GT coefficient out of range")
        it = iter(coeffs)
        return tuple(
            tuple((next(it), next(it)) for _ in range(3)) for _ in range(2)
        )

    # Pairing
    def pair(self, p: G1Point, q: G2Point) -> GtElement:
        return _pairing.pairing(p, q)

    def multi_pair(self, pairs: Iterable[tuple[G1Point, G2Point]]) -> GtElement:
        return _pairing.multi_pairing(pairs)


_PROVIDERS: dict[str, BilinearGroupProvider] = {}


def get_provider(group_id: str) -> BilinearGroupProvider:
    """Provider singleton for a group descriptor id."""
    if group_id not in _PROVIDERS:
        if group_id == Bls12381Provider.group_id:
            _PROVIDERS[group_id] = Bls12381Provider()
        else:
            raise ValueError(f"unknown group id: {group_id!r}")
    return _PROVIDERS[group_id]


DEFAULT_GROUP_ID = Bls12381Provider.group_id
