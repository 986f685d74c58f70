"""Ciphertext-policy attribute-based encryption over a bilinear group.

The scheme is a large-universe construction on an asymmetric (type-3)
pairing. A master authority holds (beta, g2^alpha); user keys embed a
per-key randomizer r so keys cannot be combined across users; the KEM
shares its session secret down the policy tree with one fresh Shamir
polynomial per threshold gate, and decryption folds the Lagrange
coefficients of a satisfying selection into the exponents of a single
product of pairings.

File bodies are protected by an AEAD data-encapsulation layer keyed by
a hash of the KEM's random target-group mask, and the whole thing is
framed into a versioned container whose header doubles as the AEAD
associated data.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Iterable, Mapping

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import policy as policy_mod
from .errors import (
    AuthenticationFailure,
    EmptyAttributeSet,
    LimitExceeded,
    MalformedCiphertext,
    MalformedContainer,
    PolicyError,
    SatisfactionFailure,
    UnsupportedSecurityLevel,
)
from .pairing import DEFAULT_GROUP_ID, BilinearGroupProvider, get_provider
from .pairing.provider import G1_BYTES, G2_BYTES, GT_BYTES, SCALAR_BYTES
from .policy import Gate, Leaf, PolicyNode, PolicyTree, iter_leaves, satisfies
from .wire import ByteReader, pack_prefixed

MAGIC = b"CPSX"
VERSION = 1
NONCE_BYTES = 12
SECRET_BYTES = 32

_SECRET_TAG = b"cpsx-kem-secret-v1:"


# --- domain types -------------------------------------------------------------

@dataclass(frozen=True)
class PublicParams:
    """Public side of setup: everything an encryptor needs."""

    group_id: str
    blind_base: object  # G1, generator^beta
    mask_base: object   # GT, e(g1, g2)^alpha

    def provider(self) -> BilinearGroupProvider:
        return get_provider(self.group_id)

    def to_bytes(self) -> bytes:
        prov = self.provider()
        return (
            pack_prefixed(self.group_id.encode())
            + prov.g1_to_bytes(self.blind_base)
            + prov.gt_to_bytes(self.mask_base)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicParams":
        try:
            r = ByteReader(data)
            group_id = r.take_prefixed().decode()
            prov = get_provider(group_id)
            blind = prov.g1_from_bytes(r.take(G1_BYTES))
            mask = prov.gt_from_bytes(r.take(GT_BYTES))
            r.expect_end()
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedCiphertext(f"bad public params: {exc}") from exc
        if blind is None:
            raise MalformedCiphertext("blinding base is the identity")
        return cls(group_id=group_id, blind_base=blind, mask_base=mask)


@dataclass(frozen=True, repr=False)
class MasterKey:
    """Master secrets. Only ever leaves memory via sealing_bytes()."""

    group_id: str
    beta: int
    alpha_g2: object  # G2, generator^alpha

    def __repr__(self) -> str:  # never echo secrets in logs or tracebacks
        return "MasterKey(<redacted>)"

    def sealing_bytes(self) -> bytes:
        """Serialize for sealing. Callers must pass the result to a sealing
        primitive before it crosses any process or trust boundary."""
        prov = get_provider(self.group_id)
        return (
            pack_prefixed(self.group_id.encode())
            + prov.scalar_to_bytes(self.beta)
            + prov.g2_to_bytes(self.alpha_g2)
        )

    @classmethod
    def from_sealing_bytes(cls, data: bytes) -> "MasterKey":
        try:
            r = ByteReader(data)
            group_id = r.take_prefixed().decode()
            prov = get_provider(group_id)
            beta = prov.scalar_from_bytes(r.take(SCALAR_BYTES))
            alpha_g2 = prov.g2_from_bytes(r.take(G2_BYTES))
            r.expect_end()
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedCiphertext(f"bad master key bytes: {exc}") from exc
        if beta == 0 or alpha_g2 is None:
            raise MalformedCiphertext("degenerate master key")
        return cls(group_id=group_id, beta=beta, alpha_g2=alpha_g2)


@dataclass(frozen=True)
class UserKeyComponent:
    attr: str
    d1: object  # G1, g1^r * H(attr)^r_j
    d2: object  # G2, g2^r_j


@dataclass(frozen=True)
class UserKey:
    """Decryption key for one attribute set, randomized per issuance."""

    attrs: frozenset[str]
    base: object  # G2, g2^((alpha + r) / beta)
    components: tuple[UserKeyComponent, ...]
    group_id: str = DEFAULT_GROUP_ID

    def __post_init__(self) -> None:
        comp_attrs = frozenset(c.attr for c in self.components)
        if comp_attrs != self.attrs or len(self.components) != len(comp_attrs):
            raise MalformedCiphertext("key components do not match attrs")
        # canonical order so equality and serialization agree
        object.__setattr__(
            self,
            "components",
            tuple(sorted(self.components, key=lambda c: c.attr)),
        )

    @property
    def fingerprint(self) -> str:
        """Digest of the randomized components; distinct per keygen call.
        Diagnostic only, carries no secret."""
        return hashlib.sha256(self.to_bytes()).hexdigest()[:32]

    def component_for(self, attr: str) -> UserKeyComponent:
        for c in self.components:
            if c.attr == attr:
                return c
        raise KeyError(attr)

    def self_check(self, pp: PublicParams) -> bool:
        """Pairing consistency of every component against the params."""
        prov = pp.provider()
        g2 = prov.g2_gen_mul(1)
        # t = e(blind, base) / mask = e(g1, g2)^r, shared by all components.
        t = prov.gt_mul(
            prov.pair(pp.blind_base, self.base), prov.gt_inv(pp.mask_base)
        )
        from .pairing import curve
        for comp in self.components:
            h = prov.hash_to_g1(comp.attr.encode())
            got = prov.multi_pair(
                [(comp.d1, g2), (curve.g1_neg(h), comp.d2)]
            )
            if got != t:
                return False
        return True

    def to_bytes(self) -> bytes:
        prov = get_provider(self.group_id)
        out = bytearray()
        out += pack_prefixed(self.group_id.encode())
        out += prov.g2_to_bytes(self.base)
        out += len(self.components).to_bytes(4, "big")
        for c in self.components:
            out += pack_prefixed(c.attr.encode())
            out += prov.g1_to_bytes(c.d1)
            out += prov.g2_to_bytes(c.d2)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "UserKey":
        try:
            r = ByteReader(data)
            group_id = r.take_prefixed().decode()
            prov = get_provider(group_id)
            base = prov.g2_from_bytes(r.take(G2_BYTES))
            count = r.u32()
            comps = []
            for _ in range(count):
                attr = r.take_prefixed().decode()
                d1 = prov.g1_from_bytes(r.take(G1_BYTES))
                d2 = prov.g2_from_bytes(r.take(G2_BYTES))
                comps.append(UserKeyComponent(attr=attr, d1=d1, d2=d2))
            r.expect_end()
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedCiphertext(f"bad user key bytes: {exc}") from exc
        return cls(
            attrs=frozenset(c.attr for c in comps),
            base=base,
            components=tuple(comps),
            group_id=group_id,
        )


@dataclass(frozen=True)
class LeafComponent:
    share_g2: object  # G2, g2^{lambda_y}
    attr_g1: object   # G1, H(attr_y)^{lambda_y}


@dataclass(frozen=True)
class KemCiphertext:
    """Policy-bound encapsulation of one 32-byte secret."""

    policy: PolicyTree
    masked_secret: object          # GT, R * mask_base^s
    commitment: object             # G1, blind_base^s
    leaf_components: tuple[LeafComponent, ...]
    group_id: str = DEFAULT_GROUP_ID

    def __post_init__(self) -> None:
        if len(self.leaf_components) != self.policy.leaf_count():
            raise MalformedCiphertext(
                "leaf component count does not match policy"
            )

    def to_bytes(self) -> bytes:
        prov = get_provider(self.group_id)
        out = bytearray()
        out += pack_prefixed(self.group_id.encode())
        out += pack_prefixed(self.policy.source_text.encode())
        out += prov.gt_to_bytes(self.masked_secret)
        out += prov.g1_to_bytes(self.commitment)
        out += len(self.leaf_components).to_bytes(4, "big")
        for lc in self.leaf_components:
            out += prov.g2_to_bytes(lc.share_g2)
            out += prov.g1_to_bytes(lc.attr_g1)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "KemCiphertext":
        try:
            r = ByteReader(data)
            group_id = r.take_prefixed().decode()
            prov = get_provider(group_id)
            tree = policy_mod.parse_policy(r.take_prefixed().decode())
            masked = prov.gt_from_bytes(r.take(GT_BYTES))
            commitment = prov.g1_from_bytes(r.take(G1_BYTES))
            count = r.u32()
            comps = []
            for _ in range(count):
                share = prov.g2_from_bytes(r.take(G2_BYTES))
                attr = prov.g1_from_bytes(r.take(G1_BYTES))
                comps.append(LeafComponent(share_g2=share, attr_g1=attr))
            r.expect_end()
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedCiphertext(f"bad kem ciphertext: {exc}") from exc
        except PolicyError as exc:
            raise MalformedCiphertext(f"bad embedded policy: {exc}") from exc
        return cls(
            policy=tree,
            masked_secret=masked,
            commitment=commitment,
            leaf_components=tuple(comps),
            group_id=group_id,
        )


@dataclass(frozen=True)
class CiphertextContainer:
    """Versioned on-disk format: header (magic through nonce) is the AEAD AD."""

    policy_text: str
    kem_blob: bytes
    nonce: bytes
    body: bytes
    version: int = VERSION

    def header_bytes(self) -> bytes:
        return (
            MAGIC
            + bytes([self.version])
            + pack_prefixed(self.policy_text.encode())
            + pack_prefixed(self.kem_blob)
            + self.nonce
        )

    def to_bytes(self) -> bytes:
        return self.header_bytes() + self.body

    @classmethod
    def from_bytes(cls, data: bytes) -> "CiphertextContainer":
        try:
            r = ByteReader(data)
            magic = r.take(4)
            if magic != MAGIC:
                raise ValueError(f"bad magic {magic!r}")
            version = r.u8()
            if version != VERSION:
                raise ValueError(f"unsupported version {version}")
            policy_text = r.take_prefixed().decode()
            kem_blob = r.take_prefixed()
            nonce = r.take(NONCE_BYTES)
            body = r.rest()
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedContainer(str(exc)) from exc
        return cls(
            policy_text=policy_text,
            kem_blob=kem_blob,
            nonce=nonce,
            body=body,
            version=version,
        )


# --- scheme operations ----------------------------------------------------------

def setup(security_level: int) -> tuple[PublicParams, MasterKey]:
    """Generate fresh scheme parameters and master secrets."""
    if security_level != 128:
        raise UnsupportedSecurityLevel(
            f"security level {security_level} not supported; use 128"
        )
    prov = get_provider(DEFAULT_GROUP_ID)
    alpha = prov.random_scalar()
    beta = prov.random_scalar()
    pp = PublicParams(
        group_id=DEFAULT_GROUP_ID,
        blind_base=prov.g1_gen_mul(beta),
        mask_base=prov.gt_gen_mul(alpha),
    )
    mk = MasterKey(
        group_id=DEFAULT_GROUP_ID, beta=beta, alpha_g2=prov.g2_gen_mul(alpha)
    )
    return pp, mk


def keygen(mk: MasterKey, pp: PublicParams, attrs: Iterable[str]) -> UserKey:
    """Issue a decryption key for an attribute set.

    Each call draws a fresh key randomizer r, so independently issued keys
    are unlinkable and their shares do not combine across keys.
    """
    normalized = policy_mod.normalize_attributes(attrs)
    if not normalized:
        raise EmptyAttributeSet("key generation needs at least one attribute")
    prov = pp.provider()
    q = prov.order
    r = prov.random_scalar()
    beta_inv = pow(mk.beta, -1, q)
    base = prov.g2_mul(
        prov.g2_add(mk.alpha_g2, prov.g2_gen_mul(r)), beta_inv
    )
    g1_r = prov.g1_gen_mul(r)
    comps = []
    for attr in sorted(normalized):
        rj = prov.random_scalar()
        comps.append(
            UserKeyComponent(
                attr=attr,
                d1=prov.g1_add(g1_r, prov.g1_mul(prov.hash_to_g1(attr.encode()), rj)),
                d2=prov.g2_gen_mul(rj),
            )
        )
    return UserKey(
        attrs=normalized,
        base=base,
        components=tuple(comps),
        group_id=pp.group_id,
    )


def _share_secret(
    root: PolicyNode, secret: int, prov: BilinearGroupProvider
) -> dict[tuple[int, ...], int]:
    """Shamir-share `secret` down the tree; returns share per leaf path."""
    q = prov.order
    shares: dict[tuple[int, ...], int] = {}

    def walk(node: PolicyNode, path: tuple[int, ...], value: int) -> None:
        if isinstance(node, Leaf):
            shares[path] = value
            return
        coeffs = [value] + [prov.random_scalar() for _ in range(node.threshold - 1)]
        for i, child in enumerate(node.children):
            x = i + 1
            y = 0
            for c in reversed(coeffs):
                y = (y * x + c) % q
            walk(child, path + (i,), y)

    walk(root, (), secret % q)
    return shares


def _derive_secret(prov: BilinearGroupProvider, mask: object) -> bytes:
    return hashlib.sha256(_SECRET_TAG + prov.gt_to_bytes(mask)).digest()


def kem_encrypt(
    pp: PublicParams, policy: PolicyTree
) -> tuple[bytes, KemCiphertext]:
    """Encapsulate a fresh 32-byte secret under a policy tree."""
    if policy.leaf_count() > policy_mod.DEFAULT_MAX_LEAVES:
        raise LimitExceeded(
            f"policy has {policy.leaf_count()} leaves, cap is "
            f"{policy_mod.DEFAULT_MAX_LEAVES}"
        )
    prov = pp.provider()
    s = prov.random_scalar()
    shares = _share_secret(policy.root, s, prov)
    comps = []
    for path, leaf in iter_leaves(policy.root):
        lam = shares[path]
        comps.append(
            LeafComponent(
                share_g2=prov.g2_gen_mul(lam),
                attr_g1=prov.g1_mul(prov.hash_to_g1(leaf.attr.encode()), lam),
            )
        )
    mask = prov.gt_gen_mul(prov.random_scalar())
    ct = KemCiphertext(
        policy=policy,
        masked_secret=prov.gt_mul(mask, prov.gt_pow(pp.mask_base, s)),
        commitment=prov.g1_mul(pp.blind_base, s),
        leaf_components=tuple(comps),
        group_id=pp.group_id,
    )
    return _derive_secret(prov, mask), ct


def _lagrange_at_zero(xi: int, xs: list[int], q: int) -> int:
    num, den = 1, 1
    for xj in xs:
        if xj == xi:
            continue
        num = num * (-xj) % q
        den = den * (xi - xj) % q
    return num * pow(den, -1, q) % q


def _leaf_coefficients(
    root: PolicyNode,
    selections: Mapping[tuple[int, ...], tuple[int, ...]],
    q: int,
) -> dict[tuple[int, ...], int]:
    """Fold per-gate Lagrange coefficients into one factor per selected leaf."""
    coeffs: dict[tuple[int, ...], int] = {}

    def walk(node: PolicyNode, path: tuple[int, ...], acc: int) -> None:
        if isinstance(node, Leaf):
            coeffs[path] = acc
            return
        chosen = selections[path]
        xs = [i + 1 for i in chosen]
        for i in chosen:
            factor = _lagrange_at_zero(i + 1, xs, q)
            walk(node.children[i], path + (i,), acc * factor % q)

    walk(root, (), 1)
    return coeffs


def kem_decrypt(pp: PublicParams, uk: UserKey, ct: KemCiphertext) -> bytes:
    """Recover the encapsulated secret, or fail if attrs do not satisfy."""
    prov = pp.provider()
    sat = satisfies(ct.policy, uk.attrs)
    if not sat:
        raise SatisfactionFailure(
            "attribute set does not satisfy the ciphertext policy"
        )
    coeffs = _leaf_coefficients(ct.policy.root, sat.selections, prov.order)
    leaf_by_path = {
        path: (i, leaf) for i, (path, leaf) in enumerate(iter_leaves(ct.policy.root))
    }
    from .pairing import curve

    pairs = [(ct.commitment, uk.base)]
    for path, cy in coeffs.items():
        idx, leaf = leaf_by_path[path]
        comp = uk.component_for(leaf.attr)
        lc = ct.leaf_components[idx]
        pairs.append((curve.g1_neg(prov.g1_mul(comp.d1, cy)), lc.share_g2))
        pairs.append((prov.g1_mul(lc.attr_g1, cy), comp.d2))
    blinder = prov.multi_pair(pairs)  # e(g1, g2)^(alpha * s)
    mask = prov.gt_mul(ct.masked_secret, prov.gt_inv(blinder))
    return _derive_secret(prov, mask)


# --- DEM ------------------------------------------------------------------------

def dem_encrypt(
    key: bytes, plaintext: bytes, associated_data: bytes
) -> tuple[bytes, bytes]:
    """AEAD-encrypt plaintext; returns (nonce, body)."""
    if len(key) != SECRET_BYTES:
        raise ValueError(f"DEM key must be {SECRET_BYTES} bytes")
    nonce = os.urandom(NONCE_BYTES)
    body = AESGCM(key).encrypt(nonce, plaintext, associated_data)
    return nonce, body


def dem_decrypt(
    key: bytes, nonce: bytes, body: bytes, associated_data: bytes
) -> bytes:
    if len(key) != SECRET_BYTES:
        raise ValueError(f"DEM key must be {SECRET_BYTES} bytes")
    try:
        return AESGCM(key).decrypt(nonce, body, associated_data)
    except InvalidTag as exc:
        raise AuthenticationFailure("AEAD tag rejected") from exc


# --- file-level composition -------------------------------------------------------

def encrypt_file(
    pp: PublicParams, policy: PolicyTree, plaintext: bytes
) -> CiphertextContainer:
    """KEM + DEM composition into a self-describing container."""
    secret, kem_ct = kem_encrypt(pp, policy)
    kem_blob = kem_ct.to_bytes()
    nonce = os.urandom(NONCE_BYTES)
    container = CiphertextContainer(
        policy_text=policy.source_text,
        kem_blob=kem_blob,
        nonce=nonce,
        body=b"",
    )
    header = container.header_bytes()
    body = AESGCM(secret).encrypt(nonce, plaintext, header)
    return CiphertextContainer(
        policy_text=policy.source_text,
        kem_blob=kem_blob,
        nonce=nonce,
        body=body,
    )


def decrypt_file(
    pp: PublicParams, uk: UserKey, container: CiphertextContainer
) -> bytes:
    """Inverse of encrypt_file; authenticates header and body together."""
    try:
        kem_ct = KemCiphertext.from_bytes(container.kem_blob)
    except MalformedCiphertext as exc:
        raise MalformedContainer(f"container KEM blob invalid: {exc}") from exc
    if kem_ct.policy.source_text != container.policy_text:
        raise MalformedContainer("container policy does not match KEM policy")
    secret = kem_decrypt(pp, uk, kem_ct)
    return dem_decrypt(
        secret, container.nonce, container.body, container.header_bytes()
    )
