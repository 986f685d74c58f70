"""Remote attestation verifier and secure policy provisioning.

Protocol shape: the verifier issues a single-use random challenge; the
enclave answers with a quote binding (measurement, ephemeral X25519
public key, challenge nonce) under the platform quoting key; the
verifier checks signature, measurement, and nonce freshness, then
encrypts the access policy to the quoted ephemeral key and signs the
whole provisioning message. Only the enclave holding the matching
ephemeral secret can open it.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .enclave import (
    CHALLENGE_NONCE_BYTES,
    MEASUREMENT_BYTES,
    REPORT_DATA_BYTES,
    _PROVISION_INFO,
    _PROVISION_SIG_TAG,
)
from .errors import NotAttested
from .wire import ByteReader, pack_prefixed

QUOTE_SIGNATURE_BYTES = 64
DEFAULT_CHALLENGE_TTL = 60.0
_NONCE_CACHE_CAP = 65536


@dataclass(frozen=True)
class AttestationChallenge:
    nonce: bytes
    issued_at: float

    def to_bytes(self) -> bytes:
        return self.nonce


@dataclass(frozen=True)
class Quote:
    """Attestation evidence: measurement, report data, quoting signature."""

    measurement: bytes
    report_data: bytes  # ephemeral X25519 public key (32) || nonce (16) || pad
    signature: bytes

    def __post_init__(self) -> None:
        if len(self.measurement) != MEASUREMENT_BYTES:
            raise ValueError("bad measurement length")
        if len(self.report_data) != REPORT_DATA_BYTES:
            raise ValueError("bad report data length")
        if len(self.signature) != QUOTE_SIGNATURE_BYTES:
            raise ValueError("bad signature length")

    @property
    def ephemeral_public_key(self) -> bytes:
        return self.report_data[:32]

    @property
    def nonce(self) -> bytes:
        return self.report_data[32:32 + CHALLENGE_NONCE_BYTES]

    def to_bytes(self) -> bytes:
        return self.measurement + self.report_data + self.signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "Quote":
        r = ByteReader(data)
        measurement = r.take(MEASUREMENT_BYTES)
        report_data = r.take(REPORT_DATA_BYTES)
        signature = r.take(QUOTE_SIGNATURE_BYTES)
        r.expect_end()
        return cls(
            measurement=measurement,
            report_data=report_data,
            signature=signature,
        )


@dataclass(frozen=True)
class ProvisioningResponse:
    """Policy ciphertext bound to one quoted ephemeral key, verifier-signed."""

    verifier_eph_pub: bytes
    nonce: bytes
    ciphertext: bytes
    signature: bytes

    def to_bytes(self) -> bytes:
        return (
            self.verifier_eph_pub
            + self.nonce
            + pack_prefixed(self.ciphertext)
            + self.signature
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProvisioningResponse":
        r = ByteReader(data)
        verifier_eph_pub = r.take(32)
        nonce = r.take(12)
        ciphertext = r.take_prefixed()
        signature = r.take(64)
        r.expect_end()
        return cls(
            verifier_eph_pub=verifier_eph_pub,
            nonce=nonce,
            ciphertext=ciphertext,
            signature=signature,
        )


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: Optional[str] = None  # BadSignature | WrongMeasurement | StaleNonce | ReplayedNonce

    def __bool__(self) -> bool:
        return self.accepted


class Verifier:
    """Holds the expected measurement, the quoting verification key, and a
    bounded single-use nonce cache. Thread-safe."""

    def __init__(
        self,
        expected_measurement: bytes,
        quoting_verification_key: bytes,
        ttl: float = DEFAULT_CHALLENGE_TTL,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self._expected = expected_measurement
        self._quoting_key = Ed25519PublicKey.from_public_bytes(
            quoting_verification_key
        )
        self._ttl = ttl
        self._clock = clock
        self._signing_key = Ed25519PrivateKey.generate()
        self._lock = threading.Lock()
        self._issued: dict[bytes, float] = {}
        self._used: dict[bytes, float] = {}

    @property
    def verification_key(self) -> bytes:
        """Public key enclaves use to authenticate provisioning messages."""
        return self._signing_key.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw
        )

    def _purge(self, now: float) -> None:
        cutoff = now - self._ttl
        for cache in (self._issued, self._used):
            dead = [n for n, t in cache.items() if t < cutoff]
            for n in dead:
                del cache[n]
            while len(cache) > _NONCE_CACHE_CAP:
                cache.pop(next(iter(cache)))

    def issue_challenge(self) -> AttestationChallenge:
        now = self._clock()
        nonce = os.urandom(CHALLENGE_NONCE_BYTES)
        with self._lock:
            self._purge(now)
            self._issued[nonce] = now
        return AttestationChallenge(nonce=nonce, issued_at=now)

    def verify_quote(self, quote: Quote) -> VerifyResult:
        """Accept iff signature valid, measurement matches, nonce fresh and unused."""
        try:
            self._quoting_key.verify(
                quote.signature, quote.measurement + quote.report_data
            )
        except InvalidSignature:
            return VerifyResult(False, "BadSignature")
        if quote.measurement != self._expected:
            return VerifyResult(False, "WrongMeasurement")
        now = self._clock()
        with self._lock:
            self._purge(now)
            nonce = quote.nonce
            if nonce in self._used:
                return VerifyResult(False, "ReplayedNonce")
            issued_at = self._issued.pop(nonce, None)
            if issued_at is None or now - issued_at > self._ttl:
                # unknown nonces and expired nonces are indistinguishable
                # to the verifier once purged; both are stale
                return VerifyResult(False, "StaleNonce")
            self._used[nonce] = now
        return VerifyResult(True)

    def provision_policy(self, quote: Quote, policy_text: str) -> ProvisioningResponse:
        """Encrypt the policy to the quote's ephemeral key. The quote must
        pass verification in this same call; there is no other path."""
        result = self.verify_quote(quote)
        if not result:
            raise NotAttested(f"quote rejected: {result.reason}")
        enclave_eph_pub = quote.ephemeral_public_key
        eph_priv = X25519PrivateKey.generate()
        verifier_eph_pub = eph_priv.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw
        )
        shared = eph_priv.exchange(
            X25519PublicKey.from_public_bytes(enclave_eph_pub)
        )
        key = HKDF(
            algorithm=SHA256(),
            length=32,
            salt=None,
            info=_PROVISION_INFO + enclave_eph_pub + verifier_eph_pub,
        ).derive(shared)
        nonce = os.urandom(12)
        ciphertext = AESGCM(key).encrypt(
            nonce, policy_text.encode(), enclave_eph_pub + verifier_eph_pub
        )
        signature = self._signing_key.sign(
            _PROVISION_SIG_TAG
            + enclave_eph_pub
            + verifier_eph_pub
            + nonce
            + ciphertext
        )
        return ProvisioningResponse(
            verifier_eph_pub=verifier_eph_pub,
            nonce=nonce,
            ciphertext=ciphertext,
            signature=signature,
        )
