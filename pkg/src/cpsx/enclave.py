"""Simulated trusted execution environment.

The enclave is an isolated in-process component: after construction the
only way in is the ECALL byte codec and the only way out is the OCALL
callback pair plus ECALL response frames. Its state never leaves except
sealed. Sealing keys derive from a 32-byte device root secret (a file
standing in for hardware fuses) and the enclave measurement, so blobs
are portable exactly across enclaves with identical code identity and
config version on the same device.

Every boundary crossing is recorded in a transcript so tests can assert
that no master-key material ever crosses in the clear.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol

from cryptography.exceptions import InvalidSignature, InvalidTag
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

from . import abe
from .errors import (
    AuthenticationFailure,
    BadPolicy,
    CpsxError,
    EnclaveError,
    MalformedFrame,
    NotAttested,
    OcallFailure,
    PolicyError,
    SatisfactionFailure,
    SealError,
    StateError,
    UnknownOpcode,
)
from .policy import PolicyTree, parse_policy
from .wire import ByteReader, pack_prefixed

MEASUREMENT_BYTES = 32
SEAL_MAGIC = b"SEAL"
SEAL_NONCE_BYTES = 12
DEVICE_SECRET_BYTES = 32
REPORT_DATA_BYTES = 64
CHALLENGE_NONCE_BYTES = 16

_MEASURE_TAG = b"cpsx-enclave-measurement-v1:"
_SEAL_KEY_INFO = b"cpsx-sealing-key-v1:"
_QUOTE_KEY_INFO = b"cpsx-quoting-key-v1"
_PROVISION_INFO = b"cpsx-provisioning-key-v1:"
_PROVISION_SIG_TAG = b"cpsx-provisioning-v1:"


# --- measurement ----------------------------------------------------------------

def compute_measurement(code_identity: str, config_version: int) -> bytes:
    """Deterministic 32-byte digest of the trusted code identity and config."""
    return hashlib.sha256(
        _MEASURE_TAG
        + pack_prefixed(code_identity.encode())
        + int(config_version).to_bytes(4, "big")
    ).digest()


# --- sealing ---------------------------------------------------------------------

@dataclass(frozen=True)
class SealedBlob:
    """Measurement-bound AEAD envelope for at-rest secrets."""

    measurement: bytes
    nonce: bytes
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return SEAL_MAGIC + self.measurement + self.nonce + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBlob":
        try:
            r = ByteReader(data)
            magic = r.take(4)
            if magic != SEAL_MAGIC:
                raise ValueError(f"bad seal magic {magic!r}")
            measurement = r.take(MEASUREMENT_BYTES)
            nonce = r.take(SEAL_NONCE_BYTES)
            ciphertext = r.rest()
            if len(ciphertext) < 16:  # AEAD tag is the floor
                raise ValueError("sealed payload shorter than an AEAD tag")
        except ValueError as exc:
            raise SealError(f"malformed sealed blob: {exc}") from exc
        return cls(measurement=measurement, nonce=nonce, ciphertext=ciphertext)


def _sealing_key(device_secret: bytes, measurement: bytes) -> bytes:
    return HKDF(
        algorithm=SHA256(),
        length=32,
        salt=None,
        info=_SEAL_KEY_INFO + measurement,
    ).derive(device_secret)


def seal(device_secret: bytes, measurement: bytes, data: bytes) -> SealedBlob:
    """Bind data to (device secret, measurement) with a fresh nonce."""
    nonce = os.urandom(SEAL_NONCE_BYTES)
    ad = SEAL_MAGIC + measurement + nonce
    key = _sealing_key(device_secret, measurement)
    ct = AESGCM(key).encrypt(nonce, data, ad)
    return SealedBlob(measurement=measurement, nonce=nonce, ciphertext=ct)


def unseal(device_secret: bytes, measurement: bytes, blob: SealedBlob) -> bytes:
    if blob.measurement != measurement:
        raise SealError("sealed blob bound to a different measurement")
    ad = SEAL_MAGIC + blob.measurement + blob.nonce
    key = _sealing_key(device_secret, measurement)
    try:
        return AESGCM(key).decrypt(blob.nonce, blob.ciphertext, ad)
    except InvalidTag as exc:
        raise SealError("sealed blob failed authentication") from exc


# --- device / quoting keys ----------------------------------------------------------

def load_device_secret(path: Path | str) -> bytes:
    data = Path(path).read_bytes()
    if len(data) != DEVICE_SECRET_BYTES:
        raise ValueError(
            f"device secret must be {DEVICE_SECRET_BYTES} bytes, got {len(data)}"
        )
    return data


def _quoting_private_key(device_secret: bytes) -> Ed25519PrivateKey:
    seed = HKDF(
        algorithm=SHA256(), length=32, salt=None, info=_QUOTE_KEY_INFO
    ).derive(device_secret)
    return Ed25519PrivateKey.from_private_bytes(seed)


def quoting_verification_key(device_secret: bytes) -> bytes:
    """Public half of the platform quoting key, pre-shared to verifiers."""
    from cryptography.hazmat.primitives.serialization import (
        Encoding,
        PublicFormat,
    )

    pub = _quoting_private_key(device_secret).public_key()
    return pub.public_bytes(Encoding.Raw, PublicFormat.Raw)


# --- ECALL framing ------------------------------------------------------------------

class Opcode(enum.IntEnum):
    SETUP = 0x01
    PROVISION_POLICY = 0x02
    ENCRYPT = 0x03
    DECRYPT = 0x04
    KEYGEN = 0x05
    GENERATE_QUOTE = 0x06
    RESTORE = 0x07
    EXPORT_PUBLIC = 0x08


class Status(enum.IntEnum):
    OK = 0x00
    STATE_NO_KEYS = 0x10
    STATE_NO_POLICY = 0x11
    STATE_ALREADY_SET_UP = 0x12
    ACCESS_DENIED = 0x20
    AUTH_FAILED = 0x21
    MALFORMED = 0x30
    BAD_POLICY = 0x31
    NOT_ATTESTED = 0x32
    OCALL_FAILED = 0x40
    SEAL_FAILED = 0x41
    UNKNOWN_OPCODE = 0x7F


@dataclass(frozen=True)
class EcallRequest:
    opcode: int
    fields: tuple[bytes, ...] = ()

    def to_bytes(self) -> bytes:
        return bytes([self.opcode]) + b"".join(
            pack_prefixed(f) for f in self.fields
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "EcallRequest":
        try:
            r = ByteReader(data)
            opcode = r.u8()
            fields = []
            while r.remaining():
                fields.append(r.take_prefixed())
        except ValueError as exc:
            raise MalformedFrame(f"bad ECALL frame: {exc}") from exc
        return cls(opcode=opcode, fields=tuple(fields))


@dataclass(frozen=True)
class EcallResponse:
    status: int
    fields: tuple[bytes, ...] = ()

    def to_bytes(self) -> bytes:
        return bytes([self.status]) + b"".join(
            pack_prefixed(f) for f in self.fields
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "EcallResponse":
        try:
            r = ByteReader(data)
            status = r.u8()
            fields = []
            while r.remaining():
                fields.append(r.take_prefixed())
        except ValueError as exc:
            raise MalformedFrame(f"bad ECALL response frame: {exc}") from exc
        return cls(status=status, fields=tuple(fields))


class OcallHandler(Protocol):
    """Host-side callbacks the enclave may invoke during an ECALL."""

    def read_input(self, resource_id: str) -> bytes: ...

    def write_output(self, resource_id: str, data: bytes) -> None: ...


# --- configuration -------------------------------------------------------------------

@dataclass(frozen=True)
class EnclaveConfig:
    code_identity: str
    config_version: int
    device_secret_path: Path
    # Public key of the provisioning verifier; provisioning is refused
    # until one is configured.
    verifier_verification_key: Optional[bytes] = None


# --- the enclave itself ----------------------------------------------------------------

class _Enclave:
    """Trusted side. Never handed to callers; only EnclaveHost touches it."""

    def __init__(self, config: EnclaveConfig, ocall: OcallHandler) -> None:
        self._config = config
        self._measurement = compute_measurement(
            config.code_identity, config.config_version
        )
        self._device_secret = load_device_secret(config.device_secret_path)
        self._ocall = ocall
        self._pp: Optional[abe.PublicParams] = None
        self._mk: Optional[abe.MasterKey] = None
        self._policy: Optional[PolicyTree] = None
        self._eph_priv: Optional[X25519PrivateKey] = None

    @property
    def measurement(self) -> bytes:
        return self._measurement

    # -- dispatch --

    def handle(self, request: EcallRequest) -> EcallResponse:
        try:
            op = Opcode(request.opcode)
        except ValueError:
            return EcallResponse(
                Status.UNKNOWN_OPCODE,
                (f"opcode {request.opcode:#x}".encode(),),
            )
        handler = {
            Opcode.SETUP: self._op_setup,
            Opcode.PROVISION_POLICY: self._op_provision_policy,
            Opcode.ENCRYPT: self._op_encrypt,
            Opcode.DECRYPT: self._op_decrypt,
            Opcode.KEYGEN: self._op_keygen,
            Opcode.GENERATE_QUOTE: self._op_generate_quote,
            Opcode.RESTORE: self._op_restore,
            Opcode.EXPORT_PUBLIC: self._op_export_public,
        }[op]
        try:
            return handler(request.fields)
        except StateError as exc:
            status = {
                "NoKeys": Status.STATE_NO_KEYS,
                "NoPolicy": Status.STATE_NO_POLICY,
                "AlreadySetUp": Status.STATE_ALREADY_SET_UP,
            }[exc.kind]
            return EcallResponse(status, (str(exc).encode(),))
        except SatisfactionFailure as exc:
            return EcallResponse(Status.ACCESS_DENIED, (str(exc).encode(),))
        except AuthenticationFailure as exc:
            return EcallResponse(Status.AUTH_FAILED, (str(exc).encode(),))
        except NotAttested as exc:
            return EcallResponse(Status.NOT_ATTESTED, (str(exc).encode(),))
        except BadPolicy as exc:
            return EcallResponse(Status.BAD_POLICY, (str(exc).encode(),))
        except SealError as exc:
            return EcallResponse(Status.SEAL_FAILED, (str(exc).encode(),))
        except OcallFailure as exc:
            return EcallResponse(Status.OCALL_FAILED, (str(exc).encode(),))
        except (MalformedFrame, CpsxError, ValueError, UnicodeDecodeError) as exc:
            return EcallResponse(Status.MALFORMED, (str(exc).encode(),))

    # -- helpers --

    def _require_keys(self) -> tuple[abe.PublicParams, abe.MasterKey]:
        if self._pp is None or self._mk is None:
            raise StateError("NoKeys", "enclave holds no scheme keys yet")
        return self._pp, self._mk

    def _require_policy(self) -> PolicyTree:
        if self._policy is None:
            raise StateError("NoPolicy", "no access policy provisioned")
        return self._policy

    def _take_fields(self, fields: tuple[bytes, ...], count: int) -> tuple[bytes, ...]:
        if len(fields) != count:
            raise MalformedFrame(
                f"expected {count} request fields, got {len(fields)}"
            )
        return fields

    def _ocall_read(self, resource_id: str) -> bytes:
        try:
            data = self._ocall.read_input(resource_id)
        except Exception as exc:
            raise OcallFailure(f"read_input({resource_id!r}): {exc}") from exc
        if not isinstance(data, (bytes, bytearray)):
            raise OcallFailure(f"read_input({resource_id!r}) returned non-bytes")
        # inbound buffers are copied into enclave memory, never shared
        return bytes(memoryview(data))

    def _ocall_write(self, resource_id: str, data: bytes) -> None:
        try:
            # outbound buffers are copied out; the handler never sees
            # a reference into enclave memory
            self._ocall.write_output(resource_id, bytes(memoryview(data)))
        except Exception as exc:
            raise OcallFailure(f"write_output({resource_id!r}): {exc}") from exc

    def _seal(self, data: bytes) -> bytes:
        return seal(self._device_secret, self._measurement, data).to_bytes()

    def _unseal(self, blob_bytes: bytes) -> bytes:
        return unseal(
            self._device_secret,
            self._measurement,
            SealedBlob.from_bytes(blob_bytes),
        )

    def _decode_attrs(self, raw: bytes) -> frozenset[str]:
        try:
            listed = json.loads(raw.decode())
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedFrame(f"attribute list is not JSON: {exc}") from exc
        if not isinstance(listed, list) or not all(
            isinstance(a, str) for a in listed
        ):
            raise MalformedFrame("attribute list must be a JSON array of strings")
        return frozenset(listed)

    def _vocab_json(self) -> bytes:
        tree = self._require_policy()
        return json.dumps(sorted(tree.leaf_attributes())).encode()

    # -- opcodes --

    def _op_setup(self, fields: tuple[bytes, ...]) -> EcallResponse:
        self._take_fields(fields, 0)
        if self._mk is not None:
            raise StateError("AlreadySetUp", "enclave already holds keys")
        pp, mk = abe.setup(128)
        self._pp, self._mk = pp, mk
        return EcallResponse(
            Status.OK,
            (self._seal(pp.to_bytes()), self._seal(mk.sealing_bytes())),
        )

    def _op_restore(self, fields: tuple[bytes, ...]) -> EcallResponse:
        if len(fields) not in (2, 3):
            raise MalformedFrame(
                f"restore takes 2 or 3 fields, got {len(fields)}"
            )
        if self._mk is not None:
            raise StateError("AlreadySetUp", "enclave already holds keys")
        pp = abe.PublicParams.from_bytes(self._unseal(fields[0]))
        mk = abe.MasterKey.from_sealing_bytes(self._unseal(fields[1]))
        policy = None
        if len(fields) == 3:
            try:
                policy = parse_policy(self._unseal(fields[2]).decode())
            except (PolicyError, UnicodeDecodeError) as exc:
                raise BadPolicy(f"sealed policy rejected: {exc}") from exc
        self._pp, self._mk, self._policy = pp, mk, policy
        flag = b"\x01" if policy is not None else b"\x00"
        out = [flag]
        if policy is not None:
            out.append(self._vocab_json())
        return EcallResponse(Status.OK, tuple(out))

    def _op_generate_quote(self, fields: tuple[bytes, ...]) -> EcallResponse:
        (nonce,) = self._take_fields(fields, 1)
        if len(nonce) != CHALLENGE_NONCE_BYTES:
            raise MalformedFrame(
                f"challenge nonce must be {CHALLENGE_NONCE_BYTES} bytes"
            )
        self._eph_priv = X25519PrivateKey.generate()
        from cryptography.hazmat.primitives.serialization import (
            Encoding,
            PublicFormat,
        )

        eph_pub = self._eph_priv.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw
        )
        report_data = (eph_pub + nonce).ljust(REPORT_DATA_BYTES, b"\x00")
        signature = _quoting_private_key(self._device_secret).sign(
            self._measurement + report_data
        )
        return EcallResponse(
            Status.OK, (self._measurement, report_data, signature)
        )

    def _op_provision_policy(self, fields: tuple[bytes, ...]) -> EcallResponse:
        (payload,) = self._take_fields(fields, 1)
        self._require_keys()
        if self._eph_priv is None:
            raise NotAttested("no attestation round is in flight")
        if self._config.verifier_verification_key is None:
            raise NotAttested("no verifier key configured")
        try:
            r = ByteReader(payload)
            verifier_eph_pub = r.take(32)
            nonce = r.take(12)
            ciphertext = r.take_prefixed()
            signature = r.take(64)
            r.expect_end()
        except ValueError as exc:
            raise MalformedFrame(f"bad provisioning payload: {exc}") from exc

        from cryptography.hazmat.primitives.serialization import (
            Encoding,
            PublicFormat,
        )

        my_eph_pub = self._eph_priv.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw
        )
        signed = (
            _PROVISION_SIG_TAG
            + my_eph_pub
            + verifier_eph_pub
            + nonce
            + ciphertext
        )
        try:
            Ed25519PublicKey.from_public_bytes(
                self._config.verifier_verification_key
            ).verify(signature, signed)
        except InvalidSignature as exc:
            raise NotAttested("provisioning signature rejected") from exc

        shared = self._eph_priv.exchange(
            X25519PublicKey.from_public_bytes(verifier_eph_pub)
        )
        key = HKDF(
            algorithm=SHA256(),
            length=32,
            salt=None,
            info=_PROVISION_INFO + my_eph_pub + verifier_eph_pub,
        ).derive(shared)
        try:
            policy_text = AESGCM(key).decrypt(
                nonce, ciphertext, my_eph_pub + verifier_eph_pub
            ).decode()
        except InvalidTag as exc:
            raise AuthenticationFailure(
                "provisioning payload not bound to this enclave"
            ) from exc
        except UnicodeDecodeError as exc:
            raise BadPolicy(f"policy text not UTF-8: {exc}") from exc
        try:
            self._policy = parse_policy(policy_text)
        except PolicyError as exc:
            raise BadPolicy(f"provisioned policy rejected: {exc}") from exc
        # one provisioning per attestation round
        self._eph_priv = None
        return EcallResponse(
            Status.OK,
            (self._seal(self._policy.source_text.encode()), self._vocab_json()),
        )

    def _op_encrypt(self, fields: tuple[bytes, ...]) -> EcallResponse:
        (rid_raw,) = self._take_fields(fields, 1)
        pp, _ = self._require_keys()
        policy = self._require_policy()
        rid = rid_raw.decode()
        plaintext = self._ocall_read(rid)
        container = abe.encrypt_file(pp, policy, plaintext)
        blob = container.to_bytes()
        out_rid = rid + ".ct"
        self._ocall_write(out_rid, blob)
        return EcallResponse(
            Status.OK, (out_rid.encode(), hashlib.sha256(blob).digest())
        )

    def _op_decrypt(self, fields: tuple[bytes, ...]) -> EcallResponse:
        attrs_raw, rid_raw = self._take_fields(fields, 2)
        pp, mk = self._require_keys()
        attrs = self._decode_attrs(attrs_raw)
        rid = rid_raw.decode()
        blob = self._ocall_read(rid)
        container = abe.CiphertextContainer.from_bytes(blob)
        # keygen happens at decryption time, from the attrs on the request
        uk = abe.keygen(mk, pp, attrs)
        plaintext = abe.decrypt_file(pp, uk, container)
        out_rid = rid + ".pt"
        self._ocall_write(out_rid, plaintext)
        return EcallResponse(
            Status.OK, (out_rid.encode(), hashlib.sha256(plaintext).digest())
        )

    def _op_export_public(self, fields: tuple[bytes, ...]) -> EcallResponse:
        """Public parameters leave in the clear; they are public by design
        and carry no decryption capability."""
        self._take_fields(fields, 0)
        pp, _ = self._require_keys()
        return EcallResponse(Status.OK, (pp.to_bytes(),))

    def _op_keygen(self, fields: tuple[bytes, ...]) -> EcallResponse:
        (attrs_raw,) = self._take_fields(fields, 1)
        pp, mk = self._require_keys()
        uk = abe.keygen(mk, pp, self._decode_attrs(attrs_raw))
        return EcallResponse(Status.OK, (uk.to_bytes(),))


# --- host-side handle ---------------------------------------------------------

_STATUS_TO_ERROR: dict[int, Callable[[str], Exception]] = {
    Status.STATE_NO_KEYS: lambda m: StateError("NoKeys", m),
    Status.STATE_NO_POLICY: lambda m: StateError("NoPolicy", m),
    Status.STATE_ALREADY_SET_UP: lambda m: StateError("AlreadySetUp", m),
    Status.ACCESS_DENIED: SatisfactionFailure,
    Status.AUTH_FAILED: AuthenticationFailure,
    Status.MALFORMED: MalformedFrame,
    Status.BAD_POLICY: BadPolicy,
    Status.NOT_ATTESTED: NotAttested,
    Status.OCALL_FAILED: OcallFailure,
    Status.SEAL_FAILED: SealError,
    Status.UNKNOWN_OPCODE: UnknownOpcode,
}


class EnclaveHost:
    """Untrusted-side handle: serialized ECALL entry plus a boundary transcript.

    ECALLs are processed strictly one at a time; concurrent callers queue
    on an internal lock. The transcript records every byte that crosses
    the boundary in either direction.
    """

    def __init__(
        self,
        config: EnclaveConfig,
        ocall: OcallHandler,
        record_transcript: bool = True,
    ) -> None:
        recorder = _RecordingOcall(ocall, self)
        self._transcript: list[tuple[str, str, bytes]] = []
        self._recording = record_transcript
        self._lock = threading.Lock()
        self._enclave = _Enclave(config, recorder)

    @property
    def measurement(self) -> bytes:
        return self._enclave.measurement

    @property
    def transcript(self) -> tuple[tuple[str, str, bytes], ...]:
        """(kind, resource id, payload) triples; kind is one of
        ecall_request / ecall_response / ocall_read / ocall_write."""
        with self._lock:
            return tuple(self._transcript)

    def _record(self, kind: str, rid: str, payload: bytes) -> None:
        if self._recording:
            self._transcript.append((kind, rid, payload))

    def ecall_raw(self, request_bytes: bytes) -> bytes:
        """Wire-level entry point: frames in, frames out, never raises."""
        with self._lock:
            self._record("ecall_request", "", request_bytes)
            try:
                request = EcallRequest.from_bytes(request_bytes)
                response = self._enclave.handle(request)
            except MalformedFrame as exc:
                response = EcallResponse(Status.MALFORMED, (str(exc).encode(),))
            out = response.to_bytes()
            self._record("ecall_response", "", out)
            return out

    def ecall(self, request: EcallRequest) -> EcallResponse:
        """Typed entry point: decodes the response and raises on error status."""
        response = EcallResponse.from_bytes(self.ecall_raw(request.to_bytes()))
        if response.status != Status.OK:
            message = (
                response.fields[0].decode("utf-8", "replace")
                if response.fields
                else f"status {response.status:#x}"
            )
            factory = _STATUS_TO_ERROR.get(response.status)
            if factory is None:
                raise EnclaveError(f"unrecognized status {response.status:#x}: {message}")
            raise factory(message)
        return response


class _RecordingOcall:
    """Wraps the host OCALL handler so every crossing lands in the transcript."""

    def __init__(self, inner: OcallHandler, host: EnclaveHost) -> None:
        self._inner = inner
        self._host = host

    def read_input(self, resource_id: str) -> bytes:
        data = self._inner.read_input(resource_id)
        if isinstance(data, (bytes, bytearray)):
            self._host._record("ocall_read", resource_id, bytes(data))
        return data

    def write_output(self, resource_id: str, data: bytes) -> None:
        self._host._record("ocall_write", resource_id, data)
        self._inner.write_output(resource_id, data)


def create_enclave(
    config: EnclaveConfig,
    ocall: OcallHandler,
    record_transcript: bool = True,
) -> EnclaveHost:
    """Build an enclave; measurement is fixed by identity and config version.

    record_transcript=False skips payload capture for long-lived hosts
    where the boundary log would grow without bound.
    """
    return EnclaveHost(config, ocall, record_transcript=record_transcript)
