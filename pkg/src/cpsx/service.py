"""HTTP facade over the enclave: upload-and-encrypt, attribute-gated
decrypt, file listing, and single-use download handoff.

Every cryptographic decision happens inside the enclave. This module only
moves bytes between HTTP, disk, and the ECALL boundary; it cannot parse
containers, evaluate policies, or see key material. Plaintext touches disk
only as short-lived staging for issued download tokens, and staging is
swept on startup so tokens never survive a restart.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import secrets
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Optional

from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.responses import Response
from pydantic import BaseModel, Field

from . import attestation as att
from . import enclave as enc
from .enclave import EcallRequest, Opcode
from .errors import (
    AuthenticationFailure,
    CpsxError,
    MalformedFrame,
    SatisfactionFailure,
    StateError,
)

_audit = logging.getLogger("cpsx.service.audit")

_HEX_128 = re.compile(r"[0-9a-f]{32}")

DEFAULT_MAX_UPLOAD_BYTES = 100 * 1024 * 1024
DEFAULT_TOKEN_TTL_SECONDS = 300.0


class NotReady(Exception):
    """Raised while the enclave is not set up, attested, and provisioned."""


class TokenGone(Exception):
    """Raised for a download token that was already redeemed or expired."""


@dataclass(frozen=True)
class ServiceConfig:
    """Deployment knobs. Everything the service persists lives under
    storage_dir; the device secret may sit elsewhere (it outlives re-setups)."""

    storage_dir: Path
    device_secret_path: Path
    policy_text: Optional[str] = None
    code_identity: str = "cpsx-service"
    config_version: int = 1
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES
    token_ttl_seconds: float = DEFAULT_TOKEN_TTL_SECONDS
    # None selects the embedded verifier; remote verifiers are not wired up
    verifier_url: Optional[str] = None

    @classmethod
    def from_env(cls, env: Mapping[str, str] = os.environ) -> "ServiceConfig":
        storage = Path(env.get("CPSX_STORAGE_DIR", "data"))
        policy = env.get("CPSX_POLICY")
        policy_file = env.get("CPSX_POLICY_FILE")
        if policy_file:
            policy = Path(policy_file).read_text().strip()
        return cls(
            storage_dir=storage,
            device_secret_path=Path(
                env.get("CPSX_DEVICE_SECRET", str(storage / "device.secret"))
            ),
            policy_text=policy,
            max_upload_bytes=int(
                env.get("CPSX_MAX_UPLOAD_BYTES", DEFAULT_MAX_UPLOAD_BYTES)
            ),
            token_ttl_seconds=float(
                env.get("CPSX_TOKEN_TTL_SECONDS", DEFAULT_TOKEN_TTL_SECONDS)
            ),
            verifier_url=env.get("CPSX_VERIFIER_URL"),
        )


@dataclass(frozen=True)
class StoredFile:
    """One encrypted file at rest: container plus its metadata sidecar."""

    file_id: str
    filename: str
    size: int
    created: str  # ISO-8601 UTC
    container_path: Path

    def summary(self) -> dict:
        return {
            "file_id": self.file_id,
            "filename": self.filename,
            "size": self.size,
            "created": self.created,
        }


@dataclass
class _TokenRecord:
    file_id: str
    filename: str
    expires_at: float
    path: Path


def _write_atomic(path: Path, data: bytes) -> None:
    # same-directory temp keeps the final rename atomic on POSIX
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


class _VaultOcall:
    """Resource ids name exchange slots, never raw paths. Reads come from
    the in-memory inbox or the container store; writes land in the container
    store or download staging. Anything else is rejected."""

    def __init__(self, vault: "FileVault") -> None:
        self._vault = vault

    def read_input(self, resource_id: str) -> bytes:
        return self._vault._ocall_read(resource_id)

    def write_output(self, resource_id: str, data: bytes) -> None:
        self._vault._ocall_write(resource_id, data)


class FileVault:
    """Storage and enclave session behind the HTTP handlers."""

    def __init__(
        self,
        config: ServiceConfig,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        if config.verifier_url is not None:
            raise ValueError(
                "remote verifier endpoints are not supported; "
                "unset verifier_url to use the embedded verifier"
            )
        self._config = config
        self._clock = clock
        self._containers = config.storage_dir / "containers"
        self._sealed = config.storage_dir / "sealed"
        self._staging = config.storage_dir / "staging"
        self._inbox: dict[str, bytes] = {}
        self._tokens: dict[str, _TokenRecord] = {}
        self._spent: set[str] = set()
        self._lock = threading.Lock()
        self._vocab: list[str] = []
        self._ready = False
        self._host: Optional[enc.EnclaveHost] = None

    # -- lifecycle --

    @property
    def ready(self) -> bool:
        return self._ready

    def startup(self) -> None:
        """Restore-or-setup, then attest and provision. Reuses sealed blobs
        when present so keys survive restarts; leftover staging is deleted
        because download tokens are memory-only."""
        for directory in (self._containers, self._sealed, self._staging):
            directory.mkdir(parents=True, exist_ok=True)
        for leftover in self._staging.iterdir():
            leftover.unlink()
        device_secret = self._ensure_device_secret()
        verifier = att.Verifier(
            enc.compute_measurement(
                self._config.code_identity, self._config.config_version
            ),
            enc.quoting_verification_key(device_secret),
        )
        self._host = enc.create_enclave(
            enc.EnclaveConfig(
                code_identity=self._config.code_identity,
                config_version=self._config.config_version,
                device_secret_path=self._config.device_secret_path,
                verifier_verification_key=verifier.verification_key,
            ),
            _VaultOcall(self),
            record_transcript=False,
        )
        pub = self._sealed / "pub.seal"
        master = self._sealed / "master.seal"
        policy = self._sealed / "policy.seal"

        if pub.exists() and master.exists():
            fields = [pub.read_bytes(), master.read_bytes()]
            if policy.exists():
                fields.append(policy.read_bytes())
            resp = self._host.ecall(EcallRequest(Opcode.RESTORE, tuple(fields)))
            provisioned = resp.fields[0] == b"\x01"
            if provisioned:
                self._vocab = json.loads(resp.fields[1])
            _audit.info("startup.restored provisioned=%s", provisioned)
        else:
            resp = self._host.ecall(EcallRequest(Opcode.SETUP))
            _write_atomic(pub, resp.fields[0])
            _write_atomic(master, resp.fields[1])
            provisioned = False
            _audit.info("startup.setup")

        if not provisioned:
            if self._config.policy_text is None:
                _audit.warning("startup.unprovisioned no policy configured")
                return
            self._provision(verifier, self._config.policy_text, policy)
        self._ready = True

    def _ensure_device_secret(self) -> bytes:
        path = self._config.device_secret_path
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(os.urandom(enc.DEVICE_SECRET_BYTES))
            tmp.chmod(0o600)
            tmp.replace(path)
        return enc.load_device_secret(path)

    def _provision(
        self, verifier: att.Verifier, policy_text: str, policy_path: Path
    ) -> None:
        challenge = verifier.issue_challenge()
        qresp = self._host.ecall(
            EcallRequest(Opcode.GENERATE_QUOTE, (challenge.nonce,))
        )
        quote = att.Quote(
            measurement=qresp.fields[0],
            report_data=qresp.fields[1],
            signature=qresp.fields[2],
        )
        response = verifier.provision_policy(quote, policy_text)
        presp = self._host.ecall(
            EcallRequest(Opcode.PROVISION_POLICY, (response.to_bytes(),))
        )
        _write_atomic(policy_path, presp.fields[0])
        self._vocab = json.loads(presp.fields[1])
        _audit.info("startup.provisioned attributes=%d", len(self._vocab))

    def _require_ready(self) -> enc.EnclaveHost:
        if not self._ready or self._host is None:
            raise NotReady("enclave not set up, attested, and provisioned")
        return self._host

    # -- OCALL routing --

    def _ocall_read(self, rid: str) -> bytes:
        kind, _, rest = rid.partition(":")
        if kind == "enc":
            with self._lock:
                return self._inbox[rid]
        if kind == "dec":
            _, _, fid = rest.partition(":")
            if _HEX_128.fullmatch(fid):
                return (self._containers / f"{fid}.cpsx").read_bytes()
        raise KeyError(rid)

    def _ocall_write(self, rid: str, data: bytes) -> None:
        kind, _, rest = rid.partition(":")
        if kind == "enc" and rest.endswith(".ct"):
            fid = rest[: -len(".ct")]
            if _HEX_128.fullmatch(fid):
                _write_atomic(self._containers / f"{fid}.cpsx", data)
                return
        if kind == "dec":
            token, _, tail = rest.partition(":")
            if tail.endswith(".pt") and _HEX_128.fullmatch(token):
                _write_atomic(self._staging / token, data)
                return
        raise KeyError(rid)

    # -- operations --

    def encrypt(self, filename: str, data: bytes) -> StoredFile:
        host = self._require_ready()
        file_id = secrets.token_hex(16)
        rid = f"enc:{file_id}"
        with self._lock:
            self._inbox[rid] = data
        try:
            resp = host.ecall(EcallRequest(Opcode.ENCRYPT, (rid.encode(),)))
        finally:
            with self._lock:
                self._inbox.pop(rid, None)
        container_path = self._containers / f"{file_id}.cpsx"
        # storage is outside the trust boundary: keep nothing that does not
        # match the digest the enclave reported for this container
        if hashlib.sha256(container_path.read_bytes()).digest() != resp.fields[1]:
            container_path.unlink(missing_ok=True)
            raise AuthenticationFailure(
                "stored container does not match the reported digest"
            )
        stored = StoredFile(
            file_id=file_id,
            filename=Path(filename).name or "unnamed",
            size=len(data),
            created=datetime.now(timezone.utc).isoformat(),
            container_path=self._containers / f"{file_id}.cpsx",
        )
        _write_atomic(
            self._containers / f"{file_id}.json",
            json.dumps(
                {
                    "file_id": stored.file_id,
                    "filename": stored.filename,
                    "size": stored.size,
                    "created": stored.created,
                }
            ).encode(),
        )
        _audit.info("encrypt.stored file_id=%s size=%d", file_id, len(data))
        return stored

    def decrypt(self, file_id: str, attributes: list[str]) -> str:
        """Run the gated decrypt; returns a single-use download token.
        Raises SatisfactionFailure when the attributes do not meet the
        policy (nothing is staged in that case)."""
        host = self._require_ready()
        self._purge_expired()
        if (
            not _HEX_128.fullmatch(file_id)
            or not (self._containers / f"{file_id}.cpsx").exists()
        ):
            raise FileNotFoundError(file_id)
        meta = self._load_meta(file_id)
        token = secrets.token_hex(16)
        rid = f"dec:{token}:{file_id}"
        attrs_field = json.dumps(sorted(set(attributes))).encode()
        try:
            resp = host.ecall(
                EcallRequest(Opcode.DECRYPT, (attrs_field, rid.encode()))
            )
        except SatisfactionFailure:
            _audit.info("decrypt.denied file_id=%s", file_id)
            raise
        staged = self._staging / token
        if hashlib.sha256(staged.read_bytes()).digest() != resp.fields[1]:
            staged.unlink(missing_ok=True)
            raise AuthenticationFailure(
                "staged plaintext does not match the reported digest"
            )
        record = _TokenRecord(
            file_id=file_id,
            filename=meta.filename if meta else file_id,
            expires_at=self._clock() + self._config.token_ttl_seconds,
            path=self._staging / token,
        )
        with self._lock:
            self._tokens[token] = record
        _audit.info("decrypt.granted file_id=%s", file_id)
        return token

    def redeem(self, token: str) -> tuple[bytes, str]:
        """Hand out staged plaintext exactly once, then delete it."""
        with self._lock:
            record = self._tokens.pop(token, None)
            if record is None:
                if token in self._spent:
                    raise TokenGone(token)
                raise KeyError(token)
            self._spent.add(token)
        if record.expires_at < self._clock():
            record.path.unlink(missing_ok=True)
            _audit.info("download.expired file_id=%s", record.file_id)
            raise TokenGone(token)
        data = record.path.read_bytes()
        record.path.unlink(missing_ok=True)
        _audit.info("download.redeemed file_id=%s", record.file_id)
        return data, record.filename

    def list_files(self) -> list[StoredFile]:
        out = []
        for sidecar in self._containers.glob("*.json"):
            try:
                meta = json.loads(sidecar.read_bytes())
                stored = StoredFile(
                    file_id=meta["file_id"],
                    filename=meta["filename"],
                    size=meta["size"],
                    created=meta["created"],
                    container_path=sidecar.with_suffix(".cpsx"),
                )
            except (ValueError, KeyError):
                _audit.warning("list.skipped sidecar=%s", sidecar.name)
                continue
            if stored.container_path.exists():
                out.append(stored)
        out.sort(key=lambda s: (s.created, s.file_id), reverse=True)
        return out

    def attributes(self) -> list[str]:
        self._require_ready()
        return list(self._vocab)

    def _load_meta(self, file_id: str) -> Optional[StoredFile]:
        sidecar = self._containers / f"{file_id}.json"
        if not sidecar.exists():
            return None
        try:
            meta = json.loads(sidecar.read_bytes())
            return StoredFile(
                file_id=meta["file_id"],
                filename=meta["filename"],
                size=meta["size"],
                created=meta["created"],
                container_path=self._containers / f"{file_id}.cpsx",
            )
        except (ValueError, KeyError):
            return None

    def _purge_expired(self) -> None:
        now = self._clock()
        with self._lock:
            dead = [t for t, r in self._tokens.items() if r.expires_at < now]
            for token in dead:
                record = self._tokens.pop(token)
                self._spent.add(token)
                record.path.unlink(missing_ok=True)
            while len(self._spent) > 65536:
                self._spent.pop()


class DecryptRequest(BaseModel):
    file_id: str
    attributes: list[str] = Field(min_length=1)


def _content_disposition(filename: str) -> str:
    safe = re.sub(r"[^\w. ()-]", "_", filename) or "download"
    return f'attachment; filename="{safe}"'


def create_app(
    config: ServiceConfig, clock: Callable[[], float] = time.monotonic
) -> FastAPI:
    """Build the application and bring the vault up synchronously so a
    returned app is immediately serviceable (or consistently 503)."""
    vault = FileVault(config, clock=clock)
    vault.startup()
    app = FastAPI(title="cpsx file encryption service")
    app.state.vault = vault

    @app.post("/encrypt-sgx")
    def encrypt_sgx(file: UploadFile = File(...)) -> dict:
        if not vault.ready:
            raise HTTPException(503, "service not provisioned")
        data = file.file.read(config.max_upload_bytes + 1)
        if len(data) > config.max_upload_bytes:
            raise HTTPException(413, "upload exceeds size limit")
        if not data:
            raise HTTPException(400, "empty upload")
        try:
            stored = vault.encrypt(file.filename or "unnamed", data)
        except NotReady as exc:
            raise HTTPException(503, "service not provisioned") from exc
        except (StateError, CpsxError) as exc:
            _audit.error("encrypt.failed error=%s", exc)
            raise HTTPException(500, "encryption failed") from exc
        return {
            "file_id": stored.file_id,
            "filename": stored.filename,
            "size": stored.size,
        }

    @app.post("/decrypt-sgx")
    def decrypt_sgx(request: DecryptRequest) -> dict:
        if not vault.ready:
            raise HTTPException(503, "service not provisioned")
        try:
            token = vault.decrypt(request.file_id, request.attributes)
        except FileNotFoundError as exc:
            raise HTTPException(404, "unknown file") from exc
        except SatisfactionFailure as exc:
            raise HTTPException(403, "access denied") from exc
        except NotReady as exc:
            raise HTTPException(503, "service not provisioned") from exc
        except (AuthenticationFailure, MalformedFrame) as exc:
            _audit.error(
                "decrypt.corrupt file_id=%s error=%s", request.file_id, exc
            )
            raise HTTPException(500, "stored container failed checks") from exc
        except (StateError, CpsxError) as exc:
            _audit.error("decrypt.failed file_id=%s error=%s", request.file_id, exc)
            raise HTTPException(500, "decryption failed") from exc
        return {"download_token": token}

    @app.get("/files")
    def files() -> list[dict]:
        return [stored.summary() for stored in vault.list_files()]

    @app.get("/download/{token}")
    def download(token: str) -> Response:
        try:
            data, filename = vault.redeem(token)
        except KeyError as exc:
            raise HTTPException(404, "unknown token") from exc
        except TokenGone as exc:
            raise HTTPException(410, "token already used or expired") from exc
        return Response(
            content=data,
            media_type="application/octet-stream",
            headers={"Content-Disposition": _content_disposition(filename)},
        )

    @app.get("/attributes")
    def attributes() -> list[str]:
        if not vault.ready:
            raise HTTPException(503, "service not provisioned")
        return vault.attributes()

    return app


def run(
    config: ServiceConfig, host: str = "127.0.0.1", port: int = 8000
) -> None:  # pragma: no cover - thin launcher
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port)
