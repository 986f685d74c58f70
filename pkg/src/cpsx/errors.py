"""Exception taxonomy shared across the toolkit.

Every error raised by cpsx code derives from CpsxError so callers can
catch the whole family at integration boundaries (CLI exit codes, HTTP
status mapping) without masking unrelated bugs.
"""

from __future__ import annotations


class CpsxError(Exception):
    """Base class for all cpsx errors."""


# --- policy ----------------------------------------------------------------

class PolicyError(CpsxError):
    """Base class for policy text / tree errors."""


class EmptyPolicy(PolicyError):
    """Policy text contains no tokens."""


class BadToken(PolicyError):
    """Attribute token failed normalization."""


class ArityError(PolicyError):
    """Gate arity is inconsistent with the parse stack."""


class LimitExceeded(PolicyError):
    """Tree exceeds the configured depth or leaf-count cap."""


# --- abe core ---------------------------------------------------------------

class AbeError(CpsxError):
    """Base class for CP-ABE scheme errors."""


class UnsupportedSecurityLevel(AbeError):
    """Requested security level has no provider."""


class EmptyAttributeSet(AbeError):
    """Key generation requires at least one attribute."""


class SatisfactionFailure(AbeError):
    """User attributes do not satisfy the ciphertext policy."""


class AuthenticationFailure(AbeError):
    """AEAD tag verification failed (tampered or mismatched data)."""


class MalformedCiphertext(AbeError):
    """KEM ciphertext bytes could not be decoded."""


class MalformedContainer(AbeError):
    """Ciphertext container framing is invalid."""


# --- enclave ----------------------------------------------------------------

class EnclaveError(CpsxError):
    """Base class for enclave boundary errors."""


class SealError(EnclaveError):
    """Sealed blob rejected: tamper, measurement or device mismatch."""


class MalformedFrame(EnclaveError):
    """ECALL/OCALL frame bytes are not well formed."""


class UnknownOpcode(EnclaveError):
    """ECALL opcode is not part of the dispatch table."""


class StateError(EnclaveError):
    """Operation is illegal in the enclave's current state.

    ``kind`` is one of "NoKeys", "NoPolicy", "AlreadySetUp".
    """

    def __init__(self, kind: str, message: str | None = None) -> None:
        super().__init__(message or kind)
        self.kind = kind


class OcallFailure(EnclaveError):
    """An OCALL handler raised or returned an error."""


# --- attestation ------------------------------------------------------------

class AttestationError(CpsxError):
    """Base class for attestation protocol errors."""


class NotAttested(AttestationError):
    """Provisioning requested without a verifier-accepted quote."""


class BadPolicy(AttestationError):
    """Provisioned policy failed to parse inside the enclave."""


# --- bench ------------------------------------------------------------------

class BenchConfigError(CpsxError):
    """Benchmark configuration failed validation."""
