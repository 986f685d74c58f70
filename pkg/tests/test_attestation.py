"""Remote attestation tests: quote verification, replay, provisioning channel."""

from __future__ import annotations

import pytest
from helpers import THREE_ATTR_TEXT, THREE_ATTRS, build_rig

from cpsx import attestation as att
from cpsx import enclave as enc
from cpsx.enclave import EcallRequest, Opcode
from cpsx.errors import AuthenticationFailure, BadPolicy, NotAttested


@pytest.fixture
def rig(tmp_path):
    r = build_rig(tmp_path)
    r.run_setup()
    return r


def _quote_for(rig, challenge) -> att.Quote:
    resp = rig.host.ecall(
        EcallRequest(Opcode.GENERATE_QUOTE, (challenge.nonce,))
    )
    return att.Quote(*resp.fields)


# --- quote verification ---------------------------------------------------------

def test_fresh_quote_accepted(rig):
    challenge = rig.verifier.issue_challenge()
    result = rig.verifier.verify_quote(_quote_for(rig, challenge))
    assert result.accepted and result.reason is None
    assert bool(result)


def test_quote_replay_rejected(rig):
    quote = _quote_for(rig, rig.verifier.issue_challenge())
    assert rig.verifier.verify_quote(quote).accepted
    again = rig.verifier.verify_quote(quote)
    assert not again.accepted and again.reason == "ReplayedNonce"


def test_flipped_signature_byte_rejected(rig):
    quote = _quote_for(rig, rig.verifier.issue_challenge())
    bad_sig = bytearray(quote.signature)
    bad_sig[7] ^= 0x01
    forged = att.Quote(quote.measurement, quote.report_data, bytes(bad_sig))
    result = rig.verifier.verify_quote(forged)
    assert not result.accepted and result.reason == "BadSignature"


def test_wrong_measurement_rejected(tmp_path):
    rig = build_rig(tmp_path, version=1)
    rig.run_setup()
    strict = att.Verifier(
        expected_measurement=enc.compute_measurement(rig.config.code_identity, 2),
        quoting_verification_key=enc.quoting_verification_key(rig.device_secret),
    )
    quote = _quote_for(rig, strict.issue_challenge())
    result = strict.verify_quote(quote)
    assert not result.accepted and result.reason == "WrongMeasurement"


def test_expired_nonce_rejected_via_clock(tmp_path):
    now = [1000.0]
    rig = build_rig(tmp_path, clock=lambda: now[0])
    rig.run_setup()
    challenge = rig.verifier.issue_challenge()
    quote = _quote_for(rig, challenge)
    now[0] += 61.0
    result = rig.verifier.verify_quote(quote)
    assert not result.accepted and result.reason == "StaleNonce"


def test_fabricated_nonce_rejected(rig):
    quote = _quote_for(
        rig, att.AttestationChallenge(nonce=b"\xab" * 16, issued_at=0.0)
    )
    result = rig.verifier.verify_quote(quote)
    assert not result.accepted and result.reason == "StaleNonce"


def test_quote_field_lengths_enforced():
    with pytest.raises(ValueError):
        att.Quote(b"\x00" * 31, b"\x00" * 64, b"\x00" * 64)
    with pytest.raises(ValueError):
        att.Quote(b"\x00" * 32, b"\x00" * 63, b"\x00" * 64)
    with pytest.raises(ValueError):
        att.Quote(b"\x00" * 32, b"\x00" * 64, b"\x00" * 65)


# --- policy provisioning --------------------------------------------------------

def test_provisioning_round_reaches_ready(rig):
    rig.attest_and_provision()
    rig.ocall.store["f"] = b"now encryptable"
    rig.host.ecall(EcallRequest(Opcode.ENCRYPT, (b"f",)))
    assert "f.ct" in rig.ocall.store


def test_provision_without_quote_rejected_by_verifier(rig):
    with pytest.raises(NotAttested):
        rig.verifier.provision_policy(
            att.Quote(b"\x00" * 32, b"\x00" * 64, b"\x00" * 64), THREE_ATTR_TEXT
        )


def test_provision_with_replayed_quote_rejected(rig):
    quote = _quote_for(rig, rig.verifier.issue_challenge())
    assert rig.verifier.verify_quote(quote).accepted
    with pytest.raises(NotAttested):
        rig.verifier.provision_policy(quote, THREE_ATTR_TEXT)


def test_enclave_without_pending_quote_rejects_provisioning(rig):
    quote = _quote_for(rig, rig.verifier.issue_challenge())
    response = rig.verifier.provision_policy(quote, THREE_ATTR_TEXT)
    twin = rig.fresh_host()
    twin.ecall(EcallRequest(Opcode.RESTORE, (rig.sealed["pub"], rig.sealed["master"])))
    with pytest.raises(NotAttested):
        twin.ecall(
            EcallRequest(Opcode.PROVISION_POLICY, (response.to_bytes(),))
        )


def test_provisioning_response_bound_to_one_enclave(tmp_path):
    # a response built for enclave A must not provision an identical twin B
    a = build_rig(tmp_path, code_identity="twin")
    a.run_setup()
    b = build_rig(tmp_path / "b", code_identity="twin")
    b.run_setup()
    quote_a = _quote_for(a, a.verifier.issue_challenge())
    response = a.verifier.provision_policy(quote_a, THREE_ATTR_TEXT)
    # arm B with its own pending quote so only the channel binding can fail
    _quote_for(b, b.verifier.issue_challenge())
    with pytest.raises((AuthenticationFailure, NotAttested)):
        b.host.ecall(
            EcallRequest(Opcode.PROVISION_POLICY, (response.to_bytes(),))
        )


def test_tampered_provisioning_payload_rejected(rig):
    quote = _quote_for(rig, rig.verifier.issue_challenge())
    response = rig.verifier.provision_policy(quote, THREE_ATTR_TEXT)
    blob = bytearray(response.to_bytes())
    blob[-1] ^= 0x01
    with pytest.raises((AuthenticationFailure, NotAttested)):
        rig.host.ecall(EcallRequest(Opcode.PROVISION_POLICY, (bytes(blob),)))


def test_unsigned_substitute_payload_rejected(rig):
    # an attacker who knows the channel format but not the signing key
    quote = _quote_for(rig, rig.verifier.issue_challenge())
    genuine = rig.verifier.provision_policy(quote, THREE_ATTR_TEXT)
    forged = att.ProvisioningResponse(
        verifier_eph_pub=genuine.verifier_eph_pub,
        nonce=genuine.nonce,
        ciphertext=genuine.ciphertext,
        signature=bytes(64),
    )
    with pytest.raises(NotAttested):
        rig.host.ecall(EcallRequest(Opcode.PROVISION_POLICY, (forged.to_bytes(),)))


def test_malformed_policy_text_rejected_inside_enclave(rig):
    quote = _quote_for(rig, rig.verifier.issue_challenge())
    response = rig.verifier.provision_policy(quote, "and and 5of2")
    with pytest.raises(BadPolicy):
        rig.host.ecall(
            EcallRequest(Opcode.PROVISION_POLICY, (response.to_bytes(),))
        )


def test_provisioning_response_codec_round_trip(rig):
    quote = _quote_for(rig, rig.verifier.issue_challenge())
    response = rig.verifier.provision_policy(quote, THREE_ATTR_TEXT)
    assert att.ProvisioningResponse.from_bytes(response.to_bytes()) == response


# --- channel secrecy -------------------------------------------------------------

def test_policy_text_never_plaintext_on_the_wire(rig):
    challenge = rig.verifier.issue_challenge()
    quote = _quote_for(rig, challenge)
    response = rig.verifier.provision_policy(quote, THREE_ATTR_TEXT)
    rig.host.ecall(EcallRequest(Opcode.PROVISION_POLICY, (response.to_bytes(),)))
    text = THREE_ATTR_TEXT.encode()
    assert text not in challenge.nonce
    assert text not in quote.to_bytes()
    assert text not in response.to_bytes()
    for _, _, payload in rig.host.transcript:
        assert text not in payload


def test_vocabulary_returned_matches_policy_leaves(rig):
    import json

    rig.attest_and_provision()
    assert json.loads(rig.sealed["vocab"]) == sorted(THREE_ATTRS)
