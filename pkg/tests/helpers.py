"""Shared test helpers: random policy trees, an independent evaluator,
and a minimal in-memory enclave rig."""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from cpsx import attestation as att
from cpsx import enclave as enc
from cpsx.enclave import EcallRequest, Opcode
from cpsx.policy import Gate, Leaf, PolicyNode, PolicyTree, tree_from_root

THREE_ATTR_TEXT = "designation:professor department:cs file-type:pdf 3of3"
THREE_ATTRS = frozenset(
    {"designation:professor", "department:cs", "file-type:pdf"}
)


def oracle_satisfies(node: PolicyNode, attrs: frozenset[str]) -> bool:
    """Direct recursive counting, reimplemented independently of the library."""
    if isinstance(node, Leaf):
        return node.attr in attrs
    hits = sum(1 for c in node.children if oracle_satisfies(c, attrs))
    return hits >= node.threshold


def random_tree(
    rng: random.Random,
    universe: list[str],
    max_depth: int = 3,
    max_leaves: int = 8,
) -> PolicyTree:
    budget = [rng.randrange(1, max_leaves + 1)]

    def build(depth: int) -> PolicyNode:
        if depth >= max_depth or budget[0] <= 1 or rng.random() < 0.4:
            budget[0] -= 1
            return Leaf(attr=rng.choice(universe))
        width = rng.randrange(2, min(4, budget[0]) + 1)
        children = tuple(build(depth + 1) for _ in range(width))
        return Gate(threshold=rng.randrange(1, width + 1), children=children)

    return tree_from_root(build(0))


class DictOcall:
    """OCALL handler backed by a plain dict of resource id -> bytes."""

    def __init__(self) -> None:
        self.store: dict[str, bytes] = {}

    def read_input(self, resource_id: str) -> bytes:
        return self.store[resource_id]

    def write_output(self, resource_id: str, data: bytes) -> None:
        self.store[resource_id] = data


@dataclass
class EnclaveRig:
    """One device, one verifier, one enclave, all wired together."""

    secret_path: Path
    device_secret: bytes
    measurement: bytes
    verifier: att.Verifier
    config: enc.EnclaveConfig
    ocall: DictOcall
    host: enc.EnclaveHost
    sealed: dict[str, bytes] = field(default_factory=dict)

    def fresh_host(self, ocall: DictOcall | None = None) -> enc.EnclaveHost:
        """Second enclave instance with identical measurement and device."""
        return enc.create_enclave(self.config, ocall or DictOcall())

    def run_setup(self) -> None:
        resp = self.host.ecall(EcallRequest(Opcode.SETUP))
        self.sealed["pub"], self.sealed["master"] = resp.fields

    def attest_and_provision(
        self, policy_text: str = THREE_ATTR_TEXT
    ) -> att.ProvisioningResponse:
        challenge = self.verifier.issue_challenge()
        resp = self.host.ecall(
            EcallRequest(Opcode.GENERATE_QUOTE, (challenge.nonce,))
        )
        quote = att.Quote(
            measurement=resp.fields[0],
            report_data=resp.fields[1],
            signature=resp.fields[2],
        )
        prov = self.verifier.provision_policy(quote, policy_text)
        presp = self.host.ecall(
            EcallRequest(Opcode.PROVISION_POLICY, (prov.to_bytes(),))
        )
        self.sealed["policy"], self.sealed["vocab"] = presp.fields
        return prov

    def make_ready(self, policy_text: str = THREE_ATTR_TEXT) -> None:
        self.run_setup()
        self.attest_and_provision(policy_text)


def build_rig(
    tmp_path: Path,
    code_identity: str = "app",
    version: int = 1,
    clock: Callable[[], float] | None = None,
) -> EnclaveRig:
    tmp_path.mkdir(parents=True, exist_ok=True)
    secret_path = tmp_path / "device.secret"
    if not secret_path.exists():
        secret_path.write_bytes(os.urandom(enc.DEVICE_SECRET_BYTES))
    device_secret = enc.load_device_secret(secret_path)
    measurement = enc.compute_measurement(code_identity, version)
    extra = {} if clock is None else {"clock": clock}
    verifier = att.Verifier(
        measurement, enc.quoting_verification_key(device_secret), **extra
    )
    config = enc.EnclaveConfig(
        code_identity=code_identity,
        config_version=version,
        device_secret_path=secret_path,
        verifier_verification_key=verifier.verification_key,
    )
    ocall = DictOcall()
    host = enc.create_enclave(config, ocall)
    return EnclaveRig(
        secret_path=secret_path,
        device_secret=device_secret,
        measurement=measurement,
        verifier=verifier,
        config=config,
        ocall=ocall,
        host=host,
    )
