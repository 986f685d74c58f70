"""Benchmark harness: encryption and decryption timing sweeps over rule
count, attributes per rule, and file size, with and without the enclave
boundary, emitting CSV.

Runs are single-threaded and use a monotonic timer; the first repetition
of every measurement is a warm-up and is discarded. Decryption is always
measured end to end including key generation, on both paths, because the
enclave issues the decryption key per request.

Sampling is designed for comparability: the process is pinned to one CPU
with the garbage collector paused, both paths run on the same payload
within each repetition interleaved trip by trip with the lead
alternating, and a repetition may take the fastest of several trips (see
BenchConfig.trips) to shed scheduler interference, which only ever adds
time. For on/off comparisons finer than the workload's own randomness
can resolve, mirror_randomness feeds both paths identical key-material
draws per trip (see BenchConfig).
"""

from __future__ import annotations

import contextlib
import csv
import gc
import hashlib
import json
import os
import random
import secrets
import statistics
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

from . import abe
from . import attestation as att
from . import enclave as enc
from .enclave import EcallRequest, Opcode
from .errors import BenchConfigError
from .pairing import get_provider
from .policy import Gate, Leaf, PolicyTree, tree_from_root

KB = 1000
MB = 1000 * 1000

EXPERIMENTS = ("rules", "attributes", "filesize")
ENCLAVE_MODES = ("on", "off", "both")

# sweep one axis, hold the other two at these values
DEFAULT_ATTRS_PER_RULE = 5
DEFAULT_RULES = 10
DEFAULT_FILE_BYTES = 500 * KB
DEFAULT_SWEEPS: dict[str, tuple[int, ...]] = {
    "rules": (1, 5, 10, 15, 20),
    "attributes": (2, 4, 6, 8, 10),
    "filesize": (1, 10, 25, 50),  # megabytes
}


@dataclass(frozen=True)
class BenchConfig:
    """One experiment: which axis to sweep, what to hold fixed, and how
    to run it. filesize sweeps are in megabytes; the other axes are counts.

    trips is the number of round trips per repetition and path; each
    repetition interleaves the two paths trip by trip and records the
    fastest trip of each. One trip is fine for trend work; comparisons
    of nearly-equal cells need several, because interference only ever
    adds time and the per-repetition minimum discards it.

    mirror_randomness gives each repetition one draw seed shared by every
    trip of both paths, so all trips of a repetition perform the same
    group arithmetic and the timing difference isolates the boundary.
    Scalar cost varies with the drawn exponent's bit pattern by far more
    than the boundary costs, so independent draws drown the comparison at
    any affordable sample size. Mirrored runs draw from a seeded
    generator instead of the operating system and are only meaningful for
    on/off comparison, not as absolute timings of production
    randomness."""

    experiment: str
    sweep: tuple[int, ...]
    attrs_per_rule: int = DEFAULT_ATTRS_PER_RULE
    rules: int = DEFAULT_RULES
    file_bytes: int = DEFAULT_FILE_BYTES
    repetitions: int = 5
    trips: int = 1
    enclave: str = "both"
    output_path: Optional[Path] = None
    include_kem_detail: bool = False
    mirror_randomness: bool = False

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise BenchConfigError(
                f"unknown experiment {self.experiment!r}, expected one of {EXPERIMENTS}"
            )
        if not self.sweep:
            raise BenchConfigError("sweep must be non-empty")
        if any(b <= a for a, b in zip(self.sweep, self.sweep[1:])):
            raise BenchConfigError(f"sweep must be strictly increasing: {self.sweep}")
        if any(v < 1 for v in self.sweep):
            raise BenchConfigError("sweep values must be >= 1")
        if self.repetitions < 3:
            raise BenchConfigError(
                f"need at least 3 repetitions, got {self.repetitions}"
            )
        if self.trips < 1:
            raise BenchConfigError(f"need at least 1 trip, got {self.trips}")
        if self.enclave not in ENCLAVE_MODES:
            raise BenchConfigError(
                f"enclave mode {self.enclave!r}, expected one of {ENCLAVE_MODES}"
            )
        if min(self.attrs_per_rule, self.rules, self.file_bytes) < 1:
            raise BenchConfigError("fixed parameters must be >= 1")


@dataclass(frozen=True)
class BenchRecord:
    """Aggregated timings for one (sweep value, phase, path) cell."""

    experiment: str
    param: int
    phase: str  # encrypt | decrypt | encrypt_kem | decrypt_kem
    enclave: bool
    median_ms: float
    mean_ms: float
    min_ms: float
    reps: int

    def __post_init__(self) -> None:
        # ordering sanity; the 1.5 slack tolerates mildly left-skewed samples
        if not (self.min_ms <= self.median_ms <= self.mean_ms * 1.5):
            raise ValueError(
                f"implausible stats: min={self.min_ms} median={self.median_ms} "
                f"mean={self.mean_ms}"
            )

    def csv_row(self) -> list:
        return [
            self.experiment,
            self.param,
            self.phase,
            "on" if self.enclave else "off",
            f"{self.median_ms:.3f}",
            f"{self.mean_ms:.3f}",
            f"{self.min_ms:.3f}",
            self.reps,
        ]


CSV_HEADER = [
    "experiment",
    "param",
    "phase",
    "enclave",
    "median_ms",
    "mean_ms",
    "min_ms",
    "reps",
]


def generate_policy(rules: int, attrs_per_rule: int) -> PolicyTree:
    """Synthetic sweep policy: an any-rule-suffices root over AND-rules,
    each rule requiring all of its own distinct attributes r{i}:a{j}."""
    gates = tuple(
        Gate(
            threshold=attrs_per_rule,
            children=tuple(
                Leaf(attr=f"r{i}:a{j}") for j in range(1, attrs_per_rule + 1)
            ),
        )
        for i in range(1, rules + 1)
    )
    return tree_from_root(Gate(threshold=1, children=gates))


def rule_attributes(rule: int, attrs_per_rule: int) -> frozenset[str]:
    """The attribute set that satisfies exactly one generated rule."""
    return frozenset(f"r{rule}:a{j}" for j in range(1, attrs_per_rule + 1))


def linear_r_squared(points: Iterable[tuple[float, float]]) -> float:
    """Coefficient of determination of the least-squares line through points."""
    pts = list(points)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least two points")
    mean_x = sum(x for x, _ in pts) / n
    mean_y = sum(y for _, y in pts) / n
    sxx = sum((x - mean_x) ** 2 for x, _ in pts)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in pts)
    if sxx == 0:
        raise ValueError("x values are all identical")
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in pts)
    ss_tot = sum((y - mean_y) ** 2 for _, y in pts)
    if ss_tot == 0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def default_config(experiment: str, **overrides) -> BenchConfig:
    """Preset sweep for the named experiment."""
    if experiment not in EXPERIMENTS:
        raise BenchConfigError(
            f"unknown experiment {experiment!r}, expected one of {EXPERIMENTS}"
        )
    params = dict(experiment=experiment, sweep=DEFAULT_SWEEPS[experiment])
    params.update(overrides)
    return BenchConfig(**params)


# --- measurement machinery -------------------------------------------------------


def _stats(samples: list[float], experiment: str, param: int, phase: str,
           enclave: bool) -> BenchRecord:
    return BenchRecord(
        experiment=experiment,
        param=param,
        phase=phase,
        enclave=enclave,
        median_ms=statistics.median(samples),
        mean_ms=statistics.fmean(samples),
        min_ms=min(samples),
        reps=len(samples),
    )


class _DictOcall:
    def __init__(self) -> None:
        self.store: dict[str, bytes] = {}

    def read_input(self, resource_id: str) -> bytes:
        return self.store[resource_id]

    def write_output(self, resource_id: str, data: bytes) -> None:
        self.store[resource_id] = data


class _EnclaveBench:
    """One enclave session reused across the whole run; the policy is
    re-provisioned through a fresh attestation round per sweep value."""

    def __init__(self, workdir: Path) -> None:
        secret_path = workdir / "device.secret"
        secret_path.write_bytes(os.urandom(enc.DEVICE_SECRET_BYTES))
        device_secret = enc.load_device_secret(secret_path)
        self.verifier = att.Verifier(
            enc.compute_measurement("cpsx-bench", 1),
            enc.quoting_verification_key(device_secret),
        )
        self.ocall = _DictOcall()
        self.host = enc.create_enclave(
            enc.EnclaveConfig(
                code_identity="cpsx-bench",
                config_version=1,
                device_secret_path=secret_path,
                verifier_verification_key=self.verifier.verification_key,
            ),
            self.ocall,
            record_transcript=False,
        )
        self.host.ecall(EcallRequest(Opcode.SETUP))

    def provision(self, policy_text: str) -> None:
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
        self.host.ecall(EcallRequest(Opcode.PROVISION_POLICY, (prov.to_bytes(),)))

    def time_round_trip(
        self, payload: bytes, attrs_field: bytes
    ) -> tuple[float, float]:
        """(encrypt_ms, decrypt_ms) for one payload through the ECALL
        boundary. The timed window covers the boundary round trip only;
        the harness checks the stored artifacts against the reported
        digests afterwards."""
        self.ocall.store.clear()
        self.ocall.store["f"] = payload
        t0 = time.perf_counter()
        enc_resp = self.host.ecall(EcallRequest(Opcode.ENCRYPT, (b"f",)))
        t1 = time.perf_counter()
        dec_resp = self.host.ecall(
            EcallRequest(Opcode.DECRYPT, (attrs_field, b"f.ct"))
        )
        t2 = time.perf_counter()
        _verify_digest(self.ocall.store["f.ct"], enc_resp.fields[1])
        _verify_digest(self.ocall.store["f.ct.pt"], dec_resp.fields[1])
        if self.ocall.store["f.ct.pt"] != payload:
            raise AssertionError("enclave round trip corrupted the payload")
        return (t1 - t0) * 1000.0, (t2 - t1) * 1000.0


def _time_direct_round_trip(
    pp: abe.PublicParams,
    mk: abe.MasterKey,
    policy: PolicyTree,
    attrs: frozenset[str],
    payload: bytes,
) -> tuple[float, float]:
    """(encrypt_ms, decrypt_ms) calling the scheme in-process, including
    container serialization both ways and per-request key generation."""
    t0 = time.perf_counter()
    blob = abe.encrypt_file(pp, policy, payload).to_bytes()
    t1 = time.perf_counter()
    container = abe.CiphertextContainer.from_bytes(blob)
    uk = abe.keygen(mk, pp, attrs)
    plaintext = abe.decrypt_file(pp, uk, container)
    t2 = time.perf_counter()
    if plaintext != payload:
        raise AssertionError("direct round trip corrupted the payload")
    return (t1 - t0) * 1000.0, (t2 - t1) * 1000.0


def _verify_digest(data: bytes, reported: bytes) -> None:
    """The store outside the boundary is untrusted; the caller checks the
    artifact it received against the digest the trusted side reported."""
    if hashlib.sha256(data).digest() != reported:
        raise AssertionError("stored artifact does not match reported digest")


@contextlib.contextmanager
def _gc_paused():
    """Collector pauses land on arbitrary repetitions and distort medians,
    so sampling starts from a collected heap and runs with automatic
    collection off."""
    was_enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


@contextlib.contextmanager
def _pinned_cpu():
    """Sampling on one core avoids migration noise; affinity is restored
    on exit. A no-op where the platform has no affinity control."""
    try:
        previous = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {min(previous)})
    except (AttributeError, OSError):
        yield
        return
    try:
        yield
    finally:
        os.sched_setaffinity(0, previous)


@contextlib.contextmanager
def _mirrored_scalars(prov):
    """Replace the provider's scalar draws with a reseedable stream.

    Yields a reseed callable; reseeding with the same value before each
    path's trip makes both paths consume identical draws, so their group
    arithmetic matches operation for operation. Both bench paths share
    the provider singleton, and the swap is restored on exit."""
    rng = random.Random()
    had_override = "random_scalar" in vars(prov)
    original = vars(prov).get("random_scalar")
    prov.random_scalar = lambda: rng.randrange(1, prov.order)
    try:
        yield rng.seed
    finally:
        if had_override:
            prov.random_scalar = original
        else:
            del prov.random_scalar


def _resolve_value(config: BenchConfig, value: int) -> tuple[int, int, int]:
    """(rules, attrs_per_rule, file_bytes) for one sweep value."""
    if config.experiment == "rules":
        return value, config.attrs_per_rule, config.file_bytes
    if config.experiment == "attributes":
        return config.rules, value, config.file_bytes
    return config.rules, config.attrs_per_rule, value * MB


def run_bench(
    config: BenchConfig,
    progress: Optional[Callable[[str], None]] = None,
) -> list[BenchRecord]:
    """Execute the sweep and return one record per (value, phase, path)
    cell; also writes CSV when the config names an output path."""

    def note(message: str) -> None:
        if progress is not None:
            progress(message)

    pp, mk = abe.setup(128)
    paths = {"on": (True,), "off": (False,), "both": (False, True)}[config.enclave]
    records: list[BenchRecord] = []

    with tempfile.TemporaryDirectory(prefix="cpsx-bench-") as workdir:
        rig = _EnclaveBench(Path(workdir)) if True in paths else None

        for value in config.sweep:
            rules, attrs_per_rule, file_bytes = _resolve_value(config, value)
            policy = generate_policy(rules, attrs_per_rule)
            # the last rule exercises the longest gate scan deterministically
            attrs = rule_attributes(rules, attrs_per_rule)
            attrs_field = json.dumps(sorted(attrs)).encode()
            if True in paths:
                rig.provision(policy.source_text)

            samples: dict[tuple[str, bool], list[float]] = {
                (phase, on): [] for on in paths for phase in ("encrypt", "decrypt")
            }

            def run_once(enclave_on: bool, payload: bytes) -> tuple[float, float]:
                if enclave_on:
                    return rig.time_round_trip(payload, attrs_field)
                return _time_direct_round_trip(pp, mk, policy, attrs, payload)

            # both paths run on the same payload each repetition, interleaved
            # trip by trip with the lead alternating, so drift, warm-cache
            # order effects, and sustained-load slowdowns land on both paths
            # evenly instead of on whichever happens to run later; the
            # pre-read puts the payload in the same cache state for whichever
            # path runs first
            mirror = (
                _mirrored_scalars(get_provider(pp.group_id))
                if config.mirror_randomness
                else contextlib.nullcontext()
            )
            seed_base = secrets.randbits(64)
            with _pinned_cpu(), _gc_paused(), mirror as reseed:
                for rep in range(config.repetitions + 1):
                    payload = os.urandom(file_bytes)
                    hashlib.sha256(payload)
                    trips: dict[bool, list[tuple[float, float]]] = {
                        on: [] for on in paths
                    }
                    for trip in range(config.trips):
                        flipped = (rep + trip) % 2 == 1
                        ordering = tuple(reversed(paths)) if flipped else paths
                        for enclave_on in ordering:
                            if reseed is not None:
                                # one seed per repetition: every trip of both
                                # paths repeats identical work, so each path's
                                # fastest trip is the floor of the same work
                                reseed(seed_base + rep)
                            trips[enclave_on].append(run_once(enclave_on, payload))
                    for enclave_on in paths:
                        pair = trips[enclave_on]
                        samples[("encrypt", enclave_on)].append(
                            min(e for e, _ in pair)
                        )
                        samples[("decrypt", enclave_on)].append(
                            min(d for _, d in pair)
                        )

            for enclave_on in paths:
                for phase in ("encrypt", "decrypt"):
                    # index 0 is the warm-up
                    records.append(
                        _stats(
                            samples[(phase, enclave_on)][1:],
                            config.experiment,
                            value,
                            phase,
                            enclave_on,
                        )
                    )
            note(f"{config.experiment} param={value} done")

            if config.include_kem_detail:
                records.extend(
                    _kem_detail(config, pp, mk, policy, attrs, value)
                )

    if config.output_path is not None:
        write_csv(config.output_path, records)
    return records


def _kem_detail(
    config: BenchConfig,
    pp: abe.PublicParams,
    mk: abe.MasterKey,
    policy: PolicyTree,
    attrs: frozenset[str],
    value: int,
) -> list[BenchRecord]:
    """Isolated key-encapsulation timings (direct path; no payload involved)."""
    uk = abe.keygen(mk, pp, attrs)
    encap_ms: list[float] = []
    decap_ms: list[float] = []
    with _pinned_cpu(), _gc_paused():
        for _ in range(config.repetitions + 1):
            trips = []
            for _ in range(config.trips):
                t0 = time.perf_counter()
                secret, kem_ct = abe.kem_encrypt(pp, policy)
                t1 = time.perf_counter()
                recovered = abe.kem_decrypt(pp, uk, kem_ct)
                t2 = time.perf_counter()
                if recovered != secret:
                    raise AssertionError("kem round trip disagreed")
                trips.append(((t1 - t0) * 1000.0, (t2 - t1) * 1000.0))
            encap_ms.append(min(e for e, _ in trips))
            decap_ms.append(min(d for _, d in trips))
    return [
        _stats(encap_ms[1:], config.experiment, value, "encrypt_kem", False),
        _stats(decap_ms[1:], config.experiment, value, "decrypt_kem", False),
    ]


def write_csv(path: Path, records: list[BenchRecord]) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow(record.csv_row())
