"""Command-line front end: key setup, key issuance, file encryption and
decryption, the HTTP service, and the benchmark harness.

Encryption and decryption run through the enclave by default;
--no-enclave calls the scheme in-process using the exported public
parameters (and, for decryption, a previously issued key file).

Exit codes: 0 success, 2 access denied, 1 any other failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Optional

from . import abe
from . import attestation as att
from . import bench
from . import enclave as enc
from . import service
from .enclave import EcallRequest, Opcode
from .errors import CpsxError, SatisfactionFailure
from .policy import parse_policy

CODE_IDENTITY = "cpsx-service"
CONFIG_VERSION = 1


class _FileOcall:
    """Maps fixed resource ids to filesystem paths, nothing else."""

    def __init__(self) -> None:
        self.reads: dict[str, Path] = {}
        self.writes: dict[str, Path] = {}

    def read_input(self, resource_id: str) -> bytes:
        return self.reads[resource_id].read_bytes()

    def write_output(self, resource_id: str, data: bytes) -> None:
        self.writes[resource_id].write_bytes(data)


def _check_written(path: Path, reported_digest: bytes) -> None:
    """Output files pass through the untrusted write path; refuse to keep
    one that does not match the digest reported across the boundary."""
    if hashlib.sha256(path.read_bytes()).digest() != reported_digest:
        path.unlink(missing_ok=True)
        raise ValueError(f"{path} does not match the reported digest")


def _sealed_dir(data_dir: Path) -> Path:
    return data_dir / "sealed"


def _secret_path(data_dir: Path) -> Path:
    return data_dir / "device.secret"


def _open_enclave(
    data_dir: Path, ocall: _FileOcall
) -> tuple[enc.EnclaveHost, att.Verifier]:
    """Restore a previously set-up enclave from its sealed blobs."""
    pub = _sealed_dir(data_dir) / "pub.seal"
    master = _sealed_dir(data_dir) / "master.seal"
    if not (pub.exists() and master.exists()):
        raise FileNotFoundError(
            f"no sealed keys under {data_dir}; run `cpsx setup` first"
        )
    device_secret = enc.load_device_secret(_secret_path(data_dir))
    verifier = att.Verifier(
        enc.compute_measurement(CODE_IDENTITY, CONFIG_VERSION),
        enc.quoting_verification_key(device_secret),
    )
    host = enc.create_enclave(
        enc.EnclaveConfig(
            code_identity=CODE_IDENTITY,
            config_version=CONFIG_VERSION,
            device_secret_path=_secret_path(data_dir),
            verifier_verification_key=verifier.verification_key,
        ),
        ocall,
        record_transcript=False,
    )
    host.ecall(EcallRequest(Opcode.RESTORE, (pub.read_bytes(), master.read_bytes())))
    return host, verifier


def _provision(host: enc.EnclaveHost, verifier: att.Verifier, policy_text: str) -> None:
    challenge = verifier.issue_challenge()
    resp = host.ecall(EcallRequest(Opcode.GENERATE_QUOTE, (challenge.nonce,)))
    quote = att.Quote(
        measurement=resp.fields[0],
        report_data=resp.fields[1],
        signature=resp.fields[2],
    )
    prov = verifier.provision_policy(quote, policy_text)
    host.ecall(EcallRequest(Opcode.PROVISION_POLICY, (prov.to_bytes(),)))


def _parse_attrs(raw: str) -> list[str]:
    attrs = sorted({token.strip() for token in raw.split(",") if token.strip()})
    if not attrs:
        raise ValueError("attribute list is empty")
    return attrs


def _load_public(data_dir: Path) -> abe.PublicParams:
    path = data_dir / "pub.params"
    if not path.exists():
        raise FileNotFoundError(
            f"{path} not found; run `cpsx setup` first"
        )
    return abe.PublicParams.from_bytes(path.read_bytes())


# --- subcommands -----------------------------------------------------------------


def _cmd_setup(args: argparse.Namespace) -> int:
    data_dir: Path = args.data_dir
    sealed = _sealed_dir(data_dir)
    if (sealed / "master.seal").exists():
        print(
            f"error: {sealed} already holds keys; remove it to re-run setup",
            file=sys.stderr,
        )
        return 1
    sealed.mkdir(parents=True, exist_ok=True)
    secret = _secret_path(data_dir)
    if not secret.exists():
        secret.write_bytes(os.urandom(enc.DEVICE_SECRET_BYTES))
        secret.chmod(0o600)
    host = enc.create_enclave(
        enc.EnclaveConfig(
            code_identity=CODE_IDENTITY,
            config_version=CONFIG_VERSION,
            device_secret_path=secret,
        ),
        _FileOcall(),
        record_transcript=False,
    )
    resp = host.ecall(EcallRequest(Opcode.SETUP))
    (sealed / "pub.seal").write_bytes(resp.fields[0])
    (sealed / "master.seal").write_bytes(resp.fields[1])
    public = host.ecall(EcallRequest(Opcode.EXPORT_PUBLIC))
    (data_dir / "pub.params").write_bytes(public.fields[0])
    print(f"sealed keys written under {sealed}")
    return 0


def _cmd_keygen(args: argparse.Namespace) -> int:
    attrs = _parse_attrs(args.attrs)
    host, _ = _open_enclave(args.data_dir, _FileOcall())
    resp = host.ecall(
        EcallRequest(Opcode.KEYGEN, (json.dumps(sorted(attrs)).encode(),))
    )
    args.out.write_bytes(resp.fields[0])
    print(f"user key for {len(attrs)} attribute(s) written to {args.out}")
    return 0


def _cmd_enc(args: argparse.Namespace) -> int:
    in_path: Path = args.input
    out_path: Path = args.out or in_path.with_name(in_path.name + ".cpsx")
    if args.no_enclave:
        pp = _load_public(args.data_dir)
        tree = parse_policy(args.policy)
        container = abe.encrypt_file(pp, tree, in_path.read_bytes())
        out_path.write_bytes(container.to_bytes())
    else:
        ocall = _FileOcall()
        ocall.reads["f"] = in_path
        ocall.writes["f.ct"] = out_path
        host, verifier = _open_enclave(args.data_dir, ocall)
        _provision(host, verifier, args.policy)
        resp = host.ecall(EcallRequest(Opcode.ENCRYPT, (b"f",)))
        _check_written(out_path, resp.fields[1])
    print(f"encrypted {in_path} -> {out_path}")
    return 0


def _cmd_dec(args: argparse.Namespace) -> int:
    in_path: Path = args.input
    if args.out is not None:
        out_path = args.out
    elif in_path.suffix == ".cpsx":
        out_path = in_path.with_suffix("")
    else:
        out_path = in_path.with_name(in_path.name + ".out")
    if args.no_enclave:
        if args.key is None:
            raise ValueError(
                "--no-enclave decryption needs --key from a prior `cpsx keygen`"
            )
        pp = _load_public(args.data_dir)
        uk = abe.UserKey.from_bytes(args.key.read_bytes())
        container = abe.CiphertextContainer.from_bytes(in_path.read_bytes())
        out_path.write_bytes(abe.decrypt_file(pp, uk, container))
    else:
        if args.attrs is None:
            raise ValueError("enclave decryption needs --attrs")
        attrs = _parse_attrs(args.attrs)
        ocall = _FileOcall()
        ocall.reads["f"] = in_path
        ocall.writes["f.pt"] = out_path
        host, _ = _open_enclave(args.data_dir, ocall)
        resp = host.ecall(
            EcallRequest(
                Opcode.DECRYPT, (json.dumps(sorted(attrs)).encode(), b"f")
            )
        )
        _check_written(out_path, resp.fields[1])
    print(f"decrypted {in_path} -> {out_path}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    policy_text: Optional[str] = args.policy
    if args.policy_file is not None:
        policy_text = args.policy_file.read_text().strip()
    config = service.ServiceConfig(
        storage_dir=args.data_dir,
        device_secret_path=_secret_path(args.data_dir),
        policy_text=policy_text,
        code_identity=CODE_IDENTITY,
        config_version=CONFIG_VERSION,
        max_upload_bytes=args.max_upload_bytes,
    )
    service.run(config, host=args.host, port=args.port)
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    overrides: dict = {
        "repetitions": args.reps,
        "trips": args.trips,
        "enclave": args.enclave,
        "include_kem_detail": args.kem_detail,
        "output_path": args.csv,
    }
    if args.sweep is not None:
        overrides["sweep"] = tuple(int(v) for v in args.sweep.split(","))
    if args.attrs_per_rule is not None:
        overrides["attrs_per_rule"] = args.attrs_per_rule
    if args.rules is not None:
        overrides["rules"] = args.rules
    if args.file_kb is not None:
        overrides["file_bytes"] = args.file_kb * bench.KB
    config = bench.default_config(args.experiment, **overrides)
    records = bench.run_bench(
        config, progress=lambda message: print(message, file=sys.stderr)
    )
    if args.csv is None:
        import csv as _csv

        writer = _csv.writer(sys.stdout)
        writer.writerow(bench.CSV_HEADER)
        for record in records:
            writer.writerow(record.csv_row())
    else:
        print(f"{len(records)} records written to {args.csv}", file=sys.stderr)
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpsx",
        description="attribute-based file encryption inside a simulated enclave",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_dir(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--data-dir",
            type=Path,
            default=Path("data"),
            help="state directory (default: ./data)",
        )

    p_setup = sub.add_parser("setup", help="generate keys inside the enclave")
    add_data_dir(p_setup)
    p_setup.set_defaults(func=_cmd_setup)

    p_keygen = sub.add_parser("keygen", help="issue a user key for attributes")
    add_data_dir(p_keygen)
    p_keygen.add_argument("--attrs", required=True, help="comma-separated attributes")
    p_keygen.add_argument("--out", type=Path, default=Path("user.key"))
    p_keygen.set_defaults(func=_cmd_keygen)

    p_enc = sub.add_parser("enc", help="encrypt a file under a policy")
    add_data_dir(p_enc)
    p_enc.add_argument("--policy", required=True, help="postfix policy text")
    p_enc.add_argument("--out", type=Path, default=None)
    p_enc.add_argument("--no-enclave", action="store_true")
    p_enc.add_argument("input", type=Path)
    p_enc.set_defaults(func=_cmd_enc)

    p_dec = sub.add_parser("dec", help="decrypt a container")
    add_data_dir(p_dec)
    p_dec.add_argument("--attrs", help="comma-separated attributes (enclave path)")
    p_dec.add_argument(
        "--key", type=Path, help="user key file (--no-enclave path)"
    )
    p_dec.add_argument("--out", type=Path, default=None)
    p_dec.add_argument("--no-enclave", action="store_true")
    p_dec.add_argument("input", type=Path)
    p_dec.set_defaults(func=_cmd_dec)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    add_data_dir(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--policy", help="policy text to provision at startup")
    p_serve.add_argument("--policy-file", type=Path)
    p_serve.add_argument(
        "--max-upload-bytes", type=int, default=service.DEFAULT_MAX_UPLOAD_BYTES
    )
    p_serve.set_defaults(func=_cmd_serve)

    p_bench = sub.add_parser("bench", help="run a timing sweep")
    p_bench.add_argument(
        "--experiment", required=True, choices=bench.EXPERIMENTS
    )
    p_bench.add_argument("--csv", type=Path, default=None)
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument(
        "--trips",
        type=int,
        default=1,
        help="round trips per repetition; each repetition keeps the fastest",
    )
    p_bench.add_argument("--enclave", choices=bench.ENCLAVE_MODES, default="both")
    p_bench.add_argument("--sweep", help="comma-separated sweep values")
    p_bench.add_argument("--attrs-per-rule", type=int, default=None)
    p_bench.add_argument("--rules", type=int, default=None)
    p_bench.add_argument("--file-kb", type=int, default=None)
    p_bench.add_argument("--kem-detail", action="store_true")
    p_bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 means access denied here
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except SatisfactionFailure:
        print("access denied", file=sys.stderr)
        return 2
    except (CpsxError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
