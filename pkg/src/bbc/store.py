"""Line-oriented text formats: chain stores and enrollment registries.

A chain store holds one block per line as compact JSON with a fixed key
order. Parsing is strict: a line is accepted only if re-encoding the parsed
block reproduces it byte for byte, so any edit that survives parsing still
changes a committed field.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

from .biometrics import (
    EnrollmentRecord,
    Registry,
    derive_biometric_id,
    quantized_bytes,
    template_from_quantized,
)
from .digest import DIGEST_SIZE, SerializationError, parse_hex
from .ledger import Block, BlockHeader

STORE_FORMAT = 1
REGISTRY_MAGIC = "bbc-registry"
REGISTRY_FORMAT = 1

_BLOCK_KEYS = (
    "format",
    "version",
    "height",
    "prev_hash",
    "merkle_root",
    "timestamp",
    "leader_id",
    "nonce",
    "candidates",
    "transactions",
    "leader_signature",
)


class StoreError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


# -- chain store -------------------------------------------------------------


def block_to_line(block: Block) -> str:
    h = block.header
    record = {
        "format": STORE_FORMAT,
        "version": h.version,
        "height": h.height,
        "prev_hash": h.prev_hash.hex(),
        "merkle_root": h.merkle_root.hex(),
        "timestamp": h.timestamp,
        "leader_id": h.leader_id.hex(),
        "nonce": h.nonce,
        "candidates": [c.hex() for c in block.candidates],
        "transactions": [tx.hex() for tx in block.transactions],
        "leader_signature": block.leader_signature.hex(),
    }
    return json.dumps(record, separators=(",", ":"), ensure_ascii=True)


def _pairs(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    keys = tuple(k for k, _ in pairs)
    if keys != _BLOCK_KEYS:
        raise SerializationError(f"unexpected keys {keys}")
    return dict(pairs)


def _int(value: Any, name: str) -> int:
    if type(value) is not int:
        raise SerializationError(f"{name} must be an integer")
    return value


def _hex_list(value: Any, name: str, size: int | None) -> tuple[bytes, ...]:
    if not isinstance(value, list):
        raise SerializationError(f"{name} must be a list")
    return tuple(parse_hex(v, size, name) for v in value)


def block_from_line(line: str) -> Block:
    rec = json.loads(line, object_pairs_hook=_pairs)
    if _int(rec["format"], "format") != STORE_FORMAT:
        raise SerializationError(f"unsupported store format {rec['format']}")
    header = BlockHeader(
        version=_int(rec["version"], "version"),
        prev_hash=parse_hex(rec["prev_hash"], DIGEST_SIZE, "prev_hash"),
        merkle_root=parse_hex(rec["merkle_root"], DIGEST_SIZE, "merkle_root"),
        timestamp=_int(rec["timestamp"], "timestamp"),
        height=_int(rec["height"], "height"),
        leader_id=parse_hex(rec["leader_id"], DIGEST_SIZE, "leader_id"),
        nonce=_int(rec["nonce"], "nonce"),
    )
    block = Block(
        header=header,
        transactions=_hex_list(rec["transactions"], "transactions", None),
        leader_signature=parse_hex(rec["leader_signature"], None, "leader_signature"),
        candidates=_hex_list(rec["candidates"], "candidates", DIGEST_SIZE),
    )
    header.hash  # noqa: B018 - surfaces out-of-range integers as SerializationError
    if block_to_line(block) != line:
        raise SerializationError("non-canonical record")
    return block


def dumps_chain(blocks: Iterable[Block]) -> str:
    return "".join(block_to_line(b) + "\n" for b in blocks)


def loads_chain(text: str) -> list[Block]:
    if not text:
        return []
    if not text.endswith("\n"):
        raise StoreError(text.count("\n") + 1, "missing final newline")
    blocks = []
    for i, line in enumerate(text[:-1].split("\n"), start=1):
        try:
            blocks.append(block_from_line(line))
        except (ValueError, KeyError, TypeError, SerializationError) as exc:
            raise StoreError(i, str(exc) or type(exc).__name__) from None
    return blocks


def read_chain(path: str | Path) -> list[Block]:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise StoreError(raw.count(b"\n", 0, exc.start) + 1, "non-ASCII byte") from None
    return loads_chain(text)


def write_chain(path: str | Path, blocks: Iterable[Block]) -> None:
    Path(path).write_text(dumps_chain(blocks), encoding="ascii", newline="\n")


# -- registry ----------------------------------------------------------------


def dumps_registry(registry: Registry, fleet_seed: int | None = None) -> str:
    head = [REGISTRY_MAGIC, str(REGISTRY_FORMAT), registry.authority_key.hex()]
    if fleet_seed is not None:
        head.append(str(fleet_seed))
    lines = [" ".join(head)]
    for rec in registry.records.values():
        lines.append(
            " ".join(
                (
                    rec.biometric_id.hex(),
                    rec.template.key_id.hex(),
                    quantized_bytes(rec.template).hex(),
                    rec.public_key.hex(),
                    rec.authority_signature.hex(),
                )
            )
        )
    return "\n".join(lines) + "\n"


def loads_registry(text: str) -> tuple[Registry, int | None]:
    """Parse a registry file; returns the registry and the fleet seed if recorded.

    Each record's BiometricID is re-derived from its quantized template and
    its authority binding re-verified.
    """
    lines = text.split("\n")
    if not lines or lines[-1] != "":
        raise StoreError(len(lines), "missing final newline")
    lines = lines[:-1]
    if not lines:
        raise StoreError(1, "empty registry")
    head = lines[0].split(" ")
    if len(head) not in (3, 4) or head[0] != REGISTRY_MAGIC or head[1] != str(REGISTRY_FORMAT):
        raise StoreError(1, "bad registry header")
    try:
        registry = Registry(parse_hex(head[2], 32, "authority"))
        seed = int(head[3]) if len(head) == 4 else None
    except ValueError as exc:
        raise StoreError(1, str(exc)) from None
    for i, line in enumerate(lines[1:], start=2):
        try:
            parts = line.split(" ")
            if len(parts) != 5:
                raise SerializationError("expected 5 fields")
            bid, key_id, qtemplate, public_key, auth_sig = parts
            template = template_from_quantized(
                parse_hex(qtemplate, None, "template"), parse_hex(key_id, DIGEST_SIZE, "key_id")
            )
            record = EnrollmentRecord(
                biometric_id=parse_hex(bid, DIGEST_SIZE, "biometric_id"),
                template=template,
                public_key=parse_hex(public_key, 32, "public_key"),
                authority_signature=parse_hex(auth_sig, 64, "authority_signature"),
            )
            if derive_biometric_id(template) != record.biometric_id:
                raise SerializationError("biometric_id does not match template")
            registry.add(record)
        except ValueError as exc:
            raise StoreError(i, str(exc)) from None
    return registry, seed


def read_registry(path: str | Path) -> tuple[Registry, int | None]:
    return loads_registry(Path(path).read_text(encoding="ascii"))


def write_registry(path: str | Path, registry: Registry, fleet_seed: int | None = None) -> None:
    Path(path).write_text(dumps_registry(registry, fleet_seed), encoding="ascii", newline="\n")
