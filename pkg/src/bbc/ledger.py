"""Blocks, chains, block validation and fork choice.

Header layout (124 bytes, big-endian)::

    version(4) | prev_hash(32) | merkle_root(32) | timestamp(8) |
    height(8)  | leader_id(32) | nonce(8)

The nonce carries the consensus round; there is no proof-of-work target.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .biometrics import Registry, verify
from .credits import CreditLedger, apply_block, initial_ledger, leader
from .digest import (
    ZERO_DIGEST,
    SerializationError,
    check_digest,
    double_sha256,
    uint_be,
)
from .merkle import merkle_root
from .messages import FRESHNESS_WINDOW, V2XMessage, parse_message, validate_message

PROTOCOL_VERSION = 1
HEADER_SIZE = 124
GENESIS_TIMESTAMP = 1_577_836_800  # 2020-01-01T00:00:00Z; logical rounds add one second each


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    height: int
    leader_id: bytes
    nonce: int

    @functools.cached_property
    def hash(self) -> bytes:
        return block_hash(self)


def canonical_header_bytes(h: BlockHeader) -> bytes:
    out = b"".join(
        (
            uint_be(h.version, 4, "version"),
            check_digest(h.prev_hash, "prev_hash"),
            check_digest(h.merkle_root, "merkle_root"),
            uint_be(h.timestamp, 8, "timestamp"),
            uint_be(h.height, 8, "height"),
            check_digest(h.leader_id, "leader_id"),
            uint_be(h.nonce, 8, "nonce"),
        )
    )
    assert len(out) == HEADER_SIZE
    return out


def parse_header(raw: bytes) -> BlockHeader:
    if len(raw) != HEADER_SIZE:
        raise SerializationError(f"header must be {HEADER_SIZE} bytes, got {len(raw)}")
    return BlockHeader(
        version=int.from_bytes(raw[0:4], "big"),
        prev_hash=raw[4:36],
        merkle_root=raw[36:68],
        timestamp=int.from_bytes(raw[68:76], "big"),
        height=int.from_bytes(raw[76:84], "big"),
        leader_id=raw[84:116],
        nonce=int.from_bytes(raw[116:124], "big"),
    )


def block_hash(h: BlockHeader) -> bytes:
    return double_sha256(canonical_header_bytes(h))


@dataclass(frozen=True)
class Block:
    """A header, its transactions (canonical message bytes) and the leader's signature.

    ``candidates`` records the qualified PoD candidate set the leader was
    elected from, so the election can be re-checked offline.
    """

    header: BlockHeader
    transactions: tuple[bytes, ...] = ()
    leader_signature: bytes = b""
    candidates: tuple[bytes, ...] = ()

    @property
    def hash(self) -> bytes:
        return self.header.hash

    @property
    def height(self) -> int:
        return self.header.height

    def tx_digests(self) -> list[bytes]:
        return [double_sha256(tx) for tx in self.transactions]

    def messages(self) -> list[V2XMessage]:
        """Parsed transactions; raises SerializationError on malformed bytes."""
        return [parse_message(bytes(tx)) for tx in self.transactions]


def genesis_block() -> Block:
    return Block(
        BlockHeader(
            version=PROTOCOL_VERSION,
            prev_hash=ZERO_DIGEST,
            merkle_root=ZERO_DIGEST,
            timestamp=GENESIS_TIMESTAMP,
            height=0,
            leader_id=ZERO_DIGEST,
            nonce=0,
        )
    )


def round_timestamp(round_no: int) -> int:
    return GENESIS_TIMESTAMP + round_no


class BlockRejection(enum.Enum):
    BAD_GENESIS = "BadGenesis"
    BAD_HEIGHT = "BadHeight"
    BAD_PREV_HASH = "BadPrevHash"
    BAD_ROUND = "BadRound"
    BAD_TIMESTAMP = "BadTimestamp"
    BAD_ROOT = "BadRoot"
    BAD_SIGNATURE = "BadSignature"
    WRONG_LEADER = "WrongLeader"
    ILLEGAL_TX = "IllegalTx"


class ChainValidationError(ValueError):
    def __init__(self, height: int, code: BlockRejection, detail: str = ""):
        self.height = height
        self.code = code
        self.detail = detail
        super().__init__(f"height {height}: {code.value}{': ' + detail if detail else ''}")


def check_genesis(block: Block) -> BlockRejection | None:
    if block != genesis_block():
        return BlockRejection.BAD_GENESIS
    return None


def validate_block(
    block: Block,
    parent: Block,
    ledger: CreditLedger,
    registry: Registry,
    last_seq: Mapping[bytes, int] | None = None,
    candidates: Iterable[bytes] | None = None,
    freshness: int = FRESHNESS_WINDOW,
) -> BlockRejection | None:
    """Check ``block`` against its parent and the parent-state ledger.

    ``last_seq`` holds the highest committed sequence number per sender.
    ``candidates``, when given, is the validator's own qualified set for the
    round; the block's recorded set must equal it. Returns ``None`` when
    valid, otherwise the first failing check.
    """
    h = block.header
    p = parent.header
    if h.version != PROTOCOL_VERSION or h.height != p.height + 1:
        return BlockRejection.BAD_HEIGHT
    if h.prev_hash != parent.hash:
        return BlockRejection.BAD_PREV_HASH
    if h.nonce <= p.nonce:
        return BlockRejection.BAD_ROUND
    if h.timestamp < p.timestamp:
        return BlockRejection.BAD_TIMESTAMP

    if not block.transactions:
        return BlockRejection.BAD_ROOT
    digests = block.tx_digests()
    if merkle_root(digests) != h.merkle_root:
        return BlockRejection.BAD_ROOT

    leader_key = registry.public_key(h.leader_id)
    if leader_key is None:
        return BlockRejection.WRONG_LEADER
    if not verify(leader_key, block.hash, block.leader_signature):
        return BlockRejection.BAD_SIGNATURE

    recorded = block.candidates
    if list(recorded) != sorted(set(recorded)) or any(c not in registry for c in recorded):
        return BlockRejection.WRONG_LEADER
    if candidates is not None and set(candidates) != set(recorded):
        return BlockRejection.WRONG_LEADER
    if not recorded or leader(recorded, ledger) != h.leader_id:
        return BlockRejection.WRONG_LEADER

    if any(a >= b for a, b in zip(digests, digests[1:])):
        return BlockRejection.ILLEGAL_TX
    committed = last_seq or {}
    in_block: set[tuple[bytes, int]] = set()
    for tx in block.transactions:
        try:
            msg = parse_message(tx)
        except SerializationError:
            return BlockRejection.ILLEGAL_TX
        key = (msg.sender_id, msg.seq)
        if key in in_block:
            return BlockRejection.ILLEGAL_TX
        in_block.add(key)
        if validate_message(msg, ledger.credits, registry, h.nonce, committed, freshness):
            return BlockRejection.ILLEGAL_TX
    return None


@dataclass
class ChainState:
    """A validated chain plus the state replayed from it."""

    blocks: list[Block]
    ledger: CreditLedger
    last_seq: dict[bytes, int] = field(default_factory=dict)

    @classmethod
    def genesis(cls, registry: Registry) -> "ChainState":
        g = genesis_block()
        return cls([g], apply_block(initial_ledger(registry), g))

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.head.height

    def append(self, block: Block) -> None:
        """Append an already validated block and update replayed state in place."""
        self.ledger = apply_block(self.ledger, block)
        for msg in block.messages():
            if msg.seq > self.last_seq.get(msg.sender_id, -1):
                self.last_seq[msg.sender_id] = msg.seq
        self.blocks.append(block)

    def copy(self) -> "ChainState":
        return ChainState(list(self.blocks), self.ledger, dict(self.last_seq))


def validate_chain(blocks: Sequence[Block], registry: Registry) -> ChainState:
    """Full structural and cryptographic validation from genesis."""
    if not blocks:
        raise ChainValidationError(0, BlockRejection.BAD_GENESIS, "no genesis")
    if check_genesis(blocks[0]):
        raise ChainValidationError(0, BlockRejection.BAD_GENESIS)
    state = ChainState.genesis(registry)
    for block in blocks[1:]:
        code = validate_block(block, state.head, state.ledger, registry, state.last_seq)
        if code is not None:
            raise ChainValidationError(state.height + 1, code)
        state.append(block)
    return state


def credit_weight(blocks: Sequence[Block], registry: Registry) -> int:
    """Sum over blocks of the leader's credit at election time."""
    ledger = apply_block(initial_ledger(registry), blocks[0])
    total = 0
    for block in blocks[1:]:
        total += ledger[block.header.leader_id]
        ledger = apply_block(ledger, block)
    return total


def select_head(candidates: Sequence[Sequence[Block]], registry: Registry) -> Sequence[Block]:
    """Fork choice: max height, then max credit weight, then smallest head digest."""
    if not candidates:
        raise ValueError("select_head needs at least one candidate chain")
    return min(
        candidates,
        key=lambda c: (-c[-1].height, -credit_weight(c, registry), c[-1].hash),
    )
