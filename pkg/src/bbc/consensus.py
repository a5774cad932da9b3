"""Proof-of-Driving rounds.

A vehicle is "driving" when it can show signed evidence that its own
messages were delivered within the last ``window`` rounds. Qualified
drivers stand for election, the credit-maximal one proposes the block and
every enrolled validator votes on it. A block commits once Accept votes
from strictly more than half of the online validators arrive before the
round times out.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, NamedTuple

from .biometrics import Registry, SigningKey, verify
from .credits import CreditLedger, leader
from .digest import uint_be
from .ledger import (
    PROTOCOL_VERSION,
    Block,
    BlockHeader,
    ChainState,
    round_timestamp,
    validate_block,
)
from .merkle import merkle_root
from .messages import Kind, MsgType, V2XMessage, validate_message

log = logging.getLogger(__name__)

ACTIVITY_WINDOW = 5

_PROOF_TAG = b"BBC/pod/v1"
_VOTE_TAG = b"BBC/vote/v1"


class Decision(enum.Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"


class Phase(enum.Enum):
    COLLECTING = "Collecting"
    PROPOSED = "Proposed"
    COMMITTED = "Committed"
    SKIPPED = "Skipped"


class DeliveryRecord(NamedTuple):
    sender_id: bytes
    round: int


# -- driving proofs ----------------------------------------------------------


@dataclass(frozen=True)
class DrivingProof:
    subject: bytes
    round: int
    activity_digests: tuple[bytes, ...]
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return (
            _PROOF_TAG
            + self.subject
            + uint_be(self.round, 8, "round")
            + uint_be(len(self.activity_digests), 4, "count")
            + b"".join(self.activity_digests)
        )


def in_window(msg_round: int, round_no: int, window: int) -> bool:
    return round_no - window < msg_round <= round_no


def make_driving_proof(
    subject: bytes,
    key: SigningKey,
    round_no: int,
    sent: Iterable[tuple[int, bytes]],
    delivered: Mapping[bytes, DeliveryRecord],
    window: int = ACTIVITY_WINDOW,
) -> DrivingProof | None:
    """Sign the digests of ``subject``'s own messages delivered in the window.

    ``sent`` is the node's outbox log of ``(round, digest)``. Returns ``None``
    for an idle node.
    """
    digests = sorted(
        {
            d
            for r, d in sent
            if in_window(r, round_no, window)
            and d in delivered
            and delivered[d].sender_id == subject
        }
    )
    if not digests:
        return None
    proof = DrivingProof(subject, round_no, tuple(digests))
    return replace(proof, signature=key.sign(proof.signing_bytes()))


def check_proof(
    proof: DrivingProof,
    round_no: int,
    delivered: Mapping[bytes, DeliveryRecord],
    registry: Registry,
    window: int = ACTIVITY_WINDOW,
) -> str | None:
    """Reason the proof does not qualify, or ``None``."""
    public_key = registry.public_key(proof.subject)
    if public_key is None:
        return "unknown subject"
    if not verify(public_key, proof.signing_bytes(), proof.signature):
        return "bad signature"
    if proof.round != round_no:
        return "wrong round"
    if not proof.activity_digests:
        return "no activity"
    for d in proof.activity_digests:
        rec = delivered.get(d)
        if rec is None or rec.sender_id != proof.subject or not in_window(rec.round, round_no, window):
            return "undelivered activity"
    return None


def qualify(
    proofs: Iterable[DrivingProof],
    round_no: int,
    delivered: Mapping[bytes, DeliveryRecord],
    registry: Registry,
    window: int = ACTIVITY_WINDOW,
) -> frozenset[bytes]:
    candidates = set()
    for proof in proofs:
        reason = check_proof(proof, round_no, delivered, registry, window)
        if reason is None:
            candidates.add(proof.subject)
        else:
            log.debug("round %d: dropped proof from %s: %s", round_no, proof.subject.hex()[:12], reason)
    return frozenset(candidates)


def elect(candidates: Iterable[bytes], ledger: CreditLedger) -> bytes | None:
    """Credit-maximal candidate, or ``None`` when nobody qualified (round is skipped)."""
    pool = set(candidates)
    return leader(pool, ledger) if pool else None


# -- proposal ----------------------------------------------------------------


def heartbeat_message(
    sender_id: bytes, key: SigningKey, seq: int, credit: int, round_no: int
) -> V2XMessage:
    return V2XMessage(
        Kind.V2I,
        MsgType.HEARTBEAT,
        b"status=ok",
        sender_id,
        credit,
        seq,
        round_no,
    ).signed(key)


def legal_mempool(
    mempool: Iterable[V2XMessage], state: ChainState, registry: Registry, round_no: int
) -> list[V2XMessage]:
    """Messages legal against the committed state, one per (sender, seq), by ascending digest."""
    chosen: dict[tuple[bytes, int], V2XMessage] = {}
    for msg in sorted(mempool, key=lambda m: m.digest):
        if validate_message(msg, state.ledger.credits, registry, round_no, state.last_seq):
            continue
        chosen.setdefault((msg.sender_id, msg.seq), msg)
    return sorted(chosen.values(), key=lambda m: m.digest)


def propose(
    leader_id: bytes,
    key: SigningKey,
    mempool: Iterable[V2XMessage],
    state: ChainState,
    registry: Registry,
    round_no: int,
    candidates: Iterable[bytes],
    heartbeat_seq: int,
) -> tuple[Block, bool]:
    """Build and sign the round's block from the leader's mempool.

    Returns ``(block, used_heartbeat)``; with nothing legal to include the
    leader commits a single self-signed heartbeat at ``heartbeat_seq``.
    """
    txs = legal_mempool(mempool, state, registry, round_no)
    used_heartbeat = not txs
    if used_heartbeat:
        txs = [heartbeat_message(leader_id, key, heartbeat_seq, state.ledger[leader_id], round_no)]
    raw = tuple(m.to_bytes() for m in txs)
    header = BlockHeader(
        version=PROTOCOL_VERSION,
        prev_hash=state.head.hash,
        merkle_root=merkle_root([m.digest for m in txs]),
        timestamp=round_timestamp(round_no),
        height=state.height + 1,
        leader_id=leader_id,
        nonce=round_no,
    )
    block = Block(header, raw, key.sign(header.hash), tuple(sorted(set(candidates))))
    return block, used_heartbeat


# -- voting ------------------------------------------------------------------


@dataclass(frozen=True)
class Vote:
    voter: bytes
    round: int
    block_hash: bytes
    decision: Decision
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        flag = b"\x01" if self.decision is Decision.ACCEPT else b"\x00"
        return _VOTE_TAG + self.voter + uint_be(self.round, 8, "round") + self.block_hash + flag


def vote(
    voter: bytes,
    key: SigningKey,
    proposal: Block,
    state: ChainState,
    registry: Registry,
    candidates: Iterable[bytes] | None = None,
) -> Vote:
    """Accept iff the proposal validates against the voter's own committed state."""
    code = validate_block(proposal, state.head, state.ledger, registry, state.last_seq, candidates)
    decision = Decision.ACCEPT if code is None else Decision.REJECT
    if code is not None:
        log.debug("voter %s rejects round %d: %s", voter.hex()[:12], proposal.header.nonce, code.value)
    ballot = Vote(voter, proposal.header.nonce, proposal.hash, decision)
    return replace(ballot, signature=key.sign(ballot.signing_bytes()))


def commits(accepts: int, online: int) -> bool:
    return 2 * accepts > online


@dataclass
class RoundState:
    round: int
    candidates: frozenset[bytes] = frozenset()
    leader: bytes | None = None
    proposal: Block | None = None
    votes: dict[bytes, Vote] = field(default_factory=dict)
    phase: Phase = Phase.COLLECTING
    ignored_votes: int = 0

    def set_proposal(self, block: Block) -> None:
        if self.phase is not Phase.COLLECTING:
            raise ValueError(f"cannot propose in phase {self.phase.value}")
        if self.leader is None or block.header.leader_id != self.leader:
            raise ValueError("proposal is not from the elected leader")
        self.proposal = block
        self.phase = Phase.PROPOSED

    def add_vote(self, ballot: Vote, registry: Registry) -> bool:
        """Record a ballot; unsigned, foreign, stale or duplicate ballots are ignored."""
        public_key = registry.public_key(ballot.voter)
        ok = (
            public_key is not None
            and ballot.round == self.round
            and ballot.voter not in self.votes
            and verify(public_key, ballot.signing_bytes(), ballot.signature)
        )
        if not ok:
            self.ignored_votes += 1
            log.debug("round %d: ignored vote from %s", self.round, ballot.voter.hex()[:12])
            return False
        self.votes[ballot.voter] = ballot
        return True

    def decisions(self) -> dict[bytes, Decision]:
        """Per-voter decision on the current proposal; a ballot for any other block counts as Reject."""
        target = None if self.proposal is None else self.proposal.hash
        return {
            voter: ballot.decision if ballot.block_hash == target else Decision.REJECT
            for voter, ballot in self.votes.items()
        }

    @property
    def accepts(self) -> int:
        return sum(d is Decision.ACCEPT for d in self.decisions().values())

    @property
    def rejects(self) -> int:
        return len(self.votes) - self.accepts


def try_commit(state: RoundState, online: int) -> RoundState:
    """Resolve the round at timeout: Committed on a strict majority of ``online``, else Skipped."""
    if state.phase in (Phase.COMMITTED, Phase.SKIPPED):
        return state
    if state.phase is Phase.PROPOSED and commits(state.accepts, online):
        return replace(state, phase=Phase.COMMITTED)
    return replace(state, phase=Phase.SKIPPED)
