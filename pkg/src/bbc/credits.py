"""IV-BC credits: one integer per BiometricID, derived only by replaying the chain.

Every enrollee starts at 1 and the leader of each committed block earns +1.
There is no decay and no slashing, so credits never decrease.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:
    from .biometrics import Registry
    from .ledger import Block

INITIAL_CREDIT = 1
LEADER_REWARD = 1


class CreditError(ValueError):
    pass


class EventKind(enum.IntEnum):
    ENROLL = 0
    LEADER_REWARD = 1

    @property
    def label(self) -> str:
        return "Enroll" if self is EventKind.ENROLL else "LeaderReward"


@dataclass(frozen=True, order=True)
class CreditEvent:
    height: int
    kind: EventKind
    subject: bytes
    delta: int

    def line(self) -> str:
        return f"{self.height} {self.kind.label} {self.subject.hex()} {self.delta:+d}"


@dataclass(frozen=True)
class CreditLedger:
    """Immutable credit snapshot. Never mutate ``credits``; use :func:`apply_block`."""

    credits: Mapping[bytes, int]
    as_of_height: int

    def __getitem__(self, biometric_id: bytes) -> int:
        return self.credits[biometric_id]

    def __contains__(self, biometric_id: object) -> bool:
        return biometric_id in self.credits

    def get(self, biometric_id: bytes, default: int | None = None) -> int | None:
        return self.credits.get(biometric_id, default)

    @property
    def total(self) -> int:
        return sum(self.credits.values())

    def table(self) -> list[tuple[str, int]]:
        return sorted((k.hex(), v) for k, v in self.credits.items())


def initial_ledger(registry: Registry) -> CreditLedger:
    if len(registry) == 0:
        raise CreditError("cannot build a ledger from an empty registry")
    return CreditLedger({bid: INITIAL_CREDIT for bid in registry.ids()}, -1)


def apply_block(ledger: CreditLedger, block: Block) -> CreditLedger:
    height = block.header.height
    if height != ledger.as_of_height + 1:
        raise CreditError(f"ledger at height {ledger.as_of_height} cannot apply block {height}")
    if height == 0:
        return CreditLedger(ledger.credits, 0)
    winner = block.header.leader_id
    if winner not in ledger.credits:
        raise CreditError(f"unknown leader {winner.hex()}")
    credits = dict(ledger.credits)
    credits[winner] += LEADER_REWARD
    return CreditLedger(credits, height)


def leader(candidates: Iterable[bytes], ledger: CreditLedger | Mapping[bytes, int]) -> bytes:
    """Highest credit wins; ties go to the bytewise-smallest BiometricID."""
    pool = set(candidates)
    if not pool:
        raise CreditError("leader() needs at least one candidate")
    return min(pool, key=lambda c: (-ledger[c], c))


def fold_events(events: Iterable[CreditEvent]) -> dict[bytes, int]:
    table: dict[bytes, int] = {}
    for ev in events:
        table[ev.subject] = table.get(ev.subject, 0) + ev.delta
    return table


def audit(blocks: list[Block], registry: Registry) -> tuple[CreditLedger, list[CreditEvent]]:
    """Validate ``blocks`` and return the replayed ledger with its ordered event log.

    Raises :class:`bbc.ledger.ChainValidationError` at the first bad height.
    """
    from .ledger import validate_chain

    state = validate_chain(blocks, registry)
    events = [CreditEvent(-1, EventKind.ENROLL, bid, INITIAL_CREDIT) for bid in registry.ids()]
    events += [
        CreditEvent(b.header.height, EventKind.LEADER_REWARD, b.header.leader_id, LEADER_REWARD)
        for b in blocks[1:]
    ]
    events.sort()
    return state.ledger, events
