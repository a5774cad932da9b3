"""Credit-tagged, biometric-signed V2V/V2I messages and their legality rules."""

from __future__ import annotations

import enum
import functools
import struct
from dataclasses import dataclass, replace
from typing import Mapping

from .biometrics import Registry, SigningKey, verify
from .digest import DIGEST_SIZE, SerializationError, double_sha256, int_be

MAX_PAYLOAD = 1024
FRESHNESS_WINDOW = 2

_LEN = struct.Struct(">I")


class Kind(enum.Enum):
    V2V = "V2V"
    V2I = "V2I"


class MsgType(enum.Enum):
    SAFETY_ALERT = "SafetyAlert"
    TRAFFIC_INFO = "TrafficInfo"
    SERVICE_REQUEST = "ServiceRequest"
    HEARTBEAT = "Heartbeat"


class Rejection(enum.Enum):
    """Why a message is illegal. Checks run in this order."""

    MALFORMED = "Malformed"
    UNKNOWN_SENDER = "UnknownSender"
    BAD_SIGNATURE = "BadSignature"
    REPLAY = "Replay"
    STALE = "Stale"
    CLAIM_MISMATCH = "ClaimMismatch"


@dataclass(frozen=True)
class V2XMessage:
    kind: Kind
    msg_type: MsgType
    payload: bytes
    sender_id: bytes
    credit_claim: int
    seq: int
    timestamp: int
    signature: bytes = b""

    @functools.cached_property
    def _signing_bytes(self) -> bytes:
        fields = (
            self.kind.value.encode(),
            self.msg_type.value.encode(),
            self.payload,
            self.sender_id,
            int_be(self.credit_claim, 8, "credit_claim"),
            int_be(self.seq, 8, "seq"),
            int_be(self.timestamp, 8, "timestamp"),
        )
        return b"".join(_LEN.pack(len(f)) + f for f in fields)

    @functools.cached_property
    def _wire(self) -> bytes:
        return self.signing_bytes() + _LEN.pack(len(self.signature)) + self.signature

    def signing_bytes(self) -> bytes:
        return self._signing_bytes

    def to_bytes(self) -> bytes:
        """Wire/transaction form: the signed fields followed by the signature."""
        return self._wire

    @functools.cached_property
    def digest(self) -> bytes:
        return double_sha256(self._wire)

    def signed(self, key: SigningKey) -> "V2XMessage":
        return replace(self, signature=key.sign(self.signing_bytes()))


def _take(raw: bytes, pos: int) -> tuple[bytes, int]:
    if pos + 4 > len(raw):
        raise SerializationError("truncated length prefix")
    (n,) = _LEN.unpack_from(raw, pos)
    pos += 4
    if pos + n > len(raw):
        raise SerializationError("truncated field")
    return raw[pos : pos + n], pos + n


def _int_field(raw: bytes, name: str) -> int:
    if len(raw) != 8:
        raise SerializationError(f"{name} must be 8 bytes")
    return int.from_bytes(raw, "big", signed=True)


@functools.lru_cache(maxsize=1 << 16)
def parse_message(raw: bytes) -> V2XMessage:
    """Strict inverse of :meth:`V2XMessage.to_bytes`."""
    fields = []
    pos = 0
    for _ in range(8):
        value, pos = _take(raw, pos)
        fields.append(value)
    if pos != len(raw):
        raise SerializationError("trailing bytes after message")
    kind, msg_type, payload, sender, claim, seq, ts, sig = fields
    try:
        kind_e = Kind(kind.decode("ascii"))
        type_e = MsgType(msg_type.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise SerializationError("unknown message kind or type") from None
    if len(sender) != DIGEST_SIZE:
        raise SerializationError("sender_id must be 32 bytes")
    msg = V2XMessage(
        kind_e,
        type_e,
        payload,
        sender,
        _int_field(claim, "credit_claim"),
        _int_field(seq, "seq"),
        _int_field(ts, "timestamp"),
        sig,
    )
    if msg.to_bytes() != raw:
        raise SerializationError("non-canonical message encoding")
    return msg


def validate_message(
    msg: V2XMessage,
    credits: Mapping[bytes, int],
    registry: Registry,
    current_round: int,
    last_seq: Mapping[bytes, int],
    freshness: int = FRESHNESS_WINDOW,
) -> Rejection | None:
    """Return ``None`` if the message is legal, else the first failed check.

    ``credits`` is the receiver's ledger at its committed height and
    ``last_seq`` the highest sequence number it has already accepted (or
    seen committed) per sender.
    """
    if len(msg.payload) > MAX_PAYLOAD or len(msg.sender_id) != DIGEST_SIZE:
        return Rejection.MALFORMED
    public_key = registry.public_key(msg.sender_id)
    if public_key is None:
        return Rejection.UNKNOWN_SENDER
    try:
        signed = msg.signing_bytes()
    except SerializationError:
        return Rejection.MALFORMED
    if not verify(public_key, signed, msg.signature):
        return Rejection.BAD_SIGNATURE
    if msg.seq <= last_seq.get(msg.sender_id, -1):
        return Rejection.REPLAY
    if not current_round - freshness <= msg.timestamp <= current_round:
        return Rejection.STALE
    if credits.get(msg.sender_id) != msg.credit_claim:
        return Rejection.CLAIM_MISMATCH
    return None
