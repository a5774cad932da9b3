"""Double SHA-256 and fixed-width integer encoding shared by every layer."""

from __future__ import annotations

import hashlib

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


class SerializationError(ValueError):
    """A value cannot be encoded into its fixed-width field."""


def double_sha256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def check_digest(value: bytes, name: str = "digest") -> bytes:
    if not isinstance(value, (bytes, bytearray)) or len(value) != DIGEST_SIZE:
        raise SerializationError(f"{name} must be exactly {DIGEST_SIZE} bytes")
    return bytes(value)


def uint_be(value: int, width: int, name: str = "value") -> bytes:
    """Unsigned big-endian encoding; raises on overflow or negatives."""
    if not isinstance(value, int) or isinstance(value, bool):
        raise SerializationError(f"{name} must be an integer")
    if value < 0 or value >= 1 << (8 * width):
        raise SerializationError(f"{name}={value} does not fit in {width} unsigned bytes")
    return value.to_bytes(width, "big")


def int_be(value: int, width: int, name: str = "value") -> bytes:
    """Signed (two's complement) big-endian encoding."""
    if not isinstance(value, int) or isinstance(value, bool):
        raise SerializationError(f"{name} must be an integer")
    try:
        return value.to_bytes(width, "big", signed=True)
    except OverflowError:
        raise SerializationError(f"{name}={value} does not fit in {width} signed bytes") from None


def hex32(value: bytes) -> str:
    return check_digest(value).hex()


def parse_hex(text: str, size: int | None = None, name: str = "field") -> bytes:
    """Strict lowercase hex decoding; rejects anything that would not re-encode identically."""
    if not isinstance(text, str) or len(text) % 2 or text != text.lower():
        raise SerializationError(f"{name}: not canonical lowercase hex")
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise SerializationError(f"{name}: not canonical lowercase hex") from None
    if raw.hex() != text:
        raise SerializationError(f"{name}: not canonical lowercase hex")
    if size is not None and len(raw) != size:
        raise SerializationError(f"{name}: expected {size} bytes, got {len(raw)}")
    return raw
