"""Merkle trees over 32-byte digests.

Conventions: a single leaf is its own root, odd levels duplicate their last
node, and a parent is ``double_sha256(left || right)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .digest import check_digest, double_sha256

LEFT = "L"
RIGHT = "R"


@dataclass(frozen=True)
class MerkleProof:
    """Sibling path from a leaf to the root.

    ``siblings`` runs bottom-up; the side flag says where the sibling sits
    relative to the running hash.
    """

    leaf_index: int
    siblings: tuple[tuple[bytes, str], ...]


def _next_level(level: list[bytes]) -> list[bytes]:
    if len(level) % 2:
        level = level + [level[-1]]
    return [double_sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    if not leaves:
        raise ValueError("merkle_root of an empty leaf list is undefined")
    level = [check_digest(leaf, "leaf") for leaf in leaves]
    while len(level) > 1:
        level = _next_level(level)
    return level[0]


def merkle_prove(leaves: Sequence[bytes], index: int) -> MerkleProof:
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range for {len(leaves)} leaves")
    level = [check_digest(leaf, "leaf") for leaf in leaves]
    siblings: list[tuple[bytes, str]] = []
    pos = index
    while len(level) > 1:
        if len(level) % 2:
            level = level + [level[-1]]
        if pos % 2:
            siblings.append((level[pos - 1], LEFT))
        else:
            siblings.append((level[pos + 1], RIGHT))
        level = _next_level(level)
        pos //= 2
    return MerkleProof(index, tuple(siblings))


def merkle_verify(root: bytes, leaf: bytes, proof: MerkleProof) -> bool:
    node = leaf
    for sibling, side in proof.siblings:
        if side == LEFT:
            node = double_sha256(sibling + node)
        elif side == RIGHT:
            node = double_sha256(node + sibling)
        else:
            return False
    return node == root
