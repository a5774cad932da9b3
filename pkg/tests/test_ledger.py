import dataclasses
import itertools
import random

import pytest
from hypothesis import given, strategies as st

from bbc.biometrics import Fleet
from bbc.credits import initial_ledger
from bbc.digest import SerializationError, ZERO_DIGEST
from bbc.merkle import merkle_root
from bbc.ledger import (
    HEADER_SIZE,
    Block,
    BlockHeader,
    BlockRejection,
    ChainValidationError,
    block_hash,
    canonical_header_bytes,
    credit_weight,
    genesis_block,
    parse_header,
    select_head,
    validate_block,
    validate_chain,
)
from oracles import dsha_ref

GENESIS_HASH = "23f5ffc88b3b14b43aab7a5dc5a537d48e59f38dfd7d10581290daad4c432518"

u64 = st.integers(0, 2**64 - 1)
headers = st.builds(
    BlockHeader,
    version=st.integers(0, 2**32 - 1),
    prev_hash=st.binary(min_size=32, max_size=32),
    merkle_root=st.binary(min_size=32, max_size=32),
    timestamp=u64,
    height=u64,
    leader_id=st.binary(min_size=32, max_size=32),
    nonce=u64,
)


def test_genesis_layout():
    raw = canonical_header_bytes(genesis_block().header)
    assert len(raw) == HEADER_SIZE
    assert raw[:4] == b"\x00\x00\x00\x01"
    assert raw[4:36] == bytes(32)


def test_genesis_hash_golden():
    raw = canonical_header_bytes(genesis_block().header)
    assert dsha_ref(raw).hex() == GENESIS_HASH
    assert block_hash(genesis_block().header).hex() == GENESIS_HASH


@given(headers, u64)
def test_nonce_only_touches_tail(h, nonce):
    a = canonical_header_bytes(h)
    b = canonical_header_bytes(dataclasses.replace(h, nonce=nonce))
    assert a[:-8] == b[:-8]


@given(headers)
def test_header_roundtrip(h):
    raw = canonical_header_bytes(h)
    assert parse_header(raw) == h
    assert canonical_header_bytes(parse_header(raw)) == raw


def test_out_of_range_fields():
    g = genesis_block().header
    for bad in (
        dataclasses.replace(g, version=2**32),
        dataclasses.replace(g, height=-1),
        dataclasses.replace(g, nonce=2**64),
        dataclasses.replace(g, prev_hash=b"\x00" * 31),
    ):
        with pytest.raises(SerializationError):
            canonical_header_bytes(bad)
    with pytest.raises(SerializationError):
        parse_header(b"\x00" * 123)


def test_one_bit_header_changes_change_hash():
    rng = random.Random(2)
    raw = canonical_header_bytes(genesis_block().header)
    base = block_hash(genesis_block().header)
    for _ in range(300):
        pos = rng.randrange(HEADER_SIZE * 8)
        flipped = bytearray(raw)
        flipped[pos // 8] ^= 1 << (pos % 8)
        digest = block_hash(parse_header(bytes(flipped)))
        assert digest != base
    assert block_hash(genesis_block().header) == base


def test_honest_chain_is_valid(fixture_chain, registry):
    state = validate_chain(fixture_chain, registry)
    assert state.height == 50


def _resign(block: Block, key, **header_changes) -> Block:
    header = dataclasses.replace(block.header, **header_changes)
    return dataclasses.replace(block, header=header, leader_signature=key.sign(header.hash))


def _parent_state(fixture_chain, registry, height):
    return validate_chain(fixture_chain[:height], registry)


def test_non_leader_resign_is_wrong_leader(fixture_run, fixture_chain, registry):
    block = fixture_chain[10]
    state = _parent_state(fixture_chain, registry, 10)
    impostor = next(n for n in fixture_run.world.nodes if n.biometric_id != block.header.leader_id)
    forged = _resign(block, impostor.key, leader_id=impostor.biometric_id)
    assert validate_block(forged, state.head, state.ledger, registry, state.last_seq) is BlockRejection.WRONG_LEADER


def test_leader_key_mismatch_is_bad_signature(fixture_run, fixture_chain, registry):
    block = fixture_chain[10]
    state = _parent_state(fixture_chain, registry, 10)
    other = next(n for n in fixture_run.world.nodes if n.biometric_id != block.header.leader_id)
    forged = dataclasses.replace(block, leader_signature=other.key.sign(block.hash))
    assert validate_block(forged, state.head, state.ledger, registry, state.last_seq) is BlockRejection.BAD_SIGNATURE


def test_structural_rejections(fixture_run, fixture_chain, registry):
    block = fixture_chain[5]
    state = _parent_state(fixture_chain, registry, 5)
    key = fixture_run.world.by_id(block.header.leader_id).key
    h = block.header

    def check(b):
        return validate_block(b, state.head, state.ledger, registry, state.last_seq)

    assert check(block) is None
    assert check(_resign(block, key, height=h.height + 1)) is BlockRejection.BAD_HEIGHT
    assert check(_resign(block, key, version=2)) is BlockRejection.BAD_HEIGHT
    assert check(_resign(block, key, prev_hash=ZERO_DIGEST)) is BlockRejection.BAD_PREV_HASH
    assert check(_resign(block, key, nonce=state.head.header.nonce)) is BlockRejection.BAD_ROUND
    assert check(_resign(block, key, timestamp=state.head.header.timestamp - 1)) is BlockRejection.BAD_TIMESTAMP
    assert check(_resign(block, key, merkle_root=ZERO_DIGEST)) is BlockRejection.BAD_ROOT
    assert check(dataclasses.replace(block, transactions=())) is BlockRejection.BAD_ROOT
    assert check(dataclasses.replace(block, candidates=())) is BlockRejection.WRONG_LEADER
    assert check(dataclasses.replace(block, candidates=block.candidates[::-1])) in (
        BlockRejection.WRONG_LEADER,
        None,  # single-candidate sets reverse to themselves
    )


def test_live_candidate_set_must_match(fixture_chain, registry):
    block = fixture_chain[7]
    state = _parent_state(fixture_chain, registry, 7)
    args = (block, state.head, state.ledger, registry, state.last_seq)
    assert validate_block(*args, candidates=block.candidates) is None
    extra = set(block.candidates) | set(registry.ids())
    if extra != set(block.candidates):
        assert validate_block(*args, candidates=extra) is BlockRejection.WRONG_LEADER


def test_replayed_transaction_block_is_illegal(fixture_run, fixture_chain, registry):
    """Re-committing an already committed message is caught even with a fresh root and signature."""
    state = _parent_state(fixture_chain, registry, 20)
    nxt = fixture_chain[20]
    old_tx = fixture_chain[19].transactions[0]
    txs = tuple(sorted(set(nxt.transactions) | {old_tx}, key=dsha_ref))
    key = fixture_run.world.by_id(nxt.header.leader_id).key
    header = dataclasses.replace(nxt.header, merkle_root=merkle_root([dsha_ref(t) for t in txs]))
    forged = Block(header, txs, key.sign(header.hash), nxt.candidates)
    assert validate_block(forged, state.head, state.ledger, registry, state.last_seq) is BlockRejection.ILLEGAL_TX


def test_tx_byte_flips_are_root_or_signature_failures(fixture_chain, registry):
    rng = random.Random(17)
    for _ in range(200):
        height = rng.randrange(1, len(fixture_chain))
        block = fixture_chain[height]
        i = rng.randrange(len(block.transactions))
        tx = bytearray(block.transactions[i])
        tx[rng.randrange(len(tx))] ^= rng.randrange(1, 256)
        txs = list(block.transactions)
        txs[i] = bytes(tx)
        tampered = list(fixture_chain)
        tampered[height] = dataclasses.replace(block, transactions=tuple(txs))
        with pytest.raises(ChainValidationError) as err:
            validate_chain(tampered, registry)
        assert err.value.height == height
        assert err.value.code in (BlockRejection.BAD_ROOT, BlockRejection.BAD_SIGNATURE)


def test_validate_chain_genesis_rules(fixture_chain, registry):
    with pytest.raises(ChainValidationError, match="no genesis"):
        validate_chain([], registry)
    bad = dataclasses.replace(fixture_chain[0], header=dataclasses.replace(fixture_chain[0].header, nonce=1))
    with pytest.raises(ChainValidationError) as err:
        validate_chain([bad, *fixture_chain[1:]], registry)
    assert err.value.code is BlockRejection.BAD_GENESIS
    assert validate_chain([genesis_block()], registry).height == 0


# -- fork choice -------------------------------------------------------------

FORK_FLEET = Fleet(seed=5, size=4)


def _fake_chain(leaders, salt=0):
    """Header-only chain; fork choice only replays rewards so no transactions are needed."""
    blocks = [genesis_block()]
    for i, who in enumerate(leaders, start=1):
        h = BlockHeader(1, blocks[-1].hash, dsha_ref(bytes([salt, i])), i, i, who, i)
        blocks.append(Block(h))
    return blocks


def test_credit_weight_by_hand():
    a, b, *_ = FORK_FLEET.ids
    # rewards: a at 1 -> 2, a at 2 -> 3, b at 1
    assert credit_weight(_fake_chain([a, a, b]), FORK_FLEET.registry) == 1 + 2 + 1


def test_select_head_single_and_height():
    a = FORK_FLEET.ids[0]
    one = _fake_chain([a])
    assert select_head([one], FORK_FLEET.registry) is one
    five, four = _fake_chain([a] * 5), _fake_chain([a] * 4, salt=1)
    assert select_head([four, five], FORK_FLEET.registry) is five
    with pytest.raises(ValueError):
        select_head([], FORK_FLEET.registry)


def test_select_head_credit_tiebreak_12_vs_9():
    a, b, c, _ = FORK_FLEET.ids
    reg = FORK_FLEET.registry
    heavy = _fake_chain([a, a, a, b, b, b])  # (1+2+3) + (1+2+3)
    light = _fake_chain([a, a, b, b, c, c], salt=2)  # (1+2) * 3
    assert credit_weight(heavy, reg) == 12
    assert credit_weight(light, reg) == 9
    assert select_head([light, heavy], reg) is heavy
    assert select_head([heavy, light], reg) is heavy


def test_select_head_digest_tiebreak_and_permutation_invariance():
    a, b, *_ = FORK_FLEET.ids
    reg = FORK_FLEET.registry
    chains = [_fake_chain([a, b], salt=s) for s in range(4)] + [_fake_chain([a], salt=9)]
    expected = min(chains[:4], key=lambda c: c[-1].hash)
    for perm in itertools.permutations(chains):
        assert select_head(list(perm), reg) is expected


def test_initial_ledger_matches_fleet():
    assert initial_ledger(FORK_FLEET.registry).total == 4
