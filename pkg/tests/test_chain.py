"""Block encoding, hashing, fork choice, and orphan handling."""

import hashlib
import random

import pytest
from hypothesis import given, strategies as st

from powlab.chain import (
    BAD_HASH,
    BAD_HEIGHT,
    BAD_POW,
    DUPLICATE,
    EXTENDED_HEAD,
    HEADER_SIZE,
    MAX_ORPHAN_BLOCKS,
    NEW_SIDE_BRANCH,
    ORPHANED,
    REJECTED,
    REORG,
    ZERO_HASH,
    Block,
    BlockHeader,
    BlockTree,
    block_to_json,
    chain_view_to_json,
    decode_block,
    decode_header,
    encode_block,
    encode_header,
    genesis_block,
    hash_header,
    meets_difficulty,
)

from helpers import forge

GENESIS_0_HASH = "5552748b5aeb500f57b3d1f4a56e4e9789198918c663e712314ea999026eb896"
GENESIS_7_HASH = "ba4863cb5db50a6a7a3f281ee370d19833e307be613d6c6689bba038cbf86425"


# -- serialization ---------------------------------------------------------


def test_genesis_zero_is_hash_of_zero_bytes():
    g = genesis_block(0)
    assert encode_header(g.header) == bytes(HEADER_SIZE)
    assert g.hash == hashlib.sha256(bytes(HEADER_SIZE)).digest()
    assert g.hash.hex() == GENESIS_0_HASH


def test_genesis_is_pure_function_of_experiment_id():
    assert genesis_block(7).hash.hex() == GENESIS_7_HASH
    assert genesis_block(7) == genesis_block(7)
    seen = {genesis_block(i).hash for i in (0, 1, 2, 7, 1000, 2**32 - 1)}
    assert len(seen) == 6
    g = genesis_block(7)
    assert g.header.height == 0
    assert g.header.difficulty == 0
    assert g.header.parent_hash == ZERO_HASH
    assert g.header.miner_id == 0


def test_header_field_offsets():
    header = BlockHeader(
        height=0x0102030405060708,
        parent_hash=bytes(range(32)),
        miner_id=0xBEEF,
        difficulty=0x0F0E0D0C0B0A09080706050403020100,
        timestamp_ms=0x1112131415161718,
        nonce=0x2122232425262728,
        experiment_id=0xCAFEBABE,
    )
    raw = encode_header(header)
    assert len(raw) == HEADER_SIZE == 78
    assert raw[0:4] == bytes.fromhex("cafebabe")
    assert raw[4:12] == bytes.fromhex("0102030405060708")
    assert raw[12:44] == bytes(range(32))
    assert raw[44:46] == bytes.fromhex("beef")
    assert raw[46:62] == bytes.fromhex("0f0e0d0c0b0a09080706050403020100")
    assert raw[62:70] == bytes.fromhex("1112131415161718")
    assert raw[70:78] == bytes.fromhex("2122232425262728")
    assert decode_header(raw) == header
    assert hash_header(header) == hashlib.sha256(raw).digest()


def test_encode_rejects_out_of_range_fields():
    base = genesis_block(1).header
    from dataclasses import replace

    for bad in (
        replace(base, parent_hash=b"\x00" * 31),
        replace(base, height=-1),
        replace(base, height=1 << 64),
        replace(base, miner_id=1 << 16),
        replace(base, difficulty=1 << 128),
        replace(base, timestamp_ms=-5),
        replace(base, nonce=1 << 64),
        replace(base, experiment_id=1 << 32),
    ):
        with pytest.raises(ValueError):
            encode_header(bad)


def test_decode_rejects_wrong_lengths():
    with pytest.raises(ValueError):
        decode_header(bytes(77))
    with pytest.raises(ValueError):
        decode_header(bytes(79))
    with pytest.raises(ValueError):
        decode_block(bytes(109))


_u64 = st.integers(0, (1 << 64) - 1)

_headers = st.builds(
    BlockHeader,
    height=_u64,
    parent_hash=st.binary(min_size=32, max_size=32),
    miner_id=st.integers(0, (1 << 16) - 1),
    difficulty=st.integers(0, (1 << 128) - 1),
    timestamp_ms=_u64,
    nonce=_u64,
    experiment_id=st.integers(0, (1 << 32) - 1),
)


@given(header=_headers)
def test_header_round_trip(header):
    assert decode_header(encode_header(header)) == header


@given(header=_headers, carried=st.binary(min_size=32, max_size=32))
def test_block_round_trip_preserves_carried_hash(header, carried):
    block = Block(header=header, hash=carried)
    assert decode_block(encode_block(block)) == block


# -- difficulty ------------------------------------------------------------


def test_meets_difficulty_threshold_boundary():
    threshold = (1 << 256) // 16
    below = (threshold - 1).to_bytes(32, "big")
    at = threshold.to_bytes(32, "big")
    assert meets_difficulty(below, 16)
    assert not meets_difficulty(at, 16)


def test_difficulty_one_accepts_everything():
    assert meets_difficulty(b"\xff" * 32, 1)
    assert meets_difficulty(bytes(32), 1)


def test_meets_difficulty_rejects_nonpositive():
    with pytest.raises(ValueError):
        meets_difficulty(bytes(32), 0)
    with pytest.raises(ValueError):
        meets_difficulty(bytes(32), -3)


@given(value=st.integers(0, (1 << 256) - 1), difficulty=st.integers(1, 1 << 40))
def test_meets_difficulty_matches_integer_comparison(value, difficulty):
    passed = meets_difficulty(value.to_bytes(32, "big"), difficulty)
    assert passed == (value < (1 << 256) // difficulty)


# -- insertion and fork choice --------------------------------------------


def fork_fixture():
    """One side branch: miners 1, 2, 3 where 2's block loses to 3's branch.

    Layout (heights left to right):
        g -- b1 -- b2           (b2 arrives first at height 2...)
               \\-- b3 -- b4    (...but b3's branch grows first to height 3)
    """
    g = genesis_block(1)
    tree = BlockTree(g)
    b1 = forge(g, miner_id=1, timestamp_ms=100)
    b2 = forge(b1, miner_id=2, timestamp_ms=200)
    b3 = forge(b1, miner_id=3, timestamp_ms=210)
    b4 = forge(b3, miner_id=1, timestamp_ms=300)
    return g, tree, b1, b2, b3, b4


def test_fork_with_one_side_branch():
    g, tree, b1, b2, b3, b4 = fork_fixture()

    assert tree.insert_block(b1).kind == EXTENDED_HEAD
    assert tree.insert_block(b2).kind == EXTENDED_HEAD
    assert tree.head == b2.hash

    out3 = tree.insert_block(b3)
    assert out3.kind == NEW_SIDE_BRANCH
    assert tree.head == b2.hash, "tie keeps the first-seen head"

    out4 = tree.insert_block(b4)
    assert out4.kind == REORG
    assert out4.old_head == b2.hash
    assert out4.new_head == b4.hash
    assert out4.depth == 1

    assert tree.canonical_chain() == [g.hash, b1.hash, b3.hash, b4.hash]
    assert tree.uncle_set() == {b2.hash}
    assert tree.head_block().header.height == 3


def test_extension_after_reorg_reports_extended_head():
    g, tree, b1, b2, b3, b4 = fork_fixture()
    for b in (b1, b2, b3, b4):
        tree.insert_block(b)
    b5 = forge(b4, miner_id=2, timestamp_ms=400)
    out = tree.insert_block(b5)
    assert out.kind == EXTENDED_HEAD
    assert out.old_head == b4.hash
    assert out.new_head == b5.hash


def test_heaviest_branch_beats_longest():
    g = genesis_block(2)
    tree = BlockTree(g)
    a1 = forge(g, miner_id=1, difficulty=1, timestamp_ms=1)
    a2 = forge(a1, miner_id=1, difficulty=1, timestamp_ms=2)
    heavy = forge(g, miner_id=2, difficulty=5, timestamp_ms=3)
    tree.insert_block(a1)
    tree.insert_block(a2)
    out = tree.insert_block(heavy)
    assert out.kind == REORG
    assert tree.head == heavy.hash
    assert tree.total_difficulty[heavy.hash] == 5
    assert tree.total_difficulty[a2.hash] == 2
    assert tree.head_block().header.height == 1


def test_duplicate_insert_is_reported_and_harmless():
    g, tree, b1, *_ = fork_fixture()
    assert tree.insert_block(b1).kind == EXTENDED_HEAD
    before = dict(tree.arrival_seq)
    assert tree.insert_block(b1).kind == DUPLICATE
    assert tree.arrival_seq == before


def test_rejected_blocks_never_enter_the_tree():
    g = genesis_block(3)
    tree = BlockTree(g)
    good = forge(g, miner_id=1)

    tampered = Block(header=good.header, hash=b"\x11" * 32)
    out = tree.insert_block(tampered)
    assert out.kind == REJECTED and out.reason == BAD_HASH

    hard = Block.from_header(
        BlockHeader(height=1, parent_hash=g.hash, miner_id=1, difficulty=1 << 120,
                    timestamp_ms=0, nonce=0, experiment_id=3)
    )
    out = tree.insert_block(hard)
    assert out.kind == REJECTED and out.reason == BAD_POW

    zero_difficulty = Block.from_header(
        BlockHeader(height=1, parent_hash=g.hash, miner_id=1, difficulty=0,
                    timestamp_ms=0, nonce=0, experiment_id=3)
    )
    out = tree.insert_block(zero_difficulty)
    assert out.kind == REJECTED and out.reason == BAD_POW

    skipped = Block.from_header(
        BlockHeader(height=2, parent_hash=g.hash, miner_id=1, difficulty=1,
                    timestamp_ms=0, nonce=0, experiment_id=3)
    )
    out = tree.insert_block(skipped)
    assert out.kind == REJECTED and out.reason == BAD_HEIGHT

    assert set(tree.blocks) == {g.hash}
    assert tree.insert_block(good).kind == EXTENDED_HEAD


# -- orphans ---------------------------------------------------------------


def test_child_before_parent_is_buffered_then_drained():
    g = genesis_block(4)
    tree = BlockTree(g)
    b1 = forge(g, miner_id=1, timestamp_ms=1)
    b2 = forge(b1, miner_id=2, timestamp_ms=2)

    out = tree.insert_block(b2)
    assert out.kind == ORPHANED
    assert tree.is_buffered(b2.hash)
    assert b2.hash not in tree.blocks

    out = tree.insert_block(b1)
    assert out.kind == EXTENDED_HEAD
    assert [b.hash for b in out.stored] == [b1.hash, b2.hash]
    assert tree.head == b2.hash
    assert not tree.is_buffered(b2.hash)
    assert tree.arrival_seq[b1.hash] < tree.arrival_seq[b2.hash]


def test_orphan_chain_drains_through_generations():
    g = genesis_block(4)
    tree = BlockTree(g)
    b1 = forge(g, miner_id=1, timestamp_ms=1)
    b2 = forge(b1, miner_id=1, timestamp_ms=2)
    b3 = forge(b2, miner_id=1, timestamp_ms=3)
    tree.insert_block(b3)
    tree.insert_block(b2)
    out = tree.insert_block(b1)
    assert [b.hash for b in out.stored] == [b1.hash, b2.hash, b3.hash]
    assert tree.head == b3.hash
    assert not tree.orphans


def test_orphan_rebuffered_once():
    g = genesis_block(4)
    tree = BlockTree(g)
    b1 = forge(g, miner_id=1, timestamp_ms=1)
    b2 = forge(b1, miner_id=2, timestamp_ms=2)
    assert tree.insert_block(b2).kind == ORPHANED
    assert tree.insert_block(b2).kind == ORPHANED
    assert len(tree.orphans[b1.hash]) == 1


def test_orphan_buffer_evicts_oldest_beyond_cap():
    g = genesis_block(5)
    tree = BlockTree(g)
    orphans = []
    for i in range(MAX_ORPHAN_BLOCKS + 1):
        header = BlockHeader(
            height=9, parent_hash=hashlib.sha256(i.to_bytes(4, "big")).digest(),
            miner_id=1, difficulty=1, timestamp_ms=i, nonce=0, experiment_id=5,
        )
        blk = Block.from_header(header)
        orphans.append(blk)
        tree.insert_block(blk)
    assert not tree.is_buffered(orphans[0].hash), "oldest orphan evicted"
    assert tree.is_buffered(orphans[1].hash)
    assert tree.is_buffered(orphans[-1].hash)
    assert len(tree._orphan_fifo) == MAX_ORPHAN_BLOCKS


def test_invalid_orphan_discarded_at_drain_time():
    g = genesis_block(6)
    tree = BlockTree(g)
    b1 = forge(g, miner_id=1, timestamp_ms=1)
    # claims b1 as parent but with a gap in height, undetectable until b1 arrives
    liar = Block.from_header(
        BlockHeader(height=5, parent_hash=b1.hash, miner_id=2, difficulty=1,
                    timestamp_ms=2, nonce=0, experiment_id=6)
    )
    assert tree.insert_block(liar).kind == ORPHANED
    out = tree.insert_block(b1)
    assert [b.hash for b in out.stored] == [b1.hash]
    assert liar.hash not in tree.blocks
    assert not tree.is_buffered(liar.hash)


def test_drop_orphans_waiting_on():
    g = genesis_block(6)
    tree = BlockTree(g)
    missing = b"\x77" * 32
    stuck = Block.from_header(
        BlockHeader(height=3, parent_hash=missing, miner_id=1, difficulty=1,
                    timestamp_ms=0, nonce=0, experiment_id=6)
    )
    tree.insert_block(stuck)
    dropped = tree.drop_orphans_waiting_on(missing)
    assert [b.hash for b in dropped] == [stuck.hash]
    assert not tree.is_buffered(stuck.hash)
    assert tree.drop_orphans_waiting_on(missing) == []


# -- fork-choice oracle over random DAGs -----------------------------------


def build_random_dag(seed: int, size: int):
    rng = random.Random(seed)
    g = genesis_block(9)
    blocks = [g]
    for i in range(size):
        parent = rng.choice(blocks)
        blocks.append(
            forge(parent, miner_id=rng.randint(1, 5),
                  difficulty=rng.randint(1, 3), timestamp_ms=i + 1)
        )
    return g, blocks[1:]


def simulate_store_order(genesis_hash: bytes, arrivals) -> dict[bytes, int]:
    """Independent model of the documented storage semantics: a block with a
    known parent is stored immediately, then buffered descendants are admitted
    in buffer order, breadth-first. Returns hash -> storage sequence number."""
    stored = {genesis_hash: 0}
    seq = 1
    buffered: list[tuple[bytes, bytes]] = []  # (hash, parent) in buffer order
    for blk in arrivals:
        h, p = blk.hash, blk.header.parent_hash
        if p not in stored:
            buffered.append((h, p))
            continue
        stored[h] = seq
        seq += 1
        frontier = [h]
        while frontier:
            parent = frontier.pop(0)
            ready = [pair for pair in buffered if pair[1] == parent]
            for pair in ready:
                buffered.remove(pair)
                stored[pair[0]] = seq
                seq += 1
                frontier.append(pair[0])
    return stored


@pytest.mark.parametrize("seed", [11, 23, 47])
def test_fork_choice_matches_brute_force_oracle(seed):
    g, dag = build_random_dag(seed, size=40)
    by_hash = {b.hash: b for b in dag}

    rng = random.Random(seed * 1000 + 1)
    for perm in range(3):
        arrivals = list(dag)
        rng.shuffle(arrivals)

        tree = BlockTree(genesis_block(9))
        for blk in arrivals:
            tree.insert_block(blk)

        assert set(tree.blocks) == {g.hash} | set(by_hash), "every block stored"

        # total difficulty from raw headers, no tree involvement
        td: dict[bytes, int] = {g.hash: 0}

        def total(h: bytes) -> int:
            if h not in td:
                blk = by_hash[h]
                td[h] = total(blk.header.parent_hash) + blk.header.difficulty
            return td[h]

        for h in by_hash:
            total(h)

        order = simulate_store_order(g.hash, arrivals)
        assert order == tree.arrival_seq, "storage order matches the model"

        expected_head = min(td, key=lambda h: (-td[h], order[h]))
        assert tree.head == expected_head
        assert tree.recompute_head() == tree.head

        chain = tree.canonical_chain()
        assert chain[0] == g.hash
        assert chain[-1] == tree.head
        for height, h in enumerate(chain):
            assert tree.blocks[h].header.height == height
        assert tree.uncle_set() == set(tree.blocks) - set(chain)


# -- views -----------------------------------------------------------------


def test_chain_view_window_and_sides():
    g, tree, b1, b2, b3, b4 = fork_fixture()
    for b in (b1, b2, b3, b4):
        tree.insert_block(b)

    view = tree.chain_view(10)
    assert view.head_height == 3
    assert [e.height for e in view.window] == [0, 1, 2, 3]
    assert view.window[0].canonical.hash == g.hash
    assert view.window[2].canonical.hash == b3.hash
    assert [s.hash for s in view.window[2].side] == [b2.hash]
    assert view.window[3].side == ()

    only_head = tree.chain_view(1)
    assert [e.height for e in only_head.window] == [3]

    with pytest.raises(ValueError):
        tree.chain_view(0)


def test_chain_view_json_shape():
    g, tree, b1, b2, b3, b4 = fork_fixture()
    for b in (b1, b2, b3, b4):
        tree.insert_block(b)
    doc = chain_view_to_json(tree.chain_view(2))
    assert doc["head_height"] == 3
    assert [e["height"] for e in doc["window"]] == [2, 3]
    entry = doc["window"][0]
    assert entry["canonical"]["hash"] == b3.hash.hex()
    assert entry["canonical"]["miner_id"] == 3
    assert entry["side"][0]["hash"] == b2.hash.hex()


def test_block_by_height_follows_reorgs():
    g, tree, b1, b2, b3, b4 = fork_fixture()
    tree.insert_block(b1)
    tree.insert_block(b2)
    assert tree.block_by_height(2).hash == b2.hash
    tree.insert_block(b3)
    tree.insert_block(b4)
    assert tree.block_by_height(2).hash == b3.hash
    assert tree.block_by_height(0).hash == g.hash
    assert tree.block_by_height(4) is None
    assert tree.block_by_height(-1) is None


def test_block_to_json_fields():
    blk = forge(genesis_block(8), miner_id=5, timestamp_ms=123)
    doc = block_to_json(blk)
    assert doc == {
        "hash": blk.hash.hex(),
        "parent_hash": genesis_block(8).hash.hex(),
        "height": 1,
        "miner_id": 5,
        "difficulty": 1,
        "timestamp_ms": 123,
        "nonce": blk.header.nonce,
        "experiment_id": 8,
    }
