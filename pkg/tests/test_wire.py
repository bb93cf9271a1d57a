"""Wire protocol tests: golden frame bytes, round-trips, malformed input."""

import socket
import threading

import pytest
from hypothesis import given, strategies as st

from powlab import wire
from powlab.chain import Block, BlockHeader, encode_block, genesis_block
from powlab.wire import (
    BlockResponse,
    GetBlock,
    GetHead,
    HeadResponse,
    Hello,
    NewBlock,
    ProtocolError,
    WireMessage,
)

# Frozen byte-level fixtures. GOLDEN_BLOCK is height 1 on the experiment-7
# genesis, mined at difficulty 16 (nonce 42 is the smallest that works).
GENESIS_7_HASH = "ba4863cb5db50a6a7a3f281ee370d19833e307be613d6c6689bba038cbf86425"
GOLDEN_BLOCK_HASH = "00de8bc3bad8446d52f589e222e96f7b337998a4811ebbd6067d61f62b114c66"
GOLDEN_BLOCK_HEX = (
    "000000070000000000000001"
    + GENESIS_7_HASH
    + "000300000000000000000000000000000010"
    + "00000000000004d2000000000000002a"
    + GOLDEN_BLOCK_HASH
)

GOLDEN_FRAMES = {
    "hello": "0000004e01000300000007"
    + GENESIS_7_HASH
    + GOLDEN_BLOCK_HASH
    + "00000000000000010003",
    "new_block": "0000006e020003" + GOLDEN_BLOCK_HEX,
    "get_block": "00000020030005" + GENESIS_7_HASH,
    "block_response_found": "0000006f04000501" + GOLDEN_BLOCK_HEX,
    "block_response_missing": "0000000104000500",
    "get_head": "00000000050009",
    "head_response": "00000028060009" + GOLDEN_BLOCK_HASH + "0000000000000001",
}


def golden_block() -> Block:
    g = genesis_block(7)
    header = BlockHeader(
        height=1,
        parent_hash=g.hash,
        miner_id=3,
        difficulty=16,
        timestamp_ms=1234,
        nonce=42,
        experiment_id=7,
    )
    return Block.from_header(header)


def golden_messages() -> dict[str, WireMessage]:
    g = genesis_block(7)
    blk = golden_block()
    return {
        "hello": WireMessage(3, Hello(experiment_id=7, genesis_hash=g.hash,
                                      head_hash=blk.hash, head_height=1, node_id=3)),
        "new_block": WireMessage(3, NewBlock(block=blk)),
        "get_block": WireMessage(5, GetBlock(hash=g.hash)),
        "block_response_found": WireMessage(5, BlockResponse(block=blk)),
        "block_response_missing": WireMessage(5, BlockResponse(block=None)),
        "get_head": WireMessage(9, GetHead()),
        "head_response": WireMessage(9, HeadResponse(head_hash=blk.hash, head_height=1)),
    }


def test_golden_block_bytes():
    blk = golden_block()
    assert blk.hash.hex() == GOLDEN_BLOCK_HASH
    assert encode_block(blk).hex() == GOLDEN_BLOCK_HEX
    assert len(encode_block(blk)) == 110


def test_golden_frame_encodings():
    messages = golden_messages()
    assert set(messages) == set(GOLDEN_FRAMES)
    for name, msg in messages.items():
        raw = wire.encode_frame(msg)
        assert raw.hex() == GOLDEN_FRAMES[name], name
        assert wire.decode_frame(raw) == msg, name


def test_length_prefix_counts_payload_only():
    raw = bytes.fromhex(GOLDEN_FRAMES["new_block"])
    declared = int.from_bytes(raw[0:4], "big")
    assert declared == 110  # block payload, excluding the 7-byte frame header
    assert len(raw) == wire.FRAME_HEADER_SIZE + declared
    assert raw[4] == wire.KIND_NEW_BLOCK
    assert int.from_bytes(raw[5:7], "big") == 3


def test_kind_numbering_is_stable():
    assert wire.KIND_HELLO == 1
    assert wire.KIND_NEW_BLOCK == 2
    assert wire.KIND_GET_BLOCK == 3
    assert wire.KIND_BLOCK_RESPONSE == 4
    assert wire.KIND_GET_HEAD == 5
    assert wire.KIND_HEAD_RESPONSE == 6


_hashes = st.binary(min_size=32, max_size=32)
_u16 = st.integers(0, (1 << 16) - 1)
_u32 = st.integers(0, (1 << 32) - 1)
_u64 = st.integers(0, (1 << 64) - 1)
_u128 = st.integers(0, (1 << 128) - 1)

_headers = st.builds(
    BlockHeader,
    height=_u64,
    parent_hash=_hashes,
    miner_id=_u16,
    difficulty=_u128,
    timestamp_ms=_u64,
    nonce=_u64,
    experiment_id=_u32,
)
# decode_block keeps the carried hash as-is, so any 32-byte value round-trips
_blocks = st.builds(Block, header=_headers, hash=_hashes)

_bodies = st.one_of(
    st.builds(Hello, experiment_id=_u32, genesis_hash=_hashes, head_hash=_hashes,
              head_height=_u64, node_id=_u16),
    st.builds(NewBlock, block=_blocks),
    st.builds(GetBlock, hash=_hashes),
    st.builds(BlockResponse, block=st.none() | _blocks),
    st.just(GetHead()),
    st.builds(HeadResponse, head_hash=_hashes, head_height=_u64),
)


@given(sender=_u16, body=_bodies)
def test_frame_round_trip(sender, body):
    msg = WireMessage(sender=sender, body=body)
    assert wire.decode_frame(wire.encode_frame(msg)) == msg


@given(raw=st.binary(max_size=6))
def test_short_frames_rejected(raw):
    with pytest.raises(ProtocolError):
        wire.decode_frame(raw)


def test_decode_rejects_malformed_frames():
    good = bytes.fromhex(GOLDEN_FRAMES["get_block"])
    with pytest.raises(ProtocolError):
        wire.decode_frame(good[:-1])  # truncated payload
    with pytest.raises(ProtocolError):
        wire.decode_frame(good + b"\x00")  # trailing junk
    bad_kind = good[:4] + bytes([99]) + good[5:]
    with pytest.raises(ProtocolError):
        wire.decode_frame(bad_kind)
    oversize = (wire.MAX_PAYLOAD + 1).to_bytes(4, "big") + good[4:]
    with pytest.raises(ProtocolError):
        wire.decode_frame(oversize)


def test_decode_rejects_bad_block_response_flag():
    # flag byte must be 0 (absent) or 1 (present, followed by 110 bytes)
    payload = b"\x02"
    frame = len(payload).to_bytes(4, "big") + bytes([wire.KIND_BLOCK_RESPONSE]) + (5).to_bytes(2, "big") + payload
    with pytest.raises(ProtocolError):
        wire.decode_frame(frame)
    payload = b"\x01" + b"\x00" * 50  # present flag but truncated block
    frame = len(payload).to_bytes(4, "big") + bytes([wire.KIND_BLOCK_RESPONSE]) + (5).to_bytes(2, "big") + payload
    with pytest.raises(ProtocolError):
        wire.decode_frame(frame)


def test_decode_rejects_wrong_payload_sizes():
    for kind, size in ((wire.KIND_HELLO, 78), (wire.KIND_GET_BLOCK, 32),
                       (wire.KIND_HEAD_RESPONSE, 40), (wire.KIND_GET_HEAD, 0)):
        payload = b"\x00" * (size + 1)
        frame = len(payload).to_bytes(4, "big") + bytes([kind]) + b"\x00\x01" + payload
        with pytest.raises(ProtocolError):
            wire.decode_frame(frame)


def test_read_frame_across_fragmented_writes():
    messages = golden_messages()
    stream = b"".join(wire.encode_frame(m) for m in messages.values())
    a, b = socket.socketpair()
    try:
        def dribble():
            for i in range(0, len(stream), 13):
                a.sendall(stream[i:i + 13])
            a.close()

        writer = threading.Thread(target=dribble)
        writer.start()
        got = [wire.read_frame(b) for _ in range(len(messages))]
        assert got == list(messages.values())
        with pytest.raises(ConnectionError):
            wire.read_frame(b)
        writer.join()
    finally:
        b.close()


def test_read_frame_eof_mid_frame():
    a, b = socket.socketpair()
    try:
        a.sendall(bytes.fromhex(GOLDEN_FRAMES["hello"])[:20])
        a.close()
        with pytest.raises(ConnectionError):
            wire.read_frame(b)
    finally:
        b.close()
