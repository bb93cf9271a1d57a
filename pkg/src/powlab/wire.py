"""Bit-exact peer wire protocol: length-prefixed frames over a byte stream.

Frame layout: len:4 (big-endian, length of the payload that follows kind and
sender) | kind:1 | sender:2 (big-endian node id) | payload. Payload layouts
are fixed-width big-endian; the new-block payload is the 110-byte canonical
block encoding.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass

from powlab.chain import BLOCK_SIZE, HASH_SIZE, Block, decode_block, encode_block

KIND_HELLO = 1
KIND_NEW_BLOCK = 2
KIND_GET_BLOCK = 3
KIND_BLOCK_RESPONSE = 4
KIND_GET_HEAD = 5
KIND_HEAD_RESPONSE = 6

FRAME_HEADER_SIZE = 7  # len:4 | kind:1 | sender:2
MAX_PAYLOAD = 1 << 20  # sanity bound; every real payload is <= 111 bytes


class ProtocolError(Exception):
    """Malformed frame or payload; the link carrying it must be dropped."""


@dataclass(frozen=True)
class Hello:
    experiment_id: int
    genesis_hash: bytes
    head_hash: bytes
    head_height: int
    node_id: int


@dataclass(frozen=True)
class NewBlock:
    block: Block


@dataclass(frozen=True)
class GetBlock:
    hash: bytes


@dataclass(frozen=True)
class BlockResponse:
    block: Block | None  # None encodes not-found


@dataclass(frozen=True)
class GetHead:
    pass


@dataclass(frozen=True)
class HeadResponse:
    head_hash: bytes
    head_height: int


Body = Hello | NewBlock | GetBlock | BlockResponse | GetHead | HeadResponse


@dataclass(frozen=True)
class WireMessage:
    sender: int
    body: Body

    @property
    def kind(self) -> int:
        return _KIND_OF[type(self.body)]


_KIND_OF = {
    Hello: KIND_HELLO,
    NewBlock: KIND_NEW_BLOCK,
    GetBlock: KIND_GET_BLOCK,
    BlockResponse: KIND_BLOCK_RESPONSE,
    GetHead: KIND_GET_HEAD,
    HeadResponse: KIND_HEAD_RESPONSE,
}


def _encode_payload(body: Body) -> bytes:
    if isinstance(body, Hello):
        return (
            body.experiment_id.to_bytes(4, "big")
            + body.genesis_hash
            + body.head_hash
            + body.head_height.to_bytes(8, "big")
            + body.node_id.to_bytes(2, "big")
        )
    if isinstance(body, NewBlock):
        return encode_block(body.block)
    if isinstance(body, GetBlock):
        return body.hash
    if isinstance(body, BlockResponse):
        if body.block is None:
            return b"\x00"
        return b"\x01" + encode_block(body.block)
    if isinstance(body, GetHead):
        return b""
    if isinstance(body, HeadResponse):
        return body.head_hash + body.head_height.to_bytes(8, "big")
    raise ProtocolError(f"unknown message body {type(body).__name__}")


def _decode_payload(kind: int, payload: bytes) -> Body:
    if kind == KIND_HELLO:
        _expect(payload, 4 + HASH_SIZE + HASH_SIZE + 8 + 2, "hello")
        return Hello(
            experiment_id=int.from_bytes(payload[0:4], "big"),
            genesis_hash=payload[4:36],
            head_hash=payload[36:68],
            head_height=int.from_bytes(payload[68:76], "big"),
            node_id=int.from_bytes(payload[76:78], "big"),
        )
    if kind == KIND_NEW_BLOCK:
        _expect(payload, BLOCK_SIZE, "new-block")
        return NewBlock(block=decode_block(payload))
    if kind == KIND_GET_BLOCK:
        _expect(payload, HASH_SIZE, "get-block")
        return GetBlock(hash=payload)
    if kind == KIND_BLOCK_RESPONSE:
        if len(payload) == 1 and payload[0] == 0:
            return BlockResponse(block=None)
        if len(payload) == 1 + BLOCK_SIZE and payload[0] == 1:
            return BlockResponse(block=decode_block(payload[1:]))
        raise ProtocolError(f"malformed block-response payload of {len(payload)} bytes")
    if kind == KIND_GET_HEAD:
        _expect(payload, 0, "get-head")
        return GetHead()
    if kind == KIND_HEAD_RESPONSE:
        _expect(payload, HASH_SIZE + 8, "head-response")
        return HeadResponse(
            head_hash=payload[0:32],
            head_height=int.from_bytes(payload[32:40], "big"),
        )
    raise ProtocolError(f"unknown message kind {kind}")


def _expect(payload: bytes, size: int, name: str) -> None:
    if len(payload) != size:
        raise ProtocolError(f"{name} payload must be {size} bytes, got {len(payload)}")


def encode_frame(msg: WireMessage) -> bytes:
    payload = _encode_payload(msg.body)
    return (
        len(payload).to_bytes(4, "big")
        + bytes([msg.kind])
        + msg.sender.to_bytes(2, "big")
        + payload
    )


def decode_frame(frame: bytes) -> WireMessage:
    """Decode one complete frame; inverse of encode_frame."""
    if len(frame) < FRAME_HEADER_SIZE:
        raise ProtocolError(f"frame too short: {len(frame)} bytes")
    length = int.from_bytes(frame[0:4], "big")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds cap")
    if len(frame) != FRAME_HEADER_SIZE + length:
        raise ProtocolError(f"frame length mismatch: header says {length}")
    kind = frame[4]
    sender = int.from_bytes(frame[5:7], "big")
    return WireMessage(sender=sender, body=_decode_payload(kind, frame[7:]))


def read_frame(sock: socket.socket) -> WireMessage:
    """Read exactly one frame from a connected socket.

    Raises ConnectionError on EOF and ProtocolError on malformed data.
    """
    header = _recv_exact(sock, FRAME_HEADER_SIZE)
    length = int.from_bytes(header[0:4], "big")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds cap")
    payload = _recv_exact(sock, length) if length else b""
    kind = header[4]
    sender = int.from_bytes(header[5:7], "big")
    return WireMessage(sender=sender, body=_decode_payload(kind, payload))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf.extend(chunk)
    return bytes(buf)
