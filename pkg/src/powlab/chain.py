"""Block model, canonical serialization, PoW validity, and the fork-choice block tree.

A block header serializes to 78 fixed-width big-endian bytes and its SHA-256
digest is the block hash. Proof of work holds when the hash, read as a 256-bit
integer, is below ``2**256 // difficulty``, so ``difficulty`` is the expected
number of attempts per block. The tree keeps every known block, selects the
head by maximum total difficulty (first-seen wins ties), and buffers blocks
whose parent has not arrived yet.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

HASH_SIZE = 32
ZERO_HASH = bytes(HASH_SIZE)
HEADER_SIZE = 78
BLOCK_SIZE = HEADER_SIZE + HASH_SIZE  # 110

NONCE_MASK = (1 << 64) - 1
MAX_ORPHAN_BLOCKS = 1024

# (size in bytes, max value) per serialized field, in wire order after parent_hash checks
_U16_MAX = (1 << 16) - 1
_U32_MAX = (1 << 32) - 1
_U64_MAX = (1 << 64) - 1
_U128_MAX = (1 << 128) - 1


@dataclass(frozen=True)
class BlockHeader:
    """The hashed portion of a block.

    ``experiment_id`` salts every hash so distinct runs cannot replay each
    other's blocks; ``difficulty`` is carried per block and summed for fork
    choice. Range enforcement happens at serialization time, which lets tests
    build degenerate headers deliberately.
    """

    height: int
    parent_hash: bytes
    miner_id: int
    difficulty: int
    timestamp_ms: int
    nonce: int
    experiment_id: int


@dataclass(frozen=True)
class Block:
    """A header plus its cached hash. ``from_header`` keeps the pair consistent."""

    header: BlockHeader
    hash: bytes

    @classmethod
    def from_header(cls, header: BlockHeader) -> "Block":
        return cls(header=header, hash=hash_header(header))


@dataclass(frozen=True)
class BlockSummary:
    """Compact per-block record used by chain views and the miner."""

    hash: bytes
    miner_id: int
    timestamp_ms: int
    height: int


@dataclass(frozen=True)
class ChainViewEntry:
    height: int
    canonical: BlockSummary
    side: tuple[BlockSummary, ...]


@dataclass(frozen=True)
class ChainView:
    """The last ``depth`` heights of a tree: canonical block plus competing
    side blocks per height, newest entry last."""

    window: tuple[ChainViewEntry, ...]
    head_height: int


def encode_header(header: BlockHeader) -> bytes:
    """Serialize to the canonical 78-byte big-endian layout.

    Order: experiment_id:4 | height:8 | parent_hash:32 | miner_id:2 |
    difficulty:16 | timestamp_ms:8 | nonce:8. Raises ValueError when a field
    is negative, too large, or the parent hash is not 32 bytes.
    """
    h = header
    if len(h.parent_hash) != HASH_SIZE:
        raise ValueError(f"parent_hash must be {HASH_SIZE} bytes, got {len(h.parent_hash)}")
    for name, value, top in (
        ("experiment_id", h.experiment_id, _U32_MAX),
        ("height", h.height, _U64_MAX),
        ("miner_id", h.miner_id, _U16_MAX),
        ("difficulty", h.difficulty, _U128_MAX),
        ("timestamp_ms", h.timestamp_ms, _U64_MAX),
        ("nonce", h.nonce, _U64_MAX),
    ):
        if not 0 <= value <= top:
            raise ValueError(f"{name}={value} out of range [0, {top}]")
    return (
        h.experiment_id.to_bytes(4, "big")
        + h.height.to_bytes(8, "big")
        + h.parent_hash
        + h.miner_id.to_bytes(2, "big")
        + h.difficulty.to_bytes(16, "big")
        + h.timestamp_ms.to_bytes(8, "big")
        + h.nonce.to_bytes(8, "big")
    )


def decode_header(data: bytes) -> BlockHeader:
    if len(data) != HEADER_SIZE:
        raise ValueError(f"header must be {HEADER_SIZE} bytes, got {len(data)}")
    return BlockHeader(
        experiment_id=int.from_bytes(data[0:4], "big"),
        height=int.from_bytes(data[4:12], "big"),
        parent_hash=data[12:44],
        miner_id=int.from_bytes(data[44:46], "big"),
        difficulty=int.from_bytes(data[46:62], "big"),
        timestamp_ms=int.from_bytes(data[62:70], "big"),
        nonce=int.from_bytes(data[70:78], "big"),
    )


def hash_header(header: BlockHeader) -> bytes:
    """SHA-256 of the canonical serialization; the block's identity and PoW value."""
    return hashlib.sha256(encode_header(header)).digest()


def encode_block(block: Block) -> bytes:
    """Header bytes followed by the cached 32-byte hash: 110 bytes total."""
    return encode_header(block.header) + block.hash


def decode_block(data: bytes) -> Block:
    """Inverse of encode_block. The cached hash is taken as-is; tampering
    surfaces later as a bad-hash validation result."""
    if len(data) != BLOCK_SIZE:
        raise ValueError(f"block must be {BLOCK_SIZE} bytes, got {len(data)}")
    return Block(header=decode_header(data[:HEADER_SIZE]), hash=data[HEADER_SIZE:])


def genesis_block(experiment_id: int) -> Block:
    """The deterministic height-0 block for a run: every header field zero
    except experiment_id, so the genesis hash is a pure function of the run id."""
    header = BlockHeader(
        height=0,
        parent_hash=ZERO_HASH,
        miner_id=0,
        difficulty=0,
        timestamp_ms=0,
        nonce=0,
        experiment_id=experiment_id,
    )
    return Block.from_header(header)


def meets_difficulty(block_hash: bytes, difficulty: int) -> bool:
    """True when the hash, as a 256-bit big-endian integer, is below
    ``2**256 // difficulty``. Expected attempts to succeed ~= difficulty."""
    if difficulty < 1:
        raise ValueError(f"difficulty must be >= 1, got {difficulty}")
    return int.from_bytes(block_hash, "big") < (1 << 256) // difficulty


# validate_block outcomes
OK = "ok"
DUPLICATE = "duplicate"
UNKNOWN_PARENT = "unknown-parent"
BAD_HEIGHT = "bad-height"
BAD_POW = "bad-pow"
BAD_HASH = "bad-hash"

# insert_block outcomes
EXTENDED_HEAD = "extended-head"
NEW_SIDE_BRANCH = "new-side-branch"
REORG = "reorg"
ORPHANED = "orphaned"
REJECTED = "rejected"


@dataclass(frozen=True)
class InsertOutcome:
    """Result of one insert_block call.

    ``stored`` lists every block this call admitted, the inserted block first
    and then any orphans it unblocked. For reorgs, ``depth`` counts blocks
    abandoned from the old canonical chain.
    """

    kind: str
    stored: tuple[Block, ...] = ()
    reason: str | None = None  # validation result, for kind == "rejected"
    old_head: bytes | None = None
    new_head: bytes | None = None
    depth: int = 0

    @property
    def head_moved(self) -> bool:
        return self.kind in (EXTENDED_HEAD, REORG)


class BlockTree:
    """All blocks known to one node, with fork choice and orphan buffering.

    Single-writer: callers must serialize mutations. The head is the stored
    block with maximal total difficulty; among equals the one stored first
    (lowest arrival sequence number) wins.
    """

    def __init__(self, genesis: Block):
        self.genesis = genesis.hash
        self.blocks: dict[bytes, Block] = {genesis.hash: genesis}
        self.children: dict[bytes, list[bytes]] = {}
        self.arrival_seq: dict[bytes, int] = {genesis.hash: 0}
        self.total_difficulty: dict[bytes, int] = {genesis.hash: genesis.header.difficulty}
        self.head: bytes = genesis.hash
        self.orphans: dict[bytes, list[Block]] = {}
        self._by_height: dict[int, list[bytes]] = {0: [genesis.hash]}
        self._orphan_fifo: list[bytes] = []  # hashes in buffer order, for capped eviction
        self._buffered: set[bytes] = set()
        self._next_seq = 1

    # -- queries ---------------------------------------------------------

    def __contains__(self, block_hash: bytes) -> bool:
        return block_hash in self.blocks

    def block(self, block_hash: bytes) -> Block | None:
        return self.blocks.get(block_hash)

    def head_block(self) -> Block:
        return self.blocks[self.head]

    def height(self, block_hash: bytes) -> int:
        return self.blocks[block_hash].header.height

    def summary(self, block_hash: bytes) -> BlockSummary:
        b = self.blocks[block_hash]
        return BlockSummary(
            hash=b.hash,
            miner_id=b.header.miner_id,
            timestamp_ms=b.header.timestamp_ms,
            height=b.header.height,
        )

    def head_summary(self) -> BlockSummary:
        return self.summary(self.head)

    def is_buffered(self, block_hash: bytes) -> bool:
        return block_hash in self._buffered

    # -- validation and insertion ---------------------------------------

    def validate_block(self, block: Block) -> str:
        """Classify a block against current tree state without mutating it.

        Checks, in order: duplicate, hash recomputation, declared difficulty
        and PoW, parent presence, height continuity. Hash and PoW precede the
        parent check so junk never enters the orphan buffer.
        """
        if block.hash in self.blocks:
            return DUPLICATE
        if hash_header(block.header) != block.hash:
            return BAD_HASH
        if block.header.difficulty < 1:
            return BAD_POW
        if not meets_difficulty(block.hash, block.header.difficulty):
            return BAD_POW
        parent = self.blocks.get(block.header.parent_hash)
        if parent is None:
            return UNKNOWN_PARENT
        if block.header.height != parent.header.height + 1:
            return BAD_HEIGHT
        return OK

    def insert_block(self, block: Block) -> InsertOutcome:
        """Validate and store a block, drain any orphans it unblocks, and
        re-evaluate the head.

        Unknown-parent blocks are buffered (oldest evicted beyond the cap);
        bad-hash/bad-pow/bad-height blocks are rejected and never stored.
        """
        old_head = self.head
        verdict = self.validate_block(block)
        if verdict == DUPLICATE:
            return InsertOutcome(kind=DUPLICATE)
        if verdict == UNKNOWN_PARENT:
            self._buffer_orphan(block)
            return InsertOutcome(kind=ORPHANED)
        if verdict != OK:
            return InsertOutcome(kind=REJECTED, reason=verdict)

        stored = [block]
        self._store(block)
        stored.extend(self._drain_orphans(block.hash))

        if self.head == old_head:
            return InsertOutcome(kind=NEW_SIDE_BRANCH, stored=tuple(stored))
        if self._is_ancestor(old_head, self.head):
            return InsertOutcome(
                kind=EXTENDED_HEAD,
                stored=tuple(stored),
                old_head=old_head,
                new_head=self.head,
            )
        fork = self._common_ancestor(old_head, self.head)
        depth = self.height(old_head) - self.height(fork)
        return InsertOutcome(
            kind=REORG,
            stored=tuple(stored),
            old_head=old_head,
            new_head=self.head,
            depth=depth,
        )

    def _store(self, block: Block) -> None:
        parent = block.header.parent_hash
        self.blocks[block.hash] = block
        self.children.setdefault(parent, []).append(block.hash)
        self.arrival_seq[block.hash] = self._next_seq
        self._next_seq += 1
        self.total_difficulty[block.hash] = (
            self.total_difficulty[parent] + block.header.difficulty
        )
        self._by_height.setdefault(block.header.height, []).append(block.hash)
        # strict inequality keeps the first-seen block on ties
        if self.total_difficulty[block.hash] > self.total_difficulty[self.head]:
            self.head = block.hash

    def _buffer_orphan(self, block: Block) -> None:
        if block.hash in self._buffered:
            return
        self.orphans.setdefault(block.header.parent_hash, []).append(block)
        self._orphan_fifo.append(block.hash)
        self._buffered.add(block.hash)
        if len(self._orphan_fifo) > MAX_ORPHAN_BLOCKS:
            self._evict_oldest_orphan()

    def _evict_oldest_orphan(self) -> None:
        oldest = self._orphan_fifo.pop(0)
        self._buffered.discard(oldest)
        for parent, bucket in list(self.orphans.items()):
            kept = [b for b in bucket if b.hash != oldest]
            if kept:
                self.orphans[parent] = kept
            else:
                del self.orphans[parent]

    def _drain_orphans(self, arrived: bytes) -> list[Block]:
        """Store every buffered block whose ancestry just connected, in FIFO
        order per parent, breadth-first across generations."""
        drained: list[Block] = []
        queue = [arrived]
        while queue:
            parent = queue.pop(0)
            for orphan in self.orphans.pop(parent, []):
                self._orphan_fifo.remove(orphan.hash)
                self._buffered.discard(orphan.hash)
                if self.validate_block(orphan) == OK:
                    self._store(orphan)
                    drained.append(orphan)
                    queue.append(orphan.hash)
        return drained

    def drop_orphans_waiting_on(self, parent_hash: bytes) -> list[Block]:
        """Give up on a missing ancestor: discard the blocks buffered under it."""
        dropped = self.orphans.pop(parent_hash, [])
        for b in dropped:
            self._orphan_fifo.remove(b.hash)
            self._buffered.discard(b.hash)
        return dropped

    # -- fork choice -----------------------------------------------------

    def canonical_head(self) -> bytes:
        return self.head

    def recompute_head(self) -> bytes:
        """Full scan over stored blocks; must agree with the incrementally
        maintained head. Used by invariant checks."""
        return min(
            self.blocks,
            key=lambda h: (-self.total_difficulty[h], self.arrival_seq[h]),
        )

    def canonical_chain(self) -> list[bytes]:
        """Genesis-to-head path; length is head height + 1."""
        chain: list[bytes] = []
        cur = self.head
        while True:
            chain.append(cur)
            if cur == self.genesis:
                break
            cur = self.blocks[cur].header.parent_hash
        chain.reverse()
        return chain

    def uncle_set(self) -> set[bytes]:
        """Stored non-genesis blocks off the canonical chain."""
        canonical = set(self.canonical_chain())
        return {h for h in self.blocks if h not in canonical}

    def block_by_height(self, height: int) -> Block | None:
        """The canonical block at a height, or None above the head."""
        chain = self.canonical_chain()
        if 0 <= height < len(chain):
            return self.blocks[chain[height]]
        return None

    def chain_view(self, depth: int) -> ChainView:
        """The last ``depth`` heights ending at the head, each with its
        canonical block and any side blocks, in arrival order."""
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        chain = self.canonical_chain()
        head_height = len(chain) - 1
        start = max(0, head_height - depth + 1)
        window = []
        for height in range(start, head_height + 1):
            canonical = chain[height]
            side = tuple(
                self.summary(h) for h in self._by_height.get(height, []) if h != canonical
            )
            window.append(
                ChainViewEntry(height=height, canonical=self.summary(canonical), side=side)
            )
        return ChainView(window=tuple(window), head_height=head_height)

    # -- ancestry helpers ------------------------------------------------

    def _is_ancestor(self, ancestor: bytes, descendant: bytes) -> bool:
        cur = descendant
        target_height = self.height(ancestor)
        while self.height(cur) > target_height:
            cur = self.blocks[cur].header.parent_hash
        return cur == ancestor

    def _common_ancestor(self, a: bytes, b: bytes) -> bytes:
        while self.height(a) > self.height(b):
            a = self.blocks[a].header.parent_hash
        while self.height(b) > self.height(a):
            b = self.blocks[b].header.parent_hash
        while a != b:
            a = self.blocks[a].header.parent_hash
            b = self.blocks[b].header.parent_hash
        return a


def chain_view_to_json(view: ChainView) -> dict:
    """JSON shape served over RPC and consumed by the control UI."""
    return {
        "head_height": view.head_height,
        "window": [
            {
                "height": e.height,
                "canonical": summary_to_json(e.canonical),
                "side": [summary_to_json(s) for s in e.side],
            }
            for e in view.window
        ],
    }


def summary_to_json(s: BlockSummary) -> dict:
    return {
        "hash": s.hash.hex(),
        "miner_id": s.miner_id,
        "timestamp_ms": s.timestamp_ms,
        "height": s.height,
    }


def block_to_json(block: Block) -> dict:
    h = block.header
    return {
        "hash": block.hash.hex(),
        "parent_hash": h.parent_hash.hex(),
        "height": h.height,
        "miner_id": h.miner_id,
        "difficulty": h.difficulty,
        "timestamp_ms": h.timestamp_ms,
        "nonce": h.nonce,
        "experiment_id": h.experiment_id,
    }
