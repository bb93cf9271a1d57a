"""Throttled nonce search on top of the current head.

The miner tries consecutive nonces (starting at a random 64-bit offset so
equal-rate peers do not duplicate work) against the difficulty threshold, at
a rate capped by worker_count x attempts_per_sec_per_worker. A job is bound
to the head it extends and is cancelled as soon as the head moves.
"""

from __future__ import annotations

import hashlib
import random
import threading
import time
from dataclasses import dataclass, field, replace

from powlab.chain import (
    Block,
    BlockHeader,
    BlockSummary,
    NONCE_MASK,
    encode_header,
)

DEFAULT_ATTEMPTS_PER_SEC = 5000

# tick and batch sizes for the background loop; a batch bounds cancel latency
TICK_MS = 100
MAX_BATCH = 512

FOUND = "found"
EXHAUSTED = "exhausted-batch"
CANCELLED = "cancelled"


@dataclass(frozen=True)
class MinerConfig:
    miner_id: int
    difficulty: int
    worker_count: int
    attempts_per_sec_per_worker: int = DEFAULT_ATTEMPTS_PER_SEC

    @property
    def hashrate(self) -> int:
        """Attempts per second this node is allowed."""
        return self.worker_count * self.attempts_per_sec_per_worker


@dataclass
class MiningJob:
    """One unit of head-bound work. The nonce cursor advances across batches;
    the cancelled flag is checked at batch boundaries."""

    template: BlockHeader
    parent_hash: bytes
    nonce_cursor: int
    cancelled: bool = False
    attempts: int = 0
    # immutable 70-byte serialization prefix; only the nonce tail varies
    _prefix: bytes = field(init=False, repr=False)
    _threshold: int = field(init=False, repr=False)

    def __post_init__(self):
        self._prefix = encode_header(self.template)[:70]
        self._threshold = (1 << 256) // self.template.difficulty

    def cancel(self) -> None:
        self.cancelled = True


def build_candidate(
    head: BlockSummary,
    cfg: MinerConfig,
    now_ms: int,
    experiment_id: int,
    rng: random.Random | None = None,
) -> MiningJob:
    """Assemble the next-block template on top of ``head``."""
    if cfg.worker_count < 1:
        raise ValueError("worker_count must be >= 1 to mine")
    offset = (rng or random).getrandbits(64)
    template = BlockHeader(
        height=head.height + 1,
        parent_hash=head.hash,
        miner_id=cfg.miner_id,
        difficulty=cfg.difficulty,
        timestamp_ms=now_ms,
        nonce=offset,
        experiment_id=experiment_id,
    )
    return MiningJob(template=template, parent_hash=head.hash, nonce_cursor=offset)


@dataclass(frozen=True)
class BatchResult:
    status: str  # FOUND | EXHAUSTED | CANCELLED
    block: Block | None
    attempts: int


def mine_batch(job: MiningJob, batch_size: int) -> BatchResult:
    """Try up to ``batch_size`` consecutive nonces from the job cursor.

    Returns the first block whose hash meets the difficulty, or exhausted
    with the cursor advanced. A cancelled job does no work.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if job.cancelled:
        return BatchResult(status=CANCELLED, block=None, attempts=0)
    prefix = job._prefix
    threshold = job._threshold
    sha256 = hashlib.sha256
    nonce = job.nonce_cursor
    for i in range(batch_size):
        digest = sha256(prefix + (nonce & NONCE_MASK).to_bytes(8, "big")).digest()
        if int.from_bytes(digest, "big") < threshold:
            job.attempts += i + 1
            job.nonce_cursor = (nonce + 1) & NONCE_MASK
            header = replace(job.template, nonce=nonce & NONCE_MASK)
            return BatchResult(status=FOUND, block=Block(header=header, hash=digest), attempts=i + 1)
        nonce = (nonce + 1) & NONCE_MASK
    job.attempts += batch_size
    job.nonce_cursor = nonce
    return BatchResult(status=EXHAUSTED, block=None, attempts=batch_size)


def throttle_plan(cfg: MinerConfig, tick_ms: int) -> int:
    """Attempts allowed per tick under the configured hashrate."""
    if tick_ms < 1:
        raise ValueError(f"tick_ms must be >= 1, got {tick_ms}")
    return round(cfg.hashrate * tick_ms / 1000)


def on_head_change(
    current_job: MiningJob,
    new_head: BlockSummary,
    cfg: MinerConfig,
    now_ms: int,
    experiment_id: int,
    rng: random.Random | None = None,
) -> MiningJob:
    """Cancel work on the stale head and start fresh on the new one."""
    if new_head.hash == current_job.parent_hash:
        raise ValueError("head unchanged; keep the current job")
    current_job.cancel()
    return build_candidate(new_head, cfg, now_ms, experiment_id, rng)


class MinerThread(threading.Thread):
    """Background mining loop with a token-bucket throttle (burst <= 2 ticks).

    The owner assigns jobs with ``set_job`` and receives found blocks through
    ``on_found(block, job)``; after a find the thread idles until the owner
    reacts to the new head with the next job.
    """

    def __init__(self, on_found):
        super().__init__(daemon=True, name="miner")
        self._on_found = on_found
        self._cond = threading.Condition()
        self._job: MiningJob | None = None
        self._per_tick = 0
        self._halt = False

    def set_job(self, job: MiningJob, cfg: MinerConfig) -> None:
        with self._cond:
            if self._job is not None:
                self._job.cancel()
            self._job = job
            self._per_tick = throttle_plan(cfg, TICK_MS)
            self._cond.notify()

    def clear_job(self) -> None:
        with self._cond:
            if self._job is not None:
                self._job.cancel()
            self._job = None
            self._cond.notify()

    def stop(self) -> None:
        with self._cond:
            self._halt = True
            if self._job is not None:
                self._job.cancel()
            self._cond.notify()

    def run(self):
        tokens = 0.0
        last = time.monotonic()
        while True:
            with self._cond:
                while not self._halt and (self._job is None or self._per_tick == 0):
                    self._cond.wait(timeout=0.5)
                    tokens = 0.0
                    last = time.monotonic()
                if self._halt:
                    return
                job = self._job
                per_tick = self._per_tick

            now = time.monotonic()
            tokens = min(tokens + per_tick * (now - last) / (TICK_MS / 1000), 2 * per_tick)
            last = now

            if tokens < 1:
                time.sleep(TICK_MS / 1000)
                continue

            budget = int(tokens)
            while budget >= 1 and not job.cancelled:
                result = mine_batch(job, min(MAX_BATCH, budget))
                tokens -= result.attempts
                budget -= result.attempts
                if result.status == FOUND:
                    with self._cond:
                        if self._job is job:
                            self._job = None
                    self._on_found(result.block, job)
                    break
                if result.status == CANCELLED:
                    break
            else:
                time.sleep(TICK_MS / 1000)
