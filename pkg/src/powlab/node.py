"""One blockchain node process behind a single ordered event loop.

The loop is the only writer of the block tree, the miner job, and the event
log. Miner finds, peer frames, timers, and HTTP requests (RPC and control)
all funnel through it, so every visible snapshot is consistent and the log
is a total order of this node's state changes.
"""

from __future__ import annotations

import json
import queue
import random
import threading
import time
import traceback
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from powlab.chain import (
    DUPLICATE,
    EXTENDED_HEAD,
    ORPHANED,
    REJECTED,
    REORG,
    ZERO_HASH,
    BlockTree,
    block_to_json,
    chain_view_to_json,
    genesis_block,
)
from powlab.eventlog import (
    EventLogWriter,
    EventRecord,
    RunMetrics,
    compute_node_metrics,
    node_log_path,
)
from powlab.httpjson import post_json
from powlab.miner import MinerConfig, MinerThread, build_candidate
from powlab.p2p import PeerEndpoint, PeerManager
from powlab.wire import (
    BlockResponse,
    GetBlock,
    GetHead,
    HeadResponse,
    Hello,
    NewBlock,
    WireMessage,
    encode_frame,
)

PHASE_IDLE = "idle"
PHASE_CONFIGURED = "configured"
PHASE_MINING = "mining"
PHASE_STOPPED = "stopped"

API_VERSION = 1
DEFAULT_CHAIN_VIEW_DEPTH = 12
BACKFILL_TIMEOUT_S = 2.0
BACKFILL_MAX_ROUNDS = 3
HEARTBEAT_INTERVAL_S = 5.0

RPC_PARSE_ERROR = -32700
RPC_INVALID_REQUEST = -32600
RPC_METHOD_NOT_FOUND = -32601
RPC_INVALID_PARAMS = -32602
RPC_INTERNAL_ERROR = -32603

_EMPTY_METRICS = RunMetrics(
    total_canonical=0,
    contributions={},
    leader=None,
    leader_pct=0.0,
    own_pct=0.0,
    uncle_count=0,
    uncle_rate=0.0,
    head_height=0,
)


class BusyError(Exception):
    """Control action conflicts with the current phase."""


class _InvalidParams(Exception):
    pass


class _Call:
    __slots__ = ("fn", "done", "result", "error")

    def __init__(self, fn):
        self.fn = fn
        self.done = threading.Event()
        self.result = None
        self.error = None


@dataclass
class _Backfill:
    """One missing ancestor being chased across peers."""

    missing: bytes
    peer_order: list[int] = field(default_factory=list)
    idx: int = 0
    rounds: int = 0
    deadline: float = 0.0


def _parse_slice(spec: dict) -> dict:
    """Validate the per-node slice pushed by the orchestrator."""
    if not isinstance(spec, dict):
        raise ValueError("apply body must be a JSON object")

    def want_int(name, minimum, default=None):
        value = spec.get(name, default)
        if value is None:
            raise ValueError(f"{name}: required")
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{name}: must be an integer")
        if value < minimum:
            raise ValueError(f"{name}: must be >= {minimum}")
        return value

    out = {
        "experiment_id": want_int("experiment_id", 0),
        "difficulty": want_int("difficulty", 1),
        "worker_count": want_int("worker_count", 0),
        "attempts_per_sec_per_worker": want_int("attempts_per_sec_per_worker", 1, 5000),
        "outbound_delay_ms": want_int("outbound_delay_ms", 0, 0),
        "repetition_index": want_int("repetition_index", 0, 0),
    }
    out["base_experiment_id"] = want_int("base_experiment_id", 0, out["experiment_id"])
    run_id = spec.get("run_id")
    if not isinstance(run_id, str) or not run_id:
        raise ValueError("run_id: required string")
    out["run_id"] = run_id
    color = spec.get("color")
    if color is not None and not isinstance(color, str):
        raise ValueError("color: must be a string")
    out["color"] = color
    peers = []
    for i, entry in enumerate(spec.get("peers", [])):
        if not isinstance(entry, dict):
            raise ValueError(f"peers[{i}]: must be an object")
        try:
            peers.append(
                PeerEndpoint(
                    node_id=int(entry["node_id"]),
                    host=str(entry["host"]),
                    port=int(entry["port"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"peers[{i}]: needs node_id, host, port") from exc
    out["peers"] = peers
    return out


class Node:
    """Tree + miner + peers + HTTP surface for one participant."""

    def __init__(
        self,
        node_id: int,
        p2p_listen: tuple[str, int] = ("127.0.0.1", 0),
        rpc_listen: tuple[str, int] = ("127.0.0.1", 0),
        orchestrator_url: str | None = None,
        data_dir: str = "powlab-data",
    ):
        if not (0 <= node_id < 65536):
            raise ValueError(f"node_id must fit 16 bits, got {node_id}")
        self.node_id = node_id
        self.p2p_listen = p2p_listen
        self.rpc_listen = rpc_listen
        self.orchestrator_url = orchestrator_url
        self.data_dir = data_dir

        self.events: queue.Queue = queue.Queue()
        self.phase = PHASE_IDLE
        self.tree: BlockTree | None = None
        self.color = "#808080"
        self.experiment_id: int | None = None
        self.base_experiment_id: int | None = None
        self.run_id: str | None = None
        self.miner_cfg: MinerConfig | None = None
        self.blocks_mined = 0
        self.log: EventLogWriter | None = None
        self.frozen_metrics: RunMetrics | None = None
        self.seen_gossip: set[bytes] = set()
        self.backfills: dict[bytes, _Backfill] = {}
        self.start_at_ms: int | None = None
        self.mining_started = False
        self.epoch_wall_ms = 0
        self.rng = random.Random()
        self.p2p_address = ""
        self.rpc_address = ""

        self._current_job = None
        self._last_ts = 0
        self._log_paths: dict[str, str] = {}
        self._registered = False
        self._closed = False
        self._loop_stop = False
        self._hb_stop = threading.Event()
        self._pub_lock = threading.Lock()
        self._pub_head = ZERO_HASH
        self._pub_height = 0

        self.miner = MinerThread(self._on_found)
        self.peers = PeerManager(
            self.node_id,
            deliver=lambda pid, msg: self.events.put(("peer", pid, msg)),
            on_link_up=lambda pid, hello: self.events.put(("link-up", pid, hello)),
            on_link_down=lambda pid: self.events.put(("link-down", pid)),
        )
        self._http: _NodeHTTPServer | None = None

    # -- lifecycle -------------------------------------------------------

    def start(self) -> "Node":
        host, port = self.peers.start_listener(*self.p2p_listen)
        self.p2p_address = f"{host}:{port}"
        try:
            self._http = _NodeHTTPServer(tuple(self.rpc_listen), self)
        except OSError:
            self.peers.close()
            raise
        rpc_host, rpc_port = self._http.server_address[:2]
        self.rpc_address = f"http://{rpc_host}:{rpc_port}"
        threading.Thread(target=self._http.serve_forever, daemon=True, name="node-http").start()
        threading.Thread(target=self._loop, daemon=True, name=f"node-loop-{self.node_id}").start()
        self.miner.start()
        if self.orchestrator_url:
            threading.Thread(target=self._heartbeat_loop, daemon=True, name="node-heartbeat").start()
        return self

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self.call(self._stop, timeout=5.0)
        except Exception:
            pass
        self._hb_stop.set()
        self.events.put(("shutdown",))
        self.miner.stop()
        self.peers.close()
        if self._http is not None:
            self._http.shutdown()
            self._http.server_close()

    # -- the event loop --------------------------------------------------

    def call(self, fn, timeout: float = 10.0):
        """Run ``fn`` inside the event loop and return its result."""
        c = _Call(fn)
        self.events.put(("call", c))
        if not c.done.wait(timeout):
            raise TimeoutError("node event loop unresponsive")
        if c.error is not None:
            raise c.error
        return c.result

    def _loop(self):
        while not self._loop_stop:
            try:
                ev = self.events.get(timeout=0.05)
            except queue.Empty:
                ev = None
            if ev is not None:
                if ev[0] == "shutdown":
                    break
                try:
                    self._dispatch(ev)
                except Exception:
                    traceback.print_exc()
            self._tick()
            self._publish()

    def _dispatch(self, ev):
        kind = ev[0]
        if kind == "call":
            c = ev[1]
            try:
                c.result = c.fn()
            except BaseException as exc:
                c.error = exc
            finally:
                c.done.set()
        elif kind == "mined":
            self._handle_mined(ev[1], ev[2])
        elif kind == "peer":
            self._handle_peer(ev[1], ev[2])
        elif kind == "link-up":
            self._handle_link_up(ev[1], ev[2])
        elif kind == "link-down":
            self._log("link-down", {"peer": ev[1]})

    def _tick(self):
        if self.phase == PHASE_MINING and not self.mining_started:
            if self.start_at_ms is not None and self._wall_ms() >= self.start_at_ms:
                self.mining_started = True
                self._maybe_restart_miner()
        if self.backfills:
            now = time.monotonic()
            for bf in list(self.backfills.values()):
                if bf.missing in self.backfills and now >= bf.deadline:
                    self._advance_backfill(bf)

    def _publish(self):
        if self.tree is not None:
            head = self.tree.head
            height = self.tree.head_block().header.height
        else:
            head, height = ZERO_HASH, 0
        with self._pub_lock:
            self._pub_head = head
            self._pub_height = height

    def _hello_source(self):
        with self._pub_lock:
            return self._pub_head, self._pub_height

    # -- clocks and logging ----------------------------------------------

    def _wall_ms(self) -> int:
        return int(time.time() * 1000)

    def _run_ms(self) -> int:
        return max(0, self._wall_ms() - self.epoch_wall_ms)

    def _log(self, kind: str, payload: dict):
        if self.log is None:
            return
        ts = max(self._last_ts, self._run_ms())
        self._last_ts = ts
        self.log.append(EventRecord(ts_ms=ts, node_id=self.node_id, kind=kind, payload=payload))

    # -- mining ----------------------------------------------------------

    def _on_found(self, block, job):
        # miner thread context; hand over to the loop
        self.events.put(("mined", block, job))

    def _handle_mined(self, block, job):
        if job is self._current_job:
            self._current_job = None
        if (
            self.phase != PHASE_MINING
            or not self.mining_started
            or self.tree is None
            or block.header.experiment_id != self.experiment_id
        ):
            return  # raced a stop or re-apply
        self._admit(block, origin=None, mined=True)
        self._maybe_restart_miner()

    def _maybe_restart_miner(self):
        if (
            self.phase != PHASE_MINING
            or not self.mining_started
            or self.tree is None
            or self.miner_cfg is None
            or self.miner_cfg.worker_count < 1
        ):
            return
        job = self._current_job
        if job is not None and not job.cancelled and job.parent_hash == self.tree.head:
            return
        if job is not None:
            job.cancel()
        new_job = build_candidate(
            self.tree.head_summary(), self.miner_cfg, self._run_ms(), self.experiment_id, self.rng
        )
        self._current_job = new_job
        self.miner.set_job(new_job, self.miner_cfg)

    # -- block admission and gossip --------------------------------------

    def _admit(self, block, origin: int | None, mined: bool = False):
        if self.tree is None:
            return
        if block.header.experiment_id != self.experiment_id:
            return
        h = block.hash
        if h in self.tree or self.tree.is_buffered(h):
            return
        outcome = self.tree.insert_block(block)
        if outcome.kind == ORPHANED:
            self._request_backfill(block.header.parent_hash, origin)
            return
        if outcome.kind == REJECTED:
            self._log("rejected", {"hash": h.hex(), "reason": outcome.reason})
            return
        if outcome.kind == DUPLICATE:
            return

        for b in outcome.stored:
            hdr = b.header
            payload = {
                "hash": b.hash.hex(),
                "parent": hdr.parent_hash.hex(),
                "miner_id": hdr.miner_id,
                "height": hdr.height,
            }
            if mined and b.hash == h:
                self.blocks_mined += 1
                self._log("mined", payload)
            else:
                if b.hash == h and origin is not None:
                    payload["from"] = origin
                self._log("received", payload)
            self.backfills.pop(b.hash, None)

        if outcome.kind == EXTENDED_HEAD:
            self._log(
                "head-change",
                {
                    "old_head": outcome.old_head.hex(),
                    "new_head": outcome.new_head.hex(),
                    "height": self.tree.head_block().header.height,
                },
            )
        elif outcome.kind == REORG:
            self._log(
                "reorg",
                {
                    "old_head": outcome.old_head.hex(),
                    "new_head": outcome.new_head.hex(),
                    "depth": outcome.depth,
                },
            )

        for b in outcome.stored:
            self._gossip(b, origin if b.hash == h else None)
        if outcome.head_moved:
            self._maybe_restart_miner()

    def _gossip(self, block, origin: int | None):
        if block.hash in self.seen_gossip:
            return
        self.seen_gossip.add(block.hash)
        frame = encode_frame(WireMessage(sender=self.node_id, body=NewBlock(block=block)))
        self.peers.broadcast_frame(frame, exclude=origin)

    # -- peer messages ----------------------------------------------------

    def _handle_peer(self, peer_id: int, msg: WireMessage):
        body = msg.body
        if isinstance(body, NewBlock):
            self._admit(body.block, origin=peer_id)
        elif isinstance(body, GetBlock):
            found = self.tree.block(body.hash) if self.tree is not None else None
            self.peers.send(peer_id, WireMessage(sender=self.node_id, body=BlockResponse(block=found)))
        elif isinstance(body, BlockResponse):
            if body.block is not None:
                self._admit(body.block, origin=peer_id)
            else:
                for bf in list(self.backfills.values()):
                    if bf.peer_order and bf.idx < len(bf.peer_order) and bf.peer_order[bf.idx] == peer_id:
                        self._advance_backfill(bf)
        elif isinstance(body, GetHead):
            if self.tree is not None:
                self.peers.send(
                    peer_id,
                    WireMessage(
                        sender=self.node_id,
                        body=HeadResponse(
                            head_hash=self.tree.head,
                            head_height=self.tree.head_block().header.height,
                        ),
                    ),
                )
        elif isinstance(body, HeadResponse):
            self._maybe_fetch(peer_id, body.head_hash)
        elif isinstance(body, Hello):
            pass  # handshake already done; late hellos carry nothing new

    def _handle_link_up(self, peer_id: int, hello: Hello):
        self._log("link-up", {"peer": peer_id})
        self._maybe_fetch(peer_id, hello.head_hash)

    def _maybe_fetch(self, peer_id: int, head_hash: bytes):
        """Pull a peer's head if we have never seen it (late join, missed blocks)."""
        if self.tree is None or head_hash == ZERO_HASH:
            return
        if head_hash in self.tree or self.tree.is_buffered(head_hash):
            return
        self._request_backfill(head_hash, peer_id)

    # -- backfill ---------------------------------------------------------

    def _request_backfill(self, missing: bytes, origin: int | None):
        if self.tree is None or missing in self.tree or missing in self.backfills:
            return
        live = self.peers.live_peers()
        order = [origin] if origin in live else []
        order += [p for p in live if p != origin]
        bf = _Backfill(missing=missing, peer_order=order)
        self.backfills[missing] = bf
        self._send_backfill(bf)

    def _send_backfill(self, bf: _Backfill):
        while True:
            while bf.idx < len(bf.peer_order):
                peer = bf.peer_order[bf.idx]
                if self.peers.send(peer, WireMessage(sender=self.node_id, body=GetBlock(hash=bf.missing))):
                    bf.deadline = time.monotonic() + BACKFILL_TIMEOUT_S
                    return
                bf.idx += 1
            bf.rounds += 1
            bf.idx = 0
            bf.peer_order = self.peers.live_peers()
            if bf.rounds >= BACKFILL_MAX_ROUNDS or not bf.peer_order:
                self._give_up_backfill(bf)
                return

    def _advance_backfill(self, bf: _Backfill):
        bf.idx += 1
        self._send_backfill(bf)

    def _give_up_backfill(self, bf: _Backfill):
        self.backfills.pop(bf.missing, None)
        dropped = []
        stack = [bf.missing]
        while stack:
            h = stack.pop()
            for orphan in self.tree.drop_orphans_waiting_on(h):
                dropped.append(orphan)
                stack.append(orphan.hash)
                self.backfills.pop(orphan.hash, None)
        self._log("backfill-failed", {"missing": bf.missing.hex(), "dropped": len(dropped)})

    # -- control ----------------------------------------------------------

    def _apply(self, spec: dict) -> dict:
        if self.phase == PHASE_MINING:
            raise BusyError("busy: a run is mining; stop it first")
        cfg = _parse_slice(spec)

        self.miner.clear_job()
        self._current_job = None
        if self.log is not None:
            self.log.close()

        self.experiment_id = cfg["experiment_id"]
        self.base_experiment_id = cfg["base_experiment_id"]
        self.run_id = cfg["run_id"]
        if cfg["color"]:
            self.color = cfg["color"]
        self.miner_cfg = MinerConfig(
            miner_id=self.node_id,
            difficulty=cfg["difficulty"],
            worker_count=cfg["worker_count"],
            attempts_per_sec_per_worker=cfg["attempts_per_sec_per_worker"],
        )

        g = genesis_block(self.experiment_id)
        self.tree = BlockTree(g)
        self.seen_gossip = set()
        self.backfills = {}
        self.blocks_mined = 0
        self.frozen_metrics = None
        self.mining_started = False
        self.start_at_ms = None
        self.epoch_wall_ms = self._wall_ms()
        self._last_ts = 0

        path = node_log_path(self.data_dir, self.base_experiment_id, self.run_id, self.node_id)
        self.log = EventLogWriter(path)
        self._log_paths[self.run_id] = path
        self._log(
            "run-start",
            {
                "experiment_id": self.experiment_id,
                "run_id": self.run_id,
                "genesis": g.hash.hex(),
                "epoch_wall_ms": self.epoch_wall_ms,
                "difficulty": cfg["difficulty"],
                "worker_count": cfg["worker_count"],
                "outbound_delay_ms": cfg["outbound_delay_ms"],
            },
        )
        self._publish()
        endpoints = [p for p in cfg["peers"] if p.node_id != self.node_id]
        self.peers.configure(
            self.experiment_id, g.hash, cfg["outbound_delay_ms"], endpoints, self._hello_source
        )
        self.phase = PHASE_CONFIGURED
        return self._status()

    def _start(self, start_at_ms) -> dict:
        if self.phase != PHASE_CONFIGURED:
            raise BusyError(f"cannot start from phase {self.phase}")
        if isinstance(start_at_ms, bool) or not isinstance(start_at_ms, int) or start_at_ms < 0:
            raise ValueError("start_at_ms: must be a non-negative integer (wall clock ms)")
        self.start_at_ms = start_at_ms
        self.phase = PHASE_MINING
        return self._status()

    def _stop(self) -> dict:
        if self.phase in (PHASE_MINING, PHASE_CONFIGURED):
            self.miner.clear_job()
            self._current_job = None
            if self.tree is not None:
                self.frozen_metrics = compute_node_metrics(self.tree, self.node_id)
            if self.log is not None:
                head_hex = self.tree.head.hex() if self.tree is not None else None
                height = self.tree.head_block().header.height if self.tree is not None else 0
                self._log(
                    "run-stop",
                    {"head": head_hex, "height": height, "blocks_mined": self.blocks_mined},
                )
                self.log.close()
            self.phase = PHASE_STOPPED
        return self._status()

    def _status(self) -> dict:
        head_hex = None
        height = 0
        if self.tree is not None:
            head_hex = self.tree.head.hex()
            height = self.tree.head_block().header.height
        return {
            "node_id": self.node_id,
            "phase": self.phase,
            "head_hash": head_hex,
            "head_height": height,
            "peer_count": self.peers.peer_count(),
            "blocks_mined": self.blocks_mined,
            "experiment_id": self.experiment_id,
            "run_id": self.run_id,
            "registered": self._registered,
            "logging_degraded": bool(self.log is not None and self.log.degraded),
            "color": self.color,
            "p2p_address": self.p2p_address,
            "rpc_address": self.rpc_address,
        }

    def log_path_for(self, run_id: str) -> str | None:
        return self._log_paths.get(run_id)

    # -- registration -----------------------------------------------------

    def _heartbeat_loop(self):
        url = self.orchestrator_url.rstrip("/")
        announce = {
            "node_id": self.node_id,
            "p2p_address": self.p2p_address,
            "rpc_address": self.rpc_address,
        }
        registered = False
        while not self._hb_stop.is_set():
            try:
                if not registered:
                    status, body = post_json(url + "/api/nodes/register", announce, timeout=5.0)
                    registered = status == 200 and bool(body.get("ok"))
                else:
                    status, body = post_json(
                        url + "/api/nodes/heartbeat", {"node_id": self.node_id}, timeout=5.0
                    )
                    if status != 200 or not body.get("ok"):
                        registered = False
                        self._registered = registered
                        continue  # re-register without waiting a full interval
            except OSError:
                registered = False
            self._registered = registered
            self._hb_stop.wait(HEARTBEAT_INTERVAL_S if registered else 1.0)

    # -- JSON-RPC ---------------------------------------------------------

    def rpc_dispatch(self, body) -> dict:
        if isinstance(body, list):
            return _rpc_error(None, RPC_INVALID_REQUEST, "batch requests not supported")
        if not isinstance(body, dict) or body.get("jsonrpc") != "2.0" or "method" not in body:
            return _rpc_error(None, RPC_INVALID_REQUEST, "not a JSON-RPC 2.0 request")
        rid = body.get("id")
        method = body["method"]
        params = body.get("params", [])
        handler = _RPC_METHODS.get(method)
        if handler is None:
            return _rpc_error(rid, RPC_METHOD_NOT_FOUND, f"unknown method {method}")
        try:
            result = self.call(lambda: handler(self, params))
        except _InvalidParams as exc:
            return _rpc_error(rid, RPC_INVALID_PARAMS, str(exc) or "invalid params")
        except Exception as exc:
            return _rpc_error(rid, RPC_INTERNAL_ERROR, f"internal error: {exc}")
        return {"jsonrpc": "2.0", "id": rid, "result": result}

    def _rpc_node_info(self, params):
        return {
            "node_id": self.node_id,
            "api_version": API_VERSION,
            "color": self.color,
            "phase": self.phase,
            "peer_count": self.peers.peer_count(),
            "experiment_id": self.experiment_id,
            "head_height": self.tree.head_block().header.height if self.tree is not None else 0,
            "run_id": self.run_id,
        }

    def _rpc_get_head(self, params):
        if self.tree is None:
            return None
        head = self.tree.head_block()
        return {"hash": head.hash.hex(), "height": head.header.height}

    def _rpc_block_by_hash(self, params):
        raw = _one_param(params, "hash")
        if not isinstance(raw, str):
            raise _InvalidParams("hash must be a 64-char hex string")
        try:
            h = bytes.fromhex(raw)
        except ValueError:
            raise _InvalidParams("hash must be a 64-char hex string") from None
        if len(h) != 32:
            raise _InvalidParams("hash must be a 64-char hex string")
        if self.tree is None:
            return None
        block = self.tree.block(h)
        return block_to_json(block) if block is not None else None

    def _rpc_block_by_number(self, params):
        height = _one_param(params, "height")
        if isinstance(height, bool) or not isinstance(height, int) or height < 0:
            raise _InvalidParams("height must be a non-negative integer")
        if self.tree is None:
            return None
        block = self.tree.block_by_height(height)
        return block_to_json(block) if block is not None else None

    def _rpc_chain_view(self, params):
        depth = _one_param(params, "depth", default=DEFAULT_CHAIN_VIEW_DEPTH)
        if isinstance(depth, bool) or not isinstance(depth, int) or depth < 1:
            raise _InvalidParams("depth must be a positive integer")
        if self.tree is None:
            return None
        return chain_view_to_json(self.tree.chain_view(depth))

    def _rpc_metrics(self, params):
        if self.phase == PHASE_STOPPED and self.frozen_metrics is not None:
            return self.frozen_metrics.to_json()
        if self.tree is not None:
            return compute_node_metrics(self.tree, self.node_id).to_json()
        return _EMPTY_METRICS.to_json()


def _one_param(params, name, default=None):
    if isinstance(params, dict):
        if name in params:
            return params[name]
    elif isinstance(params, list) and len(params) >= 1:
        return params[0]
    if default is not None:
        return default
    raise _InvalidParams(f"missing parameter {name}")


def _rpc_error(rid, code: int, message: str) -> dict:
    return {"jsonrpc": "2.0", "id": rid, "error": {"code": code, "message": message}}


_RPC_METHODS = {
    "powlab_getNodeInfo": Node._rpc_node_info,
    "powlab_getHead": Node._rpc_get_head,
    "powlab_getBlockByHash": Node._rpc_block_by_hash,
    "powlab_getBlockByNumber": Node._rpc_block_by_number,
    "powlab_getChainView": Node._rpc_chain_view,
    "powlab_getMetrics": Node._rpc_metrics,
}


class _NodeHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, node: Node):
        self.node = node
        super().__init__(addr, _NodeRequestHandler)


class _NodeRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    def _body(self):
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _send_json(self, status: int, obj) -> None:
        data = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _send_text(self, status: int, text: str, content_type: str) -> None:
        data = text.encode()
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def do_OPTIONS(self):
        # Browser preflight for cross-origin JSON-RPC calls from the control panel.
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_POST(self):
        node = self.server.node
        path = urlparse(self.path).path
        try:
            body = json.loads(self._body() or b"null")
        except ValueError:
            body = _MALFORMED

        if path in ("/", "/rpc"):
            if body is _MALFORMED:
                self._send_json(200, _rpc_error(None, RPC_PARSE_ERROR, "parse error"))
                return
            self._send_json(200, node.rpc_dispatch(body))
        elif path == "/control/apply":
            if body is _MALFORMED or not isinstance(body, dict):
                self._send_json(400, {"ok": False, "error": "body must be a JSON object"})
                return
            self._control(lambda: node.call(lambda: node._apply(body)))
        elif path == "/control/start":
            if body is _MALFORMED or not isinstance(body, dict):
                self._send_json(400, {"ok": False, "error": "body must be a JSON object"})
                return
            start_at = body.get("start_at_ms")
            self._control(lambda: node.call(lambda: node._start(start_at)))
        elif path == "/control/stop":
            self._control(lambda: node.call(node._stop))
        else:
            self._send_json(404, {"ok": False, "error": "not found"})

    def _control(self, action):
        try:
            status = action()
        except BusyError as exc:
            self._send_json(409, {"ok": False, "error": str(exc)})
        except ValueError as exc:
            self._send_json(400, {"ok": False, "error": str(exc)})
        except Exception as exc:
            self._send_json(500, {"ok": False, "error": f"internal error: {exc}"})
        else:
            self._send_json(200, {"ok": True, "status": status})

    def do_GET(self):
        node = self.server.node
        parsed = urlparse(self.path)
        if parsed.path == "/control/status":
            try:
                self._send_json(200, node.call(node._status))
            except Exception as exc:
                self._send_json(500, {"ok": False, "error": f"internal error: {exc}"})
        elif parsed.path == "/control/log":
            run = parse_qs(parsed.query).get("run", [None])[0]
            path = node.log_path_for(run) if run else None
            if path is None:
                self._send_json(404, {"ok": False, "error": "unknown run"})
                return
            try:
                with open(path, encoding="utf-8") as fh:
                    content = fh.read()
            except OSError:
                self._send_json(404, {"ok": False, "error": "log unavailable"})
                return
            self._send_text(200, content, "application/x-ndjson")
        else:
            self._send_json(404, {"ok": False, "error": "not found"})


_MALFORMED = object()
