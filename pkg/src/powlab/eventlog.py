"""Append-only per-run JSONL event logs and the metrics derived from them.

Each node writes one line per event with canonical (sorted-key, compact)
serialization so a read-back/re-serialize round trip is byte identical.
Metrics are pure functions: the same numbers fall out of a live block tree
and of a replayed log, which is what the live-vs-replay check relies on.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from powlab.chain import BlockTree

EVENT_KINDS = frozenset(
    {
        "mined",
        "received",
        "rejected",
        "head-change",
        "reorg",
        "link-up",
        "link-down",
        "backfill-failed",
        "run-start",
        "run-stop",
    }
)


class LogFormatError(ValueError):
    """Malformed event log line; carries the file and 1-based line number."""

    def __init__(self, message: str, path: str | None = None, line_no: int | None = None):
        location = f"{path}:{line_no}: " if path else ""
        super().__init__(f"{location}{message}")
        self.path = path
        self.line_no = line_no


@dataclass(frozen=True)
class EventRecord:
    ts_ms: int
    node_id: int
    kind: str
    payload: dict

    def to_line(self) -> str:
        if self.kind not in EVENT_KINDS:
            raise LogFormatError(f"unknown event kind {self.kind!r}")
        return json.dumps(
            {"kind": self.kind, "node_id": self.node_id, "payload": self.payload, "ts_ms": self.ts_ms},
            sort_keys=True,
            separators=(",", ":"),
        )

    @staticmethod
    def from_line(line: str, path: str | None = None, line_no: int | None = None) -> "EventRecord":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"invalid JSON: {exc}", path, line_no) from exc
        if not isinstance(obj, dict):
            raise LogFormatError("event line is not a JSON object", path, line_no)
        try:
            kind = obj["kind"]
            node_id = obj["node_id"]
            payload = obj["payload"]
            ts_ms = obj["ts_ms"]
        except KeyError as exc:
            raise LogFormatError(f"missing field {exc.args[0]!r}", path, line_no) from exc
        if kind not in EVENT_KINDS:
            raise LogFormatError(f"unknown event kind {kind!r}", path, line_no)
        if not isinstance(node_id, int) or not isinstance(ts_ms, int) or not isinstance(payload, dict):
            raise LogFormatError("field types must be (kind: str, node_id: int, payload: object, ts_ms: int)", path, line_no)
        return EventRecord(ts_ms=ts_ms, node_id=node_id, kind=kind, payload=payload)


class EventLogWriter:
    """Single-writer append log for one node and run.

    Every append is flushed. Write failures (disk full and kin) flip the
    ``degraded`` flag instead of taking the node down.
    """

    def __init__(self, path: str):
        self.path = path
        self.degraded = False
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self._fh = open(path, "w", encoding="utf-8")

    def append(self, record: EventRecord) -> None:
        if self._fh is None:
            return
        try:
            self._fh.write(record.to_line() + "\n")
            self._fh.flush()
        except OSError:
            self.degraded = True

    def close(self) -> None:
        if self._fh is not None:
            try:
                self._fh.close()
            except OSError:
                self.degraded = True
            self._fh = None


def node_log_path(data_dir: str, experiment_id: int, run_id: str, node_id: int) -> str:
    return os.path.join(data_dir, str(experiment_id), str(run_id), f"node-{node_id}.jsonl")


@dataclass(frozen=True)
class RunMetrics:
    """Per-node consensus statistics over one run, as shown on the info panel."""

    total_canonical: int
    contributions: dict[int, float]
    leader: int | None
    leader_pct: float
    own_pct: float
    uncle_count: int
    uncle_rate: float
    head_height: int

    def to_json(self) -> dict:
        return {
            "total_canonical": self.total_canonical,
            "contributions": {str(k): v for k, v in sorted(self.contributions.items())},
            "leader": self.leader,
            "leader_pct": self.leader_pct,
            "own_pct": self.own_pct,
            "uncle_count": self.uncle_count,
            "uncle_rate": self.uncle_rate,
            "head_height": self.head_height,
        }

    @staticmethod
    def from_json(obj: dict) -> "RunMetrics":
        return RunMetrics(
            total_canonical=obj["total_canonical"],
            contributions={int(k): float(v) for k, v in obj["contributions"].items()},
            leader=obj["leader"],
            leader_pct=float(obj["leader_pct"]),
            own_pct=float(obj["own_pct"]),
            uncle_count=obj["uncle_count"],
            uncle_rate=float(obj["uncle_rate"]),
            head_height=obj["head_height"],
        )


def contribution_percentages(counts: dict[int, int]) -> dict[int, float]:
    """Counts to one-decimal percentages that sum to exactly 100.0.

    Largest-remainder apportionment in tenths of a percent; remainder ties go
    to the lower node id. Plain per-entry rounding can drift the sum by
    several tenths, which would break the panel's 100% invariant.
    """
    total = sum(counts.values())
    if total == 0:
        return {}
    tenths = {k: 1000 * c / total for k, c in counts.items()}
    floors = {k: int(v) for k, v in tenths.items()}
    leftover = 1000 - sum(floors.values())
    by_remainder = sorted(counts, key=lambda k: (-(tenths[k] - floors[k]), k))
    for k in by_remainder[:leftover]:
        floors[k] += 1
    return {k: floors[k] / 10 for k in counts}


def metrics_from_graph(
    head: bytes,
    genesis: bytes,
    blocks: dict[bytes, tuple[bytes, int, int]],
    self_id: int,
) -> RunMetrics:
    """Derive RunMetrics from a block graph of hash -> (parent, miner_id, height).

    Shared by the live tree path and log replay so both produce identical
    numbers. ``blocks`` holds every known non-genesis block.
    """
    canonical: list[bytes] = []
    cur = head
    while cur != genesis:
        canonical.append(cur)
        cur = blocks[cur][0]
    canonical.reverse()

    counts: dict[int, int] = {}
    for h in canonical:
        miner = blocks[h][1]
        counts[miner] = counts.get(miner, 0) + 1

    total = len(canonical)
    contributions = contribution_percentages(counts)
    leader = None
    leader_pct = 0.0
    if contributions:
        leader = min(contributions, key=lambda k: (-contributions[k], k))
        leader_pct = contributions[leader]

    uncle_count = len(blocks) - total
    uncle_rate = uncle_count / (uncle_count + total) if (uncle_count + total) > 0 else 0.0
    head_height = blocks[head][2] if head != genesis else 0

    return RunMetrics(
        total_canonical=total,
        contributions=contributions,
        leader=leader,
        leader_pct=leader_pct,
        own_pct=contributions.get(self_id, 0.0),
        uncle_count=uncle_count,
        uncle_rate=uncle_rate,
        head_height=head_height,
    )


def compute_node_metrics(tree: BlockTree, self_id: int) -> RunMetrics:
    """RunMetrics for one node's current tree. Pure: never mutates the tree."""
    graph = {
        h: (b.header.parent_hash, b.header.miner_id, b.header.height)
        for h, b in tree.blocks.items()
        if h != tree.genesis
    }
    return metrics_from_graph(tree.head, tree.genesis, graph, self_id)


@dataclass
class NodeTimeline:
    """One node's reconstructed run: its head movements and final metrics."""

    node_id: int
    genesis: str | None = None
    epoch_wall_ms: int | None = None
    head_sequence: list[tuple[int, str]] = field(default_factory=list)
    final_head: str | None = None
    metrics: RunMetrics | None = None
    blocks: dict[str, tuple[str, int, int]] = field(default_factory=dict)


@dataclass
class ReplayResult:
    events: list[EventRecord]
    nodes: dict[int, NodeTimeline]
    warnings: list[str]


def read_log(path: str, strict: bool = True) -> tuple[list[EventRecord], list[str]]:
    records: list[EventRecord] = []
    warnings: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                records.append(EventRecord.from_line(line, path, line_no))
            except LogFormatError as exc:
                if strict:
                    raise
                warnings.append(str(exc))
    return records, warnings


def replay(paths: list[str], strict: bool = True) -> ReplayResult:
    """Rebuild a run from per-node logs: merged timeline, per-node head
    sequences, and final metrics. Deterministic for a given set of files.

    Merging uses each node's wall-clock epoch from its run-start record so
    timestamps from different machines line up; ties sort by node id.
    """
    per_file: list[list[EventRecord]] = []
    warnings: list[str] = []
    for path in paths:
        records, warns = read_log(path, strict=strict)
        per_file.append(records)
        warnings.extend(warns)

    nodes: dict[int, NodeTimeline] = {}
    all_events: list[EventRecord] = []
    for records in per_file:
        for rec in records:
            all_events.append(rec)
            timeline = nodes.setdefault(rec.node_id, NodeTimeline(node_id=rec.node_id))
            _apply_record(timeline, rec)

    for timeline in nodes.values():
        _finalize(timeline)

    epochs = {n: t.epoch_wall_ms or 0 for n, t in nodes.items()}
    all_events.sort(key=lambda r: (epochs.get(r.node_id, 0) + r.ts_ms, r.node_id))
    return ReplayResult(events=all_events, nodes=nodes, warnings=warnings)


def _apply_record(timeline: NodeTimeline, rec: EventRecord) -> None:
    p = rec.payload
    if rec.kind == "run-start":
        timeline.genesis = p.get("genesis")
        timeline.epoch_wall_ms = p.get("epoch_wall_ms")
        if timeline.genesis:
            timeline.head_sequence.append((rec.ts_ms, timeline.genesis))
    elif rec.kind in ("mined", "received"):
        timeline.blocks[p["hash"]] = (p["parent"], p["miner_id"], p["height"])
    elif rec.kind in ("head-change", "reorg"):
        timeline.head_sequence.append((rec.ts_ms, p["new_head"]))


def _finalize(timeline: NodeTimeline) -> None:
    if timeline.head_sequence:
        timeline.final_head = timeline.head_sequence[-1][1]
    elif timeline.genesis:
        timeline.final_head = timeline.genesis
    if timeline.genesis is None or timeline.final_head is None:
        return
    graph = {
        bytes.fromhex(h): (bytes.fromhex(parent), miner, height)
        for h, (parent, miner, height) in timeline.blocks.items()
    }
    timeline.metrics = metrics_from_graph(
        bytes.fromhex(timeline.final_head),
        bytes.fromhex(timeline.genesis),
        graph,
        timeline.node_id,
    )
