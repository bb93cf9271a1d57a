"""Master control plane: node registry, experiment validation and execution.

Registration is push-based with heartbeats. Experiments run one at a time;
each repetition derives its own experiment id (base + repetition index) so
every run gets a fresh genesis and blocks can never replay across runs. Run
records are written once, then never touched again.
"""

from __future__ import annotations

import json
import math
import mimetypes
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from powlab.eventlog import RunMetrics, replay
from powlab.httpjson import get_json, get_text, post_json

HEARTBEAT_EXPECTED_S = 5.0
UNREACHABLE_AFTER_S = 15.0
START_LEAD_MS = 3000
AGREEMENT_SAMPLE_S = 1.0
CONVERGENCE_POLL_S = 0.25
CONVERGENCE_WINDOW_S = 12.0
LOG_COLLECT_TIMEOUT_S = 10.0

PRESET_NAMES = ("fully-connected", "ring", "star", "two-islands", "eclipse", "majority-51")

PALETTE = [
    "#e6194b",
    "#3cb44b",
    "#4363d8",
    "#f58231",
    "#911eb4",
    "#46f0f0",
    "#f032e6",
    "#bcf60c",
    "#fabebe",
    "#008080",
]

_ZERO_METRICS = RunMetrics(
    total_canonical=0,
    contributions={},
    leader=None,
    leader_pct=0.0,
    own_pct=0.0,
    uncle_count=0,
    uncle_rate=0.0,
    head_height=0,
)


class Registry:
    """Known nodes with freshness tracking. Thread-safe."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[int, dict] = {}

    def register(self, payload: dict) -> tuple[bool, str | None]:
        if not isinstance(payload, dict):
            return False, "announcement must be a JSON object"
        node_id = payload.get("node_id")
        p2p = payload.get("p2p_address")
        rpc = payload.get("rpc_address")
        if isinstance(node_id, bool) or not isinstance(node_id, int) or not (0 <= node_id < 65536):
            return False, "node_id must be an integer in [0, 65535]"
        if not isinstance(p2p, str) or ":" not in p2p:
            return False, "p2p_address must be host:port"
        if not isinstance(rpc, str) or not rpc.startswith("http"):
            return False, "rpc_address must be an http URL"
        now = time.time()
        with self._lock:
            current = self._entries.get(node_id)
            if (
                current is not None
                and (current["p2p_address"] != p2p or current["rpc_address"] != rpc)
                and now - current["last_seen"] <= UNREACHABLE_AFTER_S
            ):
                return False, "identity conflict: node_id is registered from a different address"
            self._entries[node_id] = {
                "node_id": node_id,
                "p2p_address": p2p,
                "rpc_address": rpc,
                "last_seen": now,
            }
        return True, None

    def heartbeat(self, node_id) -> bool:
        with self._lock:
            entry = self._entries.get(node_id)
            if entry is None:
                return False
            entry["last_seen"] = time.time()
            return True

    def get(self, node_id: int) -> dict | None:
        with self._lock:
            entry = self._entries.get(node_id)
            return dict(entry) if entry else None

    def is_reachable(self, node_id: int) -> bool:
        with self._lock:
            entry = self._entries.get(node_id)
            return entry is not None and time.time() - entry["last_seen"] <= UNREACHABLE_AFTER_S

    def snapshot(self) -> list[dict]:
        now = time.time()
        with self._lock:
            return [
                {
                    "node_id": e["node_id"],
                    "p2p_address": e["p2p_address"],
                    "rpc_address": e["rpc_address"],
                    "reachable": now - e["last_seen"] <= UNREACHABLE_AFTER_S,
                    "last_seen_s": round(now - e["last_seen"], 1),
                }
                for e in sorted(self._entries.values(), key=lambda e: e["node_id"])
            ]


# -- topology and presets ------------------------------------------------


def build_adjacency(
    name: str, node_ids: list[int], victim: int | None = None, attacker: int | None = None
) -> dict[int, list[int]]:
    ids = sorted(set(node_ids))
    if name in ("fully-connected", "majority-51"):
        return {i: [j for j in ids if j != i] for i in ids}
    if name == "ring":
        n = len(ids)
        return {ids[k]: sorted({ids[(k - 1) % n], ids[(k + 1) % n]}) for k in range(n)}
    if name == "star":
        hub = ids[0]
        adj = {hub: [i for i in ids if i != hub]}
        for i in ids[1:]:
            adj[i] = [hub]
        return adj
    if name == "two-islands":
        mid = (len(ids) + 1) // 2
        islands = [ids[:mid], ids[mid:]]
        adj = {}
        for island in islands:
            for i in island:
                adj[i] = [j for j in island if j != i]
        return adj
    if name == "eclipse":
        v = victim if victim is not None else ids[0]
        if v not in ids:
            raise ValueError(f"victim {v} is not in the node set")
        honest = [i for i in ids if i != v]
        adj = {i: [j for j in honest if j != i] for i in honest}
        if attacker is not None:
            if attacker not in honest:
                raise ValueError(f"attacker {attacker} is not an eligible node")
            adj[v] = [attacker]
        else:
            adj[v] = []
        return adj
    raise ValueError(f"unknown preset {name!r}")


def majority_worker_count(others_total_workers: int) -> int:
    """Smallest worker count giving >= 51% of the combined hashrate."""
    w = math.ceil(51 * others_total_workers / 49)
    while w / (w + others_total_workers) < 0.51:
        w += 1
    return w


def scenario_preset(
    name: str,
    node_ids: list[int],
    base_params: dict | None = None,
    victim: int | None = None,
    attacker: int | None = None,
) -> dict:
    """Build a complete ExperimentSpec for a named scenario."""
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; expected one of {', '.join(PRESET_NAMES)}")
    ids = sorted(set(node_ids))
    minimum = 3 if name in ("ring", "star", "eclipse") else 2
    if len(ids) < minimum:
        raise ValueError(f"preset {name} needs at least {minimum} nodes, got {len(ids)}")
    base = dict(base_params or {})
    worker_count = int(base.get("worker_count", 1))
    attempts = int(base.get("attempts_per_sec_per_worker", 5000))
    delay = int(base.get("outbound_delay_ms", 0))

    nodes = {}
    for idx, nid in enumerate(ids):
        nodes[nid] = {
            "worker_count": worker_count,
            "attempts_per_sec_per_worker": attempts,
            "outbound_delay_ms": delay,
            "color": PALETTE[idx % len(PALETTE)],
        }
    if name == "majority-51":
        strong = attacker if attacker is not None else ids[0]
        if strong not in nodes:
            raise ValueError(f"attacker {strong} is not in the node set")
        others = sum(n["worker_count"] for i, n in nodes.items() if i != strong)
        if others < 1:
            raise ValueError("majority-51 needs at least one honest worker")
        nodes[strong]["worker_count"] = majority_worker_count(others)

    return {
        "experiment_id": int(base.get("experiment_id", 1000)),
        "duration_s": int(base.get("duration_s", 30)),
        "repetitions": int(base.get("repetitions", 1)),
        "difficulty": int(base.get("difficulty", 25000)),
        "nodes": {str(nid): cfg for nid, cfg in nodes.items()},
        "topology": {
            "adjacency": {
                str(k): v
                for k, v in sorted(
                    build_adjacency(name, ids, victim=victim, attacker=attacker).items()
                )
            }
        },
    }


# -- spec validation -----------------------------------------------------


def validate_spec(spec, registry: Registry | None = None) -> tuple[list[dict], dict | None]:
    """Check an ExperimentSpec; returns (violations, normalized spec).

    Normalized form uses integer node ids. With a registry, referenced nodes
    must also be registered and reachable.
    """
    violations: list[dict] = []

    def bad(fld, reason):
        violations.append({"field": fld, "reason": reason})

    if not isinstance(spec, dict):
        return [{"field": "", "reason": "spec must be a JSON object"}], None

    def want_int(fld, minimum):
        v = spec.get(fld)
        if isinstance(v, bool) or not isinstance(v, int):
            bad(fld, "must be an integer")
            return None
        if v < minimum:
            bad(fld, f"must be >= {minimum}")
            return None
        return v

    experiment_id = want_int("experiment_id", 0)
    duration_s = want_int("duration_s", 5)
    repetitions = want_int("repetitions", 1)
    difficulty = want_int("difficulty", 1)

    raw_nodes = spec.get("nodes")
    nodes: dict[int, dict] = {}
    if not isinstance(raw_nodes, dict) or not raw_nodes:
        bad("nodes", "must be a non-empty map of node_id to settings")
    else:
        for key, cfg in raw_nodes.items():
            try:
                nid = int(key)
            except (TypeError, ValueError):
                bad(f"nodes.{key}", "node id must be an integer")
                continue
            if not (0 <= nid < 65536):
                bad(f"nodes.{key}", "node id must fit 16 bits")
                continue
            if not isinstance(cfg, dict):
                bad(f"nodes.{key}", "settings must be an object")
                continue
            entry = {
                "worker_count": cfg.get("worker_count", 1),
                "attempts_per_sec_per_worker": cfg.get("attempts_per_sec_per_worker", 5000),
                "outbound_delay_ms": cfg.get("outbound_delay_ms", 0),
                "color": cfg.get("color", PALETTE[len(nodes) % len(PALETTE)]),
            }
            for fld, minimum in (
                ("worker_count", 0),
                ("attempts_per_sec_per_worker", 1),
                ("outbound_delay_ms", 0),
            ):
                v = entry[fld]
                if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
                    bad(f"nodes.{key}.{fld}", f"must be an integer >= {minimum}")
            if not isinstance(entry["color"], str):
                bad(f"nodes.{key}.color", "must be a string")
            nodes[nid] = entry

    if nodes:
        colors = [n["color"] for n in nodes.values() if isinstance(n["color"], str)]
        if len(set(colors)) != len(colors):
            bad("nodes", "colors must be unique per node")
        if not any(
            isinstance(n["worker_count"], int) and n["worker_count"] >= 1 for n in nodes.values()
        ):
            bad("nodes", "no miners: at least one node needs worker_count >= 1")

    topology = spec.get("topology")
    adjacency: dict[int, list[int]] = {}
    if not isinstance(topology, dict) or not isinstance(topology.get("adjacency"), dict):
        bad("topology.adjacency", "must be a map of node_id to peer list")
    else:
        for key, peers in topology["adjacency"].items():
            try:
                nid = int(key)
            except (TypeError, ValueError):
                bad(f"topology.adjacency.{key}", "node id must be an integer")
                continue
            if nid not in nodes:
                bad(f"topology.adjacency.{key}", "unknown node")
                continue
            if not isinstance(peers, list):
                bad(f"topology.adjacency.{key}", "peer list must be an array")
                continue
            cleaned = []
            for p in peers:
                try:
                    pid = int(p)
                except (TypeError, ValueError):
                    bad(f"topology.adjacency.{key}", f"peer {p!r} is not an integer")
                    continue
                if pid == nid:
                    bad(f"topology.adjacency.{key}", "self-loops are not allowed")
                elif pid not in nodes:
                    bad(f"topology.adjacency.{key}", f"unknown peer node {pid}")
                else:
                    cleaned.append(pid)
            adjacency[nid] = cleaned

    if registry is not None:
        for nid in sorted(nodes):
            entry = registry.get(nid)
            if entry is None:
                bad(f"nodes.{nid}", "unknown node: not registered")
            elif not registry.is_reachable(nid):
                bad(f"nodes.{nid}", "node unreachable (no recent heartbeat)")

    if violations:
        return violations, None
    return [], {
        "experiment_id": experiment_id,
        "duration_s": duration_s,
        "repetitions": repetitions,
        "difficulty": difficulty,
        "nodes": nodes,
        "topology": {"adjacency": adjacency},
    }


def symmetric_links(adjacency: dict[int, list[int]]) -> dict[int, set[int]]:
    """Undirected closure: a link listed by either endpoint binds both."""
    links: dict[int, set[int]] = {nid: set() for nid in adjacency}
    for nid, peers in adjacency.items():
        for pid in peers:
            links.setdefault(nid, set()).add(pid)
            links.setdefault(pid, set()).add(nid)
    return links


def aggregate_metrics(log_paths: dict[int, str], reference_node: int) -> dict:
    """Network-level RunMetrics as seen from the reference node's log."""
    result = replay([log_paths[reference_node]], strict=False)
    timeline = result.nodes.get(reference_node)
    metrics = timeline.metrics if timeline is not None and timeline.metrics is not None else _ZERO_METRICS
    out = metrics.to_json()
    out["reference_node"] = reference_node
    return out


# -- experiment execution ------------------------------------------------


class ExperimentRunner(threading.Thread):
    """Executes one experiment's repetitions sequentially."""

    def __init__(self, orch: "Orchestrator", base_id: int, spec: dict):
        super().__init__(daemon=True, name=f"experiment-{base_id}")
        self.orch = orch
        self.base_id = base_id
        self.spec = spec
        self.abort = threading.Event()

    def run(self):
        aborted = False
        try:
            for rep in range(self.spec["repetitions"]):
                if self.abort.is_set():
                    aborted = True
                    break
                record = self._run_once(rep)
                self.orch.store_run(record)
                if record["status"] != "complete":
                    aborted = True
                    break
        finally:
            self.orch.runner_finished(self.base_id, aborted)

    # one repetition, start to persisted record
    def _run_once(self, rep: int) -> dict:
        spec = self.spec
        base = self.base_id
        exp_id = base + rep
        run_id = f"{base}-{rep}"
        ids = sorted(spec["nodes"])
        links = symmetric_links(spec["topology"]["adjacency"])
        record = {
            "experiment_id": base,
            "derived_experiment_id": exp_id,
            "repetition_index": rep,
            "run_id": run_id,
            "status": "running",
            "started_at_ms": None,
            "ended_at_ms": None,
            "nodes": ids,
            "incomplete_nodes": [],
            "agreement_timeline": [],
            "logs": {},
            "aggregate": None,
            "error": None,
        }

        endpoints = {}
        for nid in ids:
            entry = self.orch.registry.get(nid)
            if entry is None:
                record["status"] = "aborted"
                record["error"] = f"node {nid} disappeared from the registry"
                return record
            endpoints[nid] = entry

        slices = {nid: self._slice_for(nid, exp_id, run_id, rep, links, endpoints) for nid in ids}
        ok, err = self._fanout(
            ids, lambda nid: post_json(_control(endpoints[nid], "apply"), slices[nid], timeout=10.0)
        )
        if not ok:
            record["status"] = "aborted"
            record["error"] = f"configure failed: {err}"
            return record

        start_at = _wall_ms() + START_LEAD_MS
        ok, err = self._fanout(
            ids,
            lambda nid: post_json(
                _control(endpoints[nid], "start"), {"start_at_ms": start_at}, timeout=10.0
            ),
        )
        if not ok:
            self._fanout(ids, lambda nid: post_json(_control(endpoints[nid], "stop"), {}, timeout=5.0))
            record["status"] = "aborted"
            record["error"] = f"start failed: {err}"
            return record
        record["started_at_ms"] = start_at

        reference = min(
            (nid for nid in ids if spec["nodes"][nid]["worker_count"] >= 1), default=ids[0]
        )
        end_at = start_at + spec["duration_s"] * 1000
        while _wall_ms() < end_at and not self.abort.is_set():
            self.abort.wait(min(AGREEMENT_SAMPLE_S, max(0.05, (end_at - _wall_ms()) / 1000)))
            if _wall_ms() >= start_at:
                sample = self._sample_agreement(ids, endpoints, reference, start_at)
                if sample is not None:
                    record["agreement_timeline"].append(sample)

        self._fanout(ids, lambda nid: post_json(_control(endpoints[nid], "stop"), {}, timeout=10.0))
        stopped_at = _wall_ms()
        record["ended_at_ms"] = stopped_at
        if self.abort.is_set():
            record["status"] = "aborted"
            record["error"] = "stopped by request"

        converged, convergence_s = self._await_convergence(ids, endpoints, stopped_at)

        log_paths = self._collect_logs(ids, endpoints, base, run_id, record)
        if reference not in log_paths and log_paths:
            reference = min(log_paths)
        if reference in log_paths:
            aggregate = aggregate_metrics(log_paths, reference)
        else:
            aggregate = aggregate_metrics({reference: os.devnull}, reference)
        aggregate["converged"] = converged
        aggregate["convergence_time_s"] = convergence_s
        record["aggregate"] = aggregate

        if record["status"] == "running":
            record["status"] = "complete"
        self._persist(record, base, run_id)
        return record

    def _slice_for(self, nid, exp_id, run_id, rep, links, endpoints) -> dict:
        cfg = self.spec["nodes"][nid]
        peers = []
        for pid in sorted(links.get(nid, ())):
            host, port = endpoints[pid]["p2p_address"].rsplit(":", 1)
            peers.append({"node_id": pid, "host": host, "port": int(port)})
        return {
            "experiment_id": exp_id,
            "base_experiment_id": self.base_id,
            "run_id": run_id,
            "repetition_index": rep,
            "difficulty": self.spec["difficulty"],
            "duration_s": self.spec["duration_s"],
            "worker_count": cfg["worker_count"],
            "attempts_per_sec_per_worker": cfg["attempts_per_sec_per_worker"],
            "outbound_delay_ms": cfg["outbound_delay_ms"],
            "color": cfg["color"],
            "peers": peers,
        }

    def _fanout(self, ids, action) -> tuple[bool, str | None]:
        """Run an HTTP action against every node in parallel; all must succeed."""
        with ThreadPoolExecutor(max_workers=max(1, len(ids))) as pool:
            futures = {nid: pool.submit(action, nid) for nid in ids}
            failure = None
            for nid, fut in futures.items():
                try:
                    status, body = fut.result(timeout=15.0)
                    if status != 200:
                        failure = f"node {nid}: {body.get('error') or f'HTTP {status}'}"
                except Exception as exc:
                    failure = f"node {nid}: {exc}"
            return failure is None, failure

    def _sample_agreement(self, ids, endpoints, reference, start_at) -> dict | None:
        heads = {}
        for nid in ids:
            try:
                status, body = get_json(_control(endpoints[nid], "status"), timeout=2.0)
            except OSError:
                continue
            if status == 200:
                heads[nid] = body.get("head_hash")
        if reference not in heads or not heads:
            return None
        ref_head = heads[reference]
        agree = sum(1 for h in heads.values() if h == ref_head)
        return {
            "t_ms": _wall_ms() - start_at,
            "agreement": round(agree / len(heads), 3),
            "heads": len(heads),
        }

    def _await_convergence(self, ids, endpoints, stopped_at) -> tuple[bool, float | None]:
        deadline = time.monotonic() + CONVERGENCE_WINDOW_S
        while time.monotonic() < deadline:
            heads = {}
            complete = True
            for nid in ids:
                try:
                    status, body = get_json(_control(endpoints[nid], "status"), timeout=2.0)
                except OSError:
                    complete = False
                    break
                if status != 200:
                    complete = False
                    break
                heads[nid] = body.get("head_hash")
            if complete and heads and len(set(heads.values())) == 1:
                return True, round((_wall_ms() - stopped_at) / 1000, 3)
            time.sleep(CONVERGENCE_POLL_S)
        return False, None

    def _collect_logs(self, ids, endpoints, base, run_id, record) -> dict[int, str]:
        run_dir = os.path.join(self.orch.data_dir, str(base), run_id)
        os.makedirs(run_dir, exist_ok=True)
        paths = {}
        for nid in ids:
            url = endpoints[nid]["rpc_address"].rstrip("/") + f"/control/log?run={run_id}"
            try:
                status, text = get_text(url, timeout=LOG_COLLECT_TIMEOUT_S)
            except OSError:
                status, text = 0, ""
            if status != 200:
                record["incomplete_nodes"].append(nid)
                continue
            path = os.path.join(run_dir, f"node-{nid}.jsonl")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
            paths[nid] = path
            record["logs"][str(nid)] = os.path.relpath(path, self.orch.data_dir)
        return paths

    def _persist(self, record, base, run_id):
        run_dir = os.path.join(self.orch.data_dir, str(base), run_id)
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "record.json"), "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _control(entry: dict, action: str) -> str:
    return entry["rpc_address"].rstrip("/") + "/control/" + action


def _wall_ms() -> int:
    return int(time.time() * 1000)


# -- the HTTP surface ----------------------------------------------------


class Orchestrator:
    def __init__(
        self,
        listen: tuple[str, int] = ("127.0.0.1", 0),
        data_dir: str = "powlab-data",
        ui_dir: str | None = None,
    ):
        self.registry = Registry()
        self.data_dir = data_dir
        self.ui_dir = ui_dir
        self.experiments: dict[int, dict] = {}
        self.runs: dict[str, dict] = {}
        self._runner: ExperimentRunner | None = None
        self._lock = threading.RLock()
        self._listen = listen
        self._http: _OrchHTTPServer | None = None
        self.url = ""

    def start(self) -> "Orchestrator":
        os.makedirs(self.data_dir, exist_ok=True)
        self._http = _OrchHTTPServer(tuple(self._listen), self)
        host, port = self._http.server_address[:2]
        self.url = f"http://{host}:{port}"
        threading.Thread(target=self._http.serve_forever, daemon=True, name="orch-http").start()
        return self

    def close(self) -> None:
        with self._lock:
            runner = self._runner
        if runner is not None:
            runner.abort.set()
            runner.join(timeout=30.0)
        if self._http is not None:
            self._http.shutdown()
            self._http.server_close()

    # -- experiment lifecycle (thread-safe) -------------------------------

    def submit_experiment(self, spec) -> tuple[list[dict], int | None]:
        violations, normalized = validate_spec(spec, self.registry)
        if violations:
            return violations, None
        base = normalized["experiment_id"]
        with self._lock:
            existing = self.experiments.get(base)
            if existing is not None and existing["status"] == "running":
                return [{"field": "experiment_id", "reason": "experiment is currently running"}], None
            if existing is not None and existing["run_ids"]:
                return [
                    {
                        "field": "experiment_id",
                        "reason": "already has recorded runs; choose a new experiment_id",
                    }
                ], None
            self.experiments[base] = {"spec": normalized, "status": "idle", "run_ids": []}
        return [], base

    def start_experiment(self, base: int) -> tuple[int, dict]:
        with self._lock:
            exp = self.experiments.get(base)
            if exp is None:
                return 404, {"ok": False, "error": "unknown experiment"}
            if self._runner is not None and self._runner.is_alive():
                return 409, {"ok": False, "error": "another experiment is running"}
            if exp["status"] != "idle":
                return 409, {"ok": False, "error": f"experiment already {exp['status']}"}
            exp["status"] = "running"
            self._runner = ExperimentRunner(self, base, exp["spec"])
            self._runner.start()
        return 200, {"ok": True, "experiment_id": base}

    def stop_experiment(self, base: int) -> tuple[int, dict]:
        with self._lock:
            exp = self.experiments.get(base)
            if exp is None:
                return 404, {"ok": False, "error": "unknown experiment"}
            runner = self._runner
            if runner is None or runner.base_id != base or not runner.is_alive():
                return 200, {"ok": True, "note": "experiment is not running"}
            runner.abort.set()
        return 200, {"ok": True}

    def store_run(self, record: dict) -> None:
        with self._lock:
            self.runs[record["run_id"]] = record
            exp = self.experiments.get(record["experiment_id"])
            if exp is not None and record["run_id"] not in exp["run_ids"]:
                exp["run_ids"].append(record["run_id"])

    def runner_finished(self, base: int, aborted: bool) -> None:
        with self._lock:
            exp = self.experiments.get(base)
            if exp is not None:
                exp["status"] = "aborted" if aborted else "complete"
            if self._runner is not None and self._runner.base_id == base:
                self._runner = None

    def experiment_view(self, base: int) -> dict | None:
        with self._lock:
            exp = self.experiments.get(base)
            if exp is None:
                return None
            return {
                "experiment_id": base,
                "status": exp["status"],
                "spec": _spec_to_json(exp["spec"]),
                "runs": [self.runs[rid] for rid in exp["run_ids"]],
            }

    def run_record(self, run_id: str) -> dict | None:
        with self._lock:
            return self.runs.get(run_id)

    def resolve_ui_dir(self) -> str | None:
        if self.ui_dir and os.path.isdir(self.ui_dir):
            return self.ui_dir
        env = os.environ.get("POWLAB_UI_DIR")
        if env and os.path.isdir(env):
            return env
        for rel in ("frontend/dist", os.path.join("..", "frontend", "dist")):
            path = os.path.abspath(rel)
            if os.path.isdir(path):
                return path
        return None


def _spec_to_json(spec: dict) -> dict:
    return {
        "experiment_id": spec["experiment_id"],
        "duration_s": spec["duration_s"],
        "repetitions": spec["repetitions"],
        "difficulty": spec["difficulty"],
        "nodes": {str(k): v for k, v in sorted(spec["nodes"].items())},
        "topology": {
            "adjacency": {str(k): v for k, v in sorted(spec["topology"]["adjacency"].items())}
        },
    }


class _OrchHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, orch: Orchestrator):
        self.orch = orch
        super().__init__(addr, _OrchRequestHandler)


class _OrchRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    def _body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw) if raw else {}
        except ValueError:
            return None

    def _send_json(self, status: int, obj) -> None:
        data = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_bytes(self, status: int, data: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        orch = self.server.orch
        path = urlparse(self.path).path
        parts = [p for p in path.split("/") if p]
        body = self._body()
        if body is None:
            self._send_json(400, {"ok": False, "error": "invalid JSON body"})
            return

        if path == "/api/nodes/register":
            ok, err = orch.registry.register(body)
            if ok:
                self._send_json(200, {"ok": True})
            else:
                status = 409 if err and err.startswith("identity conflict") else 400
                self._send_json(status, {"ok": False, "error": err})
        elif path == "/api/nodes/heartbeat":
            known = orch.registry.heartbeat(body.get("node_id"))
            self._send_json(200 if known else 404, {"ok": known})
        elif path == "/api/experiments":
            violations, base = orch.submit_experiment(body)
            if violations:
                self._send_json(400, {"ok": False, "violations": violations})
            else:
                self._send_json(200, {"ok": True, "experiment_id": base})
        elif len(parts) == 4 and parts[:2] == ["api", "experiments"] and parts[3] in ("start", "stop"):
            try:
                base = int(parts[2])
            except ValueError:
                self._send_json(404, {"ok": False, "error": "unknown experiment"})
                return
            if parts[3] == "start":
                status, out = orch.start_experiment(base)
            else:
                status, out = orch.stop_experiment(base)
            self._send_json(status, out)
        else:
            self._send_json(404, {"ok": False, "error": "not found"})

    def do_GET(self):
        orch = self.server.orch
        parsed = urlparse(self.path)
        path = parsed.path
        parts = [p for p in path.split("/") if p]

        if path == "/api/nodes":
            self._send_json(200, {"nodes": orch.registry.snapshot()})
        elif len(parts) == 4 and parts[:2] == ["api", "experiments"] and parts[3] == "runs":
            try:
                base = int(parts[2])
            except ValueError:
                self._send_json(404, {"ok": False, "error": "unknown experiment"})
                return
            view = orch.experiment_view(base)
            if view is None:
                self._send_json(404, {"ok": False, "error": "unknown experiment"})
            else:
                self._send_json(200, view)
        elif len(parts) == 4 and parts[:2] == ["api", "runs"] and parts[3] == "metrics":
            record = orch.run_record(parts[2])
            if record is None or record.get("aggregate") is None:
                self._send_json(404, {"ok": False, "error": "no metrics for that run"})
            else:
                self._send_json(200, record["aggregate"])
        elif len(parts) == 5 and parts[:2] == ["api", "runs"] and parts[3] == "logs":
            record = orch.run_record(parts[2])
            rel = record["logs"].get(parts[4]) if record else None
            if rel is None:
                self._send_json(404, {"ok": False, "error": "no log for that node"})
                return
            try:
                with open(os.path.join(orch.data_dir, rel), "rb") as fh:
                    data = fh.read()
            except OSError:
                self._send_json(404, {"ok": False, "error": "log unavailable"})
                return
            self._send_bytes(200, data, "application/x-ndjson")
        elif len(parts) == 3 and parts[:2] == ["api", "presets"]:
            self._preset(parts[2], parse_qs(parsed.query))
        elif path == "/" or path == "/ui" or path.startswith("/ui/"):
            self._static(path)
        else:
            self._send_json(404, {"ok": False, "error": "not found"})

    def _preset(self, name: str, query: dict):
        try:
            raw_nodes = query.get("nodes", [""])[0]
            node_ids = [int(x) for x in raw_nodes.split(",") if x.strip()]
            if not node_ids:
                raise ValueError("nodes query parameter is required, e.g. ?nodes=1,2,3")
            base_params = {}
            for fld in (
                "experiment_id",
                "duration_s",
                "repetitions",
                "difficulty",
                "worker_count",
                "attempts_per_sec_per_worker",
                "outbound_delay_ms",
            ):
                if fld in query:
                    base_params[fld] = int(query[fld][0])
            victim = int(query["victim"][0]) if "victim" in query else None
            attacker = int(query["attacker"][0]) if "attacker" in query else None
            spec = scenario_preset(
                name, node_ids, base_params=base_params, victim=victim, attacker=attacker
            )
        except ValueError as exc:
            self._send_json(400, {"ok": False, "error": str(exc)})
            return
        self._send_json(200, spec)

    def _static(self, path: str):
        ui_dir = self.server.orch.resolve_ui_dir()
        if path in ("/", "/ui"):
            self.send_response(302)
            self.send_header("Location", "/ui/")
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        if ui_dir is None:
            self._send_bytes(
                200,
                b"<!doctype html><title>powlab</title><p>Control UI assets not built. "
                b"See frontend/README.md, or set POWLAB_UI_DIR to a build directory.</p>",
                "text/html",
            )
            return
        rel = path[len("/ui/") :] or "index.html"
        full = os.path.abspath(os.path.join(ui_dir, rel))
        if not full.startswith(os.path.abspath(ui_dir) + os.sep) and full != os.path.abspath(
            os.path.join(ui_dir, "index.html")
        ):
            self._send_json(404, {"ok": False, "error": "not found"})
            return
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        try:
            with open(full, "rb") as fh:
                data = fh.read()
        except OSError:
            self._send_json(404, {"ok": False, "error": "not found"})
            return
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        self._send_bytes(200, data, ctype)
