"""Command line entry points: node and orchestrator daemons, headless runs.

Exit codes: 0 success, 1 spec validation failure, 2 usage or environment
problem (bad flags, port in use, unreadable spec file), 3 aborted run.
"""

from __future__ import annotations

import argparse
import errno
import json
import os
import signal
import sys
import threading
import time

from powlab.httpjson import get_json, post_json
from powlab.node import Node
from powlab.orchestrator import Orchestrator

POLL_INTERVAL_S = 1.0


def _parse_listen(value: str) -> tuple[str, int]:
    """Accept host:port, :port, or bare port; empty host means loopback."""
    host, sep, port = value.rpartition(":")
    if not sep:
        host, port = "", value
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid listen address {value!r}") from None


def _default_data_dir(flag_value: str | None) -> str:
    return flag_value or os.environ.get("POWLAB_DATA_DIR") or "powlab-data"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powlab",
        description="Proof-of-work consensus testbed: nodes, orchestrator, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    node_p = sub.add_parser("node", help="run one blockchain node")
    node_p.add_argument("--node-id", type=int, required=True, help="unique 16-bit node id")
    node_p.add_argument("--p2p-listen", type=_parse_listen, default=("127.0.0.1", 0), metavar="HOST:PORT")
    node_p.add_argument("--rpc-listen", type=_parse_listen, default=("127.0.0.1", 0), metavar="HOST:PORT")
    node_p.add_argument("--orchestrator-url", default=None, help="register and heartbeat here")
    node_p.add_argument("--data-dir", default=None, help="event log directory (env POWLAB_DATA_DIR)")

    orch_p = sub.add_parser("orchestrator", help="run the control plane")
    orch_p.add_argument("--listen", type=_parse_listen, default=("127.0.0.1", 8080), metavar="HOST:PORT")
    orch_p.add_argument("--data-dir", default=None, help="run record directory (env POWLAB_DATA_DIR)")
    orch_p.add_argument("--ui-dir", default=None, help="static control UI build to serve under /ui")

    exp_p = sub.add_parser("experiment", help="headless experiment execution")
    exp_sub = exp_p.add_subparsers(dest="experiment_command", required=True)
    run_p = exp_sub.add_parser("run", help="submit a spec file and wait for all repetitions")
    run_p.add_argument("spec_file", help="ExperimentSpec JSON file")
    run_p.add_argument("--orchestrator", default="http://127.0.0.1:8080")
    run_p.add_argument("--json", action="store_true", help="print machine-readable metrics")

    report_p = sub.add_parser("report", help="print the metrics table for a recorded run")
    report_p.add_argument("run_id")
    report_p.add_argument("--orchestrator", default="http://127.0.0.1:8080")
    report_p.add_argument("--data-dir", default=None, help="read records from disk instead of HTTP")
    report_p.add_argument("--json", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    if args.command == "node":
        return cmd_node(args)
    if args.command == "orchestrator":
        return cmd_orchestrator(args)
    if args.command == "experiment":
        return cmd_experiment_run(args)
    if args.command == "report":
        return cmd_report(args)
    return 2


def _wait_forever() -> None:
    done = threading.Event()

    def handler(signum, frame):
        done.set()

    signal.signal(signal.SIGTERM, handler)
    signal.signal(signal.SIGINT, handler)
    while not done.is_set():
        done.wait(0.2)


def cmd_node(args) -> int:
    if not (0 <= args.node_id < 65536):
        print(f"powlab node: --node-id must be in [0, 65535], got {args.node_id}", file=sys.stderr)
        return 2
    node = Node(
        node_id=args.node_id,
        p2p_listen=args.p2p_listen,
        rpc_listen=args.rpc_listen,
        orchestrator_url=args.orchestrator_url,
        data_dir=_default_data_dir(args.data_dir),
    )
    try:
        node.start()
    except OSError as exc:
        if exc.errno in (errno.EADDRINUSE, errno.EACCES, errno.EADDRNOTAVAIL):
            print(f"powlab node: cannot bind listen address: {exc}", file=sys.stderr)
            return 2
        raise
    print(f"node {args.node_id} p2p={node.p2p_address} rpc={node.rpc_address}", flush=True)
    try:
        _wait_forever()
    finally:
        node.close()
    return 0


def cmd_orchestrator(args) -> int:
    orch = Orchestrator(
        listen=args.listen,
        data_dir=_default_data_dir(args.data_dir),
        ui_dir=args.ui_dir,
    )
    try:
        orch.start()
    except OSError as exc:
        if exc.errno in (errno.EADDRINUSE, errno.EACCES, errno.EADDRNOTAVAIL):
            print(f"powlab orchestrator: cannot bind listen address: {exc}", file=sys.stderr)
            return 2
        raise
    print(f"orchestrator {orch.url} data={orch.data_dir}", flush=True)
    try:
        _wait_forever()
    finally:
        orch.close()
    return 0


def cmd_experiment_run(args) -> int:
    try:
        with open(args.spec_file, encoding="utf-8") as fh:
            spec = json.load(fh)
    except OSError as exc:
        print(f"powlab experiment run: cannot read spec file: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"powlab experiment run: spec file is not valid JSON: {exc}", file=sys.stderr)
        return 2

    base_url = args.orchestrator.rstrip("/")
    try:
        status, body = post_json(base_url + "/api/experiments", spec, timeout=10.0)
    except OSError as exc:
        print(f"powlab experiment run: orchestrator unreachable: {exc}", file=sys.stderr)
        return 2
    if status != 200 or not body.get("ok"):
        print("spec validation failed:", file=sys.stderr)
        for v in body.get("violations", [{"field": "", "reason": f"HTTP {status}"}]):
            print(f"  {v.get('field', '')}: {v.get('reason', '')}", file=sys.stderr)
        return 1
    base = body["experiment_id"]

    status, body = post_json(base_url + f"/api/experiments/{base}/start", {}, timeout=10.0)
    if status != 200:
        print(f"powlab experiment run: start refused: {body.get('error')}", file=sys.stderr)
        return 1

    repetitions = int(spec.get("repetitions", 1))
    duration = int(spec.get("duration_s", 30))
    # generous ceiling: per rep, lead-in + run + convergence + collection
    deadline = time.time() + repetitions * (duration + 45) + 60
    view = None
    while time.time() < deadline:
        time.sleep(POLL_INTERVAL_S)
        try:
            status, view = get_json(base_url + f"/api/experiments/{base}/runs", timeout=10.0)
        except OSError:
            continue
        if status == 200 and view.get("status") in ("complete", "aborted"):
            break
    if view is None or view.get("status") not in ("complete", "aborted"):
        print("powlab experiment run: timed out waiting for the experiment", file=sys.stderr)
        return 3

    runs = view.get("runs", [])
    if args.json:
        print(json.dumps(runs, indent=2, sort_keys=True))
    else:
        print(format_runs_table(runs))
    return 0 if view["status"] == "complete" and len(runs) == repetitions else 3


def format_runs_table(runs: list[dict]) -> str:
    headers = ["run", "head_height", "leader", "leader_pct", "uncle_rate", "converged"]
    rows = []
    for record in runs:
        agg = record.get("aggregate") or {}
        rows.append(
            [
                str(record.get("run_id", "?")),
                str(agg.get("head_height", "-")),
                "-" if agg.get("leader") is None else str(agg["leader"]),
                "-" if agg.get("leader_pct") is None else f"{agg['leader_pct']:.1f}",
                "-" if agg.get("uncle_rate") is None else f"{agg['uncle_rate']:.3f}",
                str(agg.get("converged", "-")),
            ]
        )
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines)


def cmd_report(args) -> int:
    record = None
    if args.data_dir:
        record = _record_from_disk(_default_data_dir(args.data_dir), args.run_id)
        if record is None:
            print(f"powlab report: run {args.run_id} not found under {args.data_dir}", file=sys.stderr)
            return 2
    else:
        base_url = args.orchestrator.rstrip("/")
        try:
            status, agg = get_json(base_url + f"/api/runs/{args.run_id}/metrics", timeout=10.0)
        except OSError as exc:
            print(f"powlab report: orchestrator unreachable: {exc}", file=sys.stderr)
            return 2
        if status != 200:
            print(f"powlab report: run {args.run_id} not found", file=sys.stderr)
            return 2
        record = {"run_id": args.run_id, "aggregate": agg}

    if args.json:
        print(json.dumps(record, indent=2, sort_keys=True))
        return 0
    agg = record.get("aggregate") or {}
    print(format_runs_table([record]))
    contributions = agg.get("contributions") or {}
    if contributions:
        print("\ncontributions:")
        for nid in sorted(contributions, key=int):
            print(f"  node {nid}: {contributions[nid]:.1f}%")
    return 0


def _record_from_disk(data_dir: str, run_id: str) -> dict | None:
    base = run_id.rsplit("-", 1)[0]
    path = os.path.join(data_dir, base, run_id, "record.json")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError):
        return None


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
