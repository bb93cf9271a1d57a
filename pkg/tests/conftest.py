"""Fixtures: in-process nodes and orchestrators with reliable teardown."""

import pytest

from powlab.node import Node
from powlab.orchestrator import Orchestrator

from helpers import http_json, wait_until


@pytest.fixture
def make_node(tmp_path):
    """Factory for started in-process nodes; closes them all afterwards."""
    created = []

    def factory(node_id: int, **kwargs) -> Node:
        kwargs.setdefault("data_dir", str(tmp_path / f"node-{node_id}"))
        node = Node(node_id, **kwargs)
        node.start()
        created.append(node)
        return node

    yield factory
    for node in reversed(created):
        node.close()


@pytest.fixture
def orchestrator(tmp_path):
    orch = Orchestrator(("127.0.0.1", 0), data_dir=str(tmp_path / "orch"))
    orch.start()
    yield orch
    orch.close()


@pytest.fixture
def cluster(orchestrator, make_node):
    """Orchestrator plus a node factory that auto-registers against it."""

    class Cluster:
        def __init__(self):
            self.orch = orchestrator
            self.nodes = {}

        def add_node(self, node_id: int, **kwargs) -> Node:
            node = make_node(node_id, orchestrator_url=self.orch.url, **kwargs)
            self.nodes[node_id] = node
            return node

        def wait_registered(self, count: int, timeout: float = 10.0):
            def registered():
                status, body = http_json("GET", self.orch.url + "/api/nodes")
                return status == 200 and len(body.get("nodes", [])) >= count

            wait_until(registered, timeout, desc=f"{count} nodes registered")

        def submit(self, spec):
            return http_json("POST", self.orch.url + "/api/experiments", spec)

        def start(self, experiment_id: int):
            return http_json("POST", f"{self.orch.url}/api/experiments/{experiment_id}/start")

        def stop(self, experiment_id: int):
            return http_json("POST", f"{self.orch.url}/api/experiments/{experiment_id}/stop")

        def runs_view(self, experiment_id: int):
            status, body = http_json("GET", f"{self.orch.url}/api/experiments/{experiment_id}/runs")
            assert status == 200, body
            return body

        def wait_finished(self, experiment_id: int, timeout: float):
            def finished():
                view = self.runs_view(experiment_id)
                return view if view.get("status") in ("complete", "aborted") else None

            return wait_until(finished, timeout, interval=0.5,
                              desc=f"experiment {experiment_id} to finish")

    return Cluster()


def two_node_spec(experiment_id: int, *, duration_s: int = 6, difficulty: int = 4000,
                  repetitions: int = 1, delay_ms: int = 0,
                  node_ids=(1, 2), workers=None) -> dict:
    """A small fully-connected ExperimentSpec used across integration tests."""
    ids = list(node_ids)
    if workers is None:
        workers = {nid: 1 for nid in ids}
    palette = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0"]
    return {
        "experiment_id": experiment_id,
        "duration_s": duration_s,
        "repetitions": repetitions,
        "difficulty": difficulty,
        "nodes": {
            str(nid): {
                "worker_count": workers.get(nid, 1),
                "attempts_per_sec_per_worker": 5000,
                "outbound_delay_ms": delay_ms,
                "color": palette[idx % len(palette)],
            }
            for idx, nid in enumerate(ids)
        },
        "topology": {
            "adjacency": {str(nid): [p for p in ids if p != nid] for nid in ids}
        },
    }
