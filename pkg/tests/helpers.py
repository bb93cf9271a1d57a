"""Shared utilities for the test suite: block forging, polling, RPC calls."""

import json
import time
import urllib.request

from powlab.chain import Block, BlockHeader, hash_header, meets_difficulty


def forge(parent: Block, miner_id: int, difficulty: int = 1, timestamp_ms: int = 0,
          experiment_id: int | None = None) -> Block:
    """Build a valid child of ``parent``, searching nonces until PoW passes.

    With difficulty 1 every hash passes, so nonce 0 is always used and forged
    chains are deterministic.
    """
    if experiment_id is None:
        experiment_id = parent.header.experiment_id
    nonce = 0
    while True:
        header = BlockHeader(
            height=parent.header.height + 1,
            parent_hash=parent.hash,
            miner_id=miner_id,
            difficulty=difficulty,
            timestamp_ms=timestamp_ms,
            nonce=nonce,
            experiment_id=experiment_id,
        )
        h = hash_header(header)
        if meets_difficulty(h, difficulty):
            return Block(header=header, hash=h)
        nonce += 1


def wait_until(predicate, timeout: float = 10.0, interval: float = 0.05, desc: str = "condition"):
    """Poll ``predicate`` until it returns a truthy value; fail after timeout."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        value = predicate()
        if value:
            return value
        time.sleep(interval)
    raise AssertionError(f"timed out after {timeout}s waiting for {desc}")


def http_json(method: str, url: str, payload=None, timeout: float = 10.0):
    """Bare HTTP helper returning (status, parsed body); errors never raise."""
    data = None
    headers = {}
    if payload is not None:
        data = json.dumps(payload).encode()
        headers["Content-Type"] = "application/json"
    req = urllib.request.Request(url, data=data, headers=headers, method=method)
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
            status = resp.status
    except urllib.error.HTTPError as err:
        raw = err.read()
        status = err.code
    try:
        body = json.loads(raw)
    except (ValueError, UnicodeDecodeError):
        body = raw.decode(errors="replace")
    return status, body


def http_text(url: str, timeout: float = 10.0):
    """GET returning (status, raw text) with no JSON parsing."""
    req = urllib.request.Request(url, method="GET")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read().decode()
    except urllib.error.HTTPError as err:
        return err.code, err.read().decode()


def rpc_call(rpc_url: str, method: str, params=None, req_id: int = 1):
    """JSON-RPC request returning the full response object."""
    payload = {"jsonrpc": "2.0", "id": req_id, "method": method}
    if params is not None:
        payload["params"] = params
    status, body = http_json("POST", rpc_url, payload)
    assert status == 200, f"rpc {method} -> HTTP {status}: {body}"
    return body


def rpc_result(rpc_url: str, method: str, params=None):
    """JSON-RPC request that must succeed; returns just the result."""
    body = rpc_call(rpc_url, method, params)
    assert "error" not in body, f"rpc {method} failed: {body.get('error')}"
    return body["result"]


def rpc_error(rpc_url: str, method: str, params=None):
    """JSON-RPC request that must fail; returns the error object."""
    body = rpc_call(rpc_url, method, params)
    assert "error" in body, f"rpc {method} unexpectedly succeeded: {body}"
    return body["error"]
