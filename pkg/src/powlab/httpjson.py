"""Tiny urllib wrappers for JSON-over-HTTP used across processes."""

from __future__ import annotations

import json
import urllib.error
import urllib.request

DEFAULT_TIMEOUT_S = 10.0


def post_json(url: str, payload: dict, timeout: float = DEFAULT_TIMEOUT_S) -> tuple[int, dict]:
    """POST a JSON body, return (status, parsed response body).

    Network-level failures raise OSError/URLError; HTTP error statuses are
    returned, not raised, so callers can inspect the body.
    """
    data = json.dumps(payload).encode()
    req = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, _parse(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, _parse(err.read())


def get_json(url: str, timeout: float = DEFAULT_TIMEOUT_S) -> tuple[int, dict]:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.status, _parse(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, _parse(err.read())


def get_text(url: str, timeout: float = DEFAULT_TIMEOUT_S) -> tuple[int, str]:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.status, resp.read().decode("utf-8", errors="replace")
    except urllib.error.HTTPError as err:
        return err.code, err.read().decode("utf-8", errors="replace")


def _parse(raw: bytes) -> dict:
    if not raw:
        return {}
    try:
        parsed = json.loads(raw)
    except ValueError:
        return {}
    return parsed if isinstance(parsed, dict) else {"value": parsed}
