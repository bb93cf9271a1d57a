"""Peer connectivity per configured adjacency, with outbound latency injection.

Links are plain TCP. For each undirected pair the lower node id dials and the
higher accepts, so exactly one connection exists per link. Every outbound
frame is held in a per-link FIFO for the node's configured delay before it is
written to the socket. Received frames are funneled to a single delivery
callback; the owner serializes them however it likes.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass

from powlab.wire import (
    Hello,
    ProtocolError,
    WireMessage,
    encode_frame,
    read_frame,
)

DIAL_RETRY_S = 1.0
CONNECT_TIMEOUT_S = 3.0
HANDSHAKE_TIMEOUT_S = 20.0  # must exceed twice the largest configured delay


@dataclass(frozen=True)
class PeerEndpoint:
    node_id: int
    host: str
    port: int


class Link:
    """One live connection to a peer: a delayed writer and a frame reader."""

    def __init__(self, peer_id: int, sock: socket.socket, delay_ms: int):
        self.peer_id = peer_id
        self.sock = sock
        self.delay_s = delay_ms / 1000
        self.alive = True
        self._outbox: list = []
        self._cond = threading.Condition()
        self._writer = threading.Thread(target=self._write_loop, daemon=True, name=f"link-w-{peer_id}")
        self._writer.start()

    def enqueue(self, frame: bytes) -> None:
        """Schedule a frame for transmission after the configured delay."""
        due = time.monotonic() + self.delay_s
        with self._cond:
            if not self.alive:
                return
            self._outbox.append((due, frame))
            self._cond.notify()

    def _write_loop(self):
        while True:
            with self._cond:
                while self.alive and not self._outbox:
                    self._cond.wait(timeout=0.5)
                if not self.alive:
                    return
                due, frame = self._outbox.pop(0)
            wait = due - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            try:
                self.sock.sendall(frame)
            except OSError:
                self.close()
                return

    def close(self) -> None:
        with self._cond:
            if not self.alive:
                return
            self.alive = False
            self._cond.notify_all()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class PeerManager:
    """Owns the listener, dialers, and live links for one node.

    ``deliver(peer_id, msg)`` is called from reader threads for every frame;
    ``on_link_up(peer_id, hello)`` / ``on_link_down(peer_id)`` report link
    lifecycle. All three must be quick and thread-safe (the node funnels them
    into its event queue).
    """

    def __init__(self, node_id: int, deliver, on_link_up, on_link_down):
        self.node_id = node_id
        self._deliver = deliver
        self._on_link_up = on_link_up
        self._on_link_down = on_link_down
        self._lock = threading.Lock()
        self._links: dict[int, Link] = {}
        self._listener: socket.socket | None = None
        self._generation = 0
        self._closed = False
        # per-experiment expectations, set by configure()
        self._experiment_id: int | None = None
        self._genesis: bytes | None = None
        self._delay_ms = 0
        self._endpoints: dict[int, PeerEndpoint] = {}
        self._hello_source = None

    # -- listener --------------------------------------------------------

    def start_listener(self, host: str, port: int) -> tuple[str, int]:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen(32)
        self._listener = sock
        threading.Thread(target=self._accept_loop, daemon=True, name="p2p-accept").start()
        return sock.getsockname()[:2]

    def _accept_loop(self):
        while True:
            try:
                conn, _addr = self._listener.accept()
            except OSError:
                return
            threading.Thread(
                target=self._handle_inbound, args=(conn,), daemon=True, name="p2p-inbound"
            ).start()

    # -- configuration ---------------------------------------------------

    def configure(
        self,
        experiment_id: int,
        genesis: bytes,
        delay_ms: int,
        peers: list[PeerEndpoint],
        hello_source,
    ) -> None:
        """Tear down existing links and (re)connect for a new run.

        ``hello_source()`` must return ``(head_hash, head_height)`` and be
        callable from connection threads. Dialing targets are the peers with
        a higher node id; lower ids are expected to dial us.
        """
        self.teardown()
        with self._lock:
            self._generation += 1
            generation = self._generation
            self._experiment_id = experiment_id
            self._genesis = genesis
            self._delay_ms = delay_ms
            self._endpoints = {p.node_id: p for p in peers}
            self._hello_source = hello_source
        for peer in peers:
            if self.node_id < peer.node_id:
                self._spawn_dialer(peer, generation)

    def teardown(self) -> None:
        with self._lock:
            self._generation += 1
            links = list(self._links.values())
            self._links.clear()
        for link in links:
            link.close()

    def close(self) -> None:
        with self._lock:
            self._closed = True
        self.teardown()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass

    # -- dialing side (we are the lower node id) -------------------------

    def _spawn_dialer(self, peer: PeerEndpoint, generation: int) -> None:
        threading.Thread(
            target=self._dial_loop,
            args=(peer, generation),
            daemon=True,
            name=f"p2p-dial-{peer.node_id}",
        ).start()

    def _dial_loop(self, peer: PeerEndpoint, generation: int):
        while self._current(generation) and peer.node_id not in self.live_peers():
            sock = None
            try:
                sock = socket.create_connection((peer.host, peer.port), timeout=CONNECT_TIMEOUT_S)
                self._handshake_out(sock, peer, generation)
                return
            except (OSError, ProtocolError, _HelloMismatch):
                if sock is not None:
                    try:
                        sock.close()
                    except OSError:
                        pass
                time.sleep(DIAL_RETRY_S)

    def _handshake_out(self, sock: socket.socket, peer: PeerEndpoint, generation: int):
        link = Link(peer.node_id, sock, self._delay_ms)
        try:
            link.enqueue(encode_frame(self._my_hello()))
            sock.settimeout(HANDSHAKE_TIMEOUT_S)
            msg = read_frame(sock)
            sock.settimeout(None)
            hello = self._check_hello(msg, expect_id=peer.node_id)
            self._adopt_link(link, hello, generation)
        except BaseException:
            link.close()
            raise

    # -- accepting side (we are the higher node id) ----------------------

    def _handle_inbound(self, sock: socket.socket):
        try:
            sock.settimeout(HANDSHAKE_TIMEOUT_S)
            msg = read_frame(sock)
            sock.settimeout(None)
            hello = self._check_hello(msg, expect_lower=True)
            with self._lock:
                generation = self._generation
            link = Link(hello.node_id, sock, self._delay_ms)
            try:
                link.enqueue(encode_frame(self._my_hello()))
                self._adopt_link(link, hello, generation)
            except BaseException:
                link.close()
                raise
        except (OSError, ProtocolError, ConnectionError, _HelloMismatch):
            try:
                sock.close()
            except OSError:
                pass

    # -- shared handshake pieces -----------------------------------------

    def _my_hello(self) -> WireMessage:
        head_hash, head_height = self._hello_source()
        return WireMessage(
            sender=self.node_id,
            body=Hello(
                experiment_id=self._experiment_id,
                genesis_hash=self._genesis,
                head_hash=head_hash,
                head_height=head_height,
                node_id=self.node_id,
            ),
        )

    def _check_hello(self, msg: WireMessage, expect_id: int | None = None, expect_lower: bool = False) -> Hello:
        if not isinstance(msg.body, Hello):
            raise ProtocolError(f"expected hello, got kind {msg.kind}")
        hello = msg.body
        if hello.experiment_id != self._experiment_id or hello.genesis_hash != self._genesis:
            raise _HelloMismatch()
        if expect_id is not None and hello.node_id != expect_id:
            raise _HelloMismatch()
        if expect_lower and (
            hello.node_id >= self.node_id or hello.node_id not in self._endpoints
        ):
            raise _HelloMismatch()
        return hello

    def _adopt_link(self, link: Link, hello: Hello, generation: int):
        with self._lock:
            stale = generation != self._generation or self._closed
            duplicate = link.peer_id in self._links
            if not stale and not duplicate:
                self._links[link.peer_id] = link
        if stale or duplicate:
            link.close()
            if stale:
                raise _HelloMismatch()
            return
        threading.Thread(
            target=self._read_loop, args=(link, generation), daemon=True, name=f"link-r-{link.peer_id}"
        ).start()
        self._on_link_up(link.peer_id, hello)

    def _read_loop(self, link: Link, generation: int):
        try:
            while link.alive:
                msg = read_frame(link.sock)
                self._deliver(link.peer_id, msg)
        except (OSError, ProtocolError, ConnectionError):
            pass
        link.close()
        dropped = False
        with self._lock:
            if self._links.get(link.peer_id) is link:
                del self._links[link.peer_id]
                dropped = True
        if dropped and self._current(generation):
            self._on_link_down(link.peer_id)
            peer = self._endpoints.get(link.peer_id)
            if peer is not None and self.node_id < peer.node_id:
                self._spawn_dialer(peer, generation)

    def _current(self, generation: int) -> bool:
        with self._lock:
            return generation == self._generation and not self._closed

    # -- sending ---------------------------------------------------------

    def send(self, peer_id: int, msg: WireMessage) -> bool:
        with self._lock:
            link = self._links.get(peer_id)
        if link is None:
            return False
        link.enqueue(encode_frame(msg))
        return True

    def broadcast_frame(self, frame: bytes, exclude: int | None = None) -> int:
        with self._lock:
            links = [l for pid, l in self._links.items() if pid != exclude]
        for link in links:
            link.enqueue(frame)
        return len(links)

    def live_peers(self) -> list[int]:
        with self._lock:
            return sorted(self._links)

    def peer_count(self) -> int:
        with self._lock:
            return len(self._links)


class _HelloMismatch(Exception):
    pass
