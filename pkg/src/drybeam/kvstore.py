"""Byte key-value stores backing the rollout cache.

Two backends: an in-process map (default) and a networked store speaking a
minimal text protocol, which lets several worker processes share one cache.

Wire protocol (one request per line-prefixed frame):
    GET <key>\\n                 ->  HIT <len>\\n<bytes>   or   MISS\\n
    SET <key> <len>\\n<bytes>    ->  OK\\n
Keys are canonical JSON without spaces or newlines, so they embed safely.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from collections import OrderedDict


class InMemoryStore:
    """Thread-safe map with optional least-recently-used eviction.

    Eviction never affects correctness, only the hit rate: values are
    deterministic functions of their keys, so a re-miss just re-simulates.
    """

    def __init__(self, max_entries: int | None = None):
        self.max_entries = max_entries
        self._data: OrderedDict[bytes, bytes] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: bytes) -> bytes | None:
        with self._lock:
            value = self._data.get(key)
            if value is not None and self.max_entries is not None:
                self._data.move_to_end(key)
            return value

    def set(self, key: bytes, value: bytes) -> None:
        with self._lock:
            self._data[key] = value
            if self.max_entries is not None:
                self._data.move_to_end(key)
                while len(self._data) > self.max_entries:
                    self._data.popitem(last=False)

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)

    def clear(self) -> None:
        with self._lock:
            self._data.clear()


def _read_line(stream) -> bytes:
    line = stream.readline()
    if not line:
        raise ConnectionError("peer closed connection")
    return line.rstrip(b"\n")


class _KVRequestHandler(socketserver.StreamRequestHandler):
    def handle(self):
        store = self.server.store  # type: ignore[attr-defined]
        while True:
            try:
                line = _read_line(self.rfile)
            except ConnectionError:
                return
            parts = line.split(b" ")
            if parts[0] == b"GET" and len(parts) == 2:
                value = store.get(parts[1])
                if value is None:
                    self.wfile.write(b"MISS\n")
                else:
                    self.wfile.write(b"HIT %d\n" % len(value) + value)
            elif parts[0] == b"SET" and len(parts) == 3:
                length = int(parts[2])
                value = self.rfile.read(length)
                store.set(parts[1], value)
                self.wfile.write(b"OK\n")
            else:
                self.wfile.write(b"ERR\n")
                return


class KVServer:
    """Networked cache server; run one per machine and point workers at it."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, max_entries: int | None = None):
        self.store = InMemoryStore(max_entries=max_entries)
        self._server = socketserver.ThreadingTCPServer((host, port), _KVRequestHandler)
        self._server.daemon_threads = True
        self._server.store = self.store  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address  # type: ignore[return-value]

    def start(self) -> "KVServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


class NetworkedStore:
    """Client for :class:`KVServer`; satisfies the same get/set interface."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self._sock.makefile("rb")
        self._lock = threading.Lock()

    def get(self, key: bytes) -> bytes | None:
        with self._lock:
            self._sock.sendall(b"GET " + key + b"\n")
            header = _read_line(self._rfile)
            if header == b"MISS":
                return None
            if not header.startswith(b"HIT "):
                raise ConnectionError(f"unexpected reply {header!r}")
            length = int(header.split(b" ")[1])
            value = self._rfile.read(length)
            if len(value) != length:
                raise ConnectionError("short read from cache server")
            return value

    def set(self, key: bytes, value: bytes) -> None:
        with self._lock:
            self._sock.sendall(b"SET " + key + b" %d\n" % len(value) + value)
            reply = _read_line(self._rfile)
            if reply != b"OK":
                raise ConnectionError(f"unexpected reply {reply!r}")

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()
