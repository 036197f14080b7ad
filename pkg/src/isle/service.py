"""Length-prefixed binary protocol for streaming codestream prefixes over TCP.

Request frame::

    "ISLE" | version u8 | opcode u8 | asset_id_len u16 | asset_id | d i8

Response frame::

    "ISLE" | version u8 | status u8 | payload_len u64 | payload

All integers are big-endian.  A connection carries any number of
request/response pairs.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from .codestream import (
    HEADER_SIZE,
    INDEX_ENTRY_SIZE,
    Codestream,
    CodestreamError,
    CodestreamHeader,
    decode_partial,
    parse,
    parse_header,
    serialize,
    truncate,
)
from .scorer import ScorerSpec, score

__all__ = [
    "MAGIC",
    "OP_LIST",
    "OP_HEAD",
    "OP_FETCH",
    "STATUS_OK",
    "STATUS_NOT_FOUND",
    "STATUS_BAD_REQUEST",
    "STATUS_RANGE",
    "FRAME_OVERHEAD",
    "StoreError",
    "StreamError",
    "BenchmarkError",
    "TransferMetrics",
    "StreamServer",
    "StreamClient",
    "encode_request",
    "load_store",
    "serve",
    "fetch",
    "run_benchmark",
    "parse_address",
]

log = logging.getLogger(__name__)

MAGIC = b"ISLE"
VERSION = 1
OP_LIST, OP_HEAD, OP_FETCH = 0x01, 0x02, 0x03
STATUS_OK, STATUS_NOT_FOUND, STATUS_BAD_REQUEST, STATUS_RANGE = 0, 1, 2, 3
STATUS_NAMES = {0: "OK", 1: "NOT_FOUND", 2: "BAD_REQUEST", 3: "RANGE"}

_REQ_HEAD = struct.Struct(">4sBBH")
_RESP_HEAD = struct.Struct(">4sBBQ")
FRAME_OVERHEAD = _RESP_HEAD.size  # 14
FULL_STREAM = -1


class StoreError(RuntimeError):
    pass


class StreamError(RuntimeError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        name = STATUS_NAMES.get(status, str(status))
        super().__init__(f"{name}: {message}" if message else name)


class _ConnectionClosed(EOFError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise _ConnectionClosed(f"connection closed after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


def encode_request(opcode: int, asset_id: str = "", d: int = FULL_STREAM) -> bytes:
    aid = asset_id.encode("utf-8")
    return _REQ_HEAD.pack(MAGIC, VERSION, opcode, len(aid)) + aid + struct.pack(">b", d)


def _response(status: int, payload: bytes = b"") -> bytes:
    return _RESP_HEAD.pack(MAGIC, VERSION, status, len(payload)) + payload


def parse_address(address) -> Tuple[str, int]:
    if isinstance(address, tuple):
        return address
    host, _, port = str(address).rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must be host:port, got {address!r}")
    return host, int(port)


# -- server ------------------------------------------------------------------


def load_store(store_dir) -> Dict[str, Codestream]:
    """Parse every ``<asset_id>.islc`` in ``store_dir``."""
    root = Path(store_dir)
    if not root.is_dir():
        raise StoreError(f"store directory {root} does not exist")
    store = {}
    for path in sorted(root.glob("*.islc")):
        try:
            store[path.stem] = parse(path.read_bytes())
        except (CodestreamError, OSError) as exc:
            raise StoreError(f"cannot load {path.name}: {exc}") from exc
    return store


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        while True:
            try:
                head = _recv_exact(sock, _REQ_HEAD.size)
            except (_ConnectionClosed, OSError):
                return
            magic, version, opcode, n = _REQ_HEAD.unpack(head)
            if magic != MAGIC or version != VERSION:
                # framing cannot be trusted any more
                sock.sendall(_response(STATUS_BAD_REQUEST, b"bad magic or version"))
                return
            try:
                aid_bytes = _recv_exact(sock, n)
                (d,) = struct.unpack(">b", _recv_exact(sock, 1))
            except (_ConnectionClosed, OSError):
                return
            sock.sendall(self.server.respond(opcode, aid_bytes, d))


class StreamServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, store: Dict[str, Codestream], bind_address):
        self.store = store
        super().__init__(parse_address(bind_address), _Handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def respond(self, opcode: int, aid_bytes: bytes, d: int) -> bytes:
        if opcode == OP_LIST:
            return _response(STATUS_OK, "\n".join(sorted(self.store)).encode("utf-8"))
        if opcode not in (OP_HEAD, OP_FETCH):
            return _response(STATUS_BAD_REQUEST, f"unknown opcode {opcode}".encode())
        try:
            aid = aid_bytes.decode("utf-8")
        except UnicodeDecodeError:
            return _response(STATUS_BAD_REQUEST, b"asset id is not UTF-8")
        if not aid:
            return _response(STATUS_BAD_REQUEST, b"empty asset id")
        cs = self.store.get(aid)
        if cs is None:
            return _response(STATUS_NOT_FOUND, aid_bytes)
        index_end = HEADER_SIZE + (cs.n_levels + 1) * INDEX_ENTRY_SIZE
        if opcode == OP_HEAD:
            return _response(STATUS_OK, serialize(cs)[:index_end])
        if d < FULL_STREAM:
            return _response(STATUS_BAD_REQUEST, f"invalid decomposition {d}".encode())
        if d > cs.n_levels:
            return _response(STATUS_RANGE, f"decomposition {d} > {cs.n_levels}".encode())
        part = cs if d == FULL_STREAM else truncate(cs, d)
        body = serialize(part)
        # never ship bytes of segments above d
        assert len(body) == index_end + part.prefix_size(part.present_segments - 1)
        return _response(STATUS_OK, body)

    def start(self) -> "StreamServer":
        self._thread = threading.Thread(target=self.serve_forever, name="isle-server", daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def serve(store_dir, bind_address="127.0.0.1:0") -> StreamServer:
    """Load the store and start serving on a background thread."""
    store = load_store(store_dir)
    server = StreamServer(store, bind_address).start()
    log.info("serving %d assets on %s", len(store), server.address)
    return server


# -- client ------------------------------------------------------------------


class StreamClient:
    """One persistent connection; not thread-safe."""

    def __init__(self, address, timeout: float = 30.0):
        self.sock = socket.create_connection(parse_address(address), timeout=timeout)
        self.bytes_received = 0

    def close(self):
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, opcode: int, asset_id: str = "", d: int = FULL_STREAM) -> Tuple[bytes, int]:
        """Send one frame; return (payload, bytes received for the response frame)."""
        self.sock.sendall(encode_request(opcode, asset_id, d))
        magic, version, status, n = _RESP_HEAD.unpack(_recv_exact(self.sock, FRAME_OVERHEAD))
        if magic != MAGIC or version != VERSION:
            raise StreamError(STATUS_BAD_REQUEST, "malformed response frame")
        payload = _recv_exact(self.sock, n)
        self.bytes_received += FRAME_OVERHEAD + n
        if status != STATUS_OK:
            raise StreamError(status, payload.decode("utf-8", "replace"))
        return payload, FRAME_OVERHEAD + n

    def list(self) -> List[str]:
        payload, _ = self.request(OP_LIST)
        return payload.decode("utf-8").split("\n") if payload else []

    def head(self, asset_id: str) -> Tuple[CodestreamHeader, Tuple[Tuple[int, int], ...]]:
        payload, _ = self.request(OP_HEAD, asset_id)
        return parse_header(payload)

    def fetch(self, asset_id: str, d: int = FULL_STREAM) -> Tuple[Codestream, int]:
        payload, nbytes = self.request(OP_FETCH, asset_id, d)
        return parse(payload), nbytes


def fetch(address, asset_id: str, d: int = FULL_STREAM) -> Tuple[Codestream, int]:
    with StreamClient(address) as client:
        return client.fetch(asset_id, d)


# -- benchmark ---------------------------------------------------------------


@dataclass
class TransferMetrics:
    bytes_transferred: int = 0
    decode_time: float = 0.0  # seconds, summed over images
    images_processed: int = 0
    elapsed: float = 0.0  # wall clock for the whole run
    throughput: float = 0.0  # images / second of wall clock

    def as_dict(self) -> dict:
        return {
            "bytes_transferred": self.bytes_transferred,
            "decode_time_s": self.decode_time,
            "elapsed_s": self.elapsed,
            "images_processed": self.images_processed,
            "throughput_ips": self.throughput,
        }


class BenchmarkError(RuntimeError):
    def __init__(self, message: str, metrics: TransferMetrics):
        super().__init__(message)
        self.metrics = metrics


def run_benchmark(address, assets: Iterable[str], d: int, spec: ScorerSpec,
                  workers: int = 1) -> TransferMetrics:
    """Fetch, decode and score every asset at decomposition ``d`` (-1 = full stream)."""
    assets = list(assets)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    local = threading.local()
    clients: List[StreamClient] = []
    lock = threading.Lock()
    metrics = TransferMetrics()

    def client() -> StreamClient:
        c = getattr(local, "client", None)
        if c is None:
            c = local.client = StreamClient(address)
            with lock:
                clients.append(c)
        return c

    def one(aid: str):
        cs, nbytes = client().fetch(aid, d)
        level = cs.n_levels if d == FULL_STREAM else d
        t0 = time.perf_counter()
        img = decode_partial(cs, level)
        dt = time.perf_counter() - t0
        score(spec, img, asset_id=aid, d=level)
        with lock:
            metrics.bytes_transferred += nbytes
            metrics.decode_time += dt
            metrics.images_processed += 1

    start = time.perf_counter()
    failure = None
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [(aid, pool.submit(one, aid)) for aid in assets]
            for aid, fut in futures:
                if fut.cancelled():
                    continue
                exc = fut.exception()
                if exc is not None and failure is None:
                    failure = (aid, exc)
                    for _, other in futures:
                        other.cancel()
    finally:
        for c in clients:
            c.close()
    metrics.elapsed = time.perf_counter() - start
    if metrics.elapsed > 0:
        metrics.throughput = metrics.images_processed / metrics.elapsed
    if failure is not None:
        aid, exc = failure
        raise BenchmarkError(f"asset {aid!r} failed: {exc}", metrics) from exc
    return metrics
