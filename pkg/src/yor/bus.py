"""Lightweight publish/subscribe and request/response message layer.

One wire format everywhere: a length-prefixed binary frame used in-process
for logging, over TCP for external tools, and (as structured-text JSON with
identical field names) over the WebSocket bridge for the browser UI.

Frame layout, big-endian:
    u32 total length (including these 4 bytes)
    u8  type tag
    u64 sequence (strictly increasing per publisher+topic)
    u64 timestamp, microseconds
    u16 topic length + topic bytes (UTF-8)
    payload bytes
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass, field

MAX_PAYLOAD = 16 * 1024 * 1024
_HEAD = struct.Struct(">IBQQH")

TYPE_BINARY = 1
TYPE_JSON = 2
TYPE_REQUEST = 3
TYPE_REPLY = 4


class BusError(RuntimeError):
    pass


@dataclass
class Envelope:
    topic: str
    type_tag: int
    seq: int
    timestamp_us: int
    payload: bytes

    def json(self):
        return json.loads(self.payload.decode("utf-8"))


def encode(env: Envelope) -> bytes:
    if len(env.payload) > MAX_PAYLOAD:
        raise BusError("payload exceeds 16 MiB")
    topic = env.topic.encode("utf-8")
    total = _HEAD.size + len(topic) + len(env.payload)
    return (
        _HEAD.pack(total, env.type_tag, env.seq, env.timestamp_us, len(topic))
        + topic
        + env.payload
    )


def decode(data: bytes, offset: int = 0) -> tuple[Envelope, int]:
    """Decode one frame starting at offset; returns (envelope, next offset)."""
    if len(data) - offset < _HEAD.size:
        raise BusError("incomplete frame")
    total, tag, seq, ts, tlen = _HEAD.unpack_from(data, offset)
    if total > MAX_PAYLOAD + _HEAD.size + tlen:
        raise BusError("oversize frame")
    if len(data) - offset < total:
        raise BusError("incomplete frame")
    t_start = offset + _HEAD.size
    topic = data[t_start : t_start + tlen].decode("utf-8")
    payload = bytes(data[t_start + tlen : offset + total])
    return Envelope(topic, tag, seq, ts, payload), offset + total


def decode_stream(data: bytes) -> list[Envelope]:
    """Decode a concatenation of frames (the log file format)."""
    out = []
    off = 0
    while off < len(data):
        env, off = decode(data, off)
        out.append(env)
    return out


# nominal schema: topic -> (kind, rate_hz or None, payload type tag)
TOPICS: dict[str, tuple[str, float | None, int]] = {
    "pose": ("stream", 120.0, TYPE_JSON),
    "true_pose": ("stream", 120.0, TYPE_JSON),
    "cloud": ("stream", 5.0, TYPE_BINARY),
    "costmap": ("stream", 10.0, TYPE_BINARY),
    "cmd_twist": ("stream", 50.0, TYPE_JSON),
    "cmd_lift": ("stream", 50.0, TYPE_JSON),
    "cmd_ee": ("stream", 120.0, TYPE_JSON),
    "lift_state": ("stream", 50.0, TYPE_JSON),
    "ee_state": ("stream", 120.0, TYPE_JSON),
    "plan": ("stream", None, TYPE_JSON),
    "goal": ("request", None, TYPE_JSON),
    "scenario": ("request", None, TYPE_JSON),
}

STREAM_QUEUE_DEPTH = 8


class Subscription:
    """Bounded per-subscriber queue; slow consumers lose the oldest
    messages first."""

    def __init__(self, topic: str, maxlen: int):
        self.topic = topic
        self._queue: deque[Envelope] = deque(maxlen=maxlen)
        self._lock = threading.Lock()

    def _push(self, env: Envelope) -> None:
        with self._lock:
            self._queue.append(env)

    def drain(self) -> list[Envelope]:
        with self._lock:
            out = list(self._queue)
            self._queue.clear()
        return out

    def latest(self) -> Envelope | None:
        with self._lock:
            return self._queue[-1] if self._queue else None


class Bus:
    """In-process topic bus with per-(publisher, topic) ordering.

    Streaming topics use drop-oldest semantics; request/response is matched
    synchronously against a registered responder and errors on timeout
    (no responder) or unknown topics.
    """

    def __init__(self, schema: dict | None = None):
        self.schema = dict(schema or TOPICS)
        self._seq: dict[tuple[str, str], int] = {}
        self._subs: dict[str, list[Subscription]] = {}
        self._responders: dict[str, object] = {}
        self._taps: list = []
        self._lock = threading.Lock()
        self._clock_us = 0

    def set_time(self, t_seconds: float) -> None:
        self._clock_us = int(round(t_seconds * 1e6))

    def _check_topic(self, topic: str) -> tuple[str, float | None, int]:
        if topic not in self.schema:
            raise BusError(f"unknown topic '{topic}'")
        return self.schema[topic]

    def subscribe(self, topic: str, maxlen: int = STREAM_QUEUE_DEPTH) -> Subscription:
        self._check_topic(topic)
        sub = Subscription(topic, maxlen)
        with self._lock:
            self._subs.setdefault(topic, []).append(sub)
        return sub

    def add_tap(self, fn) -> None:
        """fn(envelope) is called synchronously on every publish (logging)."""
        self._taps.append(fn)

    def publish(self, topic: str, payload, publisher: str = "main",
                type_tag: int | None = None) -> Envelope:
        kind, _, default_tag = self._check_topic(topic)
        tag = type_tag if type_tag is not None else default_tag
        if isinstance(payload, (dict, list)):
            payload = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        with self._lock:
            key = (publisher, topic)
            seq = self._seq.get(key, 0) + 1
            self._seq[key] = seq
            env = Envelope(topic, tag, seq, self._clock_us, bytes(payload))
            subs = list(self._subs.get(topic, ()))
        for sub in subs:
            sub._push(env)
        for tap in self._taps:
            tap(env)
        return env

    def serve(self, topic: str, handler) -> None:
        kind, _, _ = self._check_topic(topic)
        if kind != "request":
            raise BusError(f"topic '{topic}' is not request/response")
        self._responders[topic] = handler

    def request(self, topic: str, payload: dict, timeout: float = 1.0) -> dict:
        kind, _, _ = self._check_topic(topic)
        if kind != "request":
            raise BusError(f"topic '{topic}' is not request/response")
        handler = self._responders.get(topic)
        if handler is None:
            raise BusError(f"request timeout: no responder for '{topic}'")
        return handler(payload)


def envelope_to_json(env: Envelope) -> str:
    """Structured-text mirror of an envelope for the WebSocket bridge.

    Control-plane payloads are inlined as JSON objects; binary payloads
    (cloud, costmap) are base64 so they stay bit-exact across the bridge.
    """
    doc = {
        "topic": env.topic,
        "type": env.type_tag,
        "seq": env.seq,
        "timestamp_us": env.timestamp_us,
    }
    if env.type_tag == TYPE_BINARY:
        doc["encoding"] = "b64"
        doc["payload"] = base64.b64encode(env.payload).decode("ascii")
    else:
        doc["payload"] = json.loads(env.payload.decode("utf-8")) if env.payload else None
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# --- TCP socket transport ----------------------------------------------------


class SocketServer:
    """Forwards every bus topic to connected clients using the binary frame
    format and publishes frames received from clients onto the bus."""

    def __init__(self, bus: Bus, host: str = "127.0.0.1", port: int = 0):
        self.bus = bus
        self._srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._srv.bind((host, port))
        self._srv.listen(8)
        self.address = self._srv.getsockname()
        self._clients: list[socket.socket] = []
        self._lock = threading.Lock()
        self._running = True
        bus.add_tap(self._forward)
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self):
        while self._running:
            try:
                conn, _ = self._srv.accept()
            except OSError:
                return
            with self._lock:
                self._clients.append(conn)
            threading.Thread(target=self._read_loop, args=(conn,), daemon=True).start()

    def _read_loop(self, conn: socket.socket):
        buf = b""
        try:
            while self._running:
                chunk = conn.recv(65536)
                if not chunk:
                    break
                buf += chunk
                while len(buf) >= _HEAD.size:
                    total = struct.unpack_from(">I", buf)[0]
                    if len(buf) < total:
                        break
                    env, _ = decode(buf[:total])
                    buf = buf[total:]
                    try:
                        self.bus.publish(env.topic, env.payload, publisher="socket",
                                         type_tag=env.type_tag)
                    except BusError:
                        pass
        except OSError:
            pass
        finally:
            with self._lock:
                if conn in self._clients:
                    self._clients.remove(conn)
            conn.close()

    def _forward(self, env: Envelope):
        data = encode(env)
        with self._lock:
            clients = list(self._clients)
        for c in clients:
            try:
                c.sendall(data)
            except OSError:
                with self._lock:
                    if c in self._clients:
                        self._clients.remove(c)

    def close(self):
        self._running = False
        try:
            self._srv.close()
        except OSError:
            pass
        with self._lock:
            for c in self._clients:
                try:
                    c.close()
                except OSError:
                    pass
            self._clients.clear()


# --- WebSocket bridge (RFC 6455, text frames only) ----------------------------

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _ws_send_text(conn: socket.socket, text: str) -> None:
    data = text.encode("utf-8")
    n = len(data)
    if n < 126:
        head = bytes([0x81, n])
    elif n < 65536:
        head = bytes([0x81, 126]) + struct.pack(">H", n)
    else:
        head = bytes([0x81, 127]) + struct.pack(">Q", n)
    conn.sendall(head + data)


def _ws_read_frame(conn: socket.socket, buf: bytearray) -> tuple[int, bytes] | None:
    """Read one client frame (masked); returns (opcode, payload) or None on close."""

    def need(k: int) -> bool:
        while len(buf) < k:
            chunk = conn.recv(65536)
            if not chunk:
                return False
            buf.extend(chunk)
        return True

    if not need(2):
        return None
    b0, b1 = buf[0], buf[1]
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    length = b1 & 0x7F
    off = 2
    if length == 126:
        if not need(4):
            return None
        length = struct.unpack_from(">H", buf, 2)[0]
        off = 4
    elif length == 127:
        if not need(10):
            return None
        length = struct.unpack_from(">Q", buf, 2)[0]
        off = 10
    mask = b""
    if masked:
        if not need(off + 4):
            return None
        mask = bytes(buf[off : off + 4])
        off += 4
    if not need(off + length):
        return None
    payload = bytes(buf[off : off + length])
    del buf[: off + length]
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


class WebSocketBridge:
    """Mirrors bus topics to browser clients as structured-text envelopes
    and publishes client messages back onto the bus. Requests (goal,
    scenario) are answered inline with a matching id."""

    def __init__(self, bus: Bus, host: str = "127.0.0.1", port: int = 0):
        self.bus = bus
        self._srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._srv.bind((host, port))
        self._srv.listen(8)
        self.address = self._srv.getsockname()
        self._clients: list[socket.socket] = []
        self._lock = threading.Lock()
        self._running = True
        bus.add_tap(self._forward)
        threading.Thread(target=self._accept_loop, daemon=True).start()

    def _accept_loop(self):
        while self._running:
            try:
                conn, _ = self._srv.accept()
            except OSError:
                return
            threading.Thread(target=self._client_loop, args=(conn,), daemon=True).start()

    def _handshake(self, conn: socket.socket) -> bool:
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = conn.recv(65536)
            if not chunk:
                return False
            data += chunk
        headers = {}
        for line in data.split(b"\r\n")[1:]:
            if b":" in line:
                k, v = line.split(b":", 1)
                headers[k.strip().lower()] = v.strip()
        key = headers.get(b"sec-websocket-key")
        if key is None:
            return False
        accept = _ws_accept_key(key.decode("ascii"))
        conn.sendall(
            b"HTTP/1.1 101 Switching Protocols\r\n"
            b"Upgrade: websocket\r\nConnection: Upgrade\r\n"
            b"Sec-WebSocket-Accept: " + accept.encode("ascii") + b"\r\n\r\n"
        )
        return True

    def _client_loop(self, conn: socket.socket):
        try:
            if not self._handshake(conn):
                conn.close()
                return
            with self._lock:
                self._clients.append(conn)
            buf = bytearray()
            while self._running:
                frame = _ws_read_frame(conn, buf)
                if frame is None:
                    break
                opcode, payload = frame
                if opcode == 0x8:  # close
                    break
                if opcode == 0x9:  # ping -> pong
                    conn.sendall(bytes([0x8A, len(payload)]) + payload)
                    continue
                if opcode != 0x1:
                    continue
                self._handle_text(conn, payload.decode("utf-8"))
        except OSError:
            pass
        finally:
            with self._lock:
                if conn in self._clients:
                    self._clients.remove(conn)
            conn.close()

    def _handle_text(self, conn: socket.socket, text: str):
        try:
            doc = json.loads(text)
            topic = doc["topic"]
            payload = doc.get("payload")
            if doc.get("type") == TYPE_REQUEST:
                try:
                    reply = self.bus.request(topic, payload or {})
                    ok = True
                except BusError as e:
                    reply = {"error": str(e)}
                    ok = False
                out = json.dumps(
                    {"topic": topic, "type": TYPE_REPLY, "id": doc.get("id"),
                     "ok": ok, "payload": reply},
                    sort_keys=True, separators=(",", ":"),
                )
                _ws_send_text(conn, out)
                return
            if doc.get("encoding") == "b64":
                body: bytes = base64.b64decode(payload)
            else:
                body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
            self.bus.publish(topic, body, publisher="ws")
        except (KeyError, ValueError, BusError):
            pass

    def _forward(self, env: Envelope):
        with self._lock:
            clients = list(self._clients)
        if not clients:
            return
        text = envelope_to_json(env)
        for c in clients:
            try:
                _ws_send_text(c, text)
            except OSError:
                with self._lock:
                    if c in self._clients:
                        self._clients.remove(c)

    def close(self):
        self._running = False
        try:
            self._srv.close()
        except OSError:
            pass
        with self._lock:
            for c in self._clients:
                try:
                    c.close()
                except OSError:
                    pass
            self._clients.clear()
