"""Length-prefixed binary frames and their payload codecs.

Frame: u32 length | u8 type | u8 version | payload, with length counting the
type and version bytes. All integers are big-endian; strings are u16-length
prefixed UTF-8.
"""

from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass

VERSION = 1
MAX_FRAME = 1 << 24
ACCOUNT_HASH_SIZE = 32

_HEAD = struct.Struct(">IBB")


class FrameError(ValueError):
    pass


class ConnectionClosed(ConnectionError):
    pass


class FrameType(enum.IntEnum):
    REGISTER = 1
    QUERY = 2
    FANOUT = 3
    RESPONSE = 4
    BATCH = 5
    AUDIT = 6
    ERROR = 7


class ErrorCode(enum.IntEnum):
    MALFORMED = 1
    RATE_LIMITED = 2
    NO_RESPONDERS = 3
    VERSION_MISMATCH = 4
    DUPLICATE_MEMBER = 5
    LIMIT_EXCEEDED = 6
    NOT_MEMBER = 7
    CHALLENGE_REQUIRED = 8
    INTERNAL = 9


@dataclass(frozen=True)
class Frame:
    type: FrameType
    payload: bytes
    version: int = VERSION

    def to_bytes(self) -> bytes:
        return _HEAD.pack(len(self.payload) + 2, self.type, self.version) + self.payload


def parse_header(head: bytes) -> tuple[int, FrameType, int]:
    length, tag, version = _HEAD.unpack(head)
    if length < 2 or length - 2 > MAX_FRAME:
        raise FrameError(f"bad frame length {length}")
    try:
        ftype = FrameType(tag)
    except ValueError:
        raise FrameError(f"unknown frame type {tag}") from None
    if version != VERSION:
        raise FrameError(f"unsupported frame version {version}")
    return length - 2, ftype, version


def decode_frame(data: bytes) -> Frame:
    if len(data) < _HEAD.size:
        raise FrameError("short frame")
    n, ftype, version = parse_header(data[:_HEAD.size])
    if len(data) != _HEAD.size + n:
        raise FrameError("frame length mismatch")
    return Frame(ftype, data[_HEAD.size:], version)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionClosed("peer closed the connection")
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> Frame:
    n, ftype, version = parse_header(_recv_exact(sock, _HEAD.size))
    return Frame(ftype, _recv_exact(sock, n), version)


def send_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(frame.to_bytes())


# ---------------------------------------------------------------- payloads


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FrameError("truncated payload")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        st = struct.Struct(fmt)
        return st.unpack(self.take(st.size))

    def string(self) -> str:
        (n,) = self.unpack(">H")
        try:
            return self.take(n).decode()
        except UnicodeDecodeError:
            raise FrameError("bad string") from None

    def rest(self) -> bytes:
        out = self.data[self.pos:]
        self.pos = len(self.data)
        return out

    def end(self) -> None:
        if self.pos != len(self.data):
            raise FrameError("trailing bytes in payload")


def _string(s: str) -> bytes:
    b = s.encode()
    if len(b) > 0xFFFF:
        raise FrameError("string too long")
    return struct.pack(">H", len(b)) + b


def _account(ah: bytes) -> bytes:
    if len(ah) != ACCOUNT_HASH_SIZE:
        raise FrameError("account hash must be 32 bytes")
    return ah


@dataclass(frozen=True)
class Registration:
    member_id: str
    account_hashes: tuple[bytes, ...]

    def to_frame(self) -> Frame:
        body = _string(self.member_id) + struct.pack(">H", len(self.account_hashes))
        return Frame(FrameType.REGISTER, body + b"".join(_account(a) for a in self.account_hashes))

    @classmethod
    def from_payload(cls, data: bytes) -> "Registration":
        r = _Reader(data)
        member = r.string()
        (n,) = r.unpack(">H")
        accts = tuple(r.take(ACCOUNT_HASH_SIZE) for _ in range(n))
        r.end()
        return cls(member, accts)


# per-account status codes in the REGISTER reply
REG_OK, REG_DUPLICATE, REG_LIMIT = 0, 1, 2


def registration_reply(statuses: list[int]) -> Frame:
    return Frame(FrameType.REGISTER, struct.pack(">H", len(statuses)) + bytes(statuses))


def parse_registration_reply(data: bytes) -> list[int]:
    r = _Reader(data)
    (n,) = r.unpack(">H")
    out = list(r.take(n))
    r.end()
    return out


@dataclass(frozen=True)
class QueryEnvelope:
    """Requester -> directory. ``request_id`` is the return-channel id."""

    request_id: int
    account_hash: bytes
    params_version: int
    requester: str
    query: bytes

    def to_frame(self) -> Frame:
        head = struct.pack(">I", self.request_id) + _account(self.account_hash)
        head += struct.pack(">H", self.params_version) + _string(self.requester)
        return Frame(FrameType.QUERY, head + self.query)

    @classmethod
    def from_payload(cls, data: bytes) -> "QueryEnvelope":
        r = _Reader(data)
        (rid,) = r.unpack(">I")
        ah = r.take(ACCOUNT_HASH_SIZE)
        (ver,) = r.unpack(">H")
        return cls(rid, ah, ver, r.string(), r.rest())


@dataclass(frozen=True)
class Fanout:
    """Directory -> responder. Carries no requester identity."""

    request_id: int
    account_hash: bytes
    params_version: int
    query: bytes

    def to_frame(self) -> Frame:
        head = struct.pack(">I", self.request_id) + _account(self.account_hash)
        return Frame(FrameType.FANOUT, head + struct.pack(">H", self.params_version) + self.query)

    @classmethod
    def from_payload(cls, data: bytes) -> "Fanout":
        r = _Reader(data)
        (rid,) = r.unpack(">I")
        ah = r.take(ACCOUNT_HASH_SIZE)
        (ver,) = r.unpack(">H")
        return cls(rid, ah, ver, r.rest())


@dataclass(frozen=True)
class ResponseMsg:
    request_id: int
    response: bytes

    def to_frame(self) -> Frame:
        return Frame(FrameType.RESPONSE, struct.pack(">I", self.request_id) + self.response)

    @classmethod
    def from_payload(cls, data: bytes) -> "ResponseMsg":
        r = _Reader(data)
        (rid,) = r.unpack(">I")
        return cls(rid, r.rest())


@dataclass(frozen=True)
class Batch:
    """Directory -> requester: shuffled responses, no sources, no timing."""

    request_id: int
    contacted: int
    timeouts: int
    responses: tuple[bytes, ...]

    def to_frame(self) -> Frame:
        parts = [struct.pack(">IHHH", self.request_id, self.contacted, self.timeouts, len(self.responses))]
        for resp in self.responses:
            parts.append(struct.pack(">I", len(resp)) + resp)
        return Frame(FrameType.BATCH, b"".join(parts))

    @classmethod
    def from_payload(cls, data: bytes) -> "Batch":
        r = _Reader(data)
        rid, contacted, timeouts, n = r.unpack(">IHHH")
        out = []
        for _ in range(n):
            (size,) = r.unpack(">I")
            out.append(r.take(size))
        r.end()
        return cls(rid, contacted, timeouts, tuple(out))


# audit verdicts
AUDIT_OK, AUDIT_FLAGGED, AUDIT_NO_RESPONSE = 0, 1, 2


@dataclass(frozen=True)
class AuditRequest:
    account_hash: bytes

    def to_frame(self) -> Frame:
        return Frame(FrameType.AUDIT, _account(self.account_hash))

    @classmethod
    def from_payload(cls, data: bytes) -> "AuditRequest":
        r = _Reader(data)
        ah = r.take(ACCOUNT_HASH_SIZE)
        r.end()
        return cls(ah)


@dataclass(frozen=True)
class AuditReport:
    verdicts: tuple[tuple[str, int], ...]

    def to_frame(self) -> Frame:
        body = struct.pack(">H", len(self.verdicts))
        body += b"".join(_string(m) + bytes([v]) for m, v in self.verdicts)
        return Frame(FrameType.AUDIT, body)

    @classmethod
    def from_payload(cls, data: bytes) -> "AuditReport":
        r = _Reader(data)
        (n,) = r.unpack(">H")
        out = []
        for _ in range(n):
            m = r.string()
            out.append((m, r.take(1)[0]))
        r.end()
        return cls(tuple(out))


@dataclass(frozen=True)
class ErrorMsg:
    code: ErrorCode
    message: str = ""
    retry_after_ms: int = 0
    request_id: int = 0

    def to_frame(self) -> Frame:
        body = struct.pack(">IBI", self.request_id, self.code, self.retry_after_ms) + _string(self.message)
        return Frame(FrameType.ERROR, body)

    @classmethod
    def from_payload(cls, data: bytes) -> "ErrorMsg":
        r = _Reader(data)
        rid, code, retry = r.unpack(">IBI")
        msg = r.string()
        r.end()
        try:
            code = ErrorCode(code)
        except ValueError:
            raise FrameError(f"unknown error code {code}") from None
        return cls(code, msg, retry, rid)
