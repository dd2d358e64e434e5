"""Address parsing, outbound connections (optionally through SOCKS5) and a
threaded frame server."""

from __future__ import annotations

import ipaddress
import logging
import socket
import socketserver
import struct
import threading
from typing import Callable

from .frames import ConnectionClosed, ErrorCode, ErrorMsg, Frame, FrameError, read_frame, send_frame

log = logging.getLogger(__name__)


def parse_addr(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    """'host:port', ':port' or '[v6]:port'."""
    text = text.strip()
    host, sep, port = text.rpartition(":")
    if not sep:
        raise ValueError(f"address {text!r} has no port")
    host = host.strip("[]") or default_host
    try:
        p = int(port)
    except ValueError:
        raise ValueError(f"bad port in {text!r}") from None
    if not 0 <= p <= 65535:
        raise ValueError(f"port out of range in {text!r}")
    return host, p


def format_addr(addr: tuple[str, int]) -> str:
    host, port = addr[0], addr[1]
    return f"[{host}]:{port}" if ":" in host else f"{host}:{port}"


class ProxyError(ConnectionError):
    pass


def _socks5_connect(sock: socket.socket, host: str, port: int) -> None:
    # RFC 1928, no authentication, CONNECT
    sock.sendall(b"\x05\x01\x00")
    if sock.recv(2) != b"\x05\x00":
        raise ProxyError("SOCKS5 proxy refused no-auth method")
    try:
        ip = ipaddress.ip_address(host)
        atyp = b"\x01" if ip.version == 4 else b"\x04"
        dst = atyp + ip.packed
    except ValueError:
        name = host.encode("idna")
        dst = b"\x03" + bytes([len(name)]) + name
    sock.sendall(b"\x05\x01\x00" + dst + struct.pack(">H", port))
    head = _recv(sock, 4)
    if head[1] != 0:
        raise ProxyError(f"SOCKS5 connect failed with code {head[1]}")
    skip = {1: 4, 4: 16}.get(head[3])
    if skip is None:
        skip = _recv(sock, 1)[0]
    _recv(sock, skip + 2)


def _recv(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ProxyError("proxy closed the connection")
        buf += chunk
    return buf


def connect(addr: tuple[str, int], timeout: float, proxy: tuple[str, int] | None = None) -> socket.socket:
    if proxy is None:
        sock = socket.create_connection(addr, timeout=timeout)
    else:
        sock = socket.create_connection(proxy, timeout=timeout)
        try:
            _socks5_connect(sock, addr[0], addr[1])
        except BaseException:
            sock.close()
            raise
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def request(addr: tuple[str, int], frame: Frame, timeout: float,
            proxy: tuple[str, int] | None = None) -> Frame:
    """Send one frame on a fresh connection and return the reply."""
    with connect(addr, timeout, proxy) as sock:
        sock.settimeout(timeout)
        send_frame(sock, frame)
        return read_frame(sock)


Handler = Callable[[Frame, tuple], Frame]


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        while True:
            try:
                frame = read_frame(sock)
            except (ConnectionClosed, ConnectionResetError, socket.timeout):
                return
            except FrameError as exc:
                # framing is lost after a bad header, so reply and close
                self._reply(ErrorMsg(ErrorCode.MALFORMED, str(exc)).to_frame())
                return
            try:
                reply = self.server.dispatch(frame, self.client_address)
            except Exception as exc:  # noqa: BLE001 - keep the server alive
                log.exception("handler failed")
                reply = ErrorMsg(ErrorCode.INTERNAL, type(exc).__name__).to_frame()
            if not self._reply(reply):
                return

    def _reply(self, frame: Frame) -> bool:
        try:
            send_frame(self.request, frame)
            return True
        except OSError:
            return False


class FrameServer(socketserver.ThreadingTCPServer):
    """Serves frames on persistent connections; one thread per connection."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr: tuple[str, int], dispatch: Handler):
        self.dispatch = dispatch
        super().__init__(addr, _FrameHandler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> "FrameServer":
        self._thread = threading.Thread(target=self.serve_forever, name="frame-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join()
