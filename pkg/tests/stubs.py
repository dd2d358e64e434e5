"""Misbehaving and slow responders used by the network tests."""

import socket
import socketserver
import struct
import threading
import time

from credstuff.group import encrypt
from credstuff.netwire import Responder
from credstuff.pmt import PmtQuery, PmtResponse


class AlwaysTrueResponder(Responder):
    """Answers every query with encryptions of zero, claiming membership."""

    def answer(self, fanout):
        q = PmtQuery.from_bytes(fanout.query)
        b = self.engine.params.bucket_capacity
        return PmtResponse(tuple(encrypt(q.pk, 0) for _ in range(2 * b))).to_bytes(self.group)


class SlowResponder(Responder):
    delay = 1.5

    def answer(self, fanout):
        time.sleep(self.delay)
        return super().answer(fanout)


class GarbageResponder(Responder):
    def answer(self, fanout):
        return b"\x02\x00\x01junk"


class Socks5Proxy(socketserver.ThreadingTCPServer):
    """No-auth CONNECT-only SOCKS5 relay that counts the connections it made."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self):
        self.connections = 0
        super().__init__(("127.0.0.1", 0), _Socks5Handler)
        threading.Thread(target=self.serve_forever, daemon=True).start()

    def stop(self):
        self.shutdown()
        self.server_close()


class _Socks5Handler(socketserver.BaseRequestHandler):
    def _read(self, n):
        buf = b""
        while len(buf) < n:
            chunk = self.request.recv(n - len(buf))
            if not chunk:
                raise ConnectionError
            buf += chunk
        return buf

    def handle(self):
        s = self.request
        _, nm = self._read(2)
        self._read(nm)
        s.sendall(b"\x05\x00")
        _, _, _, atyp = self._read(4)
        if atyp == 1:
            host = socket.inet_ntoa(self._read(4))
        elif atyp == 3:
            host = self._read(self._read(1)[0]).decode()
        else:
            host = socket.inet_ntop(socket.AF_INET6, self._read(16))
        (port,) = struct.unpack(">H", self._read(2))
        up = socket.create_connection((host, port))
        self.server.connections += 1
        s.sendall(b"\x05\x00\x00\x01" + b"\x00" * 6)

        def pump(a, b):
            try:
                while data := a.recv(65536):
                    b.sendall(data)
            except OSError:
                pass
            finally:
                for x in (a, b):
                    try:
                        x.shutdown(socket.SHUT_RDWR)
                    except OSError:
                        pass

        t = threading.Thread(target=pump, args=(up, s), daemon=True)
        t.start()
        pump(s, up)
        t.join()
        up.close()
