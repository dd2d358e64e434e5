"""Responder role: answers fanned-out PMT queries from its suspicious sets."""

from __future__ import annotations

import logging
import math
import time
from typing import Callable

from ..detection import DetectionEngine
from ..pmt import MalformedQuery, PmtQuery
from .frames import (
    ErrorCode,
    ErrorMsg,
    Fanout,
    Frame,
    FrameError,
    FrameType,
    Registration,
    ResponseMsg,
    parse_registration_reply,
)
from .ratelimit import KeyedLimiter
from .transport import FrameServer, request

log = logging.getLogger(__name__)


class RateLimited(Exception):
    def __init__(self, retry_after: float):
        super().__init__(f"retry after {retry_after:.3f}s")
        self.retry_after = retry_after


class Responder:
    """Per-account token-bucket limit in front of ``DetectionEngine.serve_query``."""

    def __init__(self, engine: DetectionEngine, group, rate: float = 1.0, burst: float = 10.0,
                 clock: Callable[[], float] = time.monotonic):
        self.engine = engine
        self.group = group
        self.limiter = KeyedLimiter(rate, burst, clock)

    def answer(self, fanout: Fanout) -> bytes:
        if fanout.params_version != self.engine.params.version:
            raise MalformedQuery("filter parameter version mismatch")
        wait = self.limiter.take(fanout.account_hash)
        if wait > 0:
            raise RateLimited(wait)
        query = PmtQuery.from_bytes(fanout.query)
        # an account with no suspicious entries still answers, from an empty filter
        self.engine.suspicious_set(fanout.account_hash)
        resp = self.engine.serve_query(fanout.account_hash, query, self.group)
        return resp.to_bytes(self.group)

    def handle(self, frame: Frame, peer: tuple = ("", 0)) -> Frame:
        if frame.type is not FrameType.FANOUT:
            return ErrorMsg(ErrorCode.MALFORMED, f"unexpected {frame.type.name} frame").to_frame()
        try:
            fanout = Fanout.from_payload(frame.payload)
        except FrameError as exc:
            return ErrorMsg(ErrorCode.MALFORMED, str(exc)).to_frame()
        try:
            return ResponseMsg(fanout.request_id, self.answer(fanout)).to_frame()
        except RateLimited as exc:
            ms = math.ceil(exc.retry_after * 1000)
            return ErrorMsg(ErrorCode.RATE_LIMITED, "rate limited", ms, fanout.request_id).to_frame()
        except MalformedQuery as exc:
            log.info("malformed query: %s", exc)
            return ErrorMsg(ErrorCode.MALFORMED, str(exc), request_id=fanout.request_id).to_frame()


class ResponderServer(FrameServer):
    def __init__(self, addr: tuple[str, int], responder: Responder):
        self.responder = responder
        super().__init__(addr, responder.handle)


class RegistrationError(RuntimeError):
    pass


def register(directory: tuple[str, int], member_id: str, account_hashes: list[bytes],
             timeout: float = 5.0, proxy: tuple[str, int] | None = None) -> list[int]:
    """Register ``member_id`` as a responder for each account; returns per-account status codes."""
    reply = request(directory, Registration(member_id, tuple(account_hashes)).to_frame(), timeout, proxy)
    if reply.type is FrameType.ERROR:
        err = ErrorMsg.from_payload(reply.payload)
        raise RegistrationError(f"{err.code.name}: {err.message}")
    if reply.type is not FrameType.REGISTER:
        raise RegistrationError(f"unexpected {reply.type.name} reply")
    return parse_registration_reply(reply.payload)
