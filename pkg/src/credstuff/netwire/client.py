"""Requester side: directory client and a network QueryChannel."""

from __future__ import annotations

import logging
import secrets
import socket

from ..cuckoo import FilterParams
from ..detection import DirectoryUnavailable, NoResponders
from ..pmt import MalformedResponse, PmtResponse, PrecomputePool, build_query, interpret
from .frames import (
    AuditReport,
    AuditRequest,
    Batch,
    ConnectionClosed,
    ErrorCode,
    ErrorMsg,
    Frame,
    FrameError,
    FrameType,
    QueryEnvelope,
)
from .transport import request

log = logging.getLogger(__name__)
_SYSRAND = secrets.SystemRandom()


class RemoteError(RuntimeError):
    def __init__(self, err: ErrorMsg):
        super().__init__(f"{err.code.name}: {err.message}")
        self.error = err

    @property
    def code(self) -> ErrorCode:
        return self.error.code


class ProtocolError(RuntimeError):
    pass


class DirectoryClient:
    def __init__(self, addr: tuple[str, int], timeout: float = 10.0, proxy: tuple[str, int] | None = None):
        self.addr = addr
        self.timeout = timeout
        self.proxy = proxy

    def _call(self, frame: Frame, expect: FrameType) -> Frame:
        try:
            reply = request(self.addr, frame, self.timeout, self.proxy)
        except (OSError, ConnectionClosed, socket.timeout) as exc:
            raise DirectoryUnavailable(str(exc)) from exc
        except FrameError as exc:
            raise ProtocolError(str(exc)) from exc
        if reply.type is FrameType.ERROR:
            err = ErrorMsg.from_payload(reply.payload)
            if err.code is ErrorCode.NO_RESPONDERS:
                raise NoResponders(err.message)
            raise RemoteError(err)
        if reply.type is not expect:
            raise ProtocolError(f"expected {expect.name}, got {reply.type.name}")
        return reply

    def query(self, env: QueryEnvelope) -> Batch:
        batch = Batch.from_payload(self._call(env.to_frame(), FrameType.BATCH).payload)
        if batch.request_id != env.request_id:
            raise ProtocolError("batch answers a different request")
        return batch

    def audit(self, account_hash: bytes) -> list[tuple[str, int]]:
        reply = self._call(AuditRequest(account_hash).to_frame(), FrameType.AUDIT)
        return list(AuditReport.from_payload(reply.payload).verdicts)


class BatchResults(list):
    """Booleans, one per answering responder, plus batch bookkeeping."""

    contacted: int = 0
    timeouts: int = 0
    aborted: int = 0


class NetworkChannel:
    """QueryChannel over a directory. ``member_id`` excludes this site from its own fan-out."""

    def __init__(self, client: DirectoryClient, params: FilterParams, group, member_id: str = "",
                 rng=None, pool_factory=None):
        self.client = client
        self.params = params
        self.group = group
        self.member_id = member_id
        self.rng = rng or _SYSRAND
        self.pool_factory = pool_factory

    def query_element(self, account_hash: bytes, e: bytes) -> BatchResults:
        hasher = self.params.hasher(self.params.hash_key_for(account_hash))
        pool: PrecomputePool | None = self.pool_factory() if self.pool_factory else None
        query, kp = build_query(e, hasher, self.group, pool=pool, rng=self.rng)
        rid = self.rng.getrandbits(32)
        env = QueryEnvelope(rid, account_hash, self.params.version, self.member_id, query.to_bytes())
        batch = self.client.query(env)
        expected = 2 * self.params.bucket_capacity
        out = BatchResults()
        out.contacted = batch.contacted
        out.timeouts = batch.timeouts
        for raw in batch.responses:
            try:
                out.append(interpret(kp, PmtResponse.from_bytes(raw, self.group), expected))
            except MalformedResponse as exc:
                # sources are hidden from us; the directory's audits attribute misbehaviour
                out.aborted += 1
                log.warning("aborting malformed response in batch %08x: %s", rid, exc)
        return out
