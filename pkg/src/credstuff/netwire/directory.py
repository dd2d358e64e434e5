"""Directory: responder registration, shuffled query fan-out and audits."""

from __future__ import annotations

import logging
import os
import secrets
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass

from ..cuckoo import FilterParams
from ..detection import NoResponders
from ..pmt import MalformedResponse, PmtResponse, build_query, interpret
from .frames import (
    AUDIT_FLAGGED,
    AUDIT_NO_RESPONSE,
    AUDIT_OK,
    REG_DUPLICATE,
    REG_LIMIT,
    REG_OK,
    AuditReport,
    AuditRequest,
    Batch,
    ErrorCode,
    ErrorMsg,
    Fanout,
    Frame,
    FrameError,
    FrameType,
    QueryEnvelope,
    Registration,
    ResponseMsg,
    read_frame,
    registration_reply,
    send_frame,
)
from .ratelimit import CHALLENGE, EscalationGate
from .transport import FrameServer, connect, parse_addr

log = logging.getLogger(__name__)
_SYSRAND = secrets.SystemRandom()


class DuplicateMember(Exception):
    pass


class LimitExceeded(Exception):
    pass


class NotMember(PermissionError):
    pass


class VersionMismatch(ValueError):
    pass


class ChallengeRequired(Exception):
    pass


class ConfigError(ValueError):
    pass


def load_members(path: str | os.PathLike) -> dict[str, tuple[str, int]]:
    """Allowlist: one ``member_id host:port`` per line; blank lines and # comments skipped."""
    members: dict[str, tuple[str, int]] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read members file: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'member_id host:port'")
        member, addr = parts
        if member in members:
            raise ConfigError(f"{path}:{lineno}: duplicate member {member!r}")
        try:
            members[member] = parse_addr(addr)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return members


@dataclass
class BatchResult:
    responses: list[bytes]
    contacted: int
    timeouts: int


class Directory:
    """Trusted-directory (TLP) core, independent of the listening socket.

    Responders are reached at their allowlisted addresses. A fan-out waits at
    most ``responder_timeout`` per responder and ``batch_timeout`` overall,
    then releases one shuffled batch; late or failed responders count only
    towards ``timeouts``. Timed-out responders are not retried.
    """

    def __init__(self, members: dict[str, tuple[str, int]], params: FilterParams, group,
                 registration_cap: int = 64, responder_timeout: float = 2.0,
                 batch_timeout: float = 5.0, escalation: EscalationGate | None = None,
                 rng=None, proxy: tuple[str, int] | None = None):
        self.members = dict(members)
        self.params = params
        self.group = group
        self.registration_cap = registration_cap
        self.responder_timeout = responder_timeout
        self.batch_timeout = batch_timeout
        self.escalation = escalation
        self.rng = rng or _SYSRAND
        self.proxy = proxy
        self.registrations: dict[bytes, list[str]] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max(4, registration_cap), thread_name_prefix="fanout")

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)

    # ------------------------------------------------------------ registration

    def register(self, member_id: str, account_hash: bytes) -> None:
        if member_id not in self.members:
            raise NotMember(member_id)
        with self._lock:
            regs = self.registrations.setdefault(account_hash, [])
            if member_id in regs:
                raise DuplicateMember(member_id)
            if len(regs) >= self.registration_cap:
                raise LimitExceeded(f"account already has {len(regs)} responders")
            regs.append(member_id)

    def responders_for(self, account_hash: bytes, exclude: str = "") -> list[str]:
        with self._lock:
            regs = list(self.registrations.get(account_hash, ()))
        return [m for m in regs if m != exclude]

    # ------------------------------------------------------------ fan-out

    def _ask(self, member: str, fanout: Fanout, deadline: float) -> bytes | None:
        addr = self.members[member]
        timeout = min(self.responder_timeout, max(deadline - time.monotonic(), 0.0))
        if timeout <= 0:
            return None
        start = time.monotonic()
        try:
            with connect(addr, timeout, self.proxy) as sock:
                sock.settimeout(timeout)
                send_frame(sock, fanout.to_frame())
                reply = read_frame(sock)
        except (OSError, FrameError) as exc:
            log.info("responder %s unavailable: %s", member, exc)
            return None
        if time.monotonic() - start > self.responder_timeout:
            return None
        if reply.type is FrameType.ERROR:
            err = ErrorMsg.from_payload(reply.payload)
            log.info("responder %s returned %s", member, err.code.name)
            return None
        if reply.type is not FrameType.RESPONSE:
            return None
        msg = ResponseMsg.from_payload(reply.payload)
        return msg.response if msg.request_id == fanout.request_id else None

    def _gather(self, members: list[str], fanout: Fanout) -> list[bytes | None]:
        deadline = time.monotonic() + self.batch_timeout
        futs = [self._pool.submit(self._ask, m, fanout, deadline) for m in members]
        done, _ = wait(futs, timeout=self.batch_timeout, return_when=FIRST_EXCEPTION)
        out = []
        for f in futs:
            out.append(f.result() if f in done and f.exception() is None else None)
        return out

    def forward(self, env: QueryEnvelope) -> BatchResult:
        if env.params_version != self.params.version:
            raise VersionMismatch(f"directory runs params version {self.params.version}")
        if self.escalation is not None and self.escalation.check(env.account_hash) == CHALLENGE:
            raise ChallengeRequired(env.account_hash.hex())
        members = self.responders_for(env.account_hash, exclude=env.requester)
        if not members:
            raise NoResponders(env.account_hash.hex())
        self.rng.shuffle(members)
        fanout = Fanout(env.request_id, env.account_hash, env.params_version, env.query)
        results = self._gather(members, fanout)
        got = [r for r in results if r is not None]
        self.rng.shuffle(got)
        return BatchResult(got, len(members), len(members) - len(got))

    # ------------------------------------------------------------ audits

    def audit(self, account_hash: bytes, rng=None) -> list[tuple[str, int]]:
        """Query every registered responder with a random element, keeping the
        source mapping, and flag responders that claim membership."""
        rng = rng or self.rng
        members = self.responders_for(account_hash)
        if not members:
            return []
        hasher = self.params.hasher(self.params.hash_key_for(account_hash))
        element = rng.getrandbits(256).to_bytes(32, "big")
        query, kp = build_query(element, hasher, self.group, rng=rng)
        fanout = Fanout(rng.getrandbits(32), account_hash, self.params.version, query.to_bytes())
        expected = 2 * self.params.bucket_capacity
        verdicts = []
        for member, raw in zip(members, self._gather(members, fanout)):
            if raw is None:
                verdicts.append((member, AUDIT_NO_RESPONSE))
                continue
            try:
                hit = interpret(kp, PmtResponse.from_bytes(raw, self.group), expected)
            except MalformedResponse:
                hit = True
            if hit:
                log.warning("audit flagged responder %s", member)
            verdicts.append((member, AUDIT_FLAGGED if hit else AUDIT_OK))
        return verdicts


class DirectoryServer(FrameServer):
    """Network front end. AUDIT requests are accepted only from ``admin_hosts``."""

    def __init__(self, addr: tuple[str, int], directory: Directory,
                 admin_hosts: frozenset[str] = frozenset({"127.0.0.1", "::1"})):
        self.directory = directory
        self.admin_hosts = admin_hosts
        super().__init__(addr, self._dispatch)

    def _dispatch(self, frame: Frame, peer: tuple) -> Frame:
        d = self.directory
        try:
            if frame.type is FrameType.REGISTER:
                reg = Registration.from_payload(frame.payload)
                statuses = []
                for ah in reg.account_hashes:
                    try:
                        d.register(reg.member_id, ah)
                        statuses.append(REG_OK)
                    except DuplicateMember:
                        statuses.append(REG_DUPLICATE)
                    except LimitExceeded:
                        statuses.append(REG_LIMIT)
                return registration_reply(statuses)
            if frame.type is FrameType.QUERY:
                env = QueryEnvelope.from_payload(frame.payload)
                try:
                    res = d.forward(env)
                except NoResponders:
                    return ErrorMsg(ErrorCode.NO_RESPONDERS, "no responders for account",
                                    request_id=env.request_id).to_frame()
                except VersionMismatch as exc:
                    return ErrorMsg(ErrorCode.VERSION_MISMATCH, str(exc), request_id=env.request_id).to_frame()
                except ChallengeRequired:
                    return ErrorMsg(ErrorCode.CHALLENGE_REQUIRED, "challenge required",
                                    request_id=env.request_id).to_frame()
                return Batch(env.request_id, res.contacted, res.timeouts, tuple(res.responses)).to_frame()
            if frame.type is FrameType.AUDIT:
                if peer[0] not in self.admin_hosts:
                    return ErrorMsg(ErrorCode.NOT_MEMBER, "audit not permitted").to_frame()
                req = AuditRequest.from_payload(frame.payload)
                return AuditReport(tuple(d.audit(req.account_hash))).to_frame()
        except NotMember as exc:
            return ErrorMsg(ErrorCode.NOT_MEMBER, f"not an approved member: {exc}").to_frame()
        except FrameError as exc:
            return ErrorMsg(ErrorCode.MALFORMED, str(exc)).to_frame()
        return ErrorMsg(ErrorCode.MALFORMED, f"unexpected {frame.type.name} frame").to_frame()

    def stop(self) -> None:
        super().stop()
        self.directory.close()
