import itertools
import random
import socket
import struct
from collections import Counter

import pytest
from scipy import stats

from credstuff.cuckoo import TEST_PARAMS
from credstuff.detection import FAST_SLOW_HASH, AdsVerdict, DetectionEngine, DirectoryUnavailable, NoResponders
from credstuff.group import TEST_GROUP
from credstuff.netwire import (
    ChallengeRequired,
    ConfigError,
    Directory,
    DirectoryClient,
    DirectoryServer,
    DuplicateMember,
    ErrorCode,
    EscalationGate,
    Frame,
    FrameError,
    FrameType,
    LimitExceeded,
    NetworkChannel,
    NotMember,
    Responder,
    ResponderServer,
    TokenBucket,
    VersionMismatch,
    load_members,
    parse_addr,
    register,
)
from credstuff.netwire.client import RemoteError
from credstuff.netwire.frames import (
    AUDIT_FLAGGED,
    AUDIT_OK,
    REG_DUPLICATE,
    REG_LIMIT,
    REG_OK,
    AuditReport,
    AuditRequest,
    Batch,
    ErrorMsg,
    Fanout,
    QueryEnvelope,
    Registration,
    ResponseMsg,
    decode_frame,
    parse_registration_reply,
    read_frame,
    send_frame,
)
from credstuff.netwire.loopback import LoopbackDeployment
from credstuff.netwire.ratelimit import CHALLENGE, PASS
from credstuff.netwire.transport import connect, format_addr, request
from credstuff.pmt import build_query
from stubs import AlwaysTrueResponder, GarbageResponder, SlowResponder, Socks5Proxy

AH = bytes(range(32))
KEY = b"k" * 32


class Clock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t


# ---------------------------------------------------------------- frames


def test_frame_layout():
    f = Frame(FrameType.QUERY, b"abc")
    assert f.to_bytes() == b"\x00\x00\x00\x05\x02\x01abc"
    assert decode_frame(f.to_bytes()) == f


@pytest.mark.parametrize("raw", [
    b"\x00\x00\x00\x01\x02\x01",          # length below header remainder
    b"\x00\x00\x00\x02\x63\x01",          # unknown type
    b"\x00\x00\x00\x02\x02\x09",          # unknown version
    b"\x00\x00\x00\x05\x02\x01ab",        # truncated
    b"\x7f\x00\x00\x00\x02\x01",          # oversize
    b"\x00\x00",
])
def test_frame_rejects(raw):
    with pytest.raises(FrameError):
        decode_frame(raw)


def test_payload_roundtrips():
    msgs = [
        (Registration("site-1", (AH, AH[::-1])), Registration),
        (QueryEnvelope(7, AH, 1, "req", b"q" * 10), QueryEnvelope),
        (Fanout(7, AH, 1, b"q" * 10), Fanout),
        (ResponseMsg(9, b"resp"), ResponseMsg),
        (Batch(3, 4, 1, (b"a", b"", b"ccc")), Batch),
        (AuditRequest(AH), AuditRequest),
        (AuditReport((("a", AUDIT_OK), ("b", AUDIT_FLAGGED))), AuditReport),
        (ErrorMsg(ErrorCode.RATE_LIMITED, "slow down", 1500, 42), ErrorMsg),
    ]
    for msg, cls in msgs:
        frame = msg.to_frame()
        assert decode_frame(frame.to_bytes()) == frame
        assert cls.from_payload(frame.payload) == msg


def test_fanout_hides_requester():
    env = QueryEnvelope(7, AH, 1, "requester-site", b"q")
    fan = Fanout(env.request_id, env.account_hash, env.params_version, env.query)
    assert b"requester-site" not in fan.to_frame().to_bytes()


def test_payload_rejects():
    with pytest.raises(FrameError):
        Registration("x", (b"short",)).to_frame()
    with pytest.raises(FrameError):
        Batch.from_payload(struct.pack(">IHHH", 1, 1, 0, 1) + struct.pack(">I", 10) + b"abc")
    with pytest.raises(FrameError):
        ErrorMsg.from_payload(struct.pack(">IBI", 0, 99, 0) + b"\x00\x00")
    with pytest.raises(FrameError):
        AuditRequest.from_payload(AH + b"x")
    with pytest.raises(FrameError):
        parse_registration_reply(b"\x00\x05\x00")


def test_addresses():
    assert parse_addr(":7001") == ("127.0.0.1", 7001)
    assert parse_addr("10.0.0.1:80") == ("10.0.0.1", 80)
    assert parse_addr("[::1]:9") == ("::1", 9)
    assert format_addr(("::1", 9)) == "[::1]:9"
    for bad in ("nope", "h:x", "h:70000"):
        with pytest.raises(ValueError):
            parse_addr(bad)


def test_load_members(tmp_path):
    p = tmp_path / "members.txt"
    p.write_text("# comment\nsite0 127.0.0.1:7100\n\nsite1 :7101\n")
    assert load_members(p) == {"site0": ("127.0.0.1", 7100), "site1": ("127.0.0.1", 7101)}
    for text in ("site0\n", "site0 a:1\nsite0 a:2\n", "site0 host:port\n"):
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_members(p)
    with pytest.raises(ConfigError):
        load_members(tmp_path / "missing.txt")


# ---------------------------------------------------------------- rate limits


def test_token_bucket():
    clk = Clock()
    b = TokenBucket(rate=2, burst=3, clock=clk)
    assert [b.take() for _ in range(3)] == [0, 0, 0]
    assert b.take() == pytest.approx(0.5)
    clk.t = 0.5
    assert b.take() == 0
    with pytest.raises(ValueError):
        TokenBucket(0, 1)


def test_escalation_gate():
    clk = Clock()
    seen = []
    gate = EscalationGate(rate=1, burst=2, clock=clk, on_challenge=seen.append)
    assert [gate.check(AH) for _ in range(3)] == [PASS, PASS, CHALLENGE]
    assert seen == [AH]
    assert gate.check(AH[::-1]) == PASS
    clk.t = 5
    assert gate.check(AH) == PASS


# ---------------------------------------------------------------- directory core


def fake_members(k):
    return {f"m{i}": ("127.0.0.1", 1) for i in range(k)}


def test_registration_rules():
    d = Directory(fake_members(70), TEST_PARAMS, TEST_GROUP)
    try:
        for i in range(64):
            d.register(f"m{i}", AH)
        with pytest.raises(LimitExceeded):
            d.register("m64", AH)
        with pytest.raises(DuplicateMember):
            d.register("m0", AH)
        with pytest.raises(NotMember):
            d.register("stranger", AH)
        assert len(d.responders_for(AH, exclude="m3")) == 63
    finally:
        d.close()


def test_forward_errors():
    clk = Clock()
    d = Directory(fake_members(2), TEST_PARAMS, TEST_GROUP, escalation=EscalationGate(1, 1, clk))
    try:
        with pytest.raises(VersionMismatch):
            d.forward(QueryEnvelope(1, AH, TEST_PARAMS.version + 1, "", b""))
        with pytest.raises(NoResponders):
            d.forward(QueryEnvelope(1, AH, TEST_PARAMS.version, "", b""))
        with pytest.raises(ChallengeRequired):
            d.forward(QueryEnvelope(1, AH, TEST_PARAMS.version, "", b""))
        d.register("m0", AH)
        clk.t = 10
        with pytest.raises(NoResponders):
            d.forward(QueryEnvelope(1, AH, TEST_PARAMS.version, "m0", b""))
    finally:
        d.close()


def test_batch_order_is_uniform():
    d = Directory(fake_members(4), TEST_PARAMS, TEST_GROUP, rng=random.Random(1))
    try:
        for i in range(4):
            d.register(f"m{i}", AH)
        d._gather = lambda members, fanout: [m.encode() for m in members]
        env = QueryEnvelope(1, AH, TEST_PARAMS.version, "", b"")
        counts = Counter(tuple(d.forward(env).responses) for _ in range(24 * 200))
    finally:
        d.close()
    perms = [tuple(f"m{i}".encode() for i in p) for p in itertools.permutations(range(4))]
    assert set(counts) == set(perms)
    assert stats.chisquare([counts[p] for p in perms]).pvalue > 0.001


# ---------------------------------------------------------------- over sockets


@pytest.fixture
def responder_server(rng):
    eng = DetectionEngine(KEY, TEST_PARAMS, TEST_GROUP.order, slow_hash=FAST_SLOW_HASH, rng=rng)
    clk = Clock()
    srv = ResponderServer(("127.0.0.1", 0), Responder(eng, TEST_GROUP, rate=1, burst=2, clock=clk)).start()
    yield srv, eng, clk
    srv.stop()


def fanout_for(rng, x=b"x", rid=5):
    hasher = TEST_PARAMS.hasher(TEST_PARAMS.hash_key_for(AH))
    q, kp = build_query(x, hasher, TEST_GROUP, rng=rng)
    return Fanout(rid, AH, TEST_PARAMS.version, q.to_bytes()), kp


def test_responder_rate_limit(responder_server, rng):
    srv, _, clk = responder_server
    fan, _ = fanout_for(rng)
    with connect(srv.address, 5) as sock:
        for _ in range(2):
            send_frame(sock, fan.to_frame())
            assert read_frame(sock).type is FrameType.RESPONSE
        send_frame(sock, fan.to_frame())
        reply = read_frame(sock)
        err = ErrorMsg.from_payload(reply.payload)
        assert err.code is ErrorCode.RATE_LIMITED and err.retry_after_ms == 1000 and err.request_id == 5
        clk.t = 1.0
        send_frame(sock, fan.to_frame())
        assert read_frame(sock).type is FrameType.RESPONSE


def test_malformed_query_keeps_connection(responder_server, rng):
    srv, _, _ = responder_server
    fan, _ = fanout_for(rng)
    bad = Fanout(1, AH, TEST_PARAMS.version, b"\x02\x00\x10garbage")
    with connect(srv.address, 5) as sock:
        send_frame(sock, bad.to_frame())
        assert ErrorMsg.from_payload(read_frame(sock).payload).code is ErrorCode.MALFORMED
        send_frame(sock, Fanout(1, AH, TEST_PARAMS.version + 1, fan.query).to_frame())
        assert ErrorMsg.from_payload(read_frame(sock).payload).code is ErrorCode.MALFORMED
        send_frame(sock, Frame(FrameType.QUERY, b""))
        assert read_frame(sock).type is FrameType.ERROR
        send_frame(sock, fan.to_frame())
        assert read_frame(sock).type is FrameType.RESPONSE


def test_bad_header_closes_connection(responder_server):
    srv, _, _ = responder_server
    with connect(srv.address, 5) as sock:
        sock.sendall(b"\x00\x00\x00\x02\x63\x01")
        assert ErrorMsg.from_payload(read_frame(sock).payload).code is ErrorCode.MALFORMED
        assert sock.recv(1) == b""


def test_responder_answers_membership(responder_server, rng):
    from credstuff.pmt import PmtResponse, interpret

    srv, eng, _ = responder_server
    eng.suspicious_set(AH).collect(b"x", False, AdsVerdict(True, False), 0)
    fan, kp = fanout_for(rng)
    reply = request(srv.address, fan.to_frame(), 5)
    msg = ResponseMsg.from_payload(reply.payload)
    assert msg.request_id == 5
    assert interpret(kp, PmtResponse.from_bytes(msg.response, TEST_GROUP), 32)


def start_mixed(rng, kinds, responder_timeout=0.5, batch_timeout=3.0):
    servers, members = [], {}
    for i, cls in enumerate(kinds):
        eng = DetectionEngine(KEY, TEST_PARAMS, TEST_GROUP.order, slow_hash=FAST_SLOW_HASH, rng=rng)
        srv = ResponderServer(("127.0.0.1", 0), cls(eng, TEST_GROUP, 100, 100)).start()
        servers.append(srv)
        members[f"s{i}"] = srv.address
    d = Directory(members, TEST_PARAMS, TEST_GROUP, responder_timeout=responder_timeout,
                  batch_timeout=batch_timeout, rng=rng)
    dsrv = DirectoryServer(("127.0.0.1", 0), d).start()
    for m in members:
        register(dsrv.address, m, [AH])
    return dsrv, servers


def stop_all(dsrv, servers):
    dsrv.stop()
    for s in servers:
        s.stop()


def test_timeout_yields_partial_batch(rng):
    dsrv, servers = start_mixed(rng, [Responder, Responder, SlowResponder])
    try:
        ch = NetworkChannel(DirectoryClient(dsrv.address), TEST_PARAMS, TEST_GROUP, rng=rng)
        res = ch.query_element(AH, b"x")
        assert len(res) == 2 and res.contacted == 3 and res.timeouts == 1
        assert res == [False, False]
    finally:
        stop_all(dsrv, servers)


def test_garbage_response_aborted_and_audited(rng):
    dsrv, servers = start_mixed(rng, [Responder, GarbageResponder])
    try:
        client = DirectoryClient(dsrv.address)
        res = NetworkChannel(client, TEST_PARAMS, TEST_GROUP, rng=rng).query_element(AH, b"x")
        assert res == [False] and res.aborted == 1
        assert dict(client.audit(AH)) == {"s0": AUDIT_OK, "s1": AUDIT_FLAGGED}
    finally:
        stop_all(dsrv, servers)


def test_audit_flags_always_true(rng):
    dsrv, servers = start_mixed(rng, [Responder, AlwaysTrueResponder, Responder])
    try:
        client = DirectoryClient(dsrv.address)
        verdicts = dict(client.audit(AH))
        assert verdicts == {"s0": AUDIT_OK, "s1": AUDIT_FLAGGED, "s2": AUDIT_OK}
        assert client.audit(b"\x00" * 32) == []
    finally:
        stop_all(dsrv, servers)


def test_directory_server_errors(rng):
    dsrv, servers = start_mixed(rng, [Responder])
    try:
        client = DirectoryClient(dsrv.address)
        with pytest.raises(NoResponders):
            client.query(QueryEnvelope(1, b"\x01" * 32, TEST_PARAMS.version, "", b""))
        with pytest.raises(RemoteError) as exc:
            client.query(QueryEnvelope(1, AH, TEST_PARAMS.version + 3, "", b""))
        assert exc.value.code is ErrorCode.VERSION_MISMATCH
        assert register(dsrv.address, "s0", [AH, b"\x02" * 32]) == [REG_DUPLICATE, REG_OK]
        reply = request(dsrv.address, Registration("intruder", (AH,)).to_frame(), 5)
        assert ErrorMsg.from_payload(reply.payload).code is ErrorCode.NOT_MEMBER
        reply = request(dsrv.address, Frame(FrameType.RESPONSE, b""), 5)
        assert ErrorMsg.from_payload(reply.payload).code is ErrorCode.MALFORMED
    finally:
        stop_all(dsrv, servers)


def test_registration_limit_over_wire(rng):
    members = {f"m{i}": ("127.0.0.1", 1) for i in range(66)}
    d = Directory(members, TEST_PARAMS, TEST_GROUP)
    dsrv = DirectoryServer(("127.0.0.1", 0), d).start()
    try:
        statuses = [register(dsrv.address, f"m{i}", [AH])[0] for i in range(65)]
        assert statuses == [REG_OK] * 64 + [REG_LIMIT]
    finally:
        dsrv.stop()


def test_audit_admin_only(rng):
    d = Directory(fake_members(1), TEST_PARAMS, TEST_GROUP)
    dsrv = DirectoryServer(("127.0.0.1", 0), d, admin_hosts=frozenset({"192.0.2.1"})).start()
    try:
        with pytest.raises(RemoteError) as exc:
            DirectoryClient(dsrv.address).audit(AH)
        assert exc.value.code is ErrorCode.NOT_MEMBER
    finally:
        dsrv.stop()


def test_directory_unreachable():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        addr = s.getsockname()
    ch = NetworkChannel(DirectoryClient(addr, timeout=1), TEST_PARAMS, TEST_GROUP)
    with pytest.raises(DirectoryUnavailable):
        ch.query_element(AH, b"x")


def test_socks5_proxy(rng):
    proxy = Socks5Proxy()
    dsrv, servers = start_mixed(rng, [Responder, AlwaysTrueResponder])
    try:
        client = DirectoryClient(dsrv.address, proxy=proxy.server_address)
        res = NetworkChannel(client, TEST_PARAMS, TEST_GROUP, rng=rng).query_element(AH, b"x")
        assert sorted(res) == [False, True]
        assert proxy.connections == 1
    finally:
        stop_all(dsrv, servers)
        proxy.stop()


# ---------------------------------------------------------------- loopback


def test_loopback_detects_planted_password(rng):
    with LoopbackDeployment(TEST_PARAMS, TEST_GROUP, rng=rng) as dep:
        ah = dep.register_account("victim@x")
        e = dep.engines[0].element("victim@x", "leaked")
        for eng in dep.engines[1:3]:
            eng.suspicious_set(ah).collect(e, False, AdsVerdict(True, False), 0)
        site = dep.engine(channel=dep.channel("site0"), w=2)
        rep = site.login("victim@x", e, True, AdsVerdict(True, True), 1)
        assert rep.decision.detected and rep.decision.queried == 3 and rep.decision.matches == 2
        fresh = site.element("victim@x", "fresh")
        assert not site.login("victim@x", fresh, True, AdsVerdict(True, True), 2).decision.detected
