"""Single-host deployment: one directory and n responders on 127.0.0.1."""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field

from ..cuckoo import FilterParams
from ..detection import FAST_SLOW_HASH, DetectionEngine, Policy, SlowHash
from .client import DirectoryClient, NetworkChannel
from .directory import Directory, DirectoryServer
from .ratelimit import EscalationGate
from .responder import Responder, ResponderServer, register


@dataclass
class LoopbackDeployment:
    params: FilterParams
    group: object
    n_responders: int = 4
    deployment_key: bytes = b"loopback-deployment-key"
    policy: Policy = Policy.SUSP
    slow_hash: SlowHash = FAST_SLOW_HASH
    rate: float = 1000.0
    burst: float = 1000.0
    responder_timeout: float = 2.0
    batch_timeout: float = 5.0
    escalation: EscalationGate | None = None
    rng: object = None
    engines: list[DetectionEngine] = field(default_factory=list)
    responders: list[ResponderServer] = field(default_factory=list)
    directory: DirectoryServer | None = None

    def engine(self, **kw) -> DetectionEngine:
        return DetectionEngine(self.deployment_key, self.params, self.group.order, policy=self.policy,
                               slow_hash=self.slow_hash, rng=self.rng, **kw)

    def start(self) -> "LoopbackDeployment":
        self.rng = self.rng or secrets.SystemRandom()
        for _ in range(self.n_responders):
            eng = self.engine()
            srv = ResponderServer(("127.0.0.1", 0), Responder(eng, self.group, self.rate, self.burst)).start()
            self.engines.append(eng)
            self.responders.append(srv)
        members = {self.member_id(i): srv.address for i, srv in enumerate(self.responders)}
        d = Directory(members, self.params, self.group, responder_timeout=self.responder_timeout,
                      batch_timeout=self.batch_timeout, escalation=self.escalation, rng=self.rng)
        self.directory = DirectoryServer(("127.0.0.1", 0), d).start()
        return self

    @staticmethod
    def member_id(i: int) -> str:
        return f"site{i}"

    def register_account(self, account: str, responders: range | list[int] | None = None) -> bytes:
        ah = self.engines[0].account_hash(account)
        for i in responders if responders is not None else range(self.n_responders):
            self.engines[i].suspicious_set(ah)
            register(self.directory.address, self.member_id(i), [ah])
        return ah

    def client(self, timeout: float = 30.0) -> DirectoryClient:
        return DirectoryClient(self.directory.address, timeout)

    def channel(self, member_id: str = "", timeout: float = 30.0) -> NetworkChannel:
        return NetworkChannel(self.client(timeout), self.params, self.group, member_id, rng=self.rng)

    def stop(self) -> None:
        if self.directory is not None:
            self.directory.stop()
        for srv in self.responders:
            srv.stop()

    def __enter__(self) -> "LoopbackDeployment":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
