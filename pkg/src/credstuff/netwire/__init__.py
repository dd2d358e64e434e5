"""Wire protocol, directory, responder and requester roles."""

from .client import BatchResults, DirectoryClient, NetworkChannel, ProtocolError, RemoteError
from .directory import (
    BatchResult,
    ChallengeRequired,
    ConfigError,
    Directory,
    DirectoryServer,
    DuplicateMember,
    LimitExceeded,
    NotMember,
    VersionMismatch,
    load_members,
)
from .frames import ErrorCode, Frame, FrameError, FrameType
from .ratelimit import EscalationGate, KeyedLimiter, TokenBucket
from .responder import RateLimited, RegistrationError, Responder, ResponderServer, register
from .transport import FrameServer, parse_addr

__all__ = [
    "BatchResult",
    "BatchResults",
    "ChallengeRequired",
    "ConfigError",
    "Directory",
    "DirectoryClient",
    "DirectoryServer",
    "DuplicateMember",
    "ErrorCode",
    "EscalationGate",
    "Frame",
    "FrameError",
    "FrameServer",
    "FrameType",
    "KeyedLimiter",
    "LimitExceeded",
    "NetworkChannel",
    "NotMember",
    "ProtocolError",
    "RateLimited",
    "RegistrationError",
    "RemoteError",
    "Responder",
    "ResponderServer",
    "TokenBucket",
    "VersionMismatch",
    "load_members",
    "parse_addr",
    "register",
]
