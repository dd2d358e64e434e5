"""Command-line entry points: serve, login, sim and bench.

Deployment settings are merged with precedence flags > $CREDSTUFF_CONFIG >
--config file > built-in defaults. $CREDSTUFF_CONFIG holds either a JSON
object or the path of a JSON file.

Exit codes: 0 ok, 2 configuration, 3 network, 4 protocol.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import signal
import sys
import threading
import time
from typing import Any, Sequence

EXIT_OK, EXIT_CONFIG, EXIT_NETWORK, EXIT_PROTOCOL = 0, 2, 3, 4

DEFAULTS: dict[str, Any] = {
    "role": None,
    "listen": None,
    "dir": None,
    "members": None,
    "member_id": "",
    "policy": "susp",
    "capacity": 128,
    "bucket_capacity": 16,
    "fingerprint_bits": None,
    "key_seed": 0,
    "expire_days": 30.0,
    "rate_limit": 60.0,
    "seed": None,
    "group": "p256",
    "deployment_key": "credstuff-demo-deployment-key",
    "state": None,
    "w": 2,
    "proxy": None,
    "responder_timeout": 2.0,
    "batch_timeout": 5.0,
    "registration_cap": 64,
    "escalation_rate": None,
    "slow_hash": "scrypt",
    "max_failures": 100,
}

log = logging.getLogger("credstuff")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _load_json(text: str, origin: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{origin}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{origin}: expected a JSON object")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{origin}: unknown keys {sorted(unknown)}")
    return data


def _read_file(path: str, origin: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return _load_json(fh.read(), origin)
    except OSError as exc:
        raise ConfigError(f"{origin}: {exc}") from None


def resolve_config(args: argparse.Namespace, environ: dict[str, str] | None = None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_read_file(args.config, f"config file {args.config}"))
    env = environ.get("CREDSTUFF_CONFIG", "").strip()
    if env:
        cfg.update(_load_json(env, "CREDSTUFF_CONFIG") if env.startswith("{")
                   else _read_file(env, f"CREDSTUFF_CONFIG file {env}"))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def _group(cfg):
    from .group import get_group

    try:
        return get_group(cfg["group"])
    except (KeyError, ValueError):
        raise ConfigError(f"unknown group {cfg['group']!r}") from None


def _params(cfg, group):
    from .cuckoo import FilterParams

    bits = cfg["fingerprint_bits"]
    if bits is None:
        bits = 32 if group.order.bit_length() > 64 else 8
    try:
        params = FilterParams.for_capacity(int(cfg["capacity"]), int(cfg["bucket_capacity"]),
                                           fingerprint_space=1 << int(bits), key_seed=int(cfg["key_seed"]))
        params.check_group_order(group.order)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return params


def _addr(text, what, default_host="127.0.0.1"):
    from .netwire.transport import parse_addr

    if not text:
        raise ConfigError(f"missing {what} address")
    try:
        return parse_addr(str(text), default_host)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def _rng(cfg):
    return random.Random(cfg["seed"]) if cfg["seed"] is not None else None


def _engine(cfg, group, params, channel=None, rng=None):
    from .detection import DAY, DEFAULT_SLOW_HASH, FAST_SLOW_HASH, DetectionEngine, Policy

    try:
        policy = Policy(cfg["policy"])
    except ValueError:
        raise ConfigError(f"unknown policy {cfg['policy']!r}") from None
    slow = {"scrypt": DEFAULT_SLOW_HASH, "fast": FAST_SLOW_HASH}.get(cfg["slow_hash"])
    if slow is None:
        raise ConfigError(f"unknown slow_hash {cfg['slow_hash']!r}")
    expiration = float(cfg["expire_days"]) * DAY
    if expiration <= 0:
        raise ConfigError("expire_days must be positive")
    return DetectionEngine(str(cfg["deployment_key"]).encode(), params, group.order, policy=policy,
                           expiration=expiration, w=int(cfg["w"]), channel=channel, slow_hash=slow,
                           max_failures=cfg["max_failures"], rng=rng)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True), flush=True)


def _wait_for_signal() -> None:
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    while not stop.wait(0.5):
        pass


# ---------------------------------------------------------------- serve


def cmd_serve(args) -> int:
    from .netwire.directory import ConfigError as MembersError
    from .netwire.directory import Directory, DirectoryServer, load_members
    from .netwire.ratelimit import EscalationGate
    from .netwire.responder import Responder, ResponderServer, register
    from .netwire.transport import format_addr
    from .store import load_sets, save_sets

    cfg = resolve_config(args)
    group = _group(cfg)
    params = _params(cfg, group)
    rng = _rng(cfg)
    role = cfg["role"]
    if cfg["seed"] is not None:
        log.warning("--seed makes server randomness predictable; use only for testing")
    if role == "directory":
        if not cfg["members"]:
            raise ConfigError("directory needs --members")
        try:
            members = load_members(cfg["members"])
        except MembersError as exc:
            raise ConfigError(str(exc)) from None
        listen = _addr(cfg["listen"] or ":7001", "listen", "0.0.0.0")
        gate = None
        if cfg["escalation_rate"]:
            rate = float(cfg["escalation_rate"]) / 60.0
            gate = EscalationGate(rate, max(1.0, float(cfg["escalation_rate"])))
        d = Directory(members, params, group, int(cfg["registration_cap"]), float(cfg["responder_timeout"]),
                      float(cfg["batch_timeout"]), gate, rng,
                      _addr(cfg["proxy"], "proxy") if cfg["proxy"] else None)
        server = DirectoryServer(listen, d).start()
        _emit({"role": "directory", "listen": format_addr(server.address), "members": len(members)})
        try:
            _wait_for_signal()
        finally:
            server.stop()
        return EXIT_OK
    if role == "responder":
        if not cfg["member_id"]:
            raise ConfigError("responder needs --member-id")
        directory = _addr(cfg["dir"], "directory")
        listen = _addr(cfg["listen"] or ":7101", "listen", "0.0.0.0")
        engine = _engine(cfg, group, params, rng=rng)
        if cfg["state"]:
            try:
                load_sets(engine, cfg["state"])
            except ValueError as exc:
                raise ConfigError(f"state: {exc}") from None
        for account in args.register or ():
            engine.suspicious_set(engine.account_hash(account))
        per_min = float(cfg["rate_limit"])
        if per_min <= 0:
            raise ConfigError("rate_limit must be positive")
        server = ResponderServer(listen, Responder(engine, group, per_min / 60.0, max(1.0, per_min))).start()
        try:
            proxy = _addr(cfg["proxy"], "proxy") if cfg["proxy"] else None
            statuses = register(directory, cfg["member_id"], list(engine.sets), proxy=proxy) if engine.sets else []
            _emit({"role": "responder", "listen": format_addr(server.address), "member_id": cfg["member_id"],
                   "registered": sum(s == 0 for s in statuses), "accounts": len(engine.sets)})
            _wait_for_signal()
        finally:
            server.stop()
            if cfg["state"]:
                save_sets(engine, cfg["state"])
        return EXIT_OK
    raise ConfigError("serve needs --role directory or --role responder")


# ---------------------------------------------------------------- login


def cmd_login(args) -> int:
    from .detection import AdsVerdict, DirectoryUnavailable, LocalChannel, ads_sample
    from .netwire.client import DirectoryClient, NetworkChannel
    from .store import load_sets, save_sets

    cfg = resolve_config(args)
    group = _group(cfg)
    params = _params(cfg, group)
    rng = _rng(cfg)
    now = args.now if args.now is not None else time.time()
    if args.ads:
        try:
            rho_col, rho_cnt = (float(x) for x in args.ads.split(","))
            verdict = ads_sample(rho_col, rho_cnt, rng)
        except ValueError as exc:
            raise ConfigError(f"--ads: {exc}") from None
    else:
        verdict = AdsVerdict(bool(args.d_col), bool(args.d_cnt))

    channel = None
    if args.simulate is not None:
        if not 0 <= args.plant <= args.simulate:
            raise ConfigError("--plant must lie in [0, --simulate]")
        sites = [_engine(cfg, group, params, rng=rng) for _ in range(args.simulate)]
        channel = LocalChannel(sites, group, rng)
    elif cfg["dir"]:
        client = DirectoryClient(_addr(cfg["dir"], "directory"), float(cfg["batch_timeout"]) + 5.0,
                                 _addr(cfg["proxy"], "proxy") if cfg["proxy"] else None)
        channel = NetworkChannel(client, params, group, cfg["member_id"], rng)
    engine = _engine(cfg, group, params, channel, rng)
    engine.fail_open = not args.fail_closed
    if cfg["state"]:
        load_sets(engine, cfg["state"])

    e = engine.element(args.account, args.password)
    if args.simulate is not None:
        ah = engine.account_hash(args.account)
        for i, site in enumerate(sites):
            s = site.suspicious_set(ah)
            if i < args.plant:
                s.collect(e, False, AdsVerdict(True, True), now - 1)
    try:
        report = engine.login(args.account, e, not args.wrong, verdict, now)
    except DirectoryUnavailable as exc:
        _emit({"account": args.account, "error": "directory_unavailable", "detail": str(exc)})
        return EXIT_NETWORK
    if cfg["state"]:
        save_sets(engine, cfg["state"])
    _emit(report.as_dict())
    return EXIT_OK


# ---------------------------------------------------------------- sim


def _has2fa(text: str) -> frozenset[int]:
    if not text:
        return frozenset()
    try:
        return frozenset(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --has2fa {text!r}") from None


def _int_list(text: str) -> list[int]:
    out: list[int] = []
    try:
        for part in text.split(","):
            lo, sep, hi = part.partition("-")
            out.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    except ValueError:
        raise ConfigError(f"bad integer list {text!r}") from None
    return out


def _points(text: str) -> list[tuple[float, float]]:
    try:
        return [tuple(float(v) for v in p.split(":")) for p in text.split(",")]  # type: ignore[misc]
    except ValueError:
        raise ConfigError(f"bad ADS points {text!r}") from None


def cmd_sim(args) -> int:
    from .sim import (
        FdrConfig,
        StateSpaceTooLarge,
        TdrConfig,
        greedy_plant,
        make_sequential_recall,
        mc_fdr,
        mc_tdr,
        non_2fa_first,
        solve_fdr,
        solve_tdr,
        sweep_once,
    )
    from .sim.roc import LEGEND_POINTS, PRESETS, RocBase, roc_sweep, to_csv

    rng = random.Random(args.seed)
    try:
        if args.experiment == "fdr":
            cfg = FdrConfig(args.n, args.pwds, args.zipf, args.w, args.fpr_col, args.fpr_cnt)
            out = {"experiment": "fdr", "n": cfg.n, "pwds": cfg.n_pwds, "zipf": cfg.s, "w": cfg.w,
                   "fpr_col": cfg.fpr_col, "fpr_cnt": cfg.fpr_cnt}
            if args.mc:
                policies = {"greedy-plant": greedy_plant, "sequential-recall": make_sequential_recall(cfg.n_pwds)}
                policy = solve_fdr(cfg).policy if args.policy == "optimal" else policies[args.policy]
                est = mc_fdr(cfg, policy, args.trials, rng)
                out.update(method="mc", policy=args.policy, fdr=est.mean, half_width=est.half_width,
                           trials=est.trials)
            else:
                sol = solve_fdr(cfg)
                out.update(method="exact", fdr=sol.fdr, start_states=sol.start_states)
            _emit(out)
        elif args.experiment == "tdr":
            cfg = TdrConfig(args.n, args.pwds, args.zipf, args.w, args.tpr_col, args.tpr_cnt, _has2fa(args.has2fa))
            out = {"experiment": "tdr", "n": cfg.n, "pwds": cfg.n_pwds, "zipf": cfg.s, "w": cfg.w,
                   "tpr_col": cfg.tpr_col, "tpr_cnt": cfg.tpr_cnt, "has2fa": sorted(cfg.has2fa)}
            if args.mc:
                policies = {"sweep-once": sweep_once, "non-2fa-first": non_2fa_first}
                policy = solve_tdr(cfg).policy if args.policy == "optimal" else policies[args.policy]
                est = mc_tdr(cfg, policy, args.trials, rng)
                out.update(method="mc", policy=args.policy, tdr=est.ratio, half_width=est.ratio_half_width,
                           e_accessed=est.accessed.mean, e_detected=est.detected.mean, trials=args.trials)
            else:
                sol = solve_tdr(cfg)
                out.update(method="exact", tdr=sol.tdr, e_accessed=sol.e_accessed,
                           e_detected=sol.e_detected, start_states=sol.start_states)
            _emit(out)
        else:
            base = PRESETS[args.preset] if args.preset else RocBase()
            overrides = {k: v for k, v in (("n", args.n), ("n_pwds", args.pwds), ("s", args.zipf),
                                           ("fpr_cnt", args.fpr_cnt), ("tpr_cnt", args.tpr_cnt)) if v is not None}
            if args.has2fa is not None:
                overrides["has2fa"] = _has2fa(args.has2fa)
            base = RocBase(**{**base.__dict__, **overrides})
            points = _points(args.points) if args.points else list(LEGEND_POINTS)
            ws = _int_list(args.ws) if args.ws else list(range(1, base.n + 1))
            text = to_csv(roc_sweep(base, points, ws, args.mc, args.trials, rng))
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
    except StateSpaceTooLarge as exc:
        print(f"error: {exc} (rerun with --mc)", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return EXIT_OK


# ---------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    from .bench import INDUSTRY_LOAD_QPS, run_point

    cfg = resolve_config(args)
    group = _group(cfg)
    ells = _int_list(args.ells)
    ns = _int_list(args.n)
    if args.queries < 1:
        raise ConfigError("--queries must be >= 1")
    for n in ns:
        for ell in ells:
            row = run_point(ell, n, group, args.queries, args.duration, args.concurrency, cfg["seed"],
                            args.responder_timeout, args.batch_timeout)
            _emit(row.as_dict())
    print(f"context: combined industry load is about {INDUSTRY_LOAD_QPS:.0f} queries/s", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _deployment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--group", choices=["p256", "production", "test"])
    p.add_argument("--capacity", type=int, help="suspicious-set capacity (filter sized from it)")
    p.add_argument("--bucket-capacity", type=int)
    p.add_argument("--fingerprint-bits", type=int)
    p.add_argument("--policy", choices=["susp", "susp-plus"])
    p.add_argument("--expire-days", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--deployment-key")
    p.add_argument("--state", help="directory of suspicious-set snapshots")
    p.add_argument("--member-id")
    p.add_argument("--dir", help="directory address host:port")
    p.add_argument("--proxy", help="SOCKS5 proxy host:port for outbound connections")
    p.add_argument("--w", type=int, help="attack width")
    p.add_argument("--slow-hash", choices=["scrypt", "fast"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="credstuff", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run a directory or responder")
    _deployment_flags(p)
    p.add_argument("--role", choices=["directory", "responder"])
    p.add_argument("--listen", help="listen address, e.g. :7001")
    p.add_argument("--members", help="allowlist file: 'member_id host:port' per line")
    p.add_argument("--rate-limit", type=float, help="responder queries per minute per account")
    p.add_argument("--escalation-rate", type=float, help="directory challenge threshold, queries per minute")
    p.add_argument("--responder-timeout", type=float)
    p.add_argument("--batch-timeout", type=float)
    p.add_argument("--registration-cap", type=int)
    p.add_argument("--register", action="append", metavar="ACCOUNT", help="account to serve (repeatable)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("login", help="run both detection phases for one login attempt")
    _deployment_flags(p)
    p.add_argument("--account", required=True)
    p.add_argument("--password", required=True)
    p.add_argument("--wrong", action="store_true", help="the password is incorrect")
    p.add_argument("--d-col", type=int, choices=[0, 1], default=1)
    p.add_argument("--d-cnt", type=int, choices=[0, 1], default=1)
    p.add_argument("--ads", metavar="RHO_COL,RHO_CNT", help="sample the verdict instead")
    p.add_argument("--simulate", type=int, metavar="N", help="use N in-process responders")
    p.add_argument("--plant", type=int, default=0, metavar="K", help="responders already holding the password")
    p.add_argument("--now", type=float, help="timestamp in seconds")
    p.add_argument("--fail-closed", action="store_true")
    p.add_argument("--batch-timeout", type=float)
    p.set_defaults(func=cmd_login)

    p = sub.add_parser("sim", help="detection-rate experiments")
    p.add_argument("experiment", choices=["fdr", "tdr", "roc"])
    p.add_argument("--n", type=int)
    p.add_argument("--pwds", type=int)
    p.add_argument("--zipf", type=float)
    p.add_argument("--w", type=int)
    p.add_argument("--fpr-col", type=float)
    p.add_argument("--fpr-cnt", type=float)
    p.add_argument("--tpr-col", type=float)
    p.add_argument("--tpr-cnt", type=float)
    p.add_argument("--has2fa", help="comma-separated 1-based sites using SUSP+")
    p.add_argument("--mc", action="store_true", help="Monte Carlo instead of exact solving")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--policy", default=None,
                   help="mc policy: optimal, greedy-plant, sequential-recall (fdr); sweep-once, non-2fa-first (tdr)")
    p.add_argument("--preset", choices=["phishing-baseline", "researching-baseline"])
    p.add_argument("--points", help="roc ADS points, e.g. 0.05:0.61,0.10:0.74")
    p.add_argument("--ws", help="roc widths, e.g. 1-5")
    p.add_argument("--out", help="roc CSV path (default stdout)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("bench", help="loopback latency and throughput")
    p.add_argument("--config")
    p.add_argument("--group", choices=["p256", "production", "test"])
    p.add_argument("--ells", default="128,256,512,1024")
    p.add_argument("--n", default="16", help="responder counts, e.g. 4,16")
    p.add_argument("--queries", type=int, default=5)
    p.add_argument("--duration", type=float, default=0.0, help="closed-loop seconds per point")
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--responder-timeout", type=float, default=60.0)
    p.add_argument("--batch-timeout", type=float, default=120.0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


_SIM_DEFAULTS = {
    "fdr": {"n": 1, "pwds": 2, "zipf": 0.0, "w": 1, "fpr_col": 1.0, "fpr_cnt": 0.3, "policy": "greedy-plant"},
    "tdr": {"n": 3, "pwds": 2, "zipf": 0.0, "w": 1, "tpr_col": 0.74, "tpr_cnt": 0.95, "policy": "sweep-once",
            "has2fa": ""},
}


def main(argv: Sequence[str] | None = None) -> int:
    from .detection import DirectoryUnavailable
    from .netwire.client import ProtocolError, RemoteError
    from .netwire.frames import FrameError
    from .netwire.responder import RegistrationError
    from .pmt import MalformedQuery, MalformedResponse

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "sim" and args.experiment in _SIM_DEFAULTS:
        for k, v in _SIM_DEFAULTS[args.experiment].items():
            if getattr(args, k) is None:
                setattr(args, k, v)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, RemoteError, FrameError, MalformedQuery, MalformedResponse, RegistrationError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (DirectoryUnavailable, OSError) as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK


if __name__ == "__main__":
    sys.exit(main())
