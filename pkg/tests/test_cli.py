import csv
import io
import json
import os
import signal
import subprocess
import sys
from pathlib import Path

import pytest

from credstuff.cli import DEFAULTS, ConfigError, build_parser, main, resolve_config
from oracles import tdr_bruteforce

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


def approx_equal(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return a == pytest.approx(b, rel=1e-9, abs=1e-15)
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(approx_equal(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(approx_equal(x, y) for x, y in zip(a, b))
    return a == b


def check_json_golden(out, name):
    want = (GOLDEN / name).read_text()
    assert list(json.loads(out)) == list(json.loads(want))  # key order is part of the schema
    assert approx_equal(json.loads(out), json.loads(want))


# ---------------------------------------------------------------- sim


def test_sim_fdr_hand_case(capsys):
    rc, out, _ = run(capsys, "sim", "fdr", "--n", "1", "--pwds", "2", "--zipf", "0", "--w", "1",
                     "--fpr-col", "1", "--fpr-cnt", "0.3")
    assert rc == 0 and json.loads(out)["fdr"] == 0.15
    check_json_golden(out, "sim_fdr_n1.json")


def test_sim_output_independent_of_earlier_solves(capsys):
    args = ("sim", "fdr", "--n", "2", "--pwds", "2", "--w", "1")
    _, first, _ = run(capsys, *args)
    run(capsys, "sim", "fdr", "--n", "3", "--pwds", "2", "--w", "2")
    _, again, _ = run(capsys, *args)
    assert first == again


def test_sim_tdr_undefined(capsys):
    rc, out, _ = run(capsys, "sim", "tdr", "--w", "4", "--n", "3")
    assert rc == 0 and json.loads(out)["tdr"] is None
    check_json_golden(out, "sim_tdr_w4.json")


def test_sim_tdr_matches_oracle(capsys):
    rc, out, _ = run(capsys, "sim", "tdr", "--n", "3", "--w", "1", "--tpr-col", "1", "--tpr-cnt", "1")
    ea, ed = tdr_bruteforce(3, 2, 0.0, 1, 1.0, 1.0)
    got = json.loads(out)
    assert abs(got["e_accessed"] - ea) < 1e-9 and abs(got["e_detected"] - ed) < 1e-9
    check_json_golden(out, "sim_tdr_n3.json")


def test_sim_roc_preset_golden(capsys):
    rc, out, _ = run(capsys, "sim", "roc", "--preset", "phishing-baseline")
    assert rc == 0
    got = list(csv.reader(io.StringIO(out)))
    want = list(csv.reader(io.StringIO((GOLDEN / "sim_roc_phishing.csv").read_text())))
    assert got[0] == want[0] and len(got) == len(want)
    for g, w in zip(got[1:], want[1:]):
        assert [x == "" for x in g] == [x == "" for x in w]
        assert [float(x) for x in g if x] == pytest.approx([float(x) for x in w if x], rel=1e-9, abs=1e-15)


def test_sim_roc_to_file(capsys, tmp_path):
    out = tmp_path / "roc.csv"
    rc, text, _ = run(capsys, "sim", "roc", "--n", "3", "--pwds", "2", "--points", "0.1:0.74", "--ws", "1-2",
                      "--out", str(out))
    assert rc == 0 and text == ""
    assert len(out.read_text().strip().split("\n")) == 3


def test_sim_mc_seeded(capsys):
    args = ("sim", "fdr", "--n", "3", "--pwds", "2", "--mc", "--trials", "2000", "--seed", "9")
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b and json.loads(a)["method"] == "mc"
    rc, out, _ = run(capsys, "sim", "fdr", "--mc", "--policy", "optimal", "--trials", "4000", "--seed", "1")
    est = json.loads(out)
    assert abs(est["fdr"] - 0.15) <= est["half_width"] * 1.5
    rc, out, _ = run(capsys, "sim", "tdr", "--mc", "--trials", "500", "--seed", "1", "--has2fa", "1")
    assert rc == 0 and json.loads(out)["has2fa"] == [1]


def test_sim_state_space_suggests_mc(capsys):
    rc, _, err = run(capsys, "sim", "fdr", "--n", "30", "--pwds", "5")
    assert rc == 2 and "--mc" in err


def test_sim_bad_input(capsys):
    rc, _, err = run(capsys, "sim", "fdr", "--w", "0")
    assert rc == 2
    rc, _, _ = run(capsys, "sim", "tdr", "--has2fa", "x")
    assert rc == 2
    rc, _, _ = run(capsys, "sim", "fdr", "--mc", "--trials", "0")
    assert rc == 2


# ---------------------------------------------------------------- login


LOGIN = ("login", "--group", "test", "--slow-hash", "fast", "--seed", "3", "--now", "1000",
         "--account", "alice@example.com", "--password", "hunter2")


def test_login_planted_golden(capsys):
    rc, out, _ = run(capsys, *LOGIN, "--simulate", "4", "--plant", "2")
    assert rc == 0 and json.loads(out)["detected"]
    check_json_golden(out, "login_planted.json")


def test_login_below_threshold(capsys):
    rc, out, _ = run(capsys, *LOGIN, "--simulate", "4", "--plant", "1")
    rep = json.loads(out)
    assert not rep["detected"] and rep["matches"] == 1


def test_login_wrong_password_skips_counting(capsys, tmp_path):
    rc, out, _ = run(capsys, *LOGIN, "--wrong", "--simulate", "4", "--plant", "4", "--state", str(tmp_path))
    rep = json.loads(out)
    assert rep["queried"] == 0 and rep["collected"] and not rep["detected"]
    assert len(list(tmp_path.glob("*.ckf"))) == 1


def test_login_fail_open_and_closed(capsys):
    rc, out, _ = run(capsys, *LOGIN)
    assert rc == 0 and json.loads(out)["events"][0]["event"] == "directory_unavailable"
    rc, out, _ = run(capsys, *LOGIN, "--fail-closed")
    assert rc == 3 and json.loads(out)["error"] == "directory_unavailable"


def test_login_unreachable_directory(capsys):
    rc, out, _ = run(capsys, *LOGIN, "--dir", "127.0.0.1:1", "--fail-closed")
    assert rc == 3


def test_login_bad_plant(capsys):
    rc, _, err = run(capsys, *LOGIN, "--simulate", "2", "--plant", "3")
    assert rc == 2 and "--plant" in err


# ---------------------------------------------------------------- config


def test_config_precedence(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"w": 5, "policy": "susp-plus", "capacity": 256}))
    args = build_parser().parse_args(["login", "--account", "a", "--password", "p", "--config", str(f),
                                      "--w", "3"])
    cfg = resolve_config(args, {"CREDSTUFF_CONFIG": json.dumps({"w": 4, "capacity": 512})})
    assert cfg["w"] == 3 and cfg["capacity"] == 512 and cfg["policy"] == "susp-plus"
    assert cfg["expire_days"] == DEFAULTS["expire_days"]
    env_file = tmp_path / "env.json"
    env_file.write_text(json.dumps({"capacity": 1024}))
    assert resolve_config(args, {"CREDSTUFF_CONFIG": str(env_file)})["capacity"] == 1024


def test_config_errors(tmp_path):
    args = build_parser().parse_args(["login", "--account", "a", "--password", "p"])
    with pytest.raises(ConfigError):
        resolve_config(args, {"CREDSTUFF_CONFIG": '{"bogus": 1}'})
    with pytest.raises(ConfigError):
        resolve_config(args, {"CREDSTUFF_CONFIG": "{not json"})
    with pytest.raises(ConfigError):
        resolve_config(args, {"CREDSTUFF_CONFIG": str(tmp_path / "missing.json")})


def test_serve_bad_members_file(capsys, tmp_path):
    bad = tmp_path / "members.txt"
    bad.write_text("only-one-field\n")
    rc, _, err = run(capsys, "serve", "--role", "directory", "--listen", ":0", "--members", str(bad))
    assert rc == 2 and "members" in err


def test_serve_requires_role(capsys):
    rc, _, _ = run(capsys, "serve", "--listen", ":0")
    assert rc == 2


# ---------------------------------------------------------------- processes


def _spawn(*argv, env=None):
    return subprocess.Popen([sys.executable, "-m", "credstuff.cli", *argv], stdout=subprocess.PIPE,
                            stderr=subprocess.PIPE, text=True, env=env)


def _listen_addr(proc):
    line = proc.stdout.readline()
    assert line, proc.stderr.read()
    return json.loads(line)["listen"]


def test_multiprocess_deployment(tmp_path):
    env = {**os.environ, "CREDSTUFF_CONFIG": json.dumps({"group": "test", "slow_hash": "fast"})}
    members = tmp_path / "members.txt"
    # responders bind fixed free ports so the allowlist can name them up front
    import socket

    ports = []
    socks = []
    for _ in range(2):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        ports.append(s.getsockname()[1])
        socks.append(s)
    for s in socks:
        s.close()
    members.write_text("".join(f"site{i} 127.0.0.1:{p}\n" for i, p in enumerate(ports)))
    procs = []
    try:
        d = _spawn("serve", "--role", "directory", "--listen", "127.0.0.1:0", "--members", str(members), env=env)
        procs.append(d)
        daddr = _listen_addr(d)
        for i, p in enumerate(ports):
            state = tmp_path / f"state{i}"
            # plant the password at both responders via a wrong-password login first
            subprocess.run([sys.executable, "-m", "credstuff.cli", "login", "--account", "bob@x",
                            "--password", "leaked", "--wrong", "--state", str(state), "--now", "10"],
                           env=env, check=True, capture_output=True)
            r = _spawn("serve", "--role", "responder", "--listen", f"127.0.0.1:{p}", "--dir", daddr,
                       "--member-id", f"site{i}", "--state", str(state), "--register", "bob@x", env=env)
            procs.append(r)
            _listen_addr(r)
        out = subprocess.run([sys.executable, "-m", "credstuff.cli", "login", "--account", "bob@x",
                              "--password", "leaked", "--dir", daddr, "--now", "20"],
                             env=env, capture_output=True, text=True, timeout=60)
        rep = json.loads(out.stdout)
        assert out.returncode == 0 and rep["detected"] and rep["matches"] == 2
        out = subprocess.run([sys.executable, "-m", "credstuff.cli", "login", "--account", "carol@x",
                              "--password", "x", "--dir", daddr], env=env, capture_output=True, text=True,
                             timeout=60)
        assert json.loads(out.stdout)["events"][0]["event"] == "no_responders"
    finally:
        for p in procs:
            p.send_signal(signal.SIGTERM)
        for p in procs:
            try:
                p.wait(timeout=10)
            except subprocess.TimeoutExpired:
                p.kill()
            p.stdout.close()
            p.stderr.close()
