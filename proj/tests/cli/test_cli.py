import json
import os
import signal
import socket
import subprocess
import time
import urllib.error
import urllib.request

import pytest

CLI = os.environ.get("PREFOPT_CLI", "prefopt")

BENCH_CONFIG = {
    "problems": [{"name": "gp_sample", "dimension": 1, "seed": 2}],
    "algorithms": ["crashpbo", "random"],
    "modes": ["best"],
    "repetitions": 2,
    "budget_multiplier": 4,
    "grid_resolution": 50,
    "model": {"restarts": 4, "local_steps": 15},
}

SESSION = {
    "config": {"dimension": 1, "budget": 3, "mode": "best", "seed": 1,
               "acquisition": {"restarts": 4, "local_steps": 15}},
    "labels": [{"name": "gain", "lower": 0.0, "upper": 10.0}],
    "initial": {"x_a": [2.0], "x_b": [7.0], "outcome": "prefer_b"},
}


def run(*args, **kw):
    return subprocess.run([CLI, *args], capture_output=True, text=True, timeout=120, **kw)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def call(port, method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(f"http://127.0.0.1:{port}{path}", data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=30) as r:
            return r.status, json.loads(r.read() or b"null")
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read() or b"null")


class Server:
    def __init__(self, data_dir, port=None):
        self.port = port or free_port()
        self.proc = subprocess.Popen([CLI, "serve", "--addr", f"127.0.0.1:{self.port}", "--data-dir", str(data_dir)],
                                     stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        deadline = time.time() + 20
        while time.time() < deadline:
            if self.proc.poll() is not None:
                raise RuntimeError(self.proc.stderr.read())
            try:
                if call(self.port, "GET", "/v1/healthz")[0] == 200:
                    return
            except OSError:
                time.sleep(0.05)
        raise RuntimeError("server did not come up")

    def stop(self):
        self.proc.send_signal(signal.SIGTERM)
        return self.proc.wait(timeout=20)


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "bench.json"
    p.write_text(json.dumps(BENCH_CONFIG))
    return p


def test_usage_errors_exit_2(tmp_path):
    assert run().returncode == 2
    assert run("bench", str(tmp_path / "missing.json"), "-o", str(tmp_path / "o.csv")).returncode == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"problems": ["branin"], "algorithms": ["grid"]}')
    assert run("bench", str(bad), "-o", str(tmp_path / "o.csv")).returncode == 2


def test_bench_is_reproducible(tmp_path, config_file):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("bench", str(config_file), "-o", str(a), "-j", "2").returncode == 0
    assert run("bench", str(config_file), "-o", str(b)).returncode == 0
    strip = lambda p: [",".join(l.split(",")[:12]) for l in p.read_text().splitlines()]
    assert strip(a) == strip(b)
    assert a.read_text().startswith("row_type,")

    j = tmp_path / "r.json"
    assert run("bench", str(config_file), "-o", str(j), "--format", "json").returncode == 0
    assert len(json.loads(j.read_text())["cells"]) == 4


def test_serve_replay_and_restart(tmp_path):
    data = tmp_path / "sessions"
    server = Server(data)
    try:
        status, created = call(server.port, "POST", "/v1/sessions", SESSION)
        assert status == 201
        sid = created["id"]
        status, duel = call(server.port, "GET", f"/v1/sessions/{sid}/duel")
        assert status == 200
        status, _ = call(server.port, "POST", f"/v1/sessions/{sid}/feedback",
                         {"duel_token": duel["duel_token"], "outcome": "prefer_a"})
        assert status == 200
        status, err = call(server.port, "POST", f"/v1/sessions/{sid}/feedback",
                           {"duel_token": duel["duel_token"], "outcome": "prefer_a"})
        assert status == 409
        status, exported = call(server.port, "GET", f"/v1/sessions/{sid}/export")
        assert status == 200
    finally:
        assert server.stop() == 0

    doc = tmp_path / "export.json"
    doc.write_text(json.dumps(exported))
    r = run("replay", str(doc))
    assert r.returncode == 0, r.stdout + r.stderr
    assert "MATCH" in r.stdout

    exported["state"]["initial"]["pi"] = 1 - exported["state"]["initial"]["pi"]
    doc.write_text(json.dumps(exported))
    r = run("replay", str(doc))
    assert r.returncode == 1
    assert "MISMATCH" in r.stdout

    restarted = Server(data)
    try:
        status, history = call(restarted.port, "GET", f"/v1/sessions/{sid}/history")
        assert status == 200
        assert len(history["entries"]) == 1
    finally:
        assert restarted.stop() == 0


def test_port_in_use_fails(tmp_path):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        r = run("serve", "--addr", f"127.0.0.1:{port}", "--data-dir", str(tmp_path))
        assert r.returncode != 0
        assert r.stderr


def test_demo_runs(tmp_path):
    r = run("demo", "--budget", "4", "--seed", "2")
    assert r.returncode == 0, r.stderr
    assert "incumbent" in r.stdout
