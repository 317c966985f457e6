#!/usr/bin/env python3
"""Validate emitted JSON against the published schemas.

usage: check_schemas.py <arrdiag-cli> <source-dir>

Covers run-log lines from a golden run, then the HTTP and WebSocket surface of
`arrdiag serve --replay`. Exits 77 (ctest skip) when jsonschema is missing.
"""

import base64
import json
import os
import re
import socket
import subprocess
import sys
import tempfile
import time
import urllib.error
import urllib.request

try:
    import jsonschema
except ImportError:
    print("jsonschema not installed; skipping")
    sys.exit(77)


def load_validator(source, name):
    with open(os.path.join(source, "schema", name)) as f:
        schema = json.load(f)
    jsonschema.Draft202012Validator.check_schema(schema)
    return jsonschema.Draft202012Validator(schema)


def request(base, method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=30) as r:
            return r.status, r.read().decode()
    except urllib.error.HTTPError as e:
        return e.code, e.read().decode()


def first_ws_message(port):
    """Bare RFC 6455 client: handshake on /stream, read one unmasked text frame."""
    s = socket.create_connection(("127.0.0.1", port), timeout=30)
    key = base64.b64encode(os.urandom(16)).decode()
    s.sendall((f"GET /stream HTTP/1.1\r\nHost: 127.0.0.1:{port}\r\nUpgrade: websocket\r\n"
               f"Connection: Upgrade\r\nSec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n").encode())
    buf = b""
    while b"\r\n\r\n" not in buf:
        chunk = s.recv(4096)
        if not chunk:
            raise RuntimeError("connection closed during handshake")
        buf += chunk
    head, buf = buf.split(b"\r\n\r\n", 1)
    if b" 101 " not in head.split(b"\r\n")[0]:
        raise RuntimeError("upgrade refused: " + head.decode(errors="replace"))

    def need(n):
        nonlocal buf
        while len(buf) < n:
            chunk = s.recv(65536)
            if not chunk:
                raise RuntimeError("connection closed mid-frame")
            buf += chunk

    need(2)
    opcode, length = buf[0] & 0x0F, buf[1] & 0x7F
    pos = 2
    if length == 126:
        need(4)
        length, pos = int.from_bytes(buf[2:4], "big"), 4
    elif length == 127:
        need(10)
        length, pos = int.from_bytes(buf[2:10], "big"), 10
    need(pos + length)
    s.close()
    if opcode != 1:
        raise RuntimeError(f"expected a text frame, got opcode {opcode}")
    return buf[pos:pos + length].decode()


def main():
    cli, source = sys.argv[1], sys.argv[2]
    snapshot = load_validator(source, "snapshot.schema.json")
    answer = load_validator(source, "answer.schema.json")
    error = load_validator(source, "error.schema.json")
    failures = []

    def check(validator, doc, where):
        errs = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
        for e in errs[:3]:
            failures.append(f"{where}: {'/'.join(map(str, e.path))}: {e.message}")

    with tempfile.TemporaryDirectory() as tmp:
        log = os.path.join(tmp, "golden.jsonl")
        subprocess.run([cli, "run", "-c", os.path.join(source, "config", "metl_purification.yaml"),
                        "-s", os.path.join(source, "config", "golden_scenario.yaml"), "-o", log],
                       check=True, stdout=subprocess.DEVNULL)
        with open(log) as f:
            lines = f.read().splitlines()
        if not lines:
            failures.append("run log is empty")
        for n, line in enumerate(lines, 1):
            check(snapshot, json.loads(line), f"run log line {n}")

        env = dict(os.environ)
        env.pop("ARRDIAG_LLM_BASE_URL", None)
        proc = subprocess.Popen([cli, "serve", "-c", os.path.join(source, "config", "metl_purification.yaml"),
                                 "--replay", log, "--time-scale", "0", "-p", "0"],
                                stdout=subprocess.DEVNULL, stderr=subprocess.PIPE, text=True, env=env)
        try:
            port = None
            deadline = time.time() + 30
            while port is None and time.time() < deadline:
                m = re.search(r"listening on http://[^:]+:(\d+)", proc.stderr.readline())
                if m:
                    port = int(m.group(1))
            if port is None:
                raise RuntimeError("server did not report a port")
            base = f"http://127.0.0.1:{port}"

            # wait for the replay to reach the last snapshot
            last = json.loads(lines[-1])["batch_index"]
            while time.time() < deadline:
                status, body = request(base, "GET", "/state")
                if status == 200 and json.loads(body)["batch_index"] == last:
                    break
                time.sleep(0.05)
            status, body = request(base, "GET", "/state")
            check(snapshot, json.loads(body), "GET /state")

            check(snapshot, json.loads(first_ws_message(port)), "/stream first message")

            for path, body in [("/query/fault", {}),
                               ("/query/custom", {"question": "Explain why the other faults were exonerated."}),
                               ("/query/sensor-data", {"sensor_id": "tc_117"})]:
                status, text = request(base, "POST", path, body)
                if status != 200:
                    failures.append(f"POST {path}: status {status}")
                check(answer, json.loads(text), f"POST {path}")

            for method, path, body, want in [("POST", "/query/sensor-data", {"sensor_id": "tc_999"}, 404),
                                             ("POST", "/query/custom", {"save": True}, 400),
                                             ("GET", "/nowhere", None, 404)]:
                status, text = request(base, method, path, body)
                if status != want:
                    failures.append(f"{method} {path}: status {status}, wanted {want}")
                check(error, json.loads(text), f"{method} {path}")
        finally:
            proc.terminate()
            proc.wait(timeout=10)

    for f in failures:
        print("FAIL", f)
    print(f"{len(lines)} log lines, HTTP and stream payloads checked; {len(failures)} schema failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
