import json
import subprocess
import sys

import pytest

ADAPTER = [sys.executable, "-m", "dynbench_adapter"]
DYNBENCH = [sys.executable, "-m", "dynbench.cli"]


class AdapterProcess:
    """Drive a live adapter subprocess over its stdio pipes."""

    def __init__(self, *flags):
        self.proc = subprocess.Popen(
            ADAPTER + list(flags),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def send(self, obj):
        self.proc.stdin.write(json.dumps(obj) + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout=5.0):
        line = self.proc.stdout.readline()
        if not line:
            raise AssertionError("adapter closed its stdout")
        return json.loads(line)

    def hello(self, delta_t=0.4, h=8, f=12, k=1):
        self.send({"type": "hello", "version": 1, "delta_t": delta_t, "h": h, "f": f, "k": k})
        return self.recv()

    def close(self, timeout=5.0):
        self.proc.stdin.close()
        return self.proc.wait(timeout=timeout)


@pytest.fixture
def adapter():
    procs = []

    def start(*flags):
        p = AdapterProcess(*flags)
        procs.append(p)
        return p

    yield start
    for p in procs:
        if p.proc.poll() is None:
            p.proc.kill()
            p.proc.wait()
