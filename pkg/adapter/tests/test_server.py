import io
import json
import socket
import subprocess

from dynbench_adapter.server import AdapterConfig, serve_stream

from conftest import ADAPTER


def converse(messages, **config_kwargs):
    """Feed raw lines through serve_stream, return (exit code, replies)."""
    lines = io.StringIO("".join(m + "\n" for m in messages))
    out = io.StringIO()
    status = serve_stream(AdapterConfig(**config_kwargs), lines, out)
    replies = [json.loads(l) for l in out.getvalue().splitlines()]
    return status, replies


def hello_line(f=12, k=1, h=8):
    return json.dumps({"type": "hello", "version": 1, "delta_t": 0.4, "h": h, "f": f, "k": k})


def predict_line(request_id, tick, agents):
    return json.dumps({"type": "predict", "id": request_id, "tick": tick, "agents": agents})


HIST = [[float(i), 0.0] for i in range(8)]


class TestServeStream:
    def test_hello_yields_capabilities(self):
        status, (caps,) = converse([hello_line()])
        assert status == 0
        assert caps["type"] == "capabilities"
        assert caps["model"] == "cvm"
        assert caps["min_history"] == 2
        assert caps["max_k"] == 1
        assert caps["supports_probabilities"] is False

    def test_predict_echoes_id_and_horizon(self):
        status, replies = converse(
            [hello_line(f=4), predict_line(17, 3, [{"id": "a", "history": HIST}])]
        )
        assert status == 0
        prediction = replies[1]
        assert prediction["type"] == "prediction"
        assert prediction["id"] == 17
        (agent,) = prediction["agents"]
        assert agent["id"] == "a"
        assert len(agent["candidates"][0]) == 4

    def test_short_history_omitted(self):
        _, replies = converse(
            [hello_line(), predict_line(1, 0, [{"id": "a", "history": HIST[:1]}])]
        )
        assert replies[1]["agents"] == []

    def test_min_history_override(self):
        _, replies = converse(
            [hello_line(), predict_line(1, 0, [{"id": "a", "history": HIST[:3]}])],
            min_history=4,
        )
        assert replies[0]["min_history"] == 4
        assert replies[1]["agents"] == []

    def test_malformed_line_errors_and_continues(self):
        status, replies = converse(
            [hello_line(), "{not json", predict_line(2, 0, [{"id": "a", "history": HIST}])]
        )
        assert status == 0
        assert replies[1]["type"] == "error"
        assert replies[1]["id"] is None
        assert replies[2]["type"] == "prediction"
        assert replies[2]["id"] == 2

    def test_predict_before_hello_is_error(self):
        _, replies = converse([predict_line(5, 0, [{"id": "a", "history": HIST}])])
        assert replies[0]["type"] == "error"
        assert replies[0]["id"] == 5

    def test_unknown_type_is_error(self):
        _, replies = converse([hello_line(), json.dumps({"type": "shutdown", "id": 9})])
        assert replies[1]["type"] == "error"

    def test_bad_version_is_error(self):
        bad = json.dumps({"type": "hello", "version": 99, "delta_t": 0.4, "h": 8, "f": 12, "k": 1})
        _, replies = converse([bad])
        assert replies[0]["type"] == "error"

    def test_kalman_multi_candidate(self):
        _, replies = converse(
            [hello_line(f=6, k=5), predict_line(1, 0, [{"id": "a", "history": HIST}])],
            model="kalman",
        )
        assert replies[0]["max_k"] == 20
        (agent,) = replies[1]["agents"]
        assert len(agent["candidates"]) == 5
        assert all(len(c) == 6 for c in agent["candidates"])


class TestSubprocess:
    def test_clean_exit_on_eof(self, adapter):
        proc = adapter("--model", "cvm")
        caps = proc.hello()
        assert caps["type"] == "capabilities"
        assert proc.close() == 0

    def test_seeded_determinism_across_processes(self, adapter):
        def one_run():
            proc = adapter("--model", "kalman", "--seed", "3")
            proc.hello(f=6, k=4)
            proc.send(
                {"type": "predict", "id": 1, "tick": 2, "agents": [{"id": "a", "history": HIST}]}
            )
            reply = proc.recv()
            proc.close()
            return reply

        assert one_run() == one_run()

    def test_neural_skeleton_refused_at_startup(self):
        result = subprocess.run(
            ADAPTER + ["--model", "neural-skeleton"],
            input="",
            capture_output=True,
            text=True,
            timeout=10,
        )
        assert result.returncode == 2
        assert "weights" in result.stderr

    def test_tcp_transport(self):
        proc = subprocess.Popen(
            ADAPTER + ["--transport", "tcp", "--port", "0"],
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        try:
            banner = proc.stderr.readline()
            assert banner.startswith("listening on ")
            host, port = banner.strip().rsplit(" ", 1)[-1].rsplit(":", 1)
            with socket.create_connection((host, int(port)), timeout=5) as sock:
                wfile = sock.makefile("w", encoding="utf-8", newline="\n")
                rfile = sock.makefile("r", encoding="utf-8")
                wfile.write(hello_line() + "\n")
                wfile.flush()
                caps = json.loads(rfile.readline())
                assert caps["type"] == "capabilities"
                wfile.write(predict_line(1, 0, [{"id": "a", "history": HIST}]) + "\n")
                wfile.flush()
                reply = json.loads(rfile.readline())
                assert reply["id"] == 1
                sock.shutdown(socket.SHUT_WR)  # signal EOF; close() alone keeps the fd open
                wfile.close()
                rfile.close()
            assert proc.wait(timeout=5) == 0
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()
