import json
import sys
from pathlib import Path

import pytest

from dynbench.cli import main
from dynbench.scenes import load_scenes_jsonl

PEER = Path(__file__).parent / "mock_peer.py"


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def scenes_file(tmp_path):
    out = tmp_path / "scenes.jsonl"
    assert run_cli("gen", "--agents", 5, "--ticks", 40, "--seed", 3, "--count", 2, "--out", out) == 0
    return out


class TestGen:
    def test_writes_loadable_scenes(self, scenes_file):
        scenes = load_scenes_jsonl(scenes_file)
        assert len(scenes) == 2
        assert scenes[0].duration_ticks == 40

    def test_deterministic(self, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        run_cli("gen", "--agents", 4, "--ticks", 30, "--seed", 9, "--out", a)
        run_cli("gen", "--agents", 4, "--ticks", 30, "--seed", 9, "--out", b)
        assert a.read_text() == b.read_text()


class TestIngest:
    def test_eth_ucy_to_jsonl(self, tmp_path):
        raw = tmp_path / "log.txt"
        raw.write_text(
            "\n".join(
                f"{frame} {ped} {float(frame) / 10 + ped} 0.0"
                for frame in (0, 10, 20, 30)
                for ped in (1, 2)
            )
            + "\n"
        )
        out = tmp_path / "scenes.jsonl"
        assert run_cli("ingest", raw, "--format", "eth_ucy", "--out", out) == 0
        (scene,) = load_scenes_jsonl(out)
        assert len(scene.agents) == 2
        assert scene.duration_ticks == 4

    def test_min_concurrent_filters(self, scenes_file, tmp_path):
        out = tmp_path / "filtered.jsonl"
        assert (
            run_cli(
                "ingest", scenes_file, "--format", "jsonl", "--min-concurrent", 99, "--out", out
            )
            == 0
        )
        assert out.read_text() == ""

    def test_missing_file_fails_cleanly(self, tmp_path, capsys):
        rc = run_cli("ingest", tmp_path / "none.txt", "--out", tmp_path / "o.jsonl")
        assert rc == 2 or rc == 1


class TestRun:
    def test_cvm_run_writes_result(self, scenes_file, tmp_path, capsys):
        out = tmp_path / "result.json"
        rc = run_cli(
            "run", "--scenes", scenes_file, "--predictor", "cvm",
            "--k", 1, "--h", 8, "--f", 6, "--seed", 7, "--out", out,
        )
        assert rc == 0
        data = json.loads(out.read_text())
        assert data["layout"] == "k"
        (cell,) = data["cells"]
        assert cell["predictor"] == "cvm"
        assert cell["min_dyn_ade"] is not None
        captured = capsys.readouterr()
        assert "minDynADE" in captured.out

    def test_bridge_predictor_via_cli(self, scenes_file, tmp_path):
        out = tmp_path / "result.json"
        rc = run_cli(
            "run", "--scenes", scenes_file,
            "--predictor", f"bridge:{sys.executable} {PEER}",
            "--k", 1, "--h", 8, "--f", 6, "--out", out,
        )
        assert rc == 0
        data = json.loads(out.read_text())
        assert data["cells"][0]["min_dyn_ade"] is not None

    def test_dump_tracks(self, scenes_file, tmp_path):
        out = tmp_path / "result.json"
        dump = tmp_path / "tracks.jsonl"
        rc = run_cli(
            "run", "--scenes", scenes_file, "--predictor", "cvm",
            "--f", 6, "--out", out, "--dump-tracks", dump, "--alpha", 1.0,
        )
        assert rc == 0
        lines = [json.loads(l) for l in dump.read_text().splitlines()]
        assert len(lines) == 2  # one dump per scene
        assert all(obj["agents"] for obj in lines)


class TestSweepAndReport:
    def test_sweep_then_report(self, scenes_file, tmp_path, capsys):
        toml = tmp_path / "exp.toml"
        toml.write_text(
            f'scenes = "{scenes_file}"\n'
            'predictors = ["cvm", "noisy_cvm"]\n'
            "k_values = [1, 5]\n"
            "h_values = [8]\n"
            "f = 6\n"
            "seed = 2\n"
        )
        result_path = tmp_path / "result.json"
        assert run_cli("sweep", "--config", toml, "--out", result_path) == 0
        capsys.readouterr()

        assert run_cli("report", result_path, "--format", "txt") == 0
        text = capsys.readouterr().out
        assert "minDynADE" in text and "noisy_cvm" in text

        out_csv = tmp_path / "table.csv"
        assert run_cli("report", result_path, "--format", "csv", "--out", out_csv) == 0
        assert out_csv.read_text().startswith("predictor,")

    def test_repeat_mode(self, scenes_file, tmp_path, capsys):
        toml = tmp_path / "exp.toml"
        toml.write_text(
            f'scenes = "{scenes_file}"\n'
            'predictors = ["cvm"]\n'
            "k_values = [5]\n"
            "h_values = [8]\n"
            "f = 6\n"
            "repetitions = 3\n"
            'mode = "repeat"\n'
        )
        result_path = tmp_path / "result.json"
        assert run_cli("sweep", "--config", toml, "--out", result_path) == 0
        capsys.readouterr()
        assert run_cli("report", result_path) == 0
        assert "minDynADE mean" in capsys.readouterr().out


class TestConformanceCommand:
    def test_good_peer_exits_zero(self, capsys):
        rc = run_cli("conformance", sys.executable, PEER)
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_bad_peer_exits_nonzero(self, capsys):
        rc = run_cli("conformance", sys.executable, PEER, "--short-candidate")
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out
