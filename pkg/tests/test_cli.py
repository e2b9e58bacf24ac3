import json

import pytest
from click.testing import CliRunner

from stir.cli import main
from stir.harness import generate_corpus, random_corpus_specs
from stir.pipeline import VideoManifest, save_manifest

from support import make_frames


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def manifest_path(tmp_path):
    m = VideoManifest("vid", tuple(make_frames(30)), 3.0)
    path = tmp_path / "manifest.json"
    save_manifest(m, path)
    return str(path)


def base_args(tmp_path, *rest):
    return ["--cache-dir", str(tmp_path / "cache"), "--seed", "7", *rest]


class TestSegment:
    def test_prints_segmentation_json(self, runner, tmp_path, manifest_path):
        result = runner.invoke(main, base_args(tmp_path, "segment", manifest_path))
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert {"boundaries", "total_cost", "penalty", "num_frames"} <= set(doc)
        assert doc["num_frames"] == 30

    def test_out_file(self, runner, tmp_path, manifest_path):
        out = tmp_path / "seg.json"
        result = runner.invoke(main, base_args(tmp_path, "segment", manifest_path, "--out", str(out)))
        assert result.exit_code == 0
        assert json.loads(out.read_text())["num_frames"] == 30

    def test_missing_manifest_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, base_args(tmp_path, "segment", str(tmp_path / "nope.json")))
        assert result.exit_code != 0

    def test_malformed_manifest_exit_2(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        result = runner.invoke(main, base_args(tmp_path, "segment", str(bad)))
        assert result.exit_code == 2
        assert "error:" in result.output


class TestGraph:
    def test_writes_binary_and_json(self, runner, tmp_path, manifest_path):
        out = tmp_path / "g.bin"
        json_out = tmp_path / "g.json"
        result = runner.invoke(
            main,
            base_args(tmp_path, "graph", manifest_path, "--out", str(out),
                      "--json-out", str(json_out)),
        )
        assert result.exit_code == 0, result.output
        assert out.read_bytes()[:4] == b"STGR"
        doc = json.loads(json_out.read_text())
        assert doc["nodes"] and "edges" in doc


class TestRetrieveAndScore:
    def test_retrieve_emits_hop_json(self, runner, tmp_path, manifest_path):
        result = runner.invoke(
            main, base_args(tmp_path, "retrieve", manifest_path, "--query", "find it")
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert {"anchors", "nodes", "hop_distance", "params"} <= set(doc)
        assert doc["params"]["L"] == 2

    def test_score_emits_frame_rows(self, runner, tmp_path, manifest_path):
        result = runner.invoke(
            main, base_args(tmp_path, "score", manifest_path, "--query", "find it")
        )
        assert result.exit_code == 0, result.output
        rows = json.loads(result.output)
        assert rows
        assert {"index", "score", "distribution", "source_node"} <= set(rows[0])


class TestRun:
    def test_run_stdout(self, runner, tmp_path, manifest_path):
        result = runner.invoke(
            main, base_args(tmp_path, "run", manifest_path, "--query", "what happened")
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert {"query", "frames", "fallback_used", "provenance"} <= set(doc)

    def test_run_out_file_and_max_frames(self, runner, tmp_path, manifest_path):
        out = tmp_path / "evidence.json"
        result = runner.invoke(
            main,
            base_args(tmp_path, "run", manifest_path, "--query", "q",
                      "--out", str(out), "--max-frames", "3"),
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert len(doc["frames"]) <= 3

    def test_preset_changes_params(self, runner, tmp_path, manifest_path):
        result = runner.invoke(
            main,
            ["--preset", "tight", *base_args(tmp_path, "retrieve", manifest_path, "--query", "q")],
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["params"]["eta"] == 0.6

    def test_config_file_respected(self, runner, tmp_path, manifest_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"L": 0, "eta": 0.9}))
        result = runner.invoke(
            main,
            ["--config", str(cfg), *base_args(tmp_path, "retrieve", manifest_path, "--query", "q")],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert doc["params"]["L"] == 0
        # zero hops: retrieval collapses to the anchors themselves
        assert set(doc["nodes"]) == set(doc["anchors"])

    def test_backend_error_exit_3(self, runner, tmp_path, manifest_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "embed_backend": {"kind": "remote", "dim": 8, "endpoint": "http://127.0.0.1:1"},
            "boundary_backend": {"kind": "remote", "dim": 8, "endpoint": "http://127.0.0.1:1"},
        }))
        result = runner.invoke(
            main,
            ["--config", str(cfg), *base_args(tmp_path, "run", manifest_path, "--query", "q")],
        )
        assert result.exit_code == 3


class TestCorpusAndSweep:
    def test_corpus_command(self, runner, tmp_path):
        out = tmp_path / "corpus"
        result = runner.invoke(
            main, base_args(tmp_path, "corpus", "--videos", "2", "--out", str(out))
        )
        assert result.exit_code == 0, result.output
        index = json.loads((out / "corpus.json").read_text())
        assert len(index["videos"]) == 2

    def test_sweep_command_outputs(self, runner, tmp_path):
        corpus_dir = tmp_path / "corpus"
        generate_corpus(random_corpus_specs(2, seed=7), seed=7, out_dir=corpus_dir)
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({"eta": [0.2, 0.6]}))
        out = tmp_path / "sweep-out"
        result = runner.invoke(
            main,
            base_args(tmp_path, "sweep", "--grid", str(grid),
                      "--corpus", str(corpus_dir / "corpus.json"), "--out", str(out)),
        )
        assert result.exit_code == 0, result.output
        assert (out / "sweep.csv").exists()
        assert (out / "sweep.json").exists()
        pngs = list(out.glob("*.png"))
        assert pngs, "sweep produced no figures"

    def test_env_cache_dir_override(self, runner, tmp_path, manifest_path, monkeypatch):
        env_cache = tmp_path / "env-cache"
        monkeypatch.setenv("STIR_CACHE_DIR", str(env_cache))
        result = runner.invoke(main, ["--seed", "7", "run", manifest_path, "--query", "q"])
        assert result.exit_code == 0, result.output
        assert env_cache.exists()
