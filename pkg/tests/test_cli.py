import json

import pytest

from rlab.cli import main
from rlab.corpus import read_passages
from rlab.index import load_index


def make_raw_corpus(path, n_docs=6, words_per_section=120):
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n_docs):
            body = " ".join(f"doc{i}tok{j}" for j in range(words_per_section))
            fh.write(json.dumps({
                "id": f"doc{i}",
                "title": f"Title {i}",
                "dump_date": "2021-12-20",
                "sections": [{"title": "Body", "text": body}],
            }) + "\n")


@pytest.fixture
def workspace(tmp_path):
    raw = tmp_path / "raw.jsonl"
    make_raw_corpus(raw)
    return tmp_path, raw


def run_ingest(tmp_path, raw):
    out = tmp_path / "passages.jsonl"
    assert main(["ingest", "--in", str(raw), "--out", str(out),
                 "--max-words", "40"]) == 0
    return out


def run_build(tmp_path, passages):
    out = tmp_path / "index.ridx"
    assert main(["build-index", "--passages", str(passages),
                 "--out", str(out), "--dim", "16"]) == 0
    return out, out.with_suffix(".rlab")


class TestIngest:
    def test_writes_passages_and_manifest(self, workspace, capsys):
        tmp_path, raw = workspace
        out = run_ingest(tmp_path, raw)
        passages = read_passages(out)
        assert passages
        assert all(p.word_count <= 40 for p in passages)
        assert "wrote" in capsys.readouterr().out
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "ingest"
        assert manifest["config"]["max_words"] == 40
        assert len(manifest["input_hashes"]["in"]) == 64
        assert "ingest" in manifest["timings_s"]

    def test_missing_input_exit_1(self, tmp_path):
        assert main(["ingest", "--in", str(tmp_path / "absent.jsonl"),
                     "--out", str(tmp_path / "o.jsonl")]) == 1

    def test_unknown_filter_key_exit_2(self, workspace):
        tmp_path, raw = workspace
        bad = tmp_path / "filter.json"
        bad.write_text('{"no_such_knob": 1}')
        assert main(["ingest", "--in", str(raw),
                     "--out", str(tmp_path / "o.jsonl"),
                     "--filter-config", str(bad)]) == 2


class TestBuildAndSearch:
    def test_build_then_search(self, workspace, capsys):
        tmp_path, raw = workspace
        passages = run_ingest(tmp_path, raw)
        index_path, ckpt = run_build(tmp_path, passages)
        idx = load_index(index_path)
        assert idx.dim == 16
        assert idx.size == len(read_passages(passages))
        capsys.readouterr()
        assert main(["search", "--index", str(index_path),
                     "--checkpoint", str(ckpt),
                     "--query", "doc0tok0 doc0tok1", "--k", "3"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        pid, score = lines[0].split("\t")
        float(score)
        assert pid.startswith("doc")

    def test_manifest_records_index_version(self, workspace):
        tmp_path, raw = workspace
        passages = run_ingest(tmp_path, raw)
        run_build(tmp_path, passages)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "build-index"
        assert manifest["index_version"] == 1


class TestCompress:
    def test_compress_roundtrip(self, workspace, capsys):
        tmp_path, raw = workspace
        passages = run_ingest(tmp_path, raw)
        index_path, _ = run_build(tmp_path, passages)
        out = tmp_path / "index.rpqx"
        assert main(["compress-index", "--index", str(index_path),
                     "--out", str(out), "--m", "4", "--kc", "4",
                     "--iterations", "5"]) == 0
        assert out.exists()
        assert "x)" in capsys.readouterr().out


class TestTrain:
    def test_train_writes_artifacts(self, workspace, capsys):
        tmp_path, raw = workspace
        passages = run_ingest(tmp_path, raw)
        cfg = tmp_path / "train.cfg"
        cfg.write_text("steps = 3\nbatch_size = 2\nk_retrieved = 4\n"
                       "learning_rate = 0.1\nwarmup_steps = 1\n"
                       "loss = pdist\nmode = query_side\n")
        out_dir = tmp_path / "run"
        assert main(["train", "--config", str(cfg),
                     "--corpus", str(passages), "--out", str(out_dir),
                     "--dim", "16"]) == 0
        assert (out_dir / "metrics.csv").exists()
        assert (out_dir / "encoder.rlab").exists()
        assert (out_dir / "index.ridx").exists()
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["config"]["steps"] == 3
        assert manifest["config"]["loss"] == "pdist"

    def test_bad_config_key_names_offender(self, workspace, capsys):
        tmp_path, raw = workspace
        passages = run_ingest(tmp_path, raw)
        cfg = tmp_path / "train.cfg"
        cfg.write_text("stepz = 3\n")
        assert main(["train", "--config", str(cfg),
                     "--corpus", str(passages),
                     "--out", str(tmp_path / "run")]) == 2
        assert "stepz" in capsys.readouterr().err

    def test_invalid_combination_exit_2(self, workspace, capsys):
        tmp_path, raw = workspace
        passages = run_ingest(tmp_path, raw)
        cfg = tmp_path / "train.cfg"
        cfg.write_text("mode = rerank\nk_retrieved = 50\nl_rerank_pool = 10\n")
        assert main(["train", "--config", str(cfg),
                     "--corpus", str(passages),
                     "--out", str(tmp_path / "run")]) == 2


class TestEvaluate:
    def test_choice_accuracy(self, tmp_path, capsys):
        task_file = tmp_path / "tasks.jsonl"
        with open(task_file, "w") as fh:
            fh.write(json.dumps({"question": "pick gamma",
                                 "options": ["alpha", "beta", "gamma",
                                             "delta"],
                                 "gold": 2}) + "\n")
        assert main(["evaluate", "--task", str(task_file),
                     "--mode", "cyclic4"]) == 0
        out = capsys.readouterr().out
        assert "accuracy:" in out
        assert "mode=cyclic4" in out


class TestSwapIndex:
    def test_swap(self, workspace, capsys):
        tmp_path, raw = workspace
        passages = run_ingest(tmp_path, raw)
        idx_a, _ = run_build(tmp_path, passages)
        idx_b = tmp_path / "b.ridx"
        assert main(["build-index", "--passages", str(passages),
                     "--out", str(idx_b), "--dim", "16", "--seed", "1"]) == 0
        capsys.readouterr()
        assert main(["swap-index", "--from", str(idx_a),
                     "--to", str(idx_b)]) == 0
        assert "swapped" in capsys.readouterr().out

    def test_dim_mismatch_exit_2(self, workspace):
        tmp_path, raw = workspace
        passages = run_ingest(tmp_path, raw)
        idx_a, _ = run_build(tmp_path, passages)
        idx_b = tmp_path / "b.ridx"
        assert main(["build-index", "--passages", str(passages),
                     "--out", str(idx_b), "--dim", "8"]) == 0
        assert main(["swap-index", "--from", str(idx_a),
                     "--to", str(idx_b)]) == 2


class TestCostModel:
    def test_reference_values(self, capsys):
        assert main(["cost-model", "--n", "37000000", "--b", "64",
                     "--k", "20", "--r", "1000", "--l", "200",
                     "--ratio", "0.04"]) == 0
        out = capsys.readouterr().out
        assert "full-refresh overhead: 0.289 (~30%)" in out
        assert "rerank overhead: 0.100" in out


class TestUsage:
    def test_no_command_exit_2(self):
        assert main([]) == 2

    def test_version_exit_0(self):
        assert main(["--version"]) == 0
