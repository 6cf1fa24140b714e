import json

import numpy as np
import pytest

from omnilens.harness.cli import main
from omnilens.harness.config import desk_config
from omnilens.tokenizers import io


@pytest.fixture
def cfg_path(tmp_path):
    cfg = desk_config("points")
    cfg.data.train_per_class = 3
    cfg.data.test_per_class = 2
    cfg.tokenizer.n_points = 64
    cfg.tokenizer.g, cfg.tokenizer.k = 8, 8
    cfg.train.batch_size = 5
    cfg.train.warmup_steps = 1
    cfg.eval.probe_shots = 1
    path = tmp_path / "cfg.json"
    cfg.save(path)
    return path


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_train_then_evaluate(tmp_path, cfg_path, capsys):
    run = tmp_path / "run"
    data = tmp_path / "data"
    base = ["--config", str(cfg_path), "--out", str(run)]
    assert main(["gen-data", *base, "--data", str(data)]) == 0
    assert last_json(capsys)["train"] == 15
    assert main(["train", *base, "--data", str(data), "--steps", "2"]) == 0
    trained = last_json(capsys)
    assert (run / "checkpoint.olns").exists() and (run / "metrics.jsonl").exists()
    for command, key in (
        ("eval-zeroshot", "zero_shot_top1"), ("eval-retrieval", "image_recall@1"), ("eval-map", "map"),
    ):
        assert main([command, *base, "--data", str(data)]) == 0
        assert last_json(capsys)[key] == trained[key]
    assert main(["probe", *base, "--data", str(data), "--shots", "1"]) == 0
    assert last_json(capsys)["probe_acc"] == trained["probe_acc"]
    assert len((run / "eval.jsonl").read_text().splitlines()) == 4


def test_resume_extends_run(tmp_path, cfg_path, capsys):
    base = ["--config", str(cfg_path), "--out", str(tmp_path)]
    assert main(["train", *base, "--steps", "1"]) == 0
    assert main(["train", *base, "--steps", "3", "--resume"]) == 0
    steps = [json.loads(l)["step"] for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert steps[-1] == 3
    assert main(["train", *base, "--seed", "5", "--resume"]) == 2
    assert "cannot resume" in capsys.readouterr().err


def test_embed_dataset_and_files(tmp_path, cfg_path, capsys):
    base = ["--config", str(cfg_path), "--out", str(tmp_path)]
    assert main(["train", *base, "--steps", "0"]) == 0
    assert main(["embed", *base]) == 0
    rows = [json.loads(l) for l in (tmp_path / "embeddings.jsonl").read_text().splitlines()]
    assert len(rows) == 10 and len(rows[0]["embedding"]) == 32
    cloud = tmp_path / "c.olpc"
    io.write_point_cloud(cloud, np.random.default_rng(0).standard_normal((64, 3)))
    assert main(["embed", *base, str(cloud)]) == 0
    row = json.loads((tmp_path / "embeddings.jsonl").read_text())
    assert row["id"] == str(cloud)
    assert abs(np.linalg.norm(row["embedding"]) - 1) < 1e-5


def test_gradcheck(capsys):
    assert main(["gradcheck", "--modality", "depth"]) == 0
    rec = last_json(capsys)
    assert rec["modality"] == "depth" and rec["pass"]


def test_bench_flops_csv(tmp_path, capsys):
    assert main(["bench-flops", "--out", str(tmp_path), "--ms", "16,32", "--no-measure"]) == 0
    text = (tmp_path / "bench_flops.csv").read_text()
    assert text.startswith("variant,m,")
    assert len(text.splitlines()) == 7
    assert capsys.readouterr().out == text


def test_verify_subset(capsys):
    assert main(["verify", "--only", "A4"]) == 0
    out = capsys.readouterr().out
    assert "A4" in out and "1/1 acceptance checks passed" in out


def test_errors_exit_with_two(tmp_path, capsys):
    assert main(["eval-map", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"nonsense": 1}')
    assert main(["train", "--config", str(bad)]) == 2
    bad.write_text("{")
    assert main(["train", "--config", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_plot_writes_svg(tmp_path, cfg_path):
    pytest.importorskip("matplotlib")
    assert main(["bench-flops", "--out", str(tmp_path), "--ms", "16,32", "--no-measure", "--plot"]) == 0
    assert (tmp_path / "bench_flops.svg").read_text().lstrip().startswith("<?xml")
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path), "--steps", "2", "--plot"]) == 0
    assert (tmp_path / "loss.svg").exists()
