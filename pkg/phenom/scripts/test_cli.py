import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import torch
import yaml

from phenom.cli import main
from phenom.core.logger import RUN_LOG_NAME
from phenom.models.checkpoint import load_checkpoint, save_checkpoint
from phenom.models.mae import build_mae
from phenom.Orchestration.manifest import MANIFEST_NAME

SYNTH_ARGS = [
    "--n_genes", "6",
    "--n_replicates_per_gene", "2",
    "--n_plates", "1",
    "--n_experiments", "2",
    "--n_controls_per_plate", "3",
    "--image_size", "32",
    "--relationship_blocks", "[[0, 1, 2]]",
]

TINY_MODEL = {
    "variant": "tiny-test",
    "img_size": 16,
    "patch_size": 4,
    "depth": 1,
    "width": 32,
    "heads": 4,
    "decoder_width": 16,
    "decoder_heads": 2,
}


def _files(root: Path):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name not in (MANIFEST_NAME, RUN_LOG_NAME)
    }


def _train_config(tmp_path: Path, objective: str = "MAE", **train) -> Path:
    path = tmp_path / f"train_{objective.lower()}.yaml"
    document = {
        "model": dict(TINY_MODEL),
        "train": {"objective": objective, "epochs": 1, "batch_size": 6, "seed": 0, **train},
    }
    path.write_text(yaml.safe_dump(document))
    return path


@pytest.fixture
def synth_dir(tmp_path) -> Path:
    out = tmp_path / "synth"
    assert main(["synth", "--output-dir", str(out), "--seed", "3", *SYNTH_ARGS]) == 0
    return out


def test_synth_writes_dataset_and_manifest(synth_dir):
    assert (synth_dir / "dataset" / "manifest.csv").exists()
    assert (synth_dir / "relationships.csv").read_text().startswith("# database: synthetic")
    assert (synth_dir / "features.csv").exists()
    manifest = json.loads((synth_dir / MANIFEST_NAME).read_text())
    assert manifest["status"] == "ok"
    assert manifest["seed"] == 3
    assert manifest["parameters"]["synth"]["n_genes"] == 6
    assert manifest["outputs"]["log"] == str(synth_dir / RUN_LOG_NAME)
    assert "--- phenom synth" in (synth_dir / RUN_LOG_NAME).read_text()


def test_synth_is_byte_reproducible(tmp_path, synth_dir):
    again = tmp_path / "again"
    assert main(["synth", "--output-dir", str(again), "--seed", "3", *SYNTH_ARGS]) == 0
    assert _files(again) == _files(synth_dir)


def test_invalid_synth_config_fails(tmp_path):
    out = tmp_path / "bad"
    assert main(["synth", "--output-dir", str(out), "--n_genes", "0"]) == 1
    manifest = json.loads((out / MANIFEST_NAME).read_text())
    assert manifest["status"] == "failed"
    assert not (out / "dataset").exists()


def test_missing_config_file_fails(tmp_path):
    out = tmp_path / "out"
    assert main(["synth", "--output-dir", str(out), "--config", str(tmp_path / "nope.yaml")]) == 1


def test_unknown_log_level_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["synth", "--output-dir", str(tmp_path / "out"), "--log-level", "LOUD"])
    assert excinfo.value.code == 2


def test_train_then_embed(tmp_path, synth_dir):
    train_dir = tmp_path / "mae"
    code = main(["train", "--config", str(_train_config(tmp_path)), "--dataset", str(synth_dir / "dataset"),
                 "--output-dir", str(train_dir)])
    assert code == 0
    checkpoint = load_checkpoint(train_dir / "model.pt")
    assert checkpoint.objective == "MAE"
    assert (train_dir / "loss_curve.csv").read_text().startswith("step,loss,lr")

    emb_dir = tmp_path / "emb"
    assert main(["embed", "--checkpoint", str(train_dir / "model.pt"), "--dataset", str(synth_dir / "dataset"),
                 "--output-dir", str(emb_dir)]) == 0
    header = json.loads((emb_dir / "embeddings.json").read_text())
    assert header["D"] == 32 and header["rows"] == 18

    # channel subset no longer matches the 6-channel model
    assert main(["embed", "--checkpoint", str(train_dir / "model.pt"), "--dataset", str(synth_dir / "dataset"),
                 "--channels", "DNA,ER,RNA", "--output-dir", str(tmp_path / "emb3")]) == 1


def test_train_overrides_reach_sections(tmp_path, synth_dir):
    out = tmp_path / "mae"
    code = main(["train", "--config", str(_train_config(tmp_path)), "--dataset", str(synth_dir / "dataset"),
                 "--output-dir", str(out), "--epochs", "2", "--model.depth", "2"])
    assert code == 0
    manifest = json.loads((out / MANIFEST_NAME).read_text())
    assert manifest["parameters"]["train"]["epochs"] == 2
    assert load_checkpoint(out / "model.pt").model_config.depth == 2


def _train(tmp_path, synth_dir, name, *extra):
    out = tmp_path / name
    assert main(["train", "--config", str(_train_config(tmp_path, epochs=2)), "--dataset", str(synth_dir / "dataset"),
                 "--output-dir", str(out), *extra]) == 0
    return out


def test_train_is_reproducible(tmp_path, synth_dir):
    a, b = (_train(tmp_path, synth_dir, name) for name in ("a", "b"))
    log = (a / RUN_LOG_NAME).read_text()
    assert "[epoch 1] mean loss" in log and "[epoch 2] mean loss" in log
    assert (a / "loss_curve.csv").read_bytes() == (b / "loss_curve.csv").read_bytes()
    first, second = load_checkpoint(a / "model.pt"), load_checkpoint(b / "model.pt")
    assert (first.step, first.epoch) == (second.step, second.epoch)
    assert first.loss_curve == second.loss_curve
    other = second.model.state_dict()
    for key, value in first.model.state_dict().items():
        assert torch.equal(value, other[key]), key


def test_train_resume_continues_the_loss_curve(tmp_path, synth_dir):
    full = _train(tmp_path, synth_dir, "full")
    saved = load_checkpoint(full / "checkpoints" / "epoch_001.pt")
    resumed = _train(tmp_path, synth_dir, "resumed", "--resume", str(full / "checkpoints" / "epoch_001.pt"))

    expected = pd.read_csv(full / "loss_curve.csv")
    curve = pd.read_csv(resumed / "loss_curve.csv")
    assert curve["step"].tolist() == expected["step"].tolist()
    assert curve["step"].iloc[saved.step] == saved.step
    np.testing.assert_allclose(curve["loss"], expected["loss"], rtol=0, atol=1e-6)
    assert load_checkpoint(resumed / "model.pt").epoch == 2


def test_embed_and_transform_are_byte_reproducible(tmp_path, synth_dir):
    model = _train(tmp_path, synth_dir, "mae") / "model.pt"
    embedded = []
    for name in ("emb_a", "emb_b"):
        out = tmp_path / name
        assert main(["embed", "--checkpoint", str(model), "--dataset", str(synth_dir / "dataset"),
                     "--output-dir", str(out)]) == 0
        embedded.append(_files(out))
    assert embedded[0] == embedded[1]
    assert "embeddings.f32" in embedded[0]

    transformed = []
    for name in ("tvn_a", "tvn_b"):
        out = tmp_path / name
        assert main(["transform", "--table", str(tmp_path / "emb_a" / "embeddings"),
                     "--pipeline", "center_by:plate,pca", "--output-dir", str(out)]) == 0
        transformed.append(_files(out))
    assert transformed[0] == transformed[1]
    assert "embeddings.f32" in transformed[0]



def test_channel_agnostic_model_embeds_a_channel_subset(tmp_path, synth_dir):
    train_dir = tmp_path / "ca"
    config = _train_config(tmp_path, "CA_MAE")
    assert main(["train", "--config", str(config), "--dataset", str(synth_dir / "dataset"),
                 "--channels", "DNA,RNA,Mito", "--output-dir", str(train_dir)]) == 0
    assert load_checkpoint(train_dir / "model.pt").model_config.in_chans == 3

    for channels, mode, dim in [("DNA,RNA,Mito,ER", "MEAN_ALL", 32), ("AGP,BF", "CONCAT_CHANNEL_MEANS", 64)]:
        out = tmp_path / f"emb_{mode}"
        assert main(["embed", "--checkpoint", str(train_dir / "model.pt"), "--dataset", str(synth_dir / "dataset"),
                     "--channels", channels, "--mode", mode, "--output-dir", str(out)]) == 0
        assert json.loads((out / "embeddings.json").read_text())["D"] == dim


def test_transform_and_unknown_op(tmp_path, synth_dir):
    emb = tmp_path / "emb"
    assert main(["embed", "--baseline", "pixel_stats", "--dataset", str(synth_dir / "dataset"),
                 "--output-dir", str(emb)]) == 0
    out = tmp_path / "centered"
    assert main(["transform", "--table", str(emb / "embeddings"), "--pipeline", "center_by:plate",
                 "--output-dir", str(out)]) == 0
    assert (out / "embeddings.f32").exists()
    bad = tmp_path / "bad"
    assert main(["transform", "--table", str(emb / "embeddings"), "--pipeline", "whiten",
                 "--output-dir", str(bad)]) == 1
    assert not (bad / "embeddings.f32").exists()


def test_benchmark_and_report(tmp_path, synth_dir):
    emb = tmp_path / "emb"
    assert main(["embed", "--baseline", "pixel_stats", "--dataset", str(synth_dir / "dataset"),
                 "--output-dir", str(emb)]) == 0
    bench = tmp_path / "bench"
    code = main([
        "benchmark", "--table", str(emb / "embeddings"), "--output-dir", str(bench),
        "--db", str(synth_dir / "relationships.csv"),
        "--pipeline", "none", "--pipeline", "center_by:plate",
        "--retrieval", "perturbation", "--n-permutations", "100",
        "--features", str(synth_dir / "features.csv"),
        "--random-baseline", "--cell-type", "HUVEC",
    ])
    assert code == 0
    report = json.loads((bench / "report.json").read_text())
    assert set(report["recall"]) == {"none", "center_by:plate", "random"}
    assert all(0.0 <= v <= 1.0 for row in report["recall"].values() for v in row.values())
    assert [e["pipeline"] for e in report["retrieval"]] == ["none", "center_by:plate"]
    assert report["retrieval"][0]["cell_type"] == "HUVEC"
    assert report["feature_regression"]

    rendered = tmp_path / "rendered"
    assert main(["report", "--report", str(bench / "report.json"), "--markdown", "--output-dir", str(rendered)]) == 0
    assert "| Transformation |" in (rendered / "report.md").read_text()


def test_benchmark_is_reproducible(tmp_path, synth_dir):
    emb = tmp_path / "emb"
    assert main(["embed", "--baseline", "random", "--seed", "4", "--dataset", str(synth_dir / "dataset"),
                 "--output-dir", str(emb)]) == 0
    reports = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["benchmark", "--table", str(emb / "embeddings"), "--db", str(synth_dir / "relationships.csv"),
                     "--retrieval", "perturbation", "--n-permutations", "200", "--output-dir", str(out)]) == 0
        reports.append((out / "report.json").read_bytes())
    assert reports[0] == reports[1]


def test_benchmark_with_missing_db_writes_nothing(tmp_path, synth_dir):
    emb = tmp_path / "emb"
    assert main(["embed", "--baseline", "random", "--dataset", str(synth_dir / "dataset"),
                 "--output-dir", str(emb)]) == 0
    out = tmp_path / "bench"
    assert main(["benchmark", "--table", str(emb / "embeddings"), "--db", str(tmp_path / "missing.csv"),
                 "--output-dir", str(out)]) == 1
    assert not (out / "report.json").exists()
    assert json.loads((out / MANIFEST_NAME).read_text())["status"] == "failed"


# --------------------------------------------------
# End to end: synth -> train -> embed -> TVN -> recall
# --------------------------------------------------
@pytest.mark.slow
def test_training_and_tvn_improve_recall(tmp_path):
    synth = tmp_path / "synth"
    blocks = [list(range(b, b + 5)) for b in range(0, 40, 5)]
    assert main([
        "synth", "--output-dir", str(synth), "--seed", "0",
        "--n_genes", "40", "--n_replicates_per_gene", "3", "--n_plates", "4", "--n_experiments", "1",
        "--n_controls_per_plate", "24", "--image_size", "32", "--batch_effect_scale", "1.0",
        "--relationship_blocks", json.dumps(blocks), "--no-features",
    ]) == 0
    dataset = synth / "dataset"
    db = synth / "relationships.csv"

    trained = tmp_path / "trained"
    config = _train_config(tmp_path, epochs=20, batch_size=16, max_lr=2e-3)
    assert main(["train", "--config", str(config), "--dataset", str(dataset), "--output-dir", str(trained)]) == 0

    untrained = tmp_path / "untrained"
    model_config = load_checkpoint(trained / "model.pt").model_config
    save_checkpoint(untrained / "model.pt", build_mae(model_config, seed=0))

    recall = {}
    for name, run in (("trained", trained), ("untrained", untrained)):
        emb = tmp_path / f"emb_{name}"
        assert main(["embed", "--checkpoint", str(run / "model.pt"), "--dataset", str(dataset),
                     "--output-dir", str(emb)]) == 0
        bench = tmp_path / f"bench_{name}"
        assert main(["benchmark", "--table", str(emb / "embeddings"), "--db", str(db),
                     "--pipeline", "none", "--pipeline", "tvn", "--output-dir", str(bench)]) == 0
        report = json.loads((bench / "report.json").read_text())
        recall[name] = {p: row["synthetic"] for p, row in report["recall"].items()}

    assert recall["trained"]["tvn"] > recall["untrained"]["tvn"]
    assert recall["trained"]["tvn"] > recall["trained"]["none"]
    assert recall["trained"]["tvn"] >= 0.15
    assert np.isfinite(list(recall["untrained"].values())).all()
