"""End-to-end CLI runs on tiny datasets."""

import json

import pytest

from handpose.cli import main

TINY_CONFIG = """
seed = 9
train_size = 16
test_size = 8
batch_size = 8
stage1_epochs = 1
stage2_epochs = 1
stage3_epochs = 1
res_blocks = 1
hidden_dim = 16
encoder_hidden = 32
feature_dim = 16
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.txt"
    config.write_text(TINY_CONFIG, encoding="utf-8")
    data = root / "train.jsonl"
    assert main(["generate-data", "--seed", "40", "--count", "16", "--out", str(data)]) == 0
    test_data = root / "test.jsonl"
    assert main(["generate-data", "--seed", "41", "--count", "8", "--out", str(test_data)]) == 0
    return root, config, data, test_data


def test_generate_data_reproducible(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["generate-data", "--seed", "5", "--count", "4", "--out", str(a)]) == 0
    assert main(["generate-data", "--seed", "5", "--count", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    manifest = json.loads((tmp_path / "a.jsonl.manifest.json").read_text())
    assert manifest["command"] == "generate-data"
    assert len(manifest["output_sha256"]) == 64


def test_train_all_stages_and_eval(workspace):
    root, config, data, test_data = workspace
    ck1 = root / "stage1.json"
    assert main(["train", "--stage", "1", "--config", str(config),
                 "--data", str(data), "--out", str(ck1)]) == 0
    ck2 = root / "stage2.json"
    assert main(["train", "--stage", "2", "--config", str(config), "--data", str(data),
                 "--init-checkpoint", str(ck1), "--out", str(ck2)]) == 0
    ck3 = root / "stage3.json"
    assert main(["train", "--stage", "3", "--config", str(config), "--data", str(data),
                 "--init-checkpoint", str(ck2), "--out", str(ck3)]) == 0
    pck = root / "pck.csv"
    assert main(["eval", "--checkpoint", str(ck3), "--data", str(test_data),
                 "--pck-out", str(pck)]) == 0
    lines = pck.read_text().strip().splitlines()
    assert lines[0] == "threshold_mm,pck"
    assert lines[-2] == "mean_error_mm,auc"
    manifest = json.loads((root / "pck.csv.manifest.json").read_text())
    assert "checkpoint_sha256" in manifest and "config_sha256" in manifest


def test_train_reproducible_checkpoint_bytes(workspace, tmp_path):
    root, config, data, _ = workspace
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["train", "--stage", "1", "--config", str(config),
                     "--data", str(data), "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_eval_reproducible_bytes(workspace, tmp_path):
    root, config, data, test_data = workspace
    ck1 = root / "stage1.json"  # created by test_train_all_stages_and_eval
    outs = []
    for name in ("p1.csv", "p2.csv"):
        out = tmp_path / name
        assert main(["eval", "--checkpoint", str(ck1), "--data", str(test_data),
                     "--pck-out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_stage2_requires_init_checkpoint(workspace, capsys):
    root, config, data, _ = workspace
    code = main(["train", "--stage", "2", "--config", str(config),
                 "--data", str(data), "--out", str(root / "x.json")])
    assert code == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    payload = json.loads(err)
    assert "init-checkpoint" in payload["error"]


def test_missing_data_file_is_one_line_json_error(workspace, capsys):
    root, config, _, _ = workspace
    code = main(["train", "--stage", "1", "--config", str(config),
                 "--data", str(root / "absent.jsonl"), "--out", str(root / "y.json")])
    assert code == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1
    json.loads(err)


def test_ablate_cli(workspace):
    root, config, _, _ = workspace
    variants = root / "variants.txt"
    variants.write_text("refinement=none critic=none name=prior\n", encoding="utf-8")
    out = root / "ablation.csv"
    assert main(["ablate", "--config", str(config), "--variants", str(variants),
                 "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "variant,stage,mean_error_mm"
    assert lines[1].startswith("prior,I,")


def test_bad_variants_file(workspace, capsys):
    root, config, _, _ = workspace
    variants = root / "bad.txt"
    variants.write_text("refinement=warp\n", encoding="utf-8")
    assert main(["ablate", "--config", str(config), "--variants", str(variants),
                 "--out", str(root / "z.csv")]) == 1
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "refinement" in payload["error"]
