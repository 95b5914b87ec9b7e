import csv
import io
import json

import numpy as np
import pytest

from occo.cli import main
from occo.model import KIND_ENCODER, KIND_TRAINING, read_checkpoint

TOY = json.dumps({"point_mlp_widths": [8, 8], "embed_dim": 8, "coarse_widths": [16], "n_coarse": 8,
                  "grid_side": 2, "fold_mlp_widths": [8]})


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "syn"), "--per-class", "3", "--points", "256"]) == 0
    assert main(["gen", "--input", str(root / "syn" / "meshes"), "--out", str(root / "d.occo"),
                 "--views", "2", "--points", "128", "--coarse", "8", "--fine", "32"]) == 0
    assert main(["pretrain", "--data", str(root / "d.occo"), "--out", str(root / "run"), "--epochs", "2",
                 "--batch", "4", "--dims", TOY]) == 0
    return root


def test_synth_and_gen_outputs(workspace):
    syn = workspace / "syn"
    assert len(list((syn / "meshes").glob("*.off"))) == 9
    assert len((syn / "labels.txt").read_text().split("\n")) == 10
    meta = json.loads((workspace / "d.occo.json").read_text())
    assert meta["n_samples"] == 18 and meta["views_per_object"] == 2


def test_gen_is_reproducible(workspace, tmp_path):
    assert main(["gen", "--input", str(workspace / "syn" / "meshes"), "--out", str(tmp_path / "again.occo"),
                 "--views", "2", "--points", "128", "--coarse", "8", "--fine", "32"]) == 0
    assert (tmp_path / "again.occo").read_bytes() == (workspace / "d.occo").read_bytes()


def test_pretrain_artifacts(workspace):
    run = workspace / "run"
    assert read_checkpoint(run / "encoder.ocwt").kind == KIND_ENCODER
    assert read_checkpoint(run / "state.ocwt").kind == KIND_TRAINING
    rows = list(csv.reader(io.StringIO((run / "log.csv").read_text())))
    assert rows[0][0] == "step" and len(rows) == 1 + 2 * 5


def test_pretrain_resume(workspace, tmp_path):
    args = ["pretrain", "--data", str(workspace / "d.occo"), "--batch", "4", "--dims", TOY]
    assert main(args + ["--out", str(tmp_path / "a"), "--epochs", "3"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--epochs", "3",
                        "--resume", str(workspace / "run" / "state.ocwt")]) == 0
    assert (tmp_path / "a" / "model.ocwt").read_bytes() == (tmp_path / "b" / "model.ocwt").read_bytes()
    assert main(args + ["--out", str(tmp_path / "c"), "--lr", "0.5",
                        "--resume", str(workspace / "run" / "state.ocwt")]) == 4


def test_complete(workspace, tmp_path, capsys):
    cloud = sorted((workspace / "syn" / "clouds").glob("*.ply"))[0]
    assert main(["complete", "--ckpt", str(workspace / "run" / "model.ocwt"), "--in", str(cloud),
                 "--out", str(tmp_path / "c"), "--truth", str(cloud)]) == 0
    assert (tmp_path / "c_coarse.ply").exists() and (tmp_path / "c_fine.ply").exists()
    assert "chamfer" in capsys.readouterr().out.lower()


def test_probe_table(workspace, tmp_path):
    out = tmp_path / "probe.csv"
    assert main(["probe", "--ckpt", str(workspace / "run" / "encoder.ocwt"),
                 "--data", str(workspace / "syn" / "meshes"), "--labels", str(workspace / "syn" / "labels.txt"),
                 "--n-seeds", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["init", "transform_row", "ami_mean", "ami_stderr", "probe_acc"]
    assert len(rows) == 8
    assert {r["init"] for r in rows} == {"occo", "random"}


def test_dissect_and_landscape(workspace, tmp_path, capsys):
    syn = workspace / "syn"
    assert main(["dissect", "--ckpt", str(workspace / "run" / "encoder.ocwt"), "--data", str(syn / "clouds"),
                 "--parts", str(syn / "parts")]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].startswith("layer,channel")
    out = tmp_path / "land.csv"
    assert main(["landscape", "--ckpt", str(workspace / "run" / "model.ocwt"),
                 "--data", str(workspace / "d.occo"), "--grid", "3", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1 + 9


def test_exit_codes(workspace, tmp_path):
    assert main(["complete", "--ckpt", str(tmp_path / "none.ocwt"), "--in", str(tmp_path / "x.ply"),
                 "--out", str(tmp_path / "o")]) == 4
    assert main(["gen", "--input", str(tmp_path / "missing"), "--out", str(tmp_path / "d")]) == 2
    assert main(["landscape", "--ckpt", str(workspace / "run" / "model.ocwt"),
                 "--data", str(workspace / "d.occo"), "--grid", "4"]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["synth", "--out", str(tmp_path / "s"), "--config", str(cfg)]) == 2
    with pytest.raises(SystemExit) as info:
        main(["gen", "--nonsense"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["gen", "--view", "3"])


def test_config_file_and_flag_precedence(workspace, tmp_path):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"views": 1, "points": 64, "coarse": 4, "fine": 16}))
    args = ["gen", "--input", str(workspace / "syn" / "meshes"), "--config", str(cfg)]
    assert main(args + ["--out", str(tmp_path / "a.occo")]) == 0
    assert json.loads((tmp_path / "a.occo.json").read_text())["n_samples"] == 9
    assert main(args + ["--out", str(tmp_path / "b.occo"), "--views", "2"]) == 0
    assert json.loads((tmp_path / "b.occo.json").read_text())["n_samples"] == 18


def test_nonfinite_training_exit(workspace, tmp_path, capsys):
    assert main(["pretrain", "--data", str(workspace / "d.occo"), "--out", str(tmp_path / "r"),
                 "--epochs", "2", "--batch", "4", "--dims", TOY, "--lr", "1e300"]) == 3
    assert "step" in capsys.readouterr().err
