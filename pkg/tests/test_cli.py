import json

import numpy as np
import pytest

from arbnets.arbnet import load_checkpoint
from arbnets.cli import main
from arbnets.experiments import read_results

FAST = ["--dataset", "synthetic", "--epochs", "2", "--table-size", "40", "--seeds", "0"]


def test_train_writes_csv_sidecar_and_checkpoint(tmp_path):
    out, ckpt = tmp_path / "t.csv", tmp_path / "net.npz"
    assert main(["train", *FAST, "--hash", "dirichlet", "--alphas", "0.5", "--sparsities", "0.2",
                 "--out", str(out), "--checkpoint", str(ckpt)]) == 0
    (row,) = read_results(out)
    assert row.hash_kind == "dirichlet" and row.hash_param == 0.5 and row.epochs == 2
    side = json.loads((tmp_path / "t.csv.json").read_text())
    assert side["config"]["train"]["epochs"] == 2 and len(side["epochs"][0]) == 2
    net = load_checkpoint(ckpt)
    assert net.arch == (32, 64, 64, 4)


def test_sweep_json_format(tmp_path):
    out = tmp_path / "s.json"
    assert main(["neighborhood-sweep", *FAST, "--radii", "0,5", "--sparsities", "0.1",
                 "--format", "json", "--out", str(out)]) == 0
    rows = read_results(out)
    assert [r.hash_param for r in rows] == [0.0, 5.0]


def test_sweep_to_stdout(capsys):
    assert main(["dirichlet-sweep", *FAST, "--alphas", "1", "--sparsities", "0.1"]) == 0
    assert capsys.readouterr().out.startswith("experiment,dataset,hash_kind")


def test_heatmap(tmp_path):
    out = tmp_path / "h.csv"
    assert main(["heatmap", "--alphas", "0.01,1,100", "--table-size", "20", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 3 and all(len(r.split(",")) == 20 for r in rows)


def test_check_conv(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["check-conv", "--filters", "2x2,3x3", "--inputs", "4x4,16x16", "--trials", "3",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("filter,input") and len(lines) == 5


def test_check_rnn(capsys):
    assert main(["check-rnn", "--width", "4", "--depth", "2", "--steps", "3"]) == 0
    assert "modulus_max_diff" in capsys.readouterr().out


def test_load_error_exit_code(tmp_path, capsys):
    code = main(["train", "--dataset", "mnist", "--data-dir", str(tmp_path)])
    assert code != 0
    assert "error" in capsys.readouterr().err


def test_bad_flag_value_exit_code(capsys):
    assert main(["train", *FAST, "--sparsities", "1.5"]) != 0


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code != 0


def test_corrupt_mnist_reports_magic(tmp_path, capsys):
    for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                 "t10k-labels-idx1-ubyte"):
        (tmp_path / name).write_bytes(np.zeros(16, dtype=np.uint8).tobytes())
    assert main(["train", "--dataset", "mnist", "--data-dir", str(tmp_path)]) != 0
    assert "0x00000803" in capsys.readouterr().err
