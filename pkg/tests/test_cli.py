import csv
import subprocess
import sys

import numpy as np
import pytest

from convhash import modelfile
from convhash.cli import PREDICTION_HEADER, main
from convhash.frontend import AudioClip, write_wav


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    assert main(["synth", "--classes", "2", "--vocs", "10", "--seed", "4", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def default_model(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "default.cvh"
    assert main(["train", "--manifest", str(corpus / "manifest.csv"), "--out", str(path)]) == 0
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synth_writes_annotated_corpus(corpus):
    rows = read_csv(corpus / "manifest.csv")
    assert rows[0] == ["path", "label", "annotations_path"]
    assert {r[1] for r in rows[1:]} == {"species00", "species01"}
    n = sum(len(read_csv(corpus / r[2])) - 1 for r in rows[1:])
    assert n == 20


def test_train_records_defaults(default_model, capsys):
    h = modelfile.read_header(default_model.read_bytes())
    assert (h["K"], h["W"], h["d"], h["Z"], h["bits"], h["T"]) == (500, 5, 25, 4, 1024, 10)
    model = modelfile.load(default_model)
    assert len(model.classifier.classes_) == 2
    assert len(model.classifier.hash_table_) == 20
    assert main(["inspect", "--model", str(default_model)]) == 0
    out = capsys.readouterr().out
    assert "K: 500" in out and "labels: ['species00', 'species01']" in out


def test_train_twice_is_byte_identical(corpus, default_model, tmp_path):
    again = tmp_path / "again.cvh"
    assert main(["train", "--manifest", str(corpus / "manifest.csv"), "--model", str(again)]) == 0
    assert again.read_bytes() == default_model.read_bytes()


@pytest.mark.parametrize("use_annotations", [True, False])
def test_classify_training_recording(corpus, default_model, tmp_path, use_annotations):
    rec = corpus / "species01_rec001.wav"
    outs = {}
    for mode in ("full", "minhash"):
        out = tmp_path / f"{mode}.csv"
        argv = ["classify", "--model", str(default_model), "--audio", str(rec), "--mode", mode, "--out", str(out)]
        if use_annotations:
            argv += ["--annotations", str(corpus / "species01_rec001.csv")]
        assert main(argv) == 0
        outs[mode] = read_csv(out)
    full, fast = outs["full"], outs["minhash"]
    assert full[0] == fast[0] == list(PREDICTION_HEADER)
    assert len(full) == len(fast) > 1
    assert {r[5] for r in full[1:]} == {"full"} and {r[5] for r in fast[1:]} == {"minhash"}
    assert np.mean([r[3] == "species01" for r in full[1:]]) >= 0.95
    if use_annotations:
        assert len(full) - 1 == 5


def test_classify_empty_audio(default_model, tmp_path, caplog):
    wav = tmp_path / "empty.wav"
    write_wav(wav, AudioClip(np.zeros(0, dtype=np.int16), id="empty"))
    out = tmp_path / "p.csv"
    assert main(["classify", "--model", str(default_model), "--audio", str(wav), "--out", str(out)]) == 0
    assert read_csv(out) == [list(PREDICTION_HEADER)]
    assert "nothing to classify" in caplog.text


def test_bench_schema(corpus, default_model, capsys):
    assert main(["bench", "--model", str(default_model), "--manifest", str(corpus / "manifest.csv"),
                 "--runs", "10"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "run,full_s,minhash_s"
    assert [ln.split(",")[0] for ln in lines[1:12]] == [str(i) for i in range(10)] + ["mean"]
    assert "ratio" in lines[12]


def test_evaluate_writes_report(corpus, tmp_path, capsys):
    out = tmp_path / "r.json"
    argv = ["evaluate", "--manifest", str(corpus / "manifest.csv"), "--folds", "2", "--proj-dim", "100",
            "--atoms", "5", "--medoids", "3", "--max-iter", "10", "--out", str(out)]
    assert main(argv) == 0
    assert "mean accuracy" in capsys.readouterr().out
    assert out.exists()


def test_exit_codes(corpus, default_model, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["classify", "--model", "m", "--audio", "a", "--mode", "fastest"])
    assert exc.value.code == 1

    assert main(["train", "--manifest", str(tmp_path / "none.csv"), "--out", str(tmp_path / "m")]) == 2
    assert main(["evaluate", "--manifest", str(corpus / "manifest.csv"), "--folds", "11"]) == 2
    assert "species0" in capsys.readouterr().err
    assert main(["train", "--manifest", str(corpus / "manifest.csv"), "--out", str(tmp_path / "m"),
                 "--proj-dim", "2000"]) == 2

    garbage = tmp_path / "garbage.cvh"
    garbage.write_bytes(b"definitely not a model")
    assert main(["inspect", "--model", str(garbage)]) == 3
    assert main(["classify", "--model", str(tmp_path / "absent.cvh"), "--audio", "x.wav"]) == 3


def test_console_entry_point(default_model):
    proc = subprocess.run([sys.executable, "-m", "convhash.cli", "inspect", "--model", str(default_model)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "format_version: 1" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "convhash.cli", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 1
