import struct
import zlib

import numpy as np
import pytest
from sklearn.base import clone

from convhash import modelfile
from convhash._validation import on_simplex
from convhash.dataset import ManifestRow, read_manifest, write_manifest
from convhash.evaluate import bench, evaluate, fold_parts, fold_splits
from convhash.exceptions import DataError, ModelFormatError
from convhash.frontend import CsfExtractor
from convhash.synth import F_HI, F_LO, SynthSpec, class_bands, generate, signal_frequency_range

from .conftest import small_classifier


# classifier -------------------------------------------------------------------

def test_fitted_attributes(small_model, small_vocs):
    clf = small_model
    assert list(clf.classes_) == ["species00", "species01", "species02"]
    assert clf.dictionary_.qd == 18
    assert len(clf.hash_table_) == 3 * 4
    assert clf.direct_table_.qd == 18
    assert clf.permutation_.qd == 18
    for obj in clf.objectives_.values():
        assert np.all(np.diff(obj) <= 1e-8 * obj[0])


def test_convex_codes_are_on_simplex(small_model, small_vocs):
    for codes in small_model.convex_codes([v.csfs for v in small_vocs[:5]]):
        assert on_simplex(codes, axis=1)


def test_training_vocalizations_are_recognised(small_model, small_vocs):
    X = [v.csfs for v in small_vocs]
    y = np.array([v.label for v in small_vocs])
    for mode in ("full", "minhash"):
        preds = np.array([p.label for p in small_model.predict_vocalizations(X, mode)])
        assert np.mean(preds == y) >= 0.95
    assert small_model.score(X, y) >= 0.95


def test_classifier_params_and_validation(small_vocs):
    clf = small_classifier()
    assert clone(clf).get_params() == clf.get_params()
    with pytest.raises(DataError):
        clf.fit([small_vocs[0].csfs], ["a", "b"])
    with pytest.raises(DataError, match="dictionary/input mismatch"):
        clf.fit([small_vocs[0].csfs, small_vocs[1].csfs[:, :10]], ["a", "b"])
    with pytest.raises(ValueError):
        small_classifier(mode="fast").fit([v.csfs for v in small_vocs], [v.label for v in small_vocs])


def test_predict_rejects_wrong_feature_count(small_model):
    with pytest.raises(DataError, match="dictionary/input mismatch"):
        small_model.predict([np.ones((3, 7))])


# model file -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def model_bytes(small_model, small_extractor):
    return modelfile.dumps(modelfile.ConvHashModel(small_extractor, small_model))


def test_model_roundtrip_is_byte_identical(model_bytes, small_model, small_vocs):
    loaded = modelfile.loads(model_bytes)
    assert modelfile.dumps(loaded) == model_bytes
    X = [v.csfs for v in small_vocs[:6]]
    for mode in ("full", "minhash"):
        a = [p.label for p in small_model.predict_vocalizations(X, mode)]
        b = [p.label for p in loaded.classifier.predict_vocalizations(X, mode)]
        assert a == b
    np.testing.assert_array_equal(loaded.classifier.dictionary_.D_f, small_model.dictionary_.D_f)
    np.testing.assert_array_equal(loaded.classifier.direct_table_.slots, small_model.direct_table_.slots)


def test_model_header(model_bytes):
    h = modelfile.read_header(model_bytes)
    assert (h["K"], h["W"], h["m"], h["fft_size"]) == (120, 5, 257, 512)
    assert (h["Z"], h["bits"], h["T"], h["q"], h["d"]) == (4, 1024, 4, 3, 6)
    assert h["projection_seed"] == 1 and h["permutation_seed"] == 2
    assert h["labels"] == ["species00", "species01", "species02"]
    assert h["frame_s"] == pytest.approx(0.02)


def _reseal(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body))


def test_model_format_errors(model_bytes):
    with pytest.raises(ModelFormatError, match="magic"):
        modelfile.loads(b"NOTAMODEL" + model_bytes[9:])
    bumped = bytearray(model_bytes[:-4])
    bumped[8:10] = struct.pack("<H", modelfile.VERSION + 1)
    with pytest.raises(ModelFormatError, match="version"):
        modelfile.loads(_reseal(bytes(bumped)))
    with pytest.raises(ModelFormatError):
        modelfile.loads(model_bytes[: len(model_bytes) // 2])
    corrupt = bytearray(model_bytes)
    corrupt[len(corrupt) // 2] ^= 0xFF
    with pytest.raises(ModelFormatError, match="checksum"):
        modelfile.loads(bytes(corrupt))
    with pytest.raises(ModelFormatError):
        modelfile.loads(_reseal(model_bytes[:-4] + b"\x00"))


def test_model_with_integer_labels_roundtrips(small_vocs):
    clf = small_classifier(n_medoids=2, max_iter=5)
    labels = [int(v.label[-2:]) for v in small_vocs]
    clf.fit([v.csfs for v in small_vocs], labels)
    data = modelfile.dumps(modelfile.ConvHashModel(CsfExtractor(proj_dim=120, random_state=1), clf))
    loaded = modelfile.loads(data)
    assert loaded.classifier.classes_.tolist() == [0, 1, 2]
    assert modelfile.dumps(loaded) == data


# dataset ----------------------------------------------------------------------------

def test_manifest_roundtrip_and_errors(tmp_path, small_corpus):
    rows = read_manifest(small_corpus)
    assert len(rows) == 6 and all(r.has_annotations for r in rows)
    write_manifest(tmp_path / "m.csv", rows)
    assert [r.path for r in read_manifest(tmp_path / "m.csv")] == [r.path for r in rows]

    (tmp_path / "bad.csv").write_text("path,label,annotations_path\nmissing.wav,a,\n")
    with pytest.raises(DataError, match="does not exist"):
        read_manifest(tmp_path / "bad.csv")
    write_manifest(tmp_path / "nolabel.csv", [ManifestRow(rows[0].path, "", None)])
    with pytest.raises(DataError, match="empty label"):
        read_manifest(tmp_path / "nolabel.csv")
    with pytest.raises(DataError):
        read_manifest(tmp_path / "absent.csv")


def test_vocalizations_loaded_per_segment(small_vocs):
    assert len(small_vocs) == 30
    assert all(v.csfs.shape[1] == 120 and v.csfs.shape[0] > 0 for v in small_vocs)


# synthetic corpus ----------------------------------------------------------------

@pytest.mark.parametrize("q", [2, 10, 50])
def test_synth_bands_are_disjoint(q):
    bands = class_bands(q)
    assert bands[0][0] >= F_LO and bands[-1][1] <= F_HI
    for (a, b), (c, d) in zip(bands, bands[1:]):
        assert b < c
    for k, (lo, hi) in enumerate(bands):
        f_lo, f_hi = signal_frequency_range(q, k)
        assert lo <= f_lo < f_hi <= hi


def test_synth_counts_and_determinism(tmp_path):
    a = generate(SynthSpec(q=2, vocs_per_class=20, seed=5), tmp_path / "a")
    generate(SynthSpec(q=2, vocs_per_class=20, seed=5), tmp_path / "b")
    n_vocs = sum(len(r.annotations_path.read_text().strip().splitlines()) - 1 for r in a)
    assert n_vocs == 40
    for r in a:
        assert r.path.read_bytes() == (tmp_path / "b" / r.path.name).read_bytes()
    with pytest.raises(ValueError):
        generate(SynthSpec(q=1, vocs_per_class=5), tmp_path / "c")


# evaluation ---------------------------------------------------------------------------

def test_fold_parts_partition():
    labels = np.repeat(["a", "b", "c"], [9, 12, 7])
    parts, hold = fold_parts(labels, 3, seed=1)
    flat = sorted(i for p in parts for i in p)
    assert flat == list(range(len(labels))) and hold == []
    for p in parts:
        for lab in "abc":
            n = np.sum(labels == lab)
            assert abs(np.sum(labels[p] == lab) - n / 3) < 1

    # train-one scheme: each item trains in exactly one fold; standard: tested in exactly one
    train_one = fold_splits(parts, "train-one")
    standard = fold_splits(parts, "standard")
    for i in range(len(labels)):
        assert sum(i in tr for tr, _ in train_one) == 1
        assert sum(i in te for _, te in standard) == 1
    for tr, te in train_one:
        assert abs(len(tr) / len(labels) - 1 / 3) < 0.05
        assert not set(tr) & set(te)


def test_fold_parts_five_folds_and_holdout():
    labels = np.repeat(["a", "b"], 50)
    parts, hold = fold_parts(labels, 5, seed=0, holdout_fraction=0.2)
    assert len(hold) == 20
    assert sorted(hold + [i for p in parts for i in p]) == list(range(100))
    for tr, _ in fold_splits(parts, "train-one"):
        assert len(tr) == 16


def test_fold_parts_errors():
    with pytest.raises(DataError, match="'rare'"):
        fold_parts(np.array(["common"] * 6 + ["rare"] * 2), 3)


def test_evaluate_report(small_vocs):
    est = small_classifier(max_iter=10, n_medoids=3)
    r1 = evaluate(small_vocs, est, folds=3, seed=4)
    r2 = evaluate(small_vocs, est, folds=3, seed=4)
    assert r1.mean_accuracy == r2.mean_accuracy
    assert r1.confusion == r2.confusion
    for mode in ("full", "minhash"):
        assert 0.0 <= r1.mean_accuracy[mode] <= 1.0
        conf = np.array(r1.confusion[mode])
        # train-one scheme: each vocalization is tested in k - 1 folds
        assert conf.sum(axis=1).tolist() == [20, 20, 20]
    assert len(r1.folds) == 3 and "mean accuracy" in r1.summary()


def test_bench_report(small_model, small_vocs):
    rep = bench(small_model, [v.csfs for v in small_vocs[:6]], n_runs=4)
    assert len(rep.runs) == 4
    assert rep.n_vocalizations == 6 and rep.table_entries == 12
    assert rep.ratio == pytest.approx(rep.mean_latency_s["minhash"] / rep.mean_latency_s["full"])
