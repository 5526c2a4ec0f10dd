import gzip
import hashlib
import struct

import numpy as np
import pytest

from aqcekit import qasmio
from aqcekit.aqce import TIERS, EncodeParams
from aqcekit.dataset import (
    DatasetFormatError,
    Manifest,
    augment,
    crop_resize,
    encode_record,
    encode_records,
    format_state,
    load_circuits,
    load_images,
    materialize,
    measured_fidelity,
    parse_state,
    per_class_slice,
    read_dataset,
    rotate,
    validate_dataset,
    write_vectors_csv,
)
from aqcekit.statevec import DimensionError, from_classical, run_circuit
from conftest import DATA

# Bilinear rotate by +50 then -50 degrees loses detail at the digit edges;
# measured ~8.3 mean abs difference (0-255 scale) on the bundled images.
ROTATION_ROUND_TRIP_BOUND = 12.0

SMALL = EncodeParams(max_gates=6, delta=2, target_fidelity=0.8)


def idx_bytes(magic, arr):
    dims = arr.shape
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + arr.astype(np.uint8).tobytes()


def write_idx_pair(tmp_path, x, y, gz=True):
    img = tmp_path / ("imgs-idx3-ubyte" + (".gz" if gz else ""))
    lab = tmp_path / ("labs-idx1-ubyte" + (".gz" if gz else ""))
    opener = gzip.open if gz else open
    with opener(img, "wb") as fh:
        fh.write(idx_bytes(0x803, x.reshape(-1, 28, 28)))
    with opener(lab, "wb") as fh:
        fh.write(idx_bytes(0x801, y))
    return img, lab


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# ingestion


def test_csv_fixture_three_rows():
    x, y = load_images(DATA / "mnist_3.csv")
    assert x.shape == (3, 784) and y.tolist() == [0, 0, 0]
    assert x.min() >= 0 and x.max() <= 255


def test_csv_header_and_bad_width(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("label," + ",".join(f"p{i}" for i in range(784)) + "\n3," + ",".join(["1"] * 784) + "\n")
    x, y = load_images(p)
    assert y.tolist() == [3] and x.sum() == 784
    bad = tmp_path / "bad.csv"
    bad.write_text("1," + ",".join(["0"] * 700) + "\n")
    with pytest.raises(DatasetFormatError, match="784"):
        load_images(bad)


def test_idx_round_trip_and_magic(tmp_path, rng):
    x = rng.integers(0, 256, size=(4, 784))
    y = np.array([1, 2, 3, 9])
    img, lab = write_idx_pair(tmp_path, x, y)
    x2, y2 = load_images(img, labels=lab)
    np.testing.assert_array_equal(x2, x)
    np.testing.assert_array_equal(y2, y)
    # swapped files: the magic number check fires
    with pytest.raises(DatasetFormatError):
        load_images(lab, "idx", labels=img)


def test_csv_writer_round_trip(tmp_path, mnist):
    x, y = mnist
    write_vectors_csv(x[:5], y[:5], tmp_path / "v.csv")
    x2, y2 = load_images(tmp_path / "v.csv")
    np.testing.assert_array_equal(x2, x[:5])
    np.testing.assert_array_equal(y2, y[:5])


def test_all_zero_row_accepted_then_rejected(tmp_path):
    p = tmp_path / "z.csv"
    p.write_text("4," + ",".join(["0"] * 784) + "\n")
    x, _ = load_images(p)
    with pytest.raises(ZeroDivisionError):
        from_classical(x[0])


def test_bundled_subset(mnist):
    x, y = mnist
    assert x.shape == (5000, 784)
    assert np.bincount(y).tolist() == [500] * 10
    idx = per_class_slice(y, 3, 5)
    assert len(idx) == 20 and y[idx].tolist() == sorted(y[idx].tolist())


# augmentation


def test_rotate_zero_is_identity(mnist):
    img = mnist[0][10]
    np.testing.assert_array_equal(rotate(img, 0).reshape(-1), img)
    np.testing.assert_array_equal(augment(img, "rotate", angle=0.0), img)


def test_rotate_round_trip_bound(mnist):
    x, _ = mnist
    diffs = [np.abs(rotate(rotate(img, 50), -50).reshape(-1) - img).mean() for img in x[::500]]
    assert max(diffs) <= ROTATION_ROUND_TRIP_BOUND


@pytest.mark.parametrize("op", ["rotate", "rotate_crop", "rotate_crop_shift"])
def test_augment_deterministic(op, mnist):
    img = mnist[0][42]
    a, b = augment(img, op, seed=7), augment(img, op, seed=7)
    assert a.tobytes() == b.tobytes()
    assert a.shape == img.shape
    assert a.min() >= 0 and a.max() <= img.max()
    assert not np.array_equal(a, augment(img, op, seed=8))


def test_augment_bounds(mnist):
    img = mnist[0][0]
    with pytest.raises(ValueError):
        augment(img, "rotate", angle=51)
    with pytest.raises(ValueError):
        augment(img, "flip")
    assert crop_resize(np.ones((28, 28))).shape == (28, 28)


# records and files


def test_state_text_round_trip(rng):
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    text = format_state(v)
    assert len(text.splitlines()) == 8
    assert all(len(part.split(".")[1]) == 6 for ln in text.splitlines() for part in ln.split(","))
    np.testing.assert_allclose(parse_state(text), v, atol=5e-7)
    with pytest.raises(DatasetFormatError):
        parse_state("1.0\n")


def test_manifest_naming():
    m = Manifest("train", "mnist_784", "f95", 3)
    assert m.name == "train_mnist_784_f95"
    assert Manifest.from_text(m.to_text()) == m
    with pytest.raises(ValueError):
        Manifest("val", "mnist_784", "f95", 3)
    with pytest.raises(ValueError):
        Manifest("train", "mnist_784", "f99", 3)


def test_record_fidelity_from_files(mnist):
    x, y = mnist
    rec = encode_record(0, x[0], y[0], SMALL, with_base=True)
    state_text = format_state(rec.state)
    assert measured_fidelity(rec.qasm_dense, state_text) == rec.fidelity
    # the circuit reproduces the recorded fidelity against the exact target too
    c = qasmio.parse(rec.qasm_dense)
    exact = abs(np.vdot(run_circuit(c).amplitudes, from_classical(x[0]).amplitudes))
    assert exact >= rec.fidelity - 1e-6


def test_encode_records_order_and_failures(mnist):
    x, y = mnist
    vecs = [x[1], np.zeros(784), x[2]]
    with pytest.raises(ZeroDivisionError):
        encode_records(vecs, [1, 2, 3], SMALL)
    recs, fails = encode_records(vecs, [1, 2, 3], SMALL, keep_going=True)
    assert [r.index for r in recs] == [0, 2]
    assert fails[0][0] == 1 and "ZeroDivisionError" in fails[0][1]


def test_materialize_layout_and_idempotence(tmp_path, mnist):
    x, y = mnist
    recs, _ = encode_records(x[:2], y[:2], SMALL, with_base=True)
    m = Manifest("train", "mnist_784", "f80", 2)
    s1 = materialize(recs, m, tmp_path)
    root = tmp_path / m.name
    for sub in ("fidelity", "label", "state"):
        assert len(list((root / sub).iterdir())) == 2
    assert sorted(p.name for p in (root / "qasm").iterdir()) == [
        "000000.qasm", "000001.qasm", "base_000000.qasm", "base_000001.qasm"]
    digest = tree_digest(root)
    zbytes = (tmp_path / f"{m.name}.zip").read_bytes()
    s2 = materialize(recs, m, tmp_path)
    assert tree_digest(root) == digest
    assert (tmp_path / f"{m.name}.zip").read_bytes() == zbytes
    assert s1 == s2 and s1["count"] == 2
    assert s1["min_fidelity"] == min(r.fidelity for r in recs)
    assert validate_dataset(root) == []
    man, back = read_dataset(root)
    assert man == m and [r.label for r in back] == y[:2].tolist()
    _, circuits, labels = load_circuits(root)
    assert len(circuits) == 2 and labels.tolist() == y[:2].tolist()


def test_materialize_refuses_foreign_dir(tmp_path, mnist):
    m = Manifest("test", "mnist_784", "f80", 0)
    (tmp_path / m.name).mkdir()
    (tmp_path / m.name / "notes.txt").write_text("mine")
    with pytest.raises(FileExistsError):
        materialize([], m, tmp_path)
    with pytest.raises(ValueError):
        materialize([], Manifest("test", "mnist_784", "f80", 1), tmp_path / "other")


def test_f95_batch_summary(tmp_path, mnist):
    x, y = mnist
    idx = per_class_slice(y, 200, 201)[:3]
    recs, _ = encode_records(x[idx], y[idx], TIERS["f95"])
    s = materialize(recs, Manifest("test", "mnist_784", "f95", 3), tmp_path, make_zip=False)
    assert s["min_fidelity"] >= 0.95 and s["zip"] is None


def test_validate_reports_corruption(tmp_path, mnist):
    x, y = mnist
    recs, _ = encode_records(x[:2], y[:2], SMALL)
    m = Manifest("train", "mnist_784", "f80", 2)
    materialize(recs, m, tmp_path, make_zip=False)
    root = tmp_path / m.name
    q = root / "qasm" / "000001.qasm"
    lines = q.read_text().splitlines()
    lines[3] = lines[3].rstrip(";")
    q.write_text("\n".join(lines) + "\n")
    (root / "fidelity" / "000000.txt").write_text("0.5\n")
    probs = validate_dataset(root)
    assert len(probs) == 2
    assert "000000.qasm" in probs[0] and "recorded" in probs[0]
    assert "000001.qasm" in probs[1] and "line 4" in probs[1]
    assert validate_dataset(root, max_report=1) == probs[:1]


def test_dimension_of_mnist_vectors(mnist):
    with pytest.raises(DimensionError):
        from_classical(mnist[0][0], n_qubits=9)
