"""Image ingestion, augmentation and the on-disk dataset layout.

A materialized dataset named ``<kind>_<type>_<tier>`` looks like::

    <root>/<name>/manifest.txt
    <root>/<name>/fidelity/000000.txt    recorded fidelity (repr float)
    <root>/<name>/label/000000.txt       class id
    <root>/<name>/qasm/000000.qasm       dense dialect
    <root>/<name>/qasm/base_000000.qasm  base dialect (optional)
    <root>/<name>/state/000000.txt       target amplitudes, "re,im" per line, 6 decimals
    <root>/<name>.zip                    same tree, deterministic archive

The recorded fidelity is measured from the files themselves: the parsed
dense QASM is simulated and compared with the stored (re-normalized) state.
"""

from __future__ import annotations

import gzip
import io
import logging
import os
import shutil
import struct
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import qasmio
from .aqce import TIERS, EncodeParams, encode, sweep
from .statevec import Circuit, StateVector, from_classical, run_circuit

log = logging.getLogger(__name__)

IMAGE_SIDE = 28
IMAGE_SIZE = IMAGE_SIDE * IMAGE_SIDE
KINDS = ("train_orig", "base_train", "train", "test", "base_test")
TYPES = ("mnist_784", "Fashion-MNIST", "Kuzushiji-MNIST")
STATE_DECIMALS = 6
MAX_ROTATION = 50.0
CROP = 24
MAX_SHIFT = 3
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class DatasetFormatError(ValueError):
    pass


# ------------------------------------------------------------------ loading


def _open_maybe_gz(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def _read_idx(fh, expect_magic: int) -> np.ndarray:
    head = fh.read(4)
    if len(head) < 4:
        raise DatasetFormatError("file too short for an IDX header")
    magic = struct.unpack(">I", head)[0]
    if magic != expect_magic:
        raise DatasetFormatError(f"IDX magic number {magic:#x}, expected {expect_magic:#x}")
    ndim = magic & 0xFF
    dims = struct.unpack(">" + "I" * ndim, fh.read(4 * ndim))
    data = np.frombuffer(fh.read(), dtype=np.uint8)
    if data.size != int(np.prod(dims)):
        raise DatasetFormatError(f"IDX payload has {data.size} bytes, header promises {int(np.prod(dims))}")
    return data.reshape(dims)


def _labels_path_for(images: Path) -> Path:
    name = images.name
    for a, b in (("images-idx3", "labels-idx1"), ("images.idx3", "labels.idx1")):
        if a in name:
            return images.with_name(name.replace(a, b))
    raise DatasetFormatError(f"cannot infer the labels file for {images}; pass labels=")


def load_images(source, fmt: str | None = None, labels=None) -> tuple[np.ndarray, np.ndarray]:
    """Read ``(vectors[N, 784], labels[N])`` from an IDX pair or a CSV file.

    CSV rows are ``label,p0,...,p783``; a non-numeric first row is taken as
    a header. IDX files may be gzipped; the labels file is inferred from the
    images file name unless given.
    """
    source = Path(source)
    if fmt is None:
        fmt = "csv" if source.suffix.lower() == ".csv" else "idx"
    if fmt == "idx":
        with _open_maybe_gz(source) as fh:
            imgs = _read_idx(fh, 0x803)
        lab_path = Path(labels) if labels is not None else _labels_path_for(source)
        with _open_maybe_gz(lab_path) as fh:
            lab = _read_idx(fh, 0x801)
        if imgs.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
            raise DatasetFormatError(f"images are {imgs.shape[1:]}, expected 28x28")
        if lab.shape[0] != imgs.shape[0]:
            raise DatasetFormatError("image and label counts differ")
        x, y = imgs.reshape(-1, IMAGE_SIZE).astype(np.float64), lab.astype(np.int64)
    elif fmt == "csv":
        with open(source, encoding="utf-8") as fh:
            rows = [ln.strip() for ln in fh if ln.strip()]
        if rows and not rows[0].split(",")[0].strip().lstrip("-").replace(".", "", 1).isdigit():
            rows = rows[1:]
        if not rows:
            return np.zeros((0, IMAGE_SIZE)), np.zeros(0, dtype=np.int64)
        try:
            arr = np.array([[float(v) for v in r.split(",")] for r in rows]).reshape(len(rows), -1)
        except ValueError as exc:
            raise DatasetFormatError(f"{source}: {exc}") from None
        if arr.size and arr.shape[1] != IMAGE_SIZE + 1:
            raise DatasetFormatError(f"{source}: rows have {arr.shape[1] - 1} pixels, expected {IMAGE_SIZE}")
        x, y = arr[:, 1:].reshape(-1, IMAGE_SIZE), arr[:, 0].astype(np.int64)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if np.any((y < 0) | (y > 9)):
        raise DatasetFormatError("labels must lie in 0..9")
    if x.size and (x.min() < 0 or x.max() > 255):
        raise DatasetFormatError("pixel values must lie in [0, 255]")
    return x, y


def bundled_mnist() -> tuple[np.ndarray, np.ndarray]:
    """5000-image MNIST subset shipped with the package, 500 per class, sorted by class."""
    base = resources.files("aqcekit") / "data"
    with resources.as_file(base / "mnist5k-images-idx3-ubyte.gz") as p_img, \
            resources.as_file(base / "mnist5k-labels-idx1-ubyte.gz") as p_lab:
        return load_images(p_img, "idx", labels=p_lab)


def per_class_slice(labels, start: int, stop: int) -> np.ndarray:
    """Indices of samples ``start:stop`` within each class, classes in order."""
    labels = np.asarray(labels)
    out = [np.flatnonzero(labels == c)[start:stop] for c in np.unique(labels)]
    return np.concatenate(out)


# ------------------------------------------------------------- augmentation

AUGMENT_OPS = ("rotate", "rotate_crop", "rotate_crop_shift")


def rotate(image, angle: float) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64).reshape(IMAGE_SIDE, IMAGE_SIDE)
    if angle == 0:
        return img.copy()
    return ndimage.rotate(img, angle, reshape=False, order=1, mode="constant", cval=0.0)


def crop_resize(img: np.ndarray, size: int = CROP) -> np.ndarray:
    lo = (IMAGE_SIDE - size) // 2
    sub = img[lo:lo + size, lo:lo + size]
    out = ndimage.zoom(sub, IMAGE_SIDE / size, order=1)
    return out[:IMAGE_SIDE, :IMAGE_SIDE]


def augment(image, op: str = "rotate", seed: int = 0, angle: float | None = None,
            shift: tuple[int, int] | None = None) -> np.ndarray:
    """One augmentation of a 28x28 image (flat or square input, same shape out).

    The angle is uniform in ``[-50, 50]`` degrees and the shift uniform in
    ``[-3, 3]`` pixels per axis, both drawn from ``seed`` unless given.
    Crops keep the central 24x24 pixels and resize back to 28x28.
    """
    if op not in AUGMENT_OPS:
        raise ValueError(f"op must be one of {AUGMENT_OPS}")
    src = np.asarray(image, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if angle is None:
        angle = float(rng.uniform(-MAX_ROTATION, MAX_ROTATION))
    if abs(angle) > MAX_ROTATION:
        raise ValueError(f"rotation {angle} exceeds +-{MAX_ROTATION} degrees")
    out = rotate(src, angle)
    if op in ("rotate_crop", "rotate_crop_shift"):
        out = crop_resize(out)
    if op == "rotate_crop_shift":
        if shift is None:
            shift = tuple(int(v) for v in rng.integers(-MAX_SHIFT, MAX_SHIFT + 1, size=2))
        out = ndimage.shift(out, shift, order=0, mode="constant", cval=0.0)
    hi = src.max() if src.size else 0.0
    out = np.clip(out, 0.0, hi)
    return out.reshape(src.shape)


# ------------------------------------------------------------------ records


@dataclass
class DataRecord:
    index: int
    label: int
    fidelity: float
    qasm_dense: str
    qasm_base: str | None = None
    state: np.ndarray | None = None


@dataclass(frozen=True)
class Manifest:
    kind: str
    type: str
    fidelity: str
    count: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.type not in TYPES:
            raise ValueError(f"type must be one of {TYPES}")
        if self.fidelity not in TIERS:
            raise ValueError(f"fidelity tier must be one of {tuple(TIERS)}")

    @property
    def name(self) -> str:
        return f"{self.kind}_{self.type}_{self.fidelity}"

    def to_text(self) -> str:
        return (f"name {self.name}\nkind {self.kind}\ntype {self.type}\n"
                f"fidelity {self.fidelity}\ncount {self.count}\n")

    @classmethod
    def from_text(cls, text: str) -> "Manifest":
        kv = dict(ln.split(None, 1) for ln in text.splitlines() if ln.strip())
        m = cls(kv["kind"].strip(), kv["type"].strip(), kv["fidelity"].strip(), int(kv["count"]))
        if "name" in kv and kv["name"].strip() != m.name:
            raise ValueError(f"manifest name {kv['name'].strip()!r} does not match {m.name!r}")
        return m


def format_state(amps: np.ndarray) -> str:
    lines = []
    for z in np.asarray(amps).reshape(-1):
        lines.append(f"{qasmio._fmt(z.real, STATE_DECIMALS)},{qasmio._fmt(z.imag, STATE_DECIMALS)}")
    return "\n".join(lines) + "\n"


def parse_state(text: str) -> np.ndarray:
    vals = []
    for no, ln in enumerate(text.splitlines(), start=1):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != 2:
            raise DatasetFormatError(f"state line {no}: expected 're,im'")
        vals.append(complex(float(parts[0]), float(parts[1])))
    return np.array(vals, dtype=np.complex128)


def measured_fidelity(qasm_dense: str, state_text: str) -> float:
    """Fidelity as seen by a reader of the files: parsed circuit vs stored state."""
    circuit = qasmio.parse(qasm_dense)
    target = StateVector(parse_state(state_text))
    target = StateVector(target.amplitudes / target.norm)
    out = run_circuit(circuit)
    return float(abs(np.vdot(out.amplitudes, target.amplitudes)))


def _serialize(circuit: Circuit, target: StateVector) -> tuple[str, str, float]:
    dense = qasmio.emit_dense(circuit).text
    state_text = format_state(target.amplitudes)
    return dense, state_text, measured_fidelity(dense, state_text)


def encode_record(index: int, x, label: int, params: EncodeParams, with_base: bool = False,
                  top_up: int = 5) -> DataRecord:
    """Encode one vector into a record.

    Rounding to 6 decimals moves the fidelity by ~1e-6; if that drops a
    record that met its target below it, a few extra sweeps are run.
    """
    res = encode(x, params)
    target = from_classical(x, res.circuit.n_qubits)
    circuit = res.circuit
    dense, state_text, fid = _serialize(circuit, target)
    extra = 0
    while res.fidelity >= params.target_fidelity and fid < params.target_fidelity and extra < top_up:
        circuit, _ = sweep(circuit, target)
        dense, state_text, fid = _serialize(circuit, target)
        extra += 1
    # from the stored dense text, so converting the file later gives the same bytes
    base = qasmio.emit_base(qasmio.parse(dense)).text if with_base else None
    return DataRecord(index, int(label), fid, dense, base, parse_state(state_text))


def _encode_job(args):
    return encode_record(*args)


def encode_records(vectors, labels, params: EncodeParams, workers: int = 1, with_base: bool = False,
                   keep_going: bool = False) -> tuple[list[DataRecord], list[tuple[int, str]]]:
    """Encode many vectors; returns records in input order and ``(index, error)`` failures."""
    jobs = [(i, x, int(y), params, with_base) for i, (x, y) in enumerate(zip(vectors, labels))]
    records, failures = [], []

    def take(i, fut_or_fn):
        try:
            records.append(fut_or_fn())
        except Exception as exc:  # noqa: BLE001 - reported per record
            if not keep_going:
                raise
            failures.append((i, f"{type(exc).__name__}: {exc}"))

    if workers <= 1:
        for job in jobs:
            take(job[0], lambda job=job: _encode_job(job))
    else:
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(_encode_job, job) for job in jobs]
            for job, fut in zip(jobs, futs):
                take(job[0], fut.result)
    return records, failures


# -------------------------------------------------------------- materialize


def _record_files(rec: DataRecord) -> dict[str, bytes]:
    stem = f"{rec.index:06d}"
    files = {
        f"fidelity/{stem}.txt": f"{rec.fidelity!r}\n".encode(),
        f"label/{stem}.txt": f"{rec.label}\n".encode(),
        f"qasm/{stem}.qasm": rec.qasm_dense.encode(),
    }
    if rec.qasm_base is not None:
        files[f"qasm/base_{stem}.qasm"] = rec.qasm_base.encode()
    if rec.state is not None:
        files[f"state/{stem}.txt"] = format_state(rec.state).encode()
    return files


def materialize(records, manifest: Manifest, out_dir, make_zip: bool = True) -> dict:
    """Write records under ``out_dir/<manifest.name>``; returns a summary dict.

    An existing dataset directory of the same name is replaced, so a rerun
    with the same records produces byte-identical files and archive.
    """
    records = sorted(records, key=lambda r: r.index)
    if manifest.count != len(records):
        raise ValueError(f"manifest says {manifest.count} records, got {len(records)}")
    root = Path(out_dir) / manifest.name
    if root.exists():
        if not (root / "manifest.txt").exists():
            raise FileExistsError(f"{root} exists and is not a dataset directory")
        shutil.rmtree(root)
    files = {"manifest.txt": manifest.to_text().encode()}
    for rec in records:
        files.update(_record_files(rec))
    for sub in ("fidelity", "label", "qasm", "state"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for rel, data in files.items():
        (root / rel).write_bytes(data)
    zpath = None
    if make_zip:
        zpath = Path(out_dir) / f"{manifest.name}.zip"
        with zipfile.ZipFile(zpath, "w", zipfile.ZIP_DEFLATED) as zf:
            for rel in sorted(files):
                info = zipfile.ZipInfo(f"{manifest.name}/{rel}", date_time=_ZIP_DATE)
                info.external_attr = 0o644 << 16
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, files[rel])
    fids = np.array([r.fidelity for r in records]) if records else np.zeros(0)
    return {
        "name": manifest.name,
        "path": str(root),
        "zip": str(zpath) if zpath else None,
        "count": len(records),
        "min_fidelity": float(fids.min()) if fids.size else float("nan"),
        "mean_fidelity": float(fids.mean()) if fids.size else float("nan"),
    }


def read_dataset(path) -> tuple[Manifest, list[DataRecord]]:
    root = Path(path)
    manifest = Manifest.from_text((root / "manifest.txt").read_text(encoding="utf-8"))
    records = []
    for qf in sorted((root / "qasm").glob("[0-9]*.qasm")):
        stem = qf.stem
        base = root / "qasm" / f"base_{stem}.qasm"
        state = root / "state" / f"{stem}.txt"
        records.append(DataRecord(
            int(stem),
            int((root / "label" / f"{stem}.txt").read_text().strip()),
            float((root / "fidelity" / f"{stem}.txt").read_text().strip()),
            qf.read_text(encoding="utf-8"),
            base.read_text(encoding="utf-8") if base.exists() else None,
            parse_state(state.read_text()) if state.exists() else None,
        ))
    return manifest, records


def load_circuits(path) -> tuple[Manifest, list[Circuit], np.ndarray]:
    manifest, records = read_dataset(path)
    circuits = [qasmio.parse(r.qasm_dense) for r in records]
    return manifest, circuits, np.array([r.label for r in records], dtype=np.int64)


def validate_dataset(path, max_report: int = 10, tol: float = 1e-6) -> list[str]:
    """Re-parse and re-simulate every record; returns violation messages (empty if clean)."""
    root = Path(path)
    problems: list[str] = []

    def report(msg):
        problems.append(msg)
        return len(problems) >= max_report

    try:
        manifest = Manifest.from_text((root / "manifest.txt").read_text(encoding="utf-8"))
    except (OSError, KeyError, ValueError) as exc:
        return [f"{root / 'manifest.txt'}: {exc}"]
    stems = sorted(p.stem for p in (root / "qasm").glob("[0-9]*.qasm"))
    if len(stems) != manifest.count:
        if report(f"{root}: manifest count {manifest.count} but {len(stems)} qasm files"):
            return problems
    for stem in stems:
        qf = root / "qasm" / f"{stem}.qasm"
        try:
            label = int((root / "label" / f"{stem}.txt").read_text().strip())
            recorded = float((root / "fidelity" / f"{stem}.txt").read_text().strip())
            state_text = (root / "state" / f"{stem}.txt").read_text()
        except (OSError, ValueError) as exc:
            if report(f"{root}/*/{stem}: unreadable record ({exc})"):
                break
            continue
        if not 0 <= label <= 9:
            if report(f"{root / 'label' / (stem + '.txt')}: label {label} outside 0..9"):
                break
        try:
            dense_text = qf.read_text(encoding="utf-8")
            measured = measured_fidelity(dense_text, state_text)
        except (qasmio.QasmError, ValueError, UnicodeDecodeError) as exc:
            if report(f"{qf}: {exc}"):
                break
            continue
        if abs(measured - recorded) > tol:
            if report(f"{qf}: measured fidelity {measured:.9f} vs recorded {recorded:.9f}"):
                break
        base = root / "qasm" / f"base_{stem}.qasm"
        if base.exists():
            try:
                a = run_circuit(qasmio.parse(dense_text)).amplitudes
                b = run_circuit(qasmio.parse(base.read_text(encoding="utf-8"))).amplitudes
                ov = abs(np.vdot(a, b))
            except (qasmio.QasmError, ValueError) as exc:
                if report(f"{base}: {exc}"):
                    break
                continue
            if ov < 1 - 1e-4:
                if report(f"{base}: base form overlap {ov:.9f} with the dense form"):
                    break
    return problems


def write_vectors_csv(x, y, path):
    """CSV in the ``label,pixels...`` layout read by :func:`load_images`."""
    buf = io.StringIO()
    for row, lab in zip(np.asarray(x), np.asarray(y)):
        buf.write(str(int(lab)) + "," + ",".join(str(int(round(v))) for v in row) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def default_workers() -> int:
    return os.cpu_count() or 1
