"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (bad data, failed check), 2 usage error.
Progress goes to stderr; machine-readable results go to stdout or files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import qasmio, qkernel, svm
from .aqce import TIERS, EncodeParams

log = logging.getLogger("aqcekit")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _params(a) -> EncodeParams:
    base = TIERS[a.tier]
    kw = dict(
        max_gates=a.max_gates if a.max_gates is not None else base.max_gates,
        delta=a.delta if a.delta is not None else base.delta,
        target_fidelity=a.target_fidelity if a.target_fidelity is not None else base.target_fidelity,
        sweeps=a.sweeps,
        final_sweeps=a.final_sweeps,
        initial_gates=a.initial_gates,
    )
    try:
        return EncodeParams(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _workers(a) -> int:
    return a.workers if a.workers and a.workers > 0 else ds.default_workers()


# ------------------------------------------------------------------ encode


def cmd_encode(a) -> int:
    params = _params(a)
    if a.input == "bundled":
        x, y = ds.bundled_mnist()
        idx = ds.per_class_slice(y, a.start, a.stop)
        x, y = x[idx], y[idx]
    else:
        x, y = ds.load_images(a.input, a.format, labels=a.labels)
    if a.limit is not None:
        x, y = x[: a.limit], y[: a.limit]
    if len(x) == 0:
        print("error: no records in input", file=sys.stderr)
        return EXIT_FAIL
    if a.augment:
        x = np.stack([ds.augment(v, a.augment, seed=a.seed + i) for i, v in enumerate(x)])
    log.info("encoding %d vectors, tier params %s", len(x), params)
    records, failures = ds.encode_records(x, y, params, _workers(a), with_base=a.base, keep_going=True)
    if failures and not a.keep_going:
        for i, err in failures:
            print(f"error: record {i}: {err}", file=sys.stderr)
        return EXIT_FAIL
    manifest = ds.Manifest(a.kind, a.type, a.tier, len(records))
    summary = ds.materialize(records, manifest, a.out, make_zip=not a.no_zip)
    summary["failures"] = [{"index": i, "error": e} for i, e in failures]
    summary["fidelities"] = [round(r.fidelity, 9) for r in records]
    _emit(summary)
    return EXIT_FAIL if failures else EXIT_OK


# ---------------------------------------------------------------- to-base


def cmd_to_base(a) -> int:
    circuit = qasmio.read_circuit(a.input)
    doc = qasmio.emit_base(circuit)
    if a.out:
        qasmio.write_document(doc, a.out)
    else:
        sys.stdout.write(doc.text)
    return EXIT_OK


def cmd_tokenize(a) -> int:
    text = Path(a.input).read_text(encoding="utf-8")
    stream = qasmio.tokenize(text, a.decimals, real_only=not a.keep_imag)
    out = stream.to_file_text()
    if a.out:
        Path(a.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return EXIT_OK


# ------------------------------------------------------------ gram / svm


def _gram_for(data, cache, mode, workers):
    _, circuits, labels = ds.load_circuits(data)
    if not circuits:
        raise ValueError(f"{data}: dataset has no records")
    g = qkernel.cached_gram(circuits, cache, mode, workers)
    return g, circuits, labels


def cmd_gram(a) -> int:
    g, _, _ = _gram_for(a.data, a.out, a.mode, _workers(a))
    rep = g.check()
    rep.update({"size": g.size, "mode": g.mode, "path": a.out})
    _emit(rep)
    return EXIT_OK if rep["ok"] else EXIT_FAIL


def cmd_train(a) -> int:
    g, _, labels = _gram_for(a.data, a.gram, a.mode, _workers(a))
    model = svm.train_multiclass(g, labels, a.strategy, a.C)
    svm.save_model(model, a.out)
    pred = svm.predict(model, g.entries)
    _emit({"model": a.out, "strategy": a.strategy, "train_accuracy": svm.accuracy(pred, labels),
           "components": len(model.components)})
    return EXIT_OK


def _cross(train_dir, test_dir):
    _, tr, _ = ds.load_circuits(train_dir)
    _, te, te_labels = ds.load_circuits(test_dir)
    if tr and te and tr[0].n_qubits != te[0].n_qubits:
        raise ValueError("train and test circuits have different qubit counts")
    return qkernel.cross_kernel(te, tr), te_labels


def _write_predictions(path, pred):
    if path:
        Path(path).write_text("".join(f"{int(p)}\n" for p in pred), encoding="utf-8")


def _per_class(pred, truth) -> dict:
    out = {}
    for c in np.unique(truth):
        m = truth == c
        out[str(int(c))] = {"count": int(m.sum()), "correct": int((pred[m] == c).sum())}
    return out


def cmd_predict(a) -> int:
    model = svm.load_model(a.model)
    rows, truth = _cross(a.train, a.test)
    pred = svm.predict(model, rows)
    _write_predictions(a.out, pred)
    _emit({"accuracy": svm.accuracy(pred, truth), "n_test": int(len(truth)), "predictions": a.out})
    return EXIT_OK


def cmd_classify(a) -> int:
    g, _, labels = _gram_for(a.train, a.gram, a.mode, _workers(a))
    rows, truth = _cross(a.train, a.test)
    strategies = svm.STRATEGIES if a.strategy == "both" else (a.strategy,)
    result = {}
    for st in strategies:
        model = svm.train_multiclass(g, labels, st, a.C)
        pred = svm.predict(model, rows)
        result[st] = {"accuracy": svm.accuracy(pred, truth), "per_class": _per_class(pred, truth)}
        if a.out:
            out = a.out if len(strategies) == 1 else f"{a.out}.{st}"
            _write_predictions(out, pred)
    _emit(result)
    return EXIT_OK


def cmd_validate(a) -> int:
    problems = ds.validate_dataset(a.data, a.max_report)
    for p in problems:
        print(p, file=sys.stderr)
    _emit({"data": a.data, "ok": not problems, "violations": problems})
    return EXIT_OK if not problems else EXIT_FAIL


# ------------------------------------------------------------------ parser


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aqcekit", description="Circuit encoding of images and kernel SVM tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def workers(sp):
        sp.add_argument("--workers", type=int, default=0, help="parallel workers (default: all cores)")

    e = sub.add_parser("encode", help="encode images into a dataset directory")
    e.add_argument("input", help="IDX images file, CSV file, or 'bundled'")
    e.add_argument("--format", choices=("idx", "csv"), default=None)
    e.add_argument("--labels", help="IDX labels file (inferred by default)")
    e.add_argument("--start", type=int, default=0, help="bundled: first index per class")
    e.add_argument("--stop", type=int, default=1, help="bundled: stop index per class")
    e.add_argument("--limit", type=int, default=None)
    e.add_argument("--out", required=True, help="output root directory")
    e.add_argument("--tier", choices=tuple(TIERS), default="f95")
    e.add_argument("--max-gates", type=_positive_int)
    e.add_argument("--delta", type=_positive_int)
    e.add_argument("--target-fidelity", type=float)
    e.add_argument("--sweeps", type=_positive_int, default=10)
    e.add_argument("--final-sweeps", type=_positive_int, default=100)
    e.add_argument("--initial-gates", type=_positive_int)
    e.add_argument("--kind", choices=ds.KINDS, default="train")
    e.add_argument("--type", choices=ds.TYPES, default="mnist_784")
    e.add_argument("--base", action="store_true", help="also write base_ QASM files")
    e.add_argument("--augment", choices=ds.AUGMENT_OPS)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--keep-going", action="store_true", help="skip failing records instead of stopping")
    e.add_argument("--no-zip", action="store_true")
    workers(e)
    e.set_defaults(func=cmd_encode)

    b = sub.add_parser("to-base", help="convert a dense QASM file to the base dialect")
    b.add_argument("input")
    b.add_argument("--out")
    b.set_defaults(func=cmd_to_base)

    t = sub.add_parser("tokenize", help="strip headers and round dense matrices")
    t.add_argument("input")
    t.add_argument("--decimals", type=int, default=1)
    t.add_argument("--keep-imag", action="store_true", help="keep imaginary parts as tokens")
    t.add_argument("--out")
    t.set_defaults(func=cmd_tokenize)

    g = sub.add_parser("gram", help="build (or reuse) a Gram cache for a dataset")
    g.add_argument("data")
    g.add_argument("--out", required=True, help="Gram cache file (.npz)")
    g.add_argument("--mode", choices=qkernel.MODES, default="statevector")
    workers(g)
    g.set_defaults(func=cmd_gram)

    def svm_opts(sp, strategies=svm.STRATEGIES, default="one_vs_one"):
        sp.add_argument("--strategy", choices=strategies, default=default)
        sp.add_argument("--C", type=float, default=1.0)
        sp.add_argument("--mode", choices=qkernel.MODES, default="statevector")
        sp.add_argument("--gram", help="Gram cache file to reuse/write")
        workers(sp)

    tr = sub.add_parser("train", help="train a multiclass kernel SVM")
    tr.add_argument("data")
    tr.add_argument("--out", required=True, help="model file")
    svm_opts(tr)
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict a test dataset with a saved model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--train", required=True, help="training dataset the model was fit on")
    pr.add_argument("--test", required=True)
    pr.add_argument("--out", help="predictions file")
    pr.set_defaults(func=cmd_predict)

    c = sub.add_parser("classify", help="train on one dataset and score another")
    c.add_argument("--train", required=True)
    c.add_argument("--test", required=True)
    c.add_argument("--out", help="predictions file")
    svm_opts(c, svm.STRATEGIES + ("both",), "both")
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("validate", help="re-check every record of a dataset")
    v.add_argument("data")
    v.add_argument("--max-report", type=int, default=10)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return a.func(a)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
