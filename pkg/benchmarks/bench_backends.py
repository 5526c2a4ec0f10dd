"""Compare the numba and numpy backends on the hot paths.

Each backend runs in its own interpreter because the choice is made at
import time from AQCEKIT_BACKEND. First-call (compile) time is reported
separately from the steady-state timings.

    python3 benchmarks/bench_backends.py [--images 10] [--repeat 3] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
import aqcekit
from aqcekit import _kernels, svm
from aqcekit.aqce import TIERS, encode, all_pairs
from aqcekit.dataset import bundled_mnist, per_class_slice
from aqcekit.qkernel import classical_gram
from aqcekit.statevec import random_circuit, random_unitary

n_img, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
x, y = bundled_mnist()
imgs = x[per_class_slice(y, 0, max(1, n_img // 10))][:n_img]

def best(fn):
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return min(out)

res = {"backend": aqcekit.BACKEND}

t = time.perf_counter()
encode(imgs[0], TIERS["f80"])
res["first_encode_s"] = time.perf_counter() - t

n = 10
state = rng.normal(size=1 << n)
state /= np.linalg.norm(state)
mats = np.stack([np.linalg.qr(rng.normal(size=(4, 4)))[0] for _ in range(24)])
pairs = random_circuit(n, 24, rng).as_arrays()[1]
cands = all_pairs(n)
tr = np.empty(24)
res["apply_2q_x1000_s"] = best(lambda: [_kernels.apply_2q(state, mats[0], 3, 7, n) for _ in range(1000)])
res["sweep_24_gates_s"] = best(lambda: _kernels.sweep(mats.copy(), pairs.copy(), state, n, cands, tr))
env = rng.normal(size=(45, 4, 4))
res["svd4_x45_s"] = best(lambda: [_kernels.svd4(e) for e in env])
res[f"encode_f80_x{len(imgs)}_s"] = best(lambda: [encode(v, TIERS["f80"]) for v in imgs])
k = classical_gram(x[per_class_slice(y, 0, 50)])
t01 = np.where(y[per_class_slice(y, 0, 50)] < 5, 1.0, -1.0)
res["smo_500_s"] = best(lambda: svm.train_binary(k, t01))
print(json.dumps(res))
"""


def run(backend, images, repeat):
    env = dict(os.environ, AQCEKIT_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKER, str(images), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write results here")
    a = ap.parse_args()

    t0 = time.perf_counter()
    rows = {b: run(b, a.images, a.repeat) for b in ("numba", "numpy")}
    keys = [k for k in rows["numba"] if k != "backend"]
    print(f"{'benchmark':<24}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for k in keys:
        nb, npy = rows["numba"][k], rows["numpy"][k]
        print(f"{k:<24}{nb:>12.4f}{npy:>12.4f}{npy / nb:>9.1f}x")
    print(f"(wall {time.perf_counter() - t0:.0f}s; first_encode includes JIT compile or cache load)")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
