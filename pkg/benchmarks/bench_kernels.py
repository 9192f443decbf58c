"""Time the numba and numpy variants of each hot kernel, plus full fits per backend.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from subspace_fsl import _kernels


def kernel_inputs(rng):
    # sizes follow the default experiment: 512 features, 300 training samples, k=30
    U = rng.random((512, 30))
    V = rng.random((300, 30))
    return {
        "mu_step": (U, rng.random((512, 30)), rng.random((512, 30)), 1e-12),
        "mu_step_ridge": (U, rng.random((512, 30)), rng.random((512, 30)), 0.5, 1e-12),
        "signed_mu_step": (V, rng.random((300, 30)), rng.random((300, 30)),
                           rng.standard_normal((300, 30)), rng.standard_normal((300, 30)),
                           1.0, 1e-12),
        "sq_distances": (rng.random((80, 30)), V),
        "knn_vote": (rng.random((80, 300)), rng.integers(0, 2, 300).astype(np.int64), 5, 2),
        "bilinear": (rng.random((7, 7)), 224, 224),
    }


FIT_SNIPPET = """
import time, numpy as np
from subspace_fsl import fit, _accel
X = np.random.default_rng(0).random((512, 300)); y = np.arange(300) % 2
for m in ("nmf", "dnmf", "scnmfs"):
    fit(m, X, 30, labels=y, iters=5)
    t = time.perf_counter(); fit(m, X, 30, labels=y, iters=500)
    print(f"{_accel.backend():6s} {m:7s} 500 sweeps  {time.perf_counter() - t:8.3f} s")
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    inputs = kernel_inputs(np.random.default_rng(0))
    print(f"{'kernel':16s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, (nb, np_) in _kernels.KERNELS.items():
        a = inputs[name]
        nb(*a)  # compile outside the timing
        t_nb = min(timeit.repeat(lambda: nb(*a), number=10, repeat=args.repeat)) / 10
        t_np = min(timeit.repeat(lambda: np_(*a), number=10, repeat=args.repeat)) / 10
        same = np.asarray(nb(*a)).tobytes() == np.asarray(np_(*a)).tobytes()
        print(f"{name:16s} {t_nb * 1e3:10.4f} {t_np * 1e3:10.4f} {t_np / t_nb:8.2f}"
              + ("" if same else "  MISMATCH"))
    print(flush=True)
    for flag in ("0", "1"):
        env = dict(os.environ, SUBSPACE_FSL_DISABLE_NUMBA=flag)
        subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, check=True)


if __name__ == "__main__":
    main()
