"""Compare the numba and numpy kernel paths.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times each kernel directly under both implementations (after a warm-up call
that triggers JIT compilation), checks they agree, then times one training
epoch in a subprocess per VADSPHERE_BACKEND value.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from vadsphere import _kernels as K

EPOCH_SNIPPET = """
import time
from vadsphere import _kernels
from vadsphere.data import synthesize_dataset, Split
from vadsphere.model import ModelConfig, init_model
from vadsphere.train import TrainConfig, TrainState, prepare_task, train_epoch
ds, _, _ = synthesize_dataset(512, 16, 10, 0.05, seed=0)
cfg = TrainConfig(epochs=1)
task = prepare_task(ds.subset(Split.TRAIN), ds.subset(Split.VAL), cfg)
model = init_model(ModelConfig())
state = TrainState.fresh(0)
train_epoch(model, task, cfg, state)
t = time.perf_counter()
for _ in range(3):
    train_epoch(model, task, cfg, state)
print(_kernels.BACKEND, (time.perf_counter() - t) / 3)
"""


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if not K.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    x = rng.normal(size=(32, 10, 32))
    w = rng.normal(size=(5, 32, 64))
    b = rng.normal(size=64)
    g = rng.normal(size=(32, 10, 64))
    az = rng.uniform(0, 360, size=100_000)
    el = rng.uniform(0, 180, size=100_000)

    cases = [
        ("conv forward (32x10x32, k=5)",
         lambda: K.temporal_conv_forward_numpy(x, w, b),
         lambda: K.temporal_conv_forward_numba(x, w, b)),
        ("conv backward",
         lambda: K.temporal_conv_backward_numpy(x, w, g),
         lambda: K.temporal_conv_backward_numba(x, w, g)),
        ("region binning (1e5 points)",
         lambda: K.bin_regions_numpy(az, el, 8, 4),
         lambda: K._bin_regions_numba_entry(az, el, 8, 4)),
    ]
    print(f"{'kernel':<30} {'numpy ms':>10} {'numba ms':>10} {'max |diff|':>12}")
    for name, f_np, f_nb in cases:
        a, c = f_np(), f_nb()
        diff = max(float(np.max(np.abs(np.asarray(p) - np.asarray(q))))
                   for p, q in zip(a if isinstance(a, tuple) else (a,),
                                   c if isinstance(c, tuple) else (c,)))
        t_np = best_of(f_np, args.repeat) * 1e3
        t_nb = best_of(f_nb, args.repeat) * 1e3
        print(f"{name:<30} {t_np:>10.3f} {t_nb:>10.3f} {diff:>12.2e}")

    print("\ntraining epoch (358 utterances, desk config), seconds:")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, VADSPHERE_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env,
                             capture_output=True, text=True, check=True)
        print("  " + out.stdout.strip())


if __name__ == "__main__":
    main()
