"""Compare the numba and numpy convolution kernels, alone and inside a training step.

    python3 benchmarks/bench_kernels.py [--repeat N]

Kernel timings call both backends directly. The training-step timing runs in
a child process per backend because the backend is fixed at import time by
PDPGAZE_DISABLE_NUMBA.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from pdpgaze import _kernels as K

STEP_SNIPPET = """
import time
import numpy as np
from pdpgaze import _kernels
from pdpgaze.data import generate_dataset
from pdpgaze.trainer import TrainConfig, train
data = generate_dataset(16, 0)
cfg = TrainConfig(epochs=1, batch_size=16)
train(cfg, data)  # warm-up (numba compilation, allocator)
best = float("inf")
for _ in range({repeat}):
    t0 = time.perf_counter()
    train(cfg, data)
    best = min(best, time.perf_counter() - t0)
print(_kernels.backend(), best)
"""


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    # first scene-backbone layer and the heatmap head's widest deconv at desk scale, batch 16
    cases = [("backbone conv0", (16, 5, 64, 64), 3, 2, 1), ("backbone conv2", (16, 32, 16, 16), 3, 2, 1),
             ("head 3x3 conv", (16, 32, 4, 4), 3, 1, 1)]
    print(f"{'kernel':<28}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, shape, k, stride, pad in cases:
        x = rng.normal(size=shape)
        cols = K.im2col_numpy(x, k, stride, pad)
        for op, f_np, f_nb in (
            ("im2col", lambda: K.im2col_numpy(x, k, stride, pad), lambda: K.im2col_numba(x, k, stride, pad)),
            ("col2im", lambda: K.col2im_numpy(cols, shape, k, stride, pad),
             lambda: K.col2im_numba(cols, shape, k, stride, pad)),
        ):
            t_np, t_nb = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
            print(f"{op + ' ' + name:<28}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.2f}x")

    print("\nfull training step (desk model, batch 16)")
    for flag in ("0", "1"):
        env = dict(os.environ, PDPGAZE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(repeat=args.repeat)], env=env,
                             capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<6} {float(secs) * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
