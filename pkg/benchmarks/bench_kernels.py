"""Compare the compiled kernels against the pure-numpy fallback.

Run with:  python3 benchmarks/bench_kernels.py
The compiled backend is what `import akd` picks by default when the
extension built; AKD_PURE_PYTHON=1 forces the fallback. This script
imports both implementations directly so a single process can time the
pair side by side.
"""

import time

import numpy as np

from akd.kernels import kernels_py

try:
    from akd.kernels import _ckernels
except ImportError:
    _ckernels = None


SIZES = {
    "gelu_forward": [(4096, 256), (512, 2048)],
    "gelu_backward": [(4096, 256), (512, 2048)],
    "softmax_rows": [(8192, 65), (1024, 1024)],
    "layernorm_rows": [(8192, 64), (1024, 1024)],
}


def timeit(fn, *args, repeats=20):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def args_for(name, shape, dtype):
    rng = np.random.default_rng(0)
    x = rng.normal(0, 1, shape).astype(dtype)
    if name == "gelu_backward":
        return (x, rng.normal(0, 1, shape).astype(dtype))
    if name == "layernorm_rows":
        return (x, 1e-6)
    return (x,)


def main():
    if _ckernels is None:
        print("compiled extension not built; nothing to compare")
        return
    print(f"{'kernel':<16} {'shape':<14} {'dtype':<8} "
          f"{'numpy ms':>9} {'cython ms':>10} {'speedup':>8}")
    for name, shapes in SIZES.items():
        py_fn = getattr(kernels_py, name)
        cy_fn = getattr(_ckernels, name)
        for shape in shapes:
            for dtype in (np.float32, np.float64):
                args = args_for(name, shape, dtype)
                t_py = timeit(py_fn, *args)
                t_cy = timeit(cy_fn, *args)
                print(f"{name:<16} {str(shape):<14} {np.dtype(dtype).name:<8} "
                      f"{t_py * 1e3:>9.3f} {t_cy * 1e3:>10.3f} "
                      f"{t_py / t_cy:>7.2f}x")


if __name__ == "__main__":
    main()
