"""Compare the compiled kernels against the pure-numpy fallback.

Run: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from stemflow._kernels import _ops_py, backend

try:
    from stemflow._kernels import _ops_c
except ImportError:
    _ops_c = None


def bench(fn, *args, repeat: int = 50) -> float:
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat * 1e3


def main() -> None:
    rng = np.random.default_rng(0)
    shapes = [(32, 96, 128), (64, 96, 128)]
    print(f"active backend: {backend()}")
    if _ops_c is None:
        print("compiled kernels unavailable; benchmarking the fallback only")
    header = f"{'op':<16}{'shape':<16}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for b, t, h in shapes:
        x = rng.standard_normal((b, t, h)).astype(np.float32)
        k = rng.standard_normal((5, h)).astype(np.float32)
        du = rng.standard_normal((b, t, h)).astype(np.float32)
        cases = [
            ("dwconv_forward", lambda m: m.dwconv_forward(x, k)),
            ("dwconv_backward", lambda m: m.dwconv_backward(x, k, du)),
            ("silu", lambda m: m.silu(x)),
            ("silu_grad", lambda m: m.silu_grad(x)),
        ]
        for name, call in cases:
            t_py = bench(call, _ops_py)
            if _ops_c is not None:
                t_c = bench(call, _ops_c)
                print(f"{name:<16}{f'{b}x{t}x{h}':<16}{t_py:>10.3f}{t_c:>11.3f}{t_py / t_c:>8.1f}x")
            else:
                print(f"{name:<16}{f'{b}x{t}x{h}':<16}{t_py:>10.3f}{'-':>11}{'-':>9}")


if __name__ == "__main__":
    main()
