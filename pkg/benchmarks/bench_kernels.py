"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--qubits 6 10] [--batch 1 25 250]

Also times one QVC forward+backward pass (20 layers, batch 25) per backend.
"""

import argparse
import importlib
import timeit

import numpy as np

from qrobust import _kernels_py

try:
    _compiled = importlib.import_module("qrobust._kernels")
except ImportError:
    _compiled = None


def _state(rng, batch, n):
    a = rng.standard_normal((batch, 1 << n)) + 1j * rng.standard_normal((batch, 1 << n))
    return np.ascontiguousarray(a / np.linalg.norm(a, axis=1, keepdims=True))


def _time(fn, repeat=5):
    number, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def kernel_cases(mod, psi, n):
    u = np.array([[0.6, -0.8j], [-0.8j, 0.6]], dtype=np.complex128)
    lam = psi.copy()
    return {
        "apply_1q": lambda: mod.apply_1q(psi, u, n // 2),
        "apply_cz": lambda: mod.apply_cz(psi, 0, n - 1),
        "z_expectations": lambda: mod.z_expectations(psi, n),
        "grad_1q": lambda: mod.grad_1q(lam, psi, u, n // 2),
    }


def qvc_step(mod, batch):
    from qrobust import kernels
    from qrobust.qvc import QvcModel

    names = ("apply_1q", "apply_x", "apply_cz", "z_expectations", "grad_1q")
    saved = {k: getattr(kernels, k) for k in names}
    model = QvcModel.init(6, 20, 4, seed=0, temperature=0.5)
    X = np.random.default_rng(0).uniform(0.05, 1, (batch, 64))
    y = np.arange(batch) % 4
    # callers look kernels up on the module at call time, so swapping attributes swaps the backend
    for k in names:
        setattr(kernels, k, getattr(mod, k))
    try:
        return _time(lambda: model.loss_and_grads(X, y), repeat=3)
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", type=int, nargs="+", default=[6, 10, 14])
    ap.add_argument("--batch", type=int, nargs="+", default=[1, 25, 250])
    args = ap.parse_args()
    if _compiled is None:
        print("compiled extension not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'qubits':>7}{'batch':>7}{'numpy us':>12}{'cython us':>12}{'speedup':>9}")
    for n in args.qubits:
        for b in args.batch:
            if b << n > 1 << 22:
                continue
            psi = _state(rng, b, n)
            py = kernel_cases(_kernels_py, psi, n)
            cy = kernel_cases(_compiled, psi, n) if _compiled else {}
            for name, fn in py.items():
                t_py = _time(fn) * 1e6
                t_cy = _time(cy[name]) * 1e6 if cy else float("nan")
                print(f"{name:<16}{n:>7}{b:>7}{t_py:>12.1f}{t_cy:>12.1f}{t_py / t_cy:>9.2f}")
    t_py = qvc_step(_kernels_py, 25)
    line = f"qvc 6q/20L batch 25 loss+grad: numpy {t_py * 1e3:.1f} ms"
    if _compiled:
        t_cy = qvc_step(_compiled, 25)
        line += f", cython {t_cy * 1e3:.1f} ms ({t_py / t_cy:.2f}x)"
    print(line)


if __name__ == "__main__":
    main()
