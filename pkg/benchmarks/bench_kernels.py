"""Benchmark the numba statevector kernels against their pure-numpy twins.

Run standalone:

    python3 benchmarks/bench_kernels.py [n_qubits] [repeats]

Each of the four kernels (1-qubit unitary, multi-controlled X, phase,
diagonal) is timed on the same random statevector with both backends.
Numba compilation happens on a throwaway call before timing starts, so the
table compares steady-state kernel cost only.
"""

import sys
import time

import numpy as np

from qlbm import _kernels


def _random_state(n_qubits, rng):
    amps = rng.standard_normal(2**n_qubits) + 1j * rng.standard_normal(2**n_qubits)
    return (amps / np.linalg.norm(amps)).astype(np.complex128)


def _bench(fn, args, state, repeats):
    best = float("inf")
    for _ in range(repeats):
        amps = state.copy()
        t0 = time.perf_counter()
        fn(amps, *args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(n_qubits=16, repeats=5):
    rng = np.random.default_rng(7)
    state = _random_state(n_qubits, rng)

    # Shared gate arguments: target = qubit 0, one 1-polarity control on the
    # top qubit, a 4-qubit diagonal over the middle of the register.
    c_mask = 1 << (n_qubits - 1)
    u = np.array([[0.6, 0.8], [0.8, -0.6]], dtype=np.complex128)
    qpos = np.arange(4, dtype=np.int64) + n_qubits // 2 - 2
    diag_phases = np.exp(1j * np.linspace(0.0, 1.5, 16)).astype(np.complex128)

    cases = [
        ("apply_1q", (1, c_mask, c_mask, u[0, 0], u[0, 1], u[1, 0], u[1, 1])),
        ("apply_mcx", (1, c_mask, c_mask)),
        ("apply_phase", (1, c_mask, c_mask, np.exp(0.3j))),
        ("apply_diag", (qpos, diag_phases, c_mask, c_mask)),
    ]
    numpy_fns = dict(zip(("apply_1q", "apply_mcx", "apply_phase", "apply_diag"), _kernels._NUMPY_KERNELS))
    numba_fns = dict(zip(("apply_1q", "apply_mcx", "apply_phase", "apply_diag"), _kernels._NUMBA_KERNELS))

    if not _kernels.HAS_NUMBA:
        print("numba is not installed; only the numpy path can be timed")

    print(f"statevector: {n_qubits} qubits ({2**n_qubits} amplitudes), best of {repeats}")
    print(f"{'kernel':<12} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for name, args in cases:
        t_np = _bench(numpy_fns[name], args, state, repeats)
        if _kernels.HAS_NUMBA:
            numba_fns[name](state.copy(), *args)  # compile outside the timer
            t_nb = _bench(numba_fns[name], args, state, repeats)
            print(f"{name:<12} {t_np * 1e3:>12.3f} {t_nb * 1e3:>12.3f} {t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<12} {t_np * 1e3:>12.3f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 16
    r = int(sys.argv[2]) if len(sys.argv) > 2 else 5
    main(n, r)
