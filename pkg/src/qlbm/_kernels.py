"""Hot statevector kernels: numba-compiled with a pure-numpy fallback.

Gate application over the full amplitude array is where simulation time goes,
so these four kernels (1-qubit unitary, multi-controlled X, diagonal, phase)
carry ``numba.njit`` bodies. Set ``QLBM_KERNELS=numpy`` in the environment to
select the pure-numpy twins instead (used on machines without a working numba,
and by ``benchmarks/bench_kernels.py`` to compare both paths).

All kernels mutate ``amps`` (complex128, length 2**n) in place. Control
conditions are encoded as a bit mask plus expected value so a single integer
compare handles any mix of 0/1-polarity controls.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# numba bodies (also plain-python-executable when numba is absent)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _apply_1q_nb(amps, t_mask, c_mask, c_val, u00, u01, u10, u11):
    n = amps.shape[0]
    for i in range(n):
        if (i & t_mask) == 0 and (i & c_mask) == c_val:
            j = i | t_mask
            a0 = amps[i]
            a1 = amps[j]
            amps[i] = u00 * a0 + u01 * a1
            amps[j] = u10 * a0 + u11 * a1


@njit(cache=True)
def _apply_mcx_nb(amps, t_mask, c_mask, c_val):
    n = amps.shape[0]
    for i in range(n):
        if (i & t_mask) == 0 and (i & c_mask) == c_val:
            j = i | t_mask
            tmp = amps[i]
            amps[i] = amps[j]
            amps[j] = tmp


@njit(cache=True)
def _apply_phase_nb(amps, t_mask, c_mask, c_val, phase):
    n = amps.shape[0]
    for i in range(n):
        if (i & t_mask) != 0 and (i & c_mask) == c_val:
            amps[i] = amps[i] * phase


@njit(cache=True)
def _apply_diag_nb(amps, qpos, phases, c_mask, c_val):
    n = amps.shape[0]
    m = qpos.shape[0]
    for i in range(n):
        if (i & c_mask) == c_val:
            k = 0
            for b in range(m):
                if i & (1 << qpos[b]):
                    k |= 1 << b
            amps[i] = amps[i] * phases[k]


# ---------------------------------------------------------------------------
# pure-numpy twins
# ---------------------------------------------------------------------------


def _apply_1q_np(amps, t_mask, c_mask, c_val, u00, u01, u10, u11):
    idx = np.arange(amps.shape[0])
    i0 = idx[((idx & t_mask) == 0) & ((idx & c_mask) == c_val)]
    i1 = i0 | t_mask
    a0 = amps[i0].copy()
    a1 = amps[i1]
    amps[i0] = u00 * a0 + u01 * a1
    amps[i1] = u10 * a0 + u11 * a1


def _apply_mcx_np(amps, t_mask, c_mask, c_val):
    idx = np.arange(amps.shape[0])
    i0 = idx[((idx & t_mask) == 0) & ((idx & c_mask) == c_val)]
    i1 = i0 | t_mask
    a0 = amps[i0].copy()
    amps[i0] = amps[i1]
    amps[i1] = a0


def _apply_phase_np(amps, t_mask, c_mask, c_val, phase):
    idx = np.arange(amps.shape[0])
    sel = idx[((idx & t_mask) != 0) & ((idx & c_mask) == c_val)]
    amps[sel] *= phase


def _apply_diag_np(amps, qpos, phases, c_mask, c_val):
    idx = np.arange(amps.shape[0])
    k = np.zeros(amps.shape[0], dtype=np.int64)
    for b, q in enumerate(qpos):
        k |= ((idx >> int(q)) & 1) << b
    sel = (idx & c_mask) == c_val
    amps[sel] *= phases[k[sel]]


_NUMPY_KERNELS = (_apply_1q_np, _apply_mcx_np, _apply_phase_np, _apply_diag_np)
_NUMBA_KERNELS = (_apply_1q_nb, _apply_mcx_nb, _apply_phase_nb, _apply_diag_nb)


def active_backend() -> str:
    """Name of the kernel path selected at import time ('numba' or 'numpy')."""
    return _BACKEND


_BACKEND = "numpy"
if HAS_NUMBA and os.environ.get("QLBM_KERNELS", "numba").lower() != "numpy":
    _BACKEND = "numba"
    apply_1q, apply_mcx, apply_phase, apply_diag = _NUMBA_KERNELS
else:
    apply_1q, apply_mcx, apply_phase, apply_diag = _NUMPY_KERNELS


def warm_up():
    """Trigger JIT compilation on tiny inputs so timed runs measure the algorithm."""
    amps = np.zeros(4, dtype=np.complex128)
    amps[0] = 1.0
    apply_1q(amps, 1, 0, 0, 0.6 + 0j, 0.8 + 0j, 0.8 + 0j, -0.6 + 0j)
    apply_mcx(amps, 2, 1, 1)
    apply_phase(amps, 1, 0, 0, 1j)
    apply_diag(amps, np.array([0, 1], dtype=np.int64), np.exp(1j * np.arange(4)), 0, 0)
