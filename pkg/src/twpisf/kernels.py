"""
Hot kernel: sums of complex exponentials on a uniform time grid,

    S_j = sum_k w_k exp(i omega_k j dt),   j = 0 .. n_times - 1.

Every ISF evaluated here reduces to this form: each stored kick-matrix entry
contributes one (frequency, weight) pair.  A compiled implementation
(``_spectral``, Cython) is used when it was built; otherwise a numpy version
that factors ``exp(i w (J + j) dt)`` into a block-coarse and a block-fine part
so the work becomes a matrix product.  Set ``TWPISF_PURE_PYTHON=1`` to force
the numpy path.
"""

import os

import numpy as np

try:
    from ._spectral import spectral_sum as _compiled_sum
except ImportError:  # extension not built
    _compiled_sum = None

HAVE_COMPILED = _compiled_sum is not None
DEFAULT_BACKEND = ("compiled" if HAVE_COMPILED and not os.environ.get("TWPISF_PURE_PYTHON")
                   else "numpy")


def spectral_sum_numpy(omega, weight, dt, n_times, block=128, chunk=8192):
    omega = np.asarray(omega, dtype=float)
    weight = np.asarray(weight, dtype=complex)
    block = max(1, min(block, n_times))
    n_blocks = -(-n_times // block)
    fine = np.arange(block) * dt
    coarse = np.arange(n_blocks) * (block * dt)
    out = np.zeros((n_blocks, block), dtype=complex)
    for start in range(0, omega.size, chunk):
        o = omega[start:start + chunk]
        inner = np.exp(1j * np.outer(o, fine))
        outer = np.exp(1j * np.outer(coarse, o)) * weight[start:start + chunk]
        out += outer @ inner
    return out.ravel()[:n_times]


def spectral_sum_compiled(omega, weight, dt, n_times):
    if _compiled_sum is None:
        raise RuntimeError("compiled kernel not available; reinstall with a C compiler and Cython")
    omega = np.ascontiguousarray(omega, dtype=float)
    weight = np.asarray(weight, dtype=complex)
    return _compiled_sum(omega, np.ascontiguousarray(weight.real), np.ascontiguousarray(weight.imag),
                         float(dt), int(n_times))


def spectral_sum(omega, weight, dt: float, n_times: int, backend=None) -> np.ndarray:
    """Evaluate S_j for j < n_times; ``backend`` is "compiled", "numpy" or None (default)."""
    backend = backend or DEFAULT_BACKEND
    if n_times < 1:
        return np.zeros(0, dtype=complex)
    if len(omega) == 0:
        return np.zeros(n_times, dtype=complex)
    if backend == "compiled":
        return spectral_sum_compiled(omega, weight, dt, n_times)
    if backend == "numpy":
        return spectral_sum_numpy(omega, weight, dt, n_times)
    raise ValueError(f"unknown backend {backend!r}")
