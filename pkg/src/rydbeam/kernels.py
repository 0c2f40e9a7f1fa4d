"""Backend selection for the Doppler-averaged coherence kernel.

The compiled extension ``rydbeam._ckernels`` is used when importable;
otherwise the NumPy implementation in ``rydbeam._pykernels`` is used.
:func:`set_backend` switches explicitly (tests and benchmarks use it to
run both paths).
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from rydbeam import _pykernels

try:
    from rydbeam import _ckernels
except ImportError:  # pragma: no cover - depends on build environment
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_state = {"name": "cython" if _ckernels is not None else "python", "threads": 1}


def available_backends():
    return sorted(_BACKENDS)


def get_backend():
    return _state["name"]


def set_backend(name):
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _state["name"] = name


def set_threads(n):
    """Number of worker threads used to split large batches (cython backend)."""
    _state["threads"] = max(1, int(n))


def rho21_doppler(omega_p, omega_c, omega_rf, delta_p, delta_c, delta_l,
                  gammas, kp, kc, u, nodes, weights, pole_cut):
    """Dispatch to the active backend; arrays are broadcast to a common 1-D shape."""
    arrays = np.broadcast_arrays(
        np.asarray(omega_p, float), np.asarray(omega_c, float),
        np.asarray(omega_rf, complex), np.asarray(delta_p, float),
        np.asarray(delta_c, float), np.asarray(delta_l, float))
    shape = arrays[0].shape
    flat = [np.ascontiguousarray(a.ravel()) for a in arrays]
    impl = _BACKENDS[_state["name"]]
    threads = _state["threads"]
    gammas = tuple(float(g) for g in gammas)
    n = flat[0].size

    def run(sl):
        return impl.rho21_doppler(*(a[sl] for a in flat), gammas, float(kp), float(kc),
                                  float(u), nodes, weights, float(pole_cut))

    if threads > 1 and impl is not _pykernels and n >= 4 * threads:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, slices))
        rho = np.concatenate([p[0] for p in parts])
        status = np.concatenate([p[1] for p in parts])
    else:
        rho, status = run(slice(0, n))
    return rho.reshape(shape), status.reshape(shape)


def chebval_panels(x, idx, coef):
    """Piecewise Chebyshev series through the active backend.

    ``x`` holds panel-local coordinates in [-1, 1] and ``idx`` the panel row
    of ``coef`` for each point; both are flat arrays of equal length.
    """
    impl = _BACKENDS[_state["name"]]
    x = np.ascontiguousarray(x, dtype=float)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    threads = _state["threads"]
    if threads > 1 and impl is not _pykernels and x.size >= 4096:
        bounds = np.linspace(0, x.size, threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda ab: impl.chebval_panels(
                x[ab[0]:ab[1]], idx[ab[0]:ab[1]], coef), zip(bounds[:-1], bounds[1:])))
        return np.concatenate(parts)
    return impl.chebval_panels(x, idx, coef)
