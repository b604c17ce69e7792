"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``MOARM_NUMBA`` environment
variable: ``0``/``off`` forces the numpy path, ``1``/``require`` insists on
numba, anything else ("auto") uses numba when importable.  Both paths satisfy
the same determinism contract: a given row fed through ``affine_rows`` yields
bitwise-identical output no matter which other rows share the batch, because
each output element is accumulated in a fixed order.  This is what lets the
bucketed sampler regroup trajectories freely without changing results.

``benchmarks/bench_kernels.py`` compares the two paths on representative
shapes.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "BACKEND",
    "affine_rows",
    "silu_fwd",
    "silu_bwd",
    "sigmoid",
    "gauss_wsum",
    "gauss_wsum_bwd",
    "bce_wsum",
    "bce_wsum_bwd",
    "adamw_update",
    "joint_counts",
]

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# pure-numpy implementations


def _affine_rows_np(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # One gemv per row: a row's result never depends on batch composition.
    out = np.empty((x.shape[0], w.shape[1]), dtype=x.dtype)
    for i in range(x.shape[0]):
        out[i] = x[i] @ w
        out[i] += b
    return out


def _silu_fwd_np(z: np.ndarray) -> np.ndarray:
    return z / (1.0 + np.exp(-z))


def _silu_bwd_np(z: np.ndarray, g: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-z))
    return g * (s * (1.0 + z * (1.0 - s)))


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _gauss_wsum_np(mu, logs, x, w) -> float:
    inv = np.exp(-logs)
    r = (x - mu) * inv
    terms = -0.5 * r * r - logs - 0.5 * _LOG_2PI
    return float(np.sum(w * terms))


def _gauss_wsum_bwd_np(mu, logs, x, w, gout: float):
    inv2 = np.exp(-2.0 * logs)
    diff = x - mu
    dmu = gout * w * diff * inv2
    dlogs = gout * w * (diff * diff * inv2 - 1.0)
    dx = -dmu
    return dmu, dlogs, dx


def _bce_wsum_np(z, y, w) -> float:
    # sum w * [y*log(sigmoid(z)) + (1-y)*log(1-sigmoid(z))], stable form
    sp = np.logaddexp(0.0, -z)
    return float(np.sum(w * ((y - 1.0) * z - sp)))


def _bce_wsum_bwd_np(z, y, w, gout: float):
    return gout * w * (y - 1.0 / (1.0 + np.exp(-z)))


def _adamw_update_np(p, g, m, v, t: int, lr, b1, b2, eps, wd) -> None:
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    p -= lr * (mhat / (np.sqrt(vhat) + eps) + wd * p)


def _joint_counts_np(iu, iv, nu: int, nv: int) -> np.ndarray:
    flat = np.bincount(iu.astype(np.int64) * nv + iv, minlength=nu * nv)
    return flat.reshape(nu, nv)


# ---------------------------------------------------------------------------
# backend selection

def _pick_backend() -> str:
    flag = os.environ.get("MOARM_NUMBA", "auto").strip().lower()
    if flag in ("0", "off", "false", "no", "numpy"):
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if flag in ("1", "on", "true", "yes", "require", "numba"):
            raise ImportError("MOARM_NUMBA requires numba but it is not installed")
        return "numpy"
    return "numba"


BACKEND = _pick_backend()

if BACKEND == "numba":
    from numba import njit

    # Jitted bodies work on 1-D views; flattening happens on the numpy side
    # where ravel() view semantics are guaranteed.  Kernels are serial: on
    # small per-call workloads the threading runtime's wake-up latency costs
    # far more than the loop itself.

    def _flat(a: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(a).ravel()

    @njit(cache=True)
    def _affine_rows_jit(x, w, b, out):
        n_rows, n_in = x.shape
        n_out = w.shape[1]
        for i in range(n_rows):
            for j in range(n_out):
                out[i, j] = b[j]
            for k in range(n_in):
                xv = x[i, k]
                for j in range(n_out):
                    out[i, j] += xv * w[k, j]

    def _affine_rows_nb(x, w, b):
        out = np.empty((x.shape[0], w.shape[1]), dtype=np.float64)
        _affine_rows_jit(
            np.ascontiguousarray(x), np.ascontiguousarray(w), np.ascontiguousarray(b), out
        )
        return out

    @njit(cache=True)
    def _silu_fwd_jit(zf, of):
        for i in range(zf.size):
            of[i] = zf[i] / (1.0 + math.exp(-zf[i]))

    def _silu_fwd_nb(z):
        out = np.empty(z.shape, dtype=np.float64)
        _silu_fwd_jit(_flat(z), out.ravel())
        return out

    @njit(cache=True)
    def _silu_bwd_jit(zf, gf, of):
        for i in range(zf.size):
            s = 1.0 / (1.0 + math.exp(-zf[i]))
            of[i] = gf[i] * (s * (1.0 + zf[i] * (1.0 - s)))

    def _silu_bwd_nb(z, g):
        out = np.empty(z.shape, dtype=np.float64)
        _silu_bwd_jit(_flat(z), _flat(g), out.ravel())
        return out

    @njit(cache=True)
    def _sigmoid_jit(zf, of):
        for i in range(zf.size):
            of[i] = 1.0 / (1.0 + math.exp(-zf[i]))

    def _sigmoid_nb(z):
        out = np.empty(z.shape, dtype=np.float64)
        _sigmoid_jit(_flat(z), out.ravel())
        return out

    @njit(cache=True)
    def _gauss_wsum_jit(muf, lsf, xf, wf):
        acc = 0.0
        for i in range(muf.size):
            inv = math.exp(-lsf[i])
            r = (xf[i] - muf[i]) * inv
            acc += wf[i] * (-0.5 * r * r - lsf[i] - 0.5 * _LOG_2PI)
        return acc

    def _gauss_wsum_nb(mu, logs, x, w):
        return float(_gauss_wsum_jit(_flat(mu), _flat(logs), _flat(x), _flat(w)))

    @njit(cache=True)
    def _gauss_wsum_bwd_jit(muf, lsf, xf, wf, gout, dmuf, dlsf, dxf):
        for i in range(muf.size):
            inv2 = math.exp(-2.0 * lsf[i])
            diff = xf[i] - muf[i]
            dmuf[i] = gout * wf[i] * diff * inv2
            dlsf[i] = gout * wf[i] * (diff * diff * inv2 - 1.0)
            dxf[i] = -dmuf[i]

    def _gauss_wsum_bwd_nb(mu, logs, x, w, gout):
        dmu = np.empty(mu.shape, dtype=np.float64)
        dlogs = np.empty(mu.shape, dtype=np.float64)
        dx = np.empty(mu.shape, dtype=np.float64)
        _gauss_wsum_bwd_jit(
            _flat(mu), _flat(logs), _flat(x), _flat(w), float(gout),
            dmu.ravel(), dlogs.ravel(), dx.ravel(),
        )
        return dmu, dlogs, dx

    @njit(cache=True)
    def _bce_wsum_jit(zf, yf, wf):
        acc = 0.0
        for i in range(zf.size):
            sp = math.log1p(math.exp(-abs(zf[i]))) + max(-zf[i], 0.0)
            acc += wf[i] * ((yf[i] - 1.0) * zf[i] - sp)
        return acc

    def _bce_wsum_nb(z, y, w):
        return float(_bce_wsum_jit(_flat(z), _flat(y), _flat(w)))

    @njit(cache=True)
    def _bce_wsum_bwd_jit(zf, yf, wf, gout, of):
        for i in range(zf.size):
            of[i] = gout * wf[i] * (yf[i] - 1.0 / (1.0 + math.exp(-zf[i])))

    def _bce_wsum_bwd_nb(z, y, w, gout):
        out = np.empty(z.shape, dtype=np.float64)
        _bce_wsum_bwd_jit(_flat(z), _flat(y), _flat(w), float(gout), out.ravel())
        return out

    @njit(cache=True)
    def _adamw_update_jit(pf, gf, mf, vf, t, lr, b1, b2, eps, wd):
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for i in range(pf.size):
            mf[i] = b1 * mf[i] + (1.0 - b1) * gf[i]
            vf[i] = b2 * vf[i] + (1.0 - b2) * gf[i] * gf[i]
            step = (mf[i] / c1) / (math.sqrt(vf[i] / c2) + eps)
            pf[i] -= lr * (step + wd * pf[i])

    def _adamw_update_nb(p, g, m, v, t, lr, b1, b2, eps, wd):
        _adamw_update_jit(
            p.ravel(), _flat(g), m.ravel(), v.ravel(), t, lr, b1, b2, eps, wd
        )

    @njit(cache=True)
    def _joint_counts_nb(iu, iv, nu, nv):
        counts = np.zeros((nu, nv), dtype=np.int64)
        for i in range(iu.size):
            counts[iu[i], iv[i]] += 1
        return counts

    affine_rows = _affine_rows_nb
    silu_fwd = _silu_fwd_nb
    silu_bwd = _silu_bwd_nb
    sigmoid = _sigmoid_nb
    gauss_wsum = _gauss_wsum_nb
    gauss_wsum_bwd = _gauss_wsum_bwd_nb
    bce_wsum = _bce_wsum_nb
    bce_wsum_bwd = _bce_wsum_bwd_nb
    adamw_update = _adamw_update_nb
    joint_counts = _joint_counts_nb
else:
    affine_rows = _affine_rows_np
    silu_fwd = _silu_fwd_np
    silu_bwd = _silu_bwd_np
    sigmoid = _sigmoid_np
    gauss_wsum = _gauss_wsum_np
    gauss_wsum_bwd = _gauss_wsum_bwd_np
    bce_wsum = _bce_wsum_np
    bce_wsum_bwd = _bce_wsum_bwd_np
    adamw_update = _adamw_update_np
    joint_counts = _joint_counts_np

# numpy reference implementations stay importable for the benchmark and for
# cross-checking the numba path in tests.
numpy_impl = {
    "affine_rows": _affine_rows_np,
    "silu_fwd": _silu_fwd_np,
    "silu_bwd": _silu_bwd_np,
    "sigmoid": _sigmoid_np,
    "gauss_wsum": _gauss_wsum_np,
    "gauss_wsum_bwd": _gauss_wsum_bwd_np,
    "bce_wsum": _bce_wsum_np,
    "bce_wsum_bwd": _bce_wsum_bwd_np,
    "adamw_update": _adamw_update_np,
    "joint_counts": _joint_counts_np,
}
