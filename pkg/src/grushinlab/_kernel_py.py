"""Pure numpy implementation of the batch kernel evaluators.

Mirrors ``_kernel_core.pyx`` function for function; used when the compiled
extension is unavailable or ``GRUSHINLAB_PURE_PYTHON`` is set.
"""
import numpy as np

_LOG_2PI = np.log(2.0 * np.pi)
_CHUNK = 4096


def _hyperbolic_parts(z):
    """Return ``log(z/sinh z)``, ``z coth z`` and ``z csch z`` without overflow."""
    z = np.asarray(z, dtype=float)
    pos = z > 0
    zs = np.where(pos, z, 1.0)
    em = -np.expm1(-2.0 * zs)                     # 1 - exp(-2z), accurate near 0
    log_ratio = np.where(pos, -zs - np.log(em / (2.0 * zs)), 0.0)
    zcoth = np.where(pos, zs * (2.0 - em) / em, 1.0)
    zcsch = np.where(pos, 2.0 * zs * np.exp(-zs) / em, 1.0)
    return log_ratio, zcoth, zcsch


def log_mehler(lam, a, b, t, n):
    """Log of the Mehler kernel from ``a = |x|^2+|x0|^2`` and ``b = x.x0``."""
    lam, a, b, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, a, b, t)))
    log_ratio, zcoth, zcsch = _hyperbolic_parts(lam * t)
    return (0.5 * n * (log_ratio - _LOG_2PI - np.log(t))
            - (a * zcoth - 2.0 * b * zcsch) / (2.0 * t))


def grushin_sum(a, b, y, t, n, nodes, weights):
    """``(1/pi) * sum_q w_q cos(xi_q y) M_{xi_q}`` for each query."""
    a = np.ascontiguousarray(a, dtype=float).ravel()
    b = np.ascontiguousarray(b, dtype=float).ravel()
    y = np.ascontiguousarray(y, dtype=float).ravel()
    t = np.ascontiguousarray(t, dtype=float).ravel()
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    out = np.empty(a.size)
    for s in range(0, a.size, _CHUNK):
        sl = slice(s, s + _CHUNK)
        logm = log_mehler(nodes[None, :], a[sl, None], b[sl, None], t[sl, None], n)
        vals = np.exp(logm) * np.cos(nodes[None, :] * y[sl, None])
        out[sl] = vals @ weights
    return out / np.pi
