"""Cylinder functions for integer orders.

Hankel functions of the first kind are generated for all orders at once by
upward recurrence from ``H_0`` and ``H_1``. The recurrence is stable for
``H^(1)`` because the ``Y`` part dominates and grows with the order. Bessel
``J`` of (possibly complex) argument goes through scipy's exponentially
scaled routine, since upward recurrence is unstable for ``J``.
"""

from __future__ import annotations

import numpy as np
from scipy import special as sps


def hankel1_sequence(nmax: int, z) -> np.ndarray:
    """``H_k^(1)(z)`` for ``k = 0..nmax``; result shape ``(nmax + 1,) + z.shape``."""
    z = np.asarray(z)
    out = np.empty((nmax + 1,) + z.shape, dtype=complex)
    out[0] = sps.hankel1(0, z)
    if nmax >= 1:
        out[1] = sps.hankel1(1, z)
    for k in range(1, nmax):
        out[k + 1] = (2.0 * k / z) * out[k] - out[k - 1]
    return out


def hankel1_orders(orders, z) -> np.ndarray:
    """``H_k^(1)(z)`` for signed integer ``orders``; shape ``(len(orders),) + z.shape``.

    Negative orders use ``H_{-k} = (-1)^k H_k``.
    """
    orders = np.asarray(orders, dtype=int)
    seq = hankel1_sequence(int(np.abs(orders).max(initial=0)) + 1, z)
    vals = seq[np.abs(orders)]
    sign = np.where((orders < 0) & (orders % 2 == 1), -1.0, 1.0)
    return vals * sign.reshape((-1,) + (1,) * np.ndim(z))


def cyl_and_derivatives(kind: str, orders, z):
    """Values, first and second derivatives of ``Z_k(z)`` for ``Z`` in {J, H}.

    Returns three arrays of shape ``(len(orders),) + z.shape``. Second
    derivatives come from Bessel's equation
    ``Z'' = -Z'/z - (1 - k^2/z^2) Z``.
    """
    orders = np.asarray(orders, dtype=int)
    z = np.asarray(z)
    kk = orders.reshape((-1,) + (1,) * z.ndim)
    if kind == "H":
        ext = np.concatenate([orders - 1, orders + 1])
        vals = hankel1_orders(np.concatenate([orders, ext]), z)
        n = len(orders)
        Z, Zm, Zp = vals[:n], vals[n:2 * n], vals[2 * n:]
    elif kind == "J":
        Z = sps.jv(kk, z)
        Zm = sps.jv(kk - 1, z)
        Zp = sps.jv(kk + 1, z)
    else:
        raise ValueError(f"unknown cylinder function kind {kind!r}")
    dZ = 0.5 * (Zm - Zp)
    d2Z = -dZ / z - (1.0 - kk**2 / z**2) * Z
    return Z, dZ, d2Z


def scaled_bessel_j(orders, z):
    """``J_k(z) exp(-|Im z|)`` with first and second derivatives (same scaling)."""
    orders = np.asarray(orders, dtype=int)
    z = np.asarray(z, dtype=complex)
    kk = orders.reshape((-1,) + (1,) * z.ndim)
    Z = sps.jve(kk, z)
    dZ = 0.5 * (sps.jve(kk - 1, z) - sps.jve(kk + 1, z))
    d2Z = -dZ / z - (1.0 - kk**2 / z**2) * Z
    return Z, dZ, d2Z
