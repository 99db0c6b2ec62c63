"""Exact Dirichlet-to-Neumann map of the exterior Navier problem on a circle.

For each angular mode ``k`` the radiating exterior fields are the
compressional and shear Hankel modes (see :mod:`elastoscat.modes`). The
2x2 matrix ``Lambda_k = T_k U_k^{-1}`` maps the polar-frame Fourier
coefficient of a displacement trace to that of its traction.

Time convention ``e^{-i omega t}``; ``H^(1)`` is outgoing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .materials import ExteriorConstants, wavenumbers
from .modes import polar_mode_matrices

SINGULAR_TOL = 1e-12


class DtnResonanceError(RuntimeError):
    """A modal trace matrix is numerically singular."""


def default_order(ext: ExteriorConstants, radius: float) -> int:
    _, ks = wavenumbers(ext)
    return max(40, math.ceil(1.5 * ks * radius) + 20)


@dataclass(frozen=True)
class DtnOperator:
    """Per-mode DtN blocks ``blocks[k + N]`` for ``k = -N..N``."""

    ext: ExteriorConstants
    radius: float
    order: int
    blocks: np.ndarray  # (2N+1, 2, 2) complex

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.order, self.order + 1)

    def block(self, k: int) -> np.ndarray:
        if abs(k) > self.order:
            return np.zeros((2, 2), dtype=complex)
        return self.blocks[k + self.order]

    def dump(self, path) -> None:
        """Write ``k`` and the four complex entries per line."""
        with open(path, "w") as fh:
            fh.write(f"# DtN radius={self.radius!r} order={self.order} "
                     f"lam={self.ext.lam!r} mu={self.ext.mu!r} rho={self.ext.rho!r} omega={self.ext.omega!r}\n")
            fh.write("# k re11 im11 re12 im12 re21 im21 re22 im22\n")
            for k, b in zip(self.modes, self.blocks):
                vals = " ".join(f"{v.real:.17g} {v.imag:.17g}" for v in b.ravel())
                fh.write(f"{k} {vals}\n")


def build_dtn(ext: ExteriorConstants, radius: float, order: int = None) -> DtnOperator:
    """Construct ``Lambda_k`` for ``|k| <= order`` on the circle of given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if order is None:
        order = default_order(ext, radius)
    if order < 0:
        raise ValueError("order must be non-negative")
    kp, ks = wavenumbers(ext)
    ks_arr = np.arange(-order, order + 1)
    U, T = polar_mode_matrices("H", kp, ks, ext.lam, ext.mu, ks_arr, radius)
    # column scaling removes the huge Hankel magnitudes at high order
    colscale = np.linalg.norm(U, axis=1, keepdims=True)
    Un = U / colscale
    Tn = T / colscale
    cond = np.linalg.cond(Un)
    if np.any(~np.isfinite(cond)) or np.any(cond > 1.0 / SINGULAR_TOL):
        bad = ks_arr[np.argmax(np.where(np.isfinite(cond), cond, np.inf))]
        raise DtnResonanceError(f"modal trace matrix singular at k={bad} (radius={radius})")
    blocks = np.linalg.solve(np.swapaxes(Un, -1, -2), np.swapaxes(Tn, -1, -2))
    blocks = np.swapaxes(blocks, -1, -2)  # T U^{-1}
    op = DtnOperator(ext=ext, radius=float(radius), order=int(order), blocks=blocks)
    _check_reflection_symmetry(op)
    return op


def _check_reflection_symmetry(op: DtnOperator, rtol: float = 1e-8) -> None:
    # theta -> -theta keeps radial components and flips angular ones
    S = np.diag([1.0, -1.0])
    for k in range(1, op.order + 1):
        a = op.block(k)
        b = S @ op.block(-k) @ S
        if np.max(np.abs(a - b)) > rtol * max(1.0, np.max(np.abs(a))):
            raise AssertionError(f"DtN reflection symmetry violated at k={k}")


def polar_frame(theta):
    """Unit vectors ``e_r``, ``e_theta`` at angles ``theta``; shapes ``(n, 2)``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([c, s], axis=-1), np.stack([-s, c], axis=-1)


def trapezoid_weights(theta) -> np.ndarray:
    """Periodic trapezoid weights for (not necessarily uniform) angles in [0, 2pi)."""
    th = np.asarray(theta, dtype=float)
    order = np.argsort(th)
    ts = th[order]
    nxt = np.roll(ts, -1)
    nxt[-1] += 2 * np.pi
    prv = np.roll(ts, 1)
    prv[0] -= 2 * np.pi
    w = np.empty_like(th)
    w[order] = 0.5 * (nxt - prv)
    return w


def fourier_coefficients(theta, values, order: int) -> np.ndarray:
    """``c_k = (1/2pi) sum_m w_m v(theta_m) e^{-ik theta_m}`` for ``|k| <= order``.

    ``values`` has shape ``(n, ...)``; result ``(2*order+1, ...)``.
    """
    theta = np.asarray(theta, dtype=float)
    values = np.asarray(values)
    w = trapezoid_weights(theta) / (2 * np.pi)
    k = np.arange(-order, order + 1)
    E = np.exp(-1j * np.outer(k, theta)) * w[None, :]
    return np.tensordot(E, values, axes=(1, 0))


def synthesize(theta, coeffs, order: int) -> np.ndarray:
    k = np.arange(-order, order + 1)
    E = np.exp(1j * np.outer(theta, k))
    return np.tensordot(E, coeffs, axes=(1, 0))


def to_polar(theta, values) -> np.ndarray:
    er, et = polar_frame(theta)
    return np.stack([np.sum(values * er, axis=-1), np.sum(values * et, axis=-1)], axis=-1)


def from_polar(theta, values) -> np.ndarray:
    er, et = polar_frame(theta)
    return values[:, 0:1] * er + values[:, 1:2] * et


def apply_dtn_coefficients(op: DtnOperator, coeffs: np.ndarray) -> np.ndarray:
    """Apply the blocks to polar coefficients ``coeffs`` of shape ``(2N+1, 2)``."""
    return np.einsum("kab,kb->ka", op.blocks, coeffs)


def apply_dtn(op: DtnOperator, theta, trace) -> np.ndarray:
    """Traction of the radiating extension of a sampled Cartesian trace.

    Parameters
    ----------
    theta : (n,) angles of the sample points on the circle
    trace : (n, 2) complex Cartesian displacement samples

    Returns
    -------
    (n, 2) complex Cartesian traction samples at the same angles.
    """
    theta = np.asarray(theta, dtype=float)
    trace = np.asarray(trace, dtype=complex)
    if trace.shape != (theta.size, 2):
        raise ValueError("trace must have shape (len(theta), 2)")
    c = fourier_coefficients(theta, to_polar(theta, trace), op.order)
    t = apply_dtn_coefficients(op, c)
    return from_polar(theta, synthesize(theta, t, op.order))


def radiation_flux(theta, trace, traction, radius: float) -> float:
    """``Im int_{|x|=radius} traction . conj(trace) ds`` by the periodic trapezoid rule."""
    w = trapezoid_weights(theta) * radius
    return float(np.imag(np.sum(w * np.sum(np.asarray(traction) * np.conj(trace), axis=-1))))


def sign_diagnostics(op: DtnOperator):
    """Per-mode extreme eigenvalues of the two Hermitian parts of ``Lambda_k``.

    Returns ``(k, min_flux, max_real)`` where ``min_flux`` is the smallest
    eigenvalue of ``(L - L^H)/(2i)`` (radiated power, should be >= 0) and
    ``max_real`` the largest eigenvalue of ``(L + L^H)/2`` (should be <= 0
    for the high-order blocks, where ``Lambda`` approaches its static part).
    """
    L = op.blocks
    LH = np.conj(np.swapaxes(L, -1, -2))
    flux = np.linalg.eigvalsh((L - LH) / 2j)
    real = np.linalg.eigvalsh((L + LH) / 2)
    return op.modes, flux[:, 0], real[:, -1]
