"""Separable Navier solutions in polar coordinates.

For an isotropic medium with wavenumbers ``kp``, ``ks`` the fields

    P_k = grad( Z_k(kp r) e^{ik theta} )          (compressional)
    S_k = curl( Z_k(ks r) e^{ik theta} )          (shear), curl psi = (psi_y, -psi_x)

solve ``mu Lap u + (lam + mu) grad div u + omega^2 rho u = 0`` for any
cylinder function ``Z``. Everything here is evaluated in Cartesian
components from the potential's gradient and Hessian, so displacement
gradients and tractions are exact (no finite differences).
"""

from __future__ import annotations

import numpy as np

from .special import cyl_and_derivatives, scaled_bessel_j

_TINY_RADIUS = 1e-12


def potential_derivatives(kind, kappa, orders, x, scale_radius=None):
    """Gradient and Hessian of ``Z_k(kappa r) e^{ik theta}`` at points ``x``.

    Parameters
    ----------
    kind : {"H", "J"}
    kappa : complex
    orders : int array, shape (nk,)
    x : array, shape (npts, 2)
    scale_radius : float, optional
        Only for ``kind == "J"``: the potential is multiplied by
        ``exp(-|Im kappa| scale_radius)`` so strongly lossy interiors do not
        overflow. Values at ``r <= scale_radius`` stay bounded.

    Returns
    -------
    grad : (nk, npts, 2) complex
    hess : (nk, npts, 2, 2) complex
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    orders = np.asarray(orders, dtype=int)
    r = np.hypot(x[:, 0], x[:, 1])
    r = np.maximum(r, _TINY_RADIUS)
    th = np.arctan2(x[:, 1], x[:, 0])
    z = kappa * r
    if kind == "J" and scale_radius is not None:
        Z, dZ, d2Z = scaled_bessel_j(orders, z)
        # jve carries exp(-|Im z|); convert to the fixed exp(-|Im kappa| R) scaling
        fac = np.exp(abs(np.imag(kappa)) * (r - scale_radius))
        Z, dZ, d2Z = Z * fac, dZ * fac, d2Z * fac
    else:
        Z, dZ, d2Z = cyl_and_derivatives(kind, orders, z)
    k = orders[:, None]
    e = np.exp(1j * k * th[None, :])
    f_r = kappa * dZ * e
    f_t = 1j * k * Z * e
    f_rr = kappa**2 * d2Z * e
    f_rt = 1j * k * kappa * dZ * e
    f_tt = -(k**2) * Z * e
    c, s = np.cos(th)[None, :], np.sin(th)[None, :]
    grad = np.empty(Z.shape + (2,), dtype=complex)
    grad[..., 0] = c * f_r - s * f_t / r
    grad[..., 1] = s * f_r + c * f_t / r
    h_rr = f_rr
    h_rt = f_rt / r - f_t / r**2
    h_tt = f_r / r + f_tt / r**2
    hess = np.empty(Z.shape + (2, 2), dtype=complex)
    hess[..., 0, 0] = c * c * h_rr - 2 * c * s * h_rt + s * s * h_tt
    hess[..., 1, 1] = s * s * h_rr + 2 * c * s * h_rt + c * c * h_tt
    hess[..., 0, 1] = c * s * (h_rr - h_tt) + (c * c - s * s) * h_rt
    hess[..., 1, 0] = hess[..., 0, 1]
    return grad, hess


def compressional_fields(grad, hess):
    """Displacement and displacement gradient ``du_i/dx_j`` of ``grad(phi)``."""
    return grad.copy(), hess.copy()


def shear_fields(grad, hess):
    """Displacement and gradient of ``curl(psi) = (psi_y, -psi_x)``."""
    u = np.empty_like(grad)
    u[..., 0] = grad[..., 1]
    u[..., 1] = -grad[..., 0]
    g = np.empty_like(hess)
    g[..., 0, 0] = hess[..., 0, 1]
    g[..., 0, 1] = hess[..., 1, 1]
    g[..., 1, 0] = -hess[..., 0, 0]
    g[..., 1, 1] = -hess[..., 0, 1]
    return u, g


def modal_fields(kind, kp, ks, orders, x, scale_radius=None):
    """Compressional and shear modal fields at ``x``.

    Returns ``(uP, gP, uS, gS)`` with ``u*`` shaped ``(nk, npts, 2)`` and
    ``g*`` shaped ``(nk, npts, 2, 2)``.
    """
    gp, hp = potential_derivatives(kind, kp, orders, x, scale_radius)
    gs, hs = potential_derivatives(kind, ks, orders, x, scale_radius)
    uP, gP = compressional_fields(gp, hp)
    uS, gS = shear_fields(gs, hs)
    return uP, gP, uS, gS


def isotropic_stress(grad_u, lam, mu):
    """``lam tr(grad u) I + mu (grad u + grad u^T)`` for batched gradients."""
    tr = grad_u[..., 0, 0] + grad_u[..., 1, 1]
    sig = mu * (grad_u + np.swapaxes(grad_u, -1, -2))
    sig[..., 0, 0] += lam * tr
    sig[..., 1, 1] += lam * tr
    return sig


def isotropic_traction(grad_u, lam, mu, normal):
    """``sigma . nu`` with ``normal`` broadcastable to ``(..., 2)``."""
    sig = isotropic_stress(grad_u, lam, mu)
    return np.einsum("...ij,...j->...i", sig, normal)


def polar_mode_matrices(kind, kp, ks, lam, mu, orders, radius):
    """Per-mode 2x2 displacement and traction matrices on the circle ``|x| = radius``.

    Rows are (radial, angular) components of the ``e^{ik theta}`` coefficient,
    columns are (compressional, shear). Obtained by evaluating at ``theta = 0``,
    where the polar frame coincides with the Cartesian one.
    """
    x = np.array([[radius, 0.0]])
    uP, gP, uS, gS = modal_fields(kind, kp, ks, orders, x)
    nrm = np.array([1.0, 0.0])
    tP = isotropic_traction(gP, lam, mu, nrm)
    tS = isotropic_traction(gS, lam, mu, nrm)
    U = np.stack([uP[:, 0, :], uS[:, 0, :]], axis=-1)
    T = np.stack([tP[:, 0, :], tS[:, 0, :]], axis=-1)
    return U, T
