"""Incident fields, volume sources, the 2D fundamental solution and far fields.

Time convention ``e^{-i omega t}``. The fundamental solution satisfies

    mu Lap Phi + (lam + mu) grad div Phi + omega^2 rho Phi = -delta I,

so the radiating solution of ``L u + omega^2 rho u = f`` is
``u = -int Phi f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import special as sps

from .materials import ExteriorConstants, wavenumbers
from .tags import Boundary

PLANE_P = "plane_p"
PLANE_S = "plane_s"
POINT_SOURCE = "point_source"


@dataclass(frozen=True)
class IncidentField:
    """Plane compressional/shear wave or a point source.

    ``direction`` is the propagation direction (plane waves); ``location``
    and ``polarization`` describe a point source.
    """

    kind: str
    ext: ExteriorConstants
    direction: Tuple[float, float] = (1.0, 0.0)
    location: Tuple[float, float] = (0.0, 0.0)
    polarization: Tuple[complex, complex] = (1.0, 0.0)
    amplitude: complex = 1.0

    def __post_init__(self):
        if self.kind not in (PLANE_P, PLANE_S, POINT_SOURCE):
            raise ValueError(f"unknown incident kind {self.kind!r}")
        if self.kind in (PLANE_P, PLANE_S):
            d = np.asarray(self.direction, dtype=float)
            if abs(np.hypot(*d) - 1.0) > 1e-12:
                raise ValueError("plane-wave direction must be a unit vector")

    @property
    def angle(self) -> float:
        return math.atan2(self.direction[1], self.direction[0])

    def is_entire(self) -> bool:
        return self.kind in (PLANE_P, PLANE_S)


def plane_p(ext, direction=(1.0, 0.0), amplitude=1.0) -> IncidentField:
    return IncidentField(PLANE_P, ext, direction=tuple(direction), amplitude=amplitude)


def plane_s(ext, direction=(1.0, 0.0), amplitude=1.0) -> IncidentField:
    return IncidentField(PLANE_S, ext, direction=tuple(direction), amplitude=amplitude)


def point_source(ext, location, polarization=(1.0, 0.0), amplitude=1.0) -> IncidentField:
    return IncidentField(POINT_SOURCE, ext, location=tuple(location),
                         polarization=tuple(polarization), amplitude=amplitude)


def eval_incident(inc: IncidentField, points, gradient: bool = False):
    """Incident displacement at ``points`` (shape ``(n, 2)``).

    Returns ``u`` of shape ``(n, 2)``, or ``(u, grad_u)`` with
    ``grad_u[n, i, j] = d u_i / d x_j`` when ``gradient`` is set.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    kp, ks = wavenumbers(inc.ext)
    if inc.kind in (PLANE_P, PLANE_S):
        d = np.asarray(inc.direction, dtype=float)
        if inc.kind == PLANE_P:
            kappa, pol = kp, d
        else:
            kappa, pol = ks, np.array([-d[1], d[0]])
        phase = inc.amplitude * np.exp(1j * kappa * (x @ d))
        u = phase[:, None] * pol[None, :]
        if not gradient:
            return u
        g = (1j * kappa) * phase[:, None, None] * np.outer(pol, d)[None, :, :]
        return u, g
    y = np.asarray(inc.location, dtype=float)
    e = np.asarray(inc.polarization, dtype=complex)
    r = x - y[None, :]
    if np.any(np.hypot(r[:, 0], r[:, 1]) == 0.0):
        raise ValueError("point source evaluated at its own location")
    Phi, dPhi = fundamental_solution_with_gradient(x, y, inc.ext)
    u = inc.amplitude * np.einsum("nij,j->ni", Phi, e)
    if not gradient:
        return u
    g = inc.amplitude * np.einsum("nijk,j->nik", dPhi, e)
    return u, g


# ---------------------------------------------------------------------------
# Fundamental solution
# ---------------------------------------------------------------------------
def _radial_hankel_derivs(kappa: float, R):
    """``g(R) = H_0^(1)(kappa R)`` and its first three R-derivatives."""
    z = kappa * R
    h0 = sps.hankel1(0, z)
    h1 = sps.hankel1(1, z)
    g0 = h0
    g1 = -kappa * h1
    # H1' = H0 - H1/z ; H1'' = -H1 + H1/z^2 - H1'/z  (Bessel equation, order 1)
    dh1 = h0 - h1 / z
    g2 = -kappa**2 * dh1
    d2h1 = -dh1 / z - (1.0 - 1.0 / z**2) * h1
    g3 = -kappa**3 * d2h1
    return g0, g1, g2, g3


def _radial_hessian_parts(g1, g2, g3, R):
    """Coefficients of ``d_i d_j g = A x_i x_j + B delta_ij`` and their R-derivatives."""
    B = g1 / R
    A = (g2 - B) / R**2
    dB = (g2 - B) / R
    dA = (g3 - dB) / R**2 - 2.0 * A / R
    return A, B, dA, dB


def fundamental_solution_with_gradient(x, y, ext: ExteriorConstants):
    """``Phi(x, y)`` and ``dPhi[n, i, j, k] = d Phi_ij / d x_k``.

    ``Phi = (i/(4 mu)) H0(ks R) I + (i/(4 omega^2 rho)) grad grad [H0(ks R) - H0(kp R)]``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x - np.asarray(y, dtype=float)[None, :]
    R = np.hypot(d[:, 0], d[:, 1])
    if np.any(R == 0.0):
        raise ValueError("fundamental solution is singular at x = y")
    kp, ks = wavenumbers(ext)
    c1 = 1j / (4.0 * ext.mu)
    c2 = 1j / (4.0 * ext.omega**2 * ext.rho)
    s0, s1, s2, s3 = _radial_hankel_derivs(ks, R)
    _, p1, p2, p3 = _radial_hankel_derivs(kp, R)
    As, Bs, dAs, dBs = _radial_hessian_parts(s1, s2, s3, R)
    Ap, Bp, dAp, dBp = _radial_hessian_parts(p1, p2, p3, R)
    A, B, dA, dB = As - Ap, Bs - Bp, dAs - dAp, dBs - dBp
    eye = np.eye(2)
    xx = np.einsum("ni,nj->nij", d, d)
    Phi = c1 * s0[:, None, None] * eye + c2 * (A[:, None, None] * xx + B[:, None, None] * eye)
    rhat = d / R[:, None]
    # d/dx_k of H0(ks R) I
    t1 = c1 * (s1[:, None] * rhat)[:, None, None, :] * eye[None, :, :, None]
    # d/dx_k of A x_i x_j + B delta_ij
    t2 = (dA[:, None, None, None] * xx[:, :, :, None] * rhat[:, None, None, :]
          + A[:, None, None, None] * (eye[None, :, None, :] * d[:, None, :, None]
                                      + eye[None, None, :, :] * d[:, :, None, None])
          + dB[:, None, None, None] * eye[None, :, :, None] * rhat[:, None, None, :])
    dPhi = t1 + c2 * t2
    return Phi, dPhi


def fundamental_solution(x, y, ext: ExteriorConstants) -> np.ndarray:
    """Single point pair: returns the 2x2 matrix ``Phi(x, y)``; batched ``x`` gives ``(n, 2, 2)``."""
    x = np.asarray(x, dtype=float)
    Phi, _ = fundamental_solution_with_gradient(np.atleast_2d(x), y, ext)
    return Phi[0] if x.ndim == 1 else Phi


def fundamental_split(x, y, ext: ExteriorConstants):
    """Compressional and shear parts of ``Phi`` (they sum to ``Phi``).

    p-part: ``-(i/(4 omega^2 rho)) grad grad H0(kp R)``; s-part is the rest.
    Each is a radiating solution with a single wavenumber.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x - np.asarray(y, dtype=float)[None, :]
    R = np.hypot(d[:, 0], d[:, 1])
    kp, ks = wavenumbers(ext)
    c1 = 1j / (4.0 * ext.mu)
    c2 = 1j / (4.0 * ext.omega**2 * ext.rho)
    eye = np.eye(2)
    xx = np.einsum("ni,nj->nij", d, d)
    s0, s1, s2, s3 = _radial_hankel_derivs(ks, R)
    _, p1, p2, p3 = _radial_hankel_derivs(kp, R)
    As, Bs, _, _ = _radial_hessian_parts(s1, s2, s3, R)
    Ap, Bp, _, _ = _radial_hessian_parts(p1, p2, p3, R)
    P = -c2 * (Ap[:, None, None] * xx + Bp[:, None, None] * eye)
    S = c1 * s0[:, None, None] * eye + c2 * (As[:, None, None] * xx + Bs[:, None, None] * eye)
    return P, S


# ---------------------------------------------------------------------------
# Volume sources
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BumpSource:
    """Smooth compactly supported force ``amp * e * exp(1 - 1/(1 - s^2))``, ``s = |x - c|/radius``."""

    center: Tuple[float, float]
    radius: float
    polarization: Tuple[complex, complex] = (1.0, 0.0)
    amplitude: complex = 1.0

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s2 = np.sum((x - np.asarray(self.center)) ** 2, axis=1) / self.radius**2
        prof = np.zeros(len(x))
        inside = s2 < 1.0
        prof[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
        return self.amplitude * prof[:, None] * np.asarray(self.polarization, dtype=complex)[None, :]

    def support_distance(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.hypot(*(x - np.asarray(self.center)).T) - self.radius


# ---------------------------------------------------------------------------
# Far-field constants, calibrated on the large-radius limit
# ---------------------------------------------------------------------------
CALIBRATION_RADII = (50.0, 100.0, 200.0)


@lru_cache(maxsize=32)
def _calibrate(lam, mu, rho, omega):
    ext = ExteriorConstants(lam, mu, omega, rho)
    kp, ks = wavenumbers(ext)
    xh = np.array([1.0, 0.0])
    xp = np.array([0.0, 1.0])
    qp, qs = [], []
    for R in CALIBRATION_RADII:
        P, S = fundamental_split(R * xh[None, :], np.zeros(2), ext)
        qp.append(math.sqrt(R) * np.exp(-1j * kp * R) * (xh @ P[0] @ xh))
        qs.append(math.sqrt(R) * np.exp(-1j * ks * R) * (xp @ S[0] @ xp))
    return _richardson(qp), _richardson(qs), complex(qp[-1]), complex(qs[-1])


def _richardson(q):
    """Two Richardson steps for ``q(R) = gamma (1 + a/R + b/R^2)`` at ``R, 2R, 4R``."""
    q1 = 2 * q[1] - q[0]
    q2 = 2 * q[2] - q[1]
    return complex((4 * q2 - q1) / 3)


def far_field_constants(ext: ExteriorConstants) -> Tuple[complex, complex]:
    """``(gamma_p, gamma_s)`` with ``Phi(x, y) ~ e^{i kappa |x|}/sqrt|x| gamma e^{-i kappa xhat.y}``.

    Obtained from the fundamental solution itself at radii 50, 100, 200 by
    Richardson extrapolation of ``R^{1/2} e^{-i kappa R} Phi(R xhat, 0)``.
    """
    gp, gs, _, _ = _calibrate(ext.lam, ext.mu, ext.rho, ext.omega)
    return gp, gs


def far_field_limit_samples(ext: ExteriorConstants):
    """Raw ``R^{1/2} e^{-i kappa R}`` samples at the largest calibration radius (for checks)."""
    _, _, qp, qs = _calibrate(ext.lam, ext.mu, ext.rho, ext.omega)
    return qp, qs


def _kernel_columns(ext, xhat, y, normals):
    """Plane-wave kernel columns and their tractions at boundary points.

    For directions ``xhat (M, 2)`` and points ``y (Q, 2)`` returns
    ``V[M, Q, m, i]`` (component ``i`` of column ``m`` of
    ``gp xx^T e^{-i kp xhat.y} + gs (I - xx^T) e^{-i ks xhat.y}``) and the
    traction ``TV`` of each column with the given normals ``(Q, 2)``.
    """
    kp, ks = wavenumbers(ext)
    gp, gs = far_field_constants(ext)
    eye = np.eye(2)
    xx = np.einsum("mi,mj->mij", xhat, xhat)
    ph_p = np.exp(-1j * kp * (xhat @ y.T))  # (M, Q)
    ph_s = np.exp(-1j * ks * (xhat @ y.T))
    Kp = gp * xx  # (M, i, m)
    Ks = gs * (eye[None] - xx)
    V = ph_p[:, :, None, None] * np.swapaxes(Kp, 1, 2)[:, None] + ph_s[:, :, None, None] * np.swapaxes(Ks, 1, 2)[:, None]
    # gradient of column m: d/dy_k [K_im e^{-i kappa xhat.y}] = -i kappa xhat_k K_im e^{...}
    Gp = (-1j * kp) * ph_p[:, :, None, None, None] * np.swapaxes(Kp, 1, 2)[:, None, :, :, None] * xhat[:, None, None, None, :]
    Gs = (-1j * ks) * ph_s[:, :, None, None, None] * np.swapaxes(Ks, 1, 2)[:, None, :, :, None] * xhat[:, None, None, None, :]
    G = Gp + Gs  # (M, Q, m, i, k)
    tr = G[..., 0, 0] + G[..., 1, 1]
    sig = ext.mu * (G + np.swapaxes(G, -1, -2))
    sig[..., 0, 0] += ext.lam * tr
    sig[..., 1, 1] += ext.lam * tr
    TV = np.einsum("Mqmij,qj->Mqmi", sig, normals)
    return V, TV


MIN_DIRECTIONS = 8


@dataclass
class FarFieldPattern:
    """Far-field amplitudes on ``M`` directions ``xhat = (cos t, sin t)``.

    The p-part is ``(u.xhat) xhat`` and the s-part ``(u.xhat_perp) xhat_perp``;
    both are stored through their frame coefficients.
    """

    angles: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.amplitude = np.asarray(self.amplitude, dtype=complex)
        if self.amplitude.shape != (self.angles.size, 2):
            raise ValueError("amplitude must have shape (M, 2)")

    @property
    def directions(self) -> np.ndarray:
        return np.stack([np.cos(self.angles), np.sin(self.angles)], axis=-1)

    @property
    def p_coefficient(self) -> np.ndarray:
        return np.sum(self.amplitude * self.directions, axis=1)

    @property
    def s_coefficient(self) -> np.ndarray:
        d = self.directions
        return self.amplitude[:, 1] * d[:, 0] - self.amplitude[:, 0] * d[:, 1]

    @property
    def p_part(self) -> np.ndarray:
        return self.p_coefficient[:, None] * self.directions

    @property
    def s_part(self) -> np.ndarray:
        d = self.directions
        return self.s_coefficient[:, None] * np.stack([-d[:, 1], d[:, 0]], axis=-1)

    def to_csv(self, path) -> None:
        u = self.amplitude
        p = np.abs(self.p_coefficient)
        s = np.abs(self.s_coefficient)
        with open(path, "w") as fh:
            fh.write("angle,re_u1,im_u1,re_u2,im_u2,abs_p,abs_s\n")
            for t, (a, b), pp, ss in zip(self.angles, u, p, s):
                fh.write(f"{t:.17g},{a.real:.17g},{a.imag:.17g},{b.real:.17g},{b.imag:.17g},{pp:.17g},{ss:.17g}\n")


def direction_grid(M: int) -> np.ndarray:
    if M < MIN_DIRECTIONS:
        raise ValueError(f"need at least {MIN_DIRECTIONS} far-field directions, got {M}")
    return 2 * np.pi * np.arange(M) / M


def far_field_from_boundary(ext, angles, y, normals, weights, trace, traction) -> np.ndarray:
    """``u_inf(xhat) = int [ (T K)^T u_s - K T u_s ] ds`` by a given boundary quadrature."""
    xhat = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    V, TV = _kernel_columns(ext, xhat, y, normals)
    a = np.einsum("Mqmi,qi->Mqm", TV, trace) - np.einsum("Mqmi,qi->Mqm", V, traction)
    return np.einsum("q,Mqm->Mm", weights, a)


def far_field_of_source(ext, angles, points, weights, fvals) -> np.ndarray:
    """``-int K(xhat, y) f(y) dy`` for quadrature points/weights of the source support."""
    xhat = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    V, _ = _kernel_columns(ext, xhat, points, np.zeros_like(points))
    return -np.einsum("q,Mqmi,qi->Mm", weights, V, fvals)


def _circle_data(sol, n_theta=None):
    """Scattered trace and traction samples on the truncation circle from the modal unknowns."""
    from .dtn import from_polar, synthesize
    from .fem import incident_modal_trace

    op = sol.problem.dtn
    cs = sol.modal - incident_modal_trace(sol.problem.incident, op)
    ts = np.einsum("kab,kb->ka", op.blocks, cs)
    n = n_theta or max(512, 8 * op.order)
    th = 2 * np.pi * np.arange(n) / n
    u = from_polar(th, synthesize(th, cs, op.order))
    t = from_polar(th, synthesize(th, ts, op.order))
    er = np.stack([np.cos(th), np.sin(th)], axis=-1)
    w = np.full(n, 2 * np.pi * op.radius / n)
    return op.radius * er, er, w, u, t


def _medium_data(sol, nq: int = 6):
    """Scattered trace and traction at Gauss points of the medium-boundary polyline."""
    from .fem import traction_on_boundary
    from .quadrature import edge_shape_functions, gauss_legendre

    space = sol.space
    ext = sol.problem.materials.exterior
    bf = traction_on_boundary(sol, Boundary.MEDIUM, side="outer", method="weak")
    nodes_all = np.zeros((space.n_nodes, 2), dtype=complex)
    nodes_all[bf.nodes] = bf.values
    en = space.edge_nodes(Boundary.MEDIUM)
    t, w = gauss_legendre(nq)
    N = edge_shape_functions(space.degree, t)
    P0, P1 = space.points[en[:, 0]], space.points[en[:, 1]]
    y = (P0[:, None, :] + t[None, :, None] * (P1 - P0)[:, None, :]).reshape(-1, 2)
    d = P1 - P0
    L = np.hypot(d[:, 0], d[:, 1])
    nu = np.repeat(np.stack([d[:, 1], -d[:, 0]], axis=-1) / L[:, None], nq, axis=0)
    wts = (L[:, None] * w[None, :]).ravel()
    total = np.einsum("qa,eai->eqi", N, sol.field.values[en]).reshape(-1, 2)
    trac = np.einsum("qa,eai->eqi", N, nodes_all[en]).reshape(-1, 2)
    if sol.problem.incident is not None:
        ui, gi = eval_incident(sol.problem.incident, y, gradient=True)
        tr = gi[:, 0, 0] + gi[:, 1, 1]
        sig = ext.mu * (gi + np.swapaxes(gi, -1, -2))
        sig[:, 0, 0] += ext.lam * tr
        sig[:, 1, 1] += ext.lam * tr
        total = total - ui
        trac = trac - np.einsum("qij,qj->qi", sig, nu)
    return y, nu, wts, total, trac


def _source_quadrature(sol, rule: int = 5):
    from .quadrature import triangle_rule

    src = sol.problem.source
    if src is None:
        return None
    space = sol.space
    mesh = space.mesh
    cells = np.nonzero(mesh.region_mask(sol.problem.source_regions) & sol.problem.active_cells)[0]
    pts, w = triangle_rule(rule)
    x = space.map_points(pts, cells)
    f = np.asarray(src(x.reshape(-1, 2)), dtype=complex).reshape(len(cells), len(w), 2)
    keep = np.any(np.abs(f) > 0, axis=(1, 2))
    det = np.abs(space.jacobians[1][cells[keep]])
    return (x[keep].reshape(-1, 2), (det[:, None] * w[None, :]).ravel(), f[keep].reshape(-1, 2))


def far_field(sol, M: int = 64, surface: str = "truncation") -> FarFieldPattern:
    """Far-field pattern of a solved problem.

    ``surface="truncation"`` integrates the modal trace and its DtN traction
    over the truncation circle (default); ``surface="medium"`` uses the FEM
    trace and recovered traction on the medium boundary plus the volume
    source term.
    """
    angles = direction_grid(M)
    ext = sol.problem.materials.exterior
    if surface == "truncation":
        y, nu, w, u, t = _circle_data(sol)
        amp = far_field_from_boundary(ext, angles, y, nu, w, u, t)
    elif surface == "medium":
        y, nu, w, u, t = _medium_data(sol)
        amp = far_field_from_boundary(ext, angles, y, nu, w, u, t)
        sq = _source_quadrature(sol)
        if sq is not None:
            amp = amp + far_field_of_source(ext, angles, *sq)
    else:
        raise ValueError("surface must be 'truncation' or 'medium'")
    return FarFieldPattern(angles, amp)


def far_field_distance(p1: FarFieldPattern, p2: FarFieldPattern) -> float:
    """Sup over the sample directions of ``|u1_inf - u2_inf|``."""
    if p1.angles.shape != p2.angles.shape or not np.array_equal(p1.angles, p2.angles):
        raise ValueError("far-field patterns use different direction grids")
    return float(np.max(np.linalg.norm(p1.amplitude - p2.amplitude, axis=1)))


# ---------------------------------------------------------------------------
# Betti representation
# ---------------------------------------------------------------------------
def _betti(ext, x, y, nu, w, u, t):
    """``int [ (T_y Phi(x, y))^T u - Phi(x, y) t ] ds(y)`` for each evaluation point."""
    out = np.zeros((len(x), 2), dtype=complex)
    for n, xi in enumerate(x):
        Phi, dPhi = fundamental_solution_with_gradient(y, xi, ext)
        # column m as a function of y: v_i = Phi_im, grad v[i, k] = dPhi[q, i, m, k]
        G = np.swapaxes(dPhi, 1, 2)  # (q, m, i, k)
        tr = G[..., 0, 0] + G[..., 1, 1]
        sig = ext.mu * (G + np.swapaxes(G, -1, -2))
        sig[..., 0, 0] += ext.lam * tr
        sig[..., 1, 1] += ext.lam * tr
        TV = np.einsum("qmij,qj->qmi", sig, nu)
        a = np.einsum("qmi,qi->qm", TV, u) - np.einsum("qmi,qi->qm", np.swapaxes(Phi, 1, 2), t)
        out[n] = w @ a
    return out


def represent_scattered(sol, points, surface: str = "medium", min_distance: Optional[float] = None):
    """Scattered field at ``points`` outside ``Omega`` from the Betti representation.

    ``u_s(x) = int_{dOmega} [ (T_y Phi)^T u_s - Phi T u_s ] ds - int Phi f dy``
    with ``nu`` the outward normal; ``surface="truncation"`` integrates over
    the truncation circle instead (points outside ``B_r``, no volume term).
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    ext = sol.problem.materials.exterior
    mesh = sol.space.mesh
    guard = 2 * mesh.h if min_distance is None else min_distance
    rad = np.hypot(x[:, 0], x[:, 1])
    if surface == "medium":
        R = mesh.circle_radius(Boundary.MEDIUM)
        if np.any(rad - R < guard):
            raise ValueError("evaluation point too close to (or inside) the medium boundary")
        y, nu, w, u, t = _medium_data(sol)
        out = _betti(ext, x, y, nu, w, u, t)
        sq = _source_quadrature(sol)
        if sq is not None:
            qp, qw, fv = sq
            src = getattr(sol.problem.source, "support_distance", None)
            if src is not None and np.any(src(x) < guard):
                raise ValueError("evaluation point too close to the source support")
            for n, xi in enumerate(x):
                Phi = fundamental_solution(qp, xi, ext)
                out[n] -= np.einsum("q,qij,qj->i", qw, Phi, fv)
        return out
    if surface == "truncation":
        y, nu, w, u, t = _circle_data(sol)
        if np.any(rad - sol.problem.dtn.radius < guard):
            raise ValueError("evaluation point too close to (or inside) the truncation circle")
        return _betti(ext, x, y, nu, w, u, t)
    raise ValueError("surface must be 'medium' or 'truncation'")
