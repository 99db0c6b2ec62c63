"""Elastic stiffness tensors, densities and the effective-medium parameter laws.

All tensors are stored as full ``(n, n, n, n)`` tables with ``n = 2``.
Loops and einsums are written over the generic index range so the 3D case
only needs a different ``DIM``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .tags import Region

DIM = 2


def _delta() -> np.ndarray:
    return np.eye(DIM)


def _orbit(idx):
    i, j, k, l = idx
    members = {
        (i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
        (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i),
    }
    return sorted(members)


@dataclass(frozen=True)
class ElasticTensor:
    """Fourth-rank real stiffness tensor with major and minor symmetries.

    Parameters
    ----------
    table : ndarray, shape (2, 2, 2, 2)
        Entries ``C[i, j, k, l]``.
    kind : {"isotropic", "anisotropic"}
    lam, mu : float or None
        Lamé parameters, only for the isotropic kind.
    """

    table: np.ndarray
    kind: str = "anisotropic"
    lam: Optional[float] = None
    mu: Optional[float] = None

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.shape != (DIM,) * 4:
            raise ValueError(f"stiffness table must have shape {(DIM,) * 4}, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("stiffness table has non-finite entries")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def anisotropic(cls, table) -> "ElasticTensor":
        """Build a general tensor, symmetrizing the given table.

        Each orbit of the 8 index permutations generated by ``ij <-> ji``,
        ``kl <-> lk`` and ``ij <-> kl`` receives one value (the orbit mean),
        so every symmetry holds bit-exactly afterwards.
        """
        t = np.asarray(table, dtype=float)
        out = np.empty_like(t)
        for idx in np.ndindex(*t.shape):
            orbit = _orbit(idx)
            out[idx] = math.fsum(t[o] for o in orbit) / len(orbit)
        return cls(table=out, kind="anisotropic")

    @property
    def is_isotropic(self) -> bool:
        return self.kind == "isotropic"

    def scaled(self, factor: float) -> "ElasticTensor":
        if self.is_isotropic:
            return isotropic_tensor(factor * self.lam, factor * self.mu)
        return ElasticTensor(table=factor * self.table, kind=self.kind)


def isotropic_tensor(lam: float, mu: float) -> ElasticTensor:
    """Isotropic tensor ``lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk)``."""
    d = _delta()
    t = (
        lam * np.einsum("ij,kl->ijkl", d, d)
        + mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))
    )
    return ElasticTensor(table=t, kind="isotropic", lam=float(lam), mu=float(mu))


def double_contract(C: ElasticTensor, A) -> np.ndarray:
    """Return ``(C:A)_ij = sum_kl C_ijkl A_kl``.

    ``A`` may carry leading batch dimensions: shape ``(..., 2, 2)``.
    """
    A = np.asarray(A)
    return np.einsum("ijkl,...kl->...ij", C.table, A)


def quadratic_form(C: ElasticTensor, xi) -> float:
    """``Re (xi : C : conj(xi))`` for a complex matrix ``xi``."""
    xi = np.asarray(xi, dtype=complex)
    return float(np.real(np.sum(double_contract(C, xi) * np.conj(xi))))


@dataclass
class EllipticityReport:
    passed: bool
    min_form: float
    max_form: float
    c_min: float
    c_max: float
    witness: Optional[np.ndarray] = None

    def __str__(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return (
            f"{state}: observed form in [{self.min_form:.6g}, {self.max_form:.6g}], "
            f"required [{self.c_min:.6g}, {self.c_max:.6g}]"
        )


def random_symmetric_unit(rng: np.random.Generator, count: int) -> np.ndarray:
    """Random complex symmetric matrices with unit Frobenius norm."""
    z = rng.standard_normal((count, DIM, DIM)) + 1j * rng.standard_normal((count, DIM, DIM))
    z = 0.5 * (z + np.swapaxes(z, -1, -2))
    return z / np.linalg.norm(z, axis=(-2, -1))[:, None, None]


def check_legendre_ellipticity(
    C: ElasticTensor,
    c_min: float,
    c_max: float,
    n_samples: int = 1000,
    seed: int = 0,
    extra_samples=None,
    rtol: float = 1e-12,
) -> EllipticityReport:
    """Sampled check of ``c_min <= Re(xi:C:xi*) <= c_max`` over symmetric unit ``xi``.

    ``extra_samples`` are tested in addition to the random ones (they are
    normalized first). Bounds are relaxed by ``rtol`` times the largest
    tensor entry to absorb roundoff. The first violating sample is returned
    as witness.
    """
    if c_min > c_max:
        raise ValueError("c_min must not exceed c_max")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    xis = random_symmetric_unit(np.random.default_rng(seed), n_samples)
    if extra_samples is not None:
        extra = np.asarray(extra_samples, dtype=complex).reshape(-1, DIM, DIM)
        extra = extra / np.linalg.norm(extra, axis=(-2, -1))[:, None, None]
        xis = np.concatenate([extra, xis])
    forms = np.real(np.einsum("nij,nij->n", double_contract(C, xis), np.conj(xis)))
    slack = rtol * max(1.0, float(np.abs(C.table).max()))
    bad = np.nonzero((forms < c_min - slack) | (forms > c_max + slack))[0]
    witness = xis[bad[0]] if bad.size else None
    return EllipticityReport(
        passed=bad.size == 0,
        min_form=float(forms.min()),
        max_form=float(forms.max()),
        c_min=c_min,
        c_max=c_max,
        witness=witness,
    )


def check_density(rho: complex) -> complex:
    rho = complex(rho)
    if not (rho.real > 0 and rho.imag >= 0):
        raise ValueError(f"density must satisfy Re > 0 and Im >= 0, got {rho}")
    return rho


def strongly_convex(lam: float, mu: float) -> bool:
    return mu > 0 and DIM * lam + 2 * mu > 0


@dataclass(frozen=True)
class ExteriorConstants:
    """Homogeneous isotropic background (also the DtN medium)."""

    lam: float
    mu: float
    omega: float
    rho: float = 1.0

    def __post_init__(self):
        if not strongly_convex(self.lam, self.mu):
            raise ValueError(f"exterior moduli violate strong convexity: lam={self.lam}, mu={self.mu}")
        if not self.rho > 0:
            raise ValueError("exterior density must be positive")
        if not self.omega > 0:
            raise ValueError("angular frequency must be positive")

    @property
    def tensor(self) -> ElasticTensor:
        return isotropic_tensor(self.lam, self.mu)


def wavenumbers(ext: ExteriorConstants) -> Tuple[float, float]:
    """Return ``(kappa_p, kappa_s)``.

    ``kappa_s = omega sqrt(rho/mu)``, ``kappa_p = omega sqrt(rho/(lam + 2 mu))``;
    with the default ``rho = 1`` this is ``omega/sqrt(mu)`` and
    ``omega/sqrt(lam + 2 mu)``.
    """
    kp = ext.omega * math.sqrt(ext.rho / (ext.lam + 2 * ext.mu))
    ks = ext.omega * math.sqrt(ext.rho / ext.mu)
    return kp, ks


def complex_wavenumbers(lam: float, mu: float, rho: complex, omega: float) -> Tuple[complex, complex]:
    """Wavenumbers of a possibly lossy isotropic medium, principal branch (Im >= 0)."""
    kp = omega * np.sqrt(complex(rho) / (lam + 2 * mu))
    ks = omega * np.sqrt(complex(rho) / mu)
    return complex(kp), complex(ks)


def _check_effective_args(eps, lam0, mu0, eta0, tau0, allow_lossless=False):
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    if not strongly_convex(lam0, mu0):
        raise ValueError("(lam0, mu0) violate strong convexity")
    if not eta0 > 0:
        raise ValueError("eta0 must be positive")
    if not (tau0 > 0 or (allow_lossless and tau0 == 0)):
        raise ValueError("tau0 must be positive")


def effective_material_case1(eps, lam0, mu0, eta0, tau0,
                            allow_lossless: bool = False) -> Tuple[ElasticTensor, complex]:
    """Soft lossy filling for a traction-free obstacle: ``(eps lam0, eps mu0)``, ``eta0 + i tau0``."""
    _check_effective_args(eps, lam0, mu0, eta0, tau0, allow_lossless)
    return isotropic_tensor(eps * lam0, eps * mu0), complex(eta0, tau0)


def effective_material_case2(eps, lam0, mu0, eta0, tau0,
                            allow_lossless: bool = False) -> Tuple[ElasticTensor, complex]:
    """Stiff lossy filling for a rigid obstacle: ``(lam0, mu0)/eps^2``, ``eta0 + i tau0/eps``."""
    _check_effective_args(eps, lam0, mu0, eta0, tau0, allow_lossless)
    return isotropic_tensor(lam0 / eps**2, mu0 / eps**2), complex(eta0, tau0 / eps)


def effective_material(case: int, eps, lam0, mu0, eta0, tau0,
                       allow_lossless: bool = False) -> Tuple[ElasticTensor, complex]:
    """Dispatch on the case. ``allow_lossless`` admits ``tau0 = 0`` (outside the lossy regime)."""
    if case == 1:
        return effective_material_case1(eps, lam0, mu0, eta0, tau0, allow_lossless)
    if case == 2:
        return effective_material_case2(eps, lam0, mu0, eta0, tau0, allow_lossless)
    raise ValueError(f"unknown effective-medium case {case!r}")


@dataclass
class MaterialScene:
    """Per-region ``(tensor, density)`` plus the exterior constants.

    The shell entry is always derived from ``exterior``. ``D`` may be left
    empty for impenetrable-obstacle runs.
    """

    exterior: ExteriorConstants
    annulus: Tuple[ElasticTensor, complex]
    obstacle: Optional[Tuple[ElasticTensor, complex]] = None
    _regions: Dict[Region, Tuple[ElasticTensor, complex]] = field(init=False, repr=False)

    def __post_init__(self):
        regions = {
            Region.ANNULUS: (self.annulus[0], check_density(self.annulus[1])),
            Region.SHELL: (self.exterior.tensor, complex(self.exterior.rho)),
        }
        if self.obstacle is not None:
            regions[Region.D] = (self.obstacle[0], check_density(self.obstacle[1]))
        self._regions = regions

    @classmethod
    def homogeneous(cls, exterior: ExteriorConstants) -> "MaterialScene":
        """Annulus carries the exterior material."""
        return cls(exterior=exterior, annulus=(exterior.tensor, complex(exterior.rho)))

    def with_obstacle(self, tensor: ElasticTensor, rho: complex) -> "MaterialScene":
        return MaterialScene(exterior=self.exterior, annulus=self.annulus, obstacle=(tensor, rho))

    def without_obstacle(self) -> "MaterialScene":
        return MaterialScene(exterior=self.exterior, annulus=self.annulus)

    def get(self, region: Region) -> Tuple[ElasticTensor, complex]:
        try:
            return self._regions[Region(region)]
        except KeyError:
            raise KeyError(f"no material assigned to region {Region(region).name}") from None

    def has(self, region: Region) -> bool:
        return Region(region) in self._regions

    @property
    def regions(self) -> Mapping[Region, Tuple[ElasticTensor, complex]]:
        return dict(self._regions)


PRESETS = {
    "exterior-default": dict(lam=2.0, mu=1.0, rho=1.0),
    "annulus-default": dict(lam=2.0, mu=1.0, rho=complex(1.0, 0.2)),
    "homogeneous": dict(lam=2.0, mu=1.0, rho=1.0),
}
