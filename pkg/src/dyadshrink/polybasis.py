"""Local polynomial spaces, discrete orthonormalization, and projections.

Polynomials of total degree < r on a cube are represented in a basis that
is orthonormal with respect to the uniform discrete measure on an N^d
tensor grid of sites inside the cube.  The orthonormalization is computed
once per (r, d, N) on the reference cube [0,1)^d; every dyadic cube reuses
it by affine rescaling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cholesky, solve_triangular

RANK_TOL = 1e-12
Q_FLOOR = 0.1  # quasi-norm exponents below this overflow |.|^q


class RankDeficiencyError(ValueError):
    """Discrete Gram matrix is numerically singular."""


def dim_poly(r: int, d: int) -> int:
    """Dimension of the space of polynomials of total degree < r in d variables."""
    if r < 1 or d < 1:
        raise ValueError("need r >= 1 and d >= 1")
    rho = comb(d + r - 1, d)
    if rho > 10**6:
        raise OverflowError(f"polynomial space dimension {rho} is unreasonably large")
    return rho


@lru_cache(maxsize=None)
def multi_indices(r: int, d: int) -> tuple[tuple[int, ...], ...]:
    """All exponent tuples with total degree < r, graded lexicographic."""
    idx = [k for k in itertools.product(range(r), repeat=d) if sum(k) < r]
    idx.sort(key=lambda k: (sum(k), k))
    return tuple(idx)


def _shifted_legendre(deg_max: int, u: np.ndarray) -> np.ndarray:
    """Values of shifted Legendre polynomials 0..deg_max at u in [0,1].

    Returns an array of shape (len(u), deg_max+1).
    """
    t = 2.0 * np.asarray(u, dtype=float) - 1.0
    out = np.empty(t.shape + (deg_max + 1,))
    out[..., 0] = 1.0
    if deg_max >= 1:
        out[..., 1] = t
    for k in range(1, deg_max):
        out[..., k + 1] = ((2 * k + 1) * t * out[..., k] - k * out[..., k - 1]) / (k + 1)
    return out


def reference_design(r: int, d: int, points: np.ndarray) -> np.ndarray:
    """Tensor shifted-Legendre design matrix at reference-cube points.

    ``points`` has shape (m, d); the result has shape (m, rho) with columns
    in ``multi_indices`` order.
    """
    points = np.atleast_2d(points)
    leg = _shifted_legendre(r - 1, points)  # (m, d, r)
    cols = [leg[:, range(d), k].prod(axis=1) for k in multi_indices(r, d)]
    return np.stack(cols, axis=-1)


def reference_sites(N: int, d: int) -> np.ndarray:
    """The N^d tensor grid {0, 1/N, ..., 1-1/N}^d, lexicographic order."""
    axis = np.arange(N) / N
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


@dataclass(frozen=True)
class PolySpaceSpec:
    r: int
    d: int

    @property
    def rho(self) -> int:
        return dim_poly(self.r, self.d)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Uniform weights 1/N^d on an N-per-axis tensor grid inside a cube."""

    N: int
    d: int

    @property
    def sites(self) -> np.ndarray:
        return reference_sites(self.N, self.d)


@dataclass(frozen=True)
class OrthonormalLocalBasis:
    """Basis of P_r orthonormal under the discrete measure on N^d sites.

    ``transform`` expresses basis element j as sum_i transform[i, j] times
    the i-th tensor shifted-Legendre reference polynomial; ``site_values``
    holds its values at the reference sites, shape (N^d, rho).
    """

    r: int
    d: int
    N: int
    transform: np.ndarray
    site_values: np.ndarray

    @property
    def rho(self) -> int:
        return dim_poly(self.r, self.d)

    def eval_ref(self, points: np.ndarray) -> np.ndarray:
        """Values of all basis elements at reference-cube points, (m, rho)."""
        return reference_design(self.r, self.d, points) @ self.transform


@lru_cache(maxsize=None)
def orthonormal_basis(r: int, d: int, N: int) -> OrthonormalLocalBasis:
    """Orthonormalize the reference Legendre basis under the N^d site measure.

    Cached per (r, d, N): the discrete measure is translation and scale
    invariant across cubes of a common dyadic level.
    """
    rho = dim_poly(r, d)
    if N**d <= rho:
        raise ValueError(f"need N^d > rho ({N}^{d} = {N**d} <= {rho})")
    V = reference_design(r, d, reference_sites(N, d))
    G = V.T @ V / N**d
    eigmin = np.linalg.eigvalsh(G)[0]
    if eigmin < RANK_TOL:
        raise RankDeficiencyError(f"Gram matrix nearly singular (lambda_min = {eigmin:.3e})")
    R = cholesky(G, lower=False)
    transform = solve_triangular(R, np.eye(rho), lower=False)
    return OrthonormalLocalBasis(r=r, d=d, N=N, transform=transform, site_values=V @ transform)


def orthonormalize(spec: PolySpaceSpec, measure: DiscreteMeasure) -> OrthonormalLocalBasis:
    """Spec-surface wrapper over the (r, d, N) cache."""
    if measure.d != spec.d:
        raise ValueError("measure dimension does not match the polynomial space")
    return orthonormal_basis(spec.r, spec.d, measure.N)


@dataclass(frozen=True)
class LocalPolynomial:
    """A polynomial on one cube, as coefficients in its orthonormal basis."""

    basis: OrthonormalLocalBasis
    coeffs: np.ndarray

    def eval_ref(self, points: np.ndarray) -> np.ndarray:
        return self.basis.eval_ref(points) @ self.coeffs


def project_ls(values: np.ndarray, basis: OrthonormalLocalBasis) -> LocalPolynomial:
    """Least-squares fit to ``values`` at the basis's sites.

    With an orthonormal basis the normal equations collapse to discrete
    inner products; the fit reproduces every polynomial of order r exactly.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (basis.N**basis.d,):
        raise ValueError(f"expected {basis.N ** basis.d} values, got {values.shape}")
    coeffs = basis.site_values.T @ values / basis.N**basis.d
    return LocalPolynomial(basis=basis, coeffs=coeffs)


@lru_cache(maxsize=None)
def _quad_rule(d: int, nodes: int, cells_per_axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on the reference cube [0,1]^d."""
    x, w = leggauss(nodes)
    x = (x + 1.0) / 2.0 / cells_per_axis
    w = w / 2.0 / cells_per_axis
    offsets = np.arange(cells_per_axis) / cells_per_axis
    x1 = (offsets[:, None] + x[None, :]).ravel()
    w1 = np.tile(w, cells_per_axis)
    mesh = np.meshgrid(*([x1] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    wmesh = np.meshgrid(*([w1] * d), indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wmesh], axis=-1), axis=1)
    return pts, wts


def norm_star(poly: LocalPolynomial, q: float, dense_per_axis: int | None = None) -> float:
    """Measure-normalized L_q norm of ``poly`` over its cube.

    Equals (mean over the cube of |p|^q)^(1/q), so the cube size drops out
    and the computation lives on the reference cube.  Finite q uses a
    composite Gauss-Legendre rule with r+2 nodes per axis on 4 subcells per
    axis (exact for even integer q at these orders, a documented
    approximation otherwise); q = inf takes a dense-grid max including the
    closure faces.
    """
    if q < Q_FLOOR:
        raise ValueError(f"exponent {q} below quasi-norm floor {Q_FLOOR}")
    b = poly.basis
    if np.isinf(q):
        if dense_per_axis is None:
            dense_per_axis = {1: 2049, 2: 193, 3: 49}.get(b.d, 17)
        axis = np.linspace(0.0, 1.0, dense_per_axis)
        mesh = np.meshgrid(*([axis] * b.d), indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        return float(np.max(np.abs(poly.eval_ref(pts))))
    pts, wts = _quad_rule(b.d, b.r + 2, 4)
    return float((wts @ np.abs(poly.eval_ref(pts)) ** q) ** (1.0 / q))
