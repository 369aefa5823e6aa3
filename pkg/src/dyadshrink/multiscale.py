"""Dyadic cube bookkeeping, level projections, and multiscale coefficients.

A level-k projection fits one local least-squares polynomial per dyadic
cube of sidelength 2^-k; the difference between consecutive level
projections is expanded in each fine cube's orthonormal basis, giving one
coefficient vector per level.  Telescoping the differences reconstructs
the projection at any level exactly.
"""

from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from dyadshrink.grid import ObservationSet
from dyadshrink.polybasis import (
    OrthonormalLocalBasis,
    dim_poly,
    orthonormal_basis,
    reference_sites,
)

MAX_CELLS = 2**26


class LevelTooDeepError(ValueError):
    """Requested level leaves fewer than rho+1 sites per cube."""


@dataclass(frozen=True)
class DyadicCube:
    """Half-open cube prod_j [idx_j 2^-k, (idx_j+1) 2^-k) at level k."""

    k: int
    idx: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.idx)

    @property
    def side(self) -> float:
        return 2.0**-self.k

    @property
    def corner(self) -> np.ndarray:
        return np.array(self.idx, dtype=float) * self.side

    def parent(self) -> "DyadicCube":
        if self.k == 0:
            raise ValueError("level-0 cube has no parent")
        return DyadicCube(k=self.k - 1, idx=tuple(i // 2 for i in self.idx))

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        lo = self.corner
        return bool(np.all(x >= lo) and np.all(x < lo + self.side))


def cubes_at_level(k: int, d: int) -> list[DyadicCube]:
    """All 2^(kd) level-k cubes in lexicographic index order."""
    if k < 0:
        raise ValueError("level must be >= 0")
    if 2 ** (k * d) > MAX_CELLS:
        raise ValueError(f"2^({k}*{d}) cubes exceeds limit {MAX_CELLS}")
    return [DyadicCube(k=k, idx=i) for i in itertools.product(range(2**k), repeat=d)]


def locate(x: np.ndarray, k: int) -> DyadicCube:
    """The level-k cube containing x; coordinates equal to 1 clamp to the last cube."""
    x = np.asarray(x, dtype=float).ravel()
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"point {x} outside [0,1]^d")
    idx = np.minimum(np.floor(x * 2**k).astype(int), 2**k - 1)
    return DyadicCube(k=k, idx=tuple(int(i) for i in idx))


def _cell_index(x: np.ndarray, k: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat lex cube index and local coordinates for an (m, d) point array."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("point outside [0,1]^d")
    idx = np.minimum(np.floor(x * 2**k).astype(int), 2**k - 1)
    local = x * 2**k - idx
    flat = np.zeros(len(x), dtype=np.int64)
    for j in range(d):
        flat = flat * 2**k + idx[:, j]
    return flat, local


@dataclass(frozen=True)
class PiecewisePoly:
    """One local polynomial per level-k cube, in that cube's orthonormal basis.

    ``coeffs`` has shape (2^(kd), rho) with cubes in lexicographic index
    order.  Evaluation uses the half-open convention, with points on the
    closure faces clamped into the last cube.
    """

    k: int
    basis: OrthonormalLocalBasis
    coeffs: np.ndarray
    step0_zero: bool = False

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def r(self) -> int:
        return self.basis.r

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        flat, local = _cell_index(x, self.k, self.d)
        design = self.basis.eval_ref(local)
        return np.einsum("ij,ij->i", design, self.coeffs[flat])

    def cell(self, cube: DyadicCube) -> np.ndarray:
        """Coefficient vector of the polynomial on one cube."""
        flat = 0
        for i in cube.idx:
            flat = flat * 2**self.k + i
        return self.coeffs[flat]


def eval_pwp(S: PiecewisePoly, x: np.ndarray) -> np.ndarray:
    """Evaluate a piecewise polynomial at points in [0,1]^d."""
    return S(x)


@dataclass(frozen=True)
class CoefficientVector:
    """Level-k multiscale coefficients, shape (2^(kd), rho), cube-lex order."""

    k: int
    d: int
    r: int
    data: np.ndarray
    frac_zeroed: float = 0.0

    @property
    def rho(self) -> int:
        return dim_poly(self.r, self.d)

    @property
    def length(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        """Canonical (cube lex index, j) flattening."""
        return self.data.reshape(-1)

    def to_bytes(self) -> bytes:
        header = struct.pack("<4q", self.k, self.d, self.r, self.rho)
        return header + self.flat().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CoefficientVector":
        k, d, r, rho = struct.unpack("<4q", blob[:32])
        if rho != dim_poly(r, d):
            raise ValueError("header rho inconsistent with (r, d)")
        data = np.frombuffer(blob[32:], dtype="<f8").reshape(2 ** (k * d), rho).copy()
        return cls(k=k, d=d, r=r, data=data)

    def to_json(self) -> str:
        return json.dumps(
            {"k": self.k, "d": self.d, "r": self.r, "rho": self.rho,
             "entries": self.flat().tolist()}
        )


@lru_cache(maxsize=None)
def _transfer_matrices(r: int, d: int, n_child: int) -> np.ndarray:
    """Re-expansion of a parent-basis polynomial onto each child's basis.

    Child cubes have N = n_child sites per axis, parents 2*n_child.  The
    parent polynomial is evaluated at the child's sites (in parent-local
    coordinates) and projected; exact since it lies in P_r on the child.
    Returns shape (2^d, rho, rho) indexed by the child's offset in its
    parent, lexicographic.
    """
    child = orthonormal_basis(r, d, n_child)
    parent = orthonormal_basis(r, d, 2 * n_child)
    sites = reference_sites(n_child, d)
    mats = []
    for offset in itertools.product((0, 1), repeat=d):
        in_parent = (np.array(offset, dtype=float) + sites) / 2.0
        vals = parent.eval_ref(in_parent)  # (N^d, rho) parent basis values
        mats.append(child.site_values.T @ vals / n_child**d)
    return np.stack(mats)


def _child_offset_index(k: int, d: int) -> np.ndarray:
    """For each level-k cube (lex order), its offset index within its parent."""
    idx = np.array(list(itertools.product(range(2**k), repeat=d)), dtype=int)
    off = idx % 2
    flat = np.zeros(len(idx), dtype=int)
    for j in range(d):
        flat = flat * 2 + off[:, j]
    return flat


def _parent_index(k: int, d: int) -> np.ndarray:
    """For each level-k cube (lex order), the lex index of its parent."""
    idx = np.array(list(itertools.product(range(2**k), repeat=d)), dtype=int)
    par = idx // 2
    flat = np.zeros(len(idx), dtype=np.int64)
    for j in range(d):
        flat = flat * 2 ** (k - 1) + par[:, j]
    return flat


def refine_coeffs(coarse: np.ndarray, k: int, d: int, r: int, n_child: int) -> np.ndarray:
    """Re-expand level-(k-1) cell coefficients on the level-k partition.

    ``coarse`` has shape (2^((k-1)d), rho) in the basis with 2*n_child sites
    per axis; the result has shape (2^(kd), rho) in the n_child basis.
    """
    mats = _transfer_matrices(r, d, n_child)
    off = _child_offset_index(k, d)
    par = _parent_index(k, d)
    return np.einsum("cij,cj->ci", mats[off], coarse[par])


def project_level(obs: ObservationSet, k: int, r: int) -> PiecewisePoly:
    """Least-squares fit of the observations on every level-k cube."""
    n, d = obs.grid.n, obs.grid.d
    if k < 0:
        raise ValueError("level must be >= 0")
    if k > n - r:
        raise LevelTooDeepError(f"level {k} > n - r = {n - r}")
    N = 2 ** (n - k)
    basis = orthonormal_basis(r, d, N)
    # Reshape the lexicographic value vector into per-cube site blocks.
    arr = np.asarray(obs.values, dtype=float).reshape((2**n,) * d)
    arr = arr.reshape(tuple(s for _ in range(d) for s in (2**k, N)))
    cube_axes = tuple(range(0, 2 * d, 2))
    site_axes = tuple(range(1, 2 * d, 2))
    blocks = arr.transpose(cube_axes + site_axes).reshape(2 ** (k * d), N**d)
    coeffs = blocks @ basis.site_values / N**d
    return PiecewisePoly(k=k, basis=basis, coeffs=coeffs)


@dataclass(frozen=True)
class MultiscaleDecomposition:
    """Coefficient vectors of the level differences, levels 0..k_max."""

    n: int
    d: int
    r: int
    levels: tuple[CoefficientVector, ...]

    @property
    def k_max(self) -> int:
        return len(self.levels) - 1

    def basis_at(self, k: int) -> OrthonormalLocalBasis:
        return orthonormal_basis(self.r, self.d, 2 ** (self.n - k))


def decompose(obs: ObservationSet, r: int) -> MultiscaleDecomposition:
    """Extract the multiscale coefficients of all level differences.

    Level 0 holds the global fit; level k >= 1 holds, per cube, the fit
    minus its parent-cube fit re-expanded in the cube's own basis (exact,
    since the parent polynomial has order r).
    """
    n, d = obs.grid.n, obs.grid.d
    if n < r + 1:
        raise LevelTooDeepError(f"need n >= r + 1 (n = {n}, r = {r})")
    k_max = n - r
    levels = []
    prev = None
    for k in range(k_max + 1):
        S_k = project_level(obs, k, r)
        nu = S_k.coeffs if prev is None else S_k.coeffs - refine_coeffs(
            prev.coeffs, k, d, r, 2 ** (n - k)
        )
        levels.append(CoefficientVector(k=k, d=d, r=r, data=nu))
        prev = S_k
    return MultiscaleDecomposition(n=n, d=d, r=r, levels=tuple(levels))


def reconstruct(decomp: MultiscaleDecomposition, up_to_level: int) -> PiecewisePoly:
    """Telescope the level differences back into the level-k projection."""
    if not 0 <= up_to_level <= decomp.k_max:
        raise ValueError(f"level {up_to_level} outside 0..{decomp.k_max}")
    n, d, r = decomp.n, decomp.d, decomp.r
    acc = decomp.levels[0].data.copy()
    for k in range(1, up_to_level + 1):
        acc = refine_coeffs(acc, k, d, r, 2 ** (n - k)) + decomp.levels[k].data
    basis = orthonormal_basis(r, d, 2 ** (n - up_to_level))
    return PiecewisePoly(k=up_to_level, basis=basis, coeffs=acc)
