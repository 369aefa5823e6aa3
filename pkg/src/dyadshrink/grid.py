"""Dyadic tensor-product sample grids and the noisy observation model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

# Hard cap on grid size; 2**26 points is already ~0.5 GiB of coordinates.
MAX_POINTS = 2**26

NOISE_KINDS = ("gaussian", "uniform-bounded", "rademacher-scaled")


class CapacityError(ValueError):
    """Requested grid exceeds the configured point limit."""


@dataclass(frozen=True)
class SampleGrid:
    """The grid {0, 2^-n, ..., 1 - 2^-n}^d of m = 2^(n d) sample sites."""

    n: int
    d: int

    @property
    def m(self) -> int:
        return 2 ** (self.n * self.d)

    @property
    def points(self) -> np.ndarray:
        """All sites as an (m, d) array, lexicographic (first axis slowest)."""
        axis = np.arange(2**self.n) / 2**self.n
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)


@dataclass(frozen=True)
class FunctionOracle:
    """A deterministic target function on the closed unit cube.

    ``evaluator`` maps an (m, d) array of points to an (m,) array of values.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    descriptor: str = ""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.evaluator(x), dtype=float).reshape(x.shape[0])


@dataclass(frozen=True)
class ObservationSet:
    """Noisy values at the sites of ``grid``, in grid point order."""

    grid: SampleGrid
    values: np.ndarray
    sigma: float
    noise_kind: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if len(self.values) != self.grid.m:
            raise ValueError(f"expected {self.grid.m} values, got {len(self.values)}")


def build_grid(n: int, d: int, max_points: int = MAX_POINTS) -> SampleGrid:
    """Build the dyadic grid at refinement level n in dimension d."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if 2 ** (n * d) > max_points:
        raise CapacityError(f"2^({n}*{d}) points exceeds limit {max_points}")
    return SampleGrid(n=n, d=d)


def _unit_noise(kind: str, m: int, seed: int) -> np.ndarray:
    """Unit-scale noise stream, a pure function of (seed, index).

    One uniform double is consumed per index from a Philox stream keyed by
    ``seed``, so index i's draw can be regenerated in isolation by advancing
    the counter; serial and blockwise-parallel generation agree exactly.
    """
    u = np.random.Generator(np.random.Philox(key=seed)).random(m)
    if kind == "gaussian":
        # clip away exact 0/1 to keep the inverse CDF finite
        return ndtri(np.clip(u, 1e-16, 1 - 1e-16))
    if kind == "uniform-bounded":
        return np.sqrt(3.0) * (2.0 * u - 1.0)
    if kind == "rademacher-scaled":
        return np.where(u < 0.5, -1.0, 1.0)
    raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")


def observe(
    oracle: FunctionOracle,
    grid: SampleGrid,
    sigma: float,
    noise_kind: str = "gaussian",
    seed: int = 0,
) -> ObservationSet:
    """Sample ``oracle`` on ``grid`` and add independent mean-zero noise.

    All three noise kinds have variance sigma^2 (and sub-Gaussian proxy
    sigma^2); sigma == 0 returns the exact sample values.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    values = oracle(grid.points)
    if sigma > 0:
        values = values + sigma * _unit_noise(noise_kind, grid.m, seed)
    return ObservationSet(grid=grid, values=values, sigma=sigma, noise_kind=noise_kind, seed=seed)
