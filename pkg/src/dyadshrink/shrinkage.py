"""The estimator: threshold schedule, hard thresholding, end-to-end fit.

The noise scale epsilon = (sigma^2/m)^(s/(2s+d)) fixes a switch-on level
k* below which coefficients pass untouched; above it, per-level thresholds
grow geometrically and the multiscale coefficients of the noisy fit are
hard-thresholded before reconstruction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from dyadshrink.grid import ObservationSet
from dyadshrink.multiscale import (
    CoefficientVector,
    PiecewisePoly,
    decompose,
    reconstruct,
)
from dyadshrink.polybasis import orthonormal_basis

K_STAR_INF = math.inf


class NonPrimaryRegimeWarning(UserWarning):
    """Parameters leave the regime where the rate guarantees hold."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Model-class and estimator parameters.

    ``r`` defaults to the smallest integer strictly greater than s; ``tau``
    is carried for model-class bookkeeping only and never used by the
    estimator.  ``beta`` defaults to min(d/2 + s, midpoint of its
    admissible interval), which is finite even when the interval is
    unbounded.
    """

    s: float
    p: float
    q: float
    d: int
    sigma: float
    r: int | None = None
    beta: float | None = None
    kappa: float = 1.0
    norm_scale: float = 1.0
    tau: float = math.inf

    def __post_init__(self):
        if self.s <= 0 or self.p <= 0 or self.q < 1 or self.d < 1:
            raise ValueError("need s > 0, p > 0, q >= 1, d >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.norm_scale <= 0:
            raise ValueError("norm_scale must be > 0")
        if self.s <= self.d / self.p:
            raise ValueError(
                f"compact embedding s > d/p violated (s = {self.s}, d/p = {self.d / self.p})"
            )
        if self.beta is not None:
            lo, hi = self.beta_interval()
            if hi <= lo:
                # non-primary regime: the admissible interval is empty and
                # guarantees are void anyway; only require growth above d/2
                if self.beta <= lo:
                    raise ValueError(f"beta = {self.beta} must exceed d/2 = {lo}")
            elif not lo < self.beta < hi:
                raise ValueError(f"beta = {self.beta} outside the open interval ({lo}, {hi})")

    @property
    def order(self) -> int:
        """Polynomial order: explicit r, else smallest integer > s."""
        return self.r if self.r is not None else int(math.floor(self.s)) + 1

    @property
    def p_eff(self) -> float:
        """min(p, q): a class with p > q embeds in the one with p = q."""
        return min(self.p, self.q)

    def in_primary_regime(self) -> bool:
        return self.q < self.p + 2 * self.s * self.p / self.d

    def beta_interval(self) -> tuple[float, float]:
        lo = self.d / 2.0
        if self.q > self.p_eff:
            hi = self.s * self.p_eff / (self.q - self.p_eff)
        else:
            hi = math.inf
        return lo, hi

    def beta_value(self) -> float:
        if self.beta is not None:
            return self.beta
        lo, hi = self.beta_interval()
        if hi <= lo:
            # empty interval (non-primary regime): any growth above d/2
            # defines the estimator, with guarantees documented as void
            return lo + self.s
        return min(lo + self.s, (lo + hi) / 2.0)


@dataclass(frozen=True)
class ThresholdSchedule:
    """epsilon, switch-on level k*, and the per-level thresholds 0..n-r."""

    epsilon: float
    k_star: float  # integer level, or math.inf when epsilon == 0
    lambdas: np.ndarray


def epsilon(sigma: float, m: int, s: float, d: int) -> float:
    """The noise-dominated error scale (sigma^2/m)^(s/(2s+d))."""
    if m < 1 or sigma < 0:
        raise ValueError("need m >= 1 and sigma >= 0")
    return (sigma**2 / m) ** (s / (2 * s + d))


def k_star(eps: float, s: float) -> float:
    """The positive integer with 2^(k*-1) <= eps^(-1/s) < 2^k*; inf at eps = 0."""
    if eps == 0:
        return K_STAR_INF
    if not 0 < eps < 1:
        raise ValueError(f"epsilon = {eps} outside [0, 1); apply the zero-output guard first")
    x = eps ** (-1.0 / s)
    ks = int(math.floor(math.log2(x))) + 1
    # guard against log2 rounding at exact powers of two
    while 2 ** (ks - 1) > x:
        ks -= 1
    while 2**ks <= x:
        ks += 1
    return ks


def schedule(config: EstimatorConfig, n: int) -> ThresholdSchedule:
    """Thresholds for a grid at level n: zero through k*, geometric beyond.

    Operates in rescaled units (noise sigma / norm_scale), matching the
    coefficients of the rescaled observations.
    """
    r = config.order
    if n < r + 1:
        raise ValueError(f"need n >= r + 1 (n = {n}, r = {r})")
    m = 2 ** (n * config.d)
    sig = config.sigma / config.norm_scale
    eps = epsilon(sig, m, config.s, config.d)
    ks = k_star(eps, config.s)
    k = np.arange(n - r + 1)
    if math.isinf(ks):
        lam = np.zeros_like(k, dtype=float)
    else:
        beta = config.beta_value()
        lam = np.where(
            k <= ks, 0.0, config.kappa * 2.0 ** (-ks * config.s) * 2.0 ** (beta * (k - ks))
        )
    return ThresholdSchedule(epsilon=eps, k_star=ks, lambdas=lam)


def hard_threshold(x, lam: float):
    """Keep x where |x| > lam, else 0 (elementwise on arrays)."""
    if lam < 0:
        raise ValueError("threshold must be >= 0")
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) > lam, x, 0.0)
    return float(out) if out.ndim == 0 else out


def threshold_level(nu_star: CoefficientVector, lam: float) -> CoefficientVector:
    """Entrywise hard threshold of one level's coefficients.

    The returned vector carries the fraction of entries zeroed as a
    diagnostic.
    """
    data = hard_threshold(nu_star.data, lam)
    zeroed = float(np.mean((data == 0.0) & (nu_star.data != 0.0)))
    return replace(nu_star, data=data, frac_zeroed=zeroed)


def estimate(obs: ObservationSet, config: EstimatorConfig) -> PiecewisePoly:
    """Full pipeline: rescale, decompose, threshold per level, reconstruct.

    When sigma^2 >= m * norm_scale^2 the observations carry no usable
    signal for a norm-bounded target and the zero function is returned.
    Outside the primary regime the estimator still runs, with a warning
    that the rate guarantees lapse.
    """
    if not config.in_primary_regime():
        warnings.warn(
            f"q = {config.q} >= p + 2sp/d = {config.p + 2 * config.s * config.p / config.d}; "
            "rate guarantees do not apply",
            NonPrimaryRegimeWarning,
        )
    n, d = obs.grid.n, obs.grid.d
    if d != config.d:
        raise ValueError(f"grid dimension {d} != config dimension {config.d}")
    r = config.order
    m = obs.grid.m
    M = config.norm_scale
    if config.sigma**2 >= m * M**2:
        basis = orthonormal_basis(r, d, 2**n)
        coeffs = np.zeros((1, basis.rho))
        return PiecewisePoly(k=0, basis=basis, coeffs=coeffs, step0_zero=True)
    scaled = replace(obs, values=np.asarray(obs.values, dtype=float) / M)
    decomp = decompose(scaled, r)
    sched = schedule(config, n)
    levels = tuple(
        threshold_level(nu, lam) for nu, lam in zip(decomp.levels, sched.lambdas)
    )
    hat = reconstruct(replace(decomp, levels=levels), decomp.k_max)
    return PiecewisePoly(k=hat.k, basis=hat.basis, coeffs=M * hat.coeffs)
