"""Synthetic targets, lower-bound fixtures, and tail-bound validators.

Targets carry a declared smoothness so the diagnostics in ``analysis`` can
cross-check them.  The fixtures witness the two lower-bound mechanisms:
pairs of functions agreeing at every sample site, and sign-packed bump
families separated in L_q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad as scipy_quad
from scipy.special import ndtr, ndtri

from dyadshrink.grid import FunctionOracle, SampleGrid
from dyadshrink.shrinkage import hard_threshold


# ---------------------------------------------------------------------------
# target functions


def mollifier(x: np.ndarray) -> np.ndarray:
    """Smooth compactly supported bump on the unit cell, 1 at the center.

    Product over axes of exp(1 - 1/(1 - (2u-1)^2)) on the open cell, 0
    outside; all derivatives vanish on the boundary.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = 2.0 * x - 1.0
    inside = np.abs(t) < 1.0
    out = np.zeros_like(t)
    tt = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - tt**2))
    return out.prod(axis=1)


def mollifier_lq_norm(q: float, d: int = 1) -> float:
    """||mollifier||_{L_q} on a unit cell (numerical quadrature)."""
    if np.isinf(q):
        return 1.0
    val = scipy_quad(
        lambda u: math.exp(q * (1.0 - 1.0 / (1.0 - (2 * u - 1) ** 2))) if 0 < u < 1 else 0.0,
        0.0,
        1.0,
    )[0]
    return (val**d) ** (1.0 / q)


def _with_attrs(oracle: FunctionOracle, **attrs) -> FunctionOracle:
    for k, v in attrs.items():
        object.__setattr__(oracle, k, v)
    return oracle


def smooth_bump_oracle(d: int = 1) -> FunctionOracle:
    """Infinitely smooth bump filling the unit cube."""
    f = FunctionOracle(evaluator=mollifier, descriptor=f"smooth mollifier bump, d={d}")
    return _with_attrs(f, d=d, smoothness=math.inf)


def algebraic_bump_oracle(s: float, p: float, d: int = 1, center: float = 1.0 / 3.0) -> FunctionOracle:
    """Target of smoothness exactly s when measured in L_p.

    An algebraic peak 1 - |x_1 - c|^(s - 1/p); the kink exponent a gives
    membership at s = a + 1/p and failure at any larger index, so
    estimation-rate slopes driven by s are visible rather than saturating
    at the polynomial order.  No smooth window is applied: a C-infinity
    envelope would contribute its own faster-decaying error component and
    bias the measured slope at coarse levels.
    """
    a = s - 1.0 / p
    if a <= 0:
        raise ValueError("need s > 1/p for a bounded kink target")

    def ev(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return 1.0 - np.abs(x[:, 0] - center) ** a

    f = FunctionOracle(evaluator=ev, descriptor=f"algebraic kink bump, s={s}, p={p}, d={d}")
    return _with_attrs(f, d=d, smoothness=s, smoothness_p=p)


def polynomial_oracle(coeffs: Sequence[float], d: int = 1) -> FunctionOracle:
    """Polynomial in the first coordinate, sum_j coeffs[j] x_1^j."""
    c = np.asarray(coeffs, dtype=float)

    def ev(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return sum(cj * x[:, 0] ** j for j, cj in enumerate(c))

    f = FunctionOracle(evaluator=ev, descriptor=f"polynomial deg {len(c) - 1}, d={d}")
    return _with_attrs(f, d=d, smoothness=math.inf)


def zero_oracle(d: int = 1) -> FunctionOracle:
    f = FunctionOracle(
        evaluator=lambda x: np.zeros(len(np.atleast_2d(x))), descriptor=f"zero, d={d}"
    )
    return _with_attrs(f, d=d, smoothness=math.inf)


# ---------------------------------------------------------------------------
# packing family


class PackingBudgetError(RuntimeError):
    """Greedy packing could not place at least two vectors."""


def packing_signs(
    P: int, target_distance: int, budget: int = 100_000, seed: int = 0
) -> list[np.ndarray]:
    """Greedy random packing of {+-1}^P at pairwise Hamming distance >= target.

    Draws random sign vectors and keeps each one whose distance to all kept
    vectors meets the target, until the draw budget runs out.  The returned
    set's minimum distance is re-certified by a full pairwise scan.
    """
    if P < 4:
        raise ValueError("need P >= 4")
    if target_distance > P // 2:
        raise ValueError("target distance above P/2 is infeasible for random packing")
    rng = np.random.Generator(np.random.Philox(key=seed))
    arr = np.empty((0, P), dtype=np.int64)
    batch = 1024
    drawn = 0
    while drawn < budget:
        b = min(batch, budget - drawn)
        draws = rng.integers(0, 2, size=(b, P)) * 2 - 1
        drawn += b
        for v in draws:
            if arr.shape[0] == 0 or int(np.sum(arr != v, axis=1).min()) >= target_distance:
                arr = np.vstack([arr, v[None, :]])
    kept = list(arr)
    if len(kept) < 2:
        raise PackingBudgetError(f"budget {budget} exhausted with {len(kept)} vectors")
    assert min_pairwise_hamming(kept) >= target_distance
    return kept


def min_pairwise_hamming(vectors: Sequence[np.ndarray]) -> int:
    arr = np.stack(vectors)
    n = len(arr)
    best = arr.shape[1]
    for i in range(n):
        dists = np.sum(arr[i + 1 :] != arr[i], axis=1)
        if len(dists):
            best = min(best, int(dists.min()))
    return best


@dataclass
class PackingFamily:
    """Sign-packed bump family on an n^d uniform partition."""

    n_cells: int
    d: int
    s: float
    gamma: float
    signs: list[np.ndarray]
    min_distance: int
    members: list[FunctionOracle]
    min_lq_separation: float
    q: float

    @property
    def P(self) -> int:
        return self.n_cells**self.d


def _cell_bumps_evaluator(signs: np.ndarray, n_cells: int, d: int, amplitude: float):
    signs = np.asarray(signs, dtype=float)

    def ev(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cell_idx = np.minimum(np.floor(x * n_cells).astype(int), n_cells - 1)
        flat = np.zeros(len(x), dtype=int)
        for j in range(d):
            flat = flat * n_cells + cell_idx[:, j]
        local = x * n_cells - cell_idx
        return amplitude * signs[flat] * mollifier(local)

    return ev


def build_packing_family(
    n_cells: int, s: float, gamma: float, d: int = 1, q: float = 2.0, seed: int = 0,
    budget: int = 100_000,
) -> PackingFamily:
    """Bumps of height gamma n^-s on every cell, signed by a greedy packing.

    Any two members differ on at least P/4 cells, so their L_q distance is
    at least (P/4 / P)^(1/q) * 2 * amplitude * ||mollifier||_q per cell
    scaling; the measured minimum separation is recorded.
    """
    if gamma <= 0:
        raise ValueError("need gamma > 0")
    P = n_cells**d
    target = max(1, P // 4)
    signs = packing_signs(P, target, budget=budget, seed=seed)
    amplitude = gamma * float(n_cells) ** (-s)
    members = [
        _with_attrs(
            FunctionOracle(
                evaluator=_cell_bumps_evaluator(sv, n_cells, d, amplitude),
                descriptor=f"packed bumps {i}, n={n_cells}, s={s}, gamma={gamma}",
            ),
            d=d,
            smoothness=s,
        )
        for i, sv in enumerate(signs)
    ]
    # exact per-cell integral: flipped cells contribute (2 amplitude)^q |moll|_q^q n^-d
    moll_q = mollifier_lq_norm(q, d)
    mind = min_pairwise_hamming(signs)
    min_sep = (mind / P) ** (1.0 / q) * 2.0 * amplitude * moll_q
    return PackingFamily(
        n_cells=n_cells, d=d, s=s, gamma=gamma, signs=signs, min_distance=mind,
        members=members, min_lq_separation=min_sep, q=q,
    )


def calibrate_gamma(
    family: PackingFamily,
    r: int,
    p: float,
    k_max: int = 6,
    target: float = 0.5,
    max_members: int = 3,
    iters: int = 20,
) -> float:
    """Bisect gamma so the members' smoothness-seminorm estimate is <= target.

    The default target 0.5 leaves a 2x safety factor under the unit ball.
    The seminorm scales linearly in the amplitude, so bisection converges
    fast; a few members suffice since all share the same amplitude profile.
    """
    from dyadshrink.analysis import besov_seminorm_pwp

    def max_semi(gamma: float) -> float:
        amp = gamma * float(family.n_cells) ** (-family.s)
        worst = 0.0
        for sv in family.signs[:max_members]:
            f = FunctionOracle(
                evaluator=_cell_bumps_evaluator(np.asarray(sv, dtype=float),
                                                family.n_cells, family.d, amp),
                descriptor="calibration member",
            )
            worst = max(worst, besov_seminorm_pwp(f, family.s, p, r, k_max))
        return worst

    lo, hi = 0.0, 1.0
    while max_semi(hi) <= target:
        lo, hi = hi, 2.0 * hi
        if hi > 2.0**20:
            return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if max_semi(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# fooling pair


@dataclass
class FoolingPair:
    """Two targets agreeing exactly at every grid site, separated in L_q."""

    f: FunctionOracle
    g: FunctionOracle
    grid: SampleGrid
    separation_lq: float
    rate_value: float  # m^(-s/d + (1/p - 1/q)_+)

    @property
    def separation_ratio(self) -> float:
        return self.separation_lq / self.rate_value


def fooling_pair(
    grid: SampleGrid, s: float, p: float, q: float, d: int | None = None, gamma: float = 1.0
) -> FoolingPair:
    """Build +g0 and -g0 with g0 a grid-cell bump sum vanishing on the grid.

    Bumps sit strictly inside the half-open grid cells, whose corners are
    the sample sites, so both members evaluate to exactly zero there.  For
    p >= q a bump in every cell realizes the dense rate m^(-s/d); for
    p < q a single bump with larger amplitude realizes the sparse rate
    m^(-s/d + 1/p - 1/q).
    """
    d = grid.d if d is None else d
    n_cells = 2**grid.n
    m = grid.m
    P = n_cells**d
    if p >= q:
        amplitude = gamma * float(n_cells) ** (-s)
        signs = np.ones(P)
        sep = 2.0 * amplitude * mollifier_lq_norm(q, d)
    else:
        amplitude = gamma * float(n_cells) ** (-(s - d / p))
        signs = np.zeros(P)
        signs[0] = 1.0
        sep = 2.0 * amplitude * float(n_cells) ** (-d / q) * mollifier_lq_norm(q, d)
    ev = _cell_bumps_evaluator(signs, n_cells, d, amplitude)
    f = _with_attrs(
        FunctionOracle(evaluator=ev, descriptor=f"fooling +bump sum, n={grid.n}"), d=d,
        smoothness=s,
    )
    g = _with_attrs(
        FunctionOracle(evaluator=lambda x: -ev(x), descriptor=f"fooling -bump sum, n={grid.n}"),
        d=d,
        smoothness=s,
    )
    rate = float(m) ** (-s / d + max(1.0 / p - 1.0 / q, 0.0))
    return FoolingPair(f=f, g=g, grid=grid, separation_lq=sep, rate_value=rate)


# ---------------------------------------------------------------------------
# thresholding validators


def weighted_lq_norm(v: np.ndarray, q: float) -> float:
    """(1/L sum |v_i|^q)^(1/q); max norm at q = inf."""
    v = np.asarray(v, dtype=float)
    if np.isinf(q):
        return float(np.max(np.abs(v))) if v.size else 0.0
    return float(np.mean(np.abs(v) ** q) ** (1.0 / q))


def check_factor3_bound(nu: np.ndarray, xi: np.ndarray, lam: float, q: float) -> bool:
    """Check the split ||nu - thresh_lam(nu+xi)||*_q <= 3(||min(|nu|,lam)||*_q + ||xi_lam||*_q).

    xi_lam zeroes the noise entries below lam/2 in magnitude; the right side
    is the deterministic and stochastic component of the thresholding error.
    """
    nu = np.asarray(nu, dtype=float)
    xi = np.asarray(xi, dtype=float)
    nu_hat = np.asarray(hard_threshold(nu + xi, lam))
    lhs = weighted_lq_norm(nu - nu_hat, q)
    xi_lam = np.where(np.abs(xi) > lam / 2.0, xi, 0.0)
    rhs = 3.0 * (weighted_lq_norm(np.minimum(np.abs(nu), lam), q) + weighted_lq_norm(xi_lam, q))
    return lhs <= rhs + 1e-12 * max(1.0, rhs)


def check_pointwise_thresh(x, eps, lam) -> np.ndarray:
    """Elementwise check |thresh_lam(x+eps) - x| <= 3(min(|x|,lam) + |thresh_{lam/2}(eps)|)."""
    x = np.asarray(x, dtype=float)
    eps_ = np.asarray(eps, dtype=float)
    lam = np.asarray(lam, dtype=float)
    v = x + eps_
    lhs = np.abs(np.where(np.abs(v) > lam, v, 0.0) - x)
    rhs = 3.0 * (np.minimum(np.abs(x), lam) + np.abs(np.where(np.abs(eps_) > lam / 2, eps_, 0.0)))
    return lhs <= rhs + 1e-12 * np.maximum(1.0, rhs)


def mc_tail(
    lam: float,
    sigma_tilde: float,
    L: int,
    q: float,
    T_grid: Sequence[float],
    trials: int,
    seed: int = 0,
    batch: int = 2048,
) -> list[tuple[float, float]]:
    """Empirical exceedance of the weighted norm of thresholded Gaussian noise.

    Each trial draws L iid N(0, sigma_tilde^2) entries, zeroes those below
    lam/2 in magnitude, and evaluates (1/L sum |.|^q)^(1/q); the table
    reports the exceedance frequency at each T.
    """
    if trials < 10**3:
        raise ValueError("need at least 10^3 trials")
    T_grid = np.asarray(T_grid, dtype=float)
    rng = np.random.Generator(np.random.Philox(key=seed))
    counts = np.zeros(len(T_grid), dtype=np.int64)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        if sigma_tilde == 0:
            norms = np.zeros(b)
        else:
            xi = sigma_tilde * rng.standard_normal((b, L))
            xi[np.abs(xi) < lam / 2.0] = 0.0
            norms = (np.mean(np.abs(xi) ** q, axis=1)) ** (1.0 / q)
        counts += (norms[:, None] >= T_grid[None, :]).sum(axis=0)
        done += b
    return [(float(T), float(c) / trials) for T, c in zip(T_grid, counts)]


def tail_envelope(T: float, lam: float, sigma_tilde: float, q: float, C_env: float) -> float:
    """Analytic envelope C T^-q sigma~^q exp(-b^2 / (4 sigma~^2)), b = max(lam/2, 2^(-1/q) T)."""
    if T <= 0 or sigma_tilde <= 0:
        raise ValueError("need T > 0 and sigma_tilde > 0")
    b = max(lam / 2.0, 2.0 ** (-1.0 / q) * T)
    return C_env * T**-q * sigma_tilde**q * math.exp(-(b**2) / (4.0 * sigma_tilde**2))


def gaussian_shift_mass(
    y_norm: float, sigma: float, alpha_bar: float, m_dim: int = 1
) -> tuple[float, bool]:
    """Mass of the extremal small set under a mean-shifted Gaussian.

    The set is the halfspace of standard mass alpha_bar facing away from
    the shift direction, which maximizes the shifted mass among measurable
    sets of that standard mass; returns (mass, mass < 1/2).
    """
    if not 0 < alpha_bar < 0.2:
        raise ValueError("need 0 < alpha_bar < 1/5")
    if y_norm**2 >= -(sigma**2) * math.log(5.0 * alpha_bar):
        raise ValueError("shift too large for the admissible region")
    threshold = ndtri(alpha_bar)  # halfspace z_1 <= sigma * threshold
    mass = float(ndtr(threshold - y_norm / sigma))
    return mass, mass < 0.5


def quadrature_lemma_checks(
    q_list: Sequence[float] = (1.0, 2.0, 4.0),
    a_grid: Sequence[float] = tuple(np.linspace(0.0, 20.0, 41)),
    bc_grid: Sequence[tuple[float, float]] = ((2.0, 1.0), (1.0, 1.0), (3.0, 2.0)),
    tau_grid: Sequence[float] = tuple(np.linspace(1.0, 100.0, 34)),
    c: float = 1.0,
) -> dict:
    """Numeric checks of the two tail-sum estimates used in the analysis.

    (i) I(a, q) = int_a^inf x^q e^(-x^2/2) dx: I * e^(a^2/4) stays bounded
    on the a-grid and is nonincreasing once a >= 2 sqrt(q).
    (ii) sum_k 2^(a k) e^(-c 2^(b k) tau) <= C e^(-c tau): the ratio to
    e^(-c tau) has a finite supremum over the tau-grid.
    """
    report: dict = {"integral": {}, "series": {}, "ok": True}
    for q in q_list:
        vals = []
        for a in a_grid:
            val, err = scipy_quad(lambda x: x**q * math.exp(-(x**2) / 2.0), a, np.inf)
            if err > max(1e-6 * val, 5e-8):
                raise RuntimeError(f"quadrature did not converge at a={a}, q={q}")
            vals.append(val * math.exp(a**2 / 4.0))
        vals = np.array(vals)
        bound = float(vals.max())
        tail_region = np.asarray(a_grid) >= 2.0 * math.sqrt(q)
        tail_vals = vals[tail_region]
        monotone = bool(np.all(np.diff(tail_vals) <= 1e-12 * np.maximum(tail_vals[:-1], 1e-30)))
        ok = np.isfinite(bound) and monotone
        report["integral"][q] = {"sup_scaled": bound, "tail_monotone": monotone, "ok": ok}
        report["ok"] &= ok
    for a, b in bc_grid:
        ratios = []
        for tau in tau_grid:
            k = np.arange(0, 200)
            terms = 2.0 ** (a * k) * np.exp(-c * 2.0 ** (b * k) * tau)
            ratios.append(float(terms.sum() / math.exp(-c * tau)))
        C_measured = float(max(ratios))
        ok = math.isfinite(C_measured)
        report["series"][(a, b)] = {"C_measured": C_measured, "ok": ok}
        report["ok"] &= ok
    return report
