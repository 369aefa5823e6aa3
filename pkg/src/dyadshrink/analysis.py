"""Error measurement, smoothness diagnostics, and rate fitting."""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from dyadshrink.grid import FunctionOracle, ObservationSet, SampleGrid, build_grid, observe
from dyadshrink.multiscale import PiecewisePoly
from dyadshrink.polybasis import dim_poly, reference_design
from dyadshrink.shrinkage import EstimatorConfig, estimate

Target = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite quadrature: 2^level cells per axis, Gauss order per cell."""

    level: int = 8
    nodes: int = 5


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit on log-log pairs."""

    slope: float
    intercept: float
    r_squared: float
    pairs: tuple[tuple[float, float], ...]


@lru_cache(maxsize=None)
def _composite_rule(d: int, level: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(nodes)
    cells = 2**level
    x = (x + 1.0) / 2.0 / cells
    w = w / 2.0 / cells
    offsets = np.arange(cells) / cells
    x1 = (offsets[:, None] + x[None, :]).ravel()
    w1 = np.tile(w, cells)
    mesh = np.meshgrid(*([x1] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    wmesh = np.meshgrid(*([w1] * d), indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wmesh], axis=-1), axis=1)
    return pts, wts


def _as_callable(g) -> Target:
    if isinstance(g, (PiecewisePoly, FunctionOracle)):
        return g
    if callable(g):
        return lambda x: np.asarray(g(np.atleast_2d(x)), dtype=float).reshape(len(np.atleast_2d(x)))
    raise TypeError(f"cannot evaluate object of type {type(g)!r}")


def lq_distance(f, g, q: float, spec: QuadratureSpec = QuadratureSpec(), d: int = 1) -> float:
    """||f - g||_{L_q} on the unit cube by composite Gauss quadrature.

    q = inf uses a dense-grid max at the spec's resolution, endpoints
    included.
    """
    if q < 1:
        raise ValueError("need q >= 1")
    fe, ge = _as_callable(f), _as_callable(g)
    if np.isinf(q):
        per_axis = 2**spec.level * spec.nodes + 1
        axis = np.linspace(0.0, 1.0, per_axis)
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        pts = np.stack([g_.ravel() for g_ in mesh], axis=-1)
        return float(np.max(np.abs(fe(pts) - ge(pts))))
    pts, wts = _composite_rule(d, spec.level, spec.nodes)
    return float((wts @ np.abs(fe(pts) - ge(pts)) ** q) ** (1.0 / q))


def r_th_difference(f, x: np.ndarray, h: np.ndarray, r: int) -> float:
    """The r-th finite difference of f at x with step h.

    Requires the whole segment [x, x + r h] to stay in the closed cube.
    """
    fe = _as_callable(f)
    x = np.asarray(x, dtype=float).ravel()
    h = np.asarray(h, dtype=float).ravel()
    if np.any(x < 0) or np.any(x > 1) or np.any(x + r * h < 0) or np.any(x + r * h > 1):
        raise ValueError("segment [x, x + r h] leaves the unit cube")
    pts = x[None, :] + np.arange(r + 1)[:, None] * h[None, :]
    signs = (-1.0) ** r * (-1.0) ** np.arange(r + 1) * [math.comb(r, k) for k in range(r + 1)]
    return float(signs @ fe(pts))


def _diff_lp_norm(fe: Target, h: np.ndarray, r: int, p: float, d: int, n_x: int) -> float:
    """L_p norm of the r-th difference over the admissible slab, by sampling."""
    lo = np.maximum(0.0, -r * h)
    hi = np.minimum(1.0, 1.0 - r * h)
    if np.any(hi <= lo):
        return 0.0
    axes = [np.linspace(a, b, n_x) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    signs = (-1.0) ** r * (-1.0) ** np.arange(r + 1) * [math.comb(r, k) for k in range(r + 1)]
    vals = sum(s * fe(pts + k * h[None, :]) for k, s in enumerate(signs))
    if np.isinf(p):
        return float(np.max(np.abs(vals)))
    vol = float(np.prod(hi - lo))
    return float((vol * np.mean(np.abs(vals) ** p)) ** (1.0 / p))


def modulus(f, r: int, t: float, p: float, budget: int = 2048, seed: int = 0) -> float:
    """Lower estimate of the order-r modulus of smoothness at scale t.

    The sup over |h| <= t is approximated on a grid of directions and
    lengths within the sampling budget; x-integration uses a uniform grid.
    """
    if t <= 0:
        raise ValueError("need t > 0")
    fe = _as_callable(f)
    d = getattr(f, "d", 1)
    rng = np.random.Generator(np.random.Philox(key=seed))
    n_h = max(4, int(math.sqrt(budget)))
    n_x = max(8, budget // n_h)
    lengths = t * (np.arange(1, n_h + 1) / n_h)
    best = 0.0
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        dirs = rng.standard_normal((n_h, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for u in dirs:
        for ell in lengths:
            best = max(best, _diff_lp_norm(fe, ell * u, r, p, d, n_x))
    return best


def _best_cell_fit_error(vals: np.ndarray, design: np.ndarray, w: np.ndarray, p: float) -> float:
    """Error of the best L_p polynomial fit on one cell's quadrature grid.

    p = 2 is a weighted least-squares solve; other p run iteratively
    reweighted least squares (Lawson for p = inf), tolerance 1e-8.
    """
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], vals * sw, rcond=None)
    res = vals - design @ coef
    if p == 2:
        return float((w @ res**2) ** 0.5)
    weights = w.copy()
    prev = math.inf
    for _ in range(200):
        sw = np.sqrt(weights)
        coef, *_ = np.linalg.lstsq(design * sw[:, None], vals * sw, rcond=None)
        res = vals - design @ coef
        a = np.abs(res)
        if np.isinf(p):
            err = float(np.max(a))
            weights = weights * (a + 1e-30)
            weights = weights / weights.sum()
        else:
            err = float((w @ a**p) ** (1.0 / p))
            weights = w * np.minimum(a ** (p - 2.0), 1e12) if p < 2 else w * a ** (p - 2.0)
            weights = weights / max(weights.sum(), 1e-300)
        if abs(err - prev) <= 1e-8 * max(err, 1e-30):
            break
        prev = err
    return err


def dist_to_pwp(f, k: int, r: int, p: float, d: int = 1, nodes: int = 8) -> float:
    """Distance from f to order-r piecewise polynomials on the level-k partition."""
    fe = _as_callable(f)
    x, w = leggauss(nodes)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    ref_pts = np.stack([g.ravel() for g in mesh], axis=-1)
    wmesh = np.meshgrid(*([w] * d), indexing="ij")
    ref_w = np.prod(np.stack([g.ravel() for g in wmesh], axis=-1), axis=1)
    design = reference_design(r, d, ref_pts)
    side = 2.0**-k
    total = 0.0 if not np.isinf(p) else -math.inf
    for idx in itertools.product(range(2**k), repeat=d):
        corner = np.array(idx, dtype=float) * side
        vals = fe(corner[None, :] + side * ref_pts)
        err = _best_cell_fit_error(vals, design, ref_w, p)
        if np.isinf(p):
            total = max(total, err)
        else:
            total += side**d * err**p
    return total if np.isinf(p) else float(total ** (1.0 / p))


def besov_seminorm_pwp(f, s: float, p: float, r: int, k_max: int, nodes: int = 8) -> float:
    """max_k 2^(ks) dist(f, level-k piecewise polynomials)_p, k <= k_max."""
    if r <= s:
        raise ValueError("need polynomial order r > s")
    if k_max < 2:
        raise ValueError("need k_max >= 2")
    d = getattr(f, "d", 1)
    return max(2.0 ** (k * s) * dist_to_pwp(f, k, r, p, d, nodes) for k in range(k_max + 1))


def rate_fit(pairs: Sequence[tuple[float, float]]) -> RateFit:
    """Ordinary least squares on (log x, log y)."""
    pairs = [(float(x), float(y)) for x, y in pairs]
    if len(pairs) < 3:
        raise ValueError("need at least 3 pairs")
    if any(x <= 0 or y <= 0 for x, y in pairs):
        raise ValueError("all pairs must be positive")
    lx = np.log([x for x, _ in pairs])
    ly = np.log([y for _, y in pairs])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept), r_squared=r2, pairs=tuple(pairs))


def trial_seed(base_seed: int, setting_index: int, trial: int) -> int:
    """Derived 64-bit seed for one (setting, trial) cell; documented scheme."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(setting_index, trial))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def risk_curve(
    config: EstimatorConfig,
    oracle: FunctionOracle,
    n_list: Sequence[int] | None = None,
    sigma_list: Sequence[float] | None = None,
    trials: int = 1,
    seed: int = 0,
    n_fixed: int | None = None,
    quad: QuadratureSpec | None = None,
    threads: int = 1,
) -> list[dict]:
    """Mean/std of the L_q estimation error over independent trials.

    Sweeps either the grid level (``n_list``) at the config's sigma, or the
    noise level (``sigma_list``) at fixed ``n_fixed``.  Rows carry the
    per-trial errors, runtimes and derived seeds for replay.  Trials may run
    on a thread pool; output ordering is canonical regardless.
    """
    if trials < 1:
        raise ValueError("need trials >= 1")
    if (n_list is None) == (sigma_list is None):
        raise ValueError("exactly one of n_list and sigma_list must be given")
    settings = (
        [(n, config.sigma) for n in n_list]
        if n_list is not None
        else [(n_fixed, s) for s in sigma_list]
    )
    for n, _ in settings:
        if n is None:
            raise ValueError("sigma sweep requires n_fixed")

    def one_trial(job):
        si, t = job
        n, sigma = settings[si]
        cfg = replace(config, sigma=sigma)
        g = build_grid(n, cfg.d)
        qspec = quad if quad is not None else QuadratureSpec(level=min(n + 2, 12), nodes=5)
        ts = trial_seed(seed, si, t)
        t0 = time.perf_counter()
        obs = observe(oracle, g, sigma, seed=ts)
        fhat = estimate(obs, cfg)
        err = lq_distance(oracle, fhat, cfg.q, qspec, d=cfg.d)
        ms = 1000.0 * (time.perf_counter() - t0)
        return si, t, ts, err, ms

    jobs = [(si, t) for si in range(len(settings)) for t in range(trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_trial, jobs))
    else:
        results = [one_trial(j) for j in jobs]
    results.sort(key=lambda r: (r[0], r[1]))

    rows = []
    for si, (n, sigma) in enumerate(settings):
        cell = [r for r in results if r[0] == si]
        errors = np.array([r[3] for r in cell])
        rows.append(
            {
                "n": n,
                "m": build_grid(n, config.d).m,
                "sigma": sigma,
                "mean_error": float(errors.mean()),
                "std_error": float(errors.std(ddof=1)) if trials > 1 else 0.0,
                "trials": trials,
                "errors": errors.tolist(),
                "seeds": [r[2] for r in cell],
                "runtimes_ms": [r[4] for r in cell],
            }
        )
    return rows
