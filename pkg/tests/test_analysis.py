import numpy as np
import pytest

from dyadshrink.analysis import (
    QuadratureSpec,
    besov_seminorm_pwp,
    dist_to_pwp,
    lq_distance,
    modulus,
    r_th_difference,
    rate_fit,
    risk_curve,
    trial_seed,
)
from dyadshrink.grid import FunctionOracle, build_grid
from dyadshrink.oracles import algebraic_bump_oracle, polynomial_oracle, zero_oracle
from dyadshrink.shrinkage import EstimatorConfig


def f_linear():
    return FunctionOracle(evaluator=lambda x: np.atleast_2d(x)[:, 0], descriptor="x")


def test_lq_distance_zero_for_identical():
    f = polynomial_oracle([0.3, 2.0])
    assert lq_distance(f, f, 2.0) <= 1e-12
    assert lq_distance(f, f, np.inf) <= 1e-12


def test_lq_distance_hand_values():
    f, g = f_linear(), zero_oracle()
    assert lq_distance(f, g, 2.0) == pytest.approx(1.0 / np.sqrt(3.0), rel=1e-9)
    assert lq_distance(f, g, np.inf) == pytest.approx(1.0, rel=1e-6)
    assert lq_distance(f, g, 1.0) == pytest.approx(0.5, rel=1e-9)


def test_lq_distance_resolution_self_consistency():
    for f in (algebraic_bump_oracle(1.5, 2.0), algebraic_bump_oracle(2.0, 2.0)):
        a = lq_distance(f, zero_oracle(), 2.0, QuadratureSpec(level=8, nodes=5))
        b = lq_distance(f, zero_oracle(), 2.0, QuadratureSpec(level=9, nodes=5))
        assert abs(a - b) < 0.01 * abs(b)


def test_rth_difference_annihilates_polynomials():
    f = polynomial_oracle([1.0, -2.0, 0.5])
    x = np.array([0.2])
    h = np.array([0.05])
    assert abs(r_th_difference(f, x, h, 3)) <= 1e-10


def test_rth_difference_hand_values():
    f = polynomial_oracle([0.0, 1.0])  # f(x) = x
    x, h = np.array([0.3]), np.array([0.1])
    assert r_th_difference(f, x, h, 1) == pytest.approx(0.1)
    sq = polynomial_oracle([0.0, 0.0, 1.0])  # x^2
    assert r_th_difference(sq, x, h, 2) == pytest.approx(2.0 * 0.1**2)


def test_rth_difference_domain_guard():
    f = polynomial_oracle([1.0])
    with pytest.raises(ValueError):
        r_th_difference(f, np.array([0.9]), np.array([0.1]), 2)


def test_modulus_poly_zero():
    f = polynomial_oracle([1.0, 2.0])
    assert modulus(f, 2, 0.1, 2.0) <= 1e-10


def test_modulus_lipschitz_kink():
    f = FunctionOracle(
        evaluator=lambda x: np.abs(np.atleast_2d(x)[:, 0] - 1.0 / 3.0), descriptor="kink"
    )
    for t in (0.02, 0.05):
        w = modulus(f, 1, t, np.inf, budget=4096, seed=1)
        assert w == pytest.approx(t, rel=0.1)


def test_modulus_monotone_in_t():
    f = algebraic_bump_oracle(1.5, 2.0)
    vals = [modulus(f, 2, t, 2.0, budget=2048, seed=2) for t in (0.01, 0.05, 0.2)]
    assert vals[0] <= vals[1] * 1.05 and vals[1] <= vals[2] * 1.05


def test_besov_seminorm_poly_zero():
    assert besov_seminorm_pwp(polynomial_oracle([1.0, 3.0]), 1.0, np.inf, 2, 5) <= 1e-10


def test_besov_seminorm_dyadic_aligned_kink():
    f = FunctionOracle(
        evaluator=lambda x: np.abs(np.atleast_2d(x)[:, 0] - 0.5), descriptor="|x-1/2|"
    )
    # the kink lies on a dyadic cut for every level k >= 1, so the
    # per-level distances vanish there; only the level-0 cube sees it
    for k in range(1, 6):
        assert dist_to_pwp(f, k, 2, np.inf) <= 1e-9
    level0 = dist_to_pwp(f, 0, 2, np.inf)
    assert besov_seminorm_pwp(f, 1.0, np.inf, 2, 5) == pytest.approx(level0, rel=1e-6)


def test_besov_seminorm_off_dyadic_kink_stable():
    f = FunctionOracle(
        evaluator=lambda x: np.abs(np.atleast_2d(x)[:, 0] - 1.0 / 3.0), descriptor="|x-1/3|"
    )
    scaled = [2.0**k * dist_to_pwp(f, k, 2, np.inf, nodes=48) for k in range(4, 9)]
    assert min(scaled) > 0.0
    assert max(scaled) <= 1.2 * min(scaled)


def test_besov_sharpness_for_declared_smoothness():
    # finite at the declared s, divergent at s + 0.5
    f = algebraic_bump_oracle(1.5, 2.0)
    s = 1.5
    at_s = [2.0 ** (k * s) * dist_to_pwp(f, k, 2, 2.0) for k in range(2, 8)]
    above = [2.0 ** (k * (s + 0.5)) * dist_to_pwp(f, k, 2, 2.0) for k in range(2, 8)]
    assert max(at_s) <= 2.0 * at_s[0] + 1.0
    assert above[-1] > 3.0 * above[0]


def test_rate_fit_exact_power_laws():
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    fit = rate_fit(list(zip(xs, xs**2)))
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    fit2 = rate_fit(list(zip(xs, 3.0 * xs**-0.6)))
    assert fit2.slope == pytest.approx(-0.6, abs=1e-12)


def test_rate_fit_noisy_power_law():
    rng = np.random.default_rng(12)
    xs = 2.0 ** np.arange(8)
    ys = 5.0 * xs**1.7 * (1.0 + 0.1 * rng.standard_normal(8))
    assert rate_fit(list(zip(xs, ys))).slope == pytest.approx(1.7, abs=0.1)


def test_rate_fit_input_validation():
    with pytest.raises(ValueError):
        rate_fit([(1.0, 1.0), (2.0, 4.0)])
    with pytest.raises(ValueError):
        rate_fit([(1.0, 1.0), (2.0, 4.0), (3.0, -1.0)])


def test_trial_seed_distinct_and_stable():
    a = trial_seed(7, 0, 0)
    assert a == trial_seed(7, 0, 0)
    assert len({trial_seed(7, i, t) for i in range(4) for t in range(4)}) == 16


def test_risk_curve_noiseless_deterministic():
    cfg = EstimatorConfig(s=2.0, p=2.0, q=2.0, d=1, sigma=0.0)
    rows = risk_curve(cfg, algebraic_bump_oracle(2.0, 2.0), n_list=[4, 5, 6], trials=3, seed=1)
    for row in rows:
        assert row["std_error"] <= 1e-15
        assert len(set(row["errors"])) == 1


def test_risk_curve_trial_doubling_consistency():
    cfg = EstimatorConfig(s=2.0, p=2.0, q=2.0, d=1, sigma=1.0)
    kw = dict(sigma_list=[1.0], n_fixed=7, seed=5)
    r1 = risk_curve(cfg, algebraic_bump_oracle(2.0, 2.0), trials=20, **kw)[0]
    r2 = risk_curve(cfg, algebraic_bump_oracle(2.0, 2.0), trials=40, **kw)[0]
    se = r1["std_error"] / np.sqrt(r1["trials"])
    assert abs(r1["mean_error"] - r2["mean_error"]) <= 3.0 * se


def test_risk_curve_threads_match_serial():
    cfg = EstimatorConfig(s=2.0, p=2.0, q=2.0, d=1, sigma=0.5)
    kw = dict(sigma_list=[0.5, 1.0], n_fixed=6, trials=4, seed=9)
    serial = risk_curve(cfg, algebraic_bump_oracle(2.0, 2.0), threads=1, **kw)
    parallel = risk_curve(cfg, algebraic_bump_oracle(2.0, 2.0), threads=4, **kw)
    for a, b in zip(serial, parallel):
        assert a["errors"] == b["errors"]
        assert a["seeds"] == b["seeds"]


def test_risk_curve_argument_validation():
    cfg = EstimatorConfig(s=2.0, p=2.0, q=2.0, d=1, sigma=0.0)
    f = algebraic_bump_oracle(2.0, 2.0)
    with pytest.raises(ValueError):
        risk_curve(cfg, f)
    with pytest.raises(ValueError):
        risk_curve(cfg, f, n_list=[4], sigma_list=[0.1])
    with pytest.raises(ValueError):
        risk_curve(cfg, f, sigma_list=[0.1])
