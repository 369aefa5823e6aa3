"""Configuration-driven experiment runner.

Subcommands: estimate, sweep-m, sweep-sigma, validate, pack, fooling,
besov-estimate.  Exit codes: 0 success, 2 configuration error, 3 validation
suite failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from dyadshrink.analysis import (
    QuadratureSpec,
    besov_seminorm_pwp,
    lq_distance,
    rate_fit,
    risk_curve,
)
from dyadshrink.grid import FunctionOracle, build_grid, observe
from dyadshrink.multiscale import CoefficientVector
from dyadshrink.oracles import (
    algebraic_bump_oracle,
    build_packing_family,
    check_factor3_bound,
    check_pointwise_thresh,
    fooling_pair,
    gaussian_shift_mass,
    mc_tail,
    polynomial_oracle,
    quadrature_lemma_checks,
    smooth_bump_oracle,
    zero_oracle,
)
from dyadshrink.report import (
    fit_payload,
    render_rate_figure,
    run_manifest,
    sweep_csv_rows,
    write_csv,
    write_json,
    write_manifest,
)
from dyadshrink.shrinkage import EstimatorConfig, NonPrimaryRegimeWarning, estimate

THREADS_ENV = "DYADSHRINK_THREADS"


class ConfigError(ValueError):
    """Invalid or malformed experiment configuration."""


_SECTION_KEYS = {
    "problem": {"d", "s", "p", "q", "tau", "r"},
    "estimator": {"beta", "kappa", "sigma", "norm_scale"},
    "sweep": {"n_list", "sigma_list", "n_fixed", "trials", "seed"},
    "target": {"oracle", "center", "coeffs", "s", "p"},
    "output": {"directory", "formats"},
}


@dataclass
class ExperimentConfig:
    problem: dict
    estimator: dict
    sweep: dict
    target: dict
    output: dict
    regime: str = "primary"

    def snapshot(self) -> dict:
        return asdict(self)


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.replace(",", " ").split()]


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    for section in cp.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")

    def sec(name: str) -> dict:
        return dict(cp[name]) if cp.has_section(name) else {}

    problem = sec("problem")
    estimator = sec("estimator")
    sweep = sec("sweep")
    target = sec("target")
    output = sec("output")
    try:
        problem = {
            "d": int(problem.get("d", 1)),
            "s": float(problem.get("s", 2.0)),
            "p": float(problem.get("p", 2.0)),
            "q": float(problem.get("q", 2.0)),
            "tau": float(problem.get("tau", math.inf)),
            "r": int(problem["r"]) if "r" in problem else None,
        }
        estimator = {
            "beta": float(estimator["beta"]) if "beta" in estimator else None,
            "kappa": float(estimator.get("kappa", 1.0)),
            "sigma": float(estimator.get("sigma", 0.0)),
            "norm_scale": float(estimator.get("norm_scale", 1.0)),
        }
        sweep = {
            "n_list": _ints(sweep["n_list"]) if "n_list" in sweep else [],
            "sigma_list": _floats(sweep["sigma_list"]) if "sigma_list" in sweep else [],
            "n_fixed": int(sweep["n_fixed"]) if "n_fixed" in sweep else None,
            "trials": int(sweep.get("trials", 1)),
            "seed": int(sweep.get("seed", 0)),
        }
        target = {
            "oracle": target.get("oracle", "algebraic-bump"),
            "center": float(target.get("center", 1.0 / 3.0)),
            "coeffs": _floats(target["coeffs"]) if "coeffs" in target else [1.0],
            "s": float(target["s"]) if "s" in target else None,
            "p": float(target["p"]) if "p" in target else None,
        }
        output = {
            "directory": output.get("directory", "out"),
            "formats": output.get("formats", "csv json").split(),
        }
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc

    d, s, p, q = problem["d"], problem["s"], problem["p"], problem["q"]
    if s <= d / p:
        raise ConfigError(
            f"compact embedding s > d/p violated: s={s} <= d/p={d / p}"
        )
    regime = "primary" if q < p + 2.0 * s * p / d else "non-primary"
    cfg = ExperimentConfig(
        problem=problem, estimator=estimator, sweep=sweep, target=target, output=output,
        regime=regime,
    )
    if regime == "non-primary":
        print(
            f"WARNING: primary regime q < p + 2sp/d violated "
            f"(q={q} >= {p + 2.0 * s * p / d}); rate guarantees void, proceeding",
            file=sys.stderr,
        )
    return cfg


def estimator_config(cfg: ExperimentConfig, sigma: float | None = None) -> EstimatorConfig:
    pr, es = cfg.problem, cfg.estimator
    try:
        return EstimatorConfig(
            s=pr["s"], p=pr["p"], q=pr["q"], d=pr["d"],
            sigma=es["sigma"] if sigma is None else sigma,
            r=pr["r"], beta=es["beta"], kappa=es["kappa"],
            norm_scale=es["norm_scale"], tau=pr["tau"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_oracle(cfg: ExperimentConfig) -> FunctionOracle:
    t, pr = cfg.target, cfg.problem
    name = t["oracle"]
    d = pr["d"]
    if name == "smooth-bump":
        return smooth_bump_oracle(d)
    if name == "algebraic-bump":
        s = t["s"] if t["s"] is not None else pr["s"]
        p = t["p"] if t["p"] is not None else pr["p"]
        return algebraic_bump_oracle(s, p, d, center=t["center"])
    if name == "polynomial":
        return polynomial_oracle(t["coeffs"], d)
    if name == "zero":
        return zero_oracle(d)
    raise ConfigError(f"unknown target oracle '{name}'")


def _out_dir(args, cfg: ExperimentConfig | None) -> str:
    out = args.out or (cfg.output["directory"] if cfg else "out")
    os.makedirs(out, exist_ok=True)
    return out


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def _seed(args, cfg: ExperimentConfig | None) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.sweep["seed"] if cfg else 0


# ---------------------------------------------------------------------------
# subcommands


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    ecfg = estimator_config(cfg)
    n = cfg.sweep["n_fixed"] if cfg.sweep["n_fixed"] is not None else (
        cfg.sweep["n_list"][0] if cfg.sweep["n_list"] else None
    )
    if n is None:
        raise ConfigError("estimate needs sweep.n_fixed or a nonempty sweep.n_list")
    oracle = build_oracle(cfg)
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)
    g = build_grid(n, ecfg.d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonPrimaryRegimeWarning)
        obs = observe(oracle, g, ecfg.sigma, seed=seed)
        fhat = estimate(obs, ecfg)
    blob = CoefficientVector(
        k=fhat.k, d=ecfg.d, r=ecfg.order, data=fhat.coeffs.ravel().copy()
    ).to_bytes()
    bin_path = os.path.join(out, "estimate.bin")
    with open(bin_path, "wb") as fh:
        fh.write(blob)
    err = lq_distance(oracle, fhat, ecfg.q, QuadratureSpec(level=min(n + 2, 12), nodes=5),
                      d=ecfg.d)
    report = {
        "n": n,
        "m": g.m,
        "sigma": ecfg.sigma,
        "seed": seed,
        "step0_zero": bool(fhat.step0_zero),
        "flags": ["step0-zero"] if fhat.step0_zero else [],
        "lq_error": err,
        "output_level": fhat.k,
        "output_sha256": hashlib.sha256(blob).hexdigest(),
        "regime": cfg.regime,
    }
    write_json(os.path.join(out, "estimate.json"), report)
    write_manifest(out, run_manifest("estimate", cfg.snapshot()))
    print(f"estimate: n={n} m={g.m} sigma={ecfg.sigma} lq_error={err:.6e}"
          + (" [step0-zero]" if fhat.step0_zero else ""))
    return 0


def _run_sweep(args, axis: str) -> int:
    cfg = load_config(args.config)
    ecfg = estimator_config(cfg)
    oracle = build_oracle(cfg)
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)
    threads = _threads(args)
    sw = cfg.sweep
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonPrimaryRegimeWarning)
        if axis == "m":
            if len(sw["n_list"]) < 3:
                raise ConfigError("sweep-m: >=3 points required (sweep.n_list)")
            rows = risk_curve(ecfg, oracle, n_list=sw["n_list"], trials=sw["trials"],
                              seed=seed, threads=threads)
            pairs = [(row["m"], row["mean_error"]) for row in rows]
            theoretical = -ecfg.s / ecfg.d + max(1.0 / ecfg.p - 1.0 / ecfg.q, 0.0)
            xlabel, figname = "m", "sweep_m.png"
        else:
            if len(sw["sigma_list"]) < 3:
                raise ConfigError("sweep-sigma: >=3 points required (sweep.sigma_list)")
            if sw["n_fixed"] is None:
                raise ConfigError("sweep-sigma requires sweep.n_fixed")
            rows = risk_curve(ecfg, oracle, sigma_list=sw["sigma_list"], trials=sw["trials"],
                              seed=seed, n_fixed=sw["n_fixed"], threads=threads)
            m = rows[0]["m"]
            pairs = [(row["sigma"] ** 2 / m, row["mean_error"]) for row in rows]
            theoretical = ecfg.s / (2.0 * ecfg.s + ecfg.d)
            xlabel, figname = "sigma^2 / m", "sweep_sigma.png"
    positive = [pr for pr in pairs if pr[1] > 0]
    fit = rate_fit(positive)
    experiment_id = f"sweep-{axis}"
    records = sweep_csv_rows(experiment_id, ecfg, rows)
    formats = [args.format] if args.format else cfg.output["formats"]
    if "csv" in formats:
        write_csv(os.path.join(out, f"{experiment_id}.csv"), records)
    write_json(os.path.join(out, "ratefit.json"), fit_payload(fit, theoretical, axis))
    if "json" in formats:
        write_json(os.path.join(out, f"{experiment_id}.json"), {"rows": records})
    render_rate_figure(
        os.path.join(out, figname), positive, fit, theoretical, xlabel,
        f"{experiment_id}: d={ecfg.d} s={ecfg.s} p={ecfg.p} q={ecfg.q}",
    )
    write_manifest(out, run_manifest(experiment_id, cfg.snapshot(), rows))
    print(f"{experiment_id}: theoretical slope {theoretical:+.4f}, "
          f"fitted {fit.slope:+.4f} (r^2 {fit.r_squared:.4f})")
    return 0


def cmd_sweep_m(args) -> int:
    return _run_sweep(args, "m")


def cmd_sweep_sigma(args) -> int:
    return _run_sweep(args, "sigma")


# ---------------------------------------------------------------------------
# validation suites


def _suite_thresh(seed: int) -> dict:
    rng = np.random.Generator(np.random.Philox(key=seed))
    n_inst = 10**5
    fails = 0
    for _ in range(n_inst):
        L = int(rng.integers(1, 17))
        q = float(rng.uniform(1.0, 4.0))
        lam = float(rng.uniform(0.0, 3.0))
        nu = rng.standard_normal(L) * 10.0 ** rng.uniform(-2, 2)
        xi = rng.standard_normal(L) * 10.0 ** rng.uniform(-2, 2)
        if not check_factor3_bound(nu, xi, lam, q):
            fails += 1
    return {"instances": n_inst, "violations": fails, "ok": fails == 0}


def tail_slope_report(trials: int, seed: int = 0, L: int = 4096, q: float = 2.0) -> dict:
    """Slope of log-exceedance vs b^2 for the thresholded-noise norm.

    Points are restricted to the frequency window [1e-4, 1e-1].  At L this
    large the norm concentrates, so wherever lam/2 dominates b the abscissa
    is pinned and carries no slope information; the fit pools the T-driven
    points (b = T/sqrt(2) > lam/2) across all lambdas.
    """
    per_lambda: dict = {}
    pooled: list[tuple[float, float]] = []
    for lam in (0.0, 1.0, 2.0):
        pts, pinned = [], 0
        table = mc_tail(lam, 1.0, L, q, _tail_T_grid(lam), trials, seed=seed)
        for T, freq in table:
            if 1e-4 <= freq <= 1e-1:
                b = max(lam / 2.0, 2.0 ** (-1.0 / q) * T)
                if b > lam / 2.0:
                    pts.append((b * b, math.log(freq)))
                    pooled.append((b * b, math.log(freq)))
                else:
                    pinned += 1
        entry: dict = {"window_points": len(pts), "pinned_points": pinned}
        if len(pts) >= 2:
            xs = np.array([p[0] for p in pts])
            ys = np.array([p[1] for p in pts])
            entry["slope"] = float(np.polyfit(xs, ys, 1)[0])
        per_lambda[str(lam)] = entry
    xs = np.array([p[0] for p in pooled])
    ys = np.array([p[1] for p in pooled])
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(pooled) >= 2 and np.ptp(xs) > 1e-9 else None
    ok = slope is not None and slope <= -1.0 / 8.0
    return {"per_lambda": per_lambda, "pooled_slope": slope, "pooled_points": len(pooled),
            "ok": bool(ok)}


def _suite_tails(seed: int) -> dict:
    return tail_slope_report(trials=2 * 10**4, seed=seed)


def _tail_T_grid(lam: float) -> list[float]:
    # spans the [1e-4, 1e-1] exceedance window at L=4096, sigma~=1
    if lam == 0.0:
        return list(np.linspace(1.012, 1.042, 12))
    if lam == 1.0:
        return list(np.linspace(0.997, 1.031, 12))
    return list(np.linspace(0.910, 0.952, 12))


def _suite_lemmas(seed: int) -> dict:
    rng = np.random.Generator(np.random.Philox(key=seed))
    n = 10**6
    x = rng.standard_normal(n) * 10.0 ** rng.uniform(-2, 2, n)
    eps = rng.standard_normal(n) * 10.0 ** rng.uniform(-2, 2, n)
    lam = rng.uniform(0.0, 3.0, n)
    bad = int((~check_pointwise_thresh(x, eps, lam)).sum())
    qreport = quadrature_lemma_checks()
    shift_ok = True
    for alpha_bar in (0.01, 0.05, 0.1, 0.19):
        ymax = math.sqrt(-math.log(5.0 * alpha_bar))
        for y in np.linspace(0.0, 0.999 * ymax, 8):
            _, small = gaussian_shift_mass(float(y), 1.0, alpha_bar)
            shift_ok &= small
    ok = bad == 0 and qreport["ok"] and shift_ok
    return {
        "pointwise_triples": n, "pointwise_violations": bad,
        "quadrature_ok": bool(qreport["ok"]), "shift_mass_ok": bool(shift_ok), "ok": bool(ok),
    }


def _suite_packing(seed: int) -> dict:
    fam = build_packing_family(16, s=1.5, gamma=1.0, d=1, q=2.0, seed=seed)
    ok = fam.min_distance >= fam.P // 4 and len(fam.signs) >= 2 ** (fam.P // 8)
    return {
        "P": fam.P, "size": len(fam.signs), "min_distance": fam.min_distance,
        "min_lq_separation": fam.min_lq_separation, "ok": bool(ok),
    }


def _suite_fooling(seed: int) -> dict:
    results = []
    ok = True
    for n in range(3, 8):
        g = build_grid(n, 1)
        pair = fooling_pair(g, s=1.5, p=2.0, q=2.0)
        vals_f = pair.f(g.points)
        vals_g = pair.g(g.points)
        exact = bool(np.all(vals_f == 0.0) and np.all(vals_g == 0.0))
        ok &= exact
        results.append({"n": n, "grid_zero": exact, "ratio": pair.separation_ratio})
    ratios = [row["ratio"] for row in results]
    spread = max(ratios) / min(ratios) - 1.0
    ok &= spread <= 0.3
    return {"per_n": results, "ratio_spread": spread, "ok": bool(ok)}


_SUITES = {
    "thresh": _suite_thresh,
    "tails": _suite_tails,
    "lemmas": _suite_lemmas,
    "packing": _suite_packing,
    "fooling": _suite_fooling,
}


def cmd_validate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    report = _SUITES[args.suite](seed)
    if args.out:
        out = _out_dir(args, None)
        write_json(os.path.join(out, f"validate_{args.suite}.json"), report)
        write_manifest(out, run_manifest(f"validate-{args.suite}", {"seed": seed}))
    status = "PASS" if report["ok"] else "FAIL"
    print(f"validate {args.suite}: {status}")
    return 0 if report["ok"] else 3


def cmd_pack(args) -> int:
    seed = args.seed if args.seed is not None else 0
    fam = build_packing_family(args.cells, s=args.s, gamma=args.gamma, d=1, q=args.q,
                               seed=seed)
    out = _out_dir(args, None)
    manifest = {
        "n_cells": fam.n_cells, "d": fam.d, "s": fam.s, "gamma": fam.gamma,
        "P": fam.P, "size": len(fam.signs), "min_hamming_distance": fam.min_distance,
        "min_lq_separation": fam.min_lq_separation, "q": fam.q, "seed": seed,
        "signs": [sv.tolist() for sv in fam.signs],
    }
    write_json(os.path.join(out, "packing.json"), manifest)
    print(f"pack: P={fam.P} size={len(fam.signs)} min_distance={fam.min_distance}")
    return 0


def cmd_fooling(args) -> int:
    g = build_grid(args.n, 1)
    pair = fooling_pair(g, s=args.s, p=args.p, q=args.q, gamma=args.gamma)
    vals = pair.f(g.points)
    out = _out_dir(args, None)
    manifest = {
        "n": args.n, "m": g.m, "s": args.s, "p": args.p, "q": args.q,
        "gamma": args.gamma, "grid_values_all_zero": bool(np.all(vals == 0.0)),
        "separation_lq": pair.separation_lq, "rate_value": pair.rate_value,
        "separation_ratio": pair.separation_ratio,
    }
    write_json(os.path.join(out, "fooling.json"), manifest)
    print(f"fooling: n={args.n} grid-zero={manifest['grid_values_all_zero']} "
          f"ratio={pair.separation_ratio:.4f}")
    return 0


def cmd_besov_estimate(args) -> int:
    cfg = load_config(args.config)
    oracle = build_oracle(cfg)
    pr = cfg.problem
    r = pr["r"] if pr["r"] is not None else int(math.floor(pr["s"])) + 1
    est = besov_seminorm_pwp(oracle, pr["s"], pr["p"], r, k_max=args.kmax)
    out = _out_dir(args, cfg)
    write_json(os.path.join(out, "besov.json"),
               {"s": pr["s"], "p": pr["p"], "r": r, "k_max": args.kmax, "seminorm": est})
    print(f"besov-estimate: s={pr['s']} p={pr['p']} r={r} seminorm~={est:.6e}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyadshrink",
                                 description="multiscale thresholding estimator harness")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="experiment config file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="64-bit base seed")
        sp.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV})")
        sp.add_argument("--format", choices=["csv", "json"], help="output format override")

    sp = sub.add_parser("estimate", help="run the estimator once and persist the output")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("sweep-m", help="risk curve over the grid size at fixed sigma")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_sweep_m)

    sp = sub.add_parser("sweep-sigma", help="risk curve over sigma at fixed grid size")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_sweep_sigma)

    sp = sub.add_parser("validate", help="run a bundled validation suite")
    sp.add_argument("suite", choices=sorted(_SUITES))
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("pack", help="build and certify a packing family")
    sp.add_argument("--cells", type=int, default=16)
    sp.add_argument("--s", type=float, default=1.5)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--q", type=float, default=2.0)
    common(sp)
    sp.set_defaults(func=cmd_pack)

    sp = sub.add_parser("fooling", help="build a fooling pair and report its separation")
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--s", type=float, default=1.5)
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--q", type=float, default=2.0)
    sp.add_argument("--gamma", type=float, default=1.0)
    common(sp)
    sp.set_defaults(func=cmd_fooling)

    sp = sub.add_parser("besov-estimate", help="numerical smoothness seminorm of the target")
    sp.add_argument("--kmax", type=int, default=6)
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_besov_estimate)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
