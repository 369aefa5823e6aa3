"""Result persistence: delimited sweep output, fit summaries, and figures."""

from __future__ import annotations

import csv
import json
import os
import platform
from typing import Sequence

import numpy as np

import dyadshrink
from dyadshrink.analysis import RateFit
from dyadshrink.shrinkage import EstimatorConfig

CSV_COLUMNS = [
    "experiment_id",
    "d",
    "s",
    "p",
    "q",
    "r",
    "beta",
    "kappa",
    "n",
    "m",
    "sigma",
    "seed",
    "trial",
    "lq_error",
    "runtime_ms",
]


def sweep_csv_rows(experiment_id: str, config: EstimatorConfig, rows: Sequence[dict]) -> list[dict]:
    """Flatten risk_curve rows into one CSV record per trial, schema order."""
    out = []
    for row in rows:
        for t in range(row["trials"]):
            out.append(
                {
                    "experiment_id": experiment_id,
                    "d": config.d,
                    "s": config.s,
                    "p": config.p,
                    "q": config.q,
                    "r": config.order,
                    "beta": config.beta_value(),
                    "kappa": config.kappa,
                    "n": row["n"],
                    "m": row["m"],
                    "sigma": row["sigma"],
                    "seed": row["seeds"][t],
                    "trial": t,
                    "lq_error": row["errors"][t],
                    "runtime_ms": row["runtimes_ms"][t],
                }
            )
    return out


def write_csv(path: str, records: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for rec in records:
            w.writerow(rec)


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def fit_payload(fit: RateFit, theoretical: float, axis: str) -> dict:
    return {
        "axis": axis,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "theoretical_slope": theoretical,
        "pairs": [list(p) for p in fit.pairs],
    }


def render_rate_figure(
    path: str,
    pairs: Sequence[tuple[float, float]],
    fit: RateFit,
    theoretical: float,
    xlabel: str,
    title: str,
) -> None:
    """Log-log risk curve with the fitted and theoretical slopes overlaid."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = np.array([p[0] for p in pairs], dtype=float)
    ys = np.array([p[1] for p in pairs], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.75))
    ax.loglog(xs, ys, "o", color="tab:blue", label="measured risk")
    grid = np.geomspace(xs.min(), xs.max(), 64)
    ax.loglog(
        grid,
        np.exp(fit.intercept) * grid**fit.slope,
        "-",
        color="tab:blue",
        label=f"fit slope {fit.slope:.3f}",
    )
    anchor = ys[0] * (grid / xs[0]) ** theoretical
    ax.loglog(grid, anchor, "--", color="tab:gray", label=f"theory slope {theoretical:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("L_q error")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def environment_fingerprint() -> dict:
    return {
        "package_version": dyadshrink.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
    }


def run_manifest(
    experiment_id: str,
    config_snapshot: dict,
    rows: Sequence[dict] | None = None,
) -> dict:
    """Everything needed to replay a run bit-identically."""
    manifest = {
        "experiment_id": experiment_id,
        "artifact_version": dyadshrink.__version__,
        "config": config_snapshot,
        "environment": environment_fingerprint(),
    }
    if rows is not None:
        manifest["provenance"] = [
            {
                "n": row["n"],
                "sigma": row["sigma"],
                "seeds": row["seeds"],
                "runtimes_ms": row["runtimes_ms"],
            }
            for row in rows
        ]
    return manifest


def write_manifest(out_dir: str, manifest: dict) -> str:
    path = os.path.join(out_dir, "run_manifest.json")
    write_json(path, manifest)
    return path
