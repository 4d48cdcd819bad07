"""Experiment presets: named config matrices with mean+/-sd aggregation.

Each preset expands into a list of (cell name, config overrides) pairs; every
cell runs with several seeds and the runner emits a CSV, a JSON summary, and
a plain-text table per preset. Cells are independent: re-running any subset
in isolation reproduces the same numbers.
"""

from __future__ import annotations

import dataclasses
import json
import os

import numpy as np

from .config import ExperimentConfig
from .protocol import run_experiment

DEFAULT_SEEDS = (0, 1, 2)


def _cells_main():
    cells = [("fcf", {"protocol": "fcf"})]
    for arch in ("neumf", "ngcf", "lightgcn"):
        cells.append((f"ptf-{arch}", {"protocol": "ptf", "server_model": arch}))
    return cells


def _cells_comm():
    return [("ptf", {"protocol": "ptf"}), ("fcf", {"protocol": "fcf"})]


def _cells_privacy():
    return [(defense, {"defense": defense, "server_model": "ngcf"})
            for defense in ("none", "ldp", "sampling", "sampling+swapping")]


def _cells_hint_ablation():
    return [(strategy, {"hint_strategy": strategy, "server_model": "ngcf"})
            for strategy in ("full", "no-hard", "no-confidence", "random")]


def _cells_model_grid():
    return [(f"{c}x{s}", {"client_model": c, "server_model": s})
            for c in ("neumf", "ngcf", "lightgcn")
            for s in ("neumf", "ngcf", "lightgcn")]


def _cells_beta_gamma_lambda():
    cells = []
    for lo in (0.1, 0.3, 0.5, 0.7):
        cells.append((f"beta-{lo}-1.0", {"pos_fraction_min": lo, "server_model": "ngcf"}))
    for lo in (1, 2, 3, 4):
        cells.append((f"gamma-{lo}-4", {"neg_multiplier_min": lo, "server_model": "ngcf"}))
    for lam in (0.05, 0.1, 0.15, 0.2):
        cells.append((f"lambda-{lam}", {"swap_fraction": lam, "server_model": "ngcf"}))
    return cells


def _cells_alpha_sweep():
    return [(f"alpha-{alpha}", {"hint_size": alpha, "server_model": "ngcf"})
            for alpha in (10, 30, 50, 70)]


PRESETS = {
    "main": _cells_main,
    "comm": _cells_comm,
    "privacy": _cells_privacy,
    "hint-ablation": _cells_hint_ablation,
    "model-grid": _cells_model_grid,
    "beta-gamma-lambda-sweep": _cells_beta_gamma_lambda,
    "alpha-sweep": _cells_alpha_sweep,
}


def run_preset(name: str, base: ExperimentConfig, out_dir: str,
               seeds=DEFAULT_SEEDS) -> dict:
    """Run every cell of a preset with each seed; write aggregate tables."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    cells = PRESETS[name]()
    os.makedirs(out_dir, exist_ok=True)
    results = {}
    for cell, overrides in cells:
        per_seed = []
        for seed in seeds:
            cfg = dataclasses.replace(base, seed=seed, out_dir="", **overrides).validate()
            report = run_experiment(cfg)
            per_seed.append({
                "seed": seed,
                "recall": report.final_recall,
                "ndcg": report.final_ndcg,
                "attack_f1": report.final_attack_f1,
                "bytes_per_client_round": report.mean_bytes_per_client_round,
            })
        results[cell] = per_seed

    summary = _aggregate(results)
    _write_outputs(name, base, seeds, results, summary, out_dir)
    return summary


def _aggregate(results: dict) -> dict:
    summary = {}
    for cell, rows in results.items():
        summary[cell] = {}
        for key in ("recall", "ndcg", "attack_f1", "bytes_per_client_round"):
            vals = np.array([row[key] for row in rows], dtype=np.float64)
            summary[cell][key] = {"mean": float(vals.mean()),
                                  "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    return summary


def _write_outputs(name, base, seeds, results, summary, out_dir):
    with open(os.path.join(out_dir, f"{name}.json"), "w") as f:
        json.dump({"preset": name, "seeds": list(seeds), "base_config": base.to_dict(),
                   "per_seed": results, "summary": summary}, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, f"{name}.csv"), "w") as f:
        f.write("cell,metric,mean,sd\n")
        for cell, metrics in summary.items():
            for metric, stats in metrics.items():
                f.write(f"{cell},{metric},{stats['mean']!r},{stats['sd']!r}\n")
    with open(os.path.join(out_dir, f"{name}.txt"), "w") as f:
        f.write(render_table(name, summary))


def render_table(name: str, summary: dict) -> str:
    metrics = ("recall", "ndcg", "attack_f1", "bytes_per_client_round")
    width = max(len(c) for c in summary) + 2
    lines = [f"preset: {name}"]
    header = "cell".ljust(width) + "".join(m.rjust(26) for m in metrics)
    lines.append(header)
    lines.append("-" * len(header))
    for cell, stats in summary.items():
        row = cell.ljust(width)
        for m in metrics:
            s = stats[m]
            row += f"{s['mean']:.4f} +/- {s['sd']:.4f}".rjust(26)
        lines.append(row)
    return "\n".join(lines) + "\n"
