"""Serialization of runs: archives, manifests, diagnostics, CSV, figures.

File layout produced by a run::

    out/
      manifest.json        plan + config + result stats ("timing" separate)
      chain_0.jsonl        one kept sample per line (JSON list)
      chain_0_aux.jsonl    companion-variable samples (collect_aux only)
      diagnostics.json     requested metrics
      eigenvalues.csv      pooled eigenvalue column (eigenspectrum only)
      *.png                figures unless disabled

Everything except the figures and the manifest's "timing" section is
byte-deterministic for a fixed config and seed: JSON is dumped with sorted
keys, floats keep their shortest round-trip repr, and CSV numbers use a
fixed %.12g format.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics as diag
from .errors import CapabilityError, ConfigError
from .models import (BinaryRegressionNetModel, EnergyModel, TSPModel)
from .runner import RunPlan, RunReport


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _json_value(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and v.is_integer() and abs(v) < 2 ** 53:
        return v  # keep float type; jsonl state lines convert separately
    return v


def _state_line(row: np.ndarray) -> str:
    vals = [int(v) if float(v).is_integer() else float(v) for v in row]
    return json.dumps(vals, separators=(",", " "))


def dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def strip_timing(manifest: dict) -> dict:
    out = dict(manifest)
    out.pop("timing", None)
    return out


def manifest_dict(name: str, plan: RunPlan, report: RunReport,
                  model_file: str, model_type: str) -> dict:
    cfg = None
    if plan.config is not None:
        cfg = asdict(plan.config)
        if cfg["aux_box"] is not None:
            cfg["aux_box"] = list(cfg["aux_box"])
    return {
        "experiment": name,
        "model": {"type": model_type, "file": Path(model_file).name,
                  "dim": plan.model.dim},
        "plan": {"sampler": plan.sampler, "chains": plan.chains,
                 "iterations": plan.iterations, "burn_in": plan.burn_in,
                 "thinning": plan.thinning, "seed": plan.seed,
                 "collect_aux": plan.collect_aux},
        "sampler_config": cfg,
        "results": {
            "samples_per_chain": plan.samples_per_chain,
            "acceptance_rates": [round(float(x), 12)
                                 for x in report.acceptance_rates],
            "mean_accept_probs": [round(float(x), 12)
                                  for x in report.mean_accept_probs],
            "rejected_invalid": [int(x) for x in report.rejected_invalid],
        },
        "timing": {"wall_time_s": report.wall_time},
    }


def write_archives(out_dir: Path, report: RunReport) -> list[Path]:
    paths = []
    for archive in report.archives:
        p = out_dir / f"chain_{archive.chain_id}.jsonl"
        with open(p, "w", encoding="utf-8") as fh:
            for row in archive.samples:
                fh.write(_state_line(row) + "\n")
        paths.append(p)
        if archive.aux is not None:
            pa = out_dir / f"chain_{archive.chain_id}_aux.jsonl"
            with open(pa, "w", encoding="utf-8") as fh:
                for row in archive.aux:
                    fh.write(json.dumps([float(v) for v in row],
                                        separators=(",", " ")) + "\n")
            paths.append(pa)
    return paths


def read_archive(path: Path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return np.array([json.loads(line) for line in fh if line.strip()],
                        dtype=float)


def _pooled(report: RunReport) -> np.ndarray:
    return np.concatenate([a.samples for a in report.archives], axis=0)


def _mode_key(mode) -> str:
    vals = [int(v) if float(v).is_integer() else float(v) for v in mode]
    if all(isinstance(v, int) and v in (0, 1) for v in vals):
        return "".join(str(v) for v in vals)
    return json.dumps(vals, separators=(",", ""))


def compute_diagnostics(report: RunReport, model: EnergyModel,
                        toggles: dict) -> dict:
    """Evaluate the requested metrics over the pooled archives."""
    pooled = _pooled(report)
    out: dict = {}
    if toggles.get("tv"):
        l1, tv = diag.exact_distribution_distance(pooled, model)
        out["l1"] = l1
        out["tv"] = tv
    if toggles.get("eigenspectrum"):
        er = diag.hessian_eigenspectrum(pooled, model)
        out["eigen"] = {"std": er.std, "iqr": er.iqr,
                        "count": int(er.eigenvalues.size)}
        out["_eigenvalues"] = er.eigenvalues
    modes = toggles.get("mode_freqs")
    if modes:
        freqs = diag.mode_visit_frequencies(pooled, modes)
        out["mode_freqs"] = {_mode_key(m): f for m, f in zip(modes, freqs)}
    if toggles.get("pmc"):
        if not isinstance(model, TSPModel):
            raise ConfigError("pmc diagnostics require a tsp model")
        metrics = diag.tsp_route_metrics(pooled, model)
        out["pmc"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                      for k, v in metrics.items()}
    if toggles.get("rmse"):
        if not isinstance(model, BinaryRegressionNetModel):
            raise ConfigError("rmse diagnostics require a regression model")
        if model.test_x is None:
            raise ConfigError("rmse diagnostics need a test split in the "
                              "model file")
        vals = [diag.regression_rmse(a.samples[-1], model, model.test_x,
                                     model.test_y)
                for a in report.archives]
        out["rmse"] = {"per_chain_final": vals,
                       "mean": float(np.mean(vals)),
                       "std": float(np.std(vals))}
    return out


def write_run_outputs(out_dir: Path, name: str, plan: RunPlan,
                      report: RunReport, model_file: str, model_type: str,
                      diagnostics_results: dict,
                      figures: bool = True) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(out_dir / "manifest.json",
              manifest_dict(name, plan, report, model_file, model_type))
    write_archives(out_dir, report)
    results = {k: v for k, v in diagnostics_results.items()
               if not k.startswith("_")}
    if results:
        dump_json(out_dir / "diagnostics.json", results)
    eig = diagnostics_results.get("_eigenvalues")
    if eig is not None:
        with open(out_dir / "eigenvalues.csv", "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["eigenvalue"])
            for v in eig:
                w.writerow([f"{v:.12g}"])
    if figures:
        render_run_figures(out_dir, plan, report, diagnostics_results)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def render_run_figures(out_dir: Path, plan: RunPlan, report: RunReport,
                       diagnostics_results: dict) -> list[Path]:
    plt = _plt()
    made = []

    fig, ax = plt.subplots(figsize=(7, 3.2))
    for archive in report.archives:
        e = plan.model.energy_batch(archive.samples)
        ax.plot(e, lw=0.7, label=f"chain {archive.chain_id}")
    ax.set_xlabel("kept sample")
    ax.set_ylabel("energy U")
    ax.set_title(f"{plan.sampler}: energy trace")
    if plan.chains <= 6:
        ax.legend(fontsize=7)
    fig.tight_layout()
    p = out_dir / "trace.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    made.append(p)

    mode_freqs = diagnostics_results.get("mode_freqs")
    if mode_freqs:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        keys = list(mode_freqs)
        ax.bar(range(len(keys)), [mode_freqs[k] for k in keys],
               color="steelblue")
        ax.set_xticks(range(len(keys)), keys, rotation=45, fontsize=8)
        ax.set_ylabel("visit frequency")
        ax.set_title(f"{plan.sampler}: mode visits")
        fig.tight_layout()
        p = out_dir / "mode_freqs.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        made.append(p)

    eig = diagnostics_results.get("_eigenvalues")
    if eig is not None:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.hist(eig, bins=40, color="dimgray")
        ax.set_xlabel("Hessian eigenvalue")
        ax.set_ylabel("count")
        ax.set_title(f"{plan.sampler}: pooled eigenspectrum")
        fig.tight_layout()
        p = out_dir / "eigenspectrum.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        made.append(p)
    return made


# ---------------------------------------------------------------------------
# compare / sweep tables
# ---------------------------------------------------------------------------

COMPARE_COLUMNS = ("sampler", "tv", "eigen_std", "eigen_iqr", "pmc_mean",
                   "pmc_std", "rmse_mean", "rmse_std", "acceptance_rate")


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    return f"{float(x):.12g}"


def write_compare_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARE_COLUMNS)
        for row in rows:
            w.writerow([row.get("sampler", "")]
                       + [_fmt(row.get(c)) for c in COMPARE_COLUMNS[1:]])


def render_compare_figure(path: Path, rows: list[dict]) -> None:
    plt = _plt()
    metrics = [c for c in COMPARE_COLUMNS[1:]
               if any(row.get(c) not in (None, "") for row in rows)]
    if not metrics:
        return
    fig, axes = plt.subplots(1, len(metrics),
                             figsize=(2.2 * len(metrics) + 1, 3.0),
                             squeeze=False)
    names = [row["sampler"] for row in rows]
    for ax, metric in zip(axes[0], metrics):
        vals = [row.get(metric) for row in rows]
        vals = [np.nan if v in (None, "") else float(v) for v in vals]
        ax.bar(range(len(names)), vals, color="steelblue")
        ax.set_xticks(range(len(names)), names, rotation=60, fontsize=7)
        ax.set_title(metric, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


SWEEP_COLUMNS = ("param", "value", "coupling_norm", "validation_metric",
                 "acceptance_ratio")


def write_sweep_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([row["param"], _fmt(row["value"]),
                        _fmt(row.get("coupling_norm")),
                        _fmt(row.get("validation_metric")),
                        _fmt(row.get("acceptance_ratio"))])


def render_sweep_figure(path: Path, rows: list[dict]) -> None:
    plt = _plt()
    x = [float(r["value"]) for r in rows]
    panels = [("coupling_norm", "mean ||theta - theta_a||"),
              ("validation_metric", "validation metric"),
              ("acceptance_ratio", "mean accept prob")]
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.0))
    for ax, (key, label) in zip(axes, panels):
        y = [r.get(key) for r in rows]
        y = [np.nan if v in (None, "") else float(v) for v in y]
        ax.plot(x, y, marker="o", ms=3)
        ax.set_xscale("log")
        ax.set_xlabel(rows[0]["param"])
        ax.set_title(label, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
