"""Command-line front end.

Subcommands::

    flatland run <config>                 execute one experiment
    flatland compare <configs...>         side-by-side metric CSV
    flatland sweep <config> --param eta   hyperparameter sweep CSV
    flatland oracle-check <config>        brute-force validation suite

Configs are TOML files or bundled names (see ``flatland run --list``).
Exit codes: 0 success, 2 configuration error, 3 runtime/numeric error.
The FLATLAND_THREADS environment variable caps the chain worker pool.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report as rep
from .config import (ExperimentConfig, bundled_configs, load_experiment)
from .diagnostics import (exact_distribution_distance, hessian_eigenspectrum,
                          regression_rmse, tsp_route_metrics)
from .errors import CapabilityError, ConfigError, NumericError
from .kernels import SamplerConfig
from .models import BinaryRegressionNetModel, TSPModel
from .oracle import (exact_kernel_matrix, finite_difference_gradient,
                     stationary_distribution, target_probs)
from .runner import run

ETA_GRID = (0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0)


def _load(args, spec: str) -> ExperimentConfig:
    return load_experiment(
        spec, seed=getattr(args, "seed", None),
        chains=getattr(args, "chains", None),
        out=getattr(args, "out", None),
        figures=False if getattr(args, "no_figures", False) else None)


def cmd_run(args) -> int:
    if args.list:
        for name in sorted(bundled_configs()):
            print(name)
        return 0
    if args.config is None:
        raise ConfigError("run needs a config (or --list)")
    cfg = _load(args, args.config)
    model = cfg.build_model()
    plan = cfg.build_plan(model)
    result = run(plan)
    diagnostics = rep.compute_diagnostics(result, model, cfg.diagnostics)
    rep.write_run_outputs(cfg.out_dir, cfg.name, plan, result,
                          str(cfg.model_path), cfg.model_type, diagnostics,
                          figures=cfg.figures)
    print(f"{cfg.name}: {plan.chains} chains x {plan.iterations} iterations "
          f"({plan.sampler}), {plan.samples_per_chain} samples/chain "
          f"-> {cfg.out_dir}")
    for key in ("tv", "eigen", "mode_freqs", "pmc", "rmse"):
        if key in diagnostics:
            print(f"  {key}: {diagnostics[key]}")
    return 0


def _capability_row(cfg: ExperimentConfig, model, result) -> dict:
    """Metrics computable for this model type, pooled over chains."""
    row: dict = {"sampler": cfg.sampler,
                 "acceptance_rate": float(np.mean(result.acceptance_rates))}
    pooled = np.concatenate([a.samples for a in result.archives], axis=0)
    if model.enumerable:
        _, tv = exact_distribution_distance(pooled, model)
        row["tv"] = tv
    if model.has_gradient and model.dim <= 64:
        er = hessian_eigenspectrum(pooled, model)
        row["eigen_std"] = er.std
        row["eigen_iqr"] = er.iqr
    if isinstance(model, TSPModel):
        metrics = tsp_route_metrics(pooled, model)
        row["pmc_mean"] = metrics["pmc_mean"]
        row["pmc_std"] = metrics["pmc_std"]
    if isinstance(model, BinaryRegressionNetModel) and model.test_x is not None:
        vals = [regression_rmse(a.samples[-1], model, model.test_x,
                                model.test_y) for a in result.archives]
        row["rmse_mean"] = float(np.mean(vals))
        row["rmse_std"] = float(np.std(vals))
    return row


def cmd_compare(args) -> int:
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least two configs")
    cfgs = [_load(args, c) for c in args.configs]
    first = cfgs[0]
    for c in cfgs[1:]:
        if (c.model_path, c.model_type) != (first.model_path,
                                            first.model_type):
            raise ConfigError(
                f"compare requires one shared model: {first.model_path} "
                f"vs {c.model_path}")
    model = first.build_model()
    rows = []
    for cfg in cfgs:
        result = run(cfg.build_plan(model))
        rows.append(_capability_row(cfg, model, result))
    out_dir = Path(args.out) if args.out else first.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rep.write_compare_csv(out_dir / "compare.csv", rows)
    if not args.no_figures:
        rep.render_compare_figure(out_dir / "compare.png", rows)
    print(f"compared {len(rows)} samplers -> {out_dir / 'compare.csv'}")
    return 0


def _validation_metric(model, result) -> float | None:
    pooled = np.concatenate([a.samples for a in result.archives], axis=0)
    if model.enumerable:
        return exact_distribution_distance(pooled, model)[1]
    if isinstance(model, BinaryRegressionNetModel) and model.test_x is not None:
        vals = [regression_rmse(a.samples[-1], model, model.test_x,
                                model.test_y) for a in result.archives]
        return float(np.mean(vals))
    if isinstance(model, TSPModel):
        return tsp_route_metrics(pooled, model)["best_cost"]
    return None


def cmd_sweep(args) -> int:
    cfg = _load(args, args.config)
    if args.values:
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--values must be comma-separated numbers, "
                              f"got {args.values!r}") from None
    elif args.param == "eta":
        values = list(ETA_GRID)
    else:
        raise ConfigError(f"--values is required when sweeping "
                          f"{args.param!r}")
    if not values:
        raise ConfigError("empty sweep value list")
    model = cfg.build_model()
    rows = []
    for v in values:
        setattr(cfg, args.param, v)
        cfg.collect_aux = cfg.sampler not in ("dula", "dmala", "gibbs", "gwg")
        result = run(cfg.build_plan(model))
        row = {"param": args.param, "value": v,
               "acceptance_ratio": float(np.mean(result.mean_accept_probs)),
               "validation_metric": _validation_metric(model, result)}
        if cfg.collect_aux:
            norms = [np.linalg.norm(a.samples - a.aux, axis=1).mean()
                     for a in result.archives]
            row["coupling_norm"] = float(np.mean(norms))
        rows.append(row)
        print(f"  {args.param} = {v:g}: accept = "
              f"{row['acceptance_ratio']:.4f}")
    out_dir = Path(args.out) if args.out else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rep.write_sweep_csv(out_dir / "sweep.csv", rows)
    if not args.no_figures:
        rep.render_sweep_figure(out_dir / "sweep.png", rows)
    print(f"swept {args.param} over {len(values)} values -> "
          f"{out_dir / 'sweep.csv'}")
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _load(args, args.config)
    model = cfg.build_model()
    if not model.enumerable:
        raise ConfigError("oracle-check needs an enumerable model")
    sampler_cfg = (cfg.build_sampler_config()
                   if cfg.sampler in ("dula", "dmala") else None)
    if sampler_cfg is None:
        mode = "taylor" if model.has_gradient else "exact_difference"
        sampler_cfg = SamplerConfig(alpha=cfg.alpha, mh=True,
                                    gradient_mode=mode)
    pi = target_probs(model)
    failures = 0

    kernels = ["dmala", "gibbs"]
    if model.has_gradient and all(len(d) == 2 for d in model.domains):
        kernels.append("gwg")
    for name in kernels:
        P = exact_kernel_matrix(name, sampler_cfg, model)
        row_err = float(np.abs(P.sum(axis=1) - 1.0).max())
        pi_hat = stationary_distribution(P)
        resid = float(np.abs(pi_hat - pi).max())
        ok = resid < 1e-9 and row_err < 1e-10
        failures += 0 if ok else 1
        print(f"{name}: stationary L_inf residual = {resid:.3e}, "
              f"row-sum error = {row_err:.3e} "
              f"[{'ok' if ok else 'FAIL'}]")

    if model.has_gradient:
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        for _ in range(20):
            x = rng.uniform(0.2, 0.8, size=model.dim)
            g = model.gradient(x)
            g_fd = finite_difference_gradient(model.energy, x)
            denom = max(float(np.linalg.norm(g_fd)), 1e-12)
            worst = max(worst, float(np.linalg.norm(g - g_fd)) / denom)
        ok = worst < 1e-5
        failures += 0 if ok else 1
        print(f"gradient vs finite differences: max rel err = {worst:.3e} "
              f"[{'ok' if ok else 'FAIL'}]")

    if failures:
        raise NumericError(f"{failures} oracle check(s) failed")
    print("all oracle checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flatland",
        description="Discrete MCMC with entropic (flat-mode seeking) "
                    "Langevin proposals")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
        p.add_argument("--chains", type=int, default=None,
                       help="override the config's chain count")
        p.add_argument("--out", type=str, default=None,
                       help="override the output directory")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config", nargs="?",
                       help="TOML path or bundled config name")
    p_run.add_argument("--list", action="store_true",
                       help="list bundled config names and exit")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="run several configs on one model and "
                                "tabulate metrics")
    p_cmp.add_argument("configs", nargs="+")
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_swp = sub.add_parser("sweep",
                           help="rerun one config over a hyperparameter "
                                "grid")
    p_swp.add_argument("config")
    p_swp.add_argument("--param", choices=("eta", "alpha", "alpha_a"),
                       default="eta")
    p_swp.add_argument("--values", type=str, default=None,
                       help="comma-separated values (default for eta: "
                            + ",".join(str(v) for v in ETA_GRID) + ")")
    common(p_swp)
    p_swp.set_defaults(func=cmd_sweep)

    p_orc = sub.add_parser("oracle-check",
                           help="brute-force stationarity and gradient "
                                "checks for enumerable models")
    p_orc.add_argument("config")
    common(p_orc)
    p_orc.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CapabilityError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
