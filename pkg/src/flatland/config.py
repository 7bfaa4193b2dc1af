"""Experiment configuration: TOML files, bundled presets, plan assembly.

An experiment file is TOML with four tables::

    [model]        type = "categorical_pmf"   file = "bernoulli4d.json"
    [plan]         sampler, chains, iterations, burn_in, thinning, seed,
                   collect_aux
    [sampler]      alpha, alpha_a, eta, gradient_mode, aux_box, preset
    [diagnostics]  eigenspectrum / tv / pmc / rmse booleans,
                   mode_freqs = [[...], ...] (states to track)
    [output]       dir = "...", figures = true

Model files resolve relative to the config file first, then the bundled
data directory. ``preset`` pulls alpha_a/eta defaults for the entropic
samplers from the bundled hyperparameter table.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .kernels import SamplerConfig
from .models import MODEL_TYPES, EnergyModel, load_model
from .runner import CONFIG_SAMPLERS, RunPlan, normalize_sampler, sampler_config


def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


def bundled_configs() -> dict[str, Path]:
    """Name -> path of every experiment file shipped with the package."""
    return {p.stem: p for p in sorted((data_dir() / "configs").glob("*.toml"))
            if p.stem != "hyperparams"}


def resolve_config_path(spec: str) -> Path:
    """Accept a filesystem path or the stem of a bundled config."""
    p = Path(spec)
    if p.is_file():
        return p
    bundled = bundled_configs().get(p.stem if p.suffix else spec)
    if bundled is not None and (p.suffix in ("", ".toml")):
        return bundled
    raise ConfigError(f"config {spec!r} is neither a file nor one of the "
                      f"bundled names {sorted(bundled_configs())}")


def _resolve_model_path(file_spec: str, config_dir: Path) -> Path:
    p = Path(file_spec)
    if p.is_absolute() and p.is_file():
        return p
    local = config_dir / p
    if local.is_file():
        return local
    bundled = data_dir() / "models" / p
    if bundled.is_file():
        return bundled
    raise ConfigError(f"model file {file_spec!r} not found (tried "
                      f"{local} and the bundled models)")


def load_preset_table() -> dict:
    path = data_dir() / "configs" / "hyperparams.toml"
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def preset_hyperparams(preset: str, sampler: str) -> dict:
    """alpha_a/eta defaults for an entropic sampler from the bundled table."""
    table = load_preset_table()
    if preset not in table:
        raise ConfigError(f"unknown preset {preset!r}; bundled presets: "
                          f"{sorted(k for k in table if isinstance(table[k], dict))}")
    sampler = normalize_sampler(sampler)
    base = sampler.removeprefix("glu-")
    entry = table[preset].get(base)
    if entry is None:
        raise ConfigError(f"preset {preset!r} has no entry for {base!r}")
    return dict(entry)


@dataclass
class ExperimentConfig:
    """Parsed experiment file plus CLI overrides."""
    model_type: str
    model_path: Path
    sampler: str
    chains: int = 4
    iterations: int = 1000
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    collect_aux: bool = False
    alpha: float = 0.1
    alpha_a: Optional[float] = None
    eta: Optional[float] = None
    gradient_mode: str = "taylor"
    aux_box: Optional[tuple[float, float]] = None
    diagnostics: dict = field(default_factory=dict)
    out_dir: Path = Path("out")
    figures: bool = True
    name: str = "experiment"

    def build_model(self) -> EnergyModel:
        return load_model(self.model_path, self.model_type)

    def build_sampler_config(self) -> Optional[SamplerConfig]:
        alpha_a = 0.1 if self.alpha_a is None else self.alpha_a
        return sampler_config(self.sampler, alpha=self.alpha,
                              alpha_a=alpha_a, eta=self.eta,
                              aux_box=self.aux_box,
                              gradient_mode=self.gradient_mode)

    def build_plan(self, model: Optional[EnergyModel] = None) -> RunPlan:
        return RunPlan(model=model or self.build_model(),
                       sampler=self.sampler,
                       config=self.build_sampler_config(),
                       chains=self.chains, iterations=self.iterations,
                       burn_in=self.burn_in, thinning=self.thinning,
                       seed=self.seed, collect_aux=self.collect_aux)


_DIAG_KEYS = ("eigenspectrum", "tv", "pmc", "rmse", "mode_freqs")


def load_experiment(spec: str, *, seed: Optional[int] = None,
                    chains: Optional[int] = None,
                    out: Optional[str] = None,
                    figures: Optional[bool] = None) -> ExperimentConfig:
    """Load and validate an experiment file, applying CLI overrides."""
    path = resolve_config_path(spec)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    for section in ("model", "plan"):
        if section not in raw or not isinstance(raw[section], dict):
            raise ConfigError(f"{path}: missing [{section}] table")
    model_tbl = raw["model"]
    if "type" not in model_tbl or "file" not in model_tbl:
        raise ConfigError(f"{path}: [model] needs 'type' and 'file'")
    if model_tbl["type"] not in MODEL_TYPES:
        raise ConfigError(f"{path}: unknown model type "
                          f"{model_tbl['type']!r}; expected {MODEL_TYPES}")
    plan_tbl = dict(raw["plan"])
    sampler = normalize_sampler(str(plan_tbl.pop("sampler", "")))

    samp_tbl = dict(raw.get("sampler", {}))
    preset = samp_tbl.pop("preset", None)
    if preset is not None and sampler in CONFIG_SAMPLERS[2:]:
        defaults = preset_hyperparams(preset, sampler)
        for key, val in defaults.items():
            samp_tbl.setdefault(key, val)

    diag_tbl = dict(raw.get("diagnostics", {}))
    unknown = set(diag_tbl) - set(_DIAG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown diagnostics keys {sorted(unknown)}")
    out_tbl = dict(raw.get("output", {}))

    aux_box = samp_tbl.get("aux_box")
    if aux_box is not None:
        if (not isinstance(aux_box, (list, tuple)) or len(aux_box) != 2):
            raise ConfigError(f"{path}: aux_box must be [lo, hi]")
        aux_box = (float(aux_box[0]), float(aux_box[1]))

    try:
        cfg = ExperimentConfig(
            model_type=str(model_tbl["type"]),
            model_path=_resolve_model_path(str(model_tbl["file"]),
                                           path.parent),
            sampler=sampler,
            chains=int(plan_tbl.pop("chains", 4)),
            iterations=int(plan_tbl.pop("iterations", 1000)),
            burn_in=int(plan_tbl.pop("burn_in", 0)),
            thinning=int(plan_tbl.pop("thinning", 1)),
            seed=int(plan_tbl.pop("seed", 0)),
            collect_aux=bool(plan_tbl.pop("collect_aux", False)),
            alpha=float(samp_tbl.pop("alpha", 0.1)),
            alpha_a=(None if samp_tbl.get("alpha_a") is None
                     else float(samp_tbl.pop("alpha_a"))),
            eta=(None if samp_tbl.get("eta") is None
                 else float(samp_tbl.pop("eta"))),
            gradient_mode=str(samp_tbl.pop("gradient_mode", "taylor")),
            aux_box=aux_box,
            diagnostics=diag_tbl,
            out_dir=Path(out_tbl.get("dir", "out")),
            figures=bool(out_tbl.get("figures", True)),
            name=path.stem)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad value in config: {exc}") from exc
    samp_tbl.pop("aux_box", None)
    if plan_tbl:
        raise ConfigError(f"{path}: unknown [plan] keys {sorted(plan_tbl)}")
    if samp_tbl:
        raise ConfigError(f"{path}: unknown [sampler] keys "
                          f"{sorted(samp_tbl)}")

    if seed is not None:
        cfg.seed = int(seed)
    if chains is not None:
        cfg.chains = int(chains)
    if out is not None:
        cfg.out_dir = Path(out)
    if figures is not None:
        cfg.figures = bool(figures)

    # fail fast on inconsistent plans before any sampling happens
    cfg.build_plan(cfg.build_model())
    return cfg
