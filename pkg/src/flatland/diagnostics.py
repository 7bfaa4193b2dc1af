"""Sample-quality and flatness metrics over collected chains.

All functions accept either a SampleArchive-like object (anything with a
``samples`` attribute) or a raw (m, d) array of discrete states, so they
work on both runner archives and vectorized batch results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ConfigError, NumericError
from .models import EnergyModel, state_index_fn, state_table

#: Central finite-difference step for Hessian columns.
HESSIAN_FD_STEP = 1e-4

#: Dimension cap for the dense eigensolve.
HESSIAN_MAX_DIM = 64


def _samples_of(archive) -> np.ndarray:
    samples = getattr(archive, "samples", archive)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ConfigError(f"expected an (m, d) sample array, got shape "
                          f"{samples.shape}")
    return samples


@dataclass(frozen=True)
class EigenReport:
    """Pooled Hessian eigenvalues over sampled states plus dispersion."""
    eigenvalues: np.ndarray
    std: float
    iqr: float


def finite_difference_hessian(model: EnergyModel, x: np.ndarray,
                              step: float = HESSIAN_FD_STEP) -> np.ndarray:
    """Symmetrized central-difference Hessian of the continuous extension."""
    x = np.asarray(x, dtype=float)
    d = len(x)
    H = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        H[:, j] = (model.gradient(x + e) - model.gradient(x - e)) / (2 * step)
    return 0.5 * (H + H.T)


def hessian_eigenspectrum(archive, model: EnergyModel) -> EigenReport:
    """Eigenvalues of the energy Hessian pooled over the sampled states.

    One Hessian is computed per *unique* sampled state (finite differences
    of the analytic gradient), but its eigenvalues enter the pool once per
    sample, so states visited often weigh more -- the dispersion then
    reflects where the chain actually spends time. Dispersion is the
    population standard deviation and the interquartile range (linear
    interpolation between order statistics).
    """
    if not model.has_gradient:
        raise CapabilityError("Hessian spectra need a model gradient")
    if model.dim > HESSIAN_MAX_DIM:
        raise CapabilityError(f"dimension {model.dim} exceeds the dense "
                              f"eigensolve cap {HESSIAN_MAX_DIM}")
    samples = _samples_of(archive)
    if samples.shape[0] == 0:
        raise ConfigError("empty archive")
    uniq, counts = np.unique(samples, axis=0, return_counts=True)
    per_state = np.stack([
        np.linalg.eigvalsh(finite_difference_hessian(model, x))
        for x in uniq])                                   # (u, d)
    pool = np.repeat(per_state, counts, axis=0).ravel()
    q1, q3 = np.percentile(pool, [25.0, 75.0])
    return EigenReport(eigenvalues=pool, std=float(np.std(pool)),
                       iqr=float(q3 - q1))


def pairwise_mismatch_count(best, others) -> tuple[float, float]:
    """Mean and population std of positionwise mismatches against ``best``.

    ``best`` is one permutation (length n); ``others`` is an (m, n) set.
    The mismatch count of a pair is the number of positions where they
    disagree.
    """
    best = np.asarray(best)
    others = np.asarray(others)
    if others.ndim != 2 or others.shape[0] == 0:
        raise ConfigError("others must be a nonempty (m, n) array")
    if others.shape[1] != best.shape[0]:
        raise ConfigError("permutation lengths differ")
    pmc = (others != best[None, :]).sum(axis=1)
    return float(pmc.mean()), float(pmc.std())


def exact_target_log_probs(model: EnergyModel) -> np.ndarray:
    """Normalized log target over the enumeration order."""
    if not model.enumerable:
        raise CapabilityError("exact target needs an enumerable model")
    e = model.energy_batch(state_table(model))
    m = e.max()
    return e - (m + np.log(np.exp(e - m).sum()))


def distribution_distance_from_counts(counts: np.ndarray,
                                      model: EnergyModel
                                      ) -> tuple[float, float]:
    """(l1, tv) between a visit-count histogram and the exact target."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ConfigError("empty counts")
    p_hat = counts / total
    p = np.exp(exact_target_log_probs(model))
    l1 = float(np.abs(p_hat - p).sum())
    return l1, l1 / 2.0


def exact_distribution_distance(archive, model: EnergyModel
                                ) -> tuple[float, float]:
    """L1 and total-variation distance of the empirical state frequencies
    from the exactly normalized target (enumerable models only)."""
    samples = _samples_of(archive)
    idx = state_index_fn(model)(samples)
    counts = np.bincount(idx, minlength=model.state_count)
    return distribution_distance_from_counts(counts, model)


def mode_visit_frequencies(archive, modes) -> list[float]:
    """Fraction of samples equal to each listed state."""
    samples = _samples_of(archive)
    out = []
    for mode in modes:
        mode = np.asarray(mode, dtype=float)
        out.append(float((samples == mode[None, :]).all(axis=1).mean()))
    return out


def regression_rmse(theta, model, test_x, test_y) -> float:
    """Root mean squared prediction error of one weight state."""
    test_x = np.asarray(test_x, dtype=float)
    test_y = np.asarray(test_y, dtype=float)
    if test_x.ndim != 2 or test_y.shape != (test_x.shape[0],):
        raise ConfigError("need test_x (M, p) and test_y (M,)")
    err = model.predict(np.asarray(theta, dtype=float), test_x) - test_y
    return float(np.sqrt((err ** 2).mean()))


def tsp_route_metrics(archive, model) -> dict:
    """Tour-quality summary of a TSP sample set.

    Decodes every sample, drops any that are not genuine tours (possible
    for samplers that walk the relaxed space), keeps the unique routes, and
    reports the best (lowest-cost) route, the mismatch statistics of the
    others against it, and cost statistics both over all kept samples and
    over the unique routes only.
    """
    samples = _samples_of(archive)
    decoded = [model.decode_route(s) for s in samples]
    routes = [r for r in decoded if r is not None]
    if not routes:
        raise NumericError("no valid tours among the kept samples")
    routes = np.stack(routes)
    costs = np.array([model.route_cost(r) for r in routes])
    uniq = np.unique(routes, axis=0)
    uniq_costs = np.array([model.route_cost(r) for r in uniq])
    best = uniq[np.argmin(uniq_costs)]
    if uniq.shape[0] > 1:
        rest = uniq[~(uniq == best[None, :]).all(axis=1)]
        pmc_mean, pmc_std = pairwise_mismatch_count(best, rest)
    else:
        pmc_mean, pmc_std = 0.0, 0.0
    return {
        "best_route": best,
        "best_cost": float(uniq_costs.min()),
        "n_valid": int(routes.shape[0]),
        "n_unique": int(uniq.shape[0]),
        "pmc_mean": pmc_mean,
        "pmc_std": pmc_std,
        "cost_mean": float(costs.mean()),
        "cost_var": float(costs.var()),
        "uniq_cost_var": float(uniq_costs.var()),
    }
