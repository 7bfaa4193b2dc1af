"""Multi-chain experiment orchestration.

Two execution paths produce statistically identical chains:

* :func:`run` -- the reference path. Each chain owns a counter-based RNG
  seeded ``root_seed + chain_id`` and advances one step at a time through
  the kernels in :mod:`flatland.kernels`. Chains optionally run in a
  process pool (capped by the ``FLATLAND_THREADS`` environment variable);
  pooled and sequential execution yield byte-identical archives.

* :func:`run_batched` -- the throughput path for long desk experiments on
  one core. It advances B independent chains per numpy call using the same
  formula helpers as the per-step kernels and consumes randomness from one
  shared generator in a fixed documented order, so a batch of size 1 with
  an explicit initial state reproduces the per-step chain bit for bit.
  Rows may use per-row discrete stepsizes (stepsize sweeps in one pass).

Baseline kernels that are not stepsize-driven (systematic-scan Gibbs and
the gradient-weighted single-flip sampler) live here as step functions.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import CapabilityError, ConfigError
from .kernels import (CoordinateProposal, JointState, SamplerConfig,
                      StepOutcome, categorical_inverse_cdf,
                      exact_difference_logits, gaussian_logpdf_iso,
                      joint_energy, log_softmax, make_rng, step,
                      stacked_domains, taylor_logits)
from .models import EnergyModel, state_index_fn

SAMPLER_NAMES = ("dula", "dmala", "edula", "edmala",
                 "glu-edula", "glu-edmala", "gibbs", "gwg")

#: Samplers driven by a SamplerConfig (everything except gibbs/gwg).
CONFIG_SAMPLERS = SAMPLER_NAMES[:6]


def normalize_sampler(name: str) -> str:
    norm = name.strip().lower().replace("_", "-")
    if norm not in SAMPLER_NAMES:
        raise ConfigError(
            f"unknown sampler {name!r}; expected one of {SAMPLER_NAMES}")
    return norm


def sampler_config(name: str, alpha: Optional[float] = None,
                   alpha_a: float = 0.1, eta: Optional[float] = None,
                   aux_box=None, gradient_mode: str = "taylor"
                   ) -> Optional[SamplerConfig]:
    """Build the SamplerConfig implied by a sampler name.

    Decoupled baselines reject eta; entropic variants require it. Returns
    None for gibbs/gwg, which have no stepsize configuration.
    """
    name = normalize_sampler(name)
    if name in ("gibbs", "gwg"):
        return None
    if alpha is None:
        raise ConfigError(f"{name} requires a stepsize alpha")
    if name in ("dula", "dmala"):
        if eta is not None:
            raise ConfigError(f"{name} is a decoupled kernel; eta must be "
                              "unset")
        return SamplerConfig(alpha=alpha, alpha_a=alpha_a, eta=None,
                             mh=(name == "dmala"), aux_box=aux_box,
                             gradient_mode=gradient_mode)
    if eta is None:
        raise ConfigError(f"{name} requires a finite coupling eta")
    glu = name.startswith("glu-")
    mh = name.endswith("mala")
    return SamplerConfig(alpha=alpha, alpha_a=alpha_a, eta=eta, mh=mh,
                         glu=glu, aux_box=aux_box,
                         gradient_mode=gradient_mode)


# ---------------------------------------------------------------------------
# baseline step functions
# ---------------------------------------------------------------------------

def gibbs_step(theta: np.ndarray, model: EnergyModel,
               rng: np.random.Generator) -> np.ndarray:
    """One systematic scan: resample each coordinate from its exact
    conditional, in coordinate order (one uniform per coordinate)."""
    theta = np.array(theta, dtype=float, copy=True)
    for i in range(model.dim):
        cond = model.conditional_energies(theta, i)
        logp = log_softmax(cond)
        k = int(categorical_inverse_cdf(logp, rng.random()))
        theta[i] = model.domains[i][k]
    return theta


def gwg_step(state: JointState, model: EnergyModel,
             rng: np.random.Generator) -> StepOutcome:
    """Gradient-weighted single-flip proposal with MH correction.

    Picks one coordinate with probability proportional to
    exp(0.5 * grad_i * (flip_i - theta_i)), flips it, and accepts with the
    exact energy ratio times the reverse/forward pick ratio. Binary domains
    only. Randomness order: 1 uniform (coordinate pick), 1 uniform (MH).
    """
    if any(len(dom) != 2 for dom in model.domains):
        raise CapabilityError("single-flip sampler requires binary domains")
    if not model.has_gradient:
        raise CapabilityError("single-flip sampler requires a model gradient")
    theta = state.theta
    values = stacked_domains(model)
    cur = (theta == values[:, 1]).astype(np.int64)
    flip = values[np.arange(model.dim), 1 - cur]

    g = model.gradient(theta)
    logp_fwd = log_softmax(0.5 * g * (flip - theta))
    i = int(categorical_inverse_cdf(logp_fwd, rng.random()))
    theta_p = theta.copy()
    theta_p[i] = flip[i]
    u_acc = rng.random()

    g_p = model.gradient(theta_p)
    cur_p = (theta_p == values[:, 1]).astype(np.int64)
    flip_p = values[np.arange(model.dim), 1 - cur_p]
    logp_rev = log_softmax(0.5 * g_p * (flip_p - theta_p))

    log_ratio = (model.energy(theta_p) - model.energy(theta)
                 + logp_rev[i] - logp_fwd[i])
    log_a = min(0.0, float(log_ratio))
    accepted = bool(u_acc < np.exp(log_a))
    proposed = JointState(theta_p, state.theta_a)
    return StepOutcome(state=proposed if accepted else state,
                       accepted=accepted, log_accept_prob=log_a,
                       proposal_log_q_fwd=float(logp_fwd[i]),
                       proposal_log_q_rev=float(logp_rev[i]),
                       proposal=proposed)


# ---------------------------------------------------------------------------
# plans, archives, reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunPlan:
    """Everything needed to reproduce a multi-chain experiment."""
    model: EnergyModel
    sampler: str
    config: Optional[SamplerConfig]
    chains: int = 1
    iterations: int = 1000
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    collect_aux: bool = False
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "sampler", normalize_sampler(self.sampler))
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not (0 <= self.burn_in < self.iterations):
            raise ConfigError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thinning < 1:
            raise ConfigError("thinning must be >= 1")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ConfigError("seed must fit in u64")
        if self.sampler in CONFIG_SAMPLERS:
            if self.config is None:
                raise ConfigError(f"sampler {self.sampler} needs a config")
            want_mh = self.sampler.endswith("mala")
            if self.config.mh != want_mh:
                raise ConfigError(f"sampler {self.sampler} requires "
                                  f"mh={want_mh}")
            if self.config.glu != self.sampler.startswith("glu-"):
                raise ConfigError(f"sampler {self.sampler} and config.glu "
                                  "disagree")
            if (self.sampler in ("dula", "dmala")) != self.config.decoupled:
                raise ConfigError(f"sampler {self.sampler} and config "
                                  "coupling disagree")
        if self.init is not None:
            init = np.asarray(self.init, dtype=float)
            if init.shape != (self.model.dim,):
                raise ConfigError("init state has the wrong dimension")
            object.__setattr__(self, "init", init)

    @property
    def samples_per_chain(self) -> int:
        span = self.iterations - self.burn_in
        return (span + self.thinning - 1) // self.thinning


@dataclass
class SampleArchive:
    """Kept discrete samples of one chain (post burn-in, post thinning)."""
    samples: np.ndarray                      # (m, d)
    chain_id: int
    seed: int
    config: Optional[SamplerConfig]
    aux: Optional[np.ndarray] = None         # (m, d) when collect_aux


@dataclass
class RunReport:
    archives: list[SampleArchive]
    acceptance_rates: np.ndarray     # per chain, over validity-passing steps
    mean_accept_probs: np.ndarray    # per chain, mean exp(log accept prob)
    rejected_invalid: np.ndarray     # per chain
    wall_time: float

    @property
    def total_rejected_invalid(self) -> int:
        return int(self.rejected_invalid.sum())


def _run_chain(plan: RunPlan, chain_id: int) -> tuple[SampleArchive, float,
                                                      float, int]:
    model = plan.model
    rng = make_rng(plan.seed + chain_id)
    theta0 = (model.random_state(rng) if plan.init is None
              else plan.init.copy())
    state = JointState(theta0, theta0.copy())

    kept = []
    kept_aux = []
    n_acc = 0
    n_invalid = 0
    sum_ap = 0.0
    for it in range(1, plan.iterations + 1):
        if plan.sampler == "gibbs":
            theta = gibbs_step(state.theta, model, rng)
            state = JointState(theta, theta.copy())
            n_acc += 1
            sum_ap += 1.0
        else:
            if plan.sampler == "gwg":
                out = gwg_step(state, model, rng)
            else:
                out = step(state, plan.config, model, rng)
            state = out.state
            if out.invalid_proposal:
                n_invalid += 1
            else:
                n_acc += int(out.accepted)
                sum_ap += float(np.exp(out.log_accept_prob))
        if it > plan.burn_in and (it - plan.burn_in - 1) % plan.thinning == 0:
            kept.append(state.theta.copy())
            if plan.collect_aux:
                kept_aux.append(state.theta_a.copy())

    n_counted = plan.iterations - n_invalid
    acc_rate = n_acc / n_counted if n_counted else 1.0
    mean_ap = sum_ap / n_counted if n_counted else 1.0
    archive = SampleArchive(
        samples=np.array(kept), chain_id=chain_id,
        seed=plan.seed + chain_id, config=plan.config,
        aux=np.array(kept_aux) if plan.collect_aux else None)
    return archive, acc_rate, mean_ap, n_invalid


def worker_count(chains: int) -> int:
    cap = os.environ.get("FLATLAND_THREADS")
    if cap is not None:
        try:
            cap = int(cap)
        except ValueError:
            raise ConfigError(f"FLATLAND_THREADS must be an integer, got "
                              f"{cap!r}") from None
        if cap < 1:
            raise ConfigError("FLATLAND_THREADS must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(chains, cap))


def run(plan: RunPlan) -> RunReport:
    """Execute every chain of the plan; deterministic in plan.seed.

    Chain k uses the generator seeded seed + k regardless of execution
    order, so pooled and sequential runs produce identical archives.
    """
    t0 = time.perf_counter()
    workers = worker_count(plan.chains)
    if workers == 1:
        results = [_run_chain(plan, k) for k in range(plan.chains)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chain, [plan] * plan.chains,
                                    range(plan.chains)))
    archives = [r[0] for r in results]
    return RunReport(
        archives=archives,
        acceptance_rates=np.array([r[1] for r in results]),
        mean_accept_probs=np.array([r[2] for r in results]),
        rejected_invalid=np.array([r[3] for r in results], dtype=np.int64),
        wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# vectorized multi-chain driver
# ---------------------------------------------------------------------------

@dataclass
class BatchResult:
    """Outcome of a vectorized multi-chain run (one row per chain)."""
    samples: Optional[np.ndarray]        # (B, m, d) kept states, or None
    counts: Optional[np.ndarray]         # (B, S) visit counts, or None
    acceptance_rates: np.ndarray         # (B,)
    mean_accept_probs: np.ndarray        # (B,)
    rejected_invalid: np.ndarray         # (B,)
    final_theta: np.ndarray              # (B, d)
    final_theta_a: np.ndarray            # (B, d)


def _positions(X: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Domain-order indices of each coordinate value; X (B, d), values (d, K)."""
    if values.shape[1] == 2:
        return (X == values[None, :, 1]).astype(np.int64)
    pos = np.empty(X.shape, dtype=np.int64)
    for i in range(values.shape[0]):
        pos[:, i] = np.searchsorted(values[i], X[:, i])
    return pos


def _batch_logits(X, A, model, values, alpha_col, eta, gradient_mode,
                  e_u=None, grad_u=None, flips=None):
    """(B, d, K) normalized log proposal probabilities plus reusable pieces."""
    if gradient_mode == "taylor":
        if grad_u is None:
            grad_u = model.gradient_batch(X)
        g = grad_u if eta is None else grad_u - (X - A) / eta
        logp = log_softmax(taylor_logits(X, g, values, alpha_col))
        return logp, e_u, grad_u, flips
    if flips is None:
        flips = model.flip_energies_batch(X)
    if e_u is None:
        e_u = model.energy_batch(X)
    logits = exact_difference_logits(X, A, flips, e_u, values,
                                     alpha_col, eta)
    return log_softmax(logits), e_u, grad_u, flips


def run_batched(model: EnergyModel, config: SamplerConfig, *,
                n_chains: int, iterations: int, burn_in: int = 0,
                thinning: int = 1, seed: int = 0,
                alpha_rows: Optional[np.ndarray] = None,
                collect: str = "samples",
                init: Optional[np.ndarray] = None) -> BatchResult:
    """Advance n_chains independent chains with vectorized numpy steps.

    All rows share one generator; per step the draw order is: d uniforms
    per row (discrete proposal), d normals per row (auxiliary move, finite
    coupling without glu), one uniform per row (MH coin, mh only). GLU
    draws its refresh normals first. With n_chains = 1 and an explicit
    init this reproduces the per-step kernels' stream exactly.

    ``alpha_rows`` optionally overrides the discrete stepsize per row.
    ``collect`` is "samples" (keep thinned states), "counts" (accumulate
    state-visit counts post burn-in; enumerable models only), or "none".
    """
    if config is None:
        raise ConfigError("run_batched drives stepsize-configured kernels")
    if not (0 <= burn_in < iterations):
        raise ConfigError("burn_in must satisfy 0 <= burn_in < iterations")
    if thinning < 1:
        raise ConfigError("thinning must be >= 1")
    if collect not in ("samples", "counts", "none"):
        raise ConfigError(f"unknown collect mode {collect!r}")
    B, d = n_chains, model.dim
    values = stacked_domains(model)
    rng = make_rng(seed)

    if init is None:
        X = np.stack([model.random_state(rng) for _ in range(B)])
    else:
        X = np.array(np.atleast_2d(init), dtype=float)
        if X.shape == (1, d) and B > 1:
            X = np.repeat(X, B, axis=0)
        if X.shape != (B, d):
            raise ConfigError(f"init must have shape ({B}, {d})")
    A = X.copy()

    if alpha_rows is None:
        alpha_col = alpha_col_2d = config.alpha
    else:
        alpha_rows = np.asarray(alpha_rows, dtype=float)
        if alpha_rows.shape != (B,) or np.any(alpha_rows <= 0):
            raise ConfigError("alpha_rows must be positive with one entry "
                              "per chain")
        alpha_col = alpha_rows[:, None, None]
        alpha_col_2d = alpha_rows[:, None]
    eta, taylor = config.eta, config.gradient_mode == "taylor"
    has_val = model.has_validity
    # Unadjusted Taylor proposals on two-valued coordinates reduce to one
    # Bernoulli per site: P(pick v0) = softmax of two logits, and the
    # inverse-CDF pick among [v0, v1] is exactly u >= P(v0).
    fast_binary = (taylor and not config.mh and values.shape[1] == 2)
    grad_table = state_idx = None
    if fast_binary:
        v0, v1 = values[:, 0][None, :], values[:, 1][None, :]
        grad_table = model.corner_gradient_table()
        if grad_table is not None:
            to_state_index = state_index_fn(model)
            state_idx = to_state_index(X)
    # always-valid unadjusted chains accept every proposal; the masked
    # bookkeeping below collapses to identities, so skip it wholesale
    plain = not config.mh and not has_val
    sqrt_aa = np.sqrt(config.alpha_a) if eta is not None else None

    if collect == "counts":
        if not model.enumerable:
            raise CapabilityError("collect='counts' needs an enumerable "
                                  "model")
        to_index = state_index_fn(model)
        counts = np.zeros((B, model.state_count), dtype=np.int64)
        samples = None
    elif collect == "samples":
        counts = None
        samples = np.empty(
            (B, (iterations - burn_in + thinning - 1) // thinning, d))
    else:
        counts = samples = None

    n_acc = np.zeros(B, dtype=np.int64)
    n_invalid = np.zeros(B, dtype=np.int64)
    sum_ap = np.zeros(B)
    rows = np.arange(B)

    # carried-over evaluations at the current state
    e_u = grad_u = flips = None
    k_out = 0
    for it in range(1, iterations + 1):
        if config.glu:
            # exact refresh; carried U(X)/gradient/flip evaluations survive
            A = X + np.sqrt(eta) * rng.standard_normal((B, d))
        if fast_binary:
            g = (grad_table[state_idx] if grad_table is not None
                 else model.gradient_batch(X))
            if eta is not None:
                g = g - (X - A) / eta
            d0, d1 = v0 - X, v1 - X
            l0 = 0.5 * g * d0 - d0 * d0 / (2.0 * alpha_col_2d)
            l1 = 0.5 * g * d1 - d1 * d1 / (2.0 * alpha_col_2d)
            p0 = 1.0 / (1.0 + np.exp(l1 - l0))
            u = rng.random((B, d))
            Xp = np.where(u >= p0, v1, v0)
            lqf_d = None
        else:
            logp, e_u, grad_u, flips = _batch_logits(
                X, A, model, values, alpha_col, eta, config.gradient_mode,
                e_u=e_u, grad_u=grad_u, flips=flips)
            u = rng.random((B, d))
            pick = categorical_inverse_cdf(logp, u)
            Xp = values[np.arange(d)[None, :], pick]
            lqf_d = (np.take_along_axis(logp, pick[:, :, None], axis=2
                                        ).sum(axis=(1, 2))
                     if config.mh else None)

        if eta is not None and not config.glu:
            mean = A + 0.5 * config.alpha_a * (X - A) / eta
            Ap = mean + sqrt_aa * rng.standard_normal((B, d))
            lqf_a = (gaussian_logpdf_iso(Ap, mean, config.alpha_a)
                     if config.mh else None)
            if config.aux_box is not None:
                Ap = np.clip(Ap, config.aux_box[0], config.aux_box[1])
        else:
            Ap = A
            lqf_a = np.zeros(B) if config.mh else None

        if plain:
            X = Xp
            if eta is not None and not config.glu:
                A = Ap
            e_u = grad_u = flips = None
            if grad_table is not None:
                state_idx = to_state_index(X)
            if it > burn_in and (it - burn_in - 1) % thinning == 0:
                if collect == "samples":
                    samples[:, k_out, :] = X
                    k_out += 1
                elif collect == "counts":
                    counts[rows, state_idx if state_idx is not None
                           else to_index(X)] += 1
            continue

        u_acc = rng.random(B) if config.mh else None
        valid = model.is_valid_batch(Xp) if has_val else np.ones(B, bool)

        if config.mh:
            # reverse proposal pieces evaluated at the proposed state
            safe_Xp = np.where(valid[:, None], Xp, X)
            logp_r, e_u_p, grad_u_p, flips_p = _batch_logits(
                safe_Xp, Ap, model, values, alpha_col, eta,
                config.gradient_mode)
            cur_idx = _positions(X, values)
            lqr_d = np.take_along_axis(logp_r, cur_idx[:, :, None], axis=2
                                       ).sum(axis=(1, 2))
            if e_u is None:
                e_u = model.energy_batch(X)
            if e_u_p is None:
                e_u_p = model.energy_batch(safe_Xp)
            if config.glu:
                dE = ((e_u_p - (((safe_Xp - Ap) ** 2).sum(1)) / (2 * eta))
                      - (e_u - (((X - A) ** 2).sum(1)) / (2 * eta)))
                log_ratio = (lqr_d - lqf_d) + dE
            elif eta is None:
                log_ratio = (lqr_d - lqf_d) + (e_u_p - e_u)
            else:
                mean_r = Ap + 0.5 * config.alpha_a * (safe_Xp - Ap) / eta
                lqr_a = gaussian_logpdf_iso(A, mean_r, config.alpha_a)
                dE = ((e_u_p - (((safe_Xp - Ap) ** 2).sum(1)) / (2 * eta))
                      - (e_u - (((X - A) ** 2).sum(1)) / (2 * eta)))
                log_ratio = (lqr_d - lqf_d) + (lqr_a - lqf_a) + dE
            log_a = np.minimum(0.0, log_ratio)
            log_a = np.where(valid, log_a, -np.inf)
            acc = (u_acc < np.exp(log_a)) & valid
        else:
            e_u_p = grad_u_p = flips_p = None
            acc = valid
            log_a = np.where(valid, 0.0, -np.inf)

        move = acc[:, None]
        X = np.where(move, Xp, X)
        if eta is not None and not config.glu:
            A = np.where(move, Ap, A)   # glu keeps its refresh in A already
        if config.mh:
            e_u = np.where(acc, e_u_p, e_u)
            grad_u = (np.where(move, grad_u_p, grad_u)
                      if grad_u_p is not None else None)
            flips = (np.where(move[:, :, None], flips_p, flips)
                     if flips_p is not None else None)
        else:
            # nothing evaluated at the accepted state to carry over
            e_u = grad_u = flips = None

        n_invalid += (~valid).astype(np.int64)
        n_acc += acc.astype(np.int64)
        sum_ap += np.where(valid, np.exp(log_a), 0.0)

        if grad_table is not None:
            state_idx = to_state_index(X)
        if it > burn_in and (it - burn_in - 1) % thinning == 0:
            if collect == "samples":
                samples[:, k_out, :] = X
                k_out += 1
            elif collect == "counts":
                counts[rows, state_idx if state_idx is not None
                       else to_index(X)] += 1

    if plain:
        # every proposal of an always-valid unadjusted chain is accepted
        n_acc[:] = iterations
        sum_ap[:] = float(iterations)
    n_counted = np.maximum(iterations - n_invalid, 1)
    return BatchResult(
        samples=samples, counts=counts,
        acceptance_rates=n_acc / n_counted,
        mean_accept_probs=sum_ap / n_counted,
        rejected_invalid=n_invalid,
        final_theta=X, final_theta_a=A)
