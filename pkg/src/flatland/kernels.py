"""Transition kernels for gradient-informed discrete MCMC.

The samplers here propose coordinatewise categorical moves whose logits come
from either a first-order Taylor expansion of the energy (requires a model
gradient) or exact single-coordinate energy differences. Optionally the
discrete variable theta is coupled to a continuous companion variable
theta_a through a harmonic penalty of scale eta:

    U_eta(theta, theta_a) = U(theta) - ||theta - theta_a||^2 / (2 eta)

which rewards flat regions of U: theta_a diffuses around theta, and states
whose neighborhoods are wide keep the penalty small on average. eta = None
is the decoupled limit (the penalty vanishes and the kernels reduce to the
plain discrete Langevin samplers).

Kernel taxonomy (all built from the same proposal ops):

==========  ====  ========  ==========================================
name        mh    coupling  step function
==========  ====  ========  ==========================================
DULA        no    None      unadjusted_step
DMALA       yes   None      mh_step
EDULA       no    finite    unadjusted_step
EDMALA      yes   finite    mh_step
GLU-EDULA   no    finite    glu_step (exact Gaussian theta_a refresh)
GLU-EDMALA  yes   finite    glu_step
==========  ====  ========  ==========================================

All probability arithmetic is in the log domain. Every op draws randomness
in a documented, fixed order so vectorized multi-chain drivers can reproduce
single-chain streams bit for bit (see runner.py).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CapabilityError, ConfigError
from .models import EnergyModel

#: A discrete state is a plain float vector whose entries live in the
#: model's per-coordinate domains.
DiscreteState = np.ndarray

GRADIENT_MODES = ("taylor", "exact_difference")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; chains use root_seed + chain_id."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class JointState:
    """Discrete state plus its continuous companion (equal length).

    For decoupled kernels theta_a is carried along unchanged (convention:
    initialized to theta) so that one state type serves every kernel.
    """
    theta: np.ndarray
    theta_a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta_a",
                           np.asarray(self.theta_a, dtype=float))
        if self.theta.shape != self.theta_a.shape or self.theta.ndim != 1:
            raise ConfigError(
                f"theta {self.theta.shape} and theta_a {self.theta_a.shape} "
                "must be equal-length vectors")


@dataclass(frozen=True)
class SamplerConfig:
    """Hyperparameters selecting and tuning a kernel.

    Parameters
    ----------
    alpha : float
        Discrete proposal stepsize (> 0); scales the quadratic move penalty.
    alpha_a : float
        Auxiliary Langevin stepsize (> 0); unused by decoupled and GLU
        kernels but validated regardless.
    eta : float or None
        Coupling scale (> 0), or None for the decoupled limit.
    mh : bool
        Apply the joint Metropolis-Hastings correction.
    glu : bool
        Refresh theta_a by an exact Gaussian conditional draw instead of a
        Langevin move; requires finite eta.
    aux_box : (lo, hi) or None
        Optional clamp for theta_a, applied after density evaluation.
    gradient_mode : {"taylor", "exact_difference"}
        How discrete logits obtain energy information.
    """
    alpha: float
    alpha_a: float = 0.1
    eta: Optional[float] = None
    mh: bool = True
    glu: bool = False
    aux_box: Optional[tuple[float, float]] = None
    gradient_mode: str = "taylor"

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not (np.isfinite(self.alpha_a) and self.alpha_a > 0):
            raise ConfigError(f"alpha_a must be positive, got {self.alpha_a}")
        if self.eta is not None and not (np.isfinite(self.eta) and self.eta > 0):
            raise ConfigError(f"eta must be positive or None, got {self.eta}")
        if self.glu and self.eta is None:
            raise ConfigError("glu requires a finite coupling eta")
        if self.glu and self.aux_box is not None:
            raise ConfigError("aux_box cannot be combined with glu; the "
                              "exact conditional draw must not be clamped")
        if self.aux_box is not None:
            lo, hi = self.aux_box
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"aux_box must satisfy lo < hi, got "
                                  f"({lo}, {hi})")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigError(f"gradient_mode must be one of "
                              f"{GRADIENT_MODES}, got {self.gradient_mode!r}")

    @property
    def decoupled(self) -> bool:
        return self.eta is None


@dataclass(frozen=True)
class CoordinateProposal:
    """Normalized categorical proposal for one coordinate (log domain)."""
    values: np.ndarray      # candidate values, the coordinate's domain order
    log_probs: np.ndarray   # same length; exp sums to 1

    def log_prob_of(self, v: float) -> float:
        idx = int(np.searchsorted(self.values, v))
        if idx >= len(self.values) or self.values[idx] != v:
            raise ConfigError(f"value {v!r} not in coordinate domain")
        return float(self.log_probs[idx])


@dataclass(frozen=True)
class StepOutcome:
    """Result of one kernel application.

    ``state`` is the post-step joint state; ``proposal`` the proposed joint
    state whether or not it was kept. ``invalid_proposal`` marks proposals
    rejected for violating model validity (zero target mass) rather than by
    the MH coin; unadjusted kernels accept everything else.
    """
    state: JointState
    accepted: bool
    log_accept_prob: float
    proposal_log_q_fwd: float
    proposal_log_q_rev: float
    proposal: Optional[JointState] = None
    invalid_proposal: bool = False


# ---------------------------------------------------------------------------
# formula helpers (shared with the vectorized multi-chain driver)
# ---------------------------------------------------------------------------

def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Log-domain softmax via max subtraction; tolerates -inf entries."""
    m = np.max(logits, axis=axis, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def gaussian_logpdf_iso(x: np.ndarray, mean: np.ndarray, var) -> np.ndarray:
    """Isotropic Gaussian log density, summed over the last axis."""
    x = np.asarray(x, dtype=float)
    diff = x - mean
    d = x.shape[-1]
    return (-0.5 * d * np.log(2.0 * np.pi * np.asarray(var))
            - (diff ** 2).sum(axis=-1) / (2.0 * np.asarray(var)))


def categorical_inverse_cdf(log_probs: np.ndarray, u) -> np.ndarray:
    """Inverse-CDF sampling along the last axis; ties break in domain order.

    ``u`` has the leading shape of ``log_probs`` (one uniform per
    categorical). Returns integer indices into the last axis.
    """
    cdf = np.cumsum(np.exp(log_probs), axis=-1)
    idx = (np.asarray(u)[..., None] >= cdf).sum(axis=-1)
    return np.minimum(idx, log_probs.shape[-1] - 1)


def taylor_logits(theta, grad, values, alpha) -> np.ndarray:
    """Unnormalized proposal logits from a first-order energy expansion.

    Shapes broadcast: theta/grad (..., d), values (d, K) or (..., d, K),
    alpha scalar or (..., 1, 1). Row i column k is
    0.5 * grad_i * (v - theta_i) - (v - theta_i)^2 / (2 alpha).
    """
    dv = values - np.asarray(theta)[..., None]
    return 0.5 * np.asarray(grad)[..., None] * dv - dv ** 2 / (2.0 * alpha)


def exact_difference_logits(theta, theta_a, flip_e, e0, values, alpha,
                            eta) -> np.ndarray:
    """Unnormalized logits from exact single-coordinate energy differences.

    ``flip_e[..., i, k]`` is U at theta with coordinate i set to values[i, k]
    and ``e0`` is U(theta). Candidates with non-finite energy (validity
    failures) contribute zero energy signal -- only the move penalty and
    coupling term remain -- because such proposals are rejected downstream;
    a -inf logit would instead freeze the coordinate entirely.

    The coupling contribution is exact (the penalty is quadratic, so its
    single-coordinate difference needs no approximation). Pass eta=None for
    decoupled kernels.
    """
    e0 = np.asarray(e0, dtype=float)
    if not np.all(np.isfinite(e0)):
        raise ConfigError("current state has non-finite energy; chains must "
                          "sit at valid states")
    delta = np.where(np.isfinite(flip_e), flip_e - e0[..., None, None], 0.0)
    theta = np.asarray(theta)
    dv = values - theta[..., None]
    if eta is not None:
        gap = values - np.asarray(theta_a)[..., None]
        gap0 = (theta - np.asarray(theta_a))[..., None]
        delta = delta - (gap ** 2 - gap0 ** 2) / (2.0 * eta)
    return 0.5 * delta - dv ** 2 / (2.0 * alpha)


def stacked_domains(model: EnergyModel) -> np.ndarray:
    """(d, K) matrix of candidate values; requires equal-size domains."""
    sizes = {len(dom) for dom in model.domains}
    if len(sizes) != 1:
        raise CapabilityError("model has ragged domains; use the "
                              "per-coordinate proposal path")
    return np.array(model.domains, dtype=float)


# ---------------------------------------------------------------------------
# proposal operations
# ---------------------------------------------------------------------------

def joint_energy(state: JointState, eta: Optional[float],
                 model: EnergyModel) -> float:
    """U(theta) - ||theta - theta_a||^2 / (2 eta); just U when decoupled."""
    if state.theta.shape != (model.dim,):
        raise ConfigError(f"state dimension {state.theta.shape} does not "
                          f"match model dimension {model.dim}")
    e = model.energy(state.theta)
    if eta is None:
        return float(e)
    gap = state.theta - state.theta_a
    return float(e - (gap @ gap) / (2.0 * eta))


def joint_gradient(state: JointState, eta: Optional[float],
                   model: EnergyModel):
    """Gradient blocks of the joint energy at (theta, theta_a).

    Returns (grad_theta, grad_theta_a); the latter is zero when decoupled.
    """
    if state.theta.shape != (model.dim,):
        raise ConfigError(f"state dimension {state.theta.shape} does not "
                          f"match model dimension {model.dim}")
    g = model.gradient(state.theta)
    if eta is None:
        return g, np.zeros_like(g)
    pull = (state.theta - state.theta_a) / eta
    return g - pull, pull


def build_coordinate_proposal(i: int, state: JointState,
                              grad_theta: Optional[np.ndarray],
                              config: SamplerConfig,
                              model: EnergyModel) -> CoordinateProposal:
    """Categorical proposal for coordinate i given the shared gradient.

    In taylor mode ``grad_theta`` must be the theta block of
    ``joint_gradient`` at ``state``; in exact_difference mode it is ignored
    and single-coordinate energy differences (plus the exact coupling
    difference) are used instead.
    """
    dom = model.domains[i]
    if len(dom) < 2:
        raise ConfigError(f"coordinate {i} has a degenerate domain {dom!r}")
    values = np.asarray(dom, dtype=float)
    ti = state.theta[i]
    if config.gradient_mode == "taylor":
        if grad_theta is None:
            raise ConfigError("taylor mode needs the joint gradient")
        logits = taylor_logits(ti, grad_theta[i], values, config.alpha)
    else:
        cand = model.conditional_energies(state.theta, i)
        e0 = model.energy(state.theta)
        logits = exact_difference_logits(
            np.array([ti]), np.array([state.theta_a[i]]),
            cand[None, :], e0, values[None, :], config.alpha, config.eta)[0]
    return CoordinateProposal(values=values, log_probs=log_softmax(logits))


def all_coordinate_proposals(state: JointState, config: SamplerConfig,
                             model: EnergyModel) -> list[CoordinateProposal]:
    """Proposals for every coordinate from ONE shared evaluation.

    This is the parallel-update contract: a single gradient (or flip-energy
    table) at the current state feeds all d coordinates simultaneously.
    Vectorizes over coordinates when the domains are rectangular.
    """
    if any(len(dom) < 2 for dom in model.domains):
        raise ConfigError("model has a degenerate (size < 2) domain")
    if config.gradient_mode == "taylor":
        g, _ = joint_gradient(state, config.eta, model)
        try:
            values = stacked_domains(model)
        except CapabilityError:
            return [build_coordinate_proposal(i, state, g, config, model)
                    for i in range(model.dim)]
        logp = log_softmax(taylor_logits(state.theta, g, values, config.alpha))
        return [CoordinateProposal(values=values[i], log_probs=logp[i])
                for i in range(model.dim)]
    try:
        values = stacked_domains(model)
    except CapabilityError:
        return [build_coordinate_proposal(i, state, None, config, model)
                for i in range(model.dim)]
    flip_e = model.flip_energies(state.theta)
    e0 = model.energy(state.theta)
    logits = exact_difference_logits(state.theta, state.theta_a, flip_e, e0,
                                     values, config.alpha, config.eta)
    logp = log_softmax(logits)
    return [CoordinateProposal(values=values[i], log_probs=logp[i])
            for i in range(model.dim)]


def propose_discrete(state: JointState, config: SamplerConfig,
                     model: EnergyModel, rng: np.random.Generator):
    """Sample all coordinates in parallel; returns (theta_new, log_q_fwd).

    Consumes exactly d uniforms (one per coordinate, in coordinate order).
    """
    props = all_coordinate_proposals(state, config, model)
    u = rng.random(model.dim)
    theta_new = np.empty(model.dim)
    log_q = 0.0
    for i, cp in enumerate(props):
        k = int(categorical_inverse_cdf(cp.log_probs, u[i]))
        theta_new[i] = cp.values[k]
        log_q += float(cp.log_probs[k])
    return theta_new, log_q


def propose_auxiliary(state: JointState, config: SamplerConfig,
                      rng: np.random.Generator):
    """Langevin move of theta_a; returns (theta_a_new, log_q_fwd).

    Consumes exactly d standard normals. The forward density is evaluated
    at the raw draw; any aux_box clamp applies only afterwards, so MH
    ratios always use the unconstrained Gaussian density.
    """
    if config.decoupled:
        raise ConfigError("auxiliary proposal requires a finite coupling; "
                          "decoupled kernels do not move theta_a")
    pull = (state.theta - state.theta_a) / config.eta
    mean = state.theta_a + 0.5 * config.alpha_a * pull
    raw = mean + math.sqrt(config.alpha_a) * rng.standard_normal(len(mean))
    log_q = float(gaussian_logpdf_iso(raw, mean, config.alpha_a))
    if config.aux_box is not None:
        raw = np.clip(raw, config.aux_box[0], config.aux_box[1])
    return raw, log_q


def log_q_discrete(theta_to: DiscreteState, from_state: JointState,
                   config: SamplerConfig, model: EnergyModel) -> float:
    """Log probability that the parallel proposal at from_state emits theta_to."""
    theta_to = np.asarray(theta_to, dtype=float)
    props = all_coordinate_proposals(from_state, config, model)
    return float(sum(cp.log_prob_of(theta_to[i])
                     for i, cp in enumerate(props)))


def log_q_auxiliary(theta_a_to: np.ndarray, from_state: JointState,
                    config: SamplerConfig) -> float:
    """Log density of the auxiliary Langevin proposal at theta_a_to."""
    if config.decoupled:
        raise ConfigError("auxiliary density undefined for decoupled kernels")
    pull = (from_state.theta - from_state.theta_a) / config.eta
    mean = from_state.theta_a + 0.5 * config.alpha_a * pull
    return float(gaussian_logpdf_iso(np.asarray(theta_a_to, float), mean,
                                     config.alpha_a))


# ---------------------------------------------------------------------------
# step kernels
# ---------------------------------------------------------------------------

def _invalid(model: EnergyModel, theta: np.ndarray) -> bool:
    return model.has_validity and not model.is_valid(theta)


def mh_step(state: JointState, config: SamplerConfig, model: EnergyModel,
            rng: np.random.Generator) -> StepOutcome:
    """One Metropolis-adjusted step; accepts or rejects the pair atomically.

    Randomness order: d uniforms (discrete proposal), then d normals
    (auxiliary proposal, finite coupling only), then 1 uniform (MH coin).
    """
    if not config.mh:
        raise ConfigError("mh_step requires config.mh = true")
    theta_p, lqf_d = propose_discrete(state, config, model, rng)
    if config.decoupled:
        proposed = JointState(theta_p, state.theta_a)
        lqf_a = 0.0
    else:
        theta_a_p, lqf_a = propose_auxiliary(state, config, rng)
        proposed = JointState(theta_p, theta_a_p)
    u_acc = rng.random()
    if _invalid(model, theta_p):
        return StepOutcome(state=state, accepted=False,
                           log_accept_prob=-np.inf,
                           proposal_log_q_fwd=lqf_d + lqf_a,
                           proposal_log_q_rev=np.nan,
                           proposal=proposed, invalid_proposal=True)
    lqr_d = log_q_discrete(state.theta, proposed, config, model)
    lqr_a = (0.0 if config.decoupled
             else log_q_auxiliary(state.theta_a, proposed, config))
    log_ratio = ((lqr_d - lqf_d) + (lqr_a - lqf_a)
                 + joint_energy(proposed, config.eta, model)
                 - joint_energy(state, config.eta, model))
    log_a = min(0.0, log_ratio)
    accepted = bool(u_acc < np.exp(log_a))
    return StepOutcome(state=proposed if accepted else state,
                       accepted=accepted, log_accept_prob=log_a,
                       proposal_log_q_fwd=lqf_d + lqf_a,
                       proposal_log_q_rev=lqr_d + lqr_a,
                       proposal=proposed)


def unadjusted_step(state: JointState, config: SamplerConfig,
                    model: EnergyModel,
                    rng: np.random.Generator) -> StepOutcome:
    """One unadjusted step: same proposals as mh_step, always kept.

    The only rejections are validity failures (models with invalid states),
    flagged via ``invalid_proposal``. Randomness order matches mh_step minus
    the MH coin.
    """
    if config.mh:
        raise ConfigError("unadjusted_step requires config.mh = false")
    theta_p, lqf_d = propose_discrete(state, config, model, rng)
    if config.decoupled:
        proposed = JointState(theta_p, state.theta_a)
        lqf_a = 0.0
    else:
        theta_a_p, lqf_a = propose_auxiliary(state, config, rng)
        proposed = JointState(theta_p, theta_a_p)
    if _invalid(model, theta_p):
        return StepOutcome(state=state, accepted=False,
                           log_accept_prob=-np.inf,
                           proposal_log_q_fwd=lqf_d + lqf_a,
                           proposal_log_q_rev=np.nan,
                           proposal=proposed, invalid_proposal=True)
    return StepOutcome(state=proposed, accepted=True, log_accept_prob=0.0,
                       proposal_log_q_fwd=lqf_d + lqf_a,
                       proposal_log_q_rev=np.nan, proposal=proposed)


def glu_step(state: JointState, config: SamplerConfig, model: EnergyModel,
             rng: np.random.Generator) -> StepOutcome:
    """Gibbs-refresh variant: exact conditional draw of theta_a, then theta.

    theta_a' ~ N(theta, eta I) is always kept (it is an exact conditional
    sample); the discrete move is then proposed given theta_a' and, with
    mh = true, accepted with probability
    min(1, q(theta | proposed) pi(proposed) / q(theta' | current) pi(current))
    -- no auxiliary density ratio appears because the refresh is exact.

    Randomness order: d normals (refresh), d uniforms (discrete proposal),
    then 1 uniform (MH coin, mh only).
    """
    if not config.glu:
        raise ConfigError("glu_step requires config.glu = true")
    eta = config.eta
    theta_a_new = state.theta + math.sqrt(eta) * rng.standard_normal(
        len(state.theta))
    mid = JointState(state.theta, theta_a_new)
    theta_p, lqf_d = propose_discrete(mid, config, model, rng)
    proposed = JointState(theta_p, theta_a_new)
    u_acc = rng.random() if config.mh else None
    if _invalid(model, theta_p):
        return StepOutcome(state=mid, accepted=False,
                           log_accept_prob=-np.inf,
                           proposal_log_q_fwd=lqf_d,
                           proposal_log_q_rev=np.nan,
                           proposal=proposed, invalid_proposal=True)
    if not config.mh:
        return StepOutcome(state=proposed, accepted=True,
                           log_accept_prob=0.0, proposal_log_q_fwd=lqf_d,
                           proposal_log_q_rev=np.nan, proposal=proposed)
    lqr_d = log_q_discrete(state.theta, proposed, config, model)
    log_ratio = ((lqr_d - lqf_d)
                 + joint_energy(proposed, eta, model)
                 - joint_energy(mid, eta, model))
    log_a = min(0.0, log_ratio)
    accepted = bool(u_acc < np.exp(log_a))
    return StepOutcome(state=proposed if accepted else mid,
                       accepted=accepted, log_accept_prob=log_a,
                       proposal_log_q_fwd=lqf_d, proposal_log_q_rev=lqr_d,
                       proposal=proposed)


def step(state: JointState, config: SamplerConfig, model: EnergyModel,
         rng: np.random.Generator) -> StepOutcome:
    """Dispatch to the kernel selected by the config flags."""
    if config.glu:
        return glu_step(state, config, model, rng)
    if config.mh:
        return mh_step(state, config, model, rng)
    return unadjusted_step(state, config, model, rng)
