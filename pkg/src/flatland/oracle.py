"""Brute-force reference implementations used only by tests.

Everything here is written naively and independently of the kernel code --
straight probability-domain enumeration with explicit loops where feasible
-- so agreement between the two paths is meaningful evidence. Only the
energy model itself is shared.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import CapabilityError, ConfigError, NumericError

#: Discrete kernels with exactly enumerable transition matrices. The
#: coupled samplers carry a continuous companion variable and are excluded.
MATRIX_KERNELS = ("dula", "dmala", "gibbs", "gwg")


def enumerate_states(model) -> np.ndarray:
    """All states as an (S, d) array, lexicographic in the domain order."""
    if math.prod(len(dom) for dom in model.domains) > 2 ** 20:
        raise CapabilityError("state space too large to enumerate")
    return np.array(list(itertools.product(*model.domains)), dtype=float)


def target_probs(model) -> np.ndarray:
    """Exactly normalized target over the enumeration order."""
    states = enumerate_states(model)
    e = np.array([model.energy(s) for s in states])
    w = np.exp(e - e.max())
    return w / w.sum()


def finite_difference_gradient(f, x: np.ndarray, h: float = 1e-5
                               ) -> np.ndarray:
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h."""
    x = np.asarray(x, dtype=float)
    g = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def _softmax(z: np.ndarray) -> np.ndarray:
    w = np.exp(z - z.max())
    return w / w.sum()


def _coordinate_tables(model, state: np.ndarray, alpha: float,
                       gradient_mode: str) -> list[np.ndarray]:
    """Per-coordinate proposal probabilities at one state (probability
    domain, one vector per coordinate in domain order)."""
    tables = []
    if gradient_mode == "taylor":
        g = model.gradient(state)
        for i, dom in enumerate(model.domains):
            v = np.array(dom, dtype=float)
            z = 0.5 * g[i] * (v - state[i]) - (v - state[i]) ** 2 / (2 * alpha)
            tables.append(_softmax(z))
    else:
        e0 = model.energy(state)
        for i, dom in enumerate(model.domains):
            v = np.array(dom, dtype=float)
            z = np.empty(len(v))
            for k, val in enumerate(v):
                work = np.array(state, copy=True)
                work[i] = val
                ek = model.energy(work)
                de = ek - e0 if np.isfinite(ek) else 0.0
                z[k] = 0.5 * de - (val - state[i]) ** 2 / (2 * alpha)
            tables.append(_softmax(z))
    return tables


def _product_rows(tables: list[np.ndarray]) -> np.ndarray:
    """Joint factorized proposal over the enumeration order."""
    row = np.ones(1)
    for t in tables:
        row = np.outer(row, t).ravel()
    return row


def exact_kernel_matrix(sampler: str, config, model) -> np.ndarray:
    """Exact S x S transition matrix of a purely discrete kernel.

    ``config`` supplies alpha and gradient_mode for the stepsize-driven
    kernels and is ignored by gibbs/gwg. MH acceptance and the matching
    rejection mass are folded in analytically.
    """
    name = sampler.strip().lower().replace("_", "-")
    if name not in MATRIX_KERNELS:
        raise CapabilityError(
            f"no exact matrix for {sampler!r}; enumerable kernels are "
            f"{MATRIX_KERNELS}")
    states = enumerate_states(model)
    S = states.shape[0]
    energies = np.array([model.energy(s) for s in states])

    if name in ("dula", "dmala"):
        if config is None:
            raise ConfigError("dula/dmala matrices need a config with alpha")
        alpha = config.alpha
        mode = getattr(config, "gradient_mode", "taylor")
        Q = np.empty((S, S))
        for s_idx in range(S):
            tables = _coordinate_tables(model, states[s_idx], alpha, mode)
            Q[s_idx] = _product_rows(tables)
        if name == "dula":
            return Q
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (np.exp(energies[None, :] - energies[:, None])
                     * Q.T / Q)
        A = np.minimum(1.0, np.where(Q > 0, ratio, 0.0))
        P = Q * A
        np.fill_diagonal(P, 0.0)
        np.fill_diagonal(P, 1.0 - P.sum(axis=1))
        return P

    if name == "gibbs":
        # systematic scan: product of per-coordinate conditional matrices
        P = np.eye(S)
        index_of = {tuple(s): i for i, s in enumerate(states)}
        for i, dom in enumerate(model.domains):
            C = np.zeros((S, S))
            for s_idx, s in enumerate(states):
                cond = np.empty(len(dom))
                targets = np.empty(len(dom), dtype=np.int64)
                for k, val in enumerate(dom):
                    work = np.array(s, copy=True)
                    work[i] = val
                    cond[k] = model.energy(work)
                    targets[k] = index_of[tuple(work)]
                probs = _softmax(cond)
                for k in range(len(dom)):
                    C[s_idx, targets[k]] += probs[k]
            P = P @ C
        return P

    # gwg: single-coordinate flip, gradient-weighted pick, MH corrected
    if any(len(dom) != 2 for dom in model.domains):
        raise CapabilityError("gwg matrix requires binary domains")
    index_of = {tuple(s): i for i, s in enumerate(states)}
    d = model.dim
    pick = np.empty((S, d))
    flip_target = np.empty((S, d), dtype=np.int64)
    for s_idx, s in enumerate(states):
        g = model.gradient(s)
        z = np.empty(d)
        for i, dom in enumerate(model.domains):
            other = dom[1] if s[i] == dom[0] else dom[0]
            z[i] = 0.5 * g[i] * (other - s[i])
            work = np.array(s, copy=True)
            work[i] = other
            flip_target[s_idx, i] = index_of[tuple(work)]
        pick[s_idx] = _softmax(z)
    P = np.zeros((S, S))
    for s_idx in range(S):
        for i in range(d):
            t_idx = flip_target[s_idx, i]
            # the reverse move flips the same coordinate back
            a = min(1.0, math.exp(energies[t_idx] - energies[s_idx])
                    * pick[t_idx, i] / pick[s_idx, i])
            P[s_idx, t_idx] += pick[s_idx, i] * a
    np.fill_diagonal(P, 1.0 - P.sum(axis=1) + np.diag(P))
    return P


def _primitive(P: np.ndarray, max_squarings: int = 24) -> bool:
    """Whether some power of P is strictly positive (boolean squaring)."""
    B = P > 0
    for _ in range(max_squarings):
        if B.all():
            return True
        B = B @ B
    return bool(B.all())


def stationary_distribution(P: np.ndarray, tol: float = 1e-12,
                            max_iter: int = 10 ** 6) -> np.ndarray:
    """Left fixed vector of a row-stochastic matrix by power iteration."""
    P = np.asarray(P, dtype=float)
    S = P.shape[0]
    if P.shape != (S, S) or np.any(P < -1e-15):
        raise ConfigError("P must be a square nonnegative matrix")
    if not np.allclose(P.sum(axis=1), 1.0, atol=1e-10):
        raise ConfigError("P rows must sum to 1")
    if not _primitive(P):
        raise NumericError("chain is not irreducible+aperiodic; no unique "
                           "stationary distribution")
    v = np.full(S, 1.0 / S)
    for _ in range(max_iter):
        w = v @ P
        w /= w.sum()
        if np.max(np.abs(w - v)) < tol:
            return w
        v = w
    raise NumericError(f"power iteration did not reach {tol} within "
                       f"{max_iter} iterations")
