"""Energy models over finite discrete product spaces.

Every model exposes an (unnormalized) log-mass ``energy`` U on the discrete
space, extended where possible to a differentiable function on the
coordinatewise convex hull so gradient-informed proposals can use it. The
four concrete models cover the benchmark targets:

* :class:`CategoricalPMFModel` -- a tabulated PMF on binary strings with its
  multilinear extension (the unique per-coordinate-linear interpolant).
* :class:`TSPModel` -- negative weighted tour length over bit-encoded routes;
  discrete-only (no smooth extension), with a validity notion.
* :class:`RBMModel` -- softplus free energy of a restricted Boltzmann machine.
* :class:`BinaryRegressionNetModel` -- negative squared error of a two-layer
  tanh network whose weights are the (binary) sampling variables.

Conventions used across the package: target probability is proportional to
``exp(U)`` (energies are *log*-masses, higher is more probable); invalid
states (TSP only) have energy ``-inf``.
"""

from __future__ import annotations

import itertools
import json
import math
from abc import ABC, abstractmethod
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import CapabilityError, ConfigError

#: Hard cap on the number of states a model may enumerate.
ENUMERATION_LIMIT = 2 ** 20

#: Dimension cap for tabulated PMF models (bounds the table at 2^20 entries).
PMF_MAX_DIM = 20


def _sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class EnergyModel(ABC):
    """Interface for energy functions over a finite product space.

    Attributes
    ----------
    dim : int
        Number of coordinates d.
    domains : tuple of tuples
        Per-coordinate finite ordered value sets Theta_i, ascending. The
        declared order fixes both the enumeration order and the inverse-CDF
        sampling order used by the kernels.
    has_gradient : bool
        Whether ``gradient`` is implemented (on the convex hull of Theta).
    has_validity : bool
        Whether some discrete states are invalid (zero target mass).
    """

    dim: int
    domains: tuple[tuple[float, ...], ...]
    has_gradient: bool = False
    has_validity: bool = False

    # -- core contract ----------------------------------------------------

    @abstractmethod
    def energy(self, x: np.ndarray) -> float:
        """Log target mass U(x), up to an additive constant."""

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise CapabilityError(
            f"{type(self).__name__} does not provide a gradient")

    def is_valid(self, theta: np.ndarray) -> bool:
        """Whether a discrete state carries target mass. True by default."""
        return True

    # -- enumeration ------------------------------------------------------

    @property
    def state_count(self) -> int:
        return math.prod(len(dom) for dom in self.domains)

    @property
    def enumerable(self) -> bool:
        return self.state_count <= ENUMERATION_LIMIT

    def enumerate_states(self) -> Iterator[np.ndarray]:
        """Yield every state exactly once, in lexicographic domain order."""
        if not self.enumerable:
            raise CapabilityError(
                f"state space of size {self.state_count} exceeds the "
                f"enumeration limit {ENUMERATION_LIMIT}")
        for combo in itertools.product(*self.domains):
            yield np.array(combo, dtype=float)

    # -- sampling support -------------------------------------------------

    def random_state(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw over the product space (chain initialization)."""
        return np.array(
            [dom[rng.integers(0, len(dom))] for dom in self.domains],
            dtype=float)

    def conditional_energies(self, theta: np.ndarray, i: int) -> np.ndarray:
        """U at every single-coordinate modification theta[i] <- v.

        Returns one energy per candidate v in ``domains[i]`` (the current
        value is included). Base implementation loops over ``energy``.
        """
        work = np.array(theta, dtype=float, copy=True)
        out = np.empty(len(self.domains[i]))
        for k, v in enumerate(self.domains[i]):
            work[i] = v
            out[k] = self.energy(work)
        return out

    def flip_energies(self, theta: np.ndarray) -> np.ndarray:
        """(d, K) table of U(theta with i <- v) for uniform-size domains."""
        sizes = {len(dom) for dom in self.domains}
        if len(sizes) != 1:
            raise CapabilityError(
                "flip_energies requires equally sized domains; use "
                "conditional_energies per coordinate instead")
        return np.stack(
            [self.conditional_energies(theta, i) for i in range(self.dim)])

    # -- vectorized hooks (overridden where it pays off) -------------------

    def energy_batch(self, X: np.ndarray) -> np.ndarray:
        """U for each row of an (B, d) batch. Base implementation loops."""
        return np.array([self.energy(x) for x in np.atleast_2d(X)])

    def gradient_batch(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self.gradient(x) for x in np.atleast_2d(X)])

    def corner_gradient_table(self) -> Optional[np.ndarray]:
        """(S, d) gradients at every enumerated state, or None.

        Available for enumerable gradient models over {0,1} coordinates up
        to 2**14 states; hot loops index this table by state instead of
        re-evaluating the gradient. Built lazily, cached on the instance.
        """
        if not (self.has_gradient and self.state_count <= 2 ** 14
                and all(dom == (0.0, 1.0) for dom in self.domains)):
            return None
        cached = getattr(self, "_corner_grad_table", None)
        if cached is None:
            cached = np.ascontiguousarray(
                self.gradient_batch(state_table(self)))
            self._corner_grad_table = cached
        return cached

    def is_valid_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.is_valid(x) for x in np.atleast_2d(X)],
                        dtype=bool)

    def flip_energies_batch(self, X: np.ndarray) -> np.ndarray:
        """(B, d, K) stack of per-row flip-energy tables."""
        return np.stack([self.flip_energies(x) for x in np.atleast_2d(X)])


# ---------------------------------------------------------------------------
# state indexing utilities (shared by diagnostics and oracles)
# ---------------------------------------------------------------------------

def state_index_fn(model: EnergyModel):
    """Return a vectorized map from states to enumeration-order indices.

    The returned callable accepts an (..., d) array of coordinate values
    and yields int64 indices consistent with ``enumerate_states`` order.
    """
    doms = [np.asarray(dom, dtype=float) for dom in model.domains]
    sizes = np.array([len(dom) for dom in doms], dtype=np.int64)
    # multiplier of coordinate i is the number of states of the tail i+1..d
    mults = np.concatenate(
        [np.cumprod(sizes[::-1])[::-1][1:], np.array([1], dtype=np.int64)])

    if all(len(dom) == 2 and dom[0] == 0.0 and dom[1] == 1.0
           for dom in doms):
        def to_index(X: np.ndarray) -> np.ndarray:
            return np.asarray(X).astype(np.int64) @ mults
        return to_index

    def to_index(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        idx = np.zeros(X.shape[:-1], dtype=np.int64)
        for i, dom in enumerate(doms):
            pos = np.searchsorted(dom, X[..., i])
            idx += pos * mults[i]
        return idx

    return to_index


def state_table(model: EnergyModel) -> np.ndarray:
    """Materialize the full (S, d) state matrix in enumeration order."""
    return np.array(list(itertools.product(*model.domains)), dtype=float)


# ---------------------------------------------------------------------------
# tabulated PMF with multilinear extension
# ---------------------------------------------------------------------------

class CategoricalPMFModel(EnergyModel):
    """Tabulated PMF on {0,1}^d with its multilinear continuous extension.

    Parameters
    ----------
    probs : array_like, shape (2**d,)
        Strictly positive probabilities in lexicographic order of the binary
        states (first coordinate most significant). Values are renormalized
        exactly; the raw table must already sum to 1 within 1e-3.

    The extension is U(x) = sum_a [prod_n x_n^{a_n} (1-x_n)^{1-a_n}] ln p_a,
    linear in each coordinate, so U at a binary corner is exactly ln p of
    that corner.
    """

    has_gradient = True

    def __init__(self, probs: Sequence[float]):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2 or (probs.size & (probs.size - 1)):
            raise ConfigError(
                f"probability table must have 2**d entries, got {probs.size}")
        d = probs.size.bit_length() - 1
        if d > PMF_MAX_DIM:
            raise ConfigError(f"PMF dimension {d} exceeds cap {PMF_MAX_DIM}")
        if not np.all(np.isfinite(probs)) or np.any(probs <= 0):
            raise ConfigError("probabilities must be finite and positive")
        total = probs.sum()
        if abs(total - 1.0) > 1e-3:
            raise ConfigError(f"probability table sums to {total!r}, not 1")
        self.dim = d
        self.domains = (((0.0, 1.0),) * d)
        self._log_table = np.log(probs / total)
        self._pow2 = (2 ** np.arange(d - 1, -1, -1)).astype(np.int64)
        self._corner_grads: np.ndarray | None = None

    @property
    def log_table(self) -> np.ndarray:
        """Normalized log-probability table (copy), lexicographic order."""
        return self._log_table.copy()

    def _is_corner(self, x: np.ndarray) -> bool:
        return bool(np.all((x == 0.0) | (x == 1.0)))

    def energy(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ConfigError(f"state has shape {x.shape}, expected ({self.dim},)")
        if self._is_corner(x):
            return float(self._log_table[int(x @ self._pow2)])
        t = self._log_table.reshape((2,) * self.dim)
        for xi in x:
            t = t[0] * (1.0 - xi) + t[1] * xi
        return float(t)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ConfigError(f"state has shape {x.shape}, expected ({self.dim},)")
        table = self._log_table.reshape((2,) * self.dim)
        grad = np.empty(self.dim)
        for j in range(self.dim):
            t = table
            for k, xk in enumerate(x):
                t = (t[1] - t[0]) if k == j else t[0] * (1.0 - xk) + t[1] * xk
            grad[j] = t
        return grad

    def energy_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if np.all((X == 0.0) | (X == 1.0)):
            return self._log_table[(X @ self._pow2).astype(np.int64)]
        return super().energy_batch(X)

    def gradient_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.dim <= 14 and np.all((X == 0.0) | (X == 1.0)):
            if self._corner_grads is None:
                corners = state_table(self)
                self._corner_grads = np.stack(
                    [self.gradient(c) for c in corners])
            return self._corner_grads[(X @ self._pow2).astype(np.int64)]
        return super().gradient_batch(X)


# ---------------------------------------------------------------------------
# traveling-salesman tour energy over bit-encoded routes
# ---------------------------------------------------------------------------

class TSPModel(EnergyModel):
    """Negative weighted tour length over bit-encoded city routes.

    A state is n groups of ``bits_per_city`` binary coordinates; group g,
    read big-endian, is the index of the city visited g-th. States whose
    decoded indices form a permutation of 0..n-1 carry the tour energy

        U(theta) = -sum_g w[r_g, r_{g+1}] * ||coords[r_g] - coords[r_{g+1}]||

    (cyclically, including the return leg). Any other state -- a repeated
    index, or an index outside the city range when ``bits_per_city`` is
    oversized -- is not a tour and carries ``-inf``: samplers treat such
    proposals as validity failures, rejecting them in place and staying
    put. Every single-bit flip off a permutation collides with another
    city, so proposal logits see no finite energy differences here; moves
    happen through coordinated multi-bit flips (city swaps) that the
    factorized proposal emits by chance. There is no continuous extension,
    hence no gradient -- use the exact-difference proposal mode.

    Parameters
    ----------
    coords : array_like, shape (n, 2)
    weights : array_like, shape (n, n), optional
        Directional leg weights; defaults to all ones (pure Euclidean).
    bits_per_city : int, optional
        Defaults to ceil(log2 n); may be larger (padding enlarges the
        invalid region but keeps decoding well-defined).
    """

    has_gradient = False
    has_validity = True

    def __init__(self, coords, weights=None, bits_per_city: int | None = None):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 2:
            raise ConfigError("coords must be an (n, 2) array with n >= 2")
        n = coords.shape[0]
        min_bits = max(1, (n - 1).bit_length())
        bits = min_bits if bits_per_city is None else int(bits_per_city)
        if bits < min_bits:
            raise ConfigError(
                f"bits_per_city={bits} cannot encode {n} cities")
        if weights is None:
            weights = np.ones((n, n))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n, n):
            raise ConfigError(f"weights must be ({n}, {n})")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ConfigError("weights must be finite and nonnegative")

        self.n_cities = n
        self.coords = coords
        self.weights = weights
        self.bits_per_city = bits
        self.dim = n * bits
        self.domains = ((0.0, 1.0),) * self.dim
        self._group_pow = (2 ** np.arange(bits - 1, -1, -1)).astype(np.int64)
        diff = coords[:, None, :] - coords[None, :, :]
        self._leg_cost = weights * np.sqrt((diff ** 2).sum(axis=-1))

    @property
    def enumerable(self) -> bool:  # bit-product space; oracle use excluded
        return False

    def decode_route(self, theta: np.ndarray) -> np.ndarray | None:
        """Decode a state into a city sequence, or None if not a permutation."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ConfigError(
                f"state has shape {theta.shape}, expected ({self.dim},)")
        vals = (theta.reshape(self.n_cities, self.bits_per_city)
                @ self._group_pow).astype(np.int64)
        if np.array_equal(np.sort(vals), np.arange(self.n_cities)):
            return vals
        return None

    def encode_route(self, route: Sequence[int]) -> np.ndarray:
        """Inverse of :meth:`decode_route` for a permutation of 0..n-1."""
        route = np.asarray(route, dtype=np.int64)
        if not np.array_equal(np.sort(route), np.arange(self.n_cities)):
            raise ConfigError("route must be a permutation of 0..n-1")
        bits = ((route[:, None] >> np.arange(self.bits_per_city - 1, -1, -1))
                & 1)
        return bits.reshape(-1).astype(float)

    def route_cost(self, route: np.ndarray) -> float:
        """Weighted closed-tour length of a decoded route."""
        nxt = np.roll(route, -1)
        return float(self._leg_cost[route, nxt].sum())

    def energy(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if not np.all((x == 0.0) | (x == 1.0)):
            raise CapabilityError(
                "tour energy is defined on discrete states only; "
                "use the exact-difference proposal mode")
        vals = (x.reshape(self.n_cities, self.bits_per_city)
                @ self._group_pow).astype(np.int64)
        if not np.array_equal(np.sort(vals), np.arange(self.n_cities)):
            return -np.inf
        return -float(self._leg_cost[vals, np.roll(vals, -1)].sum())

    def is_valid(self, theta: np.ndarray) -> bool:
        return self.decode_route(theta) is not None

    def random_state(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw over *valid* states (a random permutation)."""
        return self.encode_route(rng.permutation(self.n_cities))

    def flip_energies(self, theta: np.ndarray) -> np.ndarray:
        """(d, 2) single-bit-flip energies; non-tour candidates get -inf."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ConfigError(
                f"state has shape {theta.shape}, expected ({self.dim},)")
        return self.flip_energies_batch(theta[None, :])[0]

    def _decode_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X.reshape(-1, self.n_cities, self.bits_per_city)
                @ self._group_pow).astype(np.int64)

    def is_valid_batch(self, X: np.ndarray) -> np.ndarray:
        vals = self._decode_batch(X)
        return (np.sort(vals, axis=1)
                == np.arange(self.n_cities)).all(axis=1)

    def energy_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = self._decode_batch(X)
        is_perm = (np.sort(vals, axis=1)
                   == np.arange(self.n_cities)).all(axis=1)
        safe = np.where(vals < self.n_cities, vals, 0)
        costs = self._leg_cost[safe, np.roll(safe, -1, axis=1)].sum(axis=1)
        return np.where(is_perm, -costs, -np.inf)

    def flip_energies_batch(self, X: np.ndarray) -> np.ndarray:
        """Vectorized (B, d, 2) flip table via per-leg cost updates.

        Flipping bit j of group g replaces one visited index, touching only
        the two legs around position g; a tour-valued candidate costs the
        base tour plus that local exchange, and every candidate that is not
        a permutation gets -inf. From a valid tour every single flip
        collides, so the finite entries are reachable only from states with
        a repeated index (the flip that repairs the collision). Rows already
        holding an out-of-range index take the generic per-energy path.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B = X.shape[0]
        n = self.n_cities
        rows = np.arange(B)[:, None]
        vals = self._decode_batch(X)                          # (B, n)
        safe = np.where(vals < n, vals, 0)
        prv = np.roll(safe, 1, axis=1)
        nxt = np.roll(safe, -1, axis=1)
        e0 = -self._leg_cost[safe, nxt].sum(axis=1)           # (B,)
        removed = self._leg_cost[prv, safe] + self._leg_cost[safe, nxt]
        new_v = safe[:, :, None] ^ self._group_pow[None, None, :]
        # candidate validity: the untouched groups must already be distinct
        # (allowing one extra copy of the replaced value) and the new value
        # must be in range and unclaimed

        occ = np.zeros((B, n), dtype=np.int64)
        np.add.at(occ, (rows, safe), 1)
        occ_max = occ.max(axis=1)
        n_over = (occ >= 2).sum(axis=1)
        occ_at_cur = occ[rows, safe]                          # (B, n)
        one_pair = ((occ_max == 2) & (n_over == 1))[:, None]
        others_distinct = ((occ_max <= 1)[:, None]
                           | (one_pair & (occ_at_cur == 2)))
        new_clip = np.where(new_v < n, new_v, 0)
        unclaimed = occ[rows[:, :, None], new_clip] == 0
        ok = (new_v < n) & unclaimed & others_distinct[:, :, None]
        added = (self._leg_cost[prv[:, :, None], new_clip]
                 + self._leg_cost[new_clip, nxt[:, :, None]])
        e_flip = e0[:, None, None] + removed[:, :, None] - added
        e_flip = np.where(ok, e_flip, -np.inf)                # (B, n, bits)
        e_self = np.where(occ_max <= 1, e0, -np.inf)
        out = np.empty((B, self.dim, 2))
        cur = X.astype(np.int64)
        np.put_along_axis(out, (1 - cur)[:, :, None],
                          e_flip.reshape(B, self.dim)[:, :, None], axis=2)
        np.put_along_axis(out, cur[:, :, None],
                          np.broadcast_to(e_self[:, None, None],
                                          (B, self.dim, 1)), axis=2)
        bad = (vals >= n).any(axis=1)
        if np.any(bad):
            out[bad] = np.stack(
                [EnergyModel.flip_energies(self, x) for x in X[bad]])
        return out


# ---------------------------------------------------------------------------
# restricted Boltzmann machine (hidden units marginalized)
# ---------------------------------------------------------------------------

class RBMModel(EnergyModel):
    """RBM log-mass with hidden units summed out.

        U(x) = sum_i softplus(W x + a)_i + b.x ,   x in {0,1}^d

    with weight matrix W (h, d), hidden bias a (h,), visible bias b (d,).
    The same formula read on R^d is the continuous extension; its gradient
    is W^T sigmoid(W x + a) + b.
    """

    has_gradient = True

    def __init__(self, W, a, b):
        W = np.asarray(W, dtype=float)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if W.ndim != 2 or a.shape != (W.shape[0],) or b.shape != (W.shape[1],):
            raise ConfigError("need W (h, d), a (h,), b (d,)")
        if not all(np.all(np.isfinite(m)) for m in (W, a, b)):
            raise ConfigError("RBM parameters must be finite")
        self.W, self.a, self.b = W, a, b
        self.n_hidden, self.dim = W.shape
        self.domains = ((0.0, 1.0),) * self.dim

    def energy(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        z = self.W @ x + self.a
        return float(np.logaddexp(0.0, z).sum() + self.b @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.W.T @ _sigmoid(self.W @ x + self.a) + self.b

    def energy_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = X @ self.W.T + self.a
        return np.logaddexp(0.0, Z).sum(axis=1) + X @ self.b

    def gradient_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _sigmoid(X @ self.W.T + self.a) @ self.W + self.b


# ---------------------------------------------------------------------------
# binary-weight regression network
# ---------------------------------------------------------------------------

class BinaryRegressionNetModel(EnergyModel):
    """Two-layer tanh regression net with weights in {-1, +1}.

    The sampling variable theta packs the first-layer weights W1 (hidden, p)
    row-major, then the output weights w2 (hidden,). The forward map is
    f_theta(x) = w2.tanh(W1 x) and the energy is the negative sum of squared
    training errors

        U(theta) = -sum_i (f_theta(x_i) - y_i)^2 ,

    which is 0 exactly at a perfect fit and negative otherwise. The
    continuous extension embeds theta as real weights; the gradient is
    ordinary backpropagation.
    """

    has_gradient = True

    def __init__(self, train_x, train_y, hidden: int = 16,
                 test_x=None, test_y=None):
        train_x = np.asarray(train_x, dtype=float)
        train_y = np.asarray(train_y, dtype=float)
        if train_x.ndim != 2 or train_y.shape != (train_x.shape[0],):
            raise ConfigError("need train_x (N, p) and train_y (N,)")
        if hidden < 1:
            raise ConfigError("hidden must be >= 1")
        self.train_x, self.train_y = train_x, train_y
        self.hidden = int(hidden)
        self.n_features = train_x.shape[1]
        self.dim = self.hidden * self.n_features + self.hidden
        self.domains = ((-1.0, 1.0),) * self.dim
        if (test_x is None) != (test_y is None):
            raise ConfigError("test_x and test_y must be given together")
        self.test_x = None if test_x is None else np.asarray(test_x, float)
        self.test_y = None if test_y is None else np.asarray(test_y, float)
        if self.test_x is not None and (
                self.test_x.ndim != 2
                or self.test_x.shape[1] != self.n_features
                or self.test_y.shape != (self.test_x.shape[0],)):
            raise ConfigError("test set shapes inconsistent with train set")

    def _unpack(self, theta: np.ndarray):
        H, p = self.hidden, self.n_features
        theta = np.asarray(theta, dtype=float)
        return theta[:H * p].reshape(H, p), theta[H * p:]

    def predict(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Forward pass f_theta over the rows of X."""
        W1, w2 = self._unpack(theta)
        return np.tanh(np.asarray(X, float) @ W1.T) @ w2

    def energy(self, theta: np.ndarray) -> float:
        err = self.predict(theta, self.train_x) - self.train_y
        return float(-(err @ err))

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        W1, w2 = self._unpack(theta)
        Hm = np.tanh(self.train_x @ W1.T)            # (N, H)
        err = Hm @ w2 - self.train_y                 # (N,)
        g_w2 = -2.0 * (Hm.T @ err)
        back = (1.0 - Hm ** 2) * (err[:, None] * w2[None, :])
        g_W1 = -2.0 * (back.T @ self.train_x)        # (H, p)
        return np.concatenate([g_W1.ravel(), g_w2])

    def energy_batch(self, Th: np.ndarray) -> np.ndarray:
        Th = np.atleast_2d(np.asarray(Th, dtype=float))
        H, p = self.hidden, self.n_features
        W1 = Th[:, :H * p].reshape(-1, H, p)
        w2 = Th[:, H * p:]
        Hm = np.tanh(np.einsum("bhp,np->bnh", W1, self.train_x))
        f = np.einsum("bnh,bh->bn", Hm, w2)
        err = f - self.train_y
        return -(err ** 2).sum(axis=1)

    def gradient_batch(self, Th: np.ndarray) -> np.ndarray:
        Th = np.atleast_2d(np.asarray(Th, dtype=float))
        H, p = self.hidden, self.n_features
        W1 = Th[:, :H * p].reshape(-1, H, p)
        w2 = Th[:, H * p:]
        Hm = np.tanh(np.einsum("bhp,np->bnh", W1, self.train_x))
        err = np.einsum("bnh,bh->bn", Hm, w2) - self.train_y
        g_w2 = -2.0 * np.einsum("bnh,bn->bh", Hm, err)
        back = (1.0 - Hm ** 2) * (err[:, :, None] * w2[:, None, :])
        g_W1 = -2.0 * np.einsum("bnh,np->bhp", back, self.train_x)
        return np.concatenate(
            [g_W1.reshape(Th.shape[0], -1), g_w2], axis=1)


def make_synthetic_regression(seed: int, n_train: int = 48, n_test: int = 32,
                              n_features: int = 6, hidden: int = 8,
                              noise: float = 0.1, x_scale: float = 1.0):
    """Generate a regression task whose truth is itself a binary tanh net.

    Draws a ground-truth weight vector uniformly from {-1, +1}^dim, Gaussian
    inputs scaled by ``x_scale``, and targets y = f_truth(x) + noise * eps.
    Larger ``x_scale`` saturates the tanh units, which widens the basin
    around the truth (single-weight flips barely move a saturated unit)
    while leaving noise-fitting solutions narrow. Returns the model (with
    the test split attached) and the ground-truth weights.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    dim = hidden * n_features + hidden
    truth = rng.integers(0, 2, size=dim) * 2.0 - 1.0
    X = x_scale * rng.standard_normal((n_train + n_test, n_features))
    probe = BinaryRegressionNetModel(X[:1], np.zeros(1), hidden=hidden)
    y = probe.predict(truth, X) + noise * rng.standard_normal(len(X))
    model = BinaryRegressionNetModel(
        X[:n_train], y[:n_train], hidden=hidden,
        test_x=X[n_train:], test_y=y[n_train:])
    return model, truth


# ---------------------------------------------------------------------------
# model (de)serialization
# ---------------------------------------------------------------------------

MODEL_TYPES = ("categorical_pmf", "tsp", "rbm", "regression_net")


def model_from_dict(type_tag: str, payload: dict) -> EnergyModel:
    """Construct a model from its JSON payload (see README for formats)."""
    try:
        if type_tag == "categorical_pmf":
            model = CategoricalPMFModel(payload["probs"])
            if "dim" in payload and int(payload["dim"]) != model.dim:
                raise ConfigError(
                    f"dim {payload['dim']} inconsistent with "
                    f"{len(payload['probs'])} probabilities")
            return model
        if type_tag == "tsp":
            return TSPModel(payload["coords"],
                            weights=payload.get("weights"),
                            bits_per_city=payload.get("bits_per_city"))
        if type_tag == "rbm":
            return RBMModel(payload["W"], payload["a"], payload["b"])
        if type_tag == "regression_net":
            return BinaryRegressionNetModel(
                payload["train_x"], payload["train_y"],
                hidden=payload.get("hidden", 16),
                test_x=payload.get("test_x"), test_y=payload.get("test_y"))
    except KeyError as missing:
        raise ConfigError(
            f"model payload for {type_tag!r} lacks key {missing}") from None
    raise ConfigError(
        f"unknown model type {type_tag!r}; expected one of {MODEL_TYPES}")


def load_model(path, type_tag: str) -> EnergyModel:
    """Load a model from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"model file {path} must contain a JSON object")
    return model_from_dict(type_tag, payload)
