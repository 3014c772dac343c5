"""Shared state-space machinery: swarms, weights, resampling, RNG streams.

Weights live in log space everywhere. The only place they are exponentiated
is `normalize_log_weights`, which subtracts the maximum first so the largest
exponentiated term is exactly 1.
"""

from __future__ import annotations

import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AllWeightsZero, InvalidWeights

LOG_2PI = float(np.log(2.0 * np.pi))

#: |sum(weights) - 1| beyond this is rejected by the resamplers.
WEIGHT_SUM_TOL = 1e-9


def normalize_log_weights(log_weights: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalise log-weights into probabilities.

    Returns (weights, log_sum) where log_sum = log(sum(exp(log_weights))),
    computed with max subtraction. Raises AllWeightsZero when every entry
    is -inf, which filters translate into a -inf likelihood.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise InvalidWeights("expected a non-empty 1-d array of log-weights")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise InvalidWeights("log-weights must be finite or -inf")
    m = np.max(lw)
    if m == -np.inf:
        raise AllWeightsZero("all log-weights are -inf")
    shifted = np.exp(lw - m)
    total = shifted.sum()
    return shifted / total, float(m + np.log(total))


def _check_probabilities(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidWeights("expected a non-empty 1-d probability vector")
    if np.any(np.isnan(w)) or np.any(w < 0.0):
        raise InvalidWeights("weights must be non-negative")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidWeights(f"weights sum to {w.sum()!r}, not 1")
    return w


def multinomial_resample(weights: np.ndarray, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw `count` ancestor indices iid from the weight distribution."""
    w = _check_probabilities(weights)
    cum = np.cumsum(w)
    cum[-1] = 1.0  # guard the last bin against rounding
    idx = np.searchsorted(cum, rng.random(count), side="right")
    return idx.astype(np.intp)


def stratified_resample(weights: np.ndarray, count: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Stratified resampling: one uniform per equal slice of [0, 1).

    Lower-variance alternative kept behind a config switch; the benchmark
    runs use multinomial resampling throughout.
    """
    w = _check_probabilities(weights)
    cum = np.cumsum(w)
    cum[-1] = 1.0
    u = (np.arange(count) + rng.random(count)) / count
    return np.searchsorted(cum, u, side="right").astype(np.intp)


RESAMPLERS: dict[str, Callable[[np.ndarray, int, np.random.Generator], np.ndarray]] = {
    "multinomial": multinomial_resample,
    "stratified": stratified_resample,
}


def effective_sample_size(weights: np.ndarray) -> float:
    """1 / sum(w^2) for a normalised weight vector."""
    w = _check_probabilities(weights)
    return float(1.0 / np.sum(w * w))


@dataclass(frozen=True)
class RandomStream:
    """A reproducible, splittable source of randomness.

    Identical (seed, key) pairs yield identical variate sequences; child
    streams with distinct keys are statistically independent, so replication
    i can always use `stream.child(i)` regardless of execution order.
    """

    seed: int
    key: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.default_rng(ss)

    def child(self, *ids: int | str) -> "RandomStream":
        coded = tuple(
            zlib.crc32(i.encode("utf8")) if isinstance(i, str) else int(i)
            for i in ids
        )
        return RandomStream(self.seed, self.key + coded)


def as_generator(stream) -> np.random.Generator:
    """Accept either a RandomStream or a ready generator."""
    if isinstance(stream, RandomStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError("pass a RandomStream or numpy Generator")


@dataclass(frozen=True)
class ParticleSwarm:
    """An immutable weighted particle set at one time index."""

    states: np.ndarray        # (n, state_dim)
    log_weights: np.ndarray   # (n,) unnormalised
    weights: np.ndarray       # (n,) normalised
    time_index: int

    def __post_init__(self):
        if not (len(self.states) == len(self.log_weights) == len(self.weights)):
            raise InvalidWeights("states and weights must have equal length")
        for arr in (self.states, self.log_weights, self.weights):
            arr.setflags(write=False)

    @classmethod
    def from_log_weights(cls, states: np.ndarray, log_weights: np.ndarray,
                         time_index: int) -> "ParticleSwarm":
        states = np.atleast_2d(np.asarray(states, dtype=float))
        lw = np.asarray(log_weights, dtype=float)
        w, _ = normalize_log_weights(lw)
        return cls(states=states.copy(), log_weights=lw.copy(),
                   weights=w, time_index=int(time_index))

    @property
    def size(self) -> int:
        return len(self.weights)

    def ess(self) -> float:
        return effective_sample_size(self.weights)


@dataclass(frozen=True)
class Support:
    """Support descriptor for one named parameter."""

    kind: str  # "real" | "positive" | "unit_interval" | "interval"
    low: float = -np.inf
    high: float = np.inf

    def contains(self, x: float) -> bool:
        if self.kind == "real":
            return np.isfinite(x)
        if self.kind == "positive":
            return x > 0.0
        if self.kind == "unit_interval":
            return 0.0 < x < 1.0
        if self.kind == "interval":
            return self.low < x < self.high
        raise ValueError(f"unknown support kind {self.kind!r}")


@dataclass
class ParameterVector:
    """Named parameter values with per-entry supports."""

    names: tuple[str, ...]
    values: np.ndarray
    supports: tuple[Support, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not (len(self.names) == len(self.values) == len(self.supports)):
            raise ValueError("names, values and supports must align")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def replace_values(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(self.names, np.asarray(values, dtype=float),
                               self.supports)

    def in_support(self) -> bool:
        return all(s.contains(v) for s, v in zip(self.supports, self.values))

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Independent-Gaussian log-density summed over the last axis."""
    z = (np.asarray(x) - mean) / std
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(std)) \
        - 0.5 * np.shape(z)[-1] * LOG_2PI


class StateSpaceModel(ABC):
    """Contract the filters program against.

    States are (n, state_dim) arrays, disturbances (n, disturbance_dim),
    observations (obs_dim,). The transition is deterministic given the
    standard-normal disturbance vector, and the measurement density is
    Gaussian with diagonal noise around `obs_mean`, which covers every
    bundled model. Parameters travel as an opaque `theta` object owned by
    the concrete model.
    """

    state_dim: int
    disturbance_dim: int
    obs_dim: int
    name: str = "model"

    @abstractmethod
    def transition(self, x: np.ndarray, u: np.ndarray, theta) -> np.ndarray:
        """Propagate states one step: h(x, u; theta)."""

    @abstractmethod
    def obs_mean(self, x: np.ndarray, theta) -> np.ndarray:
        """Mean of y given the current state, shape (n, obs_dim)."""

    @abstractmethod
    def obs_noise_std(self, theta) -> np.ndarray:
        """Per-series measurement noise standard deviations, shape (obs_dim,)."""

    @abstractmethod
    def first_stage_log_g(self, y: np.ndarray, x: np.ndarray, theta) -> np.ndarray:
        """log g(y | x): moment-matched one-step-ahead observation density."""

    @abstractmethod
    def initial_state(self, theta, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n states from p(x_0)."""

    @abstractmethod
    def simulate(self, theta, horizon: int, rng: np.random.Generator) -> "SimulatedPath":
        """Generate a synthetic path of length `horizon`."""

    # ------------------------------------------------------------------
    # default implementations shared by the bundled models

    def log_p_u(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        return -0.5 * np.sum(u * u, axis=-1) - 0.5 * u.shape[-1] * LOG_2PI

    def log_p_y_given_x(self, y: np.ndarray, x: np.ndarray, theta) -> np.ndarray:
        return gaussian_logpdf(y, self.obs_mean(x, theta), self.obs_noise_std(theta))

    def implied_obs(self, x_prev: np.ndarray, u: np.ndarray, theta) -> np.ndarray:
        """Observation mean implied by propagating x_prev with u."""
        return self.obs_mean(self.transition(x_prev, u, theta), theta)

    def implied_obs_matrix(self, x_prev: np.ndarray, us: np.ndarray, theta) -> np.ndarray:
        """Implied observation means on the (target, candidate) grid.

        Returns (m, k, obs_dim) for m previous states and k disturbance
        values. Used by proposal admission tests; models override this with
        cheaper separable forms where the transition allows it.
        """
        m = len(x_prev)
        k = len(us)
        out = np.empty((m, k, self.obs_dim))
        for j in range(k):
            uj = np.broadcast_to(us[j], (m, self.disturbance_dim))
            out[:, j, :] = self.implied_obs(x_prev, uj, theta)
        return out

    def residual(self, u: np.ndarray, x_prev: np.ndarray, y: np.ndarray,
                 theta) -> np.ndarray:
        """Scaled residual vector whose squared norm is -2 * objective + const.

        Rows are the standardised implied-observation residuals followed by
        the disturbance components themselves (the standard-normal prior).
        """
        u = np.atleast_2d(u)
        x_prev = np.atleast_2d(x_prev)
        std = self.obs_noise_std(theta)
        r_obs = (y - self.implied_obs(x_prev, u, theta)) / std
        return np.concatenate([r_obs, u], axis=-1)

    def residual_and_jacobian(self, u: np.ndarray, x_prev: np.ndarray,
                              y: np.ndarray, theta) -> tuple[np.ndarray, np.ndarray]:
        """Residual plus its Jacobian in u, shapes (n, r) and (n, r, du).

        The base implementation differentiates the observation block by
        central differences; models with analytic derivatives override it.
        """
        u = np.atleast_2d(u)
        x_prev = np.atleast_2d(x_prev)
        n, du = u.shape
        r = self.residual(u, x_prev, y, theta)
        jac = np.zeros((n, r.shape[-1], du))
        jac[:, self.obs_dim:, :] = np.eye(du)
        h = 1e-6
        std = self.obs_noise_std(theta)
        for d in range(du):
            up = u.copy()
            um = u.copy()
            up[:, d] += h
            um[:, d] -= h
            diff = (self.implied_obs(x_prev, up, theta)
                    - self.implied_obs(x_prev, um, theta)) / (2.0 * h)
            jac[:, : self.obs_dim, d] = -diff / std
        return r, jac


@dataclass
class SimulatedPath:
    """Output of StateSpaceModel.simulate.

    `columns` maps CSV column names to length-`horizon` arrays; it always
    includes the observation series and, clearly separated, the latent
    states and disturbances for debugging.
    """

    observations: np.ndarray             # (horizon, obs_dim)
    states: np.ndarray                   # (horizon + 1, state_dim), row 0 = x_0
    disturbances: np.ndarray             # (horizon, disturbance_dim)
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    obs_names: tuple[str, ...] = ("y",)


class CountingModel:
    """Proxy that tallies law-of-motion work done through it.

    Transition calls add one unit per propagated row. A residual evaluation
    costs one unit per row and a residual-plus-Jacobian evaluation two (the
    derivative is charged like a second law-of-motion pass). Everything else
    delegates to the wrapped model untouched.
    """

    def __init__(self, model: StateSpaceModel):
        self._model = model
        self.tally = 0.0

    def transition(self, x, u, theta):
        self.tally += len(np.atleast_2d(x))
        return self._model.transition(x, u, theta)

    def residual(self, u, x_prev, y, theta):
        self.tally += len(np.atleast_2d(u))
        return self._model.residual(u, x_prev, y, theta)

    def residual_and_jacobian(self, u, x_prev, y, theta):
        self.tally += 2 * len(np.atleast_2d(u))
        return self._model.residual_and_jacobian(u, x_prev, y, theta)

    def __getattr__(self, name):
        return getattr(self._model, name)
