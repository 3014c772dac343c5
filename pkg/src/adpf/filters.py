"""Likelihood filters: exact Kalman, bootstrap SIR, the two-stage
disturbance-proposal filter, and a per-particle unscented comparator.

Every particle filter here returns an unbiased estimate of the likelihood
(not the log-likelihood), reports a per-step decomposition of its estimate,
and tallies how much law-of-motion work it did through `CountingModel`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from scipy.special import xlogy

from .core import (
    LOG_2PI,
    CountingModel,
    ParticleSwarm,
    StateSpaceModel,
    as_generator,
    multinomial_resample,
    normalize_log_weights,
    RESAMPLERS,
)
from .errors import (
    AllWeightsZero,
    CovarianceNotPD,
    ProposalUnsupported,
    TraceMissing,
)


_as_generator = as_generator


def _as_obs_array(observations, obs_dim: int) -> np.ndarray:
    y = np.asarray(observations, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.size and y.shape[1] != obs_dim:
        raise ValueError(f"observations have {y.shape[1]} series, model expects {obs_dim}")
    return y


# ---------------------------------------------------------------------------
# result containers


@dataclass
class LikelihoodEstimate:
    """A (possibly exact) log-likelihood with its per-step decomposition."""

    total_log_likelihood: float
    per_step: np.ndarray            # (T,) log increments, sum equals total
    eval_tally: float               # law-of-motion work units consumed
    n_particles: int
    filter_name: str = ""

    @property
    def degenerate(self) -> bool:
        return not np.isfinite(self.total_log_likelihood)


@dataclass
class FilterTrace:
    """Per-step diagnostics; swarms are stored only when requested."""

    ess: np.ndarray
    first_stage_entropy: np.ndarray   # NaN for filters without a first stage
    swarms: list[ParticleSwarm] | None = None


def filtered_expectation(trace: FilterTrace, fn: Callable[[np.ndarray], np.ndarray]
                         ) -> np.ndarray:
    """Weighted posterior mean of fn(states) at each filtering step.

    Requires the trace to have been recorded with swarm storage enabled.
    """
    if trace.swarms is None:
        raise TraceMissing("filter was run without swarm storage")
    out = []
    for swarm in trace.swarms:
        vals = np.asarray(fn(swarm.states), dtype=float)
        out.append(np.tensordot(swarm.weights, vals, axes=(0, 0)))
    return np.array(out)


# ---------------------------------------------------------------------------
# Kalman filter


@dataclass(frozen=True)
class LinearGaussianModel:
    """x' = T x + c + w, w ~ N(0, Q);  y = Z x + v, v ~ N(0, R)."""

    transition_matrix: np.ndarray
    transition_intercept: np.ndarray
    observation_matrix: np.ndarray
    state_noise_cov: np.ndarray
    obs_noise_cov: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray


@dataclass
class KalmanResult:
    log_likelihood: float
    filtered_means: np.ndarray    # (T, dx)
    filtered_covs: np.ndarray     # (T, dx, dx)
    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    per_step: np.ndarray          # (T,) log-likelihood increments


def kalman_filter(model: LinearGaussianModel, observations) -> KalmanResult:
    """Exact likelihood and filtered moments for a linear-Gaussian model."""
    A = np.asarray(model.transition_matrix, dtype=float)
    b = np.asarray(model.transition_intercept, dtype=float)
    C = np.asarray(model.observation_matrix, dtype=float)
    Q = np.asarray(model.state_noise_cov, dtype=float)
    R = np.asarray(model.obs_noise_cov, dtype=float)
    y = _as_obs_array(observations, C.shape[0])
    T = len(y)
    dx, dy = A.shape[0], C.shape[0]

    m = np.asarray(model.prior_mean, dtype=float)
    P = np.asarray(model.prior_cov, dtype=float)
    per_step = np.empty(T)
    fm = np.empty((T, dx))
    fc = np.empty((T, dx, dx))
    pm = np.empty((T, dx))
    pc = np.empty((T, dx, dx))
    for t in range(T):
        m = A @ m + b
        P = A @ P @ A.T + Q
        pm[t], pc[t] = m, P
        innov = y[t] - C @ m
        S = C @ P @ C.T + R
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise CovarianceNotPD("innovation covariance not PD") from exc
        alpha = np.linalg.solve(S, innov)
        per_step[t] = (-0.5 * (innov @ alpha + dy * LOG_2PI)
                       - np.log(np.diag(L)).sum())
        K = P @ C.T @ np.linalg.inv(S)
        m = m + K @ innov
        P = P - K @ S @ K.T
        P = 0.5 * (P + P.T)
        fm[t], fc[t] = m, P
    return KalmanResult(float(per_step.sum()), fm, fc, pm, pc, per_step)


# ---------------------------------------------------------------------------
# unscented transform


@dataclass(frozen=True)
class UnscentedConfig:
    """Scaled unscented transform parameters.

    The filter comparison runs use the conventional small-alpha settings.
    With alpha = 1e-3 the centre weight is large and negative, which is
    expected; validity only needs n + lambda > 0 so the sigma-point scale
    stays real.
    """

    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")

    def weights(self, n: int) -> tuple[float, np.ndarray, np.ndarray]:
        """Returns (scale c = n + lambda, mean weights, covariance weights)."""
        lam = self.alpha ** 2 * (n + self.kappa) - n
        c = n + lam
        if c <= 0.0:
            raise ValueError("alpha^2 (n + kappa) must be positive")
        wm = np.full(2 * n + 1, 1.0 / (2.0 * c))
        wc = wm.copy()
        wm[0] = lam / c
        wc[0] = lam / c + (1.0 - self.alpha ** 2 + self.beta)
        return c, wm, wc


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Matrix square root for symmetric PSD input; raises CovarianceNotPD."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
        if np.any(vals < -tol):
            raise CovarianceNotPD("covariance has negative eigenvalues")
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def unscented_moments(mean: np.ndarray, cov: np.ndarray,
                      fn: Callable[[np.ndarray], np.ndarray],
                      config: UnscentedConfig = UnscentedConfig()
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Propagate (mean, cov) through fn with the scaled unscented transform.

    fn maps an (s, n) array of sigma points to (s, m). Returns the output
    mean, output covariance (of fn alone, no noise added), and the
    input-output cross covariance.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = mean.shape[0]
    c, wm, wc = config.weights(n)
    root = _psd_sqrt(cov) * np.sqrt(c)
    pts = np.concatenate([mean[None, :], mean + root.T, mean - root.T], axis=0)
    out = np.asarray(fn(pts), dtype=float)
    mean_out = wm @ out
    dev_out = out - mean_out
    dev_in = pts - mean
    cov_out = (wc[:, None] * dev_out).T @ dev_out
    cross = (wc[:, None] * dev_in).T @ dev_out
    return mean_out, cov_out, cross


# ---------------------------------------------------------------------------
# bootstrap SIR filter


def sir_filter(model: StateSpaceModel, theta, observations, n_particles: int,
               stream, resampling: str = "multinomial",
               keep_swarms: bool = False) -> tuple[LikelihoodEstimate, FilterTrace]:
    """Standard SIR particle filter with resampling at every step.

    The per-step likelihood increment is the log of the mean unnormalised
    weight, which together with multinomial resampling from the previous
    weights makes the likelihood estimator unbiased.
    """
    rng = _as_generator(stream)
    resample = RESAMPLERS[resampling]
    counted = CountingModel(model)
    y = _as_obs_array(observations, model.obs_dim)
    T = len(y)
    n = int(n_particles)

    x = model.initial_state(theta, n, rng)
    weights = np.full(n, 1.0 / n)
    per_step = np.zeros(T)
    ess = np.full(T, np.nan)
    entropy = np.full(T, np.nan)
    swarms: list[ParticleSwarm] | None = [] if keep_swarms else None
    logn = np.log(n)

    for t in range(T):
        idx = resample(weights, n, rng)
        u = rng.standard_normal((n, model.disturbance_dim))
        x = counted.transition(x[idx], u, theta)
        logw = model.log_p_y_given_x(y[t], x, theta)
        try:
            weights, log_sum = normalize_log_weights(logw)
        except AllWeightsZero:
            per_step[t] = -np.inf
            return (
                LikelihoodEstimate(-np.inf, per_step, counted.tally, n, "sir"),
                FilterTrace(ess, entropy, swarms),
            )
        per_step[t] = log_sum - logn
        ess[t] = 1.0 / np.sum(weights * weights)
        if swarms is not None:
            swarms.append(ParticleSwarm.from_log_weights(x, logw, t + 1))

    total = float(np.sum(per_step))
    return (
        LikelihoodEstimate(total, per_step, counted.tally, n, "sir"),
        FilterTrace(ess, entropy, swarms),
    )


# ---------------------------------------------------------------------------
# two-stage disturbance-proposal filter


class DisturbanceAdapter(Protocol):
    """Builds the conditional disturbance proposal g(u | y, x)."""

    def propose(self, model, theta, x_resampled: np.ndarray, y: np.ndarray,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Return (u draws, log proposal density at the draws)."""
        ...


def adpf_filter(model: StateSpaceModel, adapter: DisturbanceAdapter, theta,
                observations, n_particles: int, stream,
                keep_swarms: bool = False) -> tuple[LikelihoodEstimate, FilterTrace]:
    """Auxiliary two-stage filter with adapted disturbance proposals.

    Stage one weights particles by the moment-matched predictive g(y | x)
    and resamples; stage two draws disturbances from the adapter's proposal
    and reweights by p(y | x') p(u) / (g(y | x) g(u | y, x)). The per-step
    likelihood increment multiplies the weighted first-stage mean by the
    plain mean of the second-stage ratios (each resampled particle carries
    mass 1/N).
    """
    rng = _as_generator(stream)
    counted = CountingModel(model)
    y = _as_obs_array(observations, model.obs_dim)
    T = len(y)
    n = int(n_particles)

    x = model.initial_state(theta, n, rng)
    log_pi = np.full(n, -np.log(n))
    per_step = np.zeros(T)
    ess = np.full(T, np.nan)
    entropy = np.full(T, np.nan)
    swarms: list[ParticleSwarm] | None = [] if keep_swarms else None
    logn = np.log(n)

    def bail(t):
        per_step[t] = -np.inf
        return (
            LikelihoodEstimate(-np.inf, per_step, counted.tally, n, "adpf"),
            FilterTrace(ess, entropy, swarms),
        )

    for t in range(T):
        log_g = model.first_stage_log_g(y[t], x, theta)
        try:
            pi_aux, log_sum_first = normalize_log_weights(log_g + log_pi)
        except AllWeightsZero:
            return bail(t)
        entropy[t] = -float(np.sum(xlogy(pi_aux, pi_aux)))

        idx = multinomial_resample(pi_aux, n, rng)
        x_res = x[idx]
        log_g_res = log_g[idx]

        u, log_q = adapter.propose(counted, theta, x_res, y[t], rng)
        if not np.all(np.isfinite(log_q)):
            raise ProposalUnsupported("adapter returned a non-finite proposal density")

        x = counted.transition(x_res, u, theta)
        log_ratio = (model.log_p_y_given_x(y[t], x, theta) + model.log_p_u(u)
                     - log_g_res - log_q)
        try:
            pi, log_sum_second = normalize_log_weights(log_ratio)
        except AllWeightsZero:
            return bail(t)

        per_step[t] = log_sum_first + (log_sum_second - logn)
        ess[t] = 1.0 / np.sum(pi * pi)
        with np.errstate(divide="ignore"):
            log_pi = np.log(pi)
        if swarms is not None:
            swarms.append(ParticleSwarm.from_log_weights(x, log_ratio, t + 1))

    total = float(np.sum(per_step))
    return (
        LikelihoodEstimate(total, per_step, counted.tally, n, "adpf"),
        FilterTrace(ess, entropy, swarms),
    )


# ---------------------------------------------------------------------------
# per-particle unscented comparator


def cupf1_filter(model: StateSpaceModel, theta, observations, n_particles: int,
                 stream, config: UnscentedConfig = UnscentedConfig(),
                 keep_swarms: bool = False) -> tuple[LikelihoodEstimate, FilterTrace]:
    """Two-stage filter whose g(y | x) and g(u | y, x) come from one
    unscented pass per particle.

    For each particle the joint moments of (u, y) given x are formed by
    propagating disturbance sigma points through the transition and
    observation mean, with the additive measurement noise folded in
    analytically. The conditional Gaussian of u given y supplies the
    proposal. Particles whose conditional covariance loses positive
    definiteness fall back to the prior proposal u ~ N(0, I).
    """
    rng = _as_generator(stream)
    counted = CountingModel(model)
    y = _as_obs_array(observations, model.obs_dim)
    T = len(y)
    n = int(n_particles)
    du, dy = model.disturbance_dim, model.obs_dim

    c, wm, wc = config.weights(du)
    sig_u = np.concatenate([
        np.zeros((1, du)),
        np.sqrt(c) * np.eye(du),
        -np.sqrt(c) * np.eye(du),
    ])  # (s, du): sigma points of u ~ N(0, I)
    s_count = len(sig_u)
    R = np.diag(model.obs_noise_std(theta) ** 2)

    x = model.initial_state(theta, n, rng)
    log_pi = np.full(n, -np.log(n))
    per_step = np.zeros(T)
    ess = np.full(T, np.nan)
    entropy = np.full(T, np.nan)
    swarms: list[ParticleSwarm] | None = [] if keep_swarms else None
    logn = np.log(n)

    def bail(t):
        per_step[t] = -np.inf
        return (
            LikelihoodEstimate(-np.inf, per_step, counted.tally, n, "cupf1"),
            FilterTrace(ess, entropy, swarms),
        )

    eye_du = np.eye(du)
    for t in range(T):
        # unscented joint moments of (u, y) per particle
        ys = np.empty((s_count, n, dy))
        for s in range(s_count):
            us = np.broadcast_to(sig_u[s], (n, du))
            ys[s] = model.obs_mean(counted.transition(x, us, theta), theta)
        ybar = np.einsum("s,snd->nd", wm, ys)
        dev = ys - ybar
        py_ut = np.einsum("s,snd,sne->nde", wc, dev, dev)
        # clip the transform part at PSD before adding noise, so the
        # first-stage density is always well defined
        if dy == 1:
            py = np.maximum(py_ut, 0.0) + R
        else:
            vals, vecs = np.linalg.eigh(0.5 * (py_ut + np.swapaxes(py_ut, 1, 2)))
            py_ut = np.einsum("nij,nj,nkj->nik", vecs, np.clip(vals, 0.0, None), vecs)
            py = py_ut + R
        puy = np.einsum("s,sd,sne->nde", wc, sig_u, dev)  # (n, du, dy)

        innov0 = y[t] - ybar                               # (n, dy)
        if dy == 1:
            var = py[:, 0, 0]
            log_g = -0.5 * (innov0[:, 0] ** 2 / var + np.log(var) + LOG_2PI)
        else:
            L = np.linalg.cholesky(py)
            sol = np.linalg.solve(py, innov0[:, :, None])[:, :, 0]
            log_g = (-0.5 * (np.einsum("nd,nd->n", innov0, sol) + dy * LOG_2PI)
                     - np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1))

        try:
            pi_aux, log_sum_first = normalize_log_weights(log_g + log_pi)
        except AllWeightsZero:
            return bail(t)
        entropy[t] = -float(np.sum(xlogy(pi_aux, pi_aux)))

        idx = multinomial_resample(pi_aux, n, rng)
        x_res = x[idx]
        log_g_res = log_g[idx]

        # conditional Gaussian of u given y for the resampled particles:
        # gain = Py^{-1} Puy^T with shape (dy, du), so the conditional mean
        # is gain^T innov and the covariance is I - Puy gain.
        gain = np.linalg.solve(py[idx], np.swapaxes(puy[idx], 1, 2))
        mean_u = np.einsum("nde,nd->ne", gain, y[t] - ybar[idx])
        cov_u = eye_du - puy[idx] @ gain

        z = rng.standard_normal((n, du))
        u = np.empty((n, du))
        log_q = np.empty(n)
        if du == 1:
            var_u = cov_u[:, 0, 0]
            ok = var_u > 0.0
            sd = np.sqrt(np.where(ok, var_u, 1.0))
            mu = np.where(ok, mean_u[:, 0], 0.0)
            u[:, 0] = mu + sd * z[:, 0]
            log_q = -0.5 * ((u[:, 0] - mu) ** 2 / sd ** 2 + LOG_2PI) - np.log(sd)
        else:
            for k in range(n):
                try:
                    Lk = np.linalg.cholesky(cov_u[k])
                    u[k] = mean_u[k] + Lk @ z[k]
                    resid = np.linalg.solve(Lk, u[k] - mean_u[k])
                    log_q[k] = -0.5 * (resid @ resid + du * LOG_2PI) \
                        - np.log(np.diag(Lk)).sum()
                except np.linalg.LinAlgError:
                    u[k] = z[k]
                    log_q[k] = -0.5 * (z[k] @ z[k] + du * LOG_2PI)

        x = counted.transition(x_res, u, theta)
        log_ratio = (model.log_p_y_given_x(y[t], x, theta) + model.log_p_u(u)
                     - log_g_res - log_q)
        try:
            pi, log_sum_second = normalize_log_weights(log_ratio)
        except AllWeightsZero:
            return bail(t)

        per_step[t] = log_sum_first + (log_sum_second - logn)
        ess[t] = 1.0 / np.sum(pi * pi)
        with np.errstate(divide="ignore"):
            log_pi = np.log(pi)
        if swarms is not None:
            swarms.append(ParticleSwarm.from_log_weights(x, log_ratio, t + 1))

    total = float(np.sum(per_step))
    return (
        LikelihoodEstimate(total, per_step, counted.tally, n, "cupf1"),
        FilterTrace(ess, entropy, swarms),
    )
