"""Quadratic AR(1) state-space model.

    x_t = phi * x_{t-1} + sigma_u * (u_t + delta * u_t^2),   u_t ~ N(0, 1)
    y_t = x_t + sigma_eps * eps_t,                           eps_t ~ N(0, 1)

delta bends the disturbance-to-state map into a parabola, which is what
makes the conditional disturbance posterior bimodal and the model a useful
stress test for proposal adaptation. delta = 0 recovers a linear-Gaussian
model with an exact Kalman likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..core import SimulatedPath, StateSpaceModel, as_generator, gaussian_logpdf
from ..filters import LinearGaussianModel


@dataclass(frozen=True)
class QuadraticAR1Params:
    phi: float = 0.6
    sigma_u: float = 1.0
    sigma_eps: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not -1.0 < self.phi < 1.0:
            raise ValueError("phi must lie in (-1, 1)")
        if self.sigma_u <= 0.0 or self.sigma_eps <= 0.0:
            raise ValueError("sigma_u and sigma_eps must be positive")


def first_stage_moments(x_prev: np.ndarray, theta: QuadraticAR1Params
                        ) -> tuple[np.ndarray, float]:
    """Moment-matched mean and variance of y_t given x_{t-1}.

    E[u + delta u^2] = delta and Var[u + delta u^2] = 1 + 2 delta^2 for
    standard-normal u, so

        mean = phi x + sigma_u delta
        var  = sigma_eps^2 + sigma_u^2 (1 + 2 delta^2)
    """
    mean = theta.phi * np.asarray(x_prev) + theta.sigma_u * theta.delta
    var = theta.sigma_eps ** 2 + theta.sigma_u ** 2 * (1.0 + 2.0 * theta.delta ** 2)
    return mean, var


def stationary_moments(theta: QuadraticAR1Params) -> tuple[float, float]:
    """Mean and variance of the stationary state distribution.

    The state innovation sigma_u (u + delta u^2) is iid, so the stationary
    mean and variance are exact; the Gaussian used for initialisation
    matches them (and is the exact stationary law when delta = 0).
    """
    mean = theta.sigma_u * theta.delta / (1.0 - theta.phi)
    var = theta.sigma_u ** 2 * (1.0 + 2.0 * theta.delta ** 2) / (1.0 - theta.phi ** 2)
    return mean, var


class QuadraticAR1(StateSpaceModel):
    state_dim = 1
    disturbance_dim = 1
    obs_dim = 1
    obs_names = ("y",)
    name = "qar1"

    theta_type = QuadraticAR1Params

    def default_theta(self) -> QuadraticAR1Params:
        return QuadraticAR1Params()

    def replace_theta(self, theta: QuadraticAR1Params, **updates) -> QuadraticAR1Params:
        return replace(theta, **updates)

    def transition(self, x, u, theta):
        x = np.atleast_2d(x)
        u = np.atleast_2d(u)
        return theta.phi * x + theta.sigma_u * (u + theta.delta * u * u)

    def obs_mean(self, x, theta):
        return np.atleast_2d(x)

    def obs_noise_std(self, theta):
        return np.array([theta.sigma_eps])

    def first_stage_log_g(self, y, x, theta):
        mean, var = first_stage_moments(np.atleast_2d(x)[:, 0], theta)
        z = (y[0] - mean) ** 2 / var
        return -0.5 * (z + np.log(2.0 * np.pi * var))

    def residual(self, u, x_prev, y, theta):
        u = np.atleast_2d(u)
        x_prev = np.atleast_2d(x_prev)
        implied = theta.phi * x_prev + theta.sigma_u * (u + theta.delta * u * u)
        return np.concatenate([(y - implied) / theta.sigma_eps, u], axis=-1)

    def residual_and_jacobian(self, u, x_prev, y, theta):
        u = np.atleast_2d(u)
        x_prev = np.atleast_2d(x_prev)
        r = self.residual(u, x_prev, y, theta)
        jac = np.empty((len(u), 2, 1))
        jac[:, 0, 0] = -theta.sigma_u * (1.0 + 2.0 * theta.delta * u[:, 0]) / theta.sigma_eps
        jac[:, 1, 0] = 1.0
        return r, jac

    def implied_obs_matrix(self, x_prev, us, theta):
        # observation mean is the new state itself, and the transition is
        # additively separable in (x_prev, u), so the grid is an outer sum
        x_part = theta.phi * np.atleast_2d(x_prev)[:, 0]
        u = np.atleast_2d(us)[:, 0]
        u_part = theta.sigma_u * (u + theta.delta * u * u)
        return (x_part[:, None] + u_part[None, :])[:, :, None]

    def initial_state(self, theta, n, rng):
        rng = as_generator(rng)
        mean, var = stationary_moments(theta)
        return mean + np.sqrt(var) * rng.standard_normal((n, 1))

    def simulate(self, theta, horizon, rng):
        rng = as_generator(rng)
        states = np.empty((horizon + 1, 1))
        obs = np.empty((horizon, 1))
        us = np.empty((horizon, 1))
        eps = np.empty(horizon)
        states[0] = self.initial_state(theta, 1, rng)[0]
        for t in range(horizon):
            us[t, 0] = rng.standard_normal()
            states[t + 1] = self.transition(states[t][None, :], us[t][None, :], theta)[0]
            eps[t] = rng.standard_normal()
            obs[t, 0] = states[t + 1, 0] + theta.sigma_eps * eps[t]
        columns = {
            "y": obs[:, 0],
            "state_x": states[1:, 0],
            "disturbance_u": us[:, 0],
            "noise_eps": eps,
        }
        return SimulatedPath(observations=obs, states=states, disturbances=us,
                             columns=columns, obs_names=("y",))

    # ------------------------------------------------------------------
    # parameter bridging and linear reduction

    theta_names = ("phi", "sigma_u", "sigma_eps", "delta")

    def theta_from_dict(self, values: dict) -> QuadraticAR1Params:
        return QuadraticAR1Params(**values)

    def theta_update(self, theta: QuadraticAR1Params, names, values) -> QuadraticAR1Params:
        return replace(theta, **dict(zip(names, (float(v) for v in values))))

    def linear_reduction(self, theta: QuadraticAR1Params) -> LinearGaussianModel:
        """First-order version used by the Kalman initialiser (drops delta)."""
        var0 = theta.sigma_u ** 2 / (1.0 - theta.phi ** 2)
        return LinearGaussianModel(
            transition_matrix=np.array([[theta.phi]]),
            transition_intercept=np.zeros(1),
            observation_matrix=np.array([[1.0]]),
            state_noise_cov=np.array([[theta.sigma_u ** 2]]),
            obs_noise_cov=np.array([[theta.sigma_eps ** 2]]),
            prior_mean=np.zeros(1),
            prior_cov=np.array([[var0]]),
        )

    def exact_loglik(self, theta: QuadraticAR1Params, observations: np.ndarray) -> float:
        """Kalman log-likelihood, valid only when delta = 0."""
        if theta.delta != 0.0:
            raise ValueError("exact likelihood requires delta = 0")
        from ..filters import kalman_filter
        return kalman_filter(self.linear_reduction(theta), observations).log_likelihood


def conditional_disturbance_posterior(theta: QuadraticAR1Params, x_prev: float,
                                      y: float) -> tuple[float, float]:
    """Exact Gaussian posterior of u given (y, x_prev) for the linear case.

    Requires delta = 0: y = phi x + sigma_u u + sigma_eps eps, so u | y, x is
    Gaussian with precision 1 + (sigma_u / sigma_eps)^2.
    """
    if theta.delta != 0.0:
        raise ValueError("closed form requires delta = 0")
    s2 = theta.sigma_eps ** 2 / (theta.sigma_eps ** 2 + theta.sigma_u ** 2)
    mean = s2 * theta.sigma_u * (y - theta.phi * x_prev) / theta.sigma_eps ** 2
    return mean, s2
