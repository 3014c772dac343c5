"""Second-order stochastic growth model driven by a coefficient fixture.

The state is (c, k, a) in log deviations from the deterministic steady
state. Its one-step law of motion is quadratic:

    x'_i = d_i + E_i x + F_i e + x' G_i x + (x' H_i) e + J_i e^2

with e the productivity innovation. The coefficient arrays are consumed
from a self-describing JSON fixture (bundled, generated by
tools/make_growth_fixture.py) or from a user-registered provider mapping
parameters to arrays; solving the planner problem is outside this package.
With the bundled fixture the arrays do not respond to parameter draws, so
posterior sampling over (alpha, rho, delta_dep) is a fixed-coefficient
demonstration; only sigma_eps moves the likelihood. The observable is
log-deviation consumption plus a tiny measurement noise.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ..core import LOG_2PI, SimulatedPath, StateSpaceModel, as_generator
from ..errors import FixtureFormatError
from ..filters import LinearGaussianModel

FIXTURE_FORMAT = "growth-coefficients-v1"
FIXTURE_LAYOUT = "row-major-output-blocks"
BUNDLED_FIXTURE = pathlib.Path(__file__).resolve().parent.parent / "fixtures/growth_coeffs.json"

BETA_FIXED = 0.99
SIGMA_NU = 1e-4          # measurement noise std; variance 1e-8


@dataclass(frozen=True)
class GrowthCoefficients:
    """Reduced-form quadratic law-of-motion arrays."""

    d: np.ndarray      # (3,)
    E: np.ndarray      # (3, 3)
    F: np.ndarray      # (3,)
    G: np.ndarray      # (3, 3, 3), block i is the quadratic form of output i
    H: np.ndarray      # (3, 3), row i dotted with x scales the e cross term
    J: np.ndarray      # (3,)
    provenance: str = ""

    def __post_init__(self):
        shapes = {"d": (3,), "E": (3, 3), "F": (3,), "G": (3, 3, 3),
                  "H": (3, 3), "J": (3,)}
        for name, want in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != want:
                raise FixtureFormatError(f"{name} has shape {arr.shape}, want {want}")
            if not np.all(np.isfinite(arr)):
                raise FixtureFormatError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)


def load_coefficients(path) -> GrowthCoefficients:
    """Read a coefficient fixture, validating its self-description."""
    path = pathlib.Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FixtureFormatError(f"cannot read fixture {path}: {exc}") from exc
    if raw.get("format") != FIXTURE_FORMAT:
        raise FixtureFormatError(f"unknown fixture format {raw.get('format')!r}")
    if raw.get("layout") != FIXTURE_LAYOUT:
        raise FixtureFormatError(f"unknown array layout {raw.get('layout')!r}")
    dims = raw.get("dims", {})
    if dims.get("state") != 3 or dims.get("disturbance") != 1:
        raise FixtureFormatError(f"unsupported dims {dims}")
    try:
        return GrowthCoefficients(
            d=np.array(raw["d"], dtype=float),
            E=np.array(raw["E"], dtype=float).reshape(3, 3),
            F=np.array(raw["F"], dtype=float),
            G=np.array(raw["G"], dtype=float).reshape(3, 3, 3),
            H=np.array(raw["H"], dtype=float).reshape(3, 3),
            J=np.array(raw["J"], dtype=float),
            provenance=str(path),
        )
    except (KeyError, ValueError) as exc:
        raise FixtureFormatError(f"malformed fixture {path}: {exc}") from exc


def bundled_coefficients() -> GrowthCoefficients:
    return load_coefficients(BUNDLED_FIXTURE)


def growth_transition(x_prev: np.ndarray, eps: np.ndarray,
                      coeffs: GrowthCoefficients) -> np.ndarray:
    """Evaluate the quadratic law of motion for a batch of states."""
    x = np.atleast_2d(np.asarray(x_prev, dtype=float))
    e = np.asarray(eps, dtype=float).reshape(-1)
    lin = coeffs.d + x @ coeffs.E.T + np.outer(e, coeffs.F)
    quad = np.einsum("nj,ijk,nk->ni", x, coeffs.G, x)
    cross = (x @ coeffs.H.T) * e[:, None]
    return lin + quad + cross + np.outer(e * e, coeffs.J)


def growth_conditional_moments(x_prev: np.ndarray, coeffs: GrowthCoefficients,
                               sigma_eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Moment-matched mean and variance of next-period consumption.

    The variance deliberately keeps only the linear-in-e propagation plus
    the squared expectation of the e^2 term; the small e^2 variance
    contribution is left out of the formula by construction, which is why
    the Monte-Carlo tolerance in the tests is a band rather than an
    equality.
    """
    x = np.atleast_2d(np.asarray(x_prev, dtype=float))
    s2 = sigma_eps ** 2
    mu = (coeffs.d[0] + x @ coeffs.E[0]
          + np.einsum("nj,jk,nk->n", x, coeffs.G[0], x) + s2 * coeffs.J[0])
    slope = coeffs.F[0] + x @ coeffs.H[0]
    var = s2 * slope ** 2 + s2 ** 2 * coeffs.J[0] ** 2
    return mu, var


@dataclass(frozen=True)
class GrowthParams:
    """Structural parameters; beta and the measurement noise are fixed."""

    alpha: float = 1.0 / 3.0
    rho: float = 0.8
    delta_dep: float = 0.05
    sigma_eps: float = 0.02

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if not 0.0 <= self.delta_dep <= 1.0:
            raise ValueError("delta_dep must lie in [0, 1]")
        if self.sigma_eps <= 0.0:
            raise ValueError("sigma_eps must be positive")


CoefficientProvider = Callable[[GrowthParams], GrowthCoefficients]


class GrowthModel(StateSpaceModel):
    """Quadratic-law growth model over a coefficient provider.

    The default provider returns the bundled fixture for every parameter
    point. Pass a callable mapping GrowthParams to GrowthCoefficients to
    make the arrays respond to parameter draws.
    """

    state_dim = 3
    disturbance_dim = 1
    obs_dim = 1
    obs_names = ("y",)
    name = "growth"

    def __init__(self, provider: CoefficientProvider | GrowthCoefficients | None = None):
        if provider is None:
            provider = bundled_coefficients()
        if isinstance(provider, GrowthCoefficients):
            fixed = provider
            self.provider: CoefficientProvider = lambda theta: fixed
        else:
            self.provider = provider

    # law of motion -----------------------------------------------------

    def transition(self, x, u, theta):
        coeffs = self.provider(theta)
        return growth_transition(x, theta.sigma_eps * np.asarray(u)[:, 0], coeffs)

    def obs_mean(self, x, theta):
        return np.atleast_2d(x)[:, [0]]

    def obs_noise_std(self, theta):
        return np.array([SIGMA_NU])

    def first_stage_log_g(self, y, x, theta):
        coeffs = self.provider(theta)
        mu, var = growth_conditional_moments(x, coeffs, theta.sigma_eps)
        var_tot = var + SIGMA_NU ** 2
        dev = float(np.asarray(y).reshape(-1)[0]) - mu
        return -0.5 * (dev * dev / var_tot + np.log(var_tot) + LOG_2PI)

    def residual_and_jacobian(self, u, x_prev, y, theta):
        r = self.residual(u, x_prev, y, theta)
        coeffs = self.provider(theta)
        x = np.atleast_2d(x_prev)
        uu = np.atleast_2d(u)
        n = len(x)
        # d consumption / d u = sigma (F1 + x'H1) + 2 J1 sigma^2 u
        slope = theta.sigma_eps * (coeffs.F[0] + x @ coeffs.H[0]) \
            + 2.0 * coeffs.J[0] * theta.sigma_eps ** 2 * uu[:, 0]
        J = np.empty((n, 2, 1))
        J[:, 0, 0] = -slope / SIGMA_NU
        J[:, 1, 0] = 1.0
        return r, J

    def implied_obs_matrix(self, x_prev, us, theta):
        # consumption is separable: base(x) + slope(x) u + curvature u^2
        coeffs = self.provider(theta)
        x = np.atleast_2d(x_prev)
        u = np.atleast_2d(us)[:, 0]
        e = theta.sigma_eps * u
        base = (coeffs.d[0] + x @ coeffs.E[0]
                + np.einsum("nj,jk,nk->n", x, coeffs.G[0], x))
        slope = coeffs.F[0] + x @ coeffs.H[0]
        grid = base[:, None] + slope[:, None] * e[None, :] \
            + coeffs.J[0] * (e * e)[None, :]
        return grid[:, :, None]

    # simulation ---------------------------------------------------------

    def initial_state(self, theta, n, rng):
        # the deterministic steady state is an exact fixed point of the
        # bundled fixture; every path starts there
        return np.zeros((n, 3))

    def simulate(self, theta, horizon, rng):
        rng = as_generator(rng)
        states = np.zeros((horizon + 1, 3))
        obs = np.empty((horizon, 1))
        us = rng.standard_normal((horizon, 1))
        nus = SIGMA_NU * rng.standard_normal(horizon)
        for t in range(horizon):
            states[t + 1] = self.transition(states[t][None, :], us[t][None, :],
                                            theta)[0]
            obs[t, 0] = states[t + 1, 0] + nus[t]
        columns = {
            "y": obs[:, 0],
            "state_c": states[1:, 0],
            "state_k": states[1:, 1],
            "state_a": states[1:, 2],
            "disturbance_u": us[:, 0],
            "noise_nu": nus,
        }
        return SimulatedPath(observations=obs, states=states, disturbances=us,
                             columns=columns, obs_names=("y",))

    # parameter bridging ---------------------------------------------------

    theta_names = ("alpha", "rho", "delta_dep", "sigma_eps")

    def default_theta(self) -> GrowthParams:
        return GrowthParams()

    def theta_from_dict(self, values: dict) -> GrowthParams:
        return GrowthParams(**values)

    def theta_update(self, theta: GrowthParams, names, values) -> GrowthParams:
        return replace(theta, **dict(zip(names, (float(v) for v in values))))

    def linear_reduction(self, theta: GrowthParams) -> LinearGaussianModel:
        """First-order part of the law of motion as a Kalman model."""
        coeffs = self.provider(theta)
        F = coeffs.F[:, None]
        return LinearGaussianModel(
            transition_matrix=coeffs.E,
            transition_intercept=coeffs.d,
            observation_matrix=np.array([[1.0, 0.0, 0.0]]),
            state_noise_cov=theta.sigma_eps ** 2 * (F @ F.T),
            obs_noise_cov=np.array([[SIGMA_NU ** 2]]),
            prior_mean=np.zeros(3),
            prior_cov=np.zeros((3, 3)),
        )
