"""Consumption-habit asset pricing model with two observed growth series.

Consumption growth is g plus a persistent surplus-consumption innovation;
the log price-dividend ratio is a cubic in the log surplus deviation s,
shifted by a random-walk discount-factor level whose increments therefore
act as iid noise on observed price-dividend growth. The particle state is
(s_t, s_{t-1}, nu_t): carrying the lagged surplus and the current
consumption innovation makes both observation densities plain Gaussians
around state-determined means, with the consumption measurement noise and
the discount increment as the two noise series. The single standardized
disturbance is u = nu / sigma_nu.

The surplus law of motion is only defined for s <= 1/2. Proposed values
beyond the boundary are reflected back (s' -> 1 - s') and logged; the
calibrated dynamics visit the boundary rarely, so the reflection is a
guard rather than a modelling choice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from ..core import LOG_2PI, SimulatedPath, StateSpaceModel, as_generator
from ..errors import BetaOutOfRange, DenominatorNonPositive, DomainViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HabitParams:
    """Quarterly parameters. Defaults follow the standard calibration."""

    gamma: float = 2.0          # risk aversion curvature
    g: float = 0.019 / 4.0      # mean consumption growth per quarter
    r_f: float = 0.01 / 4.0     # risk-free rate per quarter
    phi: float = 0.97           # surplus persistence
    sigma_nu: float = 0.008     # consumption innovation std
    sigma_eta: float = 0.001    # consumption measurement noise std
    sigma_eps: float = 0.05     # discount-factor increment std

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.phi < 1.0:
            raise ValueError("phi must lie in (0, 1)")
        for name in ("sigma_nu", "sigma_eta", "sigma_eps"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def surplus_steady_state(theta: HabitParams) -> float:
    """Steady-state surplus-consumption ratio level."""
    return theta.sigma_nu * np.sqrt(theta.gamma / (1.0 - theta.phi))


def rf_to_beta(theta: HabitParams) -> float:
    """Mean discount factor implied by the risk-free rate.

    Inverts r_f = -log(beta) + gamma g - (gamma / S)^2 sigma_nu^2 / 2; with
    S at its steady-state level the variance term collapses to
    gamma (1 - phi) / 2.
    """
    beta_bar = float(np.exp(-theta.r_f + theta.gamma * theta.g
                            - theta.gamma * (1.0 - theta.phi) / 2.0))
    if not 0.0 < beta_bar < 1.0:
        raise BetaOutOfRange(f"implied mean discount factor {beta_bar:.6g} "
                             "is outside (0, 1)")
    return beta_bar


def gamma_coefficients(theta: HabitParams) -> np.ndarray:
    """Cubic coefficients of the price-dividend map in the surplus deviation.

    These are the Taylor coefficients at s = 0 of the deterministic
    pricing fixed point; the i-th order coefficient's denominator gains a
    factor (G^gamma - phi^i beta G), which must all be positive for the
    recursion to converge.
    """
    beta_bar = rf_to_beta(theta)
    G = np.exp(theta.g)
    Gg = G ** theta.gamma
    bG = beta_bar * G
    phi = theta.phi
    dens = np.array([Gg - phi ** i * bG for i in range(4)])
    if np.any(dens <= 0.0):
        raise DenominatorNonPositive(
            "price-dividend recursion does not converge at these parameters")

    gamma = theta.gamma
    g0 = bG / dens[0]
    g1 = (1.0 - phi) * G ** (gamma + 1.0) * beta_bar * gamma / (dens[0] * dens[1])
    g2 = 0.5 * g0 * g1 * (1.0 - phi) * dens[0] * gamma * (Gg + phi * bG) \
        / (bG * dens[2])
    num3 = (G ** (2.0 * gamma) + 2.0 * beta_bar * phi * G ** (gamma + 1.0)
            + 2.0 * beta_bar * phi ** 2 * G ** (gamma + 1.0)
            + beta_bar ** 2 * phi ** 3 * G ** 2)
    g3 = (1.0 - phi) ** 3 * G ** (gamma + 1.0) * beta_bar * gamma ** 3 * num3 \
        / (6.0 * dens.prod())
    return np.array([g0, g1, g2, g3])


@dataclass(frozen=True)
class _Derived:
    s_bar: float
    beta_bar: float
    gammas: tuple[float, float, float, float]


@lru_cache(maxsize=64)
def _derived(theta: HabitParams) -> _Derived:
    gam = gamma_coefficients(theta)
    return _Derived(surplus_steady_state(theta), rf_to_beta(theta),
                    tuple(gam))


def _poly(gammas, s):
    g0, g1, g2, g3 = gammas
    return ((g3 * s + g2) * s + g1) * s + g0


def _poly_deriv(gammas, s):
    _, g1, g2, g3 = gammas
    return (3.0 * g3 * s + 2.0 * g2) * s + g1


class HabitModel(StateSpaceModel):
    """State (s, s_lag, nu); observables (consumption growth, P/D growth)."""

    state_dim = 3
    disturbance_dim = 1
    obs_dim = 2
    obs_names = ("dlog_c", "dlog_pd")
    name = "habit"

    # law of motion -----------------------------------------------------

    def _sensitivity(self, s: np.ndarray, theta) -> np.ndarray:
        """Loading of the surplus update on the consumption innovation."""
        root = 1.0 - 2.0 * s
        if np.any(root < -1e-12):
            raise DomainViolation("surplus deviation above 1/2 has no "
                                  "defined law of motion")
        return np.sqrt(np.clip(root, 0.0, None)) / _derived(theta).s_bar - 1.0

    def _step_surplus(self, s, u, theta):
        """Next surplus with boundary reflection; returns (value, sign)."""
        nu = theta.sigma_nu * np.asarray(u)
        s_next = theta.phi * s + self._sensitivity(s, theta) * nu
        over = s_next > 0.5
        if np.any(over):
            logger.debug("reflected %d surplus draws at the 1/2 boundary",
                         int(np.sum(over)))
            s_next = np.where(over, 1.0 - s_next, s_next)
        sign = np.where(over, -1.0, 1.0)
        return s_next, sign

    def transition(self, x, u, theta):
        x = np.atleast_2d(x)
        u = np.atleast_2d(u)
        s_next, _ = self._step_surplus(x[:, 0], u[:, 0], theta)
        return np.column_stack([s_next, x[:, 0], theta.sigma_nu * u[:, 0]])

    def obs_mean(self, x, theta):
        x = np.atleast_2d(x)
        gam = _derived(theta).gammas
        dlc = theta.g + x[:, 2]
        dlpd = _poly(gam, x[:, 0]) - _poly(gam, x[:, 1])
        return np.column_stack([dlc, dlpd])

    def obs_noise_std(self, theta):
        return np.array([theta.sigma_eta, theta.sigma_eps])

    def first_stage_log_g(self, y, x, theta):
        """Moment-matched bivariate normal for the next observation pair.

        The surplus update is linear in u and the price-dividend map cubic,
        so next-period P/D growth is a cubic polynomial in a standard
        normal; its first two moments and its covariance with consumption
        growth are available in closed form from normal moments.
        """
        x = np.atleast_2d(x)
        der = _derived(theta)
        gam = der.gammas
        s = x[:, 0]
        a = theta.phi * s
        k = self._sensitivity(s, theta) * theta.sigma_nu

        # cubic in u: P(a + k u) - P(s) = c0 + alpha u + beta u^2 + kappa u^3
        c0 = _poly(gam, a) - _poly(gam, s)
        alpha = k * ((3.0 * gam[3] * a + 2.0 * gam[2]) * a + gam[1])
        beta = k * k * (gam[2] + 3.0 * gam[3] * a)
        kappa = k ** 3 * gam[3]

        m1 = theta.g
        v1 = theta.sigma_nu ** 2 + theta.sigma_eta ** 2
        m2 = c0 + beta
        v2 = (alpha * alpha + 2.0 * beta * beta + 15.0 * kappa * kappa
              + 6.0 * alpha * kappa + theta.sigma_eps ** 2)
        c12 = theta.sigma_nu * (alpha + 3.0 * kappa)

        y = np.asarray(y, dtype=float).reshape(-1)
        d1 = y[0] - m1
        d2 = y[1] - m2
        det = v1 * v2 - c12 * c12
        quad = (d1 * d1 * v2 - 2.0 * d1 * d2 * c12 + d2 * d2 * v1) / det
        return -LOG_2PI - 0.5 * np.log(det) - 0.5 * quad

    def residual_and_jacobian(self, u, x_prev, y, theta):
        x = np.atleast_2d(x_prev)
        uu = np.atleast_2d(u)[:, 0]
        der = _derived(theta)
        gam = der.gammas
        s = x[:, 0]
        lam = self._sensitivity(s, theta)
        s_next, sign = self._step_surplus(s, uu, theta)

        y = np.asarray(y, dtype=float).reshape(-1)
        r0 = (y[0] - theta.g - theta.sigma_nu * uu) / theta.sigma_eta
        r1 = (y[1] - (_poly(gam, s_next) - _poly(gam, s))) / theta.sigma_eps
        r = np.column_stack([r0, r1, uu])

        n = len(x)
        J = np.empty((n, 3, 1))
        J[:, 0, 0] = -theta.sigma_nu / theta.sigma_eta
        J[:, 1, 0] = -(_poly_deriv(gam, s_next) * sign * lam * theta.sigma_nu
                       ) / theta.sigma_eps
        J[:, 2, 0] = 1.0
        return r, J

    def implied_obs_matrix(self, x_prev, us, theta):
        x = np.atleast_2d(x_prev)
        u = np.atleast_2d(us)[:, 0]
        der = _derived(theta)
        gam = der.gammas
        s = x[:, 0]
        lam_nu = self._sensitivity(s, theta) * theta.sigma_nu
        s_next = theta.phi * s[:, None] + lam_nu[:, None] * u[None, :]
        s_next = np.where(s_next > 0.5, 1.0 - s_next, s_next)
        n, M = s_next.shape
        out = np.empty((n, M, 2))
        out[:, :, 0] = theta.g + theta.sigma_nu * u[None, :]
        out[:, :, 1] = _poly(gam, s_next) - _poly(gam, s)[:, None]
        return out

    # simulation ---------------------------------------------------------

    def initial_state(self, theta, n, rng):
        # start at the surplus steady state with a zero innovation; the
        # persistent component then mixes over the sample
        return np.zeros((n, 3))

    def simulate(self, theta, horizon, rng):
        rng = as_generator(rng)
        der = _derived(theta)
        gam = der.gammas
        states = np.zeros((horizon + 1, 3))
        obs = np.empty((horizon, 2))
        us = rng.standard_normal((horizon, 1))
        etas = rng.standard_normal(horizon)
        epss = rng.standard_normal(horizon)
        for t in range(horizon):
            states[t + 1] = self.transition(states[t][None, :], us[t][None, :],
                                            theta)[0]
            obs[t, 0] = theta.g + states[t + 1, 2] + theta.sigma_eta * etas[t]
            obs[t, 1] = (_poly(gam, states[t + 1, 0])
                         - _poly(gam, states[t + 1, 1])
                         + theta.sigma_eps * epss[t])
        columns = {
            "dlog_c": obs[:, 0],
            "dlog_pd": obs[:, 1],
            "state_s": states[1:, 0],
            "state_s_lag": states[1:, 1],
            "disturbance_u": us[:, 0],
            "noise_eta": etas * theta.sigma_eta,
            "noise_eps": epss * theta.sigma_eps,
        }
        return SimulatedPath(observations=obs, states=states, disturbances=us,
                             columns=columns, obs_names=("dlog_c", "dlog_pd"))

    # parameter bridging ---------------------------------------------------

    theta_names = ("gamma", "g", "r_f", "phi", "sigma_nu", "sigma_eta",
                   "sigma_eps")

    def default_theta(self) -> HabitParams:
        return HabitParams()

    def theta_from_dict(self, values: dict) -> HabitParams:
        return HabitParams(**values)

    def theta_update(self, theta: HabitParams, names, values) -> HabitParams:
        return replace(theta, **dict(zip(names, (float(v) for v in values))))


# ---------------------------------------------------------------------------
# data file handling

ASSET_DATA_HEADER = ("date", "dlog_pd", "dlog_c")


def load_asset_data(path) -> tuple[list[str], np.ndarray]:
    """Read a quarterly asset-pricing data CSV.

    The file must have the exact header ``date,dlog_pd,dlog_c`` with ISO
    dates and no missing values.  Returns the date strings plus an (T, 2)
    observation array reordered to the model's observation vector
    (consumption growth first, then price-dividend growth).
    """
    import csv
    import datetime

    dates: list[str] = []
    rows: list[tuple[float, float]] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ASSET_DATA_HEADER:
            raise ValueError(
                f"expected header {','.join(ASSET_DATA_HEADER)!r} in {path}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3 or any(not cell.strip() for cell in row):
                raise ValueError(f"{path}:{lineno}: missing value")
            try:
                datetime.date.fromisoformat(row[0].strip())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad date {row[0]!r}") from exc
            try:
                dlog_pd = float(row[1])
                dlog_c = float(row[2])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from exc
            if not (np.isfinite(dlog_pd) and np.isfinite(dlog_c)):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            dates.append(row[0].strip())
            rows.append((dlog_c, dlog_pd))
    observations = (np.array(rows, dtype=float).reshape(len(rows), 2)
                    if rows else np.empty((0, 2)))
    return dates, observations
