"""Disturbance-proposal adaptation via damped least squares.

For each resampled particle the posterior of the period disturbance is
proportional to p(y | x') p(u) with x' = transition(x, u). Its negative log
is half a sum of squared residuals, so modes are found with a
Levenberg-Marquardt search and each mode gets a Gaussian (Laplace)
approximation from the Gauss-Newton curvature. The proposal for a particle
is an equally weighted mixture over the modes that plausibly explain the
observation from that particle's state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .core import LOG_2PI
from .errors import CovarianceNotPD


@dataclass(frozen=True)
class LMConfig:
    """Knobs for the mode search and the mixture construction."""

    nu0: float = 10.0              # initial damping
    nu_factor: float = 10.0        # damping multiplier on reject, divisor on accept
    grad_tol: float = 1e-3         # stop when the gradient 2-norm drops below this
    ssr_tol: float = 1e-5          # stop when an accepted step improves less than this
    max_iters: int = 10
    init_sd: float = 2.0           # search starts draw from N(0, init_sd^2 I)
    admission_radius: float = 3.0  # observation z-radius for including a mode
    curvature_floor: float = 1e-8  # eigenvalue floor on J'J before inverting
    hess_step: float = 1e-5        # central-difference step for the numeric Hessian
    curvature: str = "gauss_newton"  # or "numeric"

    def __post_init__(self):
        if self.curvature not in ("gauss_newton", "numeric"):
            raise ValueError(f"unknown curvature method {self.curvature!r}")


@dataclass
class ModeEstimate:
    u: np.ndarray
    half_ssr: float
    covariance: np.ndarray
    converged: bool
    iterations: int


def half_ssr(model, theta, x_prev: np.ndarray, y: np.ndarray,
             u: np.ndarray) -> np.ndarray:
    """0.5 ||r(u)||^2 per particle; equals -log p(y|x')p(u) + const."""
    r = model.residual(u, x_prev, y, theta)
    return 0.5 * np.sum(r * r, axis=-1)


def find_mode_lm(model, theta, x_prev: np.ndarray, y: np.ndarray,
                 u0: np.ndarray, config: LMConfig = LMConfig(),
                 record_trace: bool = False
                 ) -> tuple[ModeEstimate, list[dict[str, Any]]]:
    """Single-particle Levenberg-Marquardt search, readable reference form.

    The batched search in :func:`find_modes_batch` follows the exact same
    schedule; this scalar version exists for tests and for tracing the
    accept/reject history.
    """
    x1 = np.atleast_2d(np.asarray(x_prev, dtype=float))
    u = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
    du = u.shape[0]
    eye = np.eye(du)

    r, J = model.residual_and_jacobian(u[None, :], x1, y, theta)
    r, J = r[0], J[0]
    ssr = 0.5 * float(r @ r)
    nu = config.nu0
    converged = False
    iters = 0
    trace: list[dict[str, Any]] = []

    for _ in range(config.max_iters):
        grad = J.T @ r
        if np.linalg.norm(grad) < config.grad_tol:
            converged = True
            break
        iters += 1
        delta = np.linalg.solve(J.T @ J + nu * eye, -grad)
        u_trial = u + delta
        r_trial = model.residual(u_trial[None, :], x1, y, theta)[0]
        ssr_trial = 0.5 * float(r_trial @ r_trial)
        accepted = ssr_trial < ssr
        if record_trace:
            trace.append({"nu": nu, "half_ssr": ssr, "half_ssr_trial": ssr_trial,
                          "accepted": accepted})
        if accepted:
            improvement = ssr - ssr_trial
            u, ssr = u_trial, ssr_trial
            nu /= config.nu_factor
            r, J = model.residual_and_jacobian(u[None, :], x1, y, theta)
            r, J = r[0], J[0]
            if improvement < config.ssr_tol:
                converged = True
                break
        else:
            nu *= config.nu_factor

    cov = _floored_inverse(J.T @ J, config.curvature_floor)
    return ModeEstimate(u, ssr, cov, converged, iters), trace


def find_modes_batch(model, theta, x_prev: np.ndarray, y: np.ndarray,
                     u0: np.ndarray, config: LMConfig = LMConfig()
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                np.ndarray, np.ndarray]:
    """Run the LM search for every particle in lockstep.

    Particles that have converged drop out of the active set, so the work
    tally matches running the scalar search particle by particle.

    Returns (modes, half_ssr, gauss_newton_JtJ, converged, iterations).
    """
    x_prev = np.asarray(x_prev, dtype=float)
    u = np.array(u0, dtype=float)
    n, du = u.shape

    r, J = model.residual_and_jacobian(u, x_prev, y, theta)
    ssr = 0.5 * np.sum(r * r, axis=1)
    nu = np.full(n, config.nu0)
    converged = np.zeros(n, dtype=bool)
    iters = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    eye = np.eye(du)
    scalar_u = du == 1

    for _ in range(config.max_iters):
        if scalar_u:
            grad = (J[:, :, 0] * r).sum(axis=1)[:, None]
            gnorm = np.abs(grad[:, 0])
        else:
            grad = np.einsum("nmd,nm->nd", J, r)
            gnorm = np.linalg.norm(grad, axis=1)
        newly_done = active & (gnorm < config.grad_tol)
        converged |= newly_done
        active &= ~newly_done
        if not active.any():
            break

        a = np.flatnonzero(active)
        iters[a] += 1
        if scalar_u:
            jtj_a = (J[a, :, 0] ** 2).sum(axis=1)
            delta = (-grad[a, 0] / (jtj_a + nu[a]))[:, None]
        else:
            JtJ_a = np.einsum("nmd,nme->nde", J[a], J[a])
            lhs = JtJ_a + nu[a, None, None] * eye
            delta = np.linalg.solve(lhs, -grad[a][..., None])[..., 0]
        u_trial = u[a] + delta
        r_trial = model.residual(u_trial, x_prev[a], y, theta)
        ssr_trial = 0.5 * np.sum(r_trial * r_trial, axis=1)

        accept = ssr_trial < ssr[a]
        rej = a[~accept]
        nu[rej] *= config.nu_factor
        acc = a[accept]
        if acc.size:
            improvement = ssr[acc] - ssr_trial[accept]
            u[acc] = u_trial[accept]
            ssr[acc] = ssr_trial[accept]
            nu[acc] /= config.nu_factor
            r_new, J_new = model.residual_and_jacobian(u[acc], x_prev[acc], y, theta)
            r[acc], J[acc] = r_new, J_new
            small = improvement < config.ssr_tol
            converged[acc[small]] = True
            active[acc[small]] = False

    if scalar_u:
        JtJ = (J[:, :, 0] ** 2).sum(axis=1)[:, None, None]
    else:
        JtJ = np.einsum("nmd,nme->nde", J, J)
    return u, ssr, JtJ, converged, iters


def _floored_inverse(JtJ: np.ndarray, floor: float) -> np.ndarray:
    """Invert a symmetric PSD matrix after flooring its eigenvalues."""
    JtJ = np.atleast_2d(JtJ)
    if JtJ.shape[0] == 1:
        return np.array([[1.0 / max(float(JtJ[0, 0]), floor)]])
    vals, vecs = np.linalg.eigh(0.5 * (JtJ + JtJ.T))
    vals = np.maximum(vals, floor)
    return (vecs / vals) @ vecs.T


def _floored_inverse_batch(JtJ: np.ndarray, floor: float) -> np.ndarray:
    n, du, _ = JtJ.shape
    if du == 1:
        return 1.0 / np.maximum(JtJ, floor)
    vals, vecs = np.linalg.eigh(0.5 * (JtJ + np.swapaxes(JtJ, 1, 2)))
    vals = np.maximum(vals, floor)
    return np.einsum("nij,nj,nkj->nik", vecs, 1.0 / vals, vecs)


def numeric_hessian_half_ssr(model, theta, x_prev: np.ndarray, y: np.ndarray,
                             u: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference Hessian of 0.5 ||r||^2 in u for one particle."""
    x1 = np.atleast_2d(np.asarray(x_prev, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    du = u.shape[0]

    def f(v):
        return float(half_ssr(model, theta, x1, y, v[None, :])[0])

    H = np.empty((du, du))
    f0 = f(u)
    for i in range(du):
        ei = np.zeros(du)
        ei[i] = step
        H[i, i] = (f(u + ei) - 2.0 * f0 + f(u - ei)) / step ** 2
        for j in range(i + 1, du):
            ej = np.zeros(du)
            ej[j] = step
            H[i, j] = H[j, i] = (
                f(u + ei + ej) - f(u + ei - ej) - f(u - ei + ej) + f(u - ei - ej)
            ) / (4.0 * step ** 2)
    return H


def laplace_covariance(model, theta, x_prev: np.ndarray, y: np.ndarray,
                       u_mode: np.ndarray, JtJ: np.ndarray | None = None,
                       config: LMConfig = LMConfig()) -> np.ndarray:
    """Laplace covariance at a mode: inverse of the floored curvature.

    The default curvature is the Gauss-Newton matrix J'J, which is free
    given the jacobian from the search. The numeric option differentiates
    the objective directly and falls back to Gauss-Newton if the result is
    not positive definite.
    """
    if config.curvature == "numeric":
        H = numeric_hessian_half_ssr(model, theta, x_prev, y, u_mode,
                                     config.hess_step)
        vals = np.linalg.eigvalsh(0.5 * (H + H.T))
        if np.all(vals > 0.0):
            return _floored_inverse(H, config.curvature_floor)
        if JtJ is None:
            raise CovarianceNotPD("numeric curvature not PD and no J'J fallback")
    if JtJ is None:
        _, J = model.residual_and_jacobian(
            np.atleast_2d(u_mode), np.atleast_2d(x_prev), y, theta)
        JtJ = J[0].T @ J[0]
    return _floored_inverse(JtJ, config.curvature_floor)


# ---------------------------------------------------------------------------
# the mixture proposal


@dataclass
class MixtureProposal:
    """Per-particle equally weighted Gaussian mixture over admitted modes.

    means/covs hold the global pool of components; `admitted[k, m]` says
    whether component m enters particle k's mixture. Every row admits at
    least one component.
    """

    means: np.ndarray        # (M, du)
    covs: np.ndarray         # (M, du, du)
    admitted: np.ndarray     # (n, M) bool
    chols: np.ndarray = field(init=False)
    log_norms: np.ndarray = field(init=False)   # -log((2pi)^{du/2} |chol|)

    def __post_init__(self):
        M, du = self.means.shape
        try:
            self.chols = np.linalg.cholesky(self.covs)
        except np.linalg.LinAlgError as exc:
            raise CovarianceNotPD("mixture component covariance not PD") from exc
        logdet_half = np.sum(np.log(np.diagonal(self.chols, axis1=1, axis2=2)),
                             axis=1)
        self.log_norms = -0.5 * du * LOG_2PI - logdet_half
        counts = self.admitted.sum(axis=1)
        if np.any(counts == 0):
            raise ValueError("every particle must admit at least one component")

    @property
    def component_count(self) -> int:
        return self.means.shape[0]

    def log_density(self, u: np.ndarray) -> np.ndarray:
        """Each particle's own mixture density at its own draw; (n,)."""
        comp = self._pairwise_logpdf(u)
        comp = np.where(self.admitted, comp, -np.inf)
        counts = self.admitted.sum(axis=1)
        # inline log-sum-exp: every row has at least one admitted (finite)
        # component, so the row maximum is always finite
        top = comp.max(axis=1)
        total = np.exp(comp - top[:, None]).sum(axis=1)
        return top + np.log(total) - np.log(counts)

    def _pairwise_logpdf(self, u: np.ndarray) -> np.ndarray:
        n, du = u.shape
        M = self.means.shape[0]
        if du == 1:
            dev = u[:, 0, None] - self.means[None, :, 0]
            var = self.covs[None, :, 0, 0]
            return -0.5 * (dev * dev / var) + self.log_norms[None, :]
        out = np.empty((n, M))
        for m in range(M):
            dev = (u - self.means[m]).T            # (du, n)
            z = solve_triangular(self.chols[m], dev, lower=True)
            out[:, m] = -0.5 * np.sum(z * z, axis=0) + self.log_norms[m]
        return out

    def log_density_single(self, k: int, u_grid: np.ndarray) -> np.ndarray:
        """Particle k's mixture density along a grid of u values; (G,)."""
        u_grid = np.atleast_2d(np.asarray(u_grid, dtype=float))
        if u_grid.shape[1] != self.means.shape[1]:
            u_grid = u_grid.T
        sel = np.flatnonzero(self.admitted[k])
        sub = MixtureProposal(self.means[sel], self.covs[sel],
                              np.ones((1, sel.size), dtype=bool))
        comp = sub._pairwise_logpdf(u_grid)
        return logsumexp(comp, axis=1) - np.log(sel.size)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one disturbance per particle from its own mixture."""
        n, M = self.admitted.shape
        du = self.means.shape[1]
        counts = self.admitted.sum(axis=1)
        pick = rng.integers(0, counts)                    # uniform over admitted
        cums = np.cumsum(self.admitted, axis=1)
        comp = np.argmax(cums > pick[:, None], axis=1)    # pick-th admitted index
        z = rng.standard_normal((n, du))
        return self.means[comp] + np.einsum("nij,nj->ni", self.chols[comp], z)


def build_mixture(model, theta, x_resampled: np.ndarray, y: np.ndarray,
                  modes: np.ndarray, covs: np.ndarray,
                  config: LMConfig = LMConfig()) -> MixtureProposal:
    """Assemble the per-particle mixture with observation-based admission.

    A component is admitted for a particle when the implied observation of
    (that particle's state, the component's mode) sits within
    `admission_radius` observation standard deviations of the data, summed
    in squares across series. A particle admitting nothing falls back to
    the single component with the smallest standardized miss.
    """
    sigma = np.asarray(model.obs_noise_std(theta), dtype=float)
    implied = model.implied_obs_matrix(x_resampled, modes, theta)  # (n, M, dy)
    zmiss = (np.asarray(y, dtype=float)[None, None, :] - implied) / sigma
    score = np.sum(zmiss * zmiss, axis=2)                    # (n, M)
    admitted = score <= config.admission_radius ** 2
    empty = ~admitted.any(axis=1)
    if empty.any():
        best = np.argmin(score[empty], axis=1)
        admitted[np.flatnonzero(empty), best] = True
    return MixtureProposal(modes, covs, admitted)


@dataclass
class AdapterStats:
    """Cumulative mode-search bookkeeping across filter steps."""

    searches: int = 0
    iterations: int = 0
    converged: int = 0
    components_admitted: float = 0.0
    proposals: int = 0

    def note(self, iters: np.ndarray, conv: np.ndarray, admitted: np.ndarray):
        self.searches += len(iters)
        self.iterations += int(iters.sum())
        self.converged += int(conv.sum())
        self.components_admitted += float(admitted.sum(axis=1).mean())
        self.proposals += 1

    def summary(self) -> dict[str, float]:
        n = max(self.searches, 1)
        return {
            "mode_searches": self.searches,
            "mean_iterations": self.iterations / n,
            "converged_fraction": self.converged / n,
            "mean_admitted_components": self.components_admitted
            / max(self.proposals, 1),
        }


class LaplaceMixtureAdapter:
    """Disturbance adapter: per-particle mode search, Laplace curvature,
    mixture proposal with observation-based admission.

    Satisfies the DisturbanceAdapter protocol used by the two-stage filter.
    """

    def __init__(self, config: LMConfig = LMConfig()):
        self.config = config
        self.stats = AdapterStats()
        self.last_mixture: MixtureProposal | None = None

    def propose(self, model, theta, x_resampled: np.ndarray, y: np.ndarray,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        n = x_resampled.shape[0]
        du = model.disturbance_dim
        u0 = self.config.init_sd * rng.standard_normal((n, du))
        modes, ssr, JtJ, conv, iters = find_modes_batch(
            model, theta, x_resampled, y, u0, self.config)
        if self.config.curvature == "numeric":
            covs = np.stack([
                laplace_covariance(model, theta, x_resampled[k], y, modes[k],
                                   JtJ[k], self.config)
                for k in range(n)
            ])
        else:
            covs = _floored_inverse_batch(JtJ, self.config.curvature_floor)
        mixture = build_mixture(model, theta, x_resampled, y, modes, covs,
                                self.config)
        self.stats.note(iters, conv, mixture.admitted)
        self.last_mixture = mixture
        u = mixture.sample(rng)
        return u, mixture.log_density(u)
