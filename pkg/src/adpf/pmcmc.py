"""Priors, adaptive random-walk Metropolis-Hastings, and chain diagnostics.

The sampler targets a posterior whose log-likelihood may be an unbiased
noisy estimate (a particle filter), following the pseudo-marginal recipe:
each parameter value's likelihood estimate is computed exactly once, stored,
and reused while that value remains the incumbent.  Priors are specified by
family plus mean/standard deviation and converted to natural shape
parameters; inefficiency factors use the truncated-autocorrelation estimator
and computing time is the product k * N * IF with k measured from the
evaluation tally.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import optimize
from scipy.special import betaln

from .adapt import LaplaceMixtureAdapter
from .core import LOG_2PI, RandomStream, as_generator
from .errors import AdpfError, InitInvalid, OptimFailed, ZeroVariance
from .filters import (LikelihoodEstimate, adpf_filter, cupf1_filter,
                      kalman_filter, sir_filter)

__all__ = [
    "BetaPrior",
    "GammaPrior",
    "TruncatedNormalPrior",
    "PriorSpec",
    "prior_spec_from_dict",
    "default_prior",
    "AdaptConfig",
    "AdaptiveProposalState",
    "ChainRecord",
    "adaptive_rwmh",
    "PmmhTarget",
    "make_pmmh_target",
    "run_filter",
    "FILTER_NAMES",
    "FILTER_CODES",
    "inefficiency",
    "chain_inefficiencies",
    "posterior_mean_mcse",
    "computing_time",
    "kalman_ml_init",
]


# --------------------------------------------------------------------------
# prior components
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BetaPrior:
    """Beta density on (0, 1), parameterised by shape pair (a, b)."""

    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0.0 or self.b <= 0.0:
            raise ValueError("Beta shape parameters must be positive")

    @classmethod
    def from_moments(cls, mean: float, sd: float) -> "BetaPrior":
        """Invert mean = a/(a+b), var = ab/((a+b)^2 (a+b+1))."""
        var = sd * sd
        if not 0.0 < mean < 1.0:
            raise ValueError("Beta mean must lie in (0, 1)")
        common = mean * (1.0 - mean) / var - 1.0
        if common <= 0.0:
            raise ValueError("Beta variance too large for the given mean")
        return cls(a=mean * common, b=(1.0 - mean) * common)

    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def sd(self) -> float:
        s = self.a + self.b
        return math.sqrt(self.a * self.b / (s * s * (s + 1.0)))

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > 0.0) & (x < 1.0)
        safe = np.where(inside, x, 0.5)
        out = ((self.a - 1.0) * np.log(safe)
               + (self.b - 1.0) * np.log1p(-safe)
               - betaln(self.a, self.b))
        return np.where(inside, out, -np.inf)[()]

    def sample(self, rng: np.random.Generator, size=None):
        return rng.beta(self.a, self.b, size=size)


@dataclass(frozen=True)
class GammaPrior:
    """Gamma density on (0, inf) with shape/rate parameters."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0.0 or self.rate <= 0.0:
            raise ValueError("Gamma shape and rate must be positive")

    @classmethod
    def from_moments(cls, mean: float, sd: float) -> "GammaPrior":
        """Invert mean = shape/rate, var = shape/rate^2."""
        if mean <= 0.0 or sd <= 0.0:
            raise ValueError("Gamma mean and sd must be positive")
        var = sd * sd
        return cls(shape=mean * mean / var, rate=mean / var)

    def mean(self) -> float:
        return self.shape / self.rate

    def sd(self) -> float:
        return math.sqrt(self.shape) / self.rate

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        inside = x > 0.0
        safe = np.where(inside, x, 1.0)
        out = (self.shape * math.log(self.rate) - math.lgamma(self.shape)
               + (self.shape - 1.0) * np.log(safe) - self.rate * safe)
        return np.where(inside, out, -np.inf)[()]

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, scale=1.0 / self.rate, size=size)


@dataclass(frozen=True)
class TruncatedNormalPrior:
    """Normal(mean, sd^2) restricted to (0, inf), normalising constant omitted.

    The constant depends only on fixed hyperparameters, so it cancels in
    Metropolis-Hastings ratios; the declared mean/sd are those of the parent
    (untruncated) normal.
    """

    loc: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")

    @classmethod
    def from_moments(cls, mean: float, sd: float) -> "TruncatedNormalPrior":
        return cls(loc=mean, scale=sd)

    def mean(self) -> float:
        return self.loc

    def sd(self) -> float:
        return self.scale

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        inside = x > 0.0
        z = (x - self.loc) / self.scale
        out = -0.5 * (z * z + LOG_2PI) - math.log(self.scale)
        return np.where(inside, out, -np.inf)[()]

    def sample(self, rng: np.random.Generator, size=None):
        """Rejection sampling from the parent normal."""
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n)
        filled = 0
        for _ in range(1000):
            draw = rng.normal(self.loc, self.scale, size=n - filled)
            keep = draw[draw > 0.0]
            out[filled:filled + keep.size] = keep
            filled += keep.size
            if filled == n:
                break
        else:
            raise RuntimeError("truncated-normal rejection sampling stalled; "
                               "the positive region has negligible mass")
        if size is None:
            return float(out[0])
        return out.reshape(size)


PriorComponent = BetaPrior | GammaPrior | TruncatedNormalPrior

_FAMILIES: dict[str, type] = {
    "beta": BetaPrior,
    "gamma": GammaPrior,
    "truncated_normal": TruncatedNormalPrior,
}


@dataclass(frozen=True)
class PriorSpec:
    """Independent per-parameter priors, in sampling order."""

    names: tuple[str, ...]
    components: tuple[PriorComponent, ...]

    def __post_init__(self):
        if len(self.names) != len(self.components):
            raise ValueError("names and components must align")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate parameter names in prior")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, PriorComponent]]) -> "PriorSpec":
        return cls(names=tuple(n for n, _ in pairs),
                   components=tuple(c for _, c in pairs))

    @property
    def dim(self) -> int:
        return len(self.names)

    def log_density(self, values) -> float:
        values = np.asarray(values, dtype=float)
        total = 0.0
        for comp, v in zip(self.components, values):
            lp = float(comp.log_density(v))
            if lp == -np.inf:
                return -np.inf
            total += lp
        return total

    def sample(self, rng) -> np.ndarray:
        rng = as_generator(rng)
        return np.array([comp.sample(rng) for comp in self.components])

    def mean(self) -> np.ndarray:
        return np.array([comp.mean() for comp in self.components])

    def sd(self) -> np.ndarray:
        return np.array([comp.sd() for comp in self.components])

    def to_dict(self) -> dict:
        families = {BetaPrior: "beta", GammaPrior: "gamma",
                    TruncatedNormalPrior: "truncated_normal"}
        return {
            name: {"family": families[type(comp)],
                   "mean": comp.mean(), "sd": comp.sd()}
            for name, comp in zip(self.names, self.components)
        }


def prior_spec_from_dict(spec: dict) -> PriorSpec:
    """Build a PriorSpec from {name: {family, mean, sd}} (insertion order)."""
    pairs = []
    for name, entry in spec.items():
        try:
            family = _FAMILIES[str(entry["family"]).lower()]
            mean = float(entry["mean"])
            sd = float(entry["sd"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad prior entry for {name!r}: {exc}") from exc
        pairs.append((name, family.from_moments(mean, sd)))
    if not pairs:
        raise ValueError("prior spec is empty")
    return PriorSpec.from_pairs(pairs)


def default_prior(model_name: str) -> PriorSpec:
    """Bundled priors for the benchmark models.

    The asset-pricing entries for mean growth and the risk-free rate are
    declared in annualised percent and converted here to quarterly decimals
    (divide by 400); the volatilities are percent but already quarterly.
    """
    if model_name == "qar1":
        return PriorSpec.from_pairs([
            ("phi", BetaPrior.from_moments(0.6, 0.15)),
            ("sigma_u", GammaPrior.from_moments(1.0, 0.5)),
            ("sigma_eps", GammaPrior.from_moments(1.0, 0.5)),
        ])
    if model_name == "growth":
        return PriorSpec.from_pairs([
            ("alpha", BetaPrior.from_moments(0.333, 0.015)),
            ("rho", BetaPrior.from_moments(0.8, 0.1)),
            ("delta_dep", GammaPrior.from_moments(0.05, 0.007)),
            ("sigma_eps", GammaPrior.from_moments(0.01, 0.01)),
        ])
    if model_name == "habit":
        return PriorSpec.from_pairs([
            ("gamma", GammaPrior.from_moments(2.0, 0.5)),
            ("g", GammaPrior.from_moments(0.019 / 4.0, 0.0015 / 4.0)),
            ("r_f", TruncatedNormalPrior.from_moments(0.01 / 4.0, 0.0001 / 4.0)),
            ("phi", BetaPrior.from_moments(0.8, 0.1)),
            ("sigma_nu", GammaPrior.from_moments(0.008, 0.0003)),
            ("sigma_eta", GammaPrior.from_moments(0.001, 0.0003)),
            ("sigma_eps", GammaPrior.from_moments(0.05, 0.007)),
        ])
    raise ValueError(f"no default prior for model {model_name!r}")


# --------------------------------------------------------------------------
# adaptive random-walk Metropolis-Hastings
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AdaptConfig:
    """Controls for the adaptive random-walk proposal.

    Before more than `adaptation_start` chain states have accumulated the
    proposal is N(0, diag(initial_step_sd^2)); afterwards it is
    N(0, (2.38^2/dim) * Cov(past draws) + jitter * I).  When
    `initial_step_sd` is None a per-coordinate default of
    0.1 * |init| + 1e-4 is used.
    """

    adaptation_start: int = 100
    initial_step_sd: tuple[float, ...] | float | None = None
    jitter: float = 1e-10

    def initial_sd_vector(self, init: np.ndarray) -> np.ndarray:
        if self.initial_step_sd is None:
            return 0.1 * np.abs(init) + 1e-4
        sd = np.asarray(self.initial_step_sd, dtype=float)
        if sd.ndim == 0:
            sd = np.full(init.shape, float(sd))
        if sd.shape != init.shape or np.any(sd <= 0.0):
            raise ValueError("initial_step_sd must be positive and match init")
        return sd


class AdaptiveProposalState:
    """Running mean/covariance of past draws plus the proposal rule."""

    def __init__(self, init: np.ndarray, config: AdaptConfig):
        self.config = config
        self.count = 1
        self.mean = np.array(init, dtype=float)
        self.sum_sq = np.zeros((init.size, init.size))
        self._initial_sd = config.initial_sd_vector(np.asarray(init, float))

    def update(self, draw: np.ndarray) -> None:
        """Welford update of the running mean and scatter."""
        self.count += 1
        delta = draw - self.mean
        self.mean += delta / self.count
        self.sum_sq += np.outer(delta, draw - self.mean)

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.sum_sq)
        return self.sum_sq / (self.count - 1)

    def proposal_covariance(self) -> np.ndarray:
        dim = self.mean.size
        if self.count <= self.config.adaptation_start:
            return np.diag(self._initial_sd ** 2)
        scaled = (2.38 ** 2 / dim) * self.covariance()
        return scaled + self.config.jitter * np.eye(dim)

    def proposal_cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.proposal_covariance())


@dataclass
class ChainRecord:
    """Output of one Metropolis-Hastings run.

    Row 0 is the initial state; row i >= 1 records the state after the i-th
    proposal, with accepted[i] flagging whether that proposal was taken
    (accepted[0] is False by convention: the start is not a proposal).
    """

    names: tuple[str, ...]
    draws: np.ndarray
    log_posteriors: np.ndarray
    accepted: np.ndarray
    eval_tally_total: int = 0

    def __post_init__(self):
        if not (len(self.draws) == len(self.log_posteriors) == len(self.accepted)):
            raise ValueError("chain arrays must have equal length")

    @property
    def n_draws(self) -> int:
        return len(self.draws)

    @property
    def acceptance_rate(self) -> float:
        """Fraction of proposals accepted (the initial state is excluded)."""
        if self.n_draws < 2:
            return 0.0
        return float(np.mean(self.accepted[1:]))

    def component(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]


def adaptive_rwmh(log_target: Callable[[np.ndarray], float],
                  init,
                  n_draws: int,
                  rng,
                  adapt_cfg: AdaptConfig | None = None,
                  param_names: Sequence[str] | None = None) -> ChainRecord:
    """Adaptive random-walk Metropolis-Hastings with stored target values.

    `log_target` may be noisy (a particle-filter estimate): its value is
    computed once per proposed point and stored, so the incumbent's estimate
    is never recomputed — the pseudo-marginal chain targets the exact
    posterior as long as the estimate is unbiased on the likelihood scale.

    Raises InitInvalid when log_target(init) is not finite.
    """
    rng = as_generator(rng)
    cfg = adapt_cfg if adapt_cfg is not None else AdaptConfig()
    theta = np.array(init, dtype=float).reshape(-1)
    dim = theta.size
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    names = tuple(param_names) if param_names is not None else tuple(
        f"param_{i}" for i in range(dim))

    log_post = float(log_target(theta))
    if not math.isfinite(log_post):
        raise InitInvalid("log target is not finite at the initial point")

    draws = np.empty((n_draws, dim))
    log_posts = np.empty(n_draws)
    accepted = np.zeros(n_draws, dtype=bool)
    draws[0] = theta
    log_posts[0] = log_post
    state = AdaptiveProposalState(theta, cfg)

    for i in range(1, n_draws):
        chol = state.proposal_cholesky()
        proposal = theta + chol @ rng.standard_normal(dim)
        log_post_prop = float(log_target(proposal))
        if math.log(rng.uniform()) < log_post_prop - log_post:
            theta = proposal
            log_post = log_post_prop
            accepted[i] = True
        draws[i] = theta
        log_posts[i] = log_post
        state.update(theta)

    return ChainRecord(names=names, draws=draws, log_posteriors=log_posts,
                       accepted=accepted)


# --------------------------------------------------------------------------
# posterior targets with a plug-in likelihood
# --------------------------------------------------------------------------

FILTER_NAMES = ("sir", "adpf", "cupf1", "kalman")
FILTER_CODES = {"sir": 0, "adpf": 1, "cupf1": 2, "kalman": 3}


def run_filter(model, theta, observations, filter_name: str, n_particles: int,
               rng, adapter: LaplaceMixtureAdapter | None = None,
               keep_swarms: bool = False, return_trace: bool = False):
    """Uniform front end over the likelihood estimators.

    Returns the LikelihoodEstimate, or (estimate, trace) when return_trace
    is set (the trace is None for "kalman").  "kalman" requires the model to
    expose a linear_reduction and returns the exact likelihood of that
    reduction (eval_tally 0, no particles).
    """
    if filter_name == "sir":
        estimate, trace = sir_filter(model, theta, observations, n_particles,
                                     rng, keep_swarms=keep_swarms)
    elif filter_name == "adpf":
        if adapter is None:
            adapter = LaplaceMixtureAdapter()
        estimate, trace = adpf_filter(model, adapter, theta, observations,
                                      n_particles, rng,
                                      keep_swarms=keep_swarms)
    elif filter_name == "cupf1":
        estimate, trace = cupf1_filter(model, theta, observations,
                                       n_particles, rng,
                                       keep_swarms=keep_swarms)
    elif filter_name == "kalman":
        reduction = getattr(model, "linear_reduction", None)
        if reduction is None:
            raise ValueError(
                f"model {type(model).__name__} has no linear-Gaussian "
                "reduction; the exact Kalman likelihood is unavailable")
        result = kalman_filter(reduction(theta), observations)
        estimate = LikelihoodEstimate(
            total_log_likelihood=result.log_likelihood,
            per_step=result.per_step,
            eval_tally=0,
            n_particles=0,
            filter_name="kalman",
        )
        trace = None
    else:
        raise ValueError(f"unknown filter {filter_name!r}; "
                         f"choose from {FILTER_NAMES}")
    if return_trace:
        return estimate, trace
    return estimate


class PmmhTarget:
    """Noisy log-posterior: log prior + particle-filter log-likelihood.

    Each call consumes a fresh child stream indexed by the running filter
    count, so evaluations are independent yet reproducible.  A point outside
    the prior support short-circuits to -inf without running the filter;
    model-domain failures during filtering (e.g. an invalid discount factor)
    are likewise treated as zero posterior mass.
    """

    def __init__(self, model, prior: PriorSpec, observations,
                 filter_name: str, n_particles: int, stream: RandomStream,
                 base_theta=None,
                 adapter_factory: Callable[[], LaplaceMixtureAdapter] | None = None):
        if filter_name not in FILTER_NAMES:
            raise ValueError(f"unknown filter {filter_name!r}")
        self.model = model
        self.prior = prior
        self.observations = np.asarray(observations, dtype=float)
        self.filter_name = filter_name
        self.n_particles = int(n_particles)
        self.stream = stream
        self.base_theta = base_theta if base_theta is not None else model.default_theta()
        self._adapter_factory = adapter_factory or LaplaceMixtureAdapter
        self.filter_runs = 0
        self.eval_tally_total = 0
        self.prior_rejections = 0

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.prior.names

    def theta_for(self, values: np.ndarray):
        return self.model.theta_update(self.base_theta, self.prior.names, values)

    def measured_k(self) -> float:
        """Evaluations per particle-step, k = tally / (N * T * runs)."""
        T = len(self.observations)
        if self.filter_runs == 0 or T == 0 or self.n_particles == 0:
            return float("nan")
        return self.eval_tally_total / (self.n_particles * T * self.filter_runs)

    def __call__(self, values: np.ndarray) -> float:
        log_prior = self.prior.log_density(values)
        if log_prior == -np.inf:
            self.prior_rejections += 1
            return -np.inf
        try:
            theta = self.theta_for(values)
        except ValueError:
            self.prior_rejections += 1
            return -np.inf
        run_stream = self.stream.child(self.filter_runs)
        try:
            estimate = run_filter(self.model, theta, self.observations,
                                  self.filter_name, self.n_particles,
                                  run_stream,
                                  adapter=self._adapter_factory()
                                  if self.filter_name == "adpf" else None)
        except AdpfError:
            return -np.inf
        if self.filter_name != "kalman":
            self.filter_runs += 1
            self.eval_tally_total += estimate.eval_tally
        if not math.isfinite(estimate.total_log_likelihood):
            return -np.inf
        return estimate.total_log_likelihood + log_prior


def make_pmmh_target(model, prior: PriorSpec, observations, filter_name: str,
                     n_particles: int, stream: RandomStream, base_theta=None,
                     adapter_factory=None) -> PmmhTarget:
    return PmmhTarget(model, prior, observations, filter_name, n_particles,
                      stream, base_theta=base_theta,
                      adapter_factory=adapter_factory)


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------

def _autocorrelations(x: np.ndarray) -> np.ndarray:
    """Sample autocorrelations rho_1..rho_{K-1} via FFT (biased scaling)."""
    K = x.size
    x = x - x.mean()
    n = sp_fft.next_fast_len(2 * K)
    spectrum = sp_fft.rfft(x, n)
    acov = sp_fft.irfft(spectrum * np.conj(spectrum), n)[:K] / K
    return acov[1:] / acov[0]


def inefficiency(chain_component, max_lag: int = 1000) -> float:
    """Inefficiency factor IF = 1 + 2 * sum_{j=1}^{L*} rho_j.

    L is the lowest lag whose sample autocorrelation falls inside the
    two-standard-error band |rho_j| < 2/sqrt(K) (that lag is included in the
    sum), and L* = min(max_lag, L).  When no lag enters the band, the sum
    runs over min(max_lag, K-1) terms.
    """
    x = np.asarray(chain_component, dtype=float).reshape(-1)
    K = x.size
    if K < 10:
        raise ValueError("inefficiency needs at least 10 draws")
    if np.ptp(x) == 0.0:
        raise ZeroVariance("chain component is constant")
    rho = _autocorrelations(x)
    inside = np.abs(rho) < 2.0 / math.sqrt(K)
    L = int(np.argmax(inside)) + 1 if inside.any() else rho.size
    L_star = min(max_lag, L)
    return float(1.0 + 2.0 * rho[:L_star].sum())


def chain_inefficiencies(record: ChainRecord, burn_in: int = 1000,
                         max_lag: int = 1000) -> dict[str, float]:
    """Per-parameter inefficiency factors after discarding `burn_in` draws.

    A component that never moved (a fully rejected chain) gets NaN rather
    than an exception, so diagnostics of stuck runs still tabulate.
    """
    if burn_in < 0 or record.n_draws - burn_in < 10:
        raise ValueError("need at least 10 post-burn-in draws")
    kept = record.draws[burn_in:]
    out = {}
    for j, name in enumerate(record.names):
        try:
            out[name] = inefficiency(kept[:, j], max_lag=max_lag)
        except ZeroVariance:
            out[name] = float("nan")
    return out


def posterior_mean_mcse(record: ChainRecord, burn_in: int = 1000,
                        max_lag: int = 1000
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and their Monte-Carlo standard errors.

    MCSE per component is sd * sqrt(IF / K) with K the post-burn-in length;
    a constant component gets MCSE 0.
    """
    if burn_in < 0 or record.n_draws - burn_in < 10:
        raise ValueError("need at least 10 post-burn-in draws")
    kept = record.draws[burn_in:]
    K = len(kept)
    means = kept.mean(axis=0)
    mcse = np.zeros(len(record.names))
    for j in range(len(record.names)):
        col = kept[:, j]
        if np.ptp(col) == 0.0:
            continue
        factor = inefficiency(col, max_lag=max_lag)
        mcse[j] = col.std(ddof=1) * math.sqrt(max(factor, 0.0) / K)
    return means, mcse


def computing_time(k: float, n_particles: int, inefficiency_factor: float) -> float:
    """Computing-time index CT = k * N * IF.

    k is the measured evaluations-per-particle-step ratio (1 for the plain
    SIR filter by construction).
    """
    if k <= 0.0 or n_particles <= 0 or inefficiency_factor <= 0.0:
        raise ValueError("computing_time needs positive k, N, and IF")
    return float(k) * float(n_particles) * float(inefficiency_factor)


# --------------------------------------------------------------------------
# initialisation
# --------------------------------------------------------------------------

def kalman_ml_init(model, prior: PriorSpec, observations, rng,
                   base_theta=None, restarts: int = 5,
                   maxiter: int | None = None) -> np.ndarray:
    """Posterior-mode search on the model's linear-Gaussian reduction.

    Runs a derivative-free simplex (Nelder-Mead) on Kalman log-likelihood
    plus log-prior from `restarts` starting points (the prior mean plus
    prior draws) and returns the best point found.  Zero-length data falls
    back to the prior mean.  Raises OptimFailed when no restart attains a
    finite objective.
    """
    rng = as_generator(rng)
    observations = np.asarray(observations, dtype=float)
    if observations.shape[0] == 0:
        return prior.mean()
    if getattr(model, "linear_reduction", None) is None:
        raise ValueError(f"model {type(model).__name__} has no linear-Gaussian "
                         "reduction; initialise the chain explicitly")
    base = base_theta if base_theta is not None else model.default_theta()

    def negative_objective(values: np.ndarray) -> float:
        log_prior = prior.log_density(values)
        if log_prior == -np.inf:
            return np.inf
        try:
            theta = model.theta_update(base, prior.names, values)
            result = kalman_filter(model.linear_reduction(theta), observations)
        except (ValueError, AdpfError, np.linalg.LinAlgError):
            return np.inf
        if not math.isfinite(result.log_likelihood):
            return np.inf
        return -(result.log_likelihood + log_prior)

    dim = prior.dim
    options = {"maxiter": maxiter if maxiter is not None else 400 * dim,
               "xatol": 1e-6, "fatol": 1e-8}
    starts = [prior.mean()] + [prior.sample(rng) for _ in range(restarts - 1)]
    best_x = None
    best_val = np.inf
    for start in starts:
        if not np.isfinite(negative_objective(start)):
            continue
        result = optimize.minimize(negative_objective, start,
                                   method="Nelder-Mead", options=options)
        if result.fun < best_val:
            best_val = float(result.fun)
            best_x = np.asarray(result.x, dtype=float)
    if best_x is None or not np.isfinite(best_val):
        raise OptimFailed("no restart produced a finite Kalman posterior value")
    return best_x
