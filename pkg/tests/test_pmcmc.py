"""Priors, the adaptive sampler, and chain diagnostics."""

import math

import numpy as np
import pytest
from scipy import stats

from adpf.core import CountingModel, RandomStream
from adpf.errors import InitInvalid, OptimFailed, ZeroVariance
from adpf.models import QuadraticAR1, QuadraticAR1Params
from adpf.pmcmc import (
    AdaptConfig,
    AdaptiveProposalState,
    BetaPrior,
    ChainRecord,
    FILTER_CODES,
    FILTER_NAMES,
    GammaPrior,
    PmmhTarget,
    PriorSpec,
    TruncatedNormalPrior,
    adaptive_rwmh,
    chain_inefficiencies,
    computing_time,
    default_prior,
    inefficiency,
    kalman_ml_init,
    posterior_mean_mcse,
    prior_spec_from_dict,
    run_filter,
)

# ---------------------------------------------------------------------------
# prior components


class TestPriorComponents:
    def test_beta_moment_inversion_worked_example(self):
        prior = BetaPrior.from_moments(0.8, 0.1)
        assert prior.a == pytest.approx(12.0, rel=1e-12)
        assert prior.b == pytest.approx(3.0, rel=1e-12)

    def test_gamma_moment_inversion_worked_example(self):
        prior = GammaPrior.from_moments(0.01, 0.01)
        assert prior.shape == pytest.approx(1.0, rel=1e-12)
        assert prior.rate == pytest.approx(100.0, rel=1e-12)

    @pytest.mark.parametrize("mean,sd", [(0.3, 0.1), (0.97, 0.01), (0.5, 0.2)])
    def test_beta_round_trip(self, mean, sd):
        prior = BetaPrior.from_moments(mean, sd)
        assert prior.mean() == pytest.approx(mean, rel=1e-12)
        assert prior.sd() == pytest.approx(sd, rel=1e-12)

    @pytest.mark.parametrize("mean,sd", [(0.05, 0.007), (2.0, 0.5), (1e-3, 3e-4)])
    def test_gamma_round_trip(self, mean, sd):
        prior = GammaPrior.from_moments(mean, sd)
        assert prior.mean() == pytest.approx(mean, rel=1e-12)
        assert prior.sd() == pytest.approx(sd, rel=1e-12)

    def test_beta_log_density_matches_scipy(self):
        prior = BetaPrior.from_moments(0.6, 0.15)
        x = np.array([0.01, 0.3, 0.6, 0.99])
        np.testing.assert_allclose(
            prior.log_density(x), stats.beta.logpdf(x, prior.a, prior.b), rtol=1e-10
        )
        assert prior.log_density(0.0) == -np.inf
        assert prior.log_density(1.0) == -np.inf
        assert prior.log_density(-0.2) == -np.inf

    def test_gamma_log_density_matches_scipy(self):
        prior = GammaPrior.from_moments(1.0, 0.5)
        x = np.array([0.05, 0.8, 3.0])
        np.testing.assert_allclose(
            prior.log_density(x),
            stats.gamma.logpdf(x, prior.shape, scale=1.0 / prior.rate),
            rtol=1e-10,
        )
        assert prior.log_density(0.0) == -np.inf

    def test_truncated_normal_log_density_is_the_parent_kernel(self):
        prior = TruncatedNormalPrior.from_moments(0.0025, 0.0005)
        x = np.array([0.001, 0.0025, 0.01])
        np.testing.assert_allclose(
            prior.log_density(x),
            stats.norm.logpdf(x, loc=0.0025, scale=0.0005),
            rtol=1e-10,
        )
        assert prior.log_density(0.0) == -np.inf
        assert prior.log_density(-1e-9) == -np.inf

    def test_sampling_moments(self):
        rng = np.random.default_rng(0)
        n = 200_000
        for prior in (BetaPrior.from_moments(0.8, 0.1),
                      GammaPrior.from_moments(0.05, 0.007)):
            draws = prior.sample(rng, size=n)
            assert draws.mean() == pytest.approx(
                prior.mean(), abs=4.0 * prior.sd() / math.sqrt(n)
            )
            assert draws.std(ddof=1) == pytest.approx(prior.sd(), rel=0.02)

    def test_truncated_normal_sampling_matches_scipy_truncnorm(self):
        prior = TruncatedNormalPrior(loc=0.5, scale=1.0)  # truncation bites
        rng = np.random.default_rng(1)
        n = 200_000
        draws = prior.sample(rng, size=n)
        assert draws.min() > 0.0
        a = (0.0 - 0.5) / 1.0
        want_mean = stats.truncnorm.mean(a, np.inf, loc=0.5, scale=1.0)
        want_sd = stats.truncnorm.std(a, np.inf, loc=0.5, scale=1.0)
        assert draws.mean() == pytest.approx(want_mean, abs=4.0 * want_sd / math.sqrt(n))
        assert draws.std(ddof=1) == pytest.approx(want_sd, rel=0.02)

    def test_invalid_moment_inversions(self):
        with pytest.raises(ValueError):
            BetaPrior.from_moments(0.5, 0.6)  # variance too large
        with pytest.raises(ValueError):
            BetaPrior.from_moments(1.2, 0.1)
        with pytest.raises(ValueError):
            GammaPrior.from_moments(-1.0, 0.5)
        with pytest.raises(ValueError):
            BetaPrior(a=0.0, b=1.0)
        with pytest.raises(ValueError):
            GammaPrior(shape=1.0, rate=0.0)
        with pytest.raises(ValueError):
            TruncatedNormalPrior(loc=0.0, scale=-1.0)


class TestPriorSpec:
    def spec(self):
        return PriorSpec.from_pairs([
            ("phi", BetaPrior.from_moments(0.6, 0.15)),
            ("sigma", GammaPrior.from_moments(1.0, 0.5)),
        ])

    def test_log_density_sums_components(self):
        spec = self.spec()
        values = np.array([0.4, 0.9])
        want = (spec.components[0].log_density(0.4)
                + spec.components[1].log_density(0.9))
        assert spec.log_density(values) == pytest.approx(want, rel=1e-12)

    def test_out_of_support_short_circuits(self):
        assert self.spec().log_density([1.4, 0.9]) == -np.inf
        assert self.spec().log_density([0.4, -0.1]) == -np.inf

    def test_vector_helpers(self):
        spec = self.spec()
        assert spec.dim == 2
        np.testing.assert_allclose(spec.mean(), [0.6, 1.0], rtol=1e-12)
        np.testing.assert_allclose(spec.sd(), [0.15, 0.5], rtol=1e-12)
        draw = spec.sample(RandomStream(4))
        assert draw.shape == (2,) and 0.0 < draw[0] < 1.0 and draw[1] > 0.0

    def test_dict_round_trip(self):
        spec = self.spec()
        rebuilt = prior_spec_from_dict(spec.to_dict())
        assert rebuilt.names == spec.names
        for ours, theirs in zip(spec.components, rebuilt.components):
            assert type(ours) is type(theirs)
            assert ours.mean() == pytest.approx(theirs.mean(), rel=1e-9)
            assert ours.sd() == pytest.approx(theirs.sd(), rel=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            PriorSpec(names=("a",), components=())
        with pytest.raises(ValueError):
            PriorSpec.from_pairs([
                ("a", GammaPrior(1.0, 1.0)), ("a", GammaPrior(1.0, 1.0))
            ])
        with pytest.raises(ValueError):
            prior_spec_from_dict({})
        with pytest.raises(ValueError):
            prior_spec_from_dict({"x": {"family": "cauchy", "mean": 0, "sd": 1}})
        with pytest.raises(ValueError):
            prior_spec_from_dict({"x": {"family": "beta", "mean": 0.5}})

    def test_default_priors_cover_the_model_parameters(self):
        model_params = {
            "qar1": ("phi", "sigma_u", "sigma_eps", "delta"),
            "growth": ("alpha", "rho", "delta_dep", "sigma_eps"),
            "habit": ("gamma", "g", "r_f", "phi", "sigma_nu", "sigma_eta",
                      "sigma_eps"),
        }
        for name, params in model_params.items():
            prior = default_prior(name)
            assert set(prior.names) <= set(params)
        habit = default_prior("habit")
        # annualised-percent entries arrive divided by 400
        assert habit.components[habit.names.index("g")].mean() == pytest.approx(
            0.019 / 4.0, rel=1e-12
        )
        assert habit.components[habit.names.index("r_f")].mean() == pytest.approx(
            0.01 / 4.0, rel=1e-12
        )
        with pytest.raises(ValueError):
            default_prior("arch")


# ---------------------------------------------------------------------------
# adaptive random-walk sampler


class TestAdaptiveRwmh:
    def test_recovers_a_correlated_normal_target(self):
        cov = np.array([[1.0, 0.6], [0.6, 1.5]])
        mean = np.array([1.0, -2.0])
        prec = np.linalg.inv(cov)

        def log_target(x):
            d = x - mean
            return -0.5 * d @ prec @ d

        record = adaptive_rwmh(log_target, np.zeros(2), 8000, RandomStream(7),
                               adapt_cfg=AdaptConfig(initial_step_sd=0.5),
                               param_names=("a", "b"))
        assert record.names == ("a", "b")
        means, mcse = posterior_mean_mcse(record, burn_in=1000)
        for j in range(2):
            assert means[j] == pytest.approx(mean[j], abs=5.0 * mcse[j])
        kept = record.draws[1000:]
        np.testing.assert_allclose(np.cov(kept.T), cov, rtol=0.25)
        assert 0.1 < record.acceptance_rate < 0.6

    def test_chain_record_bookkeeping(self):
        def log_target(x):
            return -0.5 * float(x @ x)

        record = adaptive_rwmh(log_target, np.array([0.3]), 500, RandomStream(2))
        assert record.n_draws == 500
        np.testing.assert_array_equal(record.draws[0], [0.3])
        assert not record.accepted[0]
        # a rejected step repeats the incumbent state and its target value
        rejected = np.flatnonzero(~record.accepted[1:]) + 1
        assert rejected.size > 0
        np.testing.assert_array_equal(record.draws[rejected],
                                      record.draws[rejected - 1])
        np.testing.assert_array_equal(record.log_posteriors[rejected],
                                      record.log_posteriors[rejected - 1])
        # target values are carried truthfully for accepted steps too
        accepted = np.flatnonzero(record.accepted)
        for i in accepted[:20]:
            assert record.log_posteriors[i] == pytest.approx(
                log_target(record.draws[i]), rel=1e-12
            )

    def test_fully_rejected_chain(self):
        start = np.array([1.0, 2.0])

        def log_target(x):
            return 0.0 if np.array_equal(x, start) else -np.inf

        record = adaptive_rwmh(log_target, start, 60, RandomStream(3))
        assert record.acceptance_rate == 0.0
        assert np.all(record.draws == start)
        ifs = chain_inefficiencies(record, burn_in=10)
        assert all(math.isnan(v) for v in ifs.values())

    def test_invalid_start_raises(self):
        with pytest.raises(InitInvalid):
            adaptive_rwmh(lambda x: -np.inf, np.zeros(1), 10, RandomStream(0))
        with pytest.raises(ValueError):
            adaptive_rwmh(lambda x: 0.0, np.zeros(1), 0, RandomStream(0))

    def test_proposal_covariance_switches_after_adaptation_start(self):
        cfg = AdaptConfig(adaptation_start=10, initial_step_sd=0.2, jitter=0.0)
        state = AdaptiveProposalState(np.zeros(2), cfg)
        rng = np.random.default_rng(0)
        draws = rng.standard_normal((30, 2)) @ np.array([[1.0, 0.0], [0.7, 0.5]])
        for i, d in enumerate(draws):
            if state.count <= 10:
                np.testing.assert_allclose(
                    state.proposal_covariance(), 0.04 * np.eye(2)
                )
            state.update(d)
        everything = np.vstack([np.zeros(2), draws])
        want = (2.38**2 / 2.0) * np.cov(everything.T, ddof=1)
        np.testing.assert_allclose(state.proposal_covariance(), want, rtol=1e-10)

    def test_welford_matches_numpy_cov(self):
        rng = np.random.default_rng(5)
        draws = rng.standard_normal((200, 3))
        state = AdaptiveProposalState(draws[0], AdaptConfig())
        for d in draws[1:]:
            state.update(d)
        np.testing.assert_allclose(
            state.covariance(), np.cov(draws.T, ddof=1), rtol=1e-9, atol=1e-12
        )

    def test_initial_step_sd_validation(self):
        cfg = AdaptConfig(initial_step_sd=(0.1, 0.2))
        with pytest.raises(ValueError):
            cfg.initial_sd_vector(np.zeros(3))
        with pytest.raises(ValueError):
            AdaptConfig(initial_step_sd=(0.1, -0.2)).initial_sd_vector(np.zeros(2))
        np.testing.assert_allclose(
            AdaptConfig().initial_sd_vector(np.array([2.0, 0.0])),
            [0.2001, 1e-4],
        )


# ---------------------------------------------------------------------------
# pseudo-marginal target bookkeeping


class TestPmmhTarget:
    def make_target(self, filter_name="sir", n_particles=30):
        model = QuadraticAR1()
        theta = QuadraticAR1Params(phi=0.6, sigma_u=1.0, sigma_eps=0.5, delta=0.0)
        path = model.simulate(theta, 25, RandomStream(9).child("dataset"))
        counting = CountingModel(model)
        prior = default_prior("qar1")
        target = PmmhTarget(counting, prior, path.observations, filter_name,
                            n_particles, RandomStream(9).child("filter"),
                            base_theta=theta)
        return target, counting

    def test_filter_runs_and_tally_accounting(self):
        target, counting = self.make_target()
        assert math.isnan(target.measured_k())
        value = target(np.array([0.6, 1.0, 0.5]))
        assert math.isfinite(value)
        assert target.filter_runs == 1
        # plain SIR propagates every particle exactly once per step
        assert target.eval_tally_total == 30 * 25
        assert target.eval_tally_total == counting.tally
        assert target.measured_k() == pytest.approx(1.0, rel=1e-12)

    def test_prior_veto_skips_the_filter(self):
        target, counting = self.make_target()
        assert target(np.array([1.4, 1.0, 0.5])) == -np.inf
        assert target(np.array([0.6, -1.0, 0.5])) == -np.inf
        assert target.filter_runs == 0
        assert counting.tally == 0
        assert target.prior_rejections == 2

    def test_repeated_calls_use_fresh_replications(self):
        target, _ = self.make_target()
        values = np.array([0.6, 1.0, 0.5])
        first, second = target(values), target(values)
        assert first != second  # independent particle-filter replications
        assert target.filter_runs == 2

    def test_one_filter_run_per_supported_proposal(self):
        target, _ = self.make_target(n_particles=20)
        record = adaptive_rwmh(
            target, np.array([0.6, 1.0, 0.5]), 40, RandomStream(1),
            adapt_cfg=AdaptConfig(initial_step_sd=0.02),
            param_names=target.param_names,
        )
        # 1 initial evaluation + one per proposal that passed the prior gate
        assert target.filter_runs == 40 - target.prior_rejections
        assert record.n_draws == 40

    def test_kalman_target_is_noise_free_and_untallied(self):
        target, counting = self.make_target(filter_name="kalman")
        values = np.array([0.6, 1.0, 0.5])
        assert target(values) == pytest.approx(target(values), rel=1e-15)
        assert target.filter_runs == 0 and math.isnan(target.measured_k())
        theta = target.theta_for(values)
        want = counting.exact_loglik(theta, target.observations) + \
            target.prior.log_density(values)
        assert target(values) == pytest.approx(want, rel=1e-10)

    def test_unknown_filter_rejected(self):
        model = QuadraticAR1()
        with pytest.raises(ValueError):
            PmmhTarget(model, default_prior("qar1"), np.zeros((3, 1)),
                       "bootstrap", 10, RandomStream(0))


class TestRunFilter:
    def test_kalman_branch_matches_exact_likelihood(self):
        model = QuadraticAR1()
        theta = QuadraticAR1Params(phi=0.7, sigma_u=1.2, sigma_eps=0.4, delta=0.0)
        path = model.simulate(theta, 30, RandomStream(21))
        est = run_filter(model, theta, path.observations, "kalman", 0,
                         RandomStream(0))
        assert est.total_log_likelihood == pytest.approx(
            model.exact_loglik(theta, path.observations), rel=1e-10
        )
        assert est.eval_tally == 0 and est.n_particles == 0
        est2, trace = run_filter(model, theta, path.observations, "kalman", 0,
                                 RandomStream(0), return_trace=True)
        assert trace is None

    def test_unknown_and_unsupported_filters(self):
        model = QuadraticAR1()
        with pytest.raises(ValueError, match="unknown filter"):
            run_filter(model, QuadraticAR1Params(), np.zeros((2, 1)), "apf", 10,
                       RandomStream(0))

        class NoReduction:
            pass

        with pytest.raises(ValueError, match="reduction"):
            run_filter(NoReduction(), None, np.zeros((2, 1)), "kalman", 0,
                       RandomStream(0))

    def test_filter_registry(self):
        assert FILTER_NAMES == ("sir", "adpf", "cupf1", "kalman")
        assert FILTER_CODES == {"sir": 0, "adpf": 1, "cupf1": 2, "kalman": 3}


# ---------------------------------------------------------------------------
# chain diagnostics


def _direct_autocorr(x):
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    K = len(x)
    acov = np.array([np.dot(x[: K - j], x[j:]) for j in range(K)]) / K
    return acov[1:] / acov[0]


def _direct_inefficiency(x, max_lag=1000):
    rho = _direct_autocorr(x)
    K = len(x)
    inside = np.abs(rho) < 2.0 / math.sqrt(K)
    L = int(np.argmax(inside)) + 1 if inside.any() else len(rho)
    return 1.0 + 2.0 * rho[: min(max_lag, L)].sum()


class TestInefficiency:
    @pytest.mark.parametrize("seed,rho", [(0, 0.0), (1, 0.7), (2, 0.95), (3, -0.5)])
    def test_matches_direct_quadratic_time_recomputation(self, seed, rho):
        rng = np.random.default_rng(seed)
        x = np.empty(600)
        x[0] = rng.standard_normal()
        for t in range(1, 600):
            x[t] = rho * x[t - 1] + rng.standard_normal()
        assert inefficiency(x) == pytest.approx(_direct_inefficiency(x), rel=1e-10)

    def test_truncation_cap_applies(self):
        rng = np.random.default_rng(4)
        x = np.cumsum(rng.standard_normal(4000))  # random walk: no cut-off lag
        assert inefficiency(x, max_lag=50) == pytest.approx(
            _direct_inefficiency(x, max_lag=50), rel=1e-10
        )

    def test_iid_chain_is_near_one(self):
        x = np.random.default_rng(6).standard_normal(60_000)
        assert 0.9 < inefficiency(x) < 1.15

    def test_ar_chain_matches_theory(self):
        # AR(1) with rho = 0.9 has IF = (1+rho)/(1-rho) = 19
        rng = np.random.default_rng(11)
        x = np.empty(40_000)
        x[0] = rng.standard_normal() / math.sqrt(1 - 0.81)
        for t in range(1, len(x)):
            x[t] = 0.9 * x[t - 1] + rng.standard_normal()
        assert inefficiency(x) == pytest.approx(19.0, rel=0.2)

    def test_short_and_constant_chains(self):
        with pytest.raises(ValueError):
            inefficiency(np.arange(9.0))
        with pytest.raises(ZeroVariance):
            inefficiency(np.full(100, 2.5))

    def test_chain_inefficiencies_and_mcse(self):
        rng = np.random.default_rng(12)
        draws = np.column_stack([
            rng.standard_normal(3000),
            np.full(3000, 1.0),
        ])
        record = ChainRecord(names=("moving", "stuck"), draws=draws,
                             log_posteriors=np.zeros(3000),
                             accepted=np.ones(3000, dtype=bool))
        ifs = chain_inefficiencies(record, burn_in=500)
        assert 0.8 < ifs["moving"] < 1.2
        assert math.isnan(ifs["stuck"])
        means, mcse = posterior_mean_mcse(record, burn_in=500)
        kept = draws[500:, 0]
        assert means[0] == pytest.approx(kept.mean(), rel=1e-12)
        want = kept.std(ddof=1) * math.sqrt(ifs["moving"] / len(kept))
        assert mcse[0] == pytest.approx(want, rel=1e-10)
        assert means[1] == 1.0 and mcse[1] == 0.0
        with pytest.raises(ValueError):
            chain_inefficiencies(record, burn_in=2995)

    def test_computing_time_identity(self):
        assert computing_time(3.5, 50, 12.0) == pytest.approx(2100.0, rel=1e-13)
        with pytest.raises(ValueError):
            computing_time(0.0, 50, 12.0)
        with pytest.raises(ValueError):
            computing_time(1.0, 0, 12.0)
        with pytest.raises(ValueError):
            computing_time(1.0, 50, -1.0)


# ---------------------------------------------------------------------------
# chain initialisation


class TestKalmanMlInit:
    def test_recovers_linear_model_parameters(self):
        model = QuadraticAR1()
        theta = QuadraticAR1Params(phi=0.7, sigma_u=1.0, sigma_eps=0.5, delta=0.0)
        path = model.simulate(theta, 300, RandomStream(31))
        prior = default_prior("qar1")
        init = kalman_ml_init(model, prior, path.observations, RandomStream(32),
                              base_theta=theta, restarts=2)
        assert init.shape == (3,)
        assert init[0] == pytest.approx(0.7, abs=0.15)
        assert init[1] == pytest.approx(1.0, abs=0.35)

    def test_zero_length_data_returns_the_prior_mean(self):
        prior = default_prior("qar1")
        init = kalman_ml_init(QuadraticAR1(), prior, np.empty((0, 1)),
                              RandomStream(0))
        np.testing.assert_allclose(init, prior.mean(), rtol=1e-12)

    def test_no_reduction_is_an_error(self):
        class NoReduction:
            pass

        with pytest.raises(ValueError, match="reduction"):
            kalman_ml_init(NoReduction(), default_prior("qar1"),
                           np.zeros((4, 1)), RandomStream(0))

    def test_unattainable_objective_raises(self):
        model = QuadraticAR1()
        bad = np.full((5, 1), np.nan)
        with pytest.raises(OptimFailed):
            kalman_ml_init(model, default_prior("qar1"), bad, RandomStream(0),
                           restarts=2)
