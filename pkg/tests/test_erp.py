"""Tests for the ERP library: densities, scores, sampling and reparameterisation."""

import math

import numpy as np
import pytest

from varprog.core.exceptions import OutOfSupportError, ParameterError
from varprog.services import erp
from varprog.services.erp import ErpFamily, ErpKind

FAMILIES = [
    ErpFamily.normal(),
    ErpFamily.bernoulli(),
    ErpFamily.categorical(4),
    ErpFamily.beta(),
    ErpFamily.gamma(),
    ErpFamily.dirichlet(3),
    ErpFamily.uniform(-2.0, 3.0),
]


def _finite_difference(family, theta, value, h=1e-5):
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (erp.log_pdf(family, up, value) - erp.log_pdf(family, down, value)) / (2 * h)
    return grad


@pytest.mark.unit
class TestErpFamily:
    """Tests for family identity, arity and tokens."""

    def test_arity_matches_unconstrained_parameterisation(self):
        """GIVEN each family
        WHEN asking for its arity
        THEN it counts the unconstrained parameters"""
        arities = {f.kind: f.arity for f in FAMILIES}
        assert arities == {
            ErpKind.normal: 2,
            ErpKind.bernoulli: 1,
            ErpKind.categorical: 4,
            ErpKind.beta: 2,
            ErpKind.gamma: 2,
            ErpKind.dirichlet: 3,
            ErpKind.uniform: 2,
        }

    def test_token_identifies_family(self):
        """GIVEN families with dimensions and supports
        WHEN written as tokens and read back
        THEN the same family is recovered"""
        for family in (ErpFamily.categorical(7), ErpFamily.uniform(-0.5, 2.25)):
            assert ErpFamily.from_token(family.token()) == family
        assert ErpFamily.dirichlet(3).token() == "dirichlet:3"

    def test_unknown_token_rejected(self):
        """GIVEN a token naming no family
        WHEN parsed
        THEN a ParameterError is raised"""
        with pytest.raises(ParameterError):
            ErpFamily.from_token("cauchy")
        with pytest.raises(ParameterError):
            ErpFamily.from_token("normal:3")

    def test_invalid_uniform_support_rejected(self):
        """GIVEN an empty support interval
        WHEN building a uniform family
        THEN a ParameterError is raised"""
        with pytest.raises(ParameterError):
            ErpFamily.uniform(1.0, 1.0)

    def test_only_bernoulli_and_categorical_enumerate(self):
        """GIVEN the families
        WHEN asking for finite outcomes
        THEN only the discrete ones have them"""
        assert list(ErpFamily.bernoulli().outcomes()) == [0, 1]
        assert list(ErpFamily.categorical(3).outcomes()) == [0, 1, 2]
        with pytest.raises(ParameterError):
            ErpFamily.normal().outcomes()


@pytest.mark.unit
class TestLogPdf:
    """Tests for log-densities under unconstrained parameters."""

    def test_standard_normal_at_mode(self):
        """GIVEN Normal(mean 0, log_std 0)
        WHEN evaluated at 0
        THEN the density is -0.5 log(2 pi)"""
        assert erp.log_pdf(ErpFamily.normal(), [0.0, 0.0], 0.0) == pytest.approx(-0.91894, abs=1e-5)

    def test_fair_coin(self):
        """GIVEN Bernoulli(logit 0)
        WHEN evaluated at 1
        THEN the density is log 0.5"""
        assert erp.log_pdf(ErpFamily.bernoulli(), [0.0], 1) == pytest.approx(math.log(0.5))

    def test_flat_dirichlet(self):
        """GIVEN Dirichlet(1, 1, 1)
        WHEN evaluated at an interior point of the simplex
        THEN the density is 2"""
        value = np.array([0.2, 0.3, 0.5])
        assert erp.log_pdf(ErpFamily.dirichlet(3), np.zeros(3), value) == pytest.approx(math.log(2))

    def test_outside_support_is_minus_infinity(self):
        """GIVEN values outside each family's support
        WHEN evaluated
        THEN the log-density is -inf rather than an error"""
        assert erp.log_pdf(ErpFamily.bernoulli(), [0.0], 2) == -math.inf
        assert erp.log_pdf(ErpFamily.beta(), [0.0, 0.0], 1.5) == -math.inf
        assert erp.log_pdf(ErpFamily.gamma(), [0.0, 0.0], -1.0) == -math.inf
        assert erp.log_pdf(ErpFamily.dirichlet(2), [0.0, 0.0], np.array([0.7, 0.7])) == -math.inf
        assert erp.log_pdf(ErpFamily.uniform(0.0, 1.0), [0.0, 0.0], 1.0) == -math.inf
        assert erp.log_pdf(ErpFamily.normal(), [0.0, 0.0], math.nan) == -math.inf

    def test_wrong_parameter_count_rejected(self):
        """GIVEN a parameter vector of the wrong length
        WHEN evaluated
        THEN a ParameterError is raised"""
        with pytest.raises(ParameterError):
            erp.log_pdf(ErpFamily.normal(), [0.0], 0.0)

    def test_non_finite_parameters_rejected(self):
        """GIVEN a NaN parameter
        WHEN evaluated
        THEN a ParameterError is raised"""
        with pytest.raises(ParameterError):
            erp.log_pdf(ErpFamily.bernoulli(), [math.nan], 1)


@pytest.mark.unit
class TestGradLogPdf:
    """Tests for analytic scores."""

    def test_fair_coin_score(self):
        """GIVEN Bernoulli(logit 0)
        WHEN differentiated at 1
        THEN the score is x - sigmoid(logit) = 0.5"""
        np.testing.assert_allclose(erp.grad_log_pdf(ErpFamily.bernoulli(), [0.0], 1), [0.5])

    def test_normal_score_at_mode(self):
        """GIVEN Normal(mean 1, log_std 0)
        WHEN differentiated at 1
        THEN the mean component is 0 and the log-std component is -1"""
        grad = erp.grad_log_pdf(ErpFamily.normal(), [1.0, 0.0], 1.0)
        np.testing.assert_allclose(grad, [0.0, -1.0])

    def test_outside_support_raises(self):
        """GIVEN a value outside the support
        WHEN differentiated
        THEN an OutOfSupportError is raised"""
        with pytest.raises(OutOfSupportError):
            erp.grad_log_pdf(ErpFamily.categorical(3), [0.0, 0.0, 0.0], 3)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.kind.value)
    def test_score_matches_finite_differences(self, family, rng):
        """GIVEN 100 random parameter vectors and values drawn from them
        WHEN comparing the analytic score with central differences
        THEN they agree to 1e-4 relative"""
        for _ in range(100):
            theta = rng.uniform(-1.0, 1.0, size=family.arity)
            value = erp.sample(family, theta, rng)
            analytic = erp.grad_log_pdf(family, theta, value)
            numeric = _finite_difference(family, theta, value)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.kind.value)
    def test_draw_agrees_with_log_pdf_and_score(self, family, rng):
        """GIVEN a draw returning value, log-density and score together
        WHEN recomputing them separately
        THEN they match"""
        theta = rng.uniform(-1.0, 1.0, size=family.arity)
        value, log_q, score = erp.draw(family, theta, rng)
        assert log_q == pytest.approx(erp.log_pdf(family, theta, value), rel=1e-12)
        np.testing.assert_allclose(score, erp.grad_log_pdf(family, theta, value), rtol=1e-12)


@pytest.mark.unit
class TestSampling:
    """Tests for samplers against known moments."""

    def test_standard_normal_is_centred(self, rng):
        """GIVEN Normal(0, log_std 0)
        WHEN drawing 10^4 values
        THEN the mean is 0 within 4 standard errors"""
        draws = np.array([erp.sample(ErpFamily.normal(), [0.0, 0.0], rng) for _ in range(10_000)])
        assert abs(draws.mean()) < 4 * draws.std() / math.sqrt(draws.size)

    def test_flat_categorical_frequencies(self, rng):
        """GIVEN Categorical(logits 0, 0, 0)
        WHEN drawing 10^5 values
        THEN each index has frequency 1/3 within 4 standard errors"""
        n = 100_000
        draws = np.array([erp.sample(ErpFamily.categorical(3), np.zeros(3), rng) for _ in range(n)])
        stderr = math.sqrt((1 / 3) * (2 / 3) / n)
        for k in range(3):
            assert abs(np.mean(draws == k) - 1 / 3) < 4 * stderr

    def test_flat_beta_is_uniform(self, rng):
        """GIVEN Beta(log a = 0, log b = 0)
        WHEN drawing 10^4 values
        THEN they lie in (0, 1) with mean 0.5 within 4 standard errors"""
        draws = np.array([erp.sample(ErpFamily.beta(), [0.0, 0.0], rng) for _ in range(10_000)])
        assert np.all((draws > 0.0) & (draws < 1.0))
        assert abs(draws.mean() - 0.5) < 4 * math.sqrt(1 / 12 / draws.size)

    def test_samples_stay_in_support(self, rng):
        """GIVEN every family
        WHEN sampling
        THEN each value is inside the support"""
        for family in FAMILIES:
            theta = rng.uniform(-1.0, 1.0, size=family.arity)
            for _ in range(50):
                assert erp.in_support(family, erp.sample(family, theta, rng))


@pytest.mark.unit
class TestInitFromTarget:
    """Tests for mapping natural parameters to unconstrained ones."""

    def test_normal(self):
        """GIVEN Normal(mean 2, std 3)
        WHEN initialised
        THEN the parameters are (2, log 3) and both densities agree"""
        family = ErpFamily.normal()
        theta = erp.init_from_target(family, [2.0, 3.0])
        np.testing.assert_allclose(theta, [2.0, math.log(3.0)])
        for x in (-4.0, 0.0, 2.0, 7.5):
            assert erp.log_pdf(family, theta, x) == pytest.approx(
                erp.target_log_pdf(family, [2.0, 3.0], x), rel=1e-12
            )

    def test_fair_coin_has_zero_logit(self):
        """GIVEN Bernoulli(0.5)
        WHEN initialised
        THEN the logit is 0"""
        np.testing.assert_allclose(erp.init_from_target(ErpFamily.bernoulli(), [0.5]), [0.0])

    def test_dirichlet_log_concentration(self):
        """GIVEN Dirichlet(2, 1)
        WHEN initialised
        THEN the parameters are (log 2, 0)"""
        np.testing.assert_allclose(
            erp.init_from_target(ErpFamily.dirichlet(2), [2.0, 1.0]), [math.log(2.0), 0.0]
        )

    def test_gamma_and_beta_agree_with_target(self, rng):
        """GIVEN Gamma(2, 3) and Beta(0.5, 4)
        WHEN initialised
        THEN variational and target densities agree at random points"""
        cases = [(ErpFamily.gamma(), [2.0, 3.0]), (ErpFamily.beta(), [0.5, 4.0])]
        for family, natural in cases:
            theta = erp.init_from_target(family, natural)
            for _ in range(20):
                x = erp.target_sample(family, natural, rng)
                assert erp.log_pdf(family, theta, x) == pytest.approx(
                    erp.target_log_pdf(family, natural, x), rel=1e-9
                )

    def test_uniform_starts_flat(self):
        """GIVEN Uniform(-2, 3)
        WHEN initialised
        THEN the rescaled Beta is flat with density 1/5"""
        family = ErpFamily.uniform(-2.0, 3.0)
        theta = erp.init_from_target(family, [-2.0, 3.0])
        np.testing.assert_allclose(theta, [0.0, 0.0])
        assert erp.log_pdf(family, theta, 0.7) == pytest.approx(-math.log(5.0))

    def test_degenerate_coin_rejected(self):
        """GIVEN Bernoulli(0)
        WHEN initialised
        THEN a ParameterError is raised because the logit is infinite"""
        with pytest.raises(ParameterError):
            erp.init_from_target(ErpFamily.bernoulli(), [0.0])

    def test_invalid_natural_parameters_rejected(self):
        """GIVEN a negative standard deviation or probabilities not summing to one
        WHEN initialised
        THEN a ParameterError is raised"""
        with pytest.raises(ParameterError):
            erp.init_from_target(ErpFamily.normal(), [0.0, -1.0])
        with pytest.raises(ParameterError):
            erp.init_from_target(ErpFamily.categorical(2), [0.3, 0.3])


@pytest.mark.slow
class TestScoreIdentity:
    """Tests for the zero-mean property of the score under its own distribution."""

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.token())
    def test_mean_score_is_zero(self, family):
        """GIVEN a family at random unconstrained parameters
        WHEN averaging the score over 10^5 draws
        THEN every component is within 3 standard errors of zero"""
        rng = np.random.default_rng(2024)
        theta = rng.uniform(-1.0, 1.0, size=family.arity)
        n = 100_000
        scores = np.array([erp.draw(family, theta, rng)[2] for _ in range(n)])
        stderr = scores.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(scores.mean(axis=0)) <= 3 * stderr)


@pytest.mark.unit
class TestDiscreteNormalisation:
    """Tests for discrete families summing to one."""

    @pytest.mark.parametrize(
        "family", [ErpFamily.bernoulli(), ErpFamily.categorical(2), ErpFamily.categorical(7)]
    )
    def test_probabilities_sum_to_one(self, family, rng):
        """GIVEN a discrete family at random parameters
        WHEN exponentiating log_pdf over every outcome
        THEN the total is 1 within 1e-10"""
        for _ in range(20):
            theta = rng.normal(0.0, 3.0, size=family.arity)
            total = sum(math.exp(erp.log_pdf(family, theta, k)) for k in family.outcomes())
            assert total == pytest.approx(1.0, abs=1e-10)


@pytest.mark.unit
class TestNarrowUniform:
    """Tests for uniform sites whose bounds are large next to their width."""

    def test_draws_never_land_on_a_bound(self, rng):
        """GIVEN a uniform support only a few hundred ulps wide far from zero
        WHEN sampling from a guide piled up against the upper bound and from the target
        THEN every value is strictly inside with a finite log-density"""
        family = ErpFamily.uniform(1e8, 1e8 + 1e-6)
        theta = [math.log(150.0), math.log(0.005)]
        for _ in range(2000):
            value, log_q, score = erp.draw(family, theta, rng)
            assert erp.in_support(family, value)
            assert math.isfinite(log_q)
            assert np.all(np.isfinite(score))
            target = erp.target_sample(family, [family.low, family.high], rng)
            assert erp.in_support(family, target)

    def test_guide_piled_on_lower_bound(self, rng):
        """GIVEN a guide concentrated at the lower bound of a narrow far-away support
        WHEN sampling
        THEN values stay above the lower bound"""
        family = ErpFamily.uniform(-1e8 - 1e-6, -1e8)
        theta = [math.log(0.005), math.log(150.0)]
        for _ in range(2000):
            value = erp.sample(family, theta, rng)
            assert family.low < value < family.high
            assert math.isfinite(erp.log_pdf(family, theta, value))
