import math

import numpy as np
import pytest
from scipy import integrate

from covsel.data import SuffStats
from covsel.errors import ConfigError, DimensionMismatchError
from covsel.priors import GammaHyper, GammaVecHyper, WishartHyper, sample_half_precision
from covsel.regression import (
    RegressionData,
    RegressionHyper,
    enumerate_covariates,
    fit_coefficients,
    fit_regression,
    joint_flexibility,
    joint_map,
    lambda_path,
    log_evidence_regression,
    log_joint_prior,
    log_likelihood_regression,
    residual_stats,
    standard_hypers,
)
from covsel.structures import log_evidence


def toy_data(rng, n=20, d1=2, d2=3, noise=0.5):
    x = rng.standard_normal((n, d2))
    gamma = rng.standard_normal((d1, d2))
    y = x @ gamma.T + noise * rng.standard_normal((n, d1))
    return RegressionData(y, x)


class TestFitCoefficients:
    def test_empty_sample_returns_prior_mean(self):
        data = RegressionData(np.empty((0, 2)), np.empty((0, 3)))
        nu = np.arange(6.0).reshape(2, 3)
        np.testing.assert_allclose(fit_coefficients(data, nu, np.eye(3)), nu)

    def test_scalar_case(self):
        data = RegressionData([[2.0]], [[1.0]])
        got = fit_coefficients(data, np.zeros((1, 1)), np.eye(1))
        assert got[0, 0] == pytest.approx(1.0)

    def test_infinite_regularization_limit(self):
        rng = np.random.default_rng(0)
        data = toy_data(rng)
        nu = rng.standard_normal((2, 3))
        got = fit_coefficients(data, nu, 1e8 * np.eye(3))
        np.testing.assert_allclose(got, nu, rtol=1e-6)


class TestResidualStats:
    def test_perfect_fit(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((10, 2))
        gamma = np.array([[1.0, -2.0], [0.5, 3.0]])
        data = RegressionData(x @ gamma.T, x)
        st = residual_stats(data, gamma)
        np.testing.assert_allclose(st.s, np.zeros((2, 2)), atol=1e-20)

    def test_scalar_residual(self):
        data = RegressionData([[2.0]], [[1.0]])
        st = residual_stats(data, np.array([[1.0]]))
        assert st.s_total == pytest.approx(1.0)

    def test_empty(self):
        data = RegressionData(np.empty((0, 1)), np.empty((0, 1)))
        assert residual_stats(data, np.zeros((1, 1))).n == 0


class TestLogEvidenceRegression:
    def test_no_covariates_reduces_to_plain_evidence(self):
        rng = np.random.default_rng(2)
        y = rng.standard_normal((15, 3))
        data = RegressionData(y, np.empty((15, 0)))
        s = y.T @ y
        stats = SuffStats(n=15, d=3, s=(s + s.T) / 2)
        for cov in (
            WishartHyper(3.0, np.eye(3)),
            GammaVecHyper(2.0, np.ones(3)),
            GammaHyper(2.0, 1.0, 3),
        ):
            rh = RegressionHyper(np.zeros((3, 0)), np.zeros((0, 0)), cov)
            assert log_evidence_regression(data, rh) == pytest.approx(
                log_evidence(cov, stats), abs=1e-10
            )

    def test_quadrature_oracle_d1_d2_one(self):
        rng = np.random.default_rng(3)
        n = 6
        x = rng.standard_normal((n, 1))
        y = 0.8 * x + 0.4 * rng.standard_normal((n, 1))
        data = RegressionData(y, x)
        alpha, beta, lam = 2.0, 1.0, 1.5
        rh = RegressionHyper(np.zeros((1, 1)), lam * np.eye(1), GammaHyper(alpha, beta, 1))

        xs = x[:, 0]
        ys = y[:, 0]

        def log_integrand(g, t):
            eta = math.exp(t)
            resid = ys - g * xs
            ll = n / 2 * math.log(eta / math.pi) - eta * float(resid @ resid)
            # coefficient prior: N(0, 1/(2 eta lam)), density (eta lam / pi)^(1/2) ...
            lp_g = 0.5 * math.log(eta * lam / math.pi) - eta * lam * g * g
            lp_e = alpha * math.log(beta) - math.lgamma(alpha) + (alpha - 1) * t - beta * eta
            return ll + lp_g + lp_e + t  # + t from eta = exp(t)

        g_hat, theta_hat = joint_map(data, rh)
        shift = log_integrand(float(g_hat[0, 0]), math.log(theta_hat.value))
        val, _ = integrate.dblquad(
            lambda t, g: math.exp(log_integrand(g, t) - shift),
            -8.0,
            8.0,
            -12.0,
            8.0,
            epsabs=1e-11,
            epsrel=1e-9,
        )
        oracle = shift + math.log(val)
        assert log_evidence_regression(data, rh) == pytest.approx(oracle, abs=1e-5)

    def test_iris_full_model_value(self, iris_regression):
        y, x, _ = iris_regression
        data = RegressionData(y, x)
        hypers = standard_hypers(2, 3)
        fit = fit_regression(data, hypers)
        assert fit.reports["A"].log_evidence == pytest.approx(-61.2, abs=0.1)


class TestJointIdentity:
    def test_identity_at_arbitrary_points(self):
        rng = np.random.default_rng(4)
        for cov in (
            WishartHyper(3.0, np.eye(2) + 0.2),
            GammaVecHyper(2.0, np.array([0.7, 1.3])),
            GammaHyper(2.5, 1.2, 2),
        ):
            data = toy_data(rng, n=12, d1=2, d2=2)
            rh = RegressionHyper(np.zeros((2, 2)), 0.8 * np.eye(2), cov)
            log_evi = log_evidence_regression(data, rh)
            for _ in range(20):
                gamma = rng.standard_normal((2, 2))
                theta = sample_half_precision(cov, rng)
                resid = log_evi - (
                    log_likelihood_regression(data, gamma, theta)
                    - joint_flexibility(data, rh, gamma, theta)
                )
                assert abs(resid) < 1e-8

    def test_identity_at_joint_map(self):
        rng = np.random.default_rng(5)
        data = toy_data(rng, n=25, d1=3, d2=2)
        rh = standard_hypers(3, 2)["A"]
        gamma, theta = joint_map(data, rh)
        lhs = log_evidence_regression(data, rh)
        rhs = log_likelihood_regression(data, gamma, theta) - joint_flexibility(
            data, rh, gamma, theta
        )
        assert lhs == pytest.approx(rhs, abs=1e-8)

    def test_joint_map_maximizes_posterior(self):
        rng = np.random.default_rng(6)
        data = toy_data(rng, n=18, d1=2, d2=2)
        for structure, rh in standard_hypers(2, 2).items():
            gamma, theta = joint_map(data, rh)
            # log posterior = log prior + log lik (up to the evidence constant)
            def log_post(g, th):
                return log_joint_prior(rh, g, th) + log_likelihood_regression(data, g, th)

            best = log_post(gamma, theta)
            for _ in range(60):
                g = gamma + 0.05 * rng.standard_normal(gamma.shape)
                th = sample_half_precision(rh.cov, rng)
                assert log_post(g, th) <= best + 1e-9


class TestScaleCovariance:
    def test_common_log_evidence_shift(self):
        rng = np.random.default_rng(7)
        data = toy_data(rng, n=14, d1=2, d2=2)
        c = 3.7
        scaled = RegressionData(c * data.y, data.x)
        base = standard_hypers(2, 2, alpha=2.0, beta=1.0)
        scaled_hypers = {
            "A": RegressionHyper(c * base["A"].nu, base["A"].lam, WishartHyper(2.0, c**2 * np.eye(2))),
            "D": RegressionHyper(c * base["D"].nu, base["D"].lam, GammaVecHyper(2.0, np.full(2, c**2))),
            "C": RegressionHyper(c * base["C"].nu, base["C"].lam, GammaHyper(2.0, c**2, 2)),
        }
        shifts = []
        for s in ("A", "D", "C"):
            shifts.append(
                log_evidence_regression(scaled, scaled_hypers[s])
                - log_evidence_regression(data, base[s])
            )
        expected = -data.n * data.d1 * math.log(c)
        np.testing.assert_allclose(shifts, expected, atol=1e-8)


class TestEnumerateCovariates:
    def test_subset_count(self):
        rng = np.random.default_rng(8)
        data = toy_data(rng, n=10, d1=2, d2=3)
        fits = enumerate_covariates(data, standard_hypers(2, 3))
        assert len(fits) == 7  # nonempty subsets of 3 candidates

    def test_single_candidate(self):
        rng = np.random.default_rng(9)
        data = toy_data(rng, n=10, d1=1, d2=1)
        fits = enumerate_covariates(data, standard_hypers(1, 1))
        assert len(fits) == 1

    def test_invariant_to_candidate_order(self):
        rng = np.random.default_rng(10)
        data = toy_data(rng, n=12, d1=2, d2=3)
        names = ("a", "b", "c")
        fits = enumerate_covariates(data, standard_hypers(2, 3), names=names)
        perm = [2, 0, 1]
        data_p = RegressionData(data.y, data.x[:, perm])
        names_p = tuple(names[i] for i in perm)
        fits_p = enumerate_covariates(data_p, standard_hypers(2, 3), names=names_p)

        def table(fs):
            return {
                frozenset(f.subset): {s: round(r.log_evidence, 9) for s, r in f.reports.items()}
                for f in fs
            }

        assert table(fits) == table(fits_p)

    def test_cap(self):
        rng = np.random.default_rng(11)
        data = toy_data(rng, n=5, d1=1, d2=3)
        with pytest.raises(ConfigError):
            enumerate_covariates(data, standard_hypers(1, 3), max_candidates=2)

    def test_iris_argmax(self, iris_regression):
        y, x, names = iris_regression
        data = RegressionData(y, x)
        fits = enumerate_covariates(data, standard_hypers(2, 3), names=names)
        best = fits[0]
        assert set(best.subset) == {"Int", "PL"}
        assert best.best("evidence")[0] == "A"


class TestLambdaPath:
    def _donkey_like(self, rng, n=100, d2=3):
        x = np.column_stack([np.ones(n), rng.standard_normal((n, d2 - 1))])
        gamma = np.array([[0.5, 1.0, -0.7]])[:, :d2]
        y = x @ gamma.T + 0.3 * rng.standard_normal((n, 1))
        return RegressionData(y, x)

    def test_finite_and_continuous(self):
        rng = np.random.default_rng(12)
        data = self._donkey_like(rng)
        grid = np.linspace(0.05, 5.0, 80)
        rows = lambda_path(data, grid)
        flex = np.array([r.flexibility for r in rows])
        evid = np.array([r.log_evidence for r in rows])
        assert np.all(np.isfinite(flex)) and np.all(np.isfinite(evid))
        assert np.abs(np.diff(flex)).max() < 10 * (grid[1] - grid[0]) / 0.05

    def test_non_regular_flag(self):
        rng = np.random.default_rng(13)
        data = self._donkey_like(rng, n=30)
        rows = lambda_path(data, [0.1, 0.49, 0.5, 1.0])
        assert [r.non_regular for r in rows] == [True, True, False, False]

    def test_positive_grid_required(self):
        rng = np.random.default_rng(14)
        data = self._donkey_like(rng, n=10)
        with pytest.raises(ConfigError):
            lambda_path(data, [0.0, 1.0])

    def test_univariate_response_required(self):
        rng = np.random.default_rng(15)
        data = toy_data(rng, n=10, d1=2, d2=2)
        with pytest.raises(ConfigError):
            lambda_path(data, [1.0])

    def test_flexibility_minus_bic_penalty_converges(self):
        # the flexibility of the joint family tracks (k/2) log n plus a
        # lambda-dependent constant as n grows
        rng = np.random.default_rng(16)
        lam = 1.5
        gamma0 = np.array([[0.5, -0.8]])
        for_reps = []
        for n in (100, 1000, 10_000):
            vals = []
            for _ in range(30):
                x = np.column_stack([np.ones(n), rng.standard_normal(n)])
                y = x @ gamma0.T + 0.4 * rng.standard_normal((n, 1))
                row = lambda_path(RegressionData(y, x), [lam])[0]
                vals.append(row.flexibility - row.bic_penalty)
            for_reps.append(np.mean(vals))
        assert abs(for_reps[2] - for_reps[1]) < abs(for_reps[1] - for_reps[0])
        assert abs(for_reps[2] - for_reps[1]) < 0.1


class TestValidation:
    def test_shape_mismatch(self):
        data = RegressionData(np.zeros((4, 2)), np.zeros((4, 3)))
        rh = RegressionHyper(np.zeros((2, 2)), np.eye(2), GammaHyper(2.0, 1.0, 2))
        with pytest.raises(DimensionMismatchError):
            log_evidence_regression(data, rh)

    def test_row_count_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            RegressionData(np.zeros((4, 2)), np.zeros((5, 1)))
