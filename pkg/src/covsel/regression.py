"""Multivariate Gaussian linear regression with conjugate priors.

Model: y_i = gamma x_i + eps_i with eps_i ~ N(0, Sigma) and gamma a
d1 x d2 coefficient matrix acting on a known covariate vector x_i. The
prior couples a matrix-normal for gamma given the residual half-precision
H (mean nu, column precision Lambda, row covariance (2H)^{-1}) with one of
the three structure priors on H.

All structure evidences share the covariate factor
(|Lambda| / |X^T X + Lambda|)^{d1/2} and then reduce to the plain
structure evidence evaluated at the effective scatter

    R = sum_i eps_hat_i eps_hat_i^T + (gamma_hat - nu) Lambda (gamma_hat - nu)^T,

so covariate selection and variance-structure selection run off the same
closed forms as the no-covariate case.
"""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import SuffStats
from .errors import ConfigError, DimensionMismatchError, NonRegularPriorError
from .precision import DiagPrecision, FullPrecision, HalfPrecision, IsoPrecision
from .priors import (
    GammaHyper,
    GammaVecHyper,
    Hyper,
    WishartHyper,
    conjugate_update,
    log_prior_density,
)
from .specialfn import LOG_PI, chol_log_det, cholesky_pd, symmetrize
from .structures import FitReport, log_evidence, param_count

__all__ = [
    "RegressionData",
    "RegressionHyper",
    "RegressionFit",
    "fit_coefficients",
    "residual_stats",
    "effective_stats",
    "log_evidence_regression",
    "log_likelihood_regression",
    "log_joint_prior",
    "joint_flexibility",
    "joint_map",
    "fit_regression",
    "enumerate_covariates",
    "lambda_path",
    "LambdaPathRow",
]


@dataclass(frozen=True)
class RegressionData:
    """Paired response matrix y (n x d1) and covariate matrix x (n x d2)."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            # a bare vector is one covariate column; an empty list is none
            x = x[:, None] if x.size else x.reshape(y.shape[0], 0)
        if y.shape[0] != x.shape[0]:
            raise DimensionMismatchError(
                f"response rows {y.shape[0]} != covariate rows {x.shape[0]}"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("regression data must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d1(self) -> int:
        return self.y.shape[1]

    @property
    def d2(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class RegressionHyper:
    """Coefficient prior mean nu (d1 x d2), column precision Lambda
    (d2 x d2, positive definite) and a structure prior on the residual
    half-precision."""

    nu: np.ndarray
    lam: np.ndarray
    cov: Hyper

    def __post_init__(self):
        nu = np.atleast_2d(np.asarray(self.nu, dtype=float))
        lam = np.asarray(self.lam, dtype=float)
        if lam.size == 0:
            lam = lam.reshape(0, 0)
        if nu.size == 0:
            nu = nu.reshape(self.cov.dim, 0)
        if lam.shape[0] != lam.shape[1]:
            raise DimensionMismatchError("Lambda must be square")
        if nu.shape[1] != lam.shape[0]:
            raise DimensionMismatchError("nu column count must match Lambda")
        if nu.shape[0] != self.cov.dim:
            raise DimensionMismatchError("nu row count must match the residual prior dimension")
        if lam.shape[0] > 0:
            lam = symmetrize(lam)
            cholesky_pd(lam)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "lam", lam)

    @property
    def d1(self) -> int:
        return self.nu.shape[0]

    @property
    def d2(self) -> int:
        return self.nu.shape[1]


def fit_coefficients(data: RegressionData, nu: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Regularized least-squares coefficients.

    gamma_hat = (Y^T X + nu Lambda)(X^T X + Lambda)^{-1}; reduces to nu
    at n = 0 and is well defined for any n because Lambda is positive
    definite.
    """
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    if data.d2 == 0:
        return np.zeros((data.d1, 0))
    lam = np.asarray(lam, dtype=float)
    gram = data.x.T @ data.x + lam
    rhs = data.y.T @ data.x + nu @ lam
    return np.linalg.solve(gram.T, rhs.T).T


def residual_stats(data: RegressionData, gamma_hat: np.ndarray) -> SuffStats:
    """Sufficient statistics of the fitted residuals eps_i = y_i - gamma x_i."""
    eps = data.y - data.x @ np.atleast_2d(gamma_hat).T if data.d2 else data.y
    s = eps.T @ eps
    return SuffStats(n=data.n, d=data.d1, s=(s + s.T) / 2)


def effective_stats(data: RegressionData, rh: RegressionHyper) -> Tuple[np.ndarray, SuffStats]:
    """Coefficient estimate and the effective residual scatter R.

    R adds the prior-shrinkage penalty (gamma_hat - nu) Lambda (...)^T to
    the raw residual scatter; it is exactly the rate update each structure
    evidence sees.
    """
    _check_shapes(data, rh)
    gamma_hat = fit_coefficients(data, rh.nu, rh.lam)
    res = residual_stats(data, gamma_hat)
    if data.d2:
        dev = gamma_hat - rh.nu
        r = res.s + dev @ rh.lam @ dev.T
    else:
        r = res.s
    return gamma_hat, SuffStats(n=data.n, d=data.d1, s=(r + r.T) / 2)


def log_evidence_regression(data: RegressionData, rh: RegressionHyper) -> float:
    """Exact log marginal likelihood of the regression model.

    The covariate factor (d1/2) log(|Lambda| / |X^T X + Lambda|) plus the
    plain structure evidence at the effective scatter. With d2 = 0 this
    is exactly the no-covariate structure evidence of y.
    """
    _, eff = effective_stats(data, rh)
    if data.d2:
        lam_factor = data.d1 / 2 * (
            chol_log_det(rh.lam) - chol_log_det(data.x.T @ data.x + rh.lam)
        )
    else:
        lam_factor = 0.0
    return float(lam_factor + log_evidence(rh.cov, eff))


def log_likelihood_regression(
    data: RegressionData, gamma: np.ndarray, theta: HalfPrecision
) -> float:
    """Joint log-likelihood at coefficients gamma and half-precision theta."""
    if theta.dim != data.d1:
        raise DimensionMismatchError("theta dimension must equal the response dimension")
    eps = data.y - data.x @ np.atleast_2d(gamma).T if data.d2 else data.y
    q = eps.T @ eps
    n, d1 = data.n, data.d1
    if n == 0:
        return 0.0
    return float(n / 2 * theta.log_det() - n * d1 / 2 * LOG_PI - theta.scatter_product(q))


def _log_matrix_normal(gamma, nu, lam, theta) -> float:
    # conditional coefficient density: pi^{-d1 d2/2} |Lambda|^{d1/2} |H|^{d2/2}
    # exp(-tr(H (g - nu) Lambda (g - nu)^T))
    d1, d2 = nu.shape
    if d2 == 0:
        return 0.0
    dev = np.atleast_2d(gamma) - nu
    quad = theta.scatter_product(dev @ lam @ dev.T)
    return float(
        -d1 * d2 / 2 * LOG_PI + d1 / 2 * chol_log_det(lam) + d2 / 2 * theta.log_det() - quad
    )


def log_joint_prior(rh: RegressionHyper, gamma: np.ndarray, theta: HalfPrecision) -> float:
    """log prior density of (gamma, H) at (gamma, theta)."""
    return _log_matrix_normal(gamma, rh.nu, rh.lam, theta) + log_prior_density(rh.cov, theta)


def posterior_hyper(data: RegressionData, rh: RegressionHyper) -> RegressionHyper:
    """The conjugate posterior in the same hyperparameter family."""
    gamma_hat, eff = effective_stats(data, rh)
    lam_post = data.x.T @ data.x + rh.lam if data.d2 else rh.lam
    return RegressionHyper(nu=gamma_hat, lam=lam_post, cov=conjugate_update(rh.cov, eff))


def joint_flexibility(
    data: RegressionData, rh: RegressionHyper, gamma: np.ndarray, theta: HalfPrecision
) -> float:
    """log joint posterior minus log joint prior at (gamma, theta).

    Satisfies log_evidence_regression == log_likelihood_regression -
    joint_flexibility at every (gamma, theta), the regression version of
    the evidence identity.
    """
    post = posterior_hyper(data, rh)
    return log_joint_prior(post, gamma, theta) - log_joint_prior(rh, gamma, theta)


def joint_map(data: RegressionData, rh: RegressionHyper) -> Tuple[np.ndarray, HalfPrecision]:
    """Joint posterior mode over (gamma, H).

    gamma maximizes at gamma_hat for every positive definite H; profiling
    it out tilts the H-marginal by |H|^{d2/2}, shifting the mode's shape
    relative to the H-only problem.
    """
    gamma_hat, eff = effective_stats(data, rh)
    post = conjugate_update(rh.cov, eff)
    d1, d2, n = data.d1, data.d2, data.n
    if isinstance(post, WishartHyper):
        mult = post.alpha + d2 / 2 - (d1 + 1) / 2
        if mult <= 0:
            raise NonRegularPriorError("joint posterior mode undefined for structure A")
        c = cholesky_pd(post.rate)
        inv = np.linalg.inv(c)
        return gamma_hat, FullPrecision(mult * (inv.T @ inv))
    if isinstance(post, GammaVecHyper):
        shape = post.alpha + d2 / 2
        if shape <= 1:
            raise NonRegularPriorError("joint posterior mode undefined for structure D")
        return gamma_hat, DiagPrecision((shape - 1) / post.rate)
    shape = post.alpha + d1 * d2 / 2
    if shape <= 1:
        raise NonRegularPriorError("joint posterior mode undefined for structure C")
    return gamma_hat, IsoPrecision((shape - 1) / post.rate, d1)


@dataclass(frozen=True)
class RegressionFit:
    """Per-structure reports for one covariate subset."""

    subset: Tuple
    gamma_hats: Dict[str, np.ndarray]
    residuals: SuffStats
    reports: Dict[str, FitReport]

    def best(self, criterion: str = "evidence") -> Tuple[str, float]:
        vals = {
            s: rep.criterion_value(criterion)
            for s, rep in self.reports.items()
            if rep.criterion_value(criterion) is not None
        }
        structure = max(sorted(vals), key=lambda s: vals[s])
        return structure, vals[structure]

    def to_jsonable(self) -> dict:
        return {
            "subset": list(self.subset),
            "reports": {s: rep.to_jsonable() for s, rep in self.reports.items()},
        }


def fit_regression(data: RegressionData, hypers: Dict[str, RegressionHyper], subset=()) -> RegressionFit:
    """Fit every provided structure's regression model on the same data.

    The coefficient estimate is shared across structures (it does not
    depend on the variance structure); criteria use the joint MAP, with
    k = structure parameters + d1*d2 coefficients. The Kashyap criterion
    is not defined here and reported as missing.
    """
    reports = {}
    gammas = {}
    residuals = None
    for structure, rh in hypers.items():
        gamma_hat, eff = effective_stats(data, rh)
        theta = joint_map(data, rh)[1]
        ll = log_likelihood_regression(data, gamma_hat, theta)
        log_evi = log_evidence_regression(data, rh)
        flex = joint_flexibility(data, rh, gamma_hat, theta)
        k = param_count(structure, data.d1) + data.d1 * data.d2
        if data.n >= 1:
            log_n = math.log(data.n)
            lp = log_joint_prior(rh, gamma_hat, theta)
            bic = ll - k / 2 * log_n
            pc_bic = ll + lp - k / 2 * log_n
        else:
            bic = pc_bic = None
        reports[structure] = FitReport(
            structure=structure,
            map=theta,
            log_lik_at_map=ll,
            log_evidence=log_evi,
            flexibility_at_map=flex,
            bic=bic,
            pc_bic=pc_bic,
            kic=None,
            k=k,
        )
        gammas[structure] = gamma_hat
        residuals = residual_stats(data, gamma_hat)
    return RegressionFit(subset=tuple(subset), gamma_hats=gammas, residuals=residuals, reports=reports)


def standard_hypers(
    d1: int,
    d2: int,
    alpha: float = 2.0,
    beta: float = 1.0,
    nu: Optional[np.ndarray] = None,
    lam: Optional[np.ndarray] = None,
) -> Dict[str, RegressionHyper]:
    """One RegressionHyper per structure from shared scalars.

    Defaults mirror a weakly-informative choice: nu = 0, Lambda = I,
    common shape alpha, rate beta for C and each axis of D, and beta * I
    as the Wishart rate.
    """
    nu = np.zeros((d1, d2)) if nu is None else np.atleast_2d(np.asarray(nu, dtype=float))
    lam = np.eye(d2) if lam is None else np.asarray(lam, dtype=float)
    return {
        "A": RegressionHyper(nu, lam, WishartHyper(alpha, beta * np.eye(d1))),
        "D": RegressionHyper(nu, lam, GammaVecHyper(alpha, np.full(d1, beta))),
        "C": RegressionHyper(nu, lam, GammaHyper(alpha, beta, d1)),
    }


def enumerate_covariates(
    data: RegressionData,
    hypers: Dict[str, RegressionHyper],
    names: Optional[Sequence[str]] = None,
    include_empty: bool = False,
    criterion: str = "evidence",
    max_candidates: int = 20,
) -> List[RegressionFit]:
    """Fit every covariate subset, slicing nu and Lambda to the subset.

    Subsets are identified by canonical (sorted) column labels so the
    output is invariant to the order candidates are supplied in. Sorted
    by the best value of `criterion` across structures, descending.
    """
    d2 = data.d2
    if d2 > max_candidates:
        raise ConfigError(f"{d2} candidate columns exceed the cap of {max_candidates}")
    labels = tuple(names) if names is not None else tuple(range(d2))
    if len(labels) != d2:
        raise ConfigError("names length must match the covariate count")
    fits = []
    sizes = range(0 if include_empty else 1, d2 + 1)
    for size in sizes:
        for idx in combinations(range(d2), size):
            sliced = {
                s: RegressionHyper(
                    nu=rh.nu[:, list(idx)],
                    lam=rh.lam[np.ix_(idx, idx)],
                    cov=rh.cov,
                )
                for s, rh in hypers.items()
            }
            sub = RegressionData(data.y, data.x[:, list(idx)])
            subset = tuple(sorted(labels[i] for i in idx) if names else idx)
            fits.append(fit_regression(sub, sliced, subset=subset))
    fits.sort(key=lambda f: -f.best(criterion)[1])
    return fits


@dataclass(frozen=True)
class LambdaPathRow:
    lam: float
    log_evidence: float
    flexibility: float
    bic_penalty: float
    pcbic_penalty: float
    non_regular: bool

    def to_jsonable(self) -> dict:
        return {
            "lambda": self.lam,
            "log_evidence": self.log_evidence,
            "flexibility": self.flexibility,
            "bic_penalty": self.bic_penalty,
            "pcbic_penalty": self.pcbic_penalty,
            "non_regular": self.non_regular,
        }


def lambda_path(data: RegressionData, lambdas: Sequence[float]) -> List[LambdaPathRow]:
    """Penalty curves for the single-hyperparameter ridge prior family.

    For each lambda the prior is eta ~ gamma(1, lambda^2/2) on the
    residual half-precision and gamma | eta ~ N(0, I / (lambda^2 eta)),
    i.e. nu = 0 and Lambda = (lambda^2/2) I in this package's convention
    (the conditional coefficient covariance is Lambda^{-1} / (2 eta)).
    Requires a univariate response. Values of lambda below 1/2 are
    flagged non-regular, where the flexibility curve is known to turn
    upward.
    """
    if data.d1 != 1:
        raise ConfigError("lambda_path requires a univariate response (d1 = 1)")
    if any(l <= 0 for l in lambdas):
        raise ConfigError("lambda grid must be strictly positive")
    rows = []
    for lam in lambdas:
        lam = float(lam)
        rh = RegressionHyper(
            nu=np.zeros((1, data.d2)),
            lam=(lam**2 / 2) * np.eye(data.d2),
            cov=GammaHyper(1.0, lam**2 / 2, 1),
        )
        gamma_hat, theta = joint_map(data, rh)
        ll = log_likelihood_regression(data, gamma_hat, theta)
        log_evi = log_evidence_regression(data, rh)
        flex = ll - log_evi
        k = 1 + data.d2
        log_n = math.log(data.n)
        lp = log_joint_prior(rh, gamma_hat, theta)
        rows.append(
            LambdaPathRow(
                lam=lam,
                log_evidence=float(log_evi),
                flexibility=float(flex),
                bic_penalty=float(k / 2 * log_n),
                pcbic_penalty=float(k / 2 * log_n - lp),
                non_regular=lam < 0.5,
            )
        )
    return rows


def _check_shapes(data: RegressionData, rh: RegressionHyper) -> None:
    if rh.d1 != data.d1 or rh.d2 != data.d2:
        raise DimensionMismatchError(
            f"hyper shapes (d1={rh.d1}, d2={rh.d2}) do not match data "
            f"(d1={data.d1}, d2={data.d2})"
        )
