"""Conjugate gamma/Wishart priors on the half-precision.

One prior family per covariance structure:

* structure A: Wishart with shape alpha and positive definite rate B,
  density |B|^a / Gamma_d(a) * |x|^(a-(d+1)/2) * exp(-tr(Bx)).
  This is a *rate* (not scale) parameterization; it equals the standard
  Wishart with df = 2*alpha and scale (2B)^{-1}.
* structure D: product of d independent gamma(alpha, beta_j) priors.
* structure C: a single gamma(alpha, beta) prior on the common precision.

All three are exponential-family conjugate priors; the shared "prior
sample size" m below makes their information content comparable across
structures and drives the matching maps between them.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.special import gammaln

from .data import SuffStats
from .errors import (
    ConfigError,
    DegenerateScatterError,
    DimensionMismatchError,
    EmptyDatasetError,
    SupportError,
)
from .precision import (
    DiagPrecision,
    FullPrecision,
    HalfPrecision,
    IsoPrecision,
    as_diag_vector,
    as_iso_scalar,
)
from .specialfn import chol_log_det, cholesky_pd, log_mv_gamma, symmetrize

__all__ = [
    "WishartHyper",
    "GammaVecHyper",
    "GammaHyper",
    "Hyper",
    "HyperTriple",
    "PriorSampleSize",
    "prior_sample_size",
    "shape_for_sample_size",
    "log_normalizer",
    "conjugate_update",
    "match_down",
    "match_up",
    "matched_family",
    "kl_objective",
    "empirical_bayes",
    "mclust_default",
    "sample_half_precision",
    "log_prior_density",
    "hyper_to_jsonable",
    "hyper_from_jsonable",
]


@dataclass(frozen=True)
class WishartHyper:
    """Shape alpha and d x d positive definite rate matrix (structure A)."""

    alpha: float
    rate: np.ndarray

    structure = "A"

    def __post_init__(self):
        rate = symmetrize(self.rate)
        cholesky_pd(rate)
        d = rate.shape[0]
        if self.alpha <= (d - 1) / 2:
            raise SupportError(
                f"Wishart shape must exceed (d-1)/2 = {(d - 1) / 2}, got {self.alpha}"
            )
        object.__setattr__(self, "rate", rate)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def dim(self) -> int:
        return self.rate.shape[0]


@dataclass(frozen=True)
class GammaVecHyper:
    """Common shape alpha with per-axis rates beta_j (structure D)."""

    alpha: float
    rate: np.ndarray

    structure = "D"

    def __post_init__(self):
        rate = np.atleast_1d(np.asarray(self.rate, dtype=float))
        if rate.ndim != 1 or rate.size == 0:
            raise ValueError("rate must be a nonempty vector")
        if self.alpha <= 0 or np.any(rate <= 0) or not np.all(np.isfinite(rate)):
            raise SupportError("gamma shapes and rates must be positive and finite")
        object.__setattr__(self, "rate", rate)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def dim(self) -> int:
        return self.rate.size


@dataclass(frozen=True)
class GammaHyper:
    """Shape alpha and rate beta for the common precision (structure C).

    Carries its dimension explicitly: the gamma prior itself is
    one-dimensional but the Gaussian model it regularizes is not.
    """

    alpha: float
    rate: float
    dim: int = 1

    structure = "C"

    def __post_init__(self):
        if self.alpha <= 0 or self.rate <= 0 or not np.isfinite(self.rate):
            raise SupportError("gamma shape and rate must be positive and finite")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "rate", float(self.rate))


Hyper = Union[WishartHyper, GammaVecHyper, GammaHyper]


class HyperTriple(NamedTuple):
    """One hyperparameterization per structure, in the order (A, D, C)."""

    a: WishartHyper
    d: GammaVecHyper
    c: GammaHyper

    def for_structure(self, structure: str) -> Hyper:
        return {"A": self.a, "D": self.d, "C": self.c}[structure]


class PriorSampleSize(NamedTuple):
    m: float
    non_regular: bool


def prior_sample_size(h: Hyper, d: Optional[int] = None) -> PriorSampleSize:
    """Prior sample size m of a hyperparameterization.

    A: m = 2*alpha - (d+1);  D: m = 2*alpha - 2;  C: m = (2*alpha - 2)/d.
    Flagged non-regular when m <= 0 (posterior mode may not exist for
    small n).
    """
    _check_hyper_dim(h, d)
    if isinstance(h, WishartHyper):
        m = 2 * h.alpha - (h.dim + 1)
    elif isinstance(h, GammaVecHyper):
        m = 2 * h.alpha - 2
    else:
        m = (2 * h.alpha - 2) / h.dim
    return PriorSampleSize(m=float(m), non_regular=m <= 0)


def shape_for_sample_size(structure: str, m: float, d: int) -> float:
    """Inverse of prior_sample_size: the shape alpha giving sample size m."""
    if structure == "A":
        return (m + d + 1) / 2
    if structure == "D":
        return (m + 2) / 2
    if structure == "C":
        return (m * d + 2) / 2
    raise ValueError(f"unknown structure {structure!r}")


def log_normalizer(h: Hyper) -> float:
    """log of the prior's normalizing constant H(tau, m).

    A: alpha*log|B| - log Gamma_d(alpha)
    D: alpha*sum_j log beta_j - d*log Gamma(alpha)
    C: alpha*log beta - log Gamma(alpha)

    Evidences are ratios of these constants, so everything downstream
    works purely off this function and the conjugate update.
    """
    if isinstance(h, WishartHyper):
        return h.alpha * chol_log_det(h.rate) - log_mv_gamma(h.dim, h.alpha)
    if isinstance(h, GammaVecHyper):
        return float(h.alpha * np.log(h.rate).sum() - h.dim * gammaln(h.alpha))
    return float(h.alpha * np.log(h.rate) - gammaln(h.alpha))


def conjugate_update(h: Hyper, stats: SuffStats) -> Hyper:
    """Posterior hyperparameters after observing `stats`.

    A: (alpha + n/2, B + s);  D: (alpha + n/2, beta_j + s_jj);
    C: (alpha + n*d/2, beta + tr s).
    """
    if _hyper_dim(h) != stats.d:
        raise DimensionMismatchError(
            f"hyper dimension {_hyper_dim(h)} != data dimension {stats.d}"
        )
    if isinstance(h, WishartHyper):
        return WishartHyper(h.alpha + stats.n / 2, h.rate + stats.s)
    if isinstance(h, GammaVecHyper):
        return GammaVecHyper(h.alpha + stats.n / 2, h.rate + stats.s_diag)
    return GammaHyper(h.alpha + stats.n * stats.d / 2, h.rate + stats.s_total, h.dim)


# ---------------------------------------------------------------------------
# Hyperparameter matching between nested structures.
#
# Nesting order is C < D < A. Projecting down applies the nesting map to the
# prior's sufficient-statistic estimate (diag / trace aggregation); embedding
# up applies its pseudo-inverse. Both directions preserve the prior sample
# size m, which pins the target shape via shape_for_sample_size.
# ---------------------------------------------------------------------------

_ORDER = {"C": 0, "D": 1, "A": 2}


def match_down(h: Hyper, target: str) -> Hyper:
    """Project a hyperparameterization onto a strictly simpler structure."""
    if target not in _ORDER:
        raise ValueError(f"unknown structure {target!r}")
    if _ORDER[target] >= _ORDER[h.structure]:
        raise ConfigError(f"{target} is not strictly simpler than {h.structure}")
    d = _hyper_dim(h)
    m = prior_sample_size(h).m
    alpha = shape_for_sample_size(target, m, d)
    if isinstance(h, WishartHyper):
        if target == "D":
            return GammaVecHyper(alpha, np.diag(h.rate).copy())
        return GammaHyper(alpha, float(np.trace(h.rate)), d)
    # D -> C
    return GammaHyper(alpha, float(h.rate.sum()), d)


def match_up(h: Hyper, target: str = "A") -> Hyper:
    """Embed a hyperparameterization into a strictly richer structure."""
    if target not in _ORDER:
        raise ValueError(f"unknown structure {target!r}")
    if _ORDER[target] <= _ORDER[h.structure]:
        raise ConfigError(f"{target} is not strictly richer than {h.structure}")
    d = _hyper_dim(h)
    m = prior_sample_size(h).m
    alpha = shape_for_sample_size(target, m, d)
    if isinstance(h, GammaVecHyper):
        return WishartHyper(alpha, np.diag(h.rate))
    if target == "A":
        return WishartHyper(alpha, (h.rate / d) * np.eye(d))
    # C -> D
    return GammaVecHyper(alpha, np.full(d, h.rate / d))


def matched_family(h: Hyper) -> HyperTriple:
    """The full (A, D, C) family matched to h, h included."""
    if isinstance(h, WishartHyper):
        return HyperTriple(h, match_down(h, "D"), match_down(h, "C"))
    if isinstance(h, GammaVecHyper):
        return HyperTriple(match_up(h, "A"), h, match_down(h, "C"))
    return HyperTriple(match_up(h, "A"), match_up(h, "D"), h)


def kl_objective(
    full: Hyper,
    nested: Hyper,
    n_samples: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """Monte Carlo estimate of -E_nested[log rho_full(embed(eta)) / rho_nested(eta)].

    Samples eta from the *nested* prior and averages
    log rho_nested(eta) - log rho_full(embed(eta)). Returns (estimate,
    standard error). Minimized over the nested hyperparameters exactly at
    the matched ones, where the value is
    log_normalizer(match_down(full, nested.structure)) - log_normalizer(full).
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    if _ORDER[nested.structure] >= _ORDER[full.structure]:
        raise ConfigError(
            f"nested structure {nested.structure} must be strictly below {full.structure}"
        )
    d = _hyper_dim(full)
    if _hyper_dim(nested) != d:
        raise DimensionMismatchError("full and nested hypers have different dimensions")

    if isinstance(nested, GammaHyper):
        eta = rng.gamma(nested.alpha, 1.0 / nested.rate, size=n_samples)
        log_n = (
            log_normalizer(nested)
            + (nested.alpha - 1) * np.log(eta)
            - nested.rate * eta
        )
        if isinstance(full, GammaVecHyper):
            log_f = (
                log_normalizer(full)
                + d * (full.alpha - 1) * np.log(eta)
                - full.rate.sum() * eta
            )
        else:
            log_f = (
                log_normalizer(full)
                + (full.alpha - (d + 1) / 2) * d * np.log(eta)
                - np.trace(full.rate) * eta
            )
    else:  # nested D inside full A
        eta = rng.gamma(nested.alpha, 1.0, size=(n_samples, d)) / nested.rate
        log_eta = np.log(eta)
        log_n = (
            log_normalizer(nested)
            + (nested.alpha - 1) * log_eta.sum(axis=1)
            - eta @ nested.rate
        )
        log_f = (
            log_normalizer(full)
            + (full.alpha - (d + 1) / 2) * log_eta.sum(axis=1)
            - eta @ np.diag(full.rate)
        )
    diffs = log_n - log_f
    est = float(diffs.mean())
    se = float(diffs.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("inf")
    return est, se


def empirical_bayes(stats: SuffStats, m: float = 2.0) -> HyperTriple:
    """Method-of-moments rates with the prior sample size m treated as known.

    Shapes are fixed by m per structure; rates solve the marginal
    second-moment equations:

        B_hat   = (2*alpha_A - d - 1) * s / n      (= m * s / n)
        beta_j  = (2*alpha_D - 2) * s_jj / n
        beta_C  = (2*alpha_C - 2) * tr(s) / (n d)

    Requires n >= 1 and a positive definite scatter for the Wishart rate.
    """
    if stats.n < 1:
        raise EmptyDatasetError("empirical Bayes requires at least one observation")
    d = stats.d
    alpha_a = shape_for_sample_size("A", m, d)
    alpha_d = shape_for_sample_size("D", m, d)
    alpha_c = shape_for_sample_size("C", m, d)
    b = (2 * alpha_a - d - 1) * stats.s / stats.n
    try:
        wish = WishartHyper(alpha_a, b)
    except Exception as exc:
        raise DegenerateScatterError(
            f"scatter matrix is singular at n={stats.n}, d={d}: {exc}"
        ) from exc
    if np.any(stats.s_diag <= 0) or stats.s_total <= 0:
        raise DegenerateScatterError("scatter diagonal must be strictly positive")
    gvec = GammaVecHyper(alpha_d, (2 * alpha_d - 2) * stats.s_diag / stats.n)
    gam = GammaHyper(alpha_c, (2 * alpha_c - 2) * stats.s_total / (stats.n * d), d)
    return HyperTriple(wish, gvec, gam)


def mclust_default(stats: SuffStats) -> HyperTriple:
    """The default regularization of the mclust R package, translated.

    All shapes are (d+2)/2; the Wishart rate is 2s/n and the gamma rates
    are the common 2*tr(s)/(n*d) for every axis. Note the structure-D
    shape corresponds to prior sample size m = d here, not m = 1.
    """
    if stats.n < 1:
        raise EmptyDatasetError("mclust default requires at least one observation")
    d = stats.d
    alpha = (d + 2) / 2
    try:
        wish = WishartHyper(alpha, 2 * stats.s / stats.n)
    except Exception as exc:
        raise DegenerateScatterError(
            f"scatter matrix is singular at n={stats.n}, d={d}: {exc}"
        ) from exc
    if stats.s_total <= 0:
        raise DegenerateScatterError("scatter trace must be strictly positive")
    rate = 2 * stats.s_total / (stats.n * d)
    return HyperTriple(wish, GammaVecHyper(alpha, np.full(d, rate)), GammaHyper(alpha, rate, d))


def sample_half_precision(h: Hyper, rng: np.random.Generator) -> HalfPrecision:
    """Draw one half-precision from the prior.

    Structure A uses the Bartlett decomposition of the equivalent standard
    Wishart (df = 2*alpha, scale (2B)^{-1}); D and C are plain gamma draws.
    """
    if isinstance(h, WishartHyper):
        return FullPrecision(_sample_wishart(h, rng))
    if isinstance(h, GammaVecHyper):
        return DiagPrecision(rng.gamma(h.alpha, 1.0, size=h.dim) / h.rate)
    return IsoPrecision(float(rng.gamma(h.alpha, 1.0 / h.rate)), h.dim)


def wishart_factor(h: WishartHyper) -> np.ndarray:
    """F with F F^T = (2B)^{-1}, the scale of the equivalent standard Wishart."""
    c = cholesky_pd(2 * h.rate)
    return np.linalg.inv(c).T


def _sample_wishart(h: WishartHyper, rng: np.random.Generator) -> np.ndarray:
    d, nu = h.dim, 2 * h.alpha
    if nu <= d - 1:
        raise SupportError(f"Wishart sampling needs 2*alpha > d-1, got 2*alpha = {nu}")
    f = wishart_factor(h)
    a = np.zeros((d, d))
    for j in range(d):
        a[j, j] = np.sqrt(rng.chisquare(nu - j))
        for i in range(j + 1, d):
            a[i, j] = rng.standard_normal()
    fa = f @ a
    return fa @ fa.T


def sample_wishart_batch(h: WishartHyper, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Bartlett sampler; returns (size, d, d)."""
    d, nu = h.dim, 2 * h.alpha
    if nu <= d - 1:
        raise SupportError(f"Wishart sampling needs 2*alpha > d-1, got 2*alpha = {nu}")
    f = wishart_factor(h)
    a = np.zeros((size, d, d))
    for j in range(d):
        a[:, j, j] = np.sqrt(rng.chisquare(nu - j, size=size))
    ii, jj = np.tril_indices(d, k=-1)
    if ii.size:
        a[:, ii, jj] = rng.standard_normal(size=(size, ii.size))
    fa = np.einsum("ij,njk->nik", f, a)
    return np.einsum("nik,njk->nij", fa, fa)


def log_prior_density(h: Hyper, theta: HalfPrecision) -> float:
    """Exact log-density of the prior at theta.

    The Wishart prior accepts any half-precision shape (Diag and Iso embed
    into its support); the D and C priors require theta to actually lie in
    their support.
    """
    if _hyper_dim(h) != theta.dim:
        raise DimensionMismatchError(
            f"hyper dimension {_hyper_dim(h)} != parameter dimension {theta.dim}"
        )
    if isinstance(h, WishartHyper):
        d = h.dim
        return float(
            log_normalizer(h)
            + (h.alpha - (d + 1) / 2) * theta.log_det()
            - theta.scatter_product(h.rate)
        )
    if isinstance(h, GammaVecHyper):
        eta = as_diag_vector(theta)
        return float(
            log_normalizer(h) + (h.alpha - 1) * np.log(eta).sum() - h.rate @ eta
        )
    eta = as_iso_scalar(theta)
    return float(log_normalizer(h) + (h.alpha - 1) * np.log(eta) - h.rate * eta)


def hyper_to_jsonable(h: Hyper) -> dict:
    """JSON-ready dict: structure tag, shape, rate (matrix rows / vector / scalar)."""
    if isinstance(h, WishartHyper):
        return {"structure": "A", "alpha": h.alpha, "rate": h.rate.tolist()}
    if isinstance(h, GammaVecHyper):
        return {"structure": "D", "alpha": h.alpha, "rate": h.rate.tolist()}
    return {"structure": "C", "alpha": h.alpha, "rate": h.rate, "dim": h.dim}


def hyper_from_jsonable(doc: dict) -> Hyper:
    try:
        structure = doc["structure"]
        alpha = float(doc["alpha"])
        rate = doc["rate"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed hyperparameter document: {exc}") from exc
    if structure == "A":
        return WishartHyper(alpha, np.asarray(rate, dtype=float))
    if structure == "D":
        return GammaVecHyper(alpha, np.asarray(rate, dtype=float))
    if structure == "C":
        return GammaHyper(alpha, float(rate), int(doc.get("dim", 1)))
    raise ConfigError(f"unknown structure {structure!r}")


def _hyper_dim(h: Hyper) -> int:
    return h.dim


def _check_hyper_dim(h: Hyper, d: Optional[int]) -> None:
    if d is not None and d != h.dim:
        raise DimensionMismatchError(f"hyper dimension {h.dim} != requested d={d}")
