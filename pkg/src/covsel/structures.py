"""Closed-form inference per covariance structure.

For each structure the log-likelihood, posterior mode, log-evidence,
flexibility and the BIC-family criteria are available in closed form.
The central identity, which holds at *every* parameter value theta and
anchors the whole test suite, is

    log_evidence == log_likelihood(theta) - flexibility(theta),

with flexibility defined as the log posterior-to-prior density ratio.
Evidence is computed from prior/posterior normalizing constants, never
from the expanded per-structure formulas, so the identity holds to
floating-point accuracy by construction.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate

from .data import SuffStats
from .errors import (
    ConfigError,
    DimensionMismatchError,
    NonRegularPriorError,
    NotPositiveDefiniteError,
)
from .precision import DiagPrecision, FullPrecision, HalfPrecision, IsoPrecision
from .priors import (
    GammaHyper,
    GammaVecHyper,
    Hyper,
    HyperTriple,
    WishartHyper,
    conjugate_update,
    log_normalizer,
    log_prior_density,
    sample_wishart_batch,
)
from .specialfn import LOG_PI, chol_log_det, cholesky_pd, log_mv_gamma

__all__ = [
    "FitReport",
    "SelectionResult",
    "param_count",
    "log_likelihood",
    "map_estimate",
    "log_evidence",
    "log_evidence_flat",
    "flexibility",
    "log_partition_hessian_logdet",
    "criteria",
    "evidence_oracle",
    "select_structure",
    "CRITERIA",
]

CRITERIA = ("evidence", "bic", "pcbic", "kic")

# relative tolerance under which two criterion values count as tied;
# ties go to the simpler structure (C before D before A)
_TIE_RTOL = 1e-9


def param_count(structure: str, d: int) -> int:
    """Free parameters: A has d(d+1)/2, D has d, C has 1."""
    if structure == "A":
        return d * (d + 1) // 2
    if structure == "D":
        return d
    if structure == "C":
        return 1
    raise ValueError(f"unknown structure {structure!r}")


def log_likelihood(theta: HalfPrecision, stats: SuffStats) -> float:
    """(n/2) log|H| - (nd/2) log(pi) - tr(H s), specialized per structure."""
    if theta.dim != stats.d:
        raise DimensionMismatchError(
            f"parameter dimension {theta.dim} != data dimension {stats.d}"
        )
    n, d = stats.n, stats.d
    if n == 0:
        return 0.0
    return float(
        n / 2 * theta.log_det() - n * d / 2 * LOG_PI - theta.scatter_product(stats.s)
    )


def map_estimate(h: Hyper, stats: SuffStats) -> HalfPrecision:
    """Posterior mode of the half-precision.

    A: (n/2 + alpha - (d+1)/2) (s + B)^{-1}
    D: eta_j = (n + 2 alpha - 2) / (2 (s_jj + beta_j))
    C: eta   = (n d + 2 alpha - 2) / (2 (tr s + beta))

    Raises NonRegularPriorError when the mode multiplier is non-positive
    (non-regular prior and too little data).
    """
    post = conjugate_update(h, stats)
    d = stats.d
    if isinstance(post, WishartHyper):
        mult = post.alpha - (d + 1) / 2
        if mult <= 0:
            raise NonRegularPriorError(
                f"posterior mode undefined: shape {post.alpha} <= (d+1)/2"
            )
        try:
            c = cholesky_pd(post.rate)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(f"s + B is singular: {exc}") from exc
        inv = np.linalg.inv(c)
        return FullPrecision(mult * (inv.T @ inv))
    if isinstance(post, GammaVecHyper):
        if post.alpha <= 1:
            raise NonRegularPriorError(
                f"posterior mode undefined: gamma shape {post.alpha} <= 1"
            )
        return DiagPrecision((post.alpha - 1) / post.rate)
    if post.alpha <= 1:
        raise NonRegularPriorError(f"posterior mode undefined: gamma shape {post.alpha} <= 1")
    return IsoPrecision((post.alpha - 1) / post.rate, d)


def log_evidence(h: Hyper, stats: SuffStats) -> float:
    """Exact log marginal likelihood.

    Computed as base measure plus the log-ratio of prior to posterior
    normalizing constants; identical to the per-structure closed forms.
    """
    post = conjugate_update(h, stats)
    return float(
        -stats.n * stats.d / 2 * LOG_PI + log_normalizer(h) - log_normalizer(post)
    )


def log_evidence_flat(structure: str, stats: SuffStats) -> float:
    """Log evidence under the improper flat prior on the half-precision.

    Scale-arbitrary (the flat prior has no normalization), so this is
    excluded from structure selection and exposed separately. Structures
    C and D need n >= 1; structure A additionally needs n > d so that the
    normalizing constant of the would-be posterior is finite.
    """
    n, d = stats.n, stats.d
    if n < 1:
        raise ConfigError("flat-prior evidence requires n >= 1")
    base = -n * d / 2 * LOG_PI
    if structure == "C":
        alpha = (n * d + 2) / 2
        return float(base + math.lgamma(alpha) - alpha * np.log(stats.s_total))
    if structure == "D":
        alpha = (n + 2) / 2
        if np.any(stats.s_diag <= 0):
            raise NotPositiveDefiniteError("flat-prior evidence needs positive s_jj")
        return float(base + d * math.lgamma(alpha) - alpha * np.log(stats.s_diag).sum())
    if structure == "A":
        if n <= d:
            raise ConfigError(f"flat-prior evidence for structure A requires n > d = {d}")
        alpha = (n + d + 1) / 2
        return float(base + log_mv_gamma(d, alpha) - alpha * chol_log_det(stats.s))
    raise ValueError(f"unknown structure {structure!r}")


def flexibility(h: Hyper, stats: SuffStats, theta: HalfPrecision) -> float:
    """log posterior density minus log prior density at theta.

    This is the exact penalty for which
    log_evidence == log_likelihood(theta) - flexibility(theta) holds for
    every theta in the support, not only at the posterior mode.
    """
    post = conjugate_update(h, stats)
    return log_prior_density(post, theta) - log_prior_density(h, theta)


def log_partition_hessian_logdet(theta: HalfPrecision) -> float:
    """log |d^2 A / d theta^2| of the per-observation log-partition at theta.

    A(H) = -(1/2) log|H| in each structure's own coordinates. Diagonal and
    isotropic cases are closed-form; the full case uses central finite
    differences of the analytic gradient over the (diagonal,
    upper-triangle) coordinates.
    """
    if isinstance(theta, IsoPrecision):
        return float(np.log(theta.dim / (2 * theta.value**2)))
    if isinstance(theta, DiagPrecision):
        return float(-np.log(2 * theta.diag**2).sum())
    return _full_hessian_logdet(theta.matrix)


def _pack_full(hm: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = hm.shape[0]
    iu, ju = np.triu_indices(d, k=1)
    coords = np.concatenate([np.diag(hm), hm[iu, ju]])
    return coords, iu, ju


def _unpack_full(coords: np.ndarray, d: int, iu, ju) -> np.ndarray:
    hm = np.zeros((d, d))
    hm[np.arange(d), np.arange(d)] = coords[:d]
    hm[iu, ju] = coords[d:]
    hm[ju, iu] = coords[d:]
    return hm


def _grad_full(hm: np.ndarray, iu, ju) -> np.ndarray:
    # gradient of -(1/2) log|H|: -(1/2) (H^-1)_jj on diagonal coordinates,
    # -(H^-1)_ij on off-diagonal ones (both symmetric entries move together)
    hinv = np.linalg.inv(hm)
    d = hm.shape[0]
    return np.concatenate([-0.5 * np.diag(hinv), -hinv[iu, ju]])


def _full_hessian_logdet(hm: np.ndarray) -> float:
    d = hm.shape[0]
    coords, iu, ju = _pack_full(hm)
    k = coords.size
    scale = max(float(np.abs(coords).max()), 1e-8)
    hess = np.empty((k, k))
    for idx in range(k):
        step = 1e-5 * max(abs(coords[idx]), scale)
        up = coords.copy()
        up[idx] += step
        dn = coords.copy()
        dn[idx] -= step
        gu = _grad_full(_unpack_full(up, d, iu, ju), iu, ju)
        gd = _grad_full(_unpack_full(dn, d, iu, ju), iu, ju)
        hess[idx] = (gu - gd) / (2 * step)
    hess = (hess + hess.T) / 2
    sign, logdet = np.linalg.slogdet(hess)
    if sign <= 0:
        raise NotPositiveDefiniteError("log-partition Hessian is not positive definite")
    return float(logdet)


@dataclass(frozen=True)
class FitReport:
    """Everything a single structure's fit produces."""

    structure: str
    map: HalfPrecision
    log_lik_at_map: float
    log_evidence: float
    flexibility_at_map: float
    bic: Optional[float]
    pc_bic: Optional[float]
    kic: Optional[float]
    k: int

    def criterion_value(self, criterion: str) -> Optional[float]:
        return {
            "evidence": self.log_evidence,
            "bic": self.bic,
            "pcbic": self.pc_bic,
            "kic": self.kic,
        }[criterion]

    def to_jsonable(self) -> dict:
        if isinstance(self.map, FullPrecision):
            map_doc = self.map.matrix.tolist()
        elif isinstance(self.map, DiagPrecision):
            map_doc = self.map.diag.tolist()
        else:
            map_doc = self.map.value
        return {
            "structure": self.structure,
            "map": map_doc,
            "log_lik_at_map": self.log_lik_at_map,
            "log_evidence": self.log_evidence,
            "flexibility_at_map": self.flexibility_at_map,
            "bic": self.bic,
            "pc_bic": self.pc_bic,
            "kic": self.kic,
            "k": self.k,
        }


def criteria(h: Hyper, stats: SuffStats) -> FitReport:
    """Fit one structure: MAP, evidence, flexibility and all criteria.

    BIC, prior-corrected BIC and the Kashyap criterion are undefined at
    n = 0 (log 0) and reported as missing; at n = 1 the log n term is 0.
    """
    theta = map_estimate(h, stats)
    structure = h.structure
    k = param_count(structure, stats.d)
    ll = log_likelihood(theta, stats)
    log_evi = log_evidence(h, stats)
    flex = flexibility(h, stats, theta)
    if stats.n >= 1:
        log_n = math.log(stats.n)
        lp = log_prior_density(h, theta)
        bic = ll - k / 2 * log_n
        pc_bic = ll + lp - k / 2 * log_n
        # Kashyap criterion: the Laplace approximation to the log evidence,
        # log L + log prior - (1/2) log |n * Hess A / (2 pi)| at the MAP.
        # Its penalty equals the flexibility in the large-n limit.
        kic = pc_bic - 0.5 * log_partition_hessian_logdet(theta) + k / 2 * math.log(2 * math.pi)
    else:
        bic = pc_bic = kic = None
    return FitReport(
        structure=structure,
        map=theta,
        log_lik_at_map=ll,
        log_evidence=log_evi,
        flexibility_at_map=flex,
        bic=bic,
        pc_bic=pc_bic,
        kic=kic,
        k=k,
    )


# ---------------------------------------------------------------------------
# Independent evidence oracles: adaptive quadrature of the likelihood times
# the prior for parameter dimension <= 2, and plain prior Monte Carlo for
# d <= 4. Used by the test suite to validate the closed forms; they share no
# code path with log_evidence.
# ---------------------------------------------------------------------------


def evidence_oracle(
    h: Hyper,
    stats: SuffStats,
    method: str = "quadrature",
    budget: int = 100_000,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float]:
    """Numerically estimate log evidence; returns (estimate, error_bound).

    `quadrature` integrates exp(log L + log prior) on a log-transformed
    grid (error bound from the integrator); `prior-mc` averages the
    likelihood over `budget` prior draws (error bound is one standard
    error of the log estimate).
    """
    if stats.n == 0:
        return 0.0, 0.0
    if method == "quadrature":
        return _evidence_quadrature(h, stats)
    if method == "prior-mc":
        if rng is None:
            raise ConfigError("prior-mc oracle needs an rng")
        if stats.d > 4:
            raise ConfigError("prior-mc oracle supports d <= 4")
        return _evidence_prior_mc(h, stats, budget, rng)
    raise ConfigError(f"unknown oracle method {method!r}")


def _param_dim(h: Hyper) -> int:
    if isinstance(h, WishartHyper):
        return h.dim * (h.dim + 1) // 2
    if isinstance(h, GammaVecHyper):
        return h.dim
    return 1


def _evidence_quadrature(h: Hyper, stats: SuffStats) -> Tuple[float, float]:
    p = _param_dim(h)
    if p > 2:
        raise ConfigError(f"quadrature oracle supports parameter dimension <= 2, got {p}")
    n, d = stats.n, stats.d
    post = conjugate_update(h, stats)

    if p == 1:
        # structures A and D at d = 1 are gamma priors in disguise, with the
        # same (shape, rate, likelihood-exponent) ingredients as structure C
        a = h.alpha
        b = float(h.rate) if isinstance(h, GammaHyper) else float(np.ravel(h.rate)[0])
        b_post = (
            float(post.rate) if isinstance(post, GammaHyper) else float(np.ravel(post.rate)[0])
        )
        center = post.alpha / b_post
        lik = lambda eta: n * d / 2 * np.log(eta) - eta * stats.s_total

        def log_g(t):
            eta = np.exp(t)
            # + t from the Jacobian of eta = exp(t)
            return (
                lik(eta)
                + a * np.log(b)
                - math.lgamma(a)
                + (a - 1) * np.log(eta)
                - b * eta
                - n * d / 2 * LOG_PI
                + t
            )

        shift = log_g(np.log(center))
        val, err = integrate.quad(
            lambda t: np.exp(log_g(t) - shift), -60, 60, epsabs=1e-13, epsrel=1e-12, limit=400
        )
        return float(shift + np.log(val)), float(err / max(val, 1e-300))

    # p == 2: diagonal structure at d = 2
    assert isinstance(h, GammaVecHyper) and h.dim == 2
    a = h.alpha
    b1, b2 = map(float, h.rate)
    s1, s2 = map(float, stats.s_diag)
    c1 = float(post.alpha / post.rate[0])
    c2 = float(post.alpha / post.rate[1])

    def log_g(t1, t2):
        e1, e2 = np.exp(t1), np.exp(t2)
        return (
            n / 2 * (np.log(e1) + np.log(e2))
            - e1 * s1
            - e2 * s2
            - n * d / 2 * LOG_PI
            + a * (np.log(b1) + np.log(b2))
            - 2 * math.lgamma(a)
            + (a - 1) * (np.log(e1) + np.log(e2))
            - b1 * e1
            - b2 * e2
            + t1
            + t2
        )

    shift = log_g(np.log(c1), np.log(c2))
    val, err = integrate.dblquad(
        lambda t2, t1: np.exp(log_g(t1, t2) - shift),
        -40,
        40,
        -40,
        40,
        epsabs=1e-12,
        epsrel=1e-10,
    )
    return float(shift + np.log(val)), float(err / max(val, 1e-300))


def _evidence_prior_mc(
    h: Hyper, stats: SuffStats, budget: int, rng: np.random.Generator
) -> Tuple[float, float]:
    n, d = stats.n, stats.d
    base = -n * d / 2 * LOG_PI
    lls = np.empty(budget)
    chunk = 200_000
    done = 0
    while done < budget:
        m = min(chunk, budget - done)
        if isinstance(h, WishartHyper):
            w = sample_wishart_batch(h, m, rng)
            sign, logdet = np.linalg.slogdet(w)
            lls[done : done + m] = (
                n / 2 * logdet + base - np.einsum("nij,ij->n", w, stats.s)
            )
        elif isinstance(h, GammaVecHyper):
            eta = rng.gamma(h.alpha, 1.0, size=(m, d)) / h.rate
            lls[done : done + m] = (
                n / 2 * np.log(eta).sum(axis=1) + base - eta @ stats.s_diag
            )
        else:
            eta = rng.gamma(h.alpha, 1.0 / h.rate, size=m)
            lls[done : done + m] = n * d / 2 * np.log(eta) + base - eta * stats.s_total
        done += m
    top = lls.max()
    w = np.exp(lls - top)
    mean = w.mean()
    se = w.std(ddof=1) / np.sqrt(budget)
    return float(top + np.log(mean)), float(se / mean)


@dataclass(frozen=True)
class SelectionResult:
    criterion: str
    ranked: List[FitReport]
    skipped: Dict[str, str]

    @property
    def best(self) -> FitReport:
        return self.ranked[0]


def select_structure(
    stats: SuffStats, hypers: HyperTriple, criterion: str = "evidence"
) -> SelectionResult:
    """Fit all three structures and rank them by the chosen criterion.

    Ties (within relative 1e-9) go to the simpler structure, C before D
    before A. Structures whose fit raises are excluded and reported in
    `skipped` with the error message.
    """
    if criterion not in CRITERIA:
        raise ConfigError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    reports = []
    skipped: Dict[str, str] = {}
    for structure in ("C", "D", "A"):  # simplest first: stable tie order
        try:
            rep = criteria(hypers.for_structure(structure), stats)
        except Exception as exc:  # noqa: BLE001 - diagnostic, not control flow
            skipped[structure] = f"{type(exc).__name__}: {exc}"
            continue
        if rep.criterion_value(criterion) is None:
            skipped[structure] = f"criterion {criterion} undefined at n={stats.n}"
            continue
        reports.append(rep)
    if not reports:
        raise ConfigError(f"no structure could be fit: {skipped}")
    vals = [rep.criterion_value(criterion) for rep in reports]
    vmax = max(vals)
    tol = _TIE_RTOL * max(1.0, abs(vmax))

    def sort_key(item):
        idx, rep = item
        # quantize to the tie tolerance so near-equal values compare equal,
        # then fall back to simplicity order (C, D, A = insertion order)
        return (-round(rep.criterion_value(criterion) / tol), idx)

    ranked = [rep for _, rep in sorted(enumerate(reports), key=sort_key)]
    return SelectionResult(criterion=criterion, ranked=ranked, skipped=skipped)
