"""Empirical-measure statistics under cost-based exponential reweighting.

Given an ensemble of J particles and a cost f, the weight of particle j is
w_j = exp(-beta f(theta_j)), normalized to sum to one.  Exponentials are
evaluated after subtracting min_k f(theta_k), so weights never overflow;
underflow to exactly 0.0 is possible and harmless (mathematical range (0, 1]).

The module also evaluates the a-priori bounds that control the weighted mean
and covariance in terms of the raw second moment,

    rhs = b1 + b2 * (1/J) sum_j |theta_j|^2,
    b2  = 2 (c_u / c_l) (1 + 1 / (beta c_l big_m^2)),   b1 = big_m^2 + b2,

whose constants come from a verified growth certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteCostError, UnverifiedCertificateError
from .linalg import matrix_norms, psd_project, spd_sqrt
from .objectives import GrowthCertificate, Objective, eval_batch

__all__ = [
    "BoundCheckReport",
    "BoundConstants",
    "Ensemble",
    "WeightedMoments",
    "bound_constants",
    "check_moment_bounds",
    "ess",
    "gibbs_weights",
    "reweighted_second_moment",
    "weighted_covariance",
    "weighted_mean",
    "weighted_moments",
]

_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class Ensemble:
    """An immutable snapshot of J >= 2 particle positions, shape (J, d)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2:
            raise ValueError(f"positions must be 2-d (J, d), got shape {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError(f"need at least 2 particles, got {pos.shape[0]}")
        if pos.shape[1] < 1:
            raise ValueError("need at least 1 coordinate")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        pos = pos.copy()
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def j(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class WeightedMoments:
    """Weighted mean/covariance plus bookkeeping of one reweighting.

    log_z is log((1/J) sum_j exp(-beta (f_j - shift))) with shift = min_j f_j;
    the unshifted log normalizer is log_z - beta * shift.  ess is the inverse
    sum of squared normalized weights, in [1, J].
    """

    mean: np.ndarray
    cov: np.ndarray
    log_z: float
    shift: float
    ess: float
    beta: float


@dataclass(frozen=True)
class BoundConstants:
    b1: float
    b2: float


@dataclass(frozen=True)
class BoundCheckReport:
    """The four weighted-moment quantities against their common upper bound."""

    mean_sq: float
    second_moment: float
    cov_frobenius: float
    sqrt_cov_frobenius_sq: float
    rhs: float
    constants: BoundConstants
    passed: tuple[bool, bool, bool, bool]

    @property
    def all_passed(self) -> bool:
        return all(self.passed)

    @property
    def worst_margin(self) -> float:
        lhs = (self.mean_sq, self.second_moment, self.cov_frobenius,
               self.sqrt_cov_frobenius_sq)
        return min(self.rhs - v for v in lhs)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not np.isfinite(beta) or beta <= 0.0:
        raise ValueError(f"beta must be finite and > 0 (got {beta!r}); "
                         "for uniform weights pass the sentinel beta=1e-12")
    return beta


def _cost_values(ens: Ensemble, obj: Objective) -> np.ndarray:
    values = eval_batch(obj, ens.positions)
    finite = np.isfinite(values)
    if not finite.all():
        first_bad = int(np.argmin(finite))
        raise NonFiniteCostError(
            f"objective {obj.name!r} returned a non-finite value at particle {first_bad}",
            particle=first_bad,
        )
    return values


def gibbs_weights(ens: Ensemble, obj: Objective, beta: float) -> np.ndarray:
    """Normalized weights exp(-beta f(theta_j)) / sum, log-sum-exp shifted."""
    beta = _check_beta(beta)
    values = _cost_values(ens, obj)
    shifted = values - values.min()
    with np.errstate(under="ignore"):
        w = np.exp(-beta * shifted)
    return w / w.sum()


def _anchored_mean(weights: np.ndarray, positions: np.ndarray) -> np.ndarray:
    # Anchoring at the first particle makes the all-equal ensemble map to
    # itself exactly, for any J, which keeps consensus states exact fixed
    # points of the dynamics.
    anchor = positions[0]
    return anchor + weights @ (positions - anchor)


def weighted_mean(ens: Ensemble, obj: Objective, beta: float) -> np.ndarray:
    """Weighted mean sum_j w_j theta_j (a point in the convex hull)."""
    return _anchored_mean(gibbs_weights(ens, obj, beta), ens.positions)


def weighted_covariance(ens: Ensemble, obj: Objective, beta: float) -> np.ndarray:
    """Weighted covariance sum_j w_j (theta_j - M)(theta_j - M)^T, PSD-projected.

    Two-pass form: the mean is computed first, deviations are taken against it.
    """
    w = gibbs_weights(ens, obj, beta)
    return _covariance_from(w, ens.positions)


def _covariance_from(weights: np.ndarray, positions: np.ndarray) -> np.ndarray:
    mean = _anchored_mean(weights, positions)
    dev = positions - mean
    cov = (weights[:, None] * dev).T @ dev
    return psd_project(cov)


def reweighted_second_moment(ens: Ensemble, obj: Objective, beta: float) -> float:
    """sum_j w_j |theta_j|^2 under the normalized weights."""
    w = gibbs_weights(ens, obj, beta)
    return float(w @ np.einsum("jd,jd->j", ens.positions, ens.positions))


def ess(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum_j w_j^2 of normalized weights."""
    weights = np.asarray(weights, dtype=np.float64)
    return float(1.0 / np.sum(weights * weights))


def weighted_moments(ens: Ensemble, obj: Objective, beta: float) -> WeightedMoments:
    """One-pass bundle: mean, covariance, shifted log normalizer and ESS."""
    beta = _check_beta(beta)
    values = _cost_values(ens, obj)
    shift = float(values.min())
    with np.errstate(under="ignore"):
        w = np.exp(-beta * (values - shift))
    log_z = float(np.log(w.mean()))
    w = w / w.sum()
    mean = _anchored_mean(w, ens.positions)
    cov = _covariance_from(w, ens.positions)
    return WeightedMoments(mean=mean, cov=cov, log_z=log_z, shift=shift,
                           ess=ess(w), beta=beta)


def bound_constants(cert: GrowthCertificate, beta: float) -> BoundConstants:
    """Constants (b1, b2) of the weighted-moment bound for a verified certificate."""
    beta = _check_beta(beta)
    if not cert.verified:
        raise UnverifiedCertificateError(
            "moment bounds require a verified growth certificate")
    if cert.c_l <= 0.0 or cert.big_m <= 0.0 or cert.c_u <= 0.0:
        raise ValueError("bound constants need c_u, c_l, big_m all > 0")
    b2 = 2.0 * (cert.c_u / cert.c_l) * (1.0 + 1.0 / (beta * cert.c_l * cert.big_m ** 2))
    b1 = cert.big_m ** 2 + b2
    return BoundConstants(b1=b1, b2=b2)


def check_moment_bounds(ens: Ensemble, obj: Objective, beta: float) -> BoundCheckReport:
    """Evaluate the four bounded quantities against b1 + b2 * mean |theta|^2.

    The four left-hand sides are |M|^2, the reweighted second moment, the
    Frobenius norm of the weighted covariance C, and ||sqrt(C)||_F^2.
    """
    consts = bound_constants(obj.certificate, beta)
    w = gibbs_weights(ens, obj, beta)
    positions = ens.positions
    norms_sq = np.einsum("jd,jd->j", positions, positions)

    mean = _anchored_mean(w, positions)
    cov = _covariance_from(w, positions)
    lhs = (
        float(mean @ mean),
        float(w @ norms_sq),
        matrix_norms(cov, 1)[0],
        matrix_norms(spd_sqrt(cov), 1)[0] ** 2,
    )
    rhs = consts.b1 + consts.b2 * float(norms_sq.mean())
    threshold = rhs * (1.0 + _BOUND_SLACK) + _BOUND_SLACK
    return BoundCheckReport(
        mean_sq=lhs[0], second_moment=lhs[1], cov_frobenius=lhs[2],
        sqrt_cov_frobenius_sq=lhs[3], rhs=rhs, constants=consts,
        passed=tuple(v <= threshold for v in lhs),
    )
