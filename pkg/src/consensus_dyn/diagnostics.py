"""Trajectory diagnostics.

The centerpiece is the weak-form residual of the limiting nonlinear
Fokker-Planck equation evaluated on the empirical measure of a finite run:

    F(phi, t) = <phi, rho_t> - <phi, rho_0>
                + int_0^t <(x - M_s) . grad phi, rho_s> ds
                - lam^-1 int_0^t sum_ik C_s[i,k] <d2 phi/dx_i dx_k, rho_s> ds

with <g, rho_s> the ensemble average at recorded time s and M_s, C_s the
weighted mean/covariance.  Time integrals use the trapezoid rule on the
recording grid.  For the exact dynamics the residual is a martingale-driven
O(J^-1/2) term, so the mean square over replicates decays like 1/J.

Also here: a compactly supported C^2 bump test function, an exact empirical
2-Wasserstein distance, and perturbation-stability ratios for the weighted
moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dynamics import DynamicsConfig, TrajectoryRecord, derive_seed, integrate
from .errors import BlowUpError, UnsupportedObjectiveError
from .linalg import matrix_norms
from .measures import Ensemble, gibbs_weights, weighted_covariance, weighted_mean
from .objectives import Objective, eval_batch

__all__ = [
    "BumpTestFunction",
    "FPResidualReport",
    "MomentBoundReport",
    "StabilityReport",
    "W2_MAX_SIZE",
    "fp_residual",
    "fp_residual_scaling",
    "make_bump",
    "moment_bound_monitor",
    "raw_moment",
    "residual_report_from_samples",
    "stability_ratios",
    "wasserstein2",
]

W2_MAX_SIZE = 512


@dataclass(frozen=True)
class BumpTestFunction:
    """phi(x) = (1 - |x - c|^2 / r^2)^3 inside the ball of radius r, else 0.

    The cubic makes phi C^2 across the support boundary.  Gradient and
    Hessian are analytic:

        grad phi = -6 (1 - u)^2 (x - c) / r^2
        hess phi = -6 (1 - u)^2 I / r^2 + 24 (1 - u) (x - c)(x - c)^T / r^4

    with u = |x - c|^2 / r^2.
    """

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=np.float64))
        if center.ndim != 1 or not np.all(np.isfinite(center)):
            raise ValueError("center must be a finite vector")
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise ValueError("radius must be finite and > 0")
        object.__setattr__(self, "center", center)

    @property
    def dim(self) -> int:
        return self.center.size

    def _u(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dev = positions - self.center
        u = np.einsum("jd,jd->j", dev, dev) / self.radius ** 2
        return dev, u

    def values(self, positions: np.ndarray) -> np.ndarray:
        """phi at each row of (n, d) positions."""
        _, u = self._u(np.asarray(positions, dtype=np.float64))
        return np.where(u < 1.0, (1.0 - u) ** 3, 0.0)

    def gradients(self, positions: np.ndarray) -> np.ndarray:
        dev, u = self._u(np.asarray(positions, dtype=np.float64))
        inside = u < 1.0
        coeff = np.where(inside, -6.0 * (1.0 - u) ** 2 / self.radius ** 2, 0.0)
        return coeff[:, None] * dev

    def hessians(self, positions: np.ndarray) -> np.ndarray:
        dev, u = self._u(np.asarray(positions, dtype=np.float64))
        inside = u < 1.0
        one_minus = np.where(inside, 1.0 - u, 0.0)
        iso = -6.0 * one_minus ** 2 / self.radius ** 2
        outer = 24.0 * one_minus / self.radius ** 4
        d = self.dim
        hess = iso[:, None, None] * np.eye(d)[None, :, :]
        hess += outer[:, None, None] * np.einsum("ji,jk->jik", dev, dev)
        hess[~inside] = 0.0
        return hess

    def value(self, x) -> float:
        return float(self.values(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])

    def gradient(self, x) -> np.ndarray:
        return self.gradients(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]

    def hessian(self, x) -> np.ndarray:
        return self.hessians(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]


def make_bump(center, radius: float) -> BumpTestFunction:
    """Compactly supported C^2 test function centered at `center`."""
    return BumpTestFunction(center=center, radius=float(radius))


def raw_moment(ens: Ensemble, p: int) -> float:
    """(1/J) sum_j |theta_j|^(2p) for p in {1, 2, 3}."""
    if p not in (1, 2, 3):
        raise ValueError(f"p must be 1, 2 or 3, got {p!r}")
    norms_sq = np.einsum("jd,jd->j", ens.positions, ens.positions)
    return float((norms_sq ** p).mean())


def _time_index(times: np.ndarray, t: float) -> int:
    tol = 1e-12 * max(1.0, float(times[-1]))
    hits = np.nonzero(np.abs(times - t) <= tol)[0]
    if hits.size == 0:
        raise ValueError(f"t={t!r} is not a recorded time")
    return int(hits[0])


def fp_residual(traj: TrajectoryRecord, obj: Objective, beta: float, lam: float,
                phi: BumpTestFunction, t: float) -> float:
    """Weak-form residual F(phi, t) on the recorded grid up to time t.

    t must be a recorded time.  Weighted moments are reused from the record
    when beta matches the recording beta, else recomputed from snapshots.
    """
    if not (math.isfinite(lam) and lam > 0.0):
        raise ValueError("lambda must be finite and > 0")
    if phi.dim != obj.dim:
        raise ValueError("test function and objective dimensions differ")
    idx = _time_index(traj.times, t)
    times = traj.times[: idx + 1]
    reuse = beta == traj.config.beta

    drift = np.empty(idx + 1)
    diffusion = np.empty(idx + 1)
    for s in range(idx + 1):
        ens = traj.snapshots[s]
        if reuse:
            mean, cov = traj.weighted[s].mean, traj.weighted[s].cov
        else:
            mean = weighted_mean(ens, obj, beta)
            cov = weighted_covariance(ens, obj, beta)
        grads = phi.gradients(ens.positions)
        drift[s] = float(np.einsum("jd,jd->", ens.positions - mean, grads)) / ens.j
        mean_hess = phi.hessians(ens.positions).mean(axis=0)
        diffusion[s] = float(np.sum(cov * mean_hess))

    boundary = float(phi.values(traj.snapshots[idx].positions).mean()
                     - phi.values(traj.snapshots[0].positions).mean())
    return boundary + float(np.trapezoid(drift, times)) \
        - float(np.trapezoid(diffusion, times)) / lam


@dataclass(frozen=True)
class FPResidualReport:
    """Residual spread across ensemble sizes with the fitted decay slope.

    residuals[k, r] is F at final time for j_values[k], replicate r.
    slope_ci is a bootstrap 95% percentile interval for the slope of
    log mean-square residual against log J.
    """

    j_values: tuple[int, ...]
    reps: int
    residuals: np.ndarray
    mean_square: np.ndarray
    slope: float
    slope_ci: tuple[float, float]


def residual_report_from_samples(j_list, reps: int, residuals: np.ndarray,
                                 seed: int,
                                 bootstrap: int = 1000) -> FPResidualReport:
    """Slope fit and bootstrap interval for a precomputed residual grid.

    residuals has shape (len(j_list), reps).  The bootstrap resamples
    replicates within each ensemble size; its generator is derived from
    `seed` so the interval is reproducible.
    """
    j_values = [int(j) for j in j_list]
    residuals = np.asarray(residuals, dtype=np.float64)
    if residuals.shape != (len(j_values), reps):
        raise ValueError("residuals must have shape (len(j_list), reps)")
    mean_square = np.mean(residuals ** 2, axis=1)
    log_j = np.log(np.asarray(j_values, dtype=np.float64))
    slope = float(np.polyfit(log_j, np.log(mean_square), 1)[0])

    rng = np.random.default_rng(derive_seed(seed, 0xB0075))
    boot = np.empty(bootstrap)
    for b in range(bootstrap):
        idx = rng.integers(0, reps, size=(len(j_values), reps))
        ms = np.mean(np.take_along_axis(residuals, idx, axis=1) ** 2, axis=1)
        boot[b] = np.polyfit(log_j, np.log(ms), 1)[0]
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return FPResidualReport(
        j_values=tuple(j_values), reps=reps, residuals=residuals,
        mean_square=mean_square, slope=slope, slope_ci=(float(lo), float(hi)),
    )


def fp_residual_scaling(cfg: DynamicsConfig, j_list, reps: int,
                        phi: BumpTestFunction, obj: Objective,
                        bootstrap: int = 1000) -> FPResidualReport:
    """Mean-square residual at t_final across ensemble sizes, with slope fit.

    Runs `reps` replicates per entry of j_list (derived, non-overlapping
    seeds), evaluates F(phi, t_final) on each, fits the log-log slope and
    bootstraps its 95% interval.
    """
    j_values = [int(j) for j in j_list]
    if len(j_values) < 3:
        raise ValueError("need at least 3 ensemble sizes for a decay fit")
    if sorted(set(j_values)) != j_values:
        raise ValueError("j_list must be strictly ascending")
    if reps < 10:
        raise ValueError("need at least 10 replicates for a stable fit")
    if cfg.record_stride != 1:
        raise ValueError("residual scaling needs record_stride=1 for its quadrature grid")

    residuals = np.empty((len(j_values), reps))
    for k, j in enumerate(j_values):
        for r in range(reps):
            sub = replace(cfg, j=j, seed=derive_seed(cfg.seed, j, r))
            try:
                traj = integrate(sub, obj)
            except BlowUpError as exc:
                raise BlowUpError(
                    f"replicate blew up during residual sweep (J={j}, rep={r}): {exc}",
                    step=exc.step) from exc
            residuals[k, r] = fp_residual(traj, obj, cfg.beta, cfg.lam, phi,
                                          cfg.t_final)

    return residual_report_from_samples(j_values, reps, residuals, cfg.seed,
                                        bootstrap=bootstrap)


def wasserstein2(a: Ensemble, b: Ensemble) -> float:
    """Exact 2-Wasserstein distance between two equal-size empirical measures.

    d = 1 sorts both samples; d >= 2 solves the assignment problem exactly
    (sizes capped at W2_MAX_SIZE).
    """
    if a.d != b.d:
        raise ValueError("ensembles must share the dimension")
    if a.j != b.j:
        raise ValueError("ensembles must have equal particle counts")
    if a.d == 1:
        xs = np.sort(a.positions[:, 0])
        ys = np.sort(b.positions[:, 0])
        return float(np.sqrt(np.mean((xs - ys) ** 2)))
    if a.j > W2_MAX_SIZE:
        raise UnsupportedObjectiveError(
            f"exact assignment is capped at {W2_MAX_SIZE} particles, got {a.j}")
    diff = a.positions[:, None, :] - b.positions[None, :, :]
    cost = np.einsum("ijd,ijd->ij", diff, diff)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


@dataclass(frozen=True)
class StabilityRow:
    epsilon: float
    w2: float
    identity_coupling_bound: float
    delta_mean: float
    delta_cov: float
    ratio_mean: float
    ratio_cov: float


@dataclass(frozen=True)
class StabilityReport:
    """Per-scale perturbation response of the weighted mean and covariance."""

    rows: tuple[StabilityRow, ...]

    @property
    def max_ratio_mean(self) -> float:
        return max(r.ratio_mean for r in self.rows)

    @property
    def max_ratio_cov(self) -> float:
        return max(r.ratio_cov for r in self.rows)


def stability_ratios(ens: Ensemble, obj: Objective, beta: float, scales,
                     seed: int = 0) -> StabilityReport:
    """Ratios |M(b) - M(a)| / W2 and ||C(b) - C(a)||_F / W2 for perturbed
    copies b = a + eps * (unit directions), one row per scale.

    scales must be nonnegative and strictly descending; eps = 0 rows report
    zero ratios by convention.  W2 is computed exactly; the identity coupling
    gives the a-priori bound W2 <= eps recorded alongside.
    """
    scales = [float(s) for s in scales]
    if len(scales) == 0:
        raise ValueError("need at least one scale")
    if any(not math.isfinite(s) or s < 0.0 for s in scales):
        raise ValueError("scales must be finite and >= 0")
    if any(s1 <= s2 for s1, s2 in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly descending")

    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal(ens.positions.shape)
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    dirs = dirs / norms

    mean_a = weighted_mean(ens, obj, beta)
    cov_a = weighted_covariance(ens, obj, beta)

    rows = []
    for eps in scales:
        if eps == 0.0:
            rows.append(StabilityRow(eps, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0))
            continue
        perturbed = Ensemble(ens.positions + eps * dirs)
        w2 = wasserstein2(ens, perturbed)
        d_mean = float(np.linalg.norm(weighted_mean(perturbed, obj, beta) - mean_a))
        d_cov = matrix_norms(weighted_covariance(perturbed, obj, beta) - cov_a, 1)[0]
        if w2 > 0.0:
            rows.append(StabilityRow(eps, w2, eps, d_mean, d_cov,
                                     d_mean / w2, d_cov / w2))
        else:
            rows.append(StabilityRow(eps, w2, eps, d_mean, d_cov, 0.0, 0.0))
    return StabilityReport(rows=tuple(rows))


@dataclass(frozen=True)
class MomentBoundReport:
    """Sup-over-time of the raw moments against their initial values."""

    sup_moments: tuple[float, float, float]
    initial_moments: tuple[float, float, float]
    ratios: tuple[float, float, float]


def moment_bound_monitor(traj: TrajectoryRecord) -> MomentBoundReport:
    """Summarize how far each raw moment rose above its initial value."""
    sups = tuple(float(v) for v in traj.raw_moments.max(axis=0))
    init = tuple(float(v) for v in traj.raw_moments[0])
    ratios = tuple(
        (s / i) if i > 0.0 else (0.0 if s == 0.0 else math.inf)
        for s, i in zip(sups, init)
    )
    return MomentBoundReport(sup_moments=sups, initial_moments=init, ratios=ratios)
