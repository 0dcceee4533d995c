"""Randomized verification families.

Each family draws a seeded batch of instances, evaluates one of the
quantitative relations the library is built around, and reports the case
count, failure count, and worst margin (negative margin = failure).  The
verify CLI subcommand runs a selection of families and exits nonzero when
any of them records a failure.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import stability_ratios
from .linalg import (matrix_norms, powers_stormer_check, spd_sqrt,
                     sqrt_perturbation_check, symmetrize)
from .measures import Ensemble, check_moment_bounds, weighted_covariance, weighted_mean
from .objectives import (Objective, blackbox_objective, builtin_objective,
                         eval_batch, verify_assumptions)

__all__ = [
    "FAMILIES",
    "FamilyResult",
    "check_affine_equivariance_suite",
    "check_assumption_suite",
    "check_auxiliary_moment_suite",
    "check_moment_bound_suite",
    "check_powers_stormer_suite",
    "check_sqrt_perturbation_suite",
    "check_sqrt_reconstruction_suite",
    "check_stability_suite",
    "pushforward_objective",
    "run_families",
]


@dataclass(frozen=True)
class FamilyResult:
    family: str
    cases: int
    failures: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _random_ensemble(rng: np.random.Generator, j_range=(2, 64), d_range=(1, 8),
                     bound: float = 20.0) -> Ensemble:
    j = int(rng.integers(j_range[0], j_range[1] + 1))
    d = int(rng.integers(d_range[0], d_range[1] + 1))
    return Ensemble(rng.uniform(-bound, bound, size=(j, d)))


def check_moment_bound_suite(seed: int = 0, cases: int = 1000,
                             betas=(0.1, 1.0, 10.0)) -> FamilyResult:
    """Weighted-moment bounds on random ensembles against f = |x|^2 / 2.

    Every ensemble is checked at each beta; all four bounded quantities must
    stay below b1 + b2 * mean |theta|^2.
    """
    rng = np.random.default_rng(seed)
    objectives = {d: builtin_objective("quadratic", d) for d in range(1, 9)}
    failures = 0
    worst = np.inf
    total = 0
    for _ in range(cases):
        ens = _random_ensemble(rng)
        obj = objectives[ens.d]
        for beta in betas:
            report = check_moment_bounds(ens, obj, beta)
            total += 1
            worst = min(worst, report.worst_margin)
            if not report.all_passed:
                failures += 1
    return FamilyResult("moment-bounds", total, failures, float(worst))


def _random_psd(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    g = rng.standard_normal((d, d))
    if rank is not None and rank < d:
        g[:, rank:] = 0.0
    return symmetrize(g @ g.T)


def check_sqrt_perturbation_suite(seed: int = 0, cases: int = 1000,
                                  max_dim: int = 8) -> FamilyResult:
    """Spectral-norm square-root perturbation bound on random (PSD, SPD) pairs."""
    rng = np.random.default_rng(seed)
    failures = 0
    worst = np.inf
    for _ in range(cases):
        d = int(rng.integers(1, max_dim + 1))
        rank = int(rng.integers(1, d + 1)) if rng.random() < 0.3 else None
        a = _random_psd(rng, d, rank)
        b = _random_psd(rng, d) + float(rng.uniform(0.05, 2.0)) * np.eye(d)
        report = sqrt_perturbation_check(a, b)
        worst = min(worst, report.margin)
        if not report.passed:
            failures += 1
    return FamilyResult("sqrt-perturbation", cases, failures, float(worst))


def check_powers_stormer_suite(seed: int = 0, cases: int = 1000,
                               max_dim: int = 8) -> FamilyResult:
    """Frobenius square-root difference against the trace-norm root."""
    rng = np.random.default_rng(seed)
    failures = 0
    worst = np.inf
    for _ in range(cases):
        d = int(rng.integers(1, max_dim + 1))
        rank_a = int(rng.integers(1, d + 1)) if rng.random() < 0.3 else None
        rank_b = int(rng.integers(1, d + 1)) if rng.random() < 0.3 else None
        a = _random_psd(rng, d, rank_a)
        b = _random_psd(rng, d, rank_b)
        report = powers_stormer_check(a, b)
        worst = min(worst, report.margin)
        if not report.passed:
            failures += 1
    return FamilyResult("powers-stormer", cases, failures, float(worst))


def check_sqrt_reconstruction_suite(seed: int = 0, cases: int = 1000,
                                    max_dim: int = 16,
                                    tol: float = 1e-10) -> FamilyResult:
    """||S @ S - C||_F <= tol * (1 + ||C||_F) for S = spd_sqrt(C)."""
    rng = np.random.default_rng(seed)
    failures = 0
    worst = np.inf
    for _ in range(cases):
        d = int(rng.integers(1, max_dim + 1))
        rank = int(rng.integers(1, d + 1)) if rng.random() < 0.3 else None
        c = _random_psd(rng, d, rank) * float(rng.uniform(0.1, 100.0))
        s = spd_sqrt(c)
        err = matrix_norms(s @ s - c, 1)[0]
        margin = tol * (1.0 + matrix_norms(c, 1)[0]) - err
        worst = min(worst, margin)
        if margin < 0.0:
            failures += 1
    return FamilyResult("sqrt-reconstruction", cases, failures, float(worst))


def check_assumption_suite(seed: int = 0, n: int = 2000,
                           certificate_override=None) -> FamilyResult:
    """Sampled growth-inequality checks for every built-in objective.

    certificate_override, when given, replaces the centered quadratic's
    certificate (used to demonstrate that corrupted constants are caught).
    """
    dims = (1, 2, 4, 8)
    failures = 0
    worst = np.inf
    cases = 0
    for d in dims:
        for obj_id in ("quadratic", "quadratic-shifted", "rastrigin"):
            obj = builtin_objective(obj_id, d)
            if certificate_override is not None and obj_id == "quadratic":
                obj = replace(obj, certificate=certificate_override)
            report = verify_assumptions(obj, n, seed=seed + d)
            cases += 3 * n
            failures += report.total_violations
            worst = min(worst, report.worst_lipschitz_margin,
                        report.worst_upper_margin, report.worst_lower_margin)
    return FamilyResult("assumptions", cases, failures, float(worst))


def check_auxiliary_moment_suite(seed: int = 0, cases: int = 500) -> FamilyResult:
    """Product-of-moments inequality m_p * m_q <= m_{p+q} on particle norms,
    p, q in {1..4}, where m_p = (1/J) sum |theta_j|^p."""
    rng = np.random.default_rng(seed)
    failures = 0
    worst = np.inf
    total = 0
    for _ in range(cases):
        ens = _random_ensemble(rng, j_range=(2, 64), d_range=(1, 6), bound=5.0)
        norms = np.linalg.norm(ens.positions, axis=1)
        for p in range(1, 5):
            for q in range(1, 5):
                lhs = float(np.mean(norms ** p) * np.mean(norms ** q))
                rhs = float(np.mean(norms ** (p + q)))
                margin = rhs * (1.0 + 1e-12) + 1e-12 - lhs
                total += 1
                worst = min(worst, margin)
                if margin < 0.0:
                    failures += 1
    return FamilyResult("auxiliary-moments", total, failures, float(worst))


def check_stability_suite(seed: int = 0, cases: int = 200) -> FamilyResult:
    """Perturbation-response ratios stay finite and within 100x their median.

    Cases cycle epsilon through {1e-1, 1e-2, 1e-3, 1e-4} on random bounded
    ensembles (entries in [-5, 5], so sixth moments are capped) against the
    centered quadratic at beta = 1.
    """
    rng = np.random.default_rng(seed)
    scales = (1e-1, 1e-2, 1e-3, 1e-4)
    objectives = {d: builtin_objective("quadratic", d) for d in range(1, 5)}
    ratios_mean = np.empty(cases)
    ratios_cov = np.empty(cases)
    for i in range(cases):
        ens = _random_ensemble(rng, j_range=(8, 64), d_range=(1, 4), bound=5.0)
        eps = scales[i % len(scales)]
        report = stability_ratios(ens, objectives[ens.d], 1.0, [eps],
                                  seed=seed + 1000 + i)
        ratios_mean[i] = report.rows[0].ratio_mean
        ratios_cov[i] = report.rows[0].ratio_cov
    failures = 0
    worst = np.inf
    for ratios in (ratios_mean, ratios_cov):
        if not np.all(np.isfinite(ratios)):
            failures += int(np.sum(~np.isfinite(ratios)))
            worst = -np.inf
            continue
        gate = 100.0 * float(np.median(ratios))
        failures += int(np.sum(ratios > gate))
        worst = min(worst, gate - float(ratios.max()))
    return FamilyResult("stability", cases, failures, float(worst))


def pushforward_objective(obj: Objective, a_mat: np.ndarray, shift: np.ndarray) -> Objective:
    """g with g(A x + b) = f(x): evaluates f at A^-1 (x - b)."""
    a_inv = np.linalg.inv(a_mat)

    def fn(x):
        return float(obj.fn(a_inv @ (np.asarray(x, dtype=np.float64) - shift)))

    def fn_batch(positions):
        return eval_batch(obj, (positions - shift) @ a_inv.T)

    pushed = blackbox_objective(fn, obj.dim)
    return replace(pushed, fn_batch=fn_batch, name=f"{obj.name}-pushforward")


def check_affine_equivariance_suite(seed: int = 0, cases: int = 100,
                                    tol: float = 1e-9,
                                    max_cond: float = 50.0) -> FamilyResult:
    """Weighted moments and the one-step conditional law transform correctly
    under x -> A x + b (invertible A with condition number <= max_cond).

    Checked identities, all relative to tol * (1 + scale):
      M_g(A ens + b) = A M_f(ens) + b
      C_g(A ens + b) = A C_f(ens) A^T
      one-step conditional mean maps as x -> A x + b
      one-step conditional covariance dt * S S^T maps to 2 lam^-1 dt A C A^T
    """
    rng = np.random.default_rng(seed)
    lam, beta, dt = 0.5, 1.0, 0.01
    failures = 0
    worst = np.inf
    for _ in range(cases):
        d = int(rng.integers(1, 5))
        obj = builtin_objective("quadratic", d)
        ens = Ensemble(rng.uniform(-5.0, 5.0, size=(int(rng.integers(4, 33)), d)))

        # A = U diag(s) V^T with singular values log-spaced in
        # [1/sqrt(max_cond), sqrt(max_cond)], so cond(A) <= max_cond.
        u, _ = np.linalg.qr(rng.standard_normal((d, d)))
        v, _ = np.linalg.qr(rng.standard_normal((d, d)))
        s = np.exp(rng.uniform(-0.5 * np.log(max_cond), 0.5 * np.log(max_cond), size=d))
        a_mat = u @ np.diag(s) @ v.T
        b = rng.normal(0.0, 2.0, size=d)

        pushed_ens = Ensemble(ens.positions @ a_mat.T + b)
        pushed_obj = pushforward_objective(obj, a_mat, b)

        mean_f = weighted_mean(ens, obj, beta)
        cov_f = weighted_covariance(ens, obj, beta)
        mean_g = weighted_mean(pushed_ens, pushed_obj, beta)
        cov_g = weighted_covariance(pushed_ens, pushed_obj, beta)

        target_mean = a_mat @ mean_f + b
        target_cov = a_mat @ cov_f @ a_mat.T
        err = [
            float(np.linalg.norm(mean_g - target_mean)) / (1.0 + float(np.linalg.norm(target_mean))),
            matrix_norms(cov_g - target_cov, 1)[0] / (1.0 + matrix_norms(target_cov, 1)[0]),
        ]

        # One-step conditional law of the shared-root dynamics.
        cond_mean_f = ens.positions + dt * (mean_f - ens.positions)
        cond_mean_g = pushed_ens.positions + dt * (mean_g - pushed_ens.positions)
        target = cond_mean_f @ a_mat.T + b
        err.append(float(np.max(np.linalg.norm(cond_mean_g - target, axis=1))
                         / (1.0 + np.max(np.linalg.norm(target, axis=1)))))

        root_g = spd_sqrt((2.0 / lam) * cov_g)
        cond_cov_g = dt * (root_g @ root_g)
        target_cc = dt * (2.0 / lam) * target_cov
        err.append(matrix_norms(cond_cov_g - target_cc, 1)[0]
                   / (1.0 + matrix_norms(target_cc, 1)[0]))

        margin = tol - max(err)
        worst = min(worst, margin)
        if margin < 0.0:
            failures += 1
    return FamilyResult("affine-equivariance", cases, failures, float(worst))


FAMILIES = {
    "assumptions": check_assumption_suite,
    "moment-bounds": check_moment_bound_suite,
    "sqrt-perturbation": check_sqrt_perturbation_suite,
    "powers-stormer": check_powers_stormer_suite,
    "sqrt-reconstruction": check_sqrt_reconstruction_suite,
    "auxiliary-moments": check_auxiliary_moment_suite,
    "stability": check_stability_suite,
    "affine-equivariance": check_affine_equivariance_suite,
}


def run_families(selection, seed: int = 0, corrupt_certificate: bool = False):
    """Run the selected families in order; returns a list of FamilyResult.

    corrupt_certificate swaps an inflated lower-growth constant (c_l = 10)
    into the centered quadratic for the families that consume certificates,
    which must produce failures.
    """
    results = []
    for name in selection:
        fam = FAMILIES[name]
        if corrupt_certificate and name == "assumptions":
            from .objectives import GrowthCertificate
            bad = GrowthCertificate(lip=1.0, f_star=0.0, c_u=0.5, c_l=10.0,
                                    big_m=1.0, verified=True)
            results.append(check_assumption_suite(seed=seed, certificate_override=bad))
        elif corrupt_certificate and name == "moment-bounds":
            results.append(_corrupted_moment_bounds(seed))
        else:
            results.append(fam(seed=seed))
    return results


def _corrupted_moment_bounds(seed: int) -> FamilyResult:
    # Same sampling as the honest family, but bound constants computed from
    # a certificate whose c_l is inflated; the rhs shrinks below the lhs.
    from .objectives import GrowthCertificate
    rng = np.random.default_rng(seed)
    bad_cert = GrowthCertificate(lip=1.0, f_star=0.0, c_u=0.5, c_l=10.0,
                                 big_m=1.0, verified=True)
    objectives = {}
    for d in range(1, 9):
        objectives[d] = replace(builtin_objective("quadratic", d), certificate=bad_cert)
    failures = 0
    worst = np.inf
    total = 0
    for _ in range(200):
        ens = _random_ensemble(rng)
        for beta in (0.1, 1.0, 10.0):
            report = check_moment_bounds(ens, objectives[ens.d], beta)
            total += 1
            worst = min(worst, report.worst_margin)
            if not report.all_passed:
                failures += 1
    return FamilyResult("moment-bounds", total, failures, float(worst))
