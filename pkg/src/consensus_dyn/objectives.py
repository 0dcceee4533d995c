"""Cost functions with machine-checkable growth certificates.

Every built-in objective ships the constants of the growth conditions the
weighted-moment bounds rely on:

  (1) |f(x) - f(y)| <= lip * (|x| + |y|) * |x - y|
  (2) f(x) - f_star <= c_u * (1 + |x|^2)
  (3) |x| > big_m  implies  f(x) - f_star >= c_l * |x|^2

Certificates carry a `verified` flag.  Built-ins are verified analytically;
black-box objectives default to unverified, and bound checks refuse them.
verify_assumptions() spot-checks the three inequalities by seeded sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "AssumptionReport",
    "BUILTIN_OBJECTIVES",
    "GrowthCertificate",
    "Objective",
    "blackbox_objective",
    "builtin_objective",
    "default_pair_sampler",
    "eval_batch",
    "eval_objective",
    "make_quadratic",
    "make_rastrigin",
    "verify_assumptions",
]

BUILTIN_OBJECTIVES = ("quadratic", "quadratic-shifted", "rastrigin")

# Inequality (1) with the (|x|+|y|) factor forces grad f(0) = 0, which shifted
# minimizers violate, so certificates for them are only claimed on the region
# |x| + |y| >= 1.  The default sampler respects that region.
PAIR_NORM_FLOOR = 1.0

_REL_SLACK = 1e-12


@dataclass(frozen=True)
class GrowthCertificate:
    """Growth-condition constants; `verified` marks analytically established ones."""

    lip: float
    f_star: float
    c_u: float
    c_l: float
    big_m: float
    verified: bool = False

    def __post_init__(self):
        for name in ("lip", "c_u", "c_l", "big_m"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"certificate field {name} must be finite and >= 0, got {v!r}")
        if not math.isfinite(float(self.f_star)):
            raise ValueError("f_star must be finite")


@dataclass(frozen=True)
class Objective:
    """A cost function together with its dimension and growth certificate.

    `fn` maps a single point (d,) to a scalar; `fn_batch`, when present, maps
    a stack of points (n, d) to (n,) and is used on hot paths.
    """

    fn: Callable[[np.ndarray], float]
    dim: int
    certificate: GrowthCertificate
    name: str = "custom"
    analytic_minimizer: np.ndarray | None = None
    quadratic_form: tuple[np.ndarray, np.ndarray] | None = None
    fn_batch: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")


def eval_objective(obj: Objective, x) -> float:
    """Evaluate obj at a single point, validating shape and finiteness."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (obj.dim,):
        raise ValueError(f"point has shape {x.shape}, objective expects ({obj.dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("point entries must be finite")
    value = float(obj.fn(x))
    if not math.isfinite(value):
        raise ValueError(f"objective {obj.name!r} returned a non-finite value")
    return value


def eval_batch(obj: Objective, positions: np.ndarray) -> np.ndarray:
    """Evaluate obj on each row of (n, d) positions.  No finiteness check here;
    callers that need per-particle error reporting do their own."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != obj.dim:
        raise ValueError(
            f"positions have shape {positions.shape}, objective expects (n, {obj.dim})"
        )
    if obj.fn_batch is not None:
        return np.asarray(obj.fn_batch(positions), dtype=np.float64)
    return np.array([float(obj.fn(p)) for p in positions], dtype=np.float64)


def make_quadratic(m, a) -> Objective:
    """Quadratic cost 0.5 * (x - m)^T A (x - m), A symmetric positive definite.

    The certificate uses the sharp constants when m = 0 and conservative ones
    otherwise (the lip constant is then valid on |x| + |y| >= 1, see
    PAIR_NORM_FLOOR).
    """
    m = np.atleast_1d(np.asarray(m, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    if m.ndim != 1:
        raise ValueError("m must be a vector")
    d = m.shape[0]
    if a.shape != (d, d):
        raise ValueError(f"A must have shape ({d}, {d}), got {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        raise ValueError("A must be symmetric")
    a = 0.5 * (a + a.T)
    eigs = np.linalg.eigvalsh(a)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    if lam_min <= 0.0:
        raise ValueError(f"A must be positive definite (min eigenvalue {lam_min:.3e})")

    m_norm = float(np.linalg.norm(m))
    if m_norm == 0.0:
        cert = GrowthCertificate(
            lip=lam_max, f_star=0.0, c_u=0.5 * lam_max, c_l=0.5 * lam_min,
            big_m=1.0, verified=True,
        )
    else:
        cert = GrowthCertificate(
            lip=lam_max * (1.0 + 2.0 * m_norm),
            f_star=0.0,
            c_u=lam_max * (1.0 + m_norm ** 2),
            c_l=lam_min / 8.0,
            big_m=max(1.0, 4.0 * m_norm),
            verified=True,
        )

    def fn(x: np.ndarray) -> float:
        dev = x - m
        return 0.5 * float(dev @ (a @ dev))

    def fn_batch(positions: np.ndarray) -> np.ndarray:
        dev = positions - m
        return 0.5 * np.einsum("jd,jd->j", dev, dev @ a)

    return Objective(
        fn=fn, dim=d, certificate=cert,
        name="quadratic" if m_norm == 0.0 else "quadratic-shifted",
        analytic_minimizer=m.copy(), quadratic_form=(m.copy(), a), fn_batch=fn_batch,
    )


def make_rastrigin(dim: int, amplitude: float = 1.0) -> Objective:
    """Multimodal cost |x|^2 / 2 + amplitude * sum_i (1 - cos(2 pi x_i)).

    Global minimum 0 at the origin.  Certificate constants are derived from
    |cos u - cos v| = 2 |sin((u+v)/2)| |sin((u-v)/2)| and Cauchy-Schwarz:
    lip = 1/2 + 2 pi^2 amplitude, c_u = max(1/2, 2 amplitude dim), c_l = 1/2.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    amplitude = float(amplitude)
    if not math.isfinite(amplitude) or amplitude <= 0.0:
        raise ValueError("amplitude must be finite and positive")
    cert = GrowthCertificate(
        lip=0.5 + 2.0 * math.pi ** 2 * amplitude,
        f_star=0.0,
        c_u=max(0.5, 2.0 * amplitude * dim),
        c_l=0.5,
        big_m=1.0,
        verified=True,
    )
    two_pi = 2.0 * math.pi

    def fn(x: np.ndarray) -> float:
        return 0.5 * float(x @ x) + amplitude * float(np.sum(1.0 - np.cos(two_pi * x)))

    def fn_batch(positions: np.ndarray) -> np.ndarray:
        quad = 0.5 * np.einsum("jd,jd->j", positions, positions)
        return quad + amplitude * np.sum(1.0 - np.cos(two_pi * positions), axis=1)

    return Objective(
        fn=fn, dim=dim, certificate=cert, name="rastrigin",
        analytic_minimizer=np.zeros(dim), fn_batch=fn_batch,
    )


def builtin_objective(obj_id: str, dim: int, m=None, a=None, amplitude: float = 1.0) -> Objective:
    """Construct one of the built-in objectives by id."""
    if obj_id not in BUILTIN_OBJECTIVES:
        raise ValueError(f"unknown objective id {obj_id!r}; known: {BUILTIN_OBJECTIVES}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if obj_id == "rastrigin":
        if m is not None or a is not None:
            raise ValueError("rastrigin takes no m or A parameter")
        return make_rastrigin(dim, amplitude)
    a = np.eye(dim) if a is None else np.asarray(a, dtype=np.float64)
    if obj_id == "quadratic":
        if m is not None and np.linalg.norm(np.asarray(m, dtype=np.float64)) != 0.0:
            raise ValueError("id 'quadratic' is centered; use 'quadratic-shifted' for m != 0")
        return make_quadratic(np.zeros(dim), a)
    m = np.ones(dim) if m is None else np.asarray(m, dtype=np.float64)
    if np.linalg.norm(m) == 0.0:
        raise ValueError("id 'quadratic-shifted' requires m != 0")
    return make_quadratic(m, a)


def blackbox_objective(fn: Callable[[np.ndarray], float], dim: int,
                       certificate: GrowthCertificate | None = None) -> Objective:
    """Wrap a user-supplied callable.  The certificate (placeholder constants
    if omitted) is marked unverified, so bound checks will refuse it."""
    if certificate is None:
        certificate = GrowthCertificate(lip=0.0, f_star=0.0, c_u=1.0, c_l=1.0,
                                        big_m=1.0, verified=False)
    elif certificate.verified:
        raise ValueError("black-box certificates must be unverified")
    return Objective(fn=fn, dim=dim, certificate=certificate, name="blackbox")


@dataclass(frozen=True)
class AssumptionReport:
    """Violation counts from sampled checks of the three growth inequalities.

    Margins are the minimum observed slack (rhs - lhs for upper bounds,
    lhs - rhs for the lower one); negative margin means a violation."""

    n: int
    lipschitz_violations: int
    upper_violations: int
    lower_violations: int
    worst_lipschitz_margin: float
    worst_upper_margin: float
    worst_lower_margin: float

    @property
    def total_violations(self) -> int:
        return self.lipschitz_violations + self.upper_violations + self.lower_violations


def default_pair_sampler(rng: np.random.Generator, dim: int, big_m: float, n: int):
    """Draw n point pairs with |x|, |y| <= 10 big_m and |x| + |y| >= 1, plus
    n single points with |x| > big_m (far-field shell up to 10 big_m)."""
    radius = 10.0 * big_m

    def ball(count: int) -> np.ndarray:
        z = rng.standard_normal((count, dim))
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        r = radius * rng.random((count, 1)) ** (1.0 / dim)
        return z / norms * r

    xs = ball(n)
    ys = ball(n)
    # resample pairs that fall inside the excluded near-origin region
    for _ in range(64):
        bad = np.linalg.norm(xs, axis=1) + np.linalg.norm(ys, axis=1) < PAIR_NORM_FLOOR
        if not bad.any():
            break
        k = int(bad.sum())
        xs[bad] = ball(k)
        ys[bad] = ball(k)

    z = rng.standard_normal((n, dim))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    # radius in (big_m, 10 big_m]; 1 - random() lies in (0, 1]
    r = big_m * (1.0 + 9.0 * (1.0 - rng.random((n, 1))))
    singles = z / norms * r
    return xs, ys, singles


def verify_assumptions(obj: Objective, n: int, seed: int = 0, sampler=None) -> AssumptionReport:
    """Spot-check the certificate's three inequalities on sampled points.

    A valid certificate yields zero violations; a corrupted one (for example
    an inflated c_l) shows up as a nonzero count."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cert = obj.certificate
    rng = np.random.default_rng(seed)
    if sampler is None:
        sampler = default_pair_sampler
    xs, ys, singles = sampler(rng, obj.dim, cert.big_m, n)

    f_x = eval_batch(obj, xs)
    f_y = eval_batch(obj, ys)
    f_s = eval_batch(obj, singles)
    norm_x = np.linalg.norm(xs, axis=1)
    norm_y = np.linalg.norm(ys, axis=1)
    norm_s = np.linalg.norm(singles, axis=1)

    lhs1 = np.abs(f_x - f_y)
    rhs1 = cert.lip * (norm_x + norm_y) * np.linalg.norm(xs - ys, axis=1)
    margin1 = rhs1 * (1.0 + _REL_SLACK) + _REL_SLACK - lhs1

    points_sq = np.concatenate([norm_x ** 2, norm_y ** 2, norm_s ** 2])
    values = np.concatenate([f_x, f_y, f_s])
    lhs2 = values - cert.f_star
    rhs2 = cert.c_u * (1.0 + points_sq)
    margin2 = rhs2 * (1.0 + _REL_SLACK) + _REL_SLACK - lhs2

    lhs3 = f_s - cert.f_star
    rhs3 = cert.c_l * norm_s ** 2
    margin3 = lhs3 - rhs3 * (1.0 - _REL_SLACK) + _REL_SLACK

    return AssumptionReport(
        n=n,
        lipschitz_violations=int(np.sum(margin1 < 0.0)),
        upper_violations=int(np.sum(margin2 < 0.0)),
        lower_violations=int(np.sum(margin3 < 0.0)),
        worst_lipschitz_margin=float(margin1.min()),
        worst_upper_margin=float(margin2.min()),
        worst_lower_margin=float(margin3.min()),
    )
