"""Euler-Maruyama integration of the two interacting particle systems.

Both systems share the drift -(theta_j - M) toward the weighted mean M of the
current ensemble and differ in the noise:

  anisotropic, per-particle:   dtheta_j = (M - theta_j) dt
                                + lam^-1 diag(|theta_j - M|) dW_j
  shared covariance sqrt:      dtheta_j = (M - theta_j) dt
                                + sqrt(2 lam^-1 C) dW_j

where C is the weighted covariance and one symmetric square root is shared by
all particles within a step.  diag(|v|) applies the absolute value
componentwise; a Euclidean-norm (isotropic) variant is available behind
`cbo_isotropic` without any accuracy claim attached.

Noise contract: increments come from a counter-based generator (Philox) keyed
by (seed, stream) with the step index in a dedicated counter word, so the
normal draw for (seed, step, particle, coordinate) is fixed regardless of how
many steps ran before, and replicate sweeps with derived seeds never overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import BlowUpError, UnsupportedObjectiveError
from .linalg import spd_sqrt
from .measures import Ensemble, WeightedMoments, gibbs_weights, weighted_moments
from .objectives import Objective

__all__ = [
    "DynamicsConfig",
    "ExplicitInit",
    "GaussianInit",
    "InitialLaw",
    "MAX_PARTICLE_NORM",
    "TrajectoryRecord",
    "UniformBoxInit",
    "cbo_step",
    "cbs_step",
    "derive_seed",
    "gaussian_stationary_reference",
    "integrate",
    "sample_initial",
    "step_noise",
]

MAX_PARTICLE_NORM = 1e8
MAX_DT = 0.5

_U64 = 0xFFFFFFFFFFFFFFFF
_STEP_STREAM = 0
_INIT_STREAM = 1


def _generator(seed: int, stream: int, counter_word: int = 0) -> np.random.Generator:
    key = np.array([seed & _U64, stream & _U64], dtype=np.uint64)
    counter = np.array([0, 0, counter_word & _U64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def step_noise(seed: int, step: int, j: int, d: int) -> np.ndarray:
    """Standard-normal increments for one step, shape (j, d).

    Draws for different steps live in disjoint counter ranges, so the value
    at (seed, step, particle, coordinate) never depends on other steps.
    """
    if step < 1:
        raise ValueError("step indices start at 1")
    return _generator(seed, _STEP_STREAM, step).standard_normal((j, d))


def derive_seed(base: int, *path: int) -> int:
    """Derived stream seed for replicate/sweep indices; distinct paths give
    structurally distinct streams."""
    ss = np.random.SeedSequence([int(base) & _U64, *[int(p) & _U64 for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class GaussianInit:
    """Initial law N(mean, cov)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("mean must be (d,) and cov (d, d)")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("mean and cov must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class UniformBoxInit:
    """Initial law uniform on the box [lo_i, hi_i] per coordinate."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if not np.all(hi > lo):
            raise ValueError("need hi > lo in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size


@dataclass(frozen=True)
class ExplicitInit:
    """Initial positions given explicitly, shape (J, d)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[0] < 2:
            raise ValueError("positions must be (J >= 2, d)")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


InitialLaw = Union[GaussianInit, UniformBoxInit, ExplicitInit]


def sample_initial(law: InitialLaw, j: int, d: int, seed: int) -> np.ndarray:
    """Draw the initial (j, d) positions from the seeded init stream."""
    if law.dim != d:
        raise ValueError(f"initial law has dim {law.dim}, expected {d}")
    rng = _generator(seed, _INIT_STREAM)
    if isinstance(law, GaussianInit):
        z = rng.standard_normal((j, d))
        return law.mean + z @ spd_sqrt(law.cov)
    if isinstance(law, UniformBoxInit):
        u = rng.random((j, d))
        return law.lo + (law.hi - law.lo) * u
    if isinstance(law, ExplicitInit):
        if law.positions.shape != (j, d):
            raise ValueError(
                f"explicit positions have shape {law.positions.shape}, expected ({j}, {d})")
        return law.positions.copy()
    raise TypeError(f"unknown initial law {type(law).__name__}")


@dataclass(frozen=True)
class DynamicsConfig:
    """Validated parameters of one integration run."""

    mode: str
    lam: float
    beta: float
    dt: float
    t_final: float
    j: int
    seed: int
    init: InitialLaw
    record_stride: int = 1
    cbo_isotropic: bool = False

    def __post_init__(self):
        if self.mode not in ("cbo", "cbs"):
            raise ValueError(f"mode must be 'cbo' or 'cbs', got {self.mode!r}")
        if not (math.isfinite(self.lam) and self.lam > 0.0):
            raise ValueError("lambda must be finite and > 0")
        if not (math.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError("beta must be finite and > 0")
        if not (math.isfinite(self.dt) and 0.0 < self.dt <= MAX_DT):
            raise ValueError(f"dt must lie in (0, {MAX_DT}]")
        if not (math.isfinite(self.t_final) and self.t_final >= self.dt):
            raise ValueError("t_final must be finite and >= dt")
        if self.j < 2:
            raise ValueError("need at least 2 particles")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if isinstance(self.init, ExplicitInit) and self.init.positions.shape[0] != self.j:
            raise ValueError("explicit init must provide exactly j particles")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Recorded states and summary statistics of one run.

    times[0] == 0 and times[-1] == t_final always; intermediate entries follow
    the record stride.  raw_moments[:, p-1] holds (1/J) sum_j |theta_j|^(2p).
    consensus_spread is the trace of the unweighted sample covariance.
    """

    times: np.ndarray
    snapshots: tuple[Ensemble, ...]
    weighted: tuple[WeightedMoments, ...]
    raw_moments: np.ndarray
    min_cov_eig: np.ndarray
    consensus_spread: np.ndarray
    config: DynamicsConfig


def cbo_step(ens: Ensemble, obj: Objective, lam: float, beta: float, dt: float,
             noise: np.ndarray, isotropic: bool = False) -> Ensemble:
    """One explicit Euler step with per-particle anisotropic noise."""
    _check_step_args(ens, lam, dt, noise)
    if dt == 0.0:
        return ens
    positions = ens.positions
    mean = _anchored(gibbs_weights(ens, obj, beta), positions)
    dev = positions - mean
    if isotropic:
        scale = np.linalg.norm(dev, axis=1, keepdims=True)
    else:
        scale = np.abs(dev)
    new = positions + dt * (mean - positions) + (math.sqrt(dt) / lam) * scale * noise
    return Ensemble(new)


def cbs_step(ens: Ensemble, obj: Objective, lam: float, beta: float, dt: float,
             noise: np.ndarray) -> Ensemble:
    """One explicit Euler step with the shared covariance square root.

    The root S = sqrt(2 lam^-1 C) is computed once per step and applied to
    every particle's increment.
    """
    _check_step_args(ens, lam, dt, noise)
    if dt == 0.0:
        return ens
    positions = ens.positions
    wm = weighted_moments(ens, obj, beta)
    root = spd_sqrt((2.0 / lam) * wm.cov)
    new = positions + dt * (wm.mean - positions) + math.sqrt(dt) * (noise @ root)
    return Ensemble(new)


def _anchored(weights: np.ndarray, positions: np.ndarray) -> np.ndarray:
    anchor = positions[0]
    return anchor + weights @ (positions - anchor)


def _check_step_args(ens: Ensemble, lam: float, dt: float, noise: np.ndarray) -> None:
    if not (math.isfinite(lam) and lam > 0.0):
        raise ValueError("lambda must be finite and > 0")
    if not (math.isfinite(dt) and 0.0 <= dt <= MAX_DT):
        raise ValueError(f"dt must lie in [0, {MAX_DT}]")
    if np.asarray(noise).shape != ens.positions.shape:
        raise ValueError("noise must match the ensemble shape")


def integrate(cfg: DynamicsConfig, obj: Objective) -> TrajectoryRecord:
    """Run the configured dynamics from a seeded initial draw to t_final.

    The step count is ceil(t_final / dt) with a shorter final step when dt
    does not divide t_final; the final state is always recorded.  Any particle
    norm above MAX_PARTICLE_NORM aborts with BlowUpError.
    """
    if obj.dim < 1:
        raise ValueError("objective dimension must be >= 1")
    d = obj.dim
    positions = sample_initial(cfg.init, cfg.j, d, cfg.seed)
    ens = Ensemble(positions)

    n_full = int(math.floor(cfg.t_final / cfg.dt + 1e-9))
    remainder = cfg.t_final - n_full * cfg.dt
    has_partial = remainder > 1e-12 * max(1.0, cfg.t_final)
    n_steps = n_full + 1 if has_partial else n_full

    times = [0.0]
    snapshots = [ens]
    weighted = [weighted_moments(ens, obj, cfg.beta)]
    recorded = [_summaries(ens, weighted[-1])]

    for step in range(1, n_steps + 1):
        dt_step = cfg.dt
        if has_partial and step == n_steps:
            dt_step = remainder
        noise = step_noise(cfg.seed, step, cfg.j, d)
        if cfg.mode == "cbo":
            ens = cbo_step(ens, obj, cfg.lam, cfg.beta, dt_step, noise,
                           isotropic=cfg.cbo_isotropic)
        else:
            ens = cbs_step(ens, obj, cfg.lam, cfg.beta, dt_step, noise)
        worst = float(np.max(np.linalg.norm(ens.positions, axis=1)))
        if worst > MAX_PARTICLE_NORM:
            raise BlowUpError(
                f"particle norm {worst:.3e} exceeded {MAX_PARTICLE_NORM:.1e} "
                f"at step {step}", step=step)
        if step % cfg.record_stride == 0 or step == n_steps:
            t = cfg.t_final if step == n_steps else step * cfg.dt
            wm = weighted_moments(ens, obj, cfg.beta)
            times.append(t)
            snapshots.append(ens)
            weighted.append(wm)
            recorded.append(_summaries(ens, wm))

    raw = np.array([r[0] for r in recorded])
    return TrajectoryRecord(
        times=np.array(times),
        snapshots=tuple(snapshots),
        weighted=tuple(weighted),
        raw_moments=raw,
        min_cov_eig=np.array([r[1] for r in recorded]),
        consensus_spread=np.array([r[2] for r in recorded]),
        config=cfg,
    )


def _summaries(ens: Ensemble, wm: WeightedMoments):
    norms_sq = np.einsum("jd,jd->j", ens.positions, ens.positions)
    raw = (float(norms_sq.mean()),
           float((norms_sq ** 2).mean()),
           float((norms_sq ** 3).mean()))
    min_eig = float(np.linalg.eigvalsh(wm.cov)[0])
    centered = ens.positions - ens.positions.mean(axis=0)
    spread = float(np.sum(centered * centered) / ens.j)
    return raw, min_eig, spread


def gaussian_stationary_reference(obj: Objective) -> tuple[np.ndarray, np.ndarray]:
    """Stationary Gaussian (mean, covariance) = (m, A^-1) for quadratic costs.

    Only objectives carrying a quadratic form support this; anything else
    raises UnsupportedObjectiveError.
    """
    if obj.quadratic_form is None:
        raise UnsupportedObjectiveError(
            f"objective {obj.name!r} has no Gaussian stationary reference")
    m, a = obj.quadratic_form
    return m.copy(), np.linalg.inv(a)
