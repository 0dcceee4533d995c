import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from consensus_dyn import (
    BUILTIN_OBJECTIVES,
    GrowthCertificate,
    PAIR_NORM_FLOOR,
    UnverifiedCertificateError,
    blackbox_objective,
    bound_constants,
    builtin_objective,
    default_pair_sampler,
    eval_batch,
    eval_objective,
    make_quadratic,
    make_rastrigin,
    verify_assumptions,
)


def test_builtin_ids():
    assert set(BUILTIN_OBJECTIVES) == {"quadratic", "quadratic-shifted", "rastrigin"}


# --- quadratic ----------------------------------------------------------


def test_centered_unit_quadratic_certificate():
    obj = make_quadratic(np.zeros(2), np.eye(2))
    cert = obj.certificate
    assert cert.verified
    assert (cert.lip, cert.f_star, cert.c_u, cert.c_l, cert.big_m) == (
        1.0, 0.0, 0.5, 0.5, 1.0)
    assert eval_objective(obj, np.array([1.0, 1.0])) == pytest.approx(1.0)
    assert np.array_equal(obj.analytic_minimizer, np.zeros(2))


def test_quadratic_value_and_batch_agree():
    m = np.array([1.0, -2.0, 0.5])
    a = np.diag([1.0, 2.0, 4.0])
    obj = make_quadratic(m, a)
    pts = np.random.default_rng(4).normal(size=(40, 3))
    batch = eval_batch(obj, pts)
    loop = np.array([eval_objective(obj, p) for p in pts])
    assert np.allclose(batch, loop, rtol=1e-14)
    assert eval_objective(obj, m) == 0.0


def test_shifted_quadratic_certificate_is_conservative():
    m = np.array([2.0, 0.0])
    obj = make_quadratic(m, np.eye(2))
    cert = obj.certificate
    assert cert.verified
    assert cert.f_star == 0.0
    assert cert.big_m >= 1.0
    # the quadratic upper branch must dominate the true value on the shell:
    # f(x) <= c_u (1 + |x|^2) wherever |x| >= big_m
    rng = np.random.default_rng(11)
    for _ in range(200):
        x = rng.normal(size=2)
        x *= (cert.big_m + rng.uniform(0.0, 10.0)) / np.linalg.norm(x)
        fx = eval_objective(obj, x)
        n2 = float(x @ x)
        assert fx <= cert.c_u * (1.0 + n2) * (1.0 + 1e-12)
        assert fx >= cert.c_l * n2 * (1.0 - 1e-12)


def test_make_quadratic_rejects_bad_matrices():
    with pytest.raises(ValueError):
        make_quadratic(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        make_quadratic(np.zeros(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        make_quadratic(np.zeros(2), np.diag([1.0, 0.0]))


# --- rastrigin ----------------------------------------------------------


def test_rastrigin_basics():
    obj = make_rastrigin(3, amplitude=1.0)
    assert eval_objective(obj, np.zeros(3)) == pytest.approx(0.0)
    assert obj.certificate.verified
    assert obj.certificate.lip == pytest.approx(0.5 + 2.0 * math.pi ** 2)
    assert obj.certificate.c_u == pytest.approx(max(0.5, 6.0))
    # local minima near integer lattice points stay positive
    assert eval_objective(obj, np.array([1.0, 0.0, 0.0])) > 0.0
    pts = np.random.default_rng(5).normal(size=(30, 3))
    assert np.allclose(eval_batch(obj, pts),
                       [eval_objective(obj, p) for p in pts], rtol=1e-13)


def test_rastrigin_rejects_bad_amplitude():
    with pytest.raises(ValueError):
        make_rastrigin(2, amplitude=0.0)
    with pytest.raises(ValueError):
        make_rastrigin(2, amplitude=-1.0)


# --- dispatch -----------------------------------------------------------


def test_builtin_objective_dispatch_rules():
    with pytest.raises(ValueError):
        builtin_objective("nope", 2)
    with pytest.raises(ValueError):
        builtin_objective("quadratic", 2, m=np.ones(2))
    with pytest.raises(ValueError):
        builtin_objective("quadratic-shifted", 2, m=np.zeros(2))
    with pytest.raises(ValueError):
        builtin_objective("rastrigin", 2, a=np.eye(2))
    # shifted default target is the all-ones point
    obj = builtin_objective("quadratic-shifted", 3)
    assert np.array_equal(obj.analytic_minimizer, np.ones(3))


def test_eval_objective_validates_input():
    obj = builtin_objective("quadratic", 2)
    with pytest.raises(ValueError):
        eval_objective(obj, np.zeros(3))
    with pytest.raises(ValueError):
        eval_objective(obj, np.array([np.inf, 0.0]))


# --- blackbox -----------------------------------------------------------


def test_blackbox_certificate_is_unverified():
    obj = blackbox_objective(lambda x: float(x @ x), 2)
    assert not obj.certificate.verified
    with pytest.raises(UnverifiedCertificateError):
        bound_constants(obj.certificate, 1.0)


def test_blackbox_rejects_preverified_certificate():
    cert = GrowthCertificate(lip=1.0, f_star=0.0, c_u=1.0, c_l=1.0,
                             big_m=1.0, verified=True)
    with pytest.raises(ValueError):
        blackbox_objective(lambda x: 0.0, 2, certificate=cert)


# --- assumption checks --------------------------------------------------


def test_default_pair_sampler_respects_floor():
    rng = np.random.default_rng(0)
    x, y, singles = default_pair_sampler(rng, 3, 1.0, 500)
    assert x.shape == (500, 3) and y.shape == (500, 3)
    norms = np.linalg.norm(x, axis=1) + np.linalg.norm(y, axis=1)
    assert norms.min() >= PAIR_NORM_FLOOR - 1e-12
    r = np.linalg.norm(singles, axis=1)
    assert r.min() > 1.0 and r.max() <= 10.0


@pytest.mark.parametrize("obj_id", BUILTIN_OBJECTIVES)
@pytest.mark.parametrize("dim", [1, 2, 4])
def test_builtin_objectives_have_zero_violations(obj_id, dim):
    obj = builtin_objective(obj_id, dim)
    report = verify_assumptions(obj, n=800, seed=dim)
    assert report.total_violations == 0


def test_corrupted_certificate_is_caught():
    obj = builtin_objective("quadratic", 2)
    bad = GrowthCertificate(lip=obj.certificate.lip, f_star=0.0,
                            c_u=obj.certificate.c_u, c_l=10.0, big_m=1.0,
                            verified=True)
    from dataclasses import replace
    report = verify_assumptions(replace(obj, certificate=bad), n=500, seed=3)
    assert report.total_violations > 0


def test_verify_assumptions_requires_samples():
    obj = builtin_objective("quadratic", 2)
    with pytest.raises(ValueError):
        verify_assumptions(obj, n=0)


# --- certificate validation ---------------------------------------------


def test_certificate_rejects_nonfinite_fields():
    with pytest.raises(ValueError):
        GrowthCertificate(lip=np.nan, f_star=0.0, c_u=1.0, c_l=1.0,
                          big_m=1.0, verified=True)
    with pytest.raises(ValueError):
        GrowthCertificate(lip=1.0, f_star=0.0, c_u=-1.0, c_l=1.0,
                          big_m=1.0, verified=True)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, (4,), elements=st.floats(-5, 5)),
       st.integers(min_value=0, max_value=2**32 - 1))
def test_quadratic_matches_direct_formula(m, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((4, 4))
    a = g @ g.T / 4.0 + 0.5 * np.eye(4)
    obj = make_quadratic(m, a)
    x = rng.standard_normal(4)
    direct = 0.5 * float((x - m) @ a @ (x - m))
    assert eval_objective(obj, x) == pytest.approx(direct, rel=1e-12, abs=1e-12)
