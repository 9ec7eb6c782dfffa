import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repaug.milab import (CriticConfig, GaussianPairSource, sample_pairs, theorem1_ceiling, theorem2_ceiling,
                          verify_theorem1, verify_theorem2)

TINY = CriticConfig(hidden=16, embed=8, epochs=1, steps_per_epoch=30, eval_batches=5)


def test_true_mi_closed_form():
    assert abs(GaussianPairSource(8, 0.9).true_mi - (-4 * math.log(0.19))) < 1e-12
    assert abs(GaussianPairSource(8, 0.9).true_mi - 6.643) < 1e-3
    assert GaussianPairSource(3, 0.0).true_mi == 0.0
    mixed = GaussianPairSource(2, [0.5, -0.5])
    assert abs(mixed.true_mi + math.log(0.75)) < 1e-12


def test_invalid_rho():
    for bad in (1.0, -1.0, 1.5, float("nan")):
        with pytest.raises(ValueError):
            GaussianPairSource(4, bad)
    with pytest.raises(ValueError):
        GaussianPairSource(3, [0.1, 0.2])
    with pytest.raises(ValueError):
        sample_pairs(GaussianPairSource(2, 0.5), 0)


def test_independent_control_has_no_correlation():
    q, c = sample_pairs(GaussianPairSource(4, 0.0), 10_000, np.random.default_rng(0))
    corr = [np.corrcoef(q[:, k], c[:, k])[0, 1] for k in range(4)]
    assert max(abs(x) for x in corr) < 0.05


def test_sample_covariance_converges():
    n = 20_000
    rho = np.array([0.9, -0.3, 0.0])
    q, c = sample_pairs(GaussianPairSource(3, rho), n, np.random.default_rng(1))
    tol = 3 / math.sqrt(n)
    for k in range(3):
        cov = np.cov(q[:, k], c[:, k])
        assert abs(cov[0, 0] - 1) < 3 * tol and abs(cov[1, 1] - 1) < 3 * tol
        assert abs(cov[0, 1] - rho[k]) < tol


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 512), st.integers(1, 30), st.floats(0.05, 1.0))
def test_theorem2_ceiling_dominates(b, n, alpha):
    t1, t2 = theorem1_ceiling(b), theorem2_ceiling(b, n, alpha)
    assert t2 >= t1 - 1e-12
    if n > 1 or alpha < 1:
        assert t2 > t1


def test_ceiling_equality_case():
    assert theorem2_ceiling(64, 1, 1.0) == theorem1_ceiling(64)


def test_untrained_bound_is_near_zero():
    src = GaussianPairSource(4, 0.9)
    rep = verify_theorem1(src, 32, CriticConfig(hidden=16, embed=8, epochs=0, steps_per_epoch=0, eval_batches=5))
    assert abs(rep.bound) < 0.5 and rep.bound <= rep.true_mi


def test_small_bound_runs_are_sound():
    src = GaussianPairSource(4, 0.8)
    r1 = verify_theorem1(src, 16, TINY, seed=1)
    r2 = verify_theorem2(src, 16, 2, 0.95, TINY, seed=1)
    for r in (r1, r2):
        assert not r.violated()
        assert r.bound <= r.ceiling + 1e-12
        assert r.to_dict()["margin"] == pytest.approx(r.true_mi - r.bound)
    assert (r2.alpha, r2.beta, r2.copies) == (0.95, pytest.approx(0.05), 2)


def test_lambda_one_collapses_to_log_nb():
    src = GaussianPairSource(2, 0.5)
    r = verify_theorem2(src, 8, 3, 1.0, TINY, seed=0)
    assert r.bound == pytest.approx(math.log(24) - r.loss)


def test_theorem2_argument_checks():
    src = GaussianPairSource(2, 0.5)
    for lam in (0.0, 1.2):
        with pytest.raises(ValueError):
            verify_theorem2(src, 8, 2, lam, TINY)
    with pytest.raises(ValueError):
        verify_theorem2(src, 8, 0, 0.95, TINY)
    with pytest.raises(ValueError):
        verify_theorem1(src, 1, TINY)


def test_negative_mi_estimates_are_small_and_non_negative():
    src = GaussianPairSource(4, 0.8)
    r = verify_theorem2(src, 16, 2, 0.95, TINY, seed=2, estimate_negative_mi=True)
    assert all(0 <= x < 0.3 for x in r.negative_mi)


def test_injected_loss_offset_is_flagged():
    src = GaussianPairSource(2, 0.5)
    r = verify_theorem1(src, 8, TINY, loss_offset=10.0)
    assert r.violated()


def test_runs_are_deterministic():
    src = GaussianPairSource(3, 0.7)
    assert verify_theorem1(src, 8, TINY, seed=3).loss == verify_theorem1(src, 8, TINY, seed=3).loss
