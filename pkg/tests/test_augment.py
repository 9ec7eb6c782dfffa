import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from repaug import autodiff as ad
from repaug.augment import (DEFAULT_MENU, AugmentationSpec, Method, apply_general, augment, binary_interpolate,
                            gaussian_scale, general_augment, general_form, linear_extrapolate,
                            linear_interpolate, parse_params, sample_partners, spawn_rng, stochastic_perturb)

ALL = list(Method)
H = np.random.default_rng(1).normal(size=(6, 5))

batches = arrays(np.float64, st.tuples(st.integers(2, 7), st.integers(1, 6)),
                 elements=st.floats(-1e3, 1e3, allow_nan=False, width=64))


def _null(method):
    return AugmentationSpec(method).with_null_parameters()


@pytest.mark.parametrize("method", ALL)
def test_null_parameters_are_identity(method):
    out = augment(H, _null(method), np.random.default_rng(5))
    assert np.array_equal(out, H)


@pytest.mark.parametrize("method", ALL)
def test_specialised_equals_general_form(method):
    spec = AugmentationSpec(method)
    direct = augment(H, spec, np.random.default_rng(9))
    draw = general_form(H.shape, spec, np.random.default_rng(9))
    assert np.array_equal(direct, apply_general(H, draw))


@settings(max_examples=40, deadline=None)
@given(batches, st.sampled_from(ALL), st.integers(0, 2**32 - 1))
def test_general_form_property(h, method, seed):
    spec = AugmentationSpec(method)
    a = augment(h, spec, np.random.default_rng(seed))
    b = apply_general(h, general_form(h.shape, spec, np.random.default_rng(seed)))
    assert np.array_equal(a, b)
    assert np.array_equal(augment(h, spec.with_null_parameters(), np.random.default_rng(seed)), h)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 50), st.integers(0, 1000))
def test_partners_never_self(b, seed):
    p = sample_partners(b, np.random.default_rng(seed))
    assert p.shape == (b,)
    assert np.all(p != np.arange(b)) and np.all((0 <= p) & (p < b))


def test_partners_uniform_over_others():
    p = np.concatenate([sample_partners(4, np.random.default_rng(s)) for s in range(2000)])
    rows = np.tile(np.arange(4), 2000)
    counts = np.bincount(p[rows == 0], minlength=4)
    assert counts[0] == 0
    assert np.all(np.abs(counts[1:] / 2000 - 1 / 3) < 0.05)


def test_partners_need_two_rows():
    with pytest.raises(ValueError):
        sample_partners(1, np.random.default_rng(0))


def test_interpolate_midpoint_by_hand():
    h = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = linear_interpolate(h, np.array([1, 0]), np.array([0.5, 0.5]))
    np.testing.assert_array_equal(out, [[2.0, 3.0], [2.0, 3.0]])


def test_lambda_range_checks():
    h = np.ones((2, 2))
    with pytest.raises(ValueError):
        linear_interpolate(h, np.array([1, 0]), np.array([1.1, 1.0]))
    with pytest.raises(ValueError):
        linear_extrapolate(h, np.array([1, 0]), np.array([0.9, 1.0]))
    with pytest.raises(ValueError):
        linear_interpolate(h, np.array([0, 1]), np.array([0.5, 0.5]))  # self partner


def test_extrapolation_moves_away_from_partner():
    h = np.array([[1.0, 0.0], [0.0, 0.0]])
    out = linear_extrapolate(h, np.array([1, 0]), np.array([1.5, 1.5]))
    np.testing.assert_allclose(out[0], [1.5, 0.0])


def test_spec_defaults_and_validation():
    assert (AugmentationSpec("interp").lambda_low, AugmentationSpec("interp").lambda_high) == (0.9, 1.0)
    assert AugmentationSpec("mixed").lambda_high == 1.1
    with pytest.raises(ValueError):
        AugmentationSpec("interp", lambda_low=0.9, lambda_high=1.05)
    with pytest.raises(ValueError):
        AugmentationSpec("perturb", drop_prob=1.0)
    with pytest.raises(ValueError):
        AugmentationSpec("binary", bernoulli_prob=1.5)
    with pytest.raises(ValueError):
        AugmentationSpec("gaussian", sigma=-0.1)
    with pytest.raises(ValueError):
        AugmentationSpec("nope")
    spec = AugmentationSpec("binary", bernoulli_prob=0.4, seed=3)
    assert AugmentationSpec.from_dict(spec.to_dict()) == spec


def test_general_augment_shape_check():
    with pytest.raises(ValueError):
        general_augment(H, H[:3], np.ones(H.shape), np.zeros(H.shape))


def test_perturb_keeps_expectation():
    big = np.ones((400, 250))
    out = stochastic_perturb(big, 0.1, np.random.default_rng(0))
    assert set(np.unique(out)) <= {0.0, 1 / 0.9}
    assert abs(out.mean() - 1.0) < 0.01
    assert abs((out == 0).mean() - 0.1) < 0.01


def test_binary_swap_rate_and_values():
    h = np.vstack([np.zeros(20000), np.ones(20000)])
    out = binary_interpolate(h, np.array([1, 0]), 0.25, np.random.default_rng(2))
    assert abs(out[0].mean() - 0.25) < 0.01
    assert set(np.unique(out)) <= {0.0, 1.0}


def test_gaussian_scale_spread():
    out = gaussian_scale(np.ones((200, 200)), 0.1, np.random.default_rng(4))
    assert abs(out.std() - 0.1) < 0.005


def test_tensor_inputs_keep_gradients():
    x = ad.Tensor(H, requires_grad=True)
    for method in ALL:
        out = augment(x, AugmentationSpec(method), np.random.default_rng(0))
        assert isinstance(out, ad.Tensor)
        np.testing.assert_array_equal(out.data, augment(H, AugmentationSpec(method), np.random.default_rng(0)))
        g = ad.backward(out.sum(), wrt=[x])[x]
        assert np.all(np.isfinite(g))


def test_parse_params():
    spec = parse_params("interp", "lambda=0.5,seed=4")
    assert spec.lambda_low == spec.lambda_high == 0.5 and spec.seed == 4
    assert parse_params("perturb", "p=0.2").drop_prob == 0.2
    assert parse_params("gaussian", "").sigma == 0.1
    with pytest.raises(ValueError):
        parse_params("gaussian", "tau=1")
    with pytest.raises(ValueError):
        parse_params("unknown", "")


def test_spawn_rng_streams_are_independent_and_reproducible():
    a = spawn_rng(3, 1, 2, 0).random(4)
    assert np.array_equal(a, spawn_rng(3, 1, 2, 0).random(4))
    assert not np.array_equal(a, spawn_rng(3, 1, 2, 1).random(4))


def test_default_menu_is_the_four_training_methods():
    assert {m.value for m in DEFAULT_MENU} == {"mixed", "perturb", "binary", "gaussian"}
