# mypy: ignore-errors

import jax
import jax.numpy as jnp
import numpy as np
import pytest
from jax.flatten_util import ravel_pytree
from jax.test_util import check_grads

from tinylcn.filters import (
    DepthGuidedFilter,
    DGFilterParams,
    DilationWeights,
    d4lcn_apply,
    d4lcn_backward,
    d4lcn_forward,
    dlcn_forward,
    shift_pool,
)
from tinylcn.tensor import random_tensor
from tinylcn.verify import naive_d4lcn, numerical_gradients, relative_error


@pytest.fixture
def data():
    I = random_tensor(42, (1, 4, 8, 8))
    D = random_tensor(43, (1, 4, 8, 8))
    return I, D


def test_matches_loop_oracle(data):
    I, D = data
    p = DGFilterParams.init(4, k=3, d=3, n_f=2, seed=42)
    out, weights = d4lcn_forward(I, D, p)
    expect, expect_weights = naive_d4lcn(np.asarray(I), np.asarray(D), p)
    np.testing.assert_allclose(out, expect, rtol=0, atol=1e-12)
    np.testing.assert_allclose(weights.values, expect_weights, rtol=0, atol=1e-12)
    np.testing.assert_allclose(jnp.sum(weights.values, axis=-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_single_rate_reduces_to_local_filtering(data, k):
    I, D = data
    p = DGFilterParams.init(4, k=k, d=1, n_f=1, seed=0)
    out, _ = d4lcn_forward(I, D, p)
    np.testing.assert_allclose(out, dlcn_forward(I, D, k), rtol=0, atol=1e-15)

    p = DGFilterParams.init(4, k=k, d=1, n_f=3, seed=0)
    out, _ = d4lcn_forward(I, D, p)
    np.testing.assert_allclose(
        out, dlcn_forward(shift_pool(I, 3), D, k), rtol=0, atol=1e-15
    )


@pytest.mark.parametrize("rate", [1, 2, 3])
def test_one_hot_weights(data, rate):
    I, D = data
    d = 3
    one_hot = DilationWeights(values=jax.nn.one_hot(jnp.full((1, 4), rate - 1), d))
    out = d4lcn_apply(I, D, one_hot, k=3, n_f=2)
    expect = dlcn_forward(shift_pool(I, 2), D, 3, dilation=rate) / d
    np.testing.assert_allclose(out, expect, rtol=0, atol=1e-12)


def test_one_hot_via_bias(data):
    I, D = data
    d = 3
    p = DGFilterParams(
        conv_weights=jnp.zeros((d * 4, 4, d, d)),
        conv_bias=jnp.tile(jnp.array([0.0, 800.0, 0.0]), 4),
        k=3,
        d=d,
        n_f=2,
    )
    out, weights = d4lcn_forward(I, D, p)
    np.testing.assert_allclose(weights.values[..., 1], 1.0)
    expect = dlcn_forward(shift_pool(I, 2), D, 3, dilation=2) / d
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_linear_in_guidance(data):
    I, D1 = data
    D2 = random_tensor(44, D1.shape)
    p = DGFilterParams.init(4, seed=1)
    lhs, _ = d4lcn_forward(I, 2.0 * D1 - 0.5 * D2, p)
    rhs = 2.0 * d4lcn_forward(I, D1, p)[0] - 0.5 * d4lcn_forward(I, D2, p)[0]
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_forward_errors(data):
    I, D = data
    p = DGFilterParams.init(4, d=3)
    with pytest.raises(ValueError):
        d4lcn_forward(I, D[:, :, :6], p)
    with pytest.raises(ValueError):
        d4lcn_forward(I[:, :3], D[:, :3], p)
    with pytest.raises(ValueError):
        d4lcn_forward(I[:, :, :2, :2], D[:, :, :2, :2], p)
    with pytest.raises(ValueError):
        d4lcn_apply(I, D, DilationWeights(values=jnp.ones((1, 3, 3)) / 3))


def test_backward_zero_upstream(data):
    I, D = data
    p = DGFilterParams.init(4, seed=2)
    grad_I, grad_D, grad_p = d4lcn_backward(I, D, p, jnp.zeros_like(I))
    np.testing.assert_array_equal(grad_I, 0.0)
    np.testing.assert_array_equal(grad_D, 0.0)
    np.testing.assert_array_equal(grad_p.conv_weights, 0.0)
    np.testing.assert_array_equal(grad_p.conv_bias, 0.0)
    assert (grad_p.k, grad_p.d, grad_p.n_f) == (p.k, p.d, p.n_f)


def test_backward_product_rule(data):
    I, D = data
    g = random_tensor(7, I.shape)
    p = DGFilterParams.init(4, k=1, d=1, n_f=1, seed=0)
    grad_I, grad_D, _ = d4lcn_backward(I, D, p, g)
    np.testing.assert_allclose(grad_I, g * D, atol=1e-14)
    np.testing.assert_allclose(grad_D, g * I, atol=1e-14)


def test_backward_finite_differences():
    shape = (1, 2, 6, 6)
    I = random_tensor(7, shape)
    D = random_tensor(8, shape)
    g = random_tensor(9, shape)
    p = DGFilterParams.init(2, k=3, d=2, n_f=2, seed=7)
    p = p.replace(conv_bias=0.1 * jax.random.normal(jax.random.PRNGKey(7), (4,)))

    grad_I, grad_D, grad_p = d4lcn_backward(I, D, p, g)
    analytic, _ = ravel_pytree((grad_I, grad_D, grad_p.conv_weights, grad_p.conv_bias))

    flat, unravel = ravel_pytree((I, D, p.conv_weights, p.conv_bias))

    def objective(x):
        I_, D_, W_, b_ = unravel(x)
        out, _ = d4lcn_forward(I_, D_, p.replace(conv_weights=W_, conv_bias=b_))
        return jnp.sum(g * out)

    numeric = numerical_gradients(objective, flat, 1e-6)
    assert relative_error(analytic, numeric) <= 1e-5


def test_backward_matches_autodiff():
    shape = (2, 3, 7, 5)
    I = random_tensor(11, shape)
    D = random_tensor(12, shape)
    g = random_tensor(13, shape)
    p = DGFilterParams.init(3, k=3, d=3, n_f=2, seed=14)

    def objective(I_, D_, W_, b_):
        out, _ = d4lcn_forward(I_, D_, p.replace(conv_weights=W_, conv_bias=b_))
        return jnp.sum(g * out)

    expect = jax.grad(objective, argnums=(0, 1, 2, 3))(
        I, D, p.conv_weights, p.conv_bias
    )
    grad_I, grad_D, grad_p = d4lcn_backward(I, D, p, g)
    got = (grad_I, grad_D, grad_p.conv_weights, grad_p.conv_bias)
    for actual, want in zip(got, expect):
        np.testing.assert_allclose(actual, want, rtol=1e-10, atol=1e-12)


def test_forward_is_differentiable(data):
    I, D = data
    p = DGFilterParams.init(4, d=2, seed=3)
    check_grads(lambda D_: d4lcn_forward(I, D_, p)[0], (D,), order=1, modes=["rev"])


def test_backward_shape_check(data):
    I, D = data
    p = DGFilterParams.init(4)
    with pytest.raises(ValueError):
        d4lcn_backward(I, D, p, jnp.ones((1, 4, 8, 7)))


def test_module_variants(data):
    I, D = data
    p = DGFilterParams.init(4, k=3, d=3, n_f=2, seed=5)

    out, weights = DepthGuidedFilter(p, variant="dlcn").apply(I, D)
    assert weights is None
    np.testing.assert_allclose(out, dlcn_forward(I, D, 3))

    out = DepthGuidedFilter(p, variant="sp_dlcn")(I, D)
    np.testing.assert_allclose(out, dlcn_forward(shift_pool(I, 2), D, 3))

    module = DepthGuidedFilter(p)
    out, weights = module.apply(I, D)
    expect, expect_weights = d4lcn_forward(I, D, p)
    np.testing.assert_allclose(out, expect)
    np.testing.assert_allclose(weights.values, expect_weights.values)

    @jax.jit
    def run(W, b, I_, D_):
        return DepthGuidedFilter(p.replace(conv_weights=W, conv_bias=b))(I_, D_)

    np.testing.assert_allclose(
        run(p.conv_weights, p.conv_bias, I, D), expect, atol=1e-12
    )

    with pytest.raises(ValueError):
        DepthGuidedFilter(p, variant="resnet")
