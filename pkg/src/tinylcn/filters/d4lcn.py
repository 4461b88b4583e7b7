r"""
The full depth-guided dynamic-depthwise-dilated local filtering operator.
A module application runs three stages:

1. shift-pooling of the feature map ``I`` (see
   :func:`tinylcn.filters.shift_pool`), giving ``P``,
2. adaptive dilation weights ``A`` computed from ``P``,
3. the filtering itself,

.. math::

    I' = \frac{1}{d \cdot k \cdot k}\,P \odot \sum_{w=1}^{d} A^w(P)
        \sum_{(g_i, g_j)} D^{(g_i w,\,g_j w)}

The backward pass is derived by hand; :func:`d4lcn_backward` returns the
gradients of ``sum(upstream * I')`` with respect to ``I``, ``D`` and the
parameters of the adaptive function.
"""

from __future__ import annotations

__all__ = ["d4lcn_forward", "d4lcn_apply", "d4lcn_backward", "DepthGuidedFilter"]

from functools import partial
from typing import Any

import jax
import jax.numpy as jnp

from tinylcn.filters.adaptive import (
    DGFilterParams,
    DilationWeights,
    _adaptive_weights,
    _check_input,
    unpool,
)
from tinylcn.filters.local import (
    _shift_pool,
    dlcn_forward,
    shift_pool,
    shift_pool_adjoint,
    window_sum,
)
from tinylcn.helpers import JAXArray, check_odd, dataclass, field
from tinylcn.tensor import add, as_tensor, multiply


def _validate(I: JAXArray, D: JAXArray, p: DGFilterParams) -> tuple[JAXArray, JAXArray]:
    I = as_tensor(I)
    D = as_tensor(D)
    if I.shape != D.shape:
        raise ValueError(
            f"I and D must have the same shape; got {I.shape} and {D.shape}"
        )
    _check_input(I, p)
    return I, D


def d4lcn_forward(
    I: JAXArray, D: JAXArray, p: DGFilterParams
) -> tuple[JAXArray, DilationWeights]:
    """Apply the operator and return the output with its dilation weights

    Args:
        I: The feature tensor with shape ``(n, c, h, w)``; ``c`` must equal
            ``p.c`` and ``h, w >= p.d``.
        D: The depth-derived guidance tensor with the same shape as ``I``.
        p: The operator parameters.

    Returns:
        The filtered tensor and the :class:`DilationWeights` that produced it.
    """
    I, D = _validate(I, D, p)
    out, weights = _forward(I, D, p.conv_weights, p.conv_bias, p.k, p.d, p.n_f)
    return out, DilationWeights(values=weights)


@partial(jax.jit, static_argnames=("k", "d", "n_f"))
def _forward(
    I: JAXArray,
    D: JAXArray,
    conv_weights: JAXArray,
    conv_bias: JAXArray,
    k: int,
    d: int,
    n_f: int,
) -> tuple[JAXArray, JAXArray]:
    P = _shift_pool(I, n_f)
    A, _, _ = _adaptive_weights(P, conv_weights, conv_bias, d)
    mix = _mix(A, D, k, d)
    return P * (mix / (d * k * k)), A


def d4lcn_apply(
    I: JAXArray, D: JAXArray, weights: DilationWeights, *, k: int = 3, n_f: int = 2
) -> JAXArray:
    """Filter with given dilation weights instead of computed ones

    With one-hot weights selecting rate ``w`` this is ``1 / d`` times
    :func:`tinylcn.filters.dlcn_forward` with ``dilation=w`` applied to the
    shift-pooled features.
    """
    I, D = as_tensor(I), as_tensor(D)
    if I.shape != D.shape:
        raise ValueError(
            f"I and D must have the same shape; got {I.shape} and {D.shape}"
        )
    A = jnp.asarray(weights.values, dtype=jnp.float64)
    if A.shape[:2] != I.shape[:2]:
        raise ValueError(f"Weights of shape {A.shape} do not match the input {I.shape}")
    k = check_odd(k)
    if not 1 <= n_f <= I.shape[1]:
        raise ValueError(f"'n_f' must be in [1, {I.shape[1]}]; got {n_f}")
    return _apply(I, D, A, k, n_f)


@partial(jax.jit, static_argnames=("k", "n_f"))
def _apply(I: JAXArray, D: JAXArray, A: JAXArray, k: int, n_f: int) -> JAXArray:
    d = A.shape[-1]
    P = _shift_pool(I, n_f)
    return multiply(P, _mix(A, D, k, d) / (d * k * k))


def _mix(A: JAXArray, D: JAXArray, k: int, d: int) -> JAXArray:
    mix = jnp.zeros_like(D)
    for w in range(1, d + 1):
        mix = add(mix, A[:, :, w - 1, None, None] * window_sum(D, k, w))
    return mix


def d4lcn_backward(
    I: JAXArray, D: JAXArray, p: DGFilterParams, upstream_grad: JAXArray
) -> tuple[JAXArray, JAXArray, DGFilterParams]:
    """Hand-derived gradients of ``sum(upstream_grad * I')``

    The max-pooling stage routes its cotangent to the selected element of each
    bucket (the first maximum in scan order).

    Returns:
        ``(grad_I, grad_D, grad_params)`` where ``grad_params`` is a
        :class:`DGFilterParams` holding the gradients of ``conv_weights`` and
        ``conv_bias`` and the same hyperparameters as ``p``.
    """
    I, D = _validate(I, D, p)
    upstream_grad = as_tensor(upstream_grad)
    if upstream_grad.shape != I.shape:
        raise ValueError(
            f"upstream_grad must match the output shape {I.shape}; "
            f"got {upstream_grad.shape}"
        )
    grad_I, grad_D, grad_W, grad_b = _backward(
        I, D, p.conv_weights, p.conv_bias, upstream_grad, p.k, p.d, p.n_f
    )
    return grad_I, grad_D, p.replace(conv_weights=grad_W, conv_bias=grad_b)


@partial(jax.jit, static_argnames=("k", "d", "n_f"))
def _backward(
    I: JAXArray,
    D: JAXArray,
    conv_weights: JAXArray,
    conv_bias: JAXArray,
    g: JAXArray,
    k: int,
    d: int,
    n_f: int,
) -> tuple[JAXArray, JAXArray, JAXArray, JAXArray]:
    n, c = I.shape[:2]
    norm = d * k * k

    # Forward pass, keeping the intermediates
    P = _shift_pool(I, n_f)
    A, pooled, indices = _adaptive_weights(P, conv_weights, conv_bias, d)
    sums = [window_sum(D, k, w) for w in range(1, d + 1)]
    mix = jnp.zeros_like(D)
    for w in range(d):
        mix = mix + A[:, :, w, None, None] * sums[w]

    # Filtering stage
    grad_P = g * mix / norm
    gp = g * P / norm
    grad_A = jnp.stack([jnp.sum(gp * s, axis=(2, 3)) for s in sums], axis=-1)
    grad_D = jnp.zeros_like(D)
    for w in range(d):
        # The shift grid is symmetric so the adjoint of the window sum is itself
        grad_D = grad_D + window_sum(gp * A[:, :, w, None, None], k, w + 1)

    # Softmax, then the 1x1-output convolution
    grad_z = A * (grad_A - jnp.sum(A * grad_A, axis=-1, keepdims=True))
    grad_z = grad_z.reshape(n, c * d)
    grad_W = jnp.einsum("no,ncij->ocij", grad_z, pooled)
    grad_b = jnp.sum(grad_z, axis=0)
    grad_pooled = jnp.einsum("no,ocij->ncij", grad_z, conv_weights)

    # Max-pooling, then shift-pooling
    grad_P = grad_P + unpool(grad_pooled, indices, P.shape)
    grad_I = shift_pool_adjoint(grad_P, n_f)
    return grad_I, grad_D, grad_W, grad_b


@dataclass
class DepthGuidedFilter:
    """A depth-guided filtering module with switchable components

    The ``variant`` selects a member of the operator family:

    - ``"dlcn"``: plain depth-guided depthwise local filtering,
    - ``"sp_dlcn"``: the same, applied to the shift-pooled features,
    - ``"d4lcn"``: shift-pooling plus adaptive dilation (the full operator).

    Args:
        params: The operator parameters; only ``k`` and ``n_f`` are used by
            the simpler variants.
        variant: One of the names above.
    """

    params: DGFilterParams
    variant: str = field(pytree_node=False, default="d4lcn")

    def __post_init__(self) -> None:
        if self.variant not in ("dlcn", "sp_dlcn", "d4lcn"):
            raise ValueError(f"Unknown variant '{self.variant}'")

    def __call__(self, I: JAXArray, D: JAXArray) -> JAXArray:
        return self.apply(I, D)[0]

    def apply(self, I: JAXArray, D: JAXArray) -> tuple[JAXArray, Any]:
        """Run the module, returning the output and the dilation weights

        The weights are ``None`` for the variants without adaptive dilation.
        """
        p = self.params
        if self.variant == "d4lcn":
            return d4lcn_forward(I, D, p)
        if self.variant == "sp_dlcn":
            I = shift_pool(I, p.n_f)
        return dlcn_forward(I, D, p.k), None
