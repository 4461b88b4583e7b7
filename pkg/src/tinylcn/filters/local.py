"""
Depth-guided depthwise local filtering. Each output pixel is the input pixel
multiplied by the average of the guidance map ``D`` over a ``k x k`` window,
so the effective filter differs for every pixel, channel and image. Two
implementations are provided: a ``"naive"`` per-pixel loop that serves as the
reference, and a ``"fast"`` one that builds the window sum from ``k * k``
shifted copies of ``D``.
"""

from __future__ import annotations

__all__ = ["window_sum", "dlcn_forward", "shift_pool", "shift_pool_adjoint"]

from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from tinylcn.helpers import JAXArray, check_odd
from tinylcn.tensor import add, as_tensor, channel_rotate, multiply, shift2d, shift_grid


@partial(jax.jit, static_argnames=("k", "dilation"))
def window_sum(D: JAXArray, k: int, dilation: int = 1) -> JAXArray:
    """Sum ``D`` over every offset of the (dilated) ``k x k`` shift grid"""
    total = jnp.zeros_like(D)
    for v in shift_grid(k, dilation):
        total = add(total, shift2d(D, v))
    return total


def dlcn_forward(
    I: JAXArray,
    D: JAXArray,
    k: int,
    mode: str = "fast",
    *,
    dilation: int = 1,
) -> JAXArray:
    r"""Apply depth-guided depthwise local filtering

    .. math::

        I' = I \odot \frac{1}{k^2} \sum_{(g_i, g_j)} D^{(g_i, g_j)}

    Args:
        I: The feature tensor with shape ``(n, c, h, w)``.
        D: The guidance tensor; must have the same shape as ``I``.
        k: The (odd) window size.
        mode: ``"fast"`` for the shift-based implementation or ``"naive"`` for
            the per-pixel reference loop.
        dilation: Spacing between window taps. The normalization stays
            ``1 / k**2``.
    """
    I = as_tensor(I)
    D = as_tensor(D)
    if I.shape != D.shape:
        raise ValueError(
            f"I and D must have the same shape; got {I.shape} and {D.shape}"
        )
    k = check_odd(k)
    if dilation < 1:
        raise ValueError(f"'dilation' must be >= 1; got {dilation}")
    if mode == "fast":
        return _dlcn_fast(I, D, k, dilation)
    if mode == "naive":
        return jnp.asarray(_dlcn_naive(np.asarray(I), np.asarray(D), k, dilation))
    raise ValueError(f"Unknown mode '{mode}'; expected 'naive' or 'fast'")


@partial(jax.jit, static_argnames=("k", "dilation"))
def _dlcn_fast(I: JAXArray, D: JAXArray, k: int, dilation: int) -> JAXArray:
    return multiply(I, window_sum(D, k, dilation) / (k * k))


def _dlcn_naive(I: np.ndarray, D: np.ndarray, k: int, dilation: int) -> np.ndarray:
    _, _, h, w = I.shape
    r = (k - 1) // 2
    out = np.zeros_like(I)
    for y in range(h):
        for x in range(w):
            acc = np.zeros(I.shape[:2])
            for gi in range(-r, r + 1):
                for gj in range(-r, r + 1):
                    sy = y - gi * dilation
                    sx = x - gj * dilation
                    if 0 <= sy < h and 0 <= sx < w:
                        acc += D[:, :, sy, sx]
            out[:, :, y, x] = I[:, :, y, x] * (acc / (k * k))
    return out


def shift_pool(I: JAXArray, n_f: int) -> JAXArray:
    """Average a tensor with ``n_f - 1`` cyclically channel-rotated copies

    Output channel ``c`` is the mean of input channels ``c, c + 1, ...,
    c + n_f - 1`` (modulo the channel count).
    """
    I = as_tensor(I)
    n_f = int(n_f)
    if not 1 <= n_f <= I.shape[1]:
        raise ValueError(f"'n_f' must be in [1, {I.shape[1]}]; got {n_f}")
    return _shift_pool(I, n_f)


@partial(jax.jit, static_argnames=("n_f",))
def _shift_pool(I: JAXArray, n_f: int) -> JAXArray:
    total = I
    for s in range(1, n_f):
        total = total + channel_rotate(I, s)
    return total / n_f


@partial(jax.jit, static_argnames=("n_f",))
def shift_pool_adjoint(G: JAXArray, n_f: int) -> JAXArray:
    """The transpose of :func:`shift_pool` applied to a cotangent ``G``"""
    total = G
    for s in range(1, n_f):
        total = total + channel_rotate(G, -s)
    return total / n_f
