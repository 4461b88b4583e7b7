"""
Every feature map handled by ``tinylcn`` is a plain 4-axis ``jax`` array laid
out as ``(n, c, h, w)``: batch, channels, rows and columns, with the column axis
varying fastest. This module collects the handful of operations the filtering
module is built from: zero-padded spatial shifts, cyclic channel rotation,
shape-checked elementwise arithmetic and reproducible random fill. All of
them are pure and return new arrays.
"""

from __future__ import annotations

__all__ = [
    "Tensor",
    "ShiftVector",
    "as_tensor",
    "shift2d",
    "channel_rotate",
    "shift_grid",
    "multiply",
    "add",
    "random_tensor",
]

from functools import partial
from typing import NamedTuple

import jax
import jax.numpy as jnp
from jax import lax

from tinylcn.helpers import JAXArray, check_odd, prng_key

Tensor = JAXArray


class ShiftVector(NamedTuple):
    """An integer ``(row, column)`` offset used by :func:`shift2d`"""

    gi: int
    gj: int


def as_tensor(t: JAXArray) -> jax.Array:
    """Coerce an array-like to a float64 ``(n, c, h, w)`` tensor

    Raises:
        ValueError: If the input is not 4-dimensional or has an empty axis.
    """
    t = jnp.asarray(t, dtype=jnp.float64)
    if t.ndim != 4:
        raise ValueError(f"Tensors must have 4 axes (n, c, h, w); got ndim={t.ndim}")
    if any(s < 1 for s in t.shape):
        raise ValueError(f"All tensor extents must be >= 1; got {t.shape}")
    return t


@partial(jax.jit, static_argnums=(1, 2))
def _shift2d(t: JAXArray, gi: int, gj: int) -> JAXArray:
    # Negative padding crops, so padding the leading edge by ``gi`` and the
    # trailing edge by ``-gi`` moves the content down by ``gi`` rows.
    zero = jnp.zeros((), dtype=t.dtype)
    return lax.pad(t, zero, ((0, 0, 0), (0, 0, 0), (gi, -gi, 0), (gj, -gj, 0)))


def shift2d(t: JAXArray, v: tuple[int, int]) -> JAXArray:
    """Shift a tensor spatially with zero padding at the borders

    The output satisfies ``out[n, c, y, x] = t[n, c, y - gi, x - gj]`` whenever
    the source index is in bounds and zero otherwise, so positive offsets move
    content down and to the right.

    Args:
        t: The input tensor with shape ``(n, c, h, w)``.
        v: The integer offset ``(gi, gj)``. Any value is valid; offsets larger
            than the image produce an all-zero tensor.
    """
    gi, gj = int(v[0]), int(v[1])
    if gi == 0 and gj == 0:
        return t
    h, w = t.shape[-2:]
    if abs(gi) >= h or abs(gj) >= w:
        return jnp.zeros_like(t)
    return _shift2d(t, gi, gj)


def channel_rotate(t: JAXArray, s: int) -> JAXArray:
    """Cyclically rotate the channel axis so ``out[:, c] = t[:, (c + s) % C]``"""
    return jnp.roll(t, -int(s), axis=1)


def shift_grid(k: int, dilation: int = 1) -> list[ShiftVector]:
    """The ``k * k`` offsets of a ``k x k`` window, scaled by ``dilation``

    The offsets run over ``-(k - 1) / 2, ..., (k - 1) / 2`` on each axis, rows
    outermost.
    """
    k = check_odd(k)
    r = (k - 1) // 2
    return [
        ShiftVector(gi * dilation, gj * dilation)
        for gi in range(-r, r + 1)
        for gj in range(-r, r + 1)
    ]


def multiply(a: JAXArray, b: JAXArray) -> JAXArray:
    if jnp.shape(a) != jnp.shape(b):
        raise ValueError(f"Shape mismatch: {jnp.shape(a)} vs {jnp.shape(b)}")
    return jnp.multiply(a, b)


def add(a: JAXArray, b: JAXArray) -> JAXArray:
    if jnp.shape(a) != jnp.shape(b):
        raise ValueError(f"Shape mismatch: {jnp.shape(a)} vs {jnp.shape(b)}")
    return jnp.add(a, b)


def random_tensor(
    seed: int,
    shape: tuple[int, int, int, int],
    *,
    minval: float | None = None,
    maxval: float | None = None,
    streams: tuple[int, ...] = (),
) -> jax.Array:
    """Draw a reproducible random tensor from an unsigned 64-bit seed

    With no bounds the entries are standard normal; with ``minval`` and
    ``maxval`` they are uniform on that interval. ``streams`` selects an
    independent draw for the same seed, see :func:`tinylcn.helpers.prng_key`.
    """
    key = prng_key(seed, *streams)
    if minval is None and maxval is None:
        t = jax.random.normal(key, shape, dtype=jnp.float64)
    else:
        lo = 0.0 if minval is None else minval
        hi = 1.0 if maxval is None else maxval
        t = jax.random.uniform(key, shape, dtype=jnp.float64, minval=lo, maxval=hi)
    return as_tensor(t)
