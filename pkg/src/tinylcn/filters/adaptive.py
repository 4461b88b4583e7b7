"""
The adaptive dilation function. It looks at the (pooled) feature map and
assigns every channel a softmax distribution over the dilation rates
``1, ..., d``:

1. adaptive max pooling of ``I`` down to ``d x d`` per channel,
2. a ``d x d`` convolution without padding producing ``d * c`` logits,
3. a reshape to ``(c, d)`` and a softmax over the dilation axis.
"""

from __future__ import annotations

__all__ = [
    "DGFilterParams",
    "DilationWeights",
    "adaptive_max_pool",
    "unpool",
    "adaptive_weights",
    "dilation_histogram",
]

from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from tinylcn.helpers import JAXArray, check_odd, dataclass, field, prng_key
from tinylcn.tensor import as_tensor


@dataclass
class DGFilterParams:
    """Parameters and hyperparameters of the depth-guided filtering operator

    You'll usually want :func:`DGFilterParams.init` rather than the
    constructor.

    Args:
        conv_weights: The adaptive function's convolution weights with shape
            ``(d * c, c, d, d)``.
        conv_bias: The convolution bias with shape ``(d * c,)``.
        k: The odd window size.
        d: The maximum dilation rate.
        n_f: The number of channels mixed by shift-pooling.
    """

    conv_weights: JAXArray
    conv_bias: JAXArray
    k: int = field(pytree_node=False, default=3)
    d: int = field(pytree_node=False, default=3)
    n_f: int = field(pytree_node=False, default=2)

    def __post_init__(self) -> None:
        check_odd(self.k)
        if self.d < 1:
            raise ValueError(f"'d' must be >= 1; got {self.d}")
        shape = jnp.shape(self.conv_weights)
        if len(shape) != 4 or shape[0] != self.d * shape[1] or shape[2:] != (
            self.d,
            self.d,
        ):
            raise ValueError(
                "conv_weights must have shape (d * c, c, d, d) with "
                f"d={self.d}; got {shape}"
            )
        if jnp.shape(self.conv_bias) != (shape[0],):
            raise ValueError(
                f"conv_bias must have shape ({shape[0]},); "
                f"got {jnp.shape(self.conv_bias)}"
            )
        if not 1 <= self.n_f <= shape[1]:
            raise ValueError(f"'n_f' must be in [1, {shape[1]}]; got {self.n_f}")

    @property
    def c(self) -> int:
        return int(jnp.shape(self.conv_weights)[1])

    @classmethod
    def init(
        cls,
        c: int,
        *,
        k: int = 3,
        d: int = 3,
        n_f: int = 2,
        seed: int = 0,
        streams: tuple[int, ...] = (),
    ) -> DGFilterParams:
        """Seeded initialization

        The weights are uniform on ``[-1 / (d * sqrt(c)), 1 / (d * sqrt(c))]``
        and the bias is zero. ``seed`` may be any unsigned 64-bit integer.
        """
        bound = 1.0 / (d * np.sqrt(c))
        weights = jax.random.uniform(
            prng_key(seed, *streams),
            (d * c, c, d, d),
            dtype=jnp.float64,
            minval=-bound,
            maxval=bound,
        )
        return cls(
            conv_weights=weights,
            conv_bias=jnp.zeros(d * c, dtype=jnp.float64),
            k=k,
            d=d,
            n_f=n_f,
        )


@dataclass
class DilationWeights:
    """Per-channel mixing weights over the dilation rates

    Args:
        values: An array with shape ``(n, c, d)``; every ``(n, c)`` row is a
            probability distribution over the rates ``1, ..., d``.
    """

    values: JAXArray

    @property
    def d(self) -> int:
        return int(jnp.shape(self.values)[-1])

    def to_tensor(self) -> JAXArray:
        """The weights as an ``(n, c, d, 1)`` tensor, ready for serialization"""
        return jnp.asarray(self.values)[..., None]

    @classmethod
    def from_tensor(cls, t: JAXArray) -> DilationWeights:
        t = as_tensor(t)
        if t.shape[-1] != 1:
            raise ValueError(f"Expected an (n, c, d, 1) tensor; got {t.shape}")
        return cls(values=t[..., 0])


def _buckets(size: int, d: int) -> list[tuple[int, int]]:
    return [(i * size // d, (i + 1) * size // d) for i in range(d)]


@partial(jax.jit, static_argnames=("d",))
def adaptive_max_pool(x: JAXArray, d: int) -> tuple[JAXArray, JAXArray]:
    """Max-pool each channel of ``x`` down to a ``d x d`` grid

    Bucket ``i`` along an axis of length ``L`` covers
    ``floor(i * L / d) <= index < floor((i + 1) * L / d)``.

    Returns:
        The pooled values with shape ``(n, c, d, d)`` and the flat ``h * w``
        index of each selected element, with ties going to the first element
        in row-major scan order.
    """
    n, c, h, w = x.shape
    values = []
    indices = []
    for r0, r1 in _buckets(h, d):
        row_values = []
        row_indices = []
        for c0, c1 in _buckets(w, d):
            patch = x[:, :, r0:r1, c0:c1].reshape(n, c, -1)
            arg = jnp.argmax(patch, axis=-1)
            picked = jnp.take_along_axis(patch, arg[..., None], axis=-1)
            row_values.append(picked[..., 0])
            row_indices.append((r0 + arg // (c1 - c0)) * w + c0 + arg % (c1 - c0))
        values.append(jnp.stack(row_values, axis=-1))
        indices.append(jnp.stack(row_indices, axis=-1))
    return jnp.stack(values, axis=-2), jnp.stack(indices, axis=-2)


def unpool(grad: JAXArray, indices: JAXArray, shape: tuple[int, ...]) -> JAXArray:
    """Route a pooled cotangent back to the selected input elements"""
    n, c, h, w = shape

    def scatter(g: JAXArray, idx: JAXArray) -> JAXArray:
        return jnp.zeros(h * w, dtype=g.dtype).at[idx].add(g)

    flat = jax.vmap(jax.vmap(scatter))(
        grad.reshape(n, c, -1), indices.reshape(n, c, -1)
    )
    return flat.reshape(n, c, h, w)


def _logits(pooled: JAXArray, weights: JAXArray, bias: JAXArray) -> JAXArray:
    n, c, d, _ = pooled.shape
    z = jnp.einsum("ncij,ocij->no", pooled, weights) + bias
    return z.reshape(n, c, d)


def adaptive_weights(I: JAXArray, p: DGFilterParams) -> DilationWeights:
    """Compute the per-channel dilation distribution for a feature map

    Args:
        I: The feature tensor; its channel count must equal ``p.c`` and both
            spatial extents must be at least ``p.d``.
        p: The operator parameters.
    """
    I = as_tensor(I)
    _check_input(I, p)
    values, _, _ = _adaptive_weights(I, p.conv_weights, p.conv_bias, p.d)
    return DilationWeights(values=values)


@partial(jax.jit, static_argnames=("d",))
def _adaptive_weights(
    I: JAXArray, weights: JAXArray, bias: JAXArray, d: int
) -> tuple[JAXArray, JAXArray, JAXArray]:
    pooled, indices = adaptive_max_pool(I, d)
    values = jax.nn.softmax(_logits(pooled, weights, bias), axis=-1)
    return values, pooled, indices


def _check_input(I: JAXArray, p: DGFilterParams) -> None:
    if I.shape[1] != p.c:
        raise ValueError(f"Expected {p.c} channels; got {I.shape[1]}")
    if I.shape[2] < p.d or I.shape[3] < p.d:
        raise ValueError(
            f"Spatial extent {I.shape[2:]} is smaller than the dilation grid {p.d}"
        )


def dilation_histogram(weights: DilationWeights) -> JAXArray:
    """The average share of each dilation rate over all images and channels"""
    return jnp.mean(jnp.asarray(weights.values), axis=(0, 1))
