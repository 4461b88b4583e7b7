from __future__ import annotations

__all__ = ["JAXArray", "dataclass", "field", "wrap_angle", "check_odd", "prng_key"]

import dataclasses
from typing import Any, Callable, TypeVar, Union

import jax
import jax.numpy as jnp
import numpy as np

JAXArray = Union[np.ndarray, jnp.ndarray]

# This section is based closely on the implementation in flax:
#
# https://github.com/google/flax/blob/b60f7f45b90f8fc42a88b1639c9cc88a40b298d3/flax/struct.py
#
# The decorator registers a frozen dataclass as a pytree so that parameter
# containers and boxes can be passed straight through jax.jit and jax.vmap.
# Fields created with ``field(pytree_node=False)`` are static metadata
# (hyperparameters, class names) and must be hashable.
_T = TypeVar("_T")


def __dataclass_transform__(
    *,
    eq_default: bool = True,
    order_default: bool = False,
    kw_only_default: bool = False,
    field_descriptors: tuple[type | Callable[..., Any], ...] = (()),
) -> Callable[[_T], _T]:
    return lambda a: a


@__dataclass_transform__()
def dataclass(clz: type[Any]) -> type[Any]:
    data_clz: Any = dataclasses.dataclass(frozen=True, eq=False)(clz)
    meta_fields = []
    data_fields = []
    for name, field_info in data_clz.__dataclass_fields__.items():
        if not field_info.init:
            continue
        if field_info.metadata.get("pytree_node", True):
            data_fields.append(name)
        else:
            meta_fields.append(name)

    def replace(self: Any, **updates: Any) -> Any:
        return dataclasses.replace(self, **updates)

    data_clz.replace = replace

    def flatten(x: Any) -> tuple[tuple[Any, ...], tuple[Any, ...]]:
        meta = tuple(getattr(x, name) for name in meta_fields)
        data = tuple(getattr(x, name) for name in data_fields)
        return data, meta

    def unflatten(meta: tuple[Any, ...], data: tuple[Any, ...]) -> Any:
        kwargs = dict(tuple(zip(meta_fields, meta)) + tuple(zip(data_fields, data)))
        return data_clz(**kwargs)

    jax.tree_util.register_pytree_node(data_clz, flatten, unflatten)
    return data_clz


def field(pytree_node: bool = True, **kwargs: Any) -> Any:
    return dataclasses.field(metadata={"pytree_node": pytree_node}, **kwargs)


def wrap_angle(angle: Any) -> Any:
    """Wrap an angle (or array of angles) into the interval ``(-pi, pi]``

    Works for Python floats, ``numpy`` arrays and ``jax`` arrays alike; the
    return type follows the input.
    """
    if isinstance(angle, jax.Array):
        return jnp.pi - jnp.mod(jnp.pi - angle, 2 * jnp.pi)
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=np.float64), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def check_odd(k: int, name: str = "k") -> int:
    if int(k) != k or k < 1 or k % 2 == 0:
        raise ValueError(f"'{name}' must be a positive odd integer; got {k}")
    return int(k)


def prng_key(seed: int, *streams: int) -> jax.Array:
    """A ``jax`` PRNG key for an unsigned 64-bit seed

    The two 32-bit halves of ``seed`` are folded in separately so every seed
    in ``[0, 2**64)`` maps to a key. Each entry of ``streams`` is then folded
    in turn, giving independent keys for e.g. the cases of a check.

    Raises:
        ValueError: If ``seed`` or a stream index is out of range.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"'seed' must be an unsigned 64-bit integer; got {seed}")
    key = jax.random.fold_in(jax.random.PRNGKey(seed & 0xFFFFFFFF), seed >> 32)
    for stream in streams:
        if not 0 <= stream < 2**32:
            raise ValueError(f"Stream indices must fit in 32 bits; got {stream}")
        key = jax.random.fold_in(key, stream)
    return key
