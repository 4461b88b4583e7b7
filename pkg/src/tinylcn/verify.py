"""
Reference implementations and self-checks for the filtering operators. The
oracles here are deliberately plain loops over pixels, dilation rates and
window taps so that they can be read against the defining formulas; the
checks compare them (and finite differences) with the shift-based kernels in
:mod:`tinylcn.filters`.
"""

from __future__ import annotations

__all__ = [
    "REDUCTION_TOLERANCE",
    "CheckResult",
    "BenchRow",
    "naive_shift_pool",
    "naive_adaptive_weights",
    "naive_d4lcn",
    "relative_error",
    "numerical_gradients",
    "check_eq1",
    "check_eq2",
    "check_grad",
    "check_vjp",
    "benchmark",
]

import logging
import time
from typing import Callable, NamedTuple, Optional

import jax
import jax.numpy as jnp
import numpy as np
from jax.flatten_util import ravel_pytree

from tinylcn.filters import (
    DGFilterParams,
    DilationWeights,
    d4lcn_apply,
    d4lcn_backward,
    d4lcn_forward,
    dlcn_forward,
    shift_pool,
)
from tinylcn.filters.d4lcn import _forward
from tinylcn.helpers import prng_key
from tinylcn.tensor import random_tensor

logger = logging.getLogger(__name__)

REDUCTION_TOLERANCE = 1e-15


class CheckResult(NamedTuple):
    """The outcome of a self-check

    ``reduction_error`` is set by checks that also test an exact reduction
    of the operator, which is held to the tighter ``reduction_tolerance``.
    """

    name: str
    max_error: float
    tolerance: float
    cases: int
    reduction_error: Optional[float] = None
    reduction_tolerance: float = REDUCTION_TOLERANCE

    @property
    def passed(self) -> bool:
        if self.reduction_error is not None and not (
            self.reduction_error <= self.reduction_tolerance
        ):
            return False
        return bool(self.max_error <= self.tolerance)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = (
            f"{self.name}: {status} max_error={self.max_error:.3e} "
            f"tolerance={self.tolerance:.1e} cases={self.cases}"
        )
        if self.reduction_error is not None:
            text += (
                f" reduction_error={self.reduction_error:.3e} "
                f"reduction_tolerance={self.reduction_tolerance:.1e}"
            )
        return text


class BenchRow(NamedTuple):
    operator: str
    naive_seconds: float
    fast_seconds: float

    @property
    def speedup(self) -> float:
        return self.naive_seconds / self.fast_seconds

    def __str__(self) -> str:
        return (
            f"{self.operator:<6s} naive={self.naive_seconds * 1e3:10.3f} ms "
            f"fast={self.fast_seconds * 1e3:10.3f} ms speedup={self.speedup:8.1f}x"
        )


def naive_shift_pool(I: np.ndarray, n_f: int) -> np.ndarray:
    I = np.asarray(I, dtype=np.float64)
    c = I.shape[1]
    P = np.zeros_like(I)
    for ch in range(c):
        for s in range(n_f):
            P[:, ch] += I[:, (ch + s) % c]
    return P / n_f


def naive_adaptive_weights(P: np.ndarray, params: DGFilterParams) -> np.ndarray:
    """Max-pool, convolve and softmax with explicit loops"""
    n, c, h, w = P.shape
    d = params.d
    W = np.asarray(params.conv_weights)
    b = np.asarray(params.conv_bias)
    rows = [(i * h // d, (i + 1) * h // d) for i in range(d)]
    cols = [(j * w // d, (j + 1) * w // d) for j in range(d)]
    pooled = np.zeros((n, c, d, d))
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            pooled[:, :, i, j] = P[:, :, r0:r1, c0:c1].max(axis=(2, 3))
    logits = np.zeros((n, d * c))
    for o in range(d * c):
        logits[:, o] = b[o]
        for ch in range(c):
            for i in range(d):
                for j in range(d):
                    logits[:, o] += pooled[:, ch, i, j] * W[o, ch, i, j]
    logits = logits.reshape(n, c, d)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def naive_d4lcn(
    I: np.ndarray, D: np.ndarray, params: DGFilterParams
) -> tuple[np.ndarray, np.ndarray]:
    """The full operator as a loop over pixels, dilation rates and taps

    Returns:
        The output and the ``(n, c, d)`` dilation weights.
    """
    I = np.asarray(I, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    _, _, h, w = I.shape
    k, d = params.k, params.d
    r = (k - 1) // 2
    P = naive_shift_pool(I, params.n_f)
    A = naive_adaptive_weights(P, params)
    out = np.zeros_like(I)
    for y in range(h):
        for x in range(w):
            mix = np.zeros(I.shape[:2])
            for rate in range(1, d + 1):
                acc = np.zeros(I.shape[:2])
                for gi in range(-r, r + 1):
                    for gj in range(-r, r + 1):
                        sy, sx = y - gi * rate, x - gj * rate
                        if 0 <= sy < h and 0 <= sx < w:
                            acc += D[:, :, sy, sx]
                mix += A[:, :, rate - 1] * acc
            out[:, :, y, x] = P[:, :, y, x] * mix / (d * k * k)
    return out, A


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """The largest ``|a - b| / max(1, |a|, |b|)`` over all entries"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale))


def numerical_gradients(
    f: Callable[[jax.Array], jax.Array], x: jax.Array, step: float = 1e-6
) -> jax.Array:
    """Central finite differences of a scalar function of a flat vector

    All ``2 * x.size`` evaluations are batched with :func:`jax.vmap`.
    """
    basis = step * jnp.eye(x.size, dtype=x.dtype)
    plus = jax.vmap(f)(x[None, :] + basis)
    minus = jax.vmap(f)(x[None, :] - basis)
    return (plus - minus) / (2 * step)


def _window(rng: np.random.Generator, k: Optional[int], choices: tuple) -> int:
    drawn = int(rng.choice(choices))
    return drawn if k is None else k


def _random_case(rng: np.random.Generator, max_c: int, max_hw: int, d: int) -> tuple:
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, max_c + 1))
    h = int(rng.integers(d, max_hw + 1))
    w = int(rng.integers(d, max_hw + 1))
    return n, c, h, w


def check_eq1(
    seed: int, cases: int = 50, tolerance: float = 1e-12, k: Optional[int] = None
) -> CheckResult:
    """Shift-based local filtering against the per-pixel loop

    The window size is drawn from 1, 3 and 5 unless ``k`` is given.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(cases):
        shape = _random_case(rng, 8, 16, 1)
        size = _window(rng, k, (1, 3, 5))
        I = random_tensor(seed, shape, streams=(case, 0))
        D = random_tensor(seed, shape, streams=(case, 1))
        fast = dlcn_forward(I, D, size, "fast")
        naive = dlcn_forward(I, D, size, "naive")
        worst = max(worst, float(jnp.max(jnp.abs(fast - naive))))
    return CheckResult("eq1", worst, tolerance, cases)


def check_eq2(
    seed: int, cases: int = 20, tolerance: float = 1e-12, k: Optional[int] = None
) -> CheckResult:
    """The full operator against the loop oracle, plus its two reductions

    For every case this also checks that ``d = 1`` reproduces local filtering
    of the shift-pooled features and that one-hot dilation weights give
    ``1 / d`` times dilated local filtering. The ``d = 1`` reduction is exact
    and is held to ``REDUCTION_TOLERANCE`` rather than ``tolerance``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_reduction = 0.0
    for case in range(cases):
        d = int(rng.integers(1, 4))
        n, c, h, w = _random_case(rng, 6, 12, d)
        size = _window(rng, k, (1, 3, 5))
        n_f = int(rng.integers(1, c + 1))
        I = random_tensor(seed, (n, c, h, w), streams=(case, 0))
        D = random_tensor(seed, (n, c, h, w), streams=(case, 1))
        params = DGFilterParams.init(
            c, k=size, d=d, n_f=n_f, seed=seed, streams=(case, 2)
        )

        out, weights = d4lcn_forward(I, D, params)
        expect, expect_weights = naive_d4lcn(np.asarray(I), np.asarray(D), params)
        worst = max(
            worst,
            float(np.max(np.abs(np.asarray(out) - expect))),
            float(np.max(np.abs(np.asarray(weights.values) - expect_weights))),
        )

        pooled = shift_pool(I, n_f)
        single = DGFilterParams.init(
            c, k=size, d=1, n_f=n_f, seed=seed, streams=(case, 3)
        )
        reduced, _ = d4lcn_forward(I, D, single)
        expect = dlcn_forward(pooled, D, size)
        reduction = float(jnp.max(jnp.abs(reduced - expect)))
        worst_reduction = max(worst_reduction, reduction)

        rate = int(rng.integers(1, d + 1))
        one_hot = DilationWeights(values=jax.nn.one_hot(jnp.full((n, c), rate - 1), d))
        selected = d4lcn_apply(I, D, one_hot, k=size, n_f=n_f)
        dilated = dlcn_forward(pooled, D, size, dilation=rate) / d
        worst = max(worst, float(jnp.max(jnp.abs(selected - dilated))))
    return CheckResult("eq2", worst, tolerance, cases, reduction_error=worst_reduction)


def _flat_objective(
    I: jax.Array, D: jax.Array, params: DGFilterParams, g: jax.Array
) -> tuple[Callable[[jax.Array], jax.Array], jax.Array]:
    flat, unravel = ravel_pytree((I, D, params.conv_weights, params.conv_bias))

    def objective(x: jax.Array) -> jax.Array:
        I_, D_, W_, b_ = unravel(x)
        out, _ = _forward(I_, D_, W_, b_, params.k, params.d, params.n_f)
        return jnp.sum(g * out)

    return objective, flat


def _grad_instance(
    seed: int, case: int, rng: np.random.Generator, k: Optional[int] = None
) -> tuple:
    d = int(rng.integers(1, 4))
    c = int(rng.integers(1, 4))
    h = int(rng.integers(max(d, 2), 7))
    w = int(rng.integers(max(d, 2), 7))
    n = int(rng.integers(1, 3))
    k = _window(rng, k, (1, 3))
    n_f = int(rng.integers(1, c + 1))
    shape = (n, c, h, w)
    I = random_tensor(seed, shape, streams=(case, 0))
    D = random_tensor(seed, shape, streams=(case, 1))
    g = random_tensor(seed, shape, streams=(case, 2))
    params = DGFilterParams.init(c, k=k, d=d, n_f=n_f, seed=seed, streams=(case, 3))
    bias = 0.1 * jax.random.normal(prng_key(seed, case, 4), (d * c,))
    return I, D, g, params.replace(conv_bias=bias)


def check_grad(
    seed: int,
    instances: int = 10,
    tolerance: float = 1e-5,
    step: float = 1e-6,
    k: Optional[int] = None,
) -> CheckResult:
    """The hand-derived backward pass against central finite differences

    Every component of the input, guidance, weight and bias gradients is
    compared using :func:`relative_error`.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(instances):
        I, D, g, params = _grad_instance(seed, case, rng, k)
        grad_I, grad_D, grad_p = d4lcn_backward(I, D, params, g)
        grads = (grad_I, grad_D, grad_p.conv_weights, grad_p.conv_bias)
        analytic, _ = ravel_pytree(grads)
        objective, flat = _flat_objective(I, D, params, g)
        numeric = numerical_gradients(objective, flat, step)
        error = relative_error(analytic, numeric)
        logger.debug("grad case %d: %d components, error %.3e", case, flat.size, error)
        worst = max(worst, error)
    return CheckResult("grad", worst, tolerance, instances)


def check_vjp(
    seed: int, instances: int = 10, tolerance: float = 1e-10, k: Optional[int] = None
) -> CheckResult:
    """The hand-derived backward pass against :func:`jax.vjp` of the forward"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(instances):
        I, D, g, params = _grad_instance(seed, case, rng, k)
        grad_I, grad_D, grad_p = d4lcn_backward(I, D, params, g)

        def forward(I_, D_, W_, b_, params=params):
            return _forward(I_, D_, W_, b_, params.k, params.d, params.n_f)[0]

        _, pullback = jax.vjp(forward, I, D, params.conv_weights, params.conv_bias)
        expect = pullback(g)
        grads = (grad_I, grad_D, grad_p.conv_weights, grad_p.conv_bias)
        for got, want in zip(grads, expect):
            worst = max(worst, relative_error(got, want))
    return CheckResult("vjp", worst, tolerance, instances)


def _median_time(fn: Callable[[], object], iterations: int, warmup: int) -> float:
    for _ in range(warmup):
        jax.block_until_ready(fn())
    times = []
    for _ in range(iterations):
        start = time.perf_counter()
        jax.block_until_ready(fn())
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def benchmark(
    seed: int,
    *,
    c: int = 64,
    h: int = 64,
    w: int = 64,
    k: int = 3,
    d: int = 3,
    n_f: int = 2,
    iterations: int = 20,
    warmup: int = 3,
) -> list[BenchRow]:
    """Time the loop implementations against the shift-based kernels

    Each timing is the median over ``iterations`` runs after ``warmup``
    untimed runs.
    """
    shape = (1, c, h, w)
    I = random_tensor(seed, shape, streams=(0,))
    D = random_tensor(seed, shape, streams=(1,))
    params = DGFilterParams.init(c, k=k, d=d, n_f=n_f, seed=seed, streams=(2,))
    I_np, D_np = np.asarray(I), np.asarray(D)

    rows = [
        BenchRow(
            "dlcn",
            _median_time(lambda: dlcn_forward(I, D, k, "naive"), iterations, warmup),
            _median_time(lambda: dlcn_forward(I, D, k, "fast"), iterations, warmup),
        ),
        BenchRow(
            "d4lcn",
            _median_time(lambda: naive_d4lcn(I_np, D_np, params), iterations, warmup),
            _median_time(lambda: d4lcn_forward(I, D, params), iterations, warmup),
        ),
    ]
    for row in rows:
        logger.info("%s", row)
    return rows
