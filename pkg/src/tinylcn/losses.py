r"""
The detection loss. For one anchor with target class probability :math:`s_t`

.. math::

    L = (1 - s_t)^\gamma \left(L_{class} + L_{2d} + L_{3d} + L_{corner}\right)

where :math:`L_{class} = -\log s_t` and the regression terms are smooth L1
penalties on the encoded residuals of :mod:`tinylcn.codec`:

- :math:`L_{2d}` covers ``t2d``,
- :math:`L_{3d}` covers the 3D size, depth and pose in ``t3d`` plus the
  projected center ``tP``; the pose difference is wrapped to ``(-pi, pi]``,
- :math:`L_{corner}` is the mean over the eight corners of the projected
  corner offsets and the corner depth term.
"""

from __future__ import annotations

__all__ = [
    "Components",
    "LossBreakdown",
    "smooth_l1",
    "log_target_score",
    "target_score",
    "component_losses",
    "total_loss",
    "batch_loss",
]

from typing import NamedTuple, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from tinylcn.codec import OutputVector
from tinylcn.helpers import JAXArray, dataclass, wrap_angle


class Components(NamedTuple):
    class_loss: JAXArray
    loss_2d: JAXArray
    loss_3d: JAXArray
    loss_corner: JAXArray


@dataclass
class LossBreakdown:
    """The loss terms of one anchor or a whole batch

    ``total`` equals ``focal_weight`` times the sum of the four components
    for a single anchor; for a batch every field is the sum over anchors.
    """

    class_loss: JAXArray
    loss_2d: JAXArray
    loss_3d: JAXArray
    loss_corner: JAXArray
    focal_weight: JAXArray
    total: JAXArray

    def as_dict(self) -> dict[str, float]:
        return {
            "class_loss": float(self.class_loss),
            "loss_2d": float(self.loss_2d),
            "loss_3d": float(self.loss_3d),
            "loss_corner": float(self.loss_corner),
            "focal_weight": float(self.focal_weight),
            "total": float(self.total),
        }


def smooth_l1(x: JAXArray) -> JAXArray:
    """The smooth L1 penalty with transition point 1, summed over ``x``

    Elementwise this is ``0.5 * x**2`` for ``|x| < 1`` and ``|x| - 0.5``
    otherwise.

    .. code-block:: python

        >>> from tinylcn.losses import smooth_l1
        >>> float(smooth_l1([0.5, -2.0]))
        1.625
    """
    x = jnp.asarray(x, dtype=jnp.float64)
    a = jnp.abs(x)
    return jnp.sum(jnp.where(a < 1, 0.5 * x * x, a - 0.5))


def _check_score(s_t: float) -> float:
    s_t = float(s_t)
    if not 0 < s_t <= 1:
        raise ValueError(f"The target score must be in (0, 1]; got {s_t}")
    return s_t


def _check_gamma(gamma: float) -> float:
    if gamma < 0:
        raise ValueError(f"'gamma' must be non-negative; got {gamma}")
    return gamma


def _target_class(target: OutputVector) -> int:
    return int(np.argmax(np.asarray(target.scores)))


def log_target_score(pred: OutputVector, class_id: int) -> JAXArray:
    """The log-softmax of ``pred.scores`` at ``class_id``

    This stays finite for logits whose softmax underflows to zero.
    """
    scores = jnp.asarray(pred.scores, dtype=jnp.float64)
    if not 0 <= class_id < scores.size:
        raise ValueError(
            f"class_id {class_id} is out of range for {scores.size} classes"
        )
    return jax.nn.log_softmax(scores)[class_id]


def target_score(pred: OutputVector, class_id: int) -> float:
    """The softmax probability of ``class_id`` under ``pred.scores``"""
    return float(jnp.exp(log_target_score(pred, class_id)))


def _regression_terms(
    pred: OutputVector, target: OutputVector, log_s: JAXArray, corner_depth: str
) -> Components:
    d2d = jnp.asarray(pred.t2d) - jnp.asarray(target.t2d)
    dP = jnp.asarray(pred.tP) - jnp.asarray(target.tP)
    p3d = jnp.asarray(pred.t3d)
    g3d = jnp.asarray(target.t3d)
    d3d = jnp.concatenate([p3d[:4] - g3d[:4], wrap_angle(p3d[4:] - g3d[4:])])

    pC = jnp.asarray(pred.tC).reshape(8, 3)
    gC = jnp.asarray(target.tC).reshape(8, 3)
    if corner_depth == "center":
        dz = pC[:, 2] - g3d[0]
    elif corner_depth == "corner":
        dz = pC[:, 2] - gC[:, 2]
    else:
        raise ValueError(
            f"Unknown corner_depth '{corner_depth}'; expected 'center' or 'corner'"
        )
    loss_corner = (smooth_l1(pC[:, :2] - gC[:, :2]) + smooth_l1(dz)) / 8

    return Components(
        class_loss=-log_s,
        loss_2d=smooth_l1(d2d),
        loss_3d=smooth_l1(d3d) + smooth_l1(dP),
        loss_corner=loss_corner,
    )


def component_losses(
    pred: OutputVector,
    target: OutputVector,
    s_t: float | None = None,
    *,
    corner_depth: str = "center",
) -> Components:
    """The four unweighted loss terms for a foreground anchor

    Args:
        pred: The predicted residuals.
        target: The encoded ground truth, e.g. from :func:`tinylcn.codec.encode`;
            its ``scores`` are a one-hot class indicator.
        s_t: The predicted probability of the target class. If omitted the
            class term is the log-softmax of ``pred.scores``.
        corner_depth: ``"center"`` compares every predicted corner depth to
            the ground truth center depth; ``"corner"`` compares it to the
            matching ground truth corner depth.

    Raises:
        ValueError: If ``s_t`` is not in ``(0, 1]`` or ``corner_depth`` is
            unknown.
    """
    if s_t is None:
        log_s = log_target_score(pred, _target_class(target))
    else:
        log_s = jnp.log(_check_score(s_t))
    return _regression_terms(pred, target, log_s, corner_depth)


def _weighted(components: Components, s_t: JAXArray, gamma: float) -> LossBreakdown:
    focal_weight = jnp.power(1.0 - s_t, gamma)
    total = focal_weight * (
        components.class_loss
        + components.loss_2d
        + components.loss_3d
        + components.loss_corner
    )
    return LossBreakdown(
        class_loss=components.class_loss,
        loss_2d=components.loss_2d,
        loss_3d=components.loss_3d,
        loss_corner=components.loss_corner,
        focal_weight=focal_weight,
        total=total,
    )


def total_loss(components: Components, s_t: float, gamma: float = 0.5) -> LossBreakdown:
    """Weight the summed components by the focal factor ``(1 - s_t)**gamma``"""
    return _weighted(components, _check_score(s_t), _check_gamma(gamma))


def batch_loss(
    preds: Sequence[OutputVector],
    targets: Sequence[OutputVector | None],
    *,
    gamma: float = 0.5,
    corner_depth: str = "center",
) -> LossBreakdown:
    """Sum per-anchor losses over a batch

    Anchors whose target is ``None`` are background: they contribute only a
    classification term with ``s_t`` the background probability. The class
    terms come from the log-softmax of the scores, so a target probability
    that underflows to zero gives a large finite loss with focal weight 1.
    The sum is accumulated in input order. ``focal_weight`` holds the sum of
    the per-anchor weights.
    """
    if len(preds) != len(targets):
        raise ValueError(f"Got {len(preds)} predictions but {len(targets)} targets")
    _check_gamma(gamma)
    zero = jnp.zeros((), dtype=jnp.float64)
    fields = dict.fromkeys(
        ("class_loss", "loss_2d", "loss_3d", "loss_corner", "focal_weight", "total"),
        zero,
    )
    for pred, target in zip(preds, targets):
        if target is None:
            log_s = log_target_score(pred, 0)
            components = Components(-log_s, zero, zero, zero)
        else:
            log_s = log_target_score(pred, _target_class(target))
            components = _regression_terms(pred, target, log_s, corner_depth)
        breakdown = _weighted(components, jnp.exp(log_s), gamma)
        for name in fields:
            fields[name] = fields[name] + getattr(breakdown, name)
    return LossBreakdown(**fields)
