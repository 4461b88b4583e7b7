"""
``tinylcn`` implements depth-guided dynamic-depthwise-dilated local filtering
and the anchor-based monocular 3D detection head built around it, on top of
`jax <https://github.com/google/jax>`_. The filtering operators live in the
``filters`` subpackage and the camera and box geometry in ``geometry``; the
remaining modules cover anchors, the output codec, losses, KITTI file formats
and evaluation.

Double precision is enabled on import since the operator checks compare
implementations at the ``1e-12`` level.
"""

import jax

jax.config.update("jax_enable_x64", True)

from tinylcn import (  # noqa: E402
    anchors as anchors,
    codec as codec,
    evaluation as evaluation,
    filters as filters,
    geometry as geometry,
    kitti as kitti,
    losses as losses,
    tensor as tensor,
)
from tinylcn.filters import (  # noqa: E402
    DepthGuidedFilter as DepthGuidedFilter,
    DGFilterParams as DGFilterParams,
)
from tinylcn.tinylcn_version import __version__ as __version__  # noqa: E402
