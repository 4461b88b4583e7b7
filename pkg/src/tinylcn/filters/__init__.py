"""
The depth-guided filtering module and its building blocks. The filters are
sample- and position-specific: the guidance tensor ``D`` (usually derived from
a depth map) supplies a different local kernel for every pixel and channel,
and the adaptive dilation function picks a per-channel mix of receptive field
sizes.
"""

__all__ = [
    "DGFilterParams",
    "DilationWeights",
    "DepthGuidedFilter",
    "adaptive_weights",
    "d4lcn_apply",
    "d4lcn_backward",
    "d4lcn_forward",
    "dilation_histogram",
    "dlcn_forward",
    "shift_pool",
    "window_sum",
]

from tinylcn.filters.adaptive import (
    DGFilterParams,
    DilationWeights,
    adaptive_weights,
    dilation_histogram,
)
from tinylcn.filters.d4lcn import (
    DepthGuidedFilter,
    d4lcn_apply,
    d4lcn_backward,
    d4lcn_forward,
)
from tinylcn.filters.local import dlcn_forward, shift_pool, window_sum
