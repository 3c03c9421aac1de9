"""Backend selection for the hot kernels.

The compiled extension is used when it imports; ``WOEVAE_PURE=1`` forces the
numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("WOEVAE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

ward_two_clusters = _impl.ward_two_clusters
nearest_centroid = _impl.nearest_centroid
