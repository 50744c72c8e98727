"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy twins in
:mod:`advloop._fallback` take over. Set ``ADVLOOP_PURE_PYTHON=1`` to force the
fallback.
"""
import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

BACKEND = "python"
_impl = _fallback

if os.environ.get("ADVLOOP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        log.debug("compiled kernels unavailable, using numpy fallback")

ray_triangle = _impl.ray_triangle
ray_triangle_batch = _impl.ray_triangle_batch
raycast_bvh = _impl.raycast_bvh
raycast_brute = _impl.raycast_brute
raycast_scene = _impl.raycast_scene
point_mesh_distance = _impl.point_mesh_distance
winding_number = _impl.winding_number
convex_hull_2d = _impl.convex_hull_2d
min_area_rect = _impl.min_area_rect


def backends():
    """Mapping of available backend name -> module (for tests and benchmarks)."""
    out = {"python": _fallback}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:  # pragma: no cover
        pass
    return out
