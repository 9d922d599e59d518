"""Offline dataset generation for camera relocalization.

Density volume extraction, virtual camera placement, volume rendering of
novel views and a desk-scale evaluation harness.
"""

__version__ = "0.1.0"

from lens_forge.errors import (
    DatasetError,
    DomainError,
    LensError,
    PlacementError,
    RenderError,
)
from lens_forge.geometry import (
    Aabb,
    PinholeIntrinsics,
    Pose,
    Ray,
    bounding_box,
    extend_box,
    pixel_ray,
    rotation_angle_between,
)

__all__ = [
    "__version__",
    "Aabb",
    "DatasetError",
    "DomainError",
    "LensError",
    "PinholeIntrinsics",
    "PlacementError",
    "Pose",
    "Ray",
    "RenderError",
    "bounding_box",
    "extend_box",
    "pixel_ray",
    "rotation_angle_between",
]
