"""Python bindings for the gyrocomp library.

Flows are ``(height, width, 2)`` float64 arrays, homography arrays are
``(n_patches, 3, 3)``, gyro logs are ``(n, 4)`` rows of ``(t_ns, wx, wy, wz)``
and correspondences are ``(n, 4)`` rows of ``(x1, y1, x2, y2)``.
"""

from ._core import (
    CameraConfig,
    GyrocompError,
    apply_correction,
    estimate_mixture,
    fit_correction,
    geodesic_distance,
    geometry_distance,
    gyro_flow,
    gyro_homographies,
    load_camera_config,
    mixture_gt_flow,
    read_flo,
    rodrigues,
    rotation_log,
    run_cli,
    simulate,
    write_flo,
)

__all__ = [
    "CameraConfig",
    "GyrocompError",
    "apply_correction",
    "estimate_mixture",
    "fit_correction",
    "geodesic_distance",
    "geometry_distance",
    "gyro_flow",
    "gyro_homographies",
    "load_camera_config",
    "mixture_gt_flow",
    "read_flo",
    "rodrigues",
    "rotation_log",
    "run_cli",
    "simulate",
    "write_flo",
]
