"""Hot-loop kernel dispatch: compiled Cython backend with a pure-Python
fallback, chosen once at import time.

Set MMSAFE_PURE_PY=1 to force the fallback (used by the benchmark and the
parity tests). ``BACKEND`` names the active implementation.
"""

import os

if os.environ.get("MMSAFE_PURE_PY"):
    from . import _ref as _backend
else:
    try:
        from . import _fast as _backend  # type: ignore[no-redef]
    except ImportError:
        from . import _ref as _backend  # type: ignore[no-redef]

BACKEND = _backend.NAME

std_normal_cdf = _backend.std_normal_cdf
phi_terms = _backend.phi_terms
human_control = _backend.human_control
joint_mean_deriv = _backend.joint_mean_deriv
rk4_joint_mean = _backend.rk4_joint_mean
halfspace_box_polygon = _backend.halfspace_box_polygon
project_to_polygon = _backend.project_to_polygon
polygon_area = _backend.polygon_area

__all__ = [
    "BACKEND",
    "std_normal_cdf",
    "phi_terms",
    "human_control",
    "joint_mean_deriv",
    "rk4_joint_mean",
    "halfspace_box_polygon",
    "project_to_polygon",
    "polygon_area",
]
