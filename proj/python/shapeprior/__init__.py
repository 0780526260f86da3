"""Low-rank statistical shape models with target-specific realignment."""

import os
import sys

_ext_dir = os.environ.get("SHAPEPRIOR_EXT_DIR")
if _ext_dir and _ext_dir not in sys.path:
    sys.path.insert(0, _ext_dir)

try:
    from . import _shapeprior as _ext  # installed layout
except ImportError:
    import _shapeprior as _ext  # build-tree layout via SHAPEPRIOR_EXT_DIR

__all__ = [
    "DiagnosticsError",
    "DomainMask",
    "IoError",
    "LowRankGP",
    "TriangleMesh",
    "ValidationError",
    "build_empirical",
    "coefficients",
    "gpa",
    "load_mask",
    "load_mesh",
    "load_model",
    "log_density",
    "project_model",
    "reconstruct",
    "regress",
    "sample",
    "save_mask",
    "save_mesh",
    "save_model",
]

for _name in __all__:
    globals()[_name] = getattr(_ext, _name)
del _name
