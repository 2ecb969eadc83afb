"""drfer - disentangled 3D facial expression recognition on point clouds.

Dual-branch encoder/decoders with cross-over reconstruction, a fusion module,
three-stage training, and a robustness benchmark over a synthetic face generator.
"""

__version__ = "0.3.0"
__author__ = "drfer contributors"
__license__ = "MIT"

# Keep the top-level import light: torch, scipy and sklearn are imported by the
# subpackages that need them.

__all__ = ["__version__"]
