"""Guidance, navigation and control for a planar thruster-actuated floating platform.

Subpackages and modules:

* ``model``: platform parameters and nonlinear dynamics.
* ``plan``: two-phase direct-collocation trajectory planner.
* ``track``: time-varying LQR gain schedules.
* ``modulate``: sigma-delta pulse modulation and thrust allocation.
* ``estimate``: linear and heading-manifold Kalman filtering.
* ``simworld``: plant, floor model and closed-loop executive.
* ``runner`` / ``cli``: scenario drivers and the ``floatgnc`` command.
"""

from .kernels import BACKEND
from .model import NU, NX, PlatformParams

__version__ = "0.1.0"

__all__ = ["BACKEND", "NU", "NX", "PlatformParams", "__version__"]
