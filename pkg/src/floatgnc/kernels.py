"""Backend selection for the plant kernels.

The compiled extension is used when it is importable; set
``FLOATGNC_PURE_PYTHON=1`` to force the pure-Python implementation.
``BACKEND`` names the active one.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_force_py = os.environ.get("FLOATGNC_PURE_PYTHON", "").strip() not in ("", "0")
_compiled = None
if not _force_py:
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def compiled_available() -> bool:
    return _compiled is not None


def plant_substeps(state, thrust, tau_cmd, wrench, heightmap, params, dt, n, backend=None):
    """Advance ``state`` (float64 array of 7, updated in place) by ``n`` RK4 steps.

    See ``_kernels_py.plant_substeps`` for argument semantics; ``heightmap``
    is a ``simworld.Heightmap`` and ``params`` the 8-vector from
    ``kernel_params``.
    """
    use = backend or BACKEND
    if use == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled.plant_substeps(
            state, np.ascontiguousarray(thrust, dtype=float), float(tau_cmd),
            np.ascontiguousarray(wrench, dtype=float), heightmap.grid,
            heightmap.x0, heightmap.y0, heightmap.cell, params, float(dt), int(n))
    s = state.tolist()
    out = _kernels_py.plant_substeps(
        s, [float(f) for f in thrust], float(tau_cmd), [float(w) for w in wrench],
        heightmap.rows, heightmap.x0, heightmap.y0, heightmap.cell, params.tolist(), float(dt), int(n))
    state[:] = s
    return out


def kernel_params(params) -> np.ndarray:
    """Pack ``PlatformParams`` in the order the kernels expect."""
    return np.array([
        params.mass, params.body_inertia, params.wheel_inertia, params.thruster_arm,
        params.nominal_thrust, params.wheel_speed_max, params.wheel_torque_max, params.gravity,
    ], dtype=float)
