import numpy as np
import pytest

from mvsim import _kernels_py
from mvsim.grid import FaceVector, Grid

try:
    from mvsim import _kernels as _kernels_cy
except ImportError:  # pragma: no cover
    _kernels_cy = None

BACKENDS = [_kernels_py] + ([_kernels_cy] if _kernels_cy is not None else [])


def observed_order(errors, hs):
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def sinsin(grid: Grid, kx: int = 1, ky: int = 1):
    X, Y = grid.cell_centers()
    return np.sin(kx * np.pi * X / grid.Lx) * np.sin(ky * np.pi * Y / grid.Ly)


def random_faces(rng, grid: Grid, wall_zero: bool = True) -> FaceVector:
    u = rng.standard_normal((grid.nx + 1, grid.ny))
    w = rng.standard_normal((grid.nx, grid.ny + 1))
    if wall_zero:
        u[0] = u[-1] = 0.0
        w[:, 0] = w[:, -1] = 0.0
    return FaceVector(u, w)


@pytest.fixture(params=BACKENDS, ids=[k.BACKEND for k in BACKENDS])
def backend(request):
    return request.param
