"""Staggered (MAC) grid on a rectangle and its discrete differential operators.

Storage layouts, with ``(nx, ny)`` cells of size ``hx x hy``:

* cell-centered: shape ``(..., nx, ny)``, node ``(i, j)`` at ``((i+1/2)hx, (j+1/2)hy)``
* x-faces: shape ``(nx+1, ny)``, node at ``(i hx, (j+1/2)hy)``
* y-faces: shape ``(nx, ny+1)``, node at ``((i+1/2)hx, j hy)``

Pressure, the deformation gradient ``F`` and the magnetization ``M`` live at
cell centers; velocity is a :class:`FaceVector` with the x-component on
x-faces and the y-component on y-faces.  Boundary conditions are imposed
through ghost values: odd mirror for ``"dirichlet0"``, even mirror for
``"neumann0"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft

from mvsim import _kernels_py
from mvsim._backend import kernels
from mvsim.errors import ConfigurationError, SolverError, StructuralError

BCS = ("dirichlet0", "neumann0")


class FaceVector(NamedTuple):
    """2-vector field on the MAC faces: ``u`` on x-faces, ``w`` on y-faces."""

    u: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid ``[0, nx*hx] x [0, ny*hy]``."""

    nx: int
    ny: int
    hx: float
    hy: float

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigurationError("cell counts must be integers")
        if self.nx < 3 or self.ny < 3:
            raise ConfigurationError(f"need nx, ny >= 3, got ({self.nx}, {self.ny})")
        if not (self.hx > 0 and self.hy > 0) or not np.isfinite([self.hx, self.hy]).all():
            raise ConfigurationError(f"spacings must be positive, got ({self.hx}, {self.hy})")

    @classmethod
    def from_extent(cls, nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0) -> "Grid":
        return cls(int(nx), int(ny), Lx / nx, Ly / ny)

    @property
    def Lx(self) -> float:
        return self.nx * self.hx

    @property
    def Ly(self) -> float:
        return self.ny * self.hy

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def hmin(self) -> float:
        return min(self.hx, self.hy)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    # -- coordinates ---------------------------------------------------------

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def xface_coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def yface_coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    # -- layout bookkeeping --------------------------------------------------

    def layout_of(self, arr: np.ndarray) -> str:
        """Return ``"cell"``, ``"xface"`` or ``"yface"`` from the trailing shape."""
        tail = tuple(np.shape(arr)[-2:])
        if tail == (self.nx, self.ny):
            return "cell"
        if tail == (self.nx + 1, self.ny):
            return "xface"
        if tail == (self.nx, self.ny + 1):
            return "yface"
        raise StructuralError(f"array shape {np.shape(arr)} does not fit grid {self.shape}")

    def check_cell(self, arr: np.ndarray, ncomp: tuple[int, ...] | None = None) -> np.ndarray:
        arr = np.asarray(arr, dtype=float)
        if self.layout_of(arr) != "cell":
            raise StructuralError(f"expected cell-centered field, got shape {arr.shape}")
        if ncomp is not None and arr.shape[:-2] != ncomp:
            raise StructuralError(f"expected components {ncomp}, got shape {arr.shape}")
        return arr

    def check_faces(self, vec: FaceVector) -> FaceVector:
        if not isinstance(vec, tuple) or len(vec) != 2:
            raise StructuralError("expected a FaceVector (u, w)")
        u, w = (np.asarray(c, dtype=float) for c in vec)
        if u.shape != (self.nx + 1, self.ny) or w.shape != (self.nx, self.ny + 1):
            raise StructuralError(
                f"face vector shapes {u.shape}, {w.shape} do not fit grid {self.shape}")
        return FaceVector(u, w)

    def zeros_cell(self, *ncomp: int) -> np.ndarray:
        return np.zeros(ncomp + self.shape)

    def zeros_faces(self) -> FaceVector:
        return FaceVector(np.zeros((self.nx + 1, self.ny)), np.zeros((self.nx, self.ny + 1)))


def _bc_code(bc: str) -> int:
    if bc == "dirichlet0":
        return 0
    if bc == "neumann0":
        return 1
    raise ConfigurationError(f"unknown boundary condition {bc!r}; expected one of {BCS}")


def laplacian(grid: Grid, field, bc: str):
    """Five-point Laplacian with ghost-cell boundary handling.

    Cell-centered arrays may carry any number of leading component axes.  A
    :class:`FaceVector` (velocity) only accepts ``"dirichlet0"``; its boundary
    faces are pinned and returned as zero.
    """
    code = _bc_code(bc)
    if isinstance(field, tuple):
        if code != 0:
            raise ConfigurationError("face vectors carry Dirichlet data only")
        u, w = grid.check_faces(field)
        return FaceVector(kernels.lap_xface(u, grid.hx, grid.hy),
                          kernels.lap_yface(w, grid.hx, grid.hy))
    f = grid.check_cell(field)
    flat = f.reshape((-1,) + grid.shape)
    out = np.stack([kernels.lap_cell(c, grid.hx, grid.hy, code) for c in flat])
    return out.reshape(f.shape)


def gradient(grid: Grid, scalar: np.ndarray) -> FaceVector:
    """Compact differences of a cell-centered scalar onto the interior faces.

    Boundary faces are zero, which is the Neumann condition of the pressure
    and keeps the projected velocity's normal component at zero.
    """
    p = grid.check_cell(scalar, ())
    u = np.zeros((grid.nx + 1, grid.ny))
    w = np.zeros((grid.nx, grid.ny + 1))
    u[1:-1] = (p[1:] - p[:-1]) / grid.hx
    w[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / grid.hy
    return FaceVector(u, w)


def divergence(grid: Grid, vec: FaceVector) -> np.ndarray:
    u, w = grid.check_faces(vec)
    return (u[1:] - u[:-1]) / grid.hx + (w[:, 1:] - w[:, :-1]) / grid.hy


def velocity_at_centers(grid: Grid, vec: FaceVector) -> tuple[np.ndarray, np.ndarray]:
    u, w = vec
    return 0.5 * (u[1:] + u[:-1]), 0.5 * (w[:, 1:] + w[:, :-1])


def velocity_gradient(grid: Grid, vec: FaceVector) -> np.ndarray:
    """Cell-centered velocity Jacobian ``G[a, b] = d v_a / d x_b``.

    Normal derivatives are compact face differences; tangential derivatives
    are taken at cell corners (odd ghost across the no-slip wall) and
    averaged to the center.
    """
    u, w = grid.check_faces(vec)
    return _kernels_py.velocity_gradient(u, w, grid.hx, grid.hy)


def cells_to_faces(grid: Grid, vec: np.ndarray) -> FaceVector:
    """Average a cell-centered 2-vector onto the interior faces (boundary faces zero)."""
    f = grid.check_cell(vec, (2,))
    u = np.zeros((grid.nx + 1, grid.ny))
    w = np.zeros((grid.nx, grid.ny + 1))
    u[1:-1] = 0.5 * (f[0, 1:] + f[0, :-1])
    w[:, 1:-1] = 0.5 * (f[1, :, 1:] + f[1, :, :-1])
    return FaceVector(u, w)


def advect(grid: Grid, field, v: FaceVector):
    """``(v . grad) field`` with centered differences, one-sided on the boundary ring.

    ``field`` is either cell-centered (any leading components; velocity is
    averaged to the centers) or a :class:`FaceVector` (the momentum
    advection; the transverse velocity is averaged from the four nearest
    faces of the other family).
    """
    v = grid.check_faces(v)
    if isinstance(field, tuple):
        u, w = grid.check_faces(field)
        return FaceVector(*kernels.advect_mac(u, w, v.u, v.w, grid.hx, grid.hy))
    f = grid.check_cell(field)
    uc, wc = velocity_at_centers(grid, v)
    flat = f.reshape((-1,) + grid.shape)
    out = np.stack([kernels.advect_cell(c, uc, wc, grid.hx, grid.hy) for c in flat])
    return out.reshape(f.shape)


# -- pressure Poisson ---------------------------------------------------------


@dataclass
class PoissonResult:
    phi: np.ndarray
    mean_removed: float
    iterations: int
    residual: float


def _neumann_eigenvalues(grid: Grid) -> np.ndarray:
    kx = np.arange(grid.nx)
    ky = np.arange(grid.ny)
    lx = (2.0 * np.sin(np.pi * kx / (2 * grid.nx)) / grid.hx) ** 2
    ly = (2.0 * np.sin(np.pi * ky / (2 * grid.ny)) / grid.hy) ** 2
    lam = lx[:, None] + ly[None, :]
    lam[0, 0] = 1.0
    return lam


class PoissonSolver:
    """Conjugate gradients for the Neumann problem ``lap(phi) = rhs``.

    ``method="dct"`` preconditions with the exact inverse of the five-point
    Neumann operator (it is diagonal in the DCT-II basis on this grid), so CG
    stops after one or two iterations.  ``method="jacobi"`` uses the diagonal
    instead.  Both iterate on the zero-mean subspace and check the true
    residual against ``tol`` relative to the mean-free right-hand side.
    """

    def __init__(self, grid: Grid, tol: float = 1e-8, maxiter: int | None = None,
                 method: str = "dct", workers: int = 1):
        if method not in ("dct", "jacobi"):
            raise ConfigurationError(f"unknown Poisson method {method!r}")
        self.grid = grid
        self.tol = tol
        self.method = method
        self.workers = workers
        self.maxiter = maxiter if maxiter is not None else 20 * (grid.nx + grid.ny) + 100
        self._lam = _neumann_eigenvalues(grid)
        hx2, hy2 = grid.hx ** 2, grid.hy ** 2
        d = np.full(grid.shape, 2.0 / hx2 + 2.0 / hy2)
        d[0, :] -= 1.0 / hx2
        d[-1, :] -= 1.0 / hx2
        d[:, 0] -= 1.0 / hy2
        d[:, -1] -= 1.0 / hy2
        self._dinv = 1.0 / d

    def _apply(self, x):
        return -kernels.lap_cell(x, self.grid.hx, self.grid.hy, 1)

    def _precond(self, r):
        if self.method == "jacobi":
            z = self._dinv * r
        else:
            rh = scipy.fft.dctn(r, type=2, norm="ortho", workers=self.workers)
            rh /= self._lam
            rh[0, 0] = 0.0
            z = scipy.fft.idctn(rh, type=2, norm="ortho", workers=self.workers)
        return z - _mean(z)

    def solve(self, rhs: np.ndarray, x0: np.ndarray | None = None) -> PoissonResult:
        g = self.grid
        b = g.check_cell(rhs, ())
        mean = _mean(b)
        # solve -lap(phi) = -(rhs - mean)
        b = -(b - mean)
        bnorm = np.sqrt(_dot(b, b))
        if bnorm == 0.0:
            return PoissonResult(np.zeros(g.shape), mean, 0, 0.0)
        x = np.zeros(g.shape) if x0 is None else np.array(x0, dtype=float)
        x -= _mean(x)
        r = b - self._apply(x)
        rn = np.sqrt(_dot(r, r))
        it = 0
        if rn > self.tol * bnorm:
            z = self._precond(r)
            p = z.copy()
            rz = _dot(r, z)
            while it < self.maxiter:
                it += 1
                ap = self._apply(p)
                a = rz / _dot(p, ap)
                x += a * p
                r -= a * ap
                rn = np.sqrt(_dot(r, r))
                if rn <= self.tol * bnorm:
                    break
                z = self._precond(r)
                rz_new = _dot(r, z)
                p = z + (rz_new / rz) * p
                rz = rz_new
            else:
                raise SolverError("Poisson CG did not converge", rn / bnorm, it)
        x -= _mean(x)
        return PoissonResult(x, mean, it, rn / bnorm)


def _sine_eigenvalues(n: int, h: float, m: int) -> np.ndarray:
    """First ``m`` eigenvalues ``(2 sin(pi k / 2n) / h)^2``, ``k = 1..m``, of the Dirichlet second difference."""
    k = np.arange(1, m + 1)
    return (2.0 * np.sin(np.pi * k / (2 * n)) / h) ** 2


class HelmholtzSolver:
    """Solver for ``(I - alpha lap) x = b`` with homogeneous Dirichlet data.

    ``layout`` is ``"cell"`` (odd-mirror ghosts), ``"xface"`` or ``"yface"``
    (boundary faces pinned to zero).  ``method="spectral"`` diagonalizes the
    operator with sine transforms: type II along a cell-centered direction,
    type I across the pinned faces; ``method="cg"`` runs the
    Jacobi-preconditioned CG kernel.  Either way the true residual is checked
    against ``tol``.
    """

    LAYOUTS = {"cell": 0, "xface": 2, "yface": 3}

    def __init__(self, grid: Grid, alpha: float, layout: str = "cell", method: str = "spectral",
                 tol: float = 1e-12, maxiter: int = 500, workers: int = 1):
        if layout not in self.LAYOUTS:
            raise ConfigurationError(f"unknown layout {layout!r}")
        if method not in ("spectral", "cg"):
            raise ConfigurationError(f"unknown diffusion solver {method!r}")
        if not alpha >= 0:
            raise ConfigurationError(f"alpha must be >= 0, got {alpha}")
        self.grid, self.alpha, self.layout, self.method = grid, alpha, layout, method
        self.code = self.LAYOUTS[layout]
        self.tol, self.maxiter, self.workers = tol, maxiter, workers
        nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
        if layout == "cell":
            lx, ly = _sine_eigenvalues(nx, hx, nx), _sine_eigenvalues(ny, hy, ny)
            self._types = (2, 2)
        elif layout == "xface":
            lx, ly = _sine_eigenvalues(nx, hx, nx - 1), _sine_eigenvalues(ny, hy, ny)
            self._types = (1, 2)
        else:
            lx, ly = _sine_eigenvalues(nx, hx, nx), _sine_eigenvalues(ny, hy, ny - 1)
            self._types = (2, 1)
        self._inv = 1.0 / (1.0 + alpha * (lx[:, None] + ly[None, :]))
        shape = {"cell": grid.shape, "xface": (nx + 1, ny), "yface": (nx, ny + 1)}[layout]
        self._dinv = 1.0 / _kernels_py._helmholtz_diag(shape, alpha, hx, hy, self.code)

    def _interior(self, a):
        if self.layout == "xface":
            return a[..., 1:-1, :]
        if self.layout == "yface":
            return a[..., :, 1:-1]
        return a

    def _spectral(self, b):
        tx, ty = self._types
        ax, ay = b.ndim - 2, b.ndim - 1
        c = scipy.fft.dst(self._interior(b), type=tx, axis=ax, norm="ortho", workers=self.workers)
        c = scipy.fft.dst(c, type=ty, axis=ay, norm="ortho", workers=self.workers)
        c *= self._inv
        c = scipy.fft.idst(c, type=ty, axis=ay, norm="ortho", workers=self.workers)
        c = scipy.fft.idst(c, type=tx, axis=ax, norm="ortho", workers=self.workers)
        if self.layout == "cell":
            return c
        x = np.zeros(b.shape)
        self._interior(x)[...] = c
        return x

    def _residual(self, x, b):
        g = self.grid
        return kernels.helmholtz_residual(x, b, self.alpha, g.hx, g.hy, self.code)

    def solve(self, b: np.ndarray) -> tuple[np.ndarray, int]:
        """Solve for one field or a stack of fields (leading axes); returns ``(x, iterations)``."""
        b = np.asarray(b, dtype=float)
        flat = b.reshape((-1,) + b.shape[-2:])
        g = self.grid
        if self.method == "spectral":
            x = self._spectral(flat)
            its = 0
            for xi, bi in zip(x, flat):
                rel = self._residual(xi, bi)
                if not rel <= self.tol:
                    raise SolverError("spectral diffusion solve lost accuracy", rel, 0)
        else:
            x = np.empty_like(flat)
            its = 0
            for n, bi in enumerate(flat):
                bi = np.ascontiguousarray(bi)
                x[n], it, rel = kernels.helmholtz(bi, self.alpha, g.hx, g.hy, self.code,
                                                  self.tol, self.maxiter, bi, self._dinv)
                its += it
                if not rel <= self.tol:
                    raise SolverError("implicit diffusion solve did not converge", rel, it)
        return x.reshape(b.shape), its


def solve_poisson(grid: Grid, rhs: np.ndarray, bc: str = "neumann0", tol: float = 1e-8,
                  maxiter: int | None = None, method: str = "dct",
                  x0: np.ndarray | None = None) -> PoissonResult:
    """Zero-mean solution of ``lap(phi) = rhs - mean(rhs)`` with Neumann data."""
    if bc != "neumann0":
        if bc in BCS:
            raise ConfigurationError("the pressure Poisson problem is Neumann only")
        _bc_code(bc)
    return PoissonSolver(grid, tol, maxiter, method).solve(rhs, x0)


def _dot(a, b):
    return float(np.add.reduce((a * b).ravel()))


def _mean(a):
    return float(np.add.reduce(a.ravel())) / a.size
