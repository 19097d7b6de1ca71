"""Run description (:class:`Scenario`), initial-data presets and the external field."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from mvsim.errors import ConfigurationError
from mvsim.grid import FaceVector, Grid


@dataclass(frozen=True)
class HExtSampler:
    """Closed-form external field ``H_ext(t, x)`` with its Jacobian and time derivative.

    Families
    --------
    zero
        ``H = 0``.
    uniform
        ``H = (hx, hy, hz)``.
    rotating
        ``H = amp (cos(omega t), sin(omega t), 0) + hz e3``.
    linear
        ``H = (a x, 0, 0)``.
    wave
        ``H = amp cos(omega t) (cos(k x), sin(k y), cos(k x) cos(k y))``.
    """

    kind: str = "zero"
    amp: float = 0.0
    hx: float = 0.0
    hy: float = 0.0
    hz: float = 0.0
    a: float = 0.0
    omega: float = 0.0
    k: float = float(np.pi)

    KINDS = ("zero", "uniform", "rotating", "linear", "wave")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown external field {self.kind!r}; known: {self.KINDS}")

    @property
    def time_dependent(self) -> bool:
        return self.kind in ("rotating", "wave") and self.omega != 0.0

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "uniform":
            return self.hx == self.hy == self.hz == 0.0
        if self.kind == "rotating":
            return self.amp == 0.0 and self.hz == 0.0
        if self.kind == "linear":
            return self.a == 0.0
        return self.amp == 0.0

    def field(self, t: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        H = np.zeros((3,) + np.shape(X))
        if self.kind == "uniform":
            H[0], H[1], H[2] = self.hx, self.hy, self.hz
        elif self.kind == "rotating":
            H[0] = self.amp * np.cos(self.omega * t)
            H[1] = self.amp * np.sin(self.omega * t)
            H[2] = self.hz
        elif self.kind == "linear":
            H[0] = self.a * X
        elif self.kind == "wave":
            s = self.amp * np.cos(self.omega * t)
            H[0] = s * np.cos(self.k * X)
            H[1] = s * np.sin(self.k * Y)
            H[2] = s * np.cos(self.k * X) * np.cos(self.k * Y)
        return H

    def jacobian(self, t: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """``J[k, b] = d H_k / d x_b``, shape ``(3, 2, ...)``."""
        J = np.zeros((3, 2) + np.shape(X))
        if self.kind == "linear":
            J[0, 0] = self.a
        elif self.kind == "wave":
            s = self.amp * np.cos(self.omega * t)
            k = self.k
            J[0, 0] = -s * k * np.sin(k * X)
            J[1, 1] = s * k * np.cos(k * Y)
            J[2, 0] = -s * k * np.sin(k * X) * np.cos(k * Y)
            J[2, 1] = -s * k * np.cos(k * X) * np.sin(k * Y)
        return J

    def dt_field(self, t: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        D = np.zeros((3,) + np.shape(X))
        if self.kind == "rotating":
            D[0] = -self.amp * self.omega * np.sin(self.omega * t)
            D[1] = self.amp * self.omega * np.cos(self.omega * t)
        elif self.kind == "wave":
            s = -self.amp * self.omega * np.sin(self.omega * t)
            D[0] = s * np.cos(self.k * X)
            D[1] = s * np.sin(self.k * Y)
            D[2] = s * np.cos(self.k * X) * np.cos(self.k * Y)
        return D


@dataclass(frozen=True)
class Scenario:
    """Complete, validated run description.  Field names mirror the scenario file keys."""

    # [domain]
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 32
    ny: int = 32
    # [physics]
    kappa: float = 0.1
    nu: float = 1.0
    density: str = "quad"
    # [time]
    dt: float = 5e-5
    T: float = 0.0
    snapshot_stride: int = 0
    # [initial]
    v0: str = "zero"
    v0_amp: float = 0.0
    F0: str = "zero"
    F0_amp: float = 0.0
    F0_component: str = "11"
    M0: str = "uniform"
    M0_x: float = 1.0
    M0_y: float = 0.0
    M0_z: float = 0.0
    M0_amp: float = 0.0
    M0_tilt: float = 0.0
    snapshot: str = ""
    # [external]
    hext: str = "zero"
    hext_amp: float = 0.0
    hext_x: float = 0.0
    hext_y: float = 0.0
    hext_z: float = 0.0
    hext_a: float = 0.0
    hext_omega: float = 0.0
    hext_k: float = float(np.pi)
    # [tolerances]
    tol_poisson: float = 1e-8
    tol_div: float = 1e-8
    eps_renorm: float = 1e-8
    cfl_safety: float = 0.4
    C_e: float = 1.0
    # [run]
    seed: int = 0
    freeze_velocity: bool = False
    llg_scheme: str = "heun"
    poisson: str = "dct"
    diffusion: str = "spectral"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Raise :class:`ConfigurationError` (with ``field`` set) on the first bad value."""
        from mvsim.elastic import get_density

        def bad(name, message):
            raise ConfigurationError(message, field=name)

        for name in ("nx", "ny"):
            if getattr(self, name) < 3:
                bad(name, f"{name} must be >= 3, got {getattr(self, name)}")
        for name in ("Lx", "Ly"):
            if not (getattr(self, name) > 0 and np.isfinite(getattr(self, name))):
                bad(name, f"{name} must be positive and finite, got {getattr(self, name)}")
        for name in ("kappa", "nu", "dt"):
            if not getattr(self, name) > 0:
                bad(name, f"{name} must be > 0, got {getattr(self, name)}")
        try:
            get_density(self.density)
        except ConfigurationError as exc:
            bad("density", str(exc))
        if not self.T >= 0:
            bad("T", f"T must be >= 0, got {self.T}")
        if self.snapshot_stride < 0:
            bad("snapshot_stride", "snapshot_stride must be >= 0")
        if not self.cfl_safety > 0:
            bad("cfl_safety", "cfl_safety must be > 0")
        bound = self.cfl_safety * self.grid.hmin ** 2 / 4.0
        # relative slack so that dt set exactly at the bound survives rounding of h^2
        if self.dt > bound * (1.0 + 1e-12):
            bad("dt", f"dt = {self.dt:g} exceeds cfl_safety*h^2/4 = {bound:g}")
        for name in ("tol_poisson", "tol_div", "eps_renorm", "C_e"):
            if not getattr(self, name) > 0:
                bad(name, f"{name} must be > 0")
        if self.v0 not in V0_PRESETS:
            bad("v0", f"unknown v0 preset {self.v0!r}; known: {V0_PRESETS}")
        if self.F0 not in F0_PRESETS:
            bad("F0", f"unknown F0 preset {self.F0!r}; known: {F0_PRESETS}")
        if self.F0_component not in F0_COMPONENTS:
            bad("F0_component",
                f"unknown F0_component {self.F0_component!r}; known: {sorted(F0_COMPONENTS)}")
        if self.M0 not in M0_PRESETS:
            bad("M0", f"unknown M0 preset {self.M0!r}; known: {M0_PRESETS}")
        if self.M0 == "uniform" and self.M0_x == self.M0_y == self.M0_z == 0.0:
            bad("M0", "uniform M0 needs a nonzero direction")
        if self.llg_scheme not in ("heun", "euler"):
            bad("llg_scheme", f"unknown llg_scheme {self.llg_scheme!r}")
        if self.poisson not in ("dct", "jacobi"):
            bad("poisson", f"unknown poisson method {self.poisson!r}")
        if self.diffusion not in ("cg", "spectral"):
            bad("diffusion", f"unknown diffusion solver {self.diffusion!r}")
        try:
            self.hext_sampler()
        except ConfigurationError as exc:
            bad("hext", str(exc))

    @property
    def grid(self) -> Grid:
        return Grid.from_extent(self.nx, self.ny, self.Lx, self.Ly)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def hext_sampler(self) -> HExtSampler:
        return HExtSampler(self.hext, self.hext_amp, self.hext_x, self.hext_y, self.hext_z,
                           self.hext_a, self.hext_omega, self.hext_k)

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


V0_PRESETS = ("zero", "vortex")
F0_PRESETS = ("zero", "bump")
M0_PRESETS = ("uniform", "twist")
F0_COMPONENTS = {"11": [(0, 0)], "12": [(0, 1)], "21": [(1, 0)], "22": [(1, 1)],
                 "diag": [(0, 0), (1, 1)], "all": [(0, 0), (0, 1), (1, 0), (1, 1)]}


def streamfunction_velocity(grid: Grid, psi_corner: np.ndarray) -> FaceVector:
    """Discrete curl of a corner streamfunction; exactly divergence-free on the MAC grid."""
    u = (psi_corner[:, 1:] - psi_corner[:, :-1]) / grid.hy
    w = -(psi_corner[1:, :] - psi_corner[:-1, :]) / grid.hx
    return FaceVector(u, w)


def _corner_coords(grid: Grid):
    x = np.arange(grid.nx + 1) * grid.hx
    y = np.arange(grid.ny + 1) * grid.hy
    return np.meshgrid(x, y, indexing="ij")


def vortex_velocity(grid: Grid, amp: float, mode: tuple[int, int] = (1, 1)) -> FaceVector:
    """Cellular flow from ``psi = amp sin^2(m pi x/Lx) sin^2(n pi y/Ly)``; no-slip at walls."""
    X, Y = _corner_coords(grid)
    m, n = mode
    psi = amp * np.sin(m * np.pi * X / grid.Lx) ** 2 * np.sin(n * np.pi * Y / grid.Ly) ** 2
    psi[0, :] = psi[-1, :] = 0.0
    psi[:, 0] = psi[:, -1] = 0.0
    return streamfunction_velocity(grid, psi)


def bump_F(grid: Grid, amp: float, component: str, mode: tuple[int, int] = (1, 1)) -> np.ndarray:
    X, Y = grid.cell_centers()
    m, n = mode
    s = amp * np.sin(m * np.pi * X / grid.Lx) * np.sin(n * np.pi * Y / grid.Ly)
    F = np.zeros((2, 2) + grid.shape)
    for a, b in F0_COMPONENTS[component]:
        F[a, b] = s
    return F


def twist_M(grid: Grid, amp: float, tilt: float) -> np.ndarray:
    """``M = (cos psi cos th, cos psi sin th, sin psi)`` with Neumann-compatible angles."""
    X, Y = grid.cell_centers()
    th = amp * np.cos(np.pi * X / grid.Lx)
    ps = tilt * np.cos(np.pi * Y / grid.Ly)
    return np.stack([np.cos(ps) * np.cos(th), np.cos(ps) * np.sin(th), np.sin(ps)])


def uniform_M(grid: Grid, m0) -> np.ndarray:
    m0 = np.asarray(m0, dtype=float)
    m0 = m0 / np.sqrt(np.dot(m0, m0))
    return np.broadcast_to(m0[:, None, None], (3,) + grid.shape).copy()


@dataclass(frozen=True)
class Perturbation:
    """Initial-data bump of amplitude ``eps`` added to ``v``, ``F`` and ``M``.

    The shapes differ from every preset so the difference is not a rescaled
    copy of the base state: a (2,1) cellular flow, an all-entries (1,2)
    sine bump in ``F`` and a cosine bump in the out-of-plane part of ``M``.
    """

    eps: float = 0.0
    kind: str = "bump"

    def __post_init__(self):
        if self.eps < 0:
            raise ConfigurationError("perturbation amplitude must be >= 0")
        if self.kind != "bump":
            raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")

    def apply_v(self, grid: Grid, v: FaceVector) -> FaceVector:
        dv = vortex_velocity(grid, self.eps, (2, 1))
        return FaceVector(v.u + dv.u, v.w + dv.w)

    def apply_F(self, grid: Grid, F: np.ndarray) -> np.ndarray:
        return F + bump_F(grid, self.eps, "all", (1, 2))

    def apply_M(self, grid: Grid, M: np.ndarray) -> np.ndarray:
        X, Y = grid.cell_centers()
        dM = np.zeros_like(M)
        dM[2] = self.eps * np.cos(np.pi * X / grid.Lx) * np.cos(2 * np.pi * Y / grid.Ly)
        dM[0] = self.eps * np.cos(2 * np.pi * X / grid.Lx)
        return M + dM
