"""Fractional-step integrator for the coupled velocity / deformation / magnetization system.

One step of size ``dt`` from ``(v, F, M)`` at time ``t``:

1. ``F``: implicit diffusion ``(I - dt kappa lap) F' = F + dt (grad(v) F - (v.grad) F)``.
2. ``M``: explicit LLG update (Heun by default, forward Euler on request) followed
   by the nodewise projection onto the unit sphere.  The largest deviation
   from unit length before the projection is reported as the drift.
3. ``v``: implicit viscosity with explicit advection and the elastic, magnetic
   and external forces evaluated at ``F'``, ``M'`` and ``t + dt``, then a
   pressure projection.  The stored pressure is the projection potential, so it
   also absorbs the gradient part of the magnetic stress.

Steps 1 and 2 use the beginning-of-step velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mvsim._backend import kernels as _default_kernels
from mvsim.elastic import ElasticDensity, get_density
from mvsim.errors import DegeneracyError, SolverError, StepFailure, StructuralError
from mvsim.grid import (FaceVector, Grid, HelmholtzSolver, PoissonSolver, cells_to_faces,
                        divergence, gradient, laplacian, velocity_at_centers)
from mvsim.scenario import (HExtSampler, Perturbation, Scenario, bump_F, twist_M, uniform_M,
                            vortex_velocity)
from mvsim.state import (StateSnapshot, check_state, norm_l2, read_snapshot,
                         renormalize_magnetization, unit_deviation)

HELMHOLTZ_TOL = 1e-13


# -- force assemblies ---------------------------------------------------------


def _odd_pad(F: np.ndarray) -> np.ndarray:
    """One ghost layer with the Dirichlet (odd) mirror; corners reflect twice."""
    P = np.empty(F.shape[:-2] + (F.shape[-2] + 2, F.shape[-1] + 2))
    P[..., 1:-1, 1:-1] = F
    P[..., 0, 1:-1] = -F[..., 0, :]
    P[..., -1, 1:-1] = -F[..., -1, :]
    P[..., :, 0] = -P[..., :, 1]
    P[..., :, -1] = -P[..., :, -2]
    return P


def _div_padded_tensor(grid: Grid, S: np.ndarray, kernels=None) -> FaceVector:
    """Row-wise divergence of a cell tensor given with one ghost layer, onto the faces.

    ``S`` has shape ``(2, 2, nx+2, ny+2)``.  Normal derivatives are compact
    differences of neighbouring cells; the shear terms are differenced
    between cell corners, where ``S`` is the four-cell average.
    """
    k = kernels or _default_kernels
    return FaceVector(*k.tensor_div(np.ascontiguousarray(S), grid.hx, grid.hy))


def elastic_stress_divergence(grid: Grid, F: np.ndarray, W: ElasticDensity,
                              kernels=None) -> FaceVector:
    """``div(W'(F) F^T)`` on the interior faces (``F`` with Dirichlet data).

    The stress is formed nodewise on the ghost-padded field, so the wall
    faces see the mirrored stress; the divergence follows
    :func:`_div_padded_tensor`.
    """
    k = kernels or _default_kernels
    F = grid.check_cell(F, (2, 2))
    Fp = _odd_pad(F)
    Wp = np.ascontiguousarray(W.derivative(Fp))
    return FaceVector(*k.stress_div(Wp, Fp, grid.hx, grid.hy))


def magnetic_stress_divergence(grid: Grid, M: np.ndarray, kernels=None) -> FaceVector:
    """``div((grad M)^T grad M)`` through ``grad(|grad M|^2 / 2) + (grad M)^T lap M``.

    Both parts are formed at the faces: the first as a compact difference of
    the nodal ``|grad M|^2``, the second as the compact difference of each
    component times the face average of its Laplacian.  Neumann data.
    """
    k = kernels or _default_kernels
    M = np.ascontiguousarray(grid.check_cell(M, (3,)))
    return FaceVector(*k.magnetic_div(M, grid.hx, grid.hy))


def magnetic_stress_divergence_direct(grid: Grid, M: np.ndarray) -> FaceVector:
    """Independent assembly: divergence of the nodal matrix ``(grad M)^T grad M``.

    The Jacobian is taken with centered differences over even-mirror ghosts,
    so this form shares no stencil with :func:`magnetic_stress_divergence`.
    """
    M = grid.check_cell(M, (3,))
    P = np.pad(M, ((0, 0), (2, 2), (2, 2)), mode="symmetric")
    Jx = (P[:, 2:, 1:-1] - P[:, :-2, 1:-1]) / (2.0 * grid.hx)
    Jy = (P[:, 1:-1, 2:] - P[:, 1:-1, :-2]) / (2.0 * grid.hy)
    S = np.empty((2, 2) + Jx.shape[1:])
    S[0, 0] = np.add.reduce(Jx * Jx, axis=0)
    S[1, 1] = np.add.reduce(Jy * Jy, axis=0)
    S[0, 1] = S[1, 0] = np.add.reduce(Jx * Jy, axis=0)
    return _div_padded_tensor(grid, S)


def _sample(sampler: HExtSampler, grid: Grid, t: float):
    X, Y = grid.cell_centers()
    return sampler.field(t, X, Y)


def external_field_force(grid: Grid, M: np.ndarray, H, t: float = 0.0) -> FaceVector:
    """``(grad H_ext)^T M`` formed at the cells and averaged onto the faces.

    ``H`` is an :class:`HExtSampler` or a precomputed Jacobian of shape
    ``(3, 2, nx, ny)``.
    """
    M = grid.check_cell(M, (3,))
    if isinstance(H, HExtSampler):
        X, Y = grid.cell_centers()
        J = H.jacobian(t, X, Y)
    else:
        J = np.asarray(H, dtype=float)
        if J.shape != (3, 2) + grid.shape:
            raise StructuralError(f"field Jacobian must have shape (3, 2, nx, ny), got {J.shape}")
    f = np.add.reduce(J * M[:, None], axis=0)
    return cells_to_faces(grid, f)


def _field_array(grid: Grid, H, t: float) -> np.ndarray:
    if isinstance(H, HExtSampler):
        return _sample(H, grid, t)
    H = np.asarray(H, dtype=float)
    if H.shape != (3,) + grid.shape:
        raise StructuralError(f"external field must have shape (3, nx, ny), got {H.shape}")
    return H


def residual_field(grid: Grid, M: np.ndarray, H, t: float = 0.0) -> np.ndarray:
    """``H_ext - (M . e3) e3``."""
    M = grid.check_cell(M, (3,))
    Hr = _field_array(grid, H, t).copy()
    Hr[2] -= M[2]
    return Hr


def effective_field(grid: Grid, M: np.ndarray, H, t: float = 0.0) -> np.ndarray:
    """``lap M - (M . e3) e3 + H_ext`` with Neumann data."""
    return laplacian(grid, M, "neumann0") + residual_field(grid, M, H, t)


def llg_rhs(grid: Grid, M: np.ndarray, v: FaceVector, H, t: float = 0.0,
            kernels=None) -> np.ndarray:
    """``lap M + |grad M|^2 M - M x H_eff - M x (M x H_res) - (v . grad) M``."""
    k = kernels or _default_kernels
    M = grid.check_cell(M, (3,))
    uc, wc = velocity_at_centers(grid, grid.check_faces(v))
    Hc = np.ascontiguousarray(_field_array(grid, H, t))
    return k.llg_rhs(np.ascontiguousarray(M), np.ascontiguousarray(uc),
                     np.ascontiguousarray(wc), Hc, grid.hx, grid.hy)


# -- stepping -------------------------------------------------------------------


@dataclass
class StepInfo:
    """Per-step solver report."""

    dt: float
    m_drift: float
    unit_error: float
    div_residual: float
    poisson_iterations: int = 0
    poisson_mean_removed: float = 0.0
    helmholtz_iterations: int = 0
    halved: bool = False


@dataclass
class RunResult:
    """Output of :meth:`CoupledSolver.run`."""

    state: StateSnapshot
    series: "object"
    infos: list[StepInfo] = field(default_factory=list)
    snapshots: list[tuple[int, StateSnapshot]] = field(default_factory=list)
    n_halvings: int = 0


class CoupledSolver:
    """Integrator bound to one :class:`Scenario`.

    Parameters
    ----------
    scenario : Scenario
        Validated run description.
    kernels : module, optional
        Kernel backend; defaults to the one selected at import.
    workers : int
        Thread count handed to the FFT in the pressure preconditioner.
    """

    def __init__(self, scenario: Scenario, kernels=None, workers: int = 1):
        self.scenario = scenario
        self.grid = scenario.grid
        self.kernels = kernels or _default_kernels
        self.W = get_density(scenario.density)
        self.hext = scenario.hext_sampler()
        self.poisson = PoissonSolver(self.grid, scenario.tol_poisson, method=scenario.poisson,
                                     workers=workers)
        self.workers = workers
        self._diffusion_cache = {}
        self._X, self._Y = self.grid.cell_centers()
        self._static_H = None
        if not self.hext.time_dependent:
            self._static_H = np.ascontiguousarray(self.hext.field(0.0, self._X, self._Y))
        self._has_jacobian = self.hext.kind in ("linear", "wave") and not self.hext.is_zero
        self._static_J = None
        if self._has_jacobian and not self.hext.time_dependent:
            self._static_J = self.hext.jacobian(0.0, self._X, self._Y)

    # -- external field ------------------------------------------------------

    def field(self, t: float) -> np.ndarray:
        if self._static_H is not None:
            return self._static_H
        return np.ascontiguousarray(self.hext.field(t, self._X, self._Y))

    def jacobian(self, t: float) -> np.ndarray | None:
        if not self._has_jacobian:
            return None
        if self._static_J is not None:
            return self._static_J
        return self.hext.jacobian(t, self._X, self._Y)

    # -- initial data --------------------------------------------------------

    def initial_state(self, perturbation: Perturbation | None = None) -> StateSnapshot:
        """Build ``(v0, F0, M0)`` from the presets, then project ``v0`` and normalize ``M0``."""
        sc, g = self.scenario, self.grid
        if sc.snapshot:
            sg, st = read_snapshot(sc.snapshot)
            if (sg.nx, sg.ny) != (g.nx, g.ny) or not np.allclose([sg.hx, sg.hy], [g.hx, g.hy]):
                raise StructuralError(f"snapshot grid {sg} does not match the scenario grid {g}")
            v, F, M = st.v, st.F.copy(), st.M.copy()
        else:
            v = vortex_velocity(g, sc.v0_amp) if sc.v0 == "vortex" else g.zeros_faces()
            F = bump_F(g, sc.F0_amp, sc.F0_component) if sc.F0 == "bump" else g.zeros_cell(2, 2)
            if sc.M0 == "twist":
                M = twist_M(g, sc.M0_amp, sc.M0_tilt)
            else:
                M = uniform_M(g, (sc.M0_x, sc.M0_y, sc.M0_z))
        if perturbation is not None and perturbation.eps > 0:
            v = perturbation.apply_v(g, v)
            F = perturbation.apply_F(g, F)
            M = perturbation.apply_M(g, M)
        v = FaceVector(v.u.copy(), v.w.copy())
        v.u[0] = v.u[-1] = 0.0
        v.w[:, 0] = v.w[:, -1] = 0.0
        p = np.zeros(g.shape)
        if sc.freeze_velocity:
            v = FaceVector(v.u * 0.0, v.w * 0.0)
        else:
            div = divergence(g, v)
            if np.any(div != 0.0):
                res = self.poisson.solve(div)
                gp = gradient(g, res.phi)
                v = FaceVector(v.u - gp.u, v.w - gp.w)
        M = renormalize_magnetization(M, sc.eps_renorm)
        state = StateSnapshot(0.0, v, p, F, M)
        check_state(g, state)
        return state

    # -- one step --------------------------------------------------------------

    def _diffusion(self, dt: float):
        """The three implicit solvers for step size ``dt`` (cached)."""
        solvers = self._diffusion_cache.get(dt)
        if solvers is None:
            sc, g = self.scenario, self.grid
            make = lambda alpha, layout: HelmholtzSolver(  # noqa: E731
                g, alpha, layout, sc.diffusion, HELMHOLTZ_TOL, workers=self.workers)
            solvers = (make(dt * sc.kappa, "cell"), make(dt * sc.nu, "xface"),
                       make(dt * sc.nu, "yface"))
            if len(self._diffusion_cache) > 4:
                self._diffusion_cache.clear()
            self._diffusion_cache[dt] = solvers
        return solvers

    def step(self, state: StateSnapshot, dt: float | None = None) -> tuple[StateSnapshot, StepInfo]:
        """Advance by one fractional step; raises :class:`StepFailure` on breakdown."""
        dt = self.scenario.dt if dt is None else dt
        try:
            new, info = self._step(state, dt)
        except (SolverError, DegeneracyError, FloatingPointError) as exc:
            raise StepFailure(f"step from t={state.t:.6g} failed: {exc}", state.t, exc) from exc
        if not new.is_finite():
            raise StepFailure(f"non-finite values after step from t={state.t:.6g}", state.t)
        return new, info

    def _step(self, state: StateSnapshot, dt: float):
        sc, g, k = self.scenario, self.grid, self.kernels
        hx, hy = g.hx, g.hy
        t0, t1 = state.t, state.t + dt
        v = state.v
        frozen = sc.freeze_velocity
        hiters = 0

        solve_F, solve_u, solve_w = self._diffusion(dt)

        # (a) deformation gradient
        if frozen:
            rhsF = state.F
        else:
            rhsF = state.F + dt * k.transport_F(state.F, v.u, v.w, hx, hy)
        F_new, hiters = solve_F.solve(rhsF)

        # (b) magnetization
        uc, wc = velocity_at_centers(g, v)
        uc = np.ascontiguousarray(uc)
        wc = np.ascontiguousarray(wc)
        M = state.M
        k1 = k.llg_rhs(M, uc, wc, self.field(t0), hx, hy)
        if sc.llg_scheme == "heun":
            k2 = k.llg_rhs(M + dt * k1, uc, wc, self.field(t1), hx, hy)
            M_pre = M + (0.5 * dt) * (k1 + k2)
        else:
            M_pre = M + dt * k1
        M_new, drift, unit_err, nmin = k.renormalize(M_pre, sc.eps_renorm)
        if not nmin >= sc.eps_renorm:
            raise DegeneracyError(f"|M| = {nmin:.3e} fell below {sc.eps_renorm:g}")

        # (c) velocity
        if frozen:
            info = StepInfo(dt, drift, unit_err, 0.0, helmholtz_iterations=hiters)
            return StateSnapshot(t1, v, state.p, F_new, M_new, state.meta), info
        fe = elastic_stress_divergence(g, F_new, self.W, k)
        fm = magnetic_stress_divergence(g, M_new, k)
        au, aw = k.advect_mac(v.u, v.w, v.u, v.w, hx, hy)
        ru = v.u + dt * (fe.u - fm.u - au)
        rw = v.w + dt * (fe.w - fm.w - aw)
        J = self.jacobian(t1)
        if J is not None:
            fx = external_field_force(g, M_new, J)
            ru += dt * fx.u
            rw += dt * fx.w
        us, it = solve_u.solve(ru)
        hiters += it
        ws, it = solve_w.solve(rw)
        hiters += it
        res = self.poisson.solve(divergence(g, FaceVector(us, ws)) / dt, x0=state.p)
        u_new, w_new, div_sq, v_sq = k.project(us, ws, res.phi, dt, hx, hy)
        div_res = math.sqrt(div_sq * g.cell_area)
        bound = sc.tol_div * (math.sqrt(v_sq * g.cell_area) + 1.0)
        if not div_res <= bound:
            raise SolverError(f"divergence residual {div_res:.3e} exceeds {bound:.3e}",
                              div_res, res.iterations)
        info = StepInfo(dt, drift, unit_err, div_res, res.iterations, res.mean_removed, hiters)
        return StateSnapshot(t1, FaceVector(u_new, w_new), res.phi, F_new, M_new,
                             state.meta), info

    def step_with_retry(self, state: StateSnapshot) -> tuple[StateSnapshot, StepInfo]:
        """One step of size ``dt``; on failure retry once as two steps of ``dt/2``."""
        try:
            return self.step(state)
        except StepFailure:
            half = 0.5 * self.scenario.dt
            mid, info1 = self.step(state, half)
            new, info2 = self.step(mid, half)
            info = StepInfo(self.scenario.dt, max(info1.m_drift, info2.m_drift),
                            info2.unit_error, info2.div_residual, info2.poisson_iterations,
                            info2.poisson_mean_removed,
                            info1.helmholtz_iterations + info2.helmholtz_iterations, True)
            return new, info

    # -- whole run -------------------------------------------------------------

    def run(self, state: StateSnapshot | None = None, n_steps: int | None = None,
            perturbation: Perturbation | None = None,
            on_snapshot: Callable[[int, StateSnapshot], None] | None = None,
            on_step: Callable[[int, StateSnapshot, StepInfo], None] | None = None,
            diagnostics: bool = True) -> RunResult:
        """Integrate from ``state`` (default: the scenario's initial data) to ``T``.

        Snapshots are emitted every ``snapshot_stride`` steps (and at the
        start) either to ``on_snapshot`` or into the result.  A step that
        fails after the halving retry raises :class:`StepFailure` carrying the
        failing time and the partial :class:`RunResult`.
        """
        from mvsim.diagnostics import DiagnosticsSeries

        sc = self.scenario
        if state is None:
            state = self.initial_state(perturbation)
        n_steps = sc.n_steps if n_steps is None else n_steps
        series = DiagnosticsSeries(self.grid, self.W, sc.kappa, self.hext) if diagnostics else None
        result = RunResult(state, series)
        stride = sc.snapshot_stride

        def emit(n, st):
            if on_snapshot is not None:
                on_snapshot(n, st.copy())
            else:
                result.snapshots.append((n, st.copy()))

        if series is not None:
            series.append(state, StepInfo(0.0, 0.0, unit_deviation(state.M),
                                          norm_l2(self.grid, divergence(self.grid, state.v))))
        if stride > 0:
            emit(0, state)
        t_start = state.t
        for n in range(1, n_steps + 1):
            try:
                state, info = self.step_with_retry(state)
            except StepFailure as exc:
                result.state = state
                exc.partial = result
                raise
            # keep time on the grid t0 + n dt to avoid drift from repeated addition
            state.t = t_start + n * sc.dt
            result.n_halvings += info.halved
            result.infos.append(info)
            if series is not None:
                series.append(state, info)
            if on_step is not None:
                on_step(n, state, info)
            if stride > 0 and n % stride == 0:
                emit(n, state)
        result.state = state
        return result


def run(scenario: Scenario, **kwargs) -> RunResult:
    """Convenience wrapper: ``CoupledSolver(scenario).run(**kwargs)``."""
    workers = kwargs.pop("workers", 1)
    return CoupledSolver(scenario, workers=workers).run(**kwargs)
