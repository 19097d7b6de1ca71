"""Energy bookkeeping, constraint monitors and the comparison-ODE utilities.

The discrete energy is

    E = 1/2 ||v||^2 + sum W(F) hx hy + 1/2 |M|_{H1}^2 + 1/2 ||M_3||^2

with the Neumann H1 seminorm of :mod:`mvsim.state`.  A
:class:`DiagnosticsSeries` records one row per step and derives the
cumulative dissipation (trapezoid rule in time) and the energy-inequality
residual from those rows.

The inequality's dissipation omits the magnetic term ``||M x H_eff||^2``, so
its residual is typically strictly negative.  ``energy_defect`` adds that term
back: for ``H_ext = 0`` it is the defect of the exact energy identity and
measures the consistency error of the scheme with either sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from mvsim._backend import kernels as _kernels
from mvsim.elastic import ElasticDensity, Quadratic
from mvsim.errors import ConfigurationError
from mvsim.grid import Grid, laplacian
from mvsim.scenario import HExtSampler
from mvsim.state import StateSnapshot, norm_l1, norm_l2, seminorm_h1_sq

COLUMNS = (
    "t", "dt", "energy", "grad_v_sq", "elastic_dissipation", "lap_M_sq", "F_sq", "grad_F_sq",
    "grad_M_sq", "m_drift", "unit_error", "div_residual", "hext_l1", "hext_dt_l1",
    "cum_dissipation", "cum_hext_dt_l1", "energy_residual", "grad_M_l4_4", "hext_l2_sq",
    "M3_sq", "F4sq_grad_v", "llg_dissipation", "cum_llg_dissipation", "energy_defect",
)


def _qsum(a):
    return float(np.add.reduce(np.ravel(a)))


def elastic_energy(grid: Grid, F: np.ndarray, W: ElasticDensity) -> float:
    return _qsum(W.evaluate(grid.check_cell(F, (2, 2)))) * grid.cell_area


def elastic_dissipation(grid: Grid, F: np.ndarray, W: ElasticDensity, kappa: float) -> float:
    """``kappa * sum W''(F)[grad F] : grad F`` over the faces, Dirichlet data.

    Differences and the Hessian base point live on the faces (the base point
    is the two-cell average); wall faces see the odd ghost and carry half
    weight, matching :func:`mvsim.state.seminorm_h1_sq`.
    """
    F = grid.check_cell(F, (2, 2))
    total = 0.0
    for axis, h in ((2, grid.hx), (3, grid.hy)):
        Fm = np.moveaxis(F, axis, -1)
        D = np.diff(Fm, axis=-1) / h
        A = 0.5 * (Fm[..., 1:] + Fm[..., :-1])
        total += _qsum(W.hessian_apply(A, D) * D)
        for edge in (Fm[..., :1], Fm[..., -1:]):
            Db = 2.0 * edge / h
            total += 0.5 * _qsum(W.hessian_apply(np.zeros_like(Db), Db) * Db)
    return kappa * total * grid.cell_area


def total_energy(grid: Grid, state: StateSnapshot, W: ElasticDensity) -> float:
    """Kinetic + elastic + exchange + stray-field energy of ``state``."""
    return (0.5 * norm_l2(grid, state.v) ** 2 + elastic_energy(grid, state.F, W)
            + 0.5 * seminorm_h1_sq(grid, state.M, "neumann0")
            + 0.5 * norm_l2(grid, state.M[2]) ** 2)


def _hext_norms(grid: Grid, hext: HExtSampler, t: float):
    X, Y = grid.cell_centers()
    H = hext.field(t, X, Y)
    D = hext.dt_field(t, X, Y)
    return norm_l1(grid, H), norm_l1(grid, D), norm_l2(grid, H) ** 2


def llg_dissipation(grid: Grid, M: np.ndarray, H: np.ndarray | None = None) -> float:
    """``||M x H_eff||^2`` with ``H_eff = lap M - M_3 e_3 + H``."""
    He = laplacian(grid, M, "neumann0")
    He[2] -= M[2]
    if H is not None:
        He += H
    c = np.cross(M, He, axis=0)
    return _qsum(c * c) * grid.cell_area


def measure(grid: Grid, state: StateSnapshot, W: ElasticDensity, kappa: float,
            kernels=None, H: np.ndarray | None = None) -> dict:
    """Per-state quantities of one diagnostics row (no time integrals).

    The grid sums come from one fused kernel pass.  For the quadratic density
    ``W'' = I``, so the elastic terms reduce to ``||F||^2 / 2`` and
    ``kappa |F|_{H1}^2``; other densities use the general assemblies.
    """
    k = kernels or _kernels
    A = grid.cell_area
    v_sq, gv, F_sq, gF, F4, gM, lM, g4, m3, llg = (
        s * A for s in k.diag_sums(state.v.u, state.v.w, state.F, state.M, H, grid.hx, grid.hy))
    if isinstance(W, Quadratic):
        w_int = 0.5 * F_sq
        diss = kappa * gF
    else:
        w_int = elastic_energy(grid, state.F, W)
        diss = elastic_dissipation(grid, state.F, W, kappa)
    return {
        "energy": 0.5 * v_sq + w_int + 0.5 * gM + 0.5 * m3,
        "grad_v_sq": gv,
        "elastic_dissipation": diss,
        "lap_M_sq": lM,
        "F_sq": F_sq,
        "grad_F_sq": gF,
        "grad_M_sq": gM,
        "grad_M_l4_4": g4,
        "M3_sq": m3,
        "F4sq_grad_v": math.sqrt(F4 * A) * math.sqrt(gv),
        "llg_dissipation": llg,
    }


def cumulative_trapezoid(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Running trapezoid integral, starting at zero; summed left to right."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))
    return out


def energy_inequality_residual(energy, cum_dissipation, hext_l1, cum_hext_dt_l1) -> np.ndarray:
    """``E(t) + int D - E(0) - 2 sup_{s<=t} ||H(s)||_1 - int ||dH/dt||_1``.

    Nonpositive values mean the dissipation inequality holds at that time.
    """
    energy = np.asarray(energy, dtype=float)
    sup_h = np.maximum.accumulate(np.asarray(hext_l1, dtype=float))
    return energy + np.asarray(cum_dissipation) - energy[0] - 2.0 * sup_h - np.asarray(
        cum_hext_dt_l1)


def tol_energy(t, dt: float, h: float, C_e: float):
    """Discrete slack ``C_e (dt + h^2) t`` allowed on the residual."""
    return C_e * (dt + h * h) * np.asarray(t, dtype=float)


def monotonicity_defect(energy) -> float:
    """Largest rise of ``E`` above its running minimum, relative to ``E(0)``."""
    E = np.asarray(energy, dtype=float)
    rise = float(np.max(E - np.minimum.accumulate(E)))
    return rise / abs(E[0]) if E[0] != 0 else rise


class DiagnosticsSeries:
    """Row-per-step record; derived columns are computed from the raw ones."""

    def __init__(self, grid: Grid, W: ElasticDensity, kappa: float, hext: HExtSampler | None = None):
        self.grid = grid
        self.W = W
        self.kappa = kappa
        self.hext = hext if hext is not None else HExtSampler()
        self.rows: list[dict] = []
        self.smallness: float | None = None
        self._static = None
        if not self.hext.time_dependent:
            self._static = _hext_norms(grid, self.hext, 0.0)

    def __len__(self):
        return len(self.rows)

    def append(self, state: StateSnapshot, info) -> None:
        if self.rows and not state.t > self.rows[-1]["t"]:
            raise ConfigurationError("diagnostics times must increase strictly")
        h1, hd, h2 = self._static if self._static else _hext_norms(self.grid, self.hext, state.t)
        row = {"t": float(state.t), "dt": float(info.dt), "m_drift": float(info.m_drift),
               "unit_error": float(info.unit_error), "div_residual": float(info.div_residual),
               "hext_l1": h1, "hext_dt_l1": hd, "hext_l2_sq": h2}
        H = None
        if not self.hext.is_zero:
            H = self.hext.field(state.t, *self.grid.cell_centers())
        row.update(measure(self.grid, state, self.W, self.kappa, H=H))
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return self.columns()[name]

    def columns(self) -> dict[str, np.ndarray]:
        cols = {k: np.array([r[k] for r in self.rows], dtype=float)
                for k in COLUMNS if k in self.rows[0]} if self.rows else {
                    k: np.zeros(0) for k in COLUMNS}
        if not self.rows:
            return cols
        t = cols["t"]
        cols["cum_dissipation"] = cumulative_trapezoid(
            t, cols["grad_v_sq"] + cols["elastic_dissipation"])
        cols["cum_hext_dt_l1"] = cumulative_trapezoid(t, cols["hext_dt_l1"])
        cols["energy_residual"] = energy_inequality_residual(
            cols["energy"], cols["cum_dissipation"], cols["hext_l1"], cols["cum_hext_dt_l1"])
        cols["cum_llg_dissipation"] = cumulative_trapezoid(t, cols["llg_dissipation"])
        cols["energy_defect"] = (cols["energy"] + cols["cum_dissipation"]
                                 + cols["cum_llg_dissipation"] - cols["energy"][0])
        return {k: cols[k] for k in COLUMNS}

    def h1_trajectory(self) -> np.ndarray:
        """``||grad v||^2 + ||grad F||^2 + ||lap M||^2`` per row."""
        c = self.columns()
        return c["grad_v_sq"] + c["grad_F_sq"] + c["lap_M_sq"]

    def write_csv(self, path, columns: tuple[str, ...] = COLUMNS) -> Path:
        return write_csv(path, self, columns)


def write_csv(path, series: DiagnosticsSeries, columns: tuple[str, ...] = COLUMNS) -> Path:
    """One header row, one row per step, ``%.16e`` numbers; ``smallness`` on row 0 only.

    ``columns`` selects a subset of :data:`COLUMNS` (in that order).
    """
    unknown = set(columns) - set(COLUMNS)
    if unknown:
        raise ConfigurationError(f"unknown diagnostics columns {sorted(unknown)}")
    columns = tuple(k for k in COLUMNS if k in columns)
    cols = series.columns()
    path = Path(path)
    lines = [",".join(columns + ("smallness",))]
    n = len(series)
    for i in range(n):
        vals = ["%.16e" % cols[k][i] for k in columns]
        s = series.smallness if i == 0 and series.smallness is not None else None
        vals.append("" if s is None else "%.16e" % s)
        lines.append(",".join(vals))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Read a diagnostics CSV back into columns (``smallness`` as a scalar)."""
    text = Path(path).read_text().splitlines()
    header = text[0].split(",")
    rows = [line.split(",") for line in text[1:] if line]
    out = {}
    for j, name in enumerate(header):
        if name == "smallness":
            out[name] = float(rows[0][j]) if rows and rows[0][j] else None
        else:
            out[name] = np.array([float(r[j]) for r in rows])
    return out


def smallness_indicator(scenario, state: StateSnapshot | None = None) -> float:
    """Initial energy plus ``2 sup ||H||_1 + int ||dH/dt||_1`` over ``[0, T]``.

    The field norms are sampled at ``t_k = k dt``; the time integral uses
    the trapezoid rule.  The value is reported raw: the admissible bound is
    not known.
    """
    from mvsim.elastic import get_density
    from mvsim.solver import CoupledSolver

    grid = scenario.grid
    if state is None:
        state = CoupledSolver(scenario).initial_state()
    e0 = total_energy(grid, state, get_density(scenario.density))
    hext = scenario.hext_sampler()
    if hext.is_zero:
        return e0
    n = scenario.n_steps
    ts = np.arange(n + 1) * scenario.dt
    if hext.time_dependent:
        norms = np.array([_hext_norms(grid, hext, t)[:2] for t in ts])
    else:
        norms = np.tile(np.array(_hext_norms(grid, hext, 0.0)[:2]), (n + 1, 1))
    sup_h = float(np.max(norms[:, 0]))
    int_dh = float(cumulative_trapezoid(ts, norms[:, 1])[-1]) if n > 0 else 0.0
    return e0 + 2.0 * sup_h + int_dh


# -- comparison ODE -------------------------------------------------------------


Z_SWITCH = 1.0


def _rhs_z(tau, z):
    return 1.0 + z ** 3


def _rhs_u(tau, u):
    # u = z**-2 turns the blow-up into a smooth crossing of u = 0
    return -2.0 * (1.0 + np.abs(u) ** 1.5)


def _event(value, direction):
    def ev(tau, y):
        return y[0] - value

    ev.terminal = True
    ev.direction = direction
    return ev


_SPAN = 4.0  # the blow-up time in tau is below int_0^inf dz / (1 + z^3) < 1.21


def _integrate(z0: float, z_stop: float, rtol: float, dense: bool = False):
    """Integrate ``dz/dtau = 1 + z^3`` from ``z0`` to ``z_stop`` (``inf`` allowed).

    Below ``Z_SWITCH`` the ODE is solved for ``z``; above it for ``u = z^-2``,
    which stays bounded up to the blow-up.  Returns the list of pieces
    ``(tau_start, tau_end, solution, variable)``.
    """
    pieces = []
    tau = 0.0
    z = float(z0)
    if z < Z_SWITCH:
        target = min(Z_SWITCH, z_stop)
        sol = solve_ivp(_rhs_z, (0.0, _SPAN), [z], method="DOP853", rtol=rtol, atol=1e-14,
                        events=_event(target, 1), dense_output=dense)
        t_end = float(sol.t_events[0][0])
        pieces.append((0.0, t_end, sol, "z"))
        tau, z = t_end, target
        if target >= z_stop:
            return pieces
    u_stop = 1.0 / z_stop ** 2 if np.isfinite(z_stop) else 1e-300
    sol = solve_ivp(_rhs_u, (tau, tau + _SPAN), [1.0 / z ** 2], method="DOP853", rtol=rtol,
                    atol=1e-300, events=_event(u_stop, -1), dense_output=dense)
    pieces.append((tau, float(sol.t_events[0][0]), sol, "u"))
    return pieces


def blowup_horizon(c: float, z0: float, z_cap: float, rtol: float = 1e-13) -> float:
    """First time at which ``z' = c (1 + z^3), z(0) = z0`` reaches ``z_cap``.

    The ODE is integrated (DOP853, terminal event) in the rescaled time
    ``tau = c t`` and the crossing time is divided by ``c``, so the result
    scales exactly as ``1/c``.
    """
    if not (c > 0 and np.isfinite(c)):
        raise ConfigurationError(f"c must be positive and finite, got {c}")
    if not z0 >= 0:
        raise ConfigurationError(f"z0 must be nonnegative, got {z0}")
    if not z_cap > z0:
        raise ConfigurationError(f"z_cap must exceed z0 (z0={z0}, z_cap={z_cap})")
    return _integrate(z0, float(z_cap), rtol)[-1][1] / c


@dataclass
class ComparisonResult:
    passed: bool
    first_violation: int | None
    z: np.ndarray

    def __bool__(self):
        return self.passed


def comparison_solution(t: np.ndarray, c: float, z0: float) -> np.ndarray:
    """``z(t_k)`` for ``z' = c(1 + z^3)``, ``z(t_0) = z0``; ``inf`` from the blow-up onwards."""
    t = np.asarray(t, dtype=float)
    tau = c * (t - t[0])
    z = np.full(t.shape, np.inf)
    for a, b, sol, var in _integrate(z0, np.inf, 1e-12, dense=True):
        sel = (tau >= a) & (tau <= b)
        if sel.any():
            vals = sol.sol(tau[sel])[0]
            z[sel] = vals if var == "z" else 1.0 / np.sqrt(np.maximum(vals, 1e-300))
    return z


def comparison_check(y, c: float, t=None, dt: float | None = None,
                     rel: float = 1e-8) -> ComparisonResult:
    """Check ``y(t_k) <= z(t_k) (1 + rel)`` with ``z`` the comparison solution from ``y(0)``.

    Give the sample times ``t`` or a uniform spacing ``dt``.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ConfigurationError("y must be a nonempty 1-d series")
    if np.any(y < 0) or not np.isfinite(y).all():
        raise ConfigurationError("y must be finite and nonnegative")
    if not c > 0:
        raise ConfigurationError(f"c must be positive, got {c}")
    if t is None:
        if dt is None:
            raise ConfigurationError("give sample times t or a spacing dt")
        t = np.arange(y.size) * dt
    z = comparison_solution(t, c, y[0])
    bad = np.nonzero(y > z * (1.0 + rel))[0]
    if bad.size:
        return ComparisonResult(False, int(bad[0]), z)
    return ComparisonResult(True, None, z)


def fit_comparison_constant(y, t, floor: float = 1e-12) -> float:
    """Smallest ``c`` with ``y_{k+1} - y_k <= c dt (1 + min(y_k, y_{k+1})^3)`` on every interval.

    Under that bound each increment of ``y`` is dominated by one Euler step
    of the (convex, increasing) comparison ODE, so ``y <= z`` follows by
    induction.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if y.size < 2:
        return floor
    lo = np.minimum(y[1:], y[:-1])
    slopes = np.diff(y) / np.diff(t) / (1.0 + lo ** 3)
    return max(float(np.max(slopes)), floor)
