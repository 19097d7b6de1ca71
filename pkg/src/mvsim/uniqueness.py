"""Continuous-dependence experiment for two coupled solutions.

For two states ``1`` (baseline) and ``2`` (perturbed) with difference
``(v, F, M)`` the harness tracks

* ``f = (||v||^2 + ||F||^2 + ||M||^2 + ||grad M||^2) / 2``
* ``g(t) = int_0^t ||grad v||^2 + ||grad F||^2 + ||grad M||^2 + ||lap M||^2``
* a Gronwall weight ``h(t)`` assembled from norms of the two solutions

and checks ``f(t) <= f(0) exp(c int_0^t h)`` with a single fitted ``c``.

The weight ``h`` is a sum of named terms, one per coefficient that multiplies
``f`` in the energy estimate of the difference.  Every term has weight one:
the small parameter used to absorb dissipation only rescales all terms
together, which the fitted constant absorbs.  Second- and third-order
Sobolev norms of ``M`` use ``||lap M||`` in place of the full Hessian, which
agree for fields with zero normal derivative.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mvsim.diagnostics import cumulative_trapezoid
from mvsim.errors import StepFailure, StructuralError
from mvsim.grid import FaceVector, Grid, laplacian
from mvsim.scenario import HExtSampler, Perturbation, Scenario
from mvsim.state import StateSnapshot, check_state, norm_l2, seminorm_h1_sq

# absorption parameter of the estimate; informational, see module docstring
DELTA = 1.0 / 30.0
# number of estimates carrying an additive constant
N_CONSTANT_TERMS = 4


def _diff(a: StateSnapshot, b: StateSnapshot) -> StateSnapshot:
    return StateSnapshot(a.t, FaceVector(a.v.u - b.v.u, a.v.w - b.v.w), a.p - b.p, a.F - b.F,
                         a.M - b.M)


def _check_pair(grid: Grid, a: StateSnapshot, b: StateSnapshot):
    check_state(grid, a)
    check_state(grid, b)
    if a.t != b.t:
        raise StructuralError(f"states are at different times {a.t!r} and {b.t!r}")


def difference_functionals(grid: Grid, a: StateSnapshot, b: StateSnapshot) -> tuple[float, float]:
    """``(f, g_integrand)`` of the difference ``a - b``; symmetric in ``a, b``."""
    _check_pair(grid, a, b)
    d = _diff(a, b)
    lapM = laplacian(grid, d.M, "neumann0")
    f = 0.5 * (norm_l2(grid, d.v) ** 2 + norm_l2(grid, d.F) ** 2 + norm_l2(grid, d.M) ** 2
               + seminorm_h1_sq(grid, d.M, "neumann0"))
    g = (seminorm_h1_sq(grid, d.v, "dirichlet0") + seminorm_h1_sq(grid, d.F, "dirichlet0")
         + seminorm_h1_sq(grid, d.M, "neumann0") + norm_l2(grid, lapM) ** 2)
    return float(f), float(g)


def state_norms(grid: Grid, s: StateSnapshot) -> dict[str, float]:
    """Squared norms of one solution entering the Gronwall weight."""
    lapM = laplacian(grid, s.M, "neumann0")
    n = {
        "v_sq": norm_l2(grid, s.v) ** 2,
        "grad_v_sq": seminorm_h1_sq(grid, s.v, "dirichlet0"),
        "grad_F_sq": seminorm_h1_sq(grid, s.F, "dirichlet0"),
        "M_sq": norm_l2(grid, s.M) ** 2,
        "grad_M_sq": seminorm_h1_sq(grid, s.M, "neumann0"),
        "lap_M_sq": norm_l2(grid, lapM) ** 2,
        "grad_lap_M_sq": seminorm_h1_sq(grid, lapM, "neumann0"),
    }
    n["M22_sq"] = n["M_sq"] + n["grad_M_sq"] + n["lap_M_sq"]
    n["M32_sq"] = n["M22_sq"] + n["grad_lap_M_sq"]
    return n


def field_norms(grid: Grid, H: HExtSampler | None, t: float) -> dict[str, float]:
    """``||H||_2`` and ``||H||_{1,2}^2`` at time ``t`` (zero without a field)."""
    if H is None or H.is_zero:
        return {"H_l2": 0.0, "H_w12_sq": 0.0}
    X, Y = grid.cell_centers()
    h = H.field(t, X, Y)
    J = H.jacobian(t, X, Y)
    l2sq = float(np.add.reduce((h * h).ravel())) * grid.cell_area
    jsq = float(np.add.reduce((J * J).ravel())) * grid.cell_area
    return {"H_l2": math.sqrt(l2sq), "H_w12_sq": l2sq + jsq}


@dataclass(frozen=True)
class GronwallTerm:
    """One summand of ``h``: ``key`` names it, ``source`` the estimate it comes from.

    ``m1_power`` is the homogeneity degree in the norms of ``M`` of solution 1
    (scaling those norms by ``lam`` scales the term by ``lam**m1_power``).
    """

    key: str
    source: str
    m1_power: int
    value: object


TERMS = (
    GronwallTerm("grad_v1", "momentum advection", 0, lambda a, b, h: a["grad_v_sq"]),
    GronwallTerm("lap_M2", "magnetic stress", 0, lambda a, b, h: b["lap_M_sq"]),
    GronwallTerm("v2_grad_v2", "magnetic stress", 0, lambda a, b, h: b["v_sq"] * b["grad_v_sq"]),
    GronwallTerm("grad_F1", "elastic stress", 0, lambda a, b, h: a["grad_F_sq"]),
    GronwallTerm("grad_F2", "elastic stress", 0, lambda a, b, h: b["grad_F_sq"]),
    GronwallTerm("grad_v2", "elastic stress", 0, lambda a, b, h: b["grad_v_sq"]),
    GronwallTerm("grad_F1_transport", "deformation transport", 0, lambda a, b, h: a["grad_F_sq"]),
    GronwallTerm("grad_M1", "magnetization transport", 2, lambda a, b, h: a["grad_M_sq"]),
    GronwallTerm("M1_22", "exchange coupling", 2, lambda a, b, h: a["M22_sq"]),
    GronwallTerm("M2_22", "exchange coupling", 0, lambda a, b, h: 2.0 * b["M22_sq"]),
    GronwallTerm("H_l2", "external field", 0, lambda a, b, h: h["H_l2"]),
    GronwallTerm("M1_22_sq", "gradient nonlinearity", 4, lambda a, b, h: a["M22_sq"] ** 2),
    GronwallTerm("grad_M1_nl", "gradient nonlinearity", 2, lambda a, b, h: a["grad_M_sq"]),
    GronwallTerm("lap_M1_nl", "gradient nonlinearity", 2, lambda a, b, h: a["lap_M_sq"]),
    GronwallTerm("grad_M1_4", "gradient nonlinearity", 4, lambda a, b, h: a["grad_M_sq"] ** 2),
    GronwallTerm("grad_M1_lap_M1", "gradient nonlinearity", 4, lambda a, b, h: a["grad_M_sq"] * a["lap_M_sq"]),
    GronwallTerm("grad_M2_nl", "gradient nonlinearity", 0, lambda a, b, h: b["grad_M_sq"]),
    GronwallTerm("lap_M2_nl", "gradient nonlinearity", 0, lambda a, b, h: b["lap_M_sq"]),
    GronwallTerm("grad_M2_4", "gradient nonlinearity", 0, lambda a, b, h: b["grad_M_sq"] ** 2),
    GronwallTerm("grad_M2_lap_M2", "gradient nonlinearity", 0, lambda a, b, h: b["grad_M_sq"] * b["lap_M_sq"]),
    GronwallTerm("M1_32", "higher exchange", 2, lambda a, b, h: a["M32_sq"]),
    GronwallTerm("H_w12", "external field gradient", 0, lambda a, b, h: h["H_w12_sq"]),
    GronwallTerm("constant", "absorbed constants", 0, lambda a, b, h: float(N_CONSTANT_TERMS)),
)
TERM_KEYS = tuple(t.key for t in TERMS)


def gronwall_terms(norms1: dict, norms2: dict, hnorms: dict) -> dict[str, float]:
    """Per-term values of ``h`` from precomputed norms (see :func:`state_norms`)."""
    return {t.key: float(t.value(norms1, norms2, hnorms)) for t in TERMS}


def gronwall_integrand(grid: Grid, a: StateSnapshot, b: StateSnapshot, H: HExtSampler | None,
                       t: float) -> float:
    """``h(t)`` for background solutions ``a`` (1) and ``b`` (2)."""
    _check_pair(grid, a, b)
    terms = gronwall_terms(state_norms(grid, a), state_norms(grid, b), field_norms(grid, H, t))
    return float(sum(terms.values()))


# -- the experiment -----------------------------------------------------------


@dataclass
class DifferenceSeries:
    t: list = field(default_factory=list)
    f: list = field(default_factory=list)
    g_integrand: list = field(default_factory=list)
    h: list = field(default_factory=list)
    terms: dict = field(default_factory=lambda: {k: [] for k in TERM_KEYS})
    eps: float = 0.0
    dt: float = 0.0

    def append(self, t: float, f: float, g_int: float, terms: dict) -> None:
        self.t.append(t)
        self.f.append(f)
        self.g_integrand.append(g_int)
        self.h.append(sum(terms.values()))
        for k in TERM_KEYS:
            self.terms[k].append(terms[k])

    def arrays(self):
        t = np.asarray(self.t)
        f = np.asarray(self.f)
        h = np.asarray(self.h)
        g = cumulative_trapezoid(t, np.asarray(self.g_integrand))
        H = cumulative_trapezoid(t, h)
        return t, f, g, h, H

    @property
    def g(self) -> np.ndarray:
        return self.arrays()[2]

    @property
    def int_h(self) -> np.ndarray:
        return self.arrays()[4]

    def fit_constant(self) -> float:
        """Smallest ``c`` with ``f + g - f(0) <= c int_0^t h f`` on every recorded step.

        This is the integral form of the estimate; Gronwall then gives the
        exponential bound.  Returns 0 when the difference never grows and NaN
        when ``f(0) = 0``.
        """
        t, f, g, h, _ = self.arrays()
        if len(t) < 2 or f[0] == 0.0:
            return float("nan")
        lhs = f + g - f[0]
        rhs = cumulative_trapezoid(t, h * f)
        ok = rhs[1:] > 0
        if not ok.any():
            return 0.0
        return float(max(0.0, np.max(lhs[1:][ok] / rhs[1:][ok])))

    def bound(self, c: float) -> np.ndarray:
        t, f, _, _, H = self.arrays()
        return f[0] * np.exp(c * H)

    def bound_ratio(self, c: float) -> float:
        """``max_t f(t) / (f(0) exp(c int h))``; at most one when the bound holds."""
        f = np.asarray(self.f)
        return float(np.max(f / self.bound(c)))

    def write_csv(self, path, c: float | None = None) -> Path:
        c = self.fit_constant() if c is None else c
        t, f, g, h, H = self.arrays()
        bound = self.bound(c) if math.isfinite(c) else np.full_like(t, np.nan)
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "f", "g", "g_integrand", "h", "int_h", "bound"]
                       + [f"h_{k}" for k in TERM_KEYS])
            for i in range(len(t)):
                row = [t[i], f[i], g[i], self.g_integrand[i], h[i], H[i], bound[i]]
                row += [self.terms[k][i] for k in TERM_KEYS]
                w.writerow([f"{x:.16e}" for x in row])
        return path


def stability_experiment(scenario: Scenario, perturbation: Perturbation | float,
                         T: float | None = None, kernels=None, workers: int = 1,
                         on_step=None) -> DifferenceSeries:
    """Run baseline and perturbed solutions in lockstep and record the difference.

    Parameters
    ----------
    scenario
        Shared scenario of both runs.
    perturbation
        Initial-data bump (or its amplitude) applied to the second run before
        its velocity is projected and its magnetization renormalized.
    T
        Final time, default ``scenario.T``.

    Raises
    ------
    StepFailure
        With ``run`` set to ``"baseline"`` or ``"perturbed"``.
    """
    from mvsim.solver import CoupledSolver

    if not isinstance(perturbation, Perturbation):
        perturbation = Perturbation(float(perturbation))
    if T is not None:
        scenario = scenario.replace(T=T)
    s1 = CoupledSolver(scenario, kernels=kernels, workers=workers)
    s2 = CoupledSolver(scenario, kernels=kernels, workers=workers)
    grid = s1.grid
    H = scenario.hext_sampler()
    a = s1.initial_state()
    b = s2.initial_state(perturbation)
    series = DifferenceSeries(eps=perturbation.eps, dt=scenario.dt)

    def record(a, b):
        f, g = difference_functionals(grid, a, b)
        terms = gronwall_terms(state_norms(grid, a), state_norms(grid, b),
                               field_norms(grid, H, a.t))
        series.append(a.t, f, g, terms)

    record(a, b)
    for n in range(1, scenario.n_steps + 1):
        for tag, solver, st in (("baseline", s1, a), ("perturbed", s2, b)):
            try:
                new, _ = solver.step_with_retry(st)
            except StepFailure as exc:
                exc.run = tag
                exc.args = (f"[{tag}] {exc.args[0]}",)
                exc.partial = series
                raise
            new.t = n * scenario.dt
            if tag == "baseline":
                a = new
            else:
                b = new
        record(a, b)
        if on_step is not None:
            on_step(n, a, b)
    return series
