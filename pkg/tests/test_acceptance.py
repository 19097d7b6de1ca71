"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line (shown even without ``-s``)
and then asserts the same condition.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mvsim.cli import main
from mvsim.config import load_scenario
from mvsim.diagnostics import (blowup_horizon, comparison_check, fit_comparison_constant,
                               monotonicity_defect, tol_energy)
from mvsim.elastic import check_growth, get_density
from mvsim.grid import Grid
from mvsim.inequalities import NAMES, field_ratio, single_mode_derivatives, sweep
from mvsim.scenario import Scenario
from mvsim.solver import CoupledSolver
from mvsim.state import max_change
from mvsim.uniqueness import stability_experiment

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def verdict(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, detail


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def run_scenario(sc):
    solver = CoupledSolver(sc)
    initial = solver.initial_state()
    res = solver.run(state=initial.copy())
    return res, initial


def invariants_hold(sc, res):
    unit = max(i.unit_error for i in res.infos)
    div = max(i.div_residual for i in res.infos)
    return unit <= 1e-12 and div <= sc.tol_div, unit, div


@pytest.fixture(scope="module")
def small_data():
    """The small-data run at 64^2 and its refinement (dt/2, h/sqrt(2))."""
    sc = load_scenario(SCENARIOS / "small_data.cfg")
    (res, _), seconds = timed(run_scenario, sc)
    fine_sc = sc.replace(nx=90, ny=90, dt=sc.dt / 2)
    fine, _ = run_scenario(fine_sc)
    return sc, res, seconds, fine_sc, fine


def test_1_steady_states(capsys):
    details, ok = [], True
    for name in ("steady_inplane.cfg", "steady_e3.cfg"):
        sc = load_scenario(SCENARIOS / name)
        (res, initial), seconds = timed(run_scenario, sc)
        change = max_change(res.state, initial)
        good = change <= 1e-12 and seconds < 30 and len(res.infos) == 1000
        inv, unit, div = invariants_hold(sc, res)
        ok &= good and inv
        details.append(f"{name} change={change:.2e} time={seconds:.1f}s unit={unit:.1e} "
                       f"div={div:.1e}")
    verdict(capsys, "1 steady states", ok, "; ".join(details))


def test_2_invariants_and_drift(capsys, small_data):
    sc, res, _, fine_sc, fine = small_data
    inv_a, unit_a, div_a = invariants_hold(sc, res)
    inv_b, unit_b, div_b = invariants_hold(fine_sc, fine)
    h = sc.grid.hx
    dt0 = 0.4 * h * h / 4
    dts, drifts = [], []
    for k in range(3):
        dt = dt0 / 2 ** k
        r = CoupledSolver(sc.replace(dt=dt, T=200 * dt0)).run(diagnostics=False)
        dts.append(dt)
        drifts.append(max(i.m_drift for i in r.infos))
    slope = float(np.polyfit(np.log(dts), np.log(drifts), 1)[0])
    ok = inv_a and inv_b and abs(slope - 1.0) <= 0.2
    verdict(capsys, "2 per-step invariants", ok,
            f"unit={max(unit_a, unit_b):.1e} div={max(div_a, div_b):.1e} "
            f"drift slope={slope:.4f} drifts={[f'{d:.3e}' for d in drifts]}")


def test_3_small_data_energy(capsys, small_data):
    sc, res, seconds, fine_sc, fine = small_data
    cols = res.series.columns()
    slack = tol_energy(cols["t"], sc.dt, sc.grid.hx, sc.C_e)
    excess = float(np.max(cols["energy_residual"] - slack))
    mono = monotonicity_defect(cols["energy"])
    defect = max(float(np.max(cols["energy_defect"])), 0.0)
    defect_fine = max(float(np.max(fine.series.columns()["energy_defect"])), 0.0)
    ratio = defect / defect_fine if defect_fine > 0 else math.inf
    ok = excess <= 0 and mono <= 1e-3 and ratio >= 1.8 and seconds < 120
    verdict(capsys, "3 small-data energy", ok,
            f"residual-slack={excess:.3e} mono={mono:.2e} defect={defect:.3e} "
            f"fine={defect_fine:.3e} ratio={ratio:.3f} time={seconds:.1f}s")


def test_4_heat_oracle(capsys):
    t0 = time.perf_counter()
    errs, hs = [], []
    for n in (32, 64, 128):
        h = 1.0 / n
        sc = Scenario(nx=n, ny=n, kappa=0.1, dt=0.1 * h * h, T=0.1, F0="bump", F0_amp=0.1,
                      F0_component="11", M0_x=0.0, M0_z=1.0, freeze_velocity=True)
        res = CoupledSolver(sc).run(diagnostics=False)
        xc, yc = sc.grid.cell_centers()
        exact = 0.1 * np.exp(-2 * sc.kappa * np.pi ** 2 * res.state.t) * np.sin(
            np.pi * xc) * np.sin(np.pi * yc)
        errs.append(float(np.max(np.abs(res.state.F[0, 0] - exact))))
        hs.append(h)
    seconds = time.perf_counter() - t0
    order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    ok = 1.8 <= order <= 2.2 and seconds < 60
    verdict(capsys, "4 heat oracle", ok,
            f"order={order:.4f} errors={[f'{e:.3e}' for e in errs]} time={seconds:.1f}s")


def _llg_ode(t, m, h_ext):
    h = np.array(h_ext, float)
    h[2] -= m[2]
    return -np.cross(m, h) - np.cross(m, np.cross(m, h))


def test_5_llg_ode_oracle(capsys):
    m0 = np.array([0.8, 0.0, 0.6])
    hx, hy, hz = 0.5, -0.3, 0.2
    sc = Scenario(nx=3, ny=3, dt=1e-4, T=1.0, M0_x=m0[0], M0_z=m0[2], hext="uniform",
                  hext_x=hx, hext_y=hy, hext_z=hz, cfl_safety=1.0)
    ts, Ms = [], []
    t0 = time.perf_counter()
    CoupledSolver(sc).run(diagnostics=False, on_step=lambda n, st, info: (
        ts.append(st.t), Ms.append(st.M[:, 1, 1].copy())))
    seconds = time.perf_counter() - t0
    ref = solve_ivp(_llg_ode, (0, sc.T), m0, args=((hx, hy, hz),), method="DOP853",
                    rtol=1e-13, atol=1e-15, t_eval=ts)
    err = float(np.max(np.abs(np.array(Ms).T - ref.y)))
    ok = err <= 1e-6 and seconds < 10 and len(ts) == 10000
    verdict(capsys, "5 LLG ODE oracle", ok, f"max error={err:.3e} time={seconds:.2f}s")


def test_6_inequality_lab(capsys):
    reports, seconds = timed(sweep, NAMES, [64, 128], n_samples=1000, K=8, seed=0)
    drift = max(r.drift for r in reports)
    singles = [field_ratio("Lad2D", g, single_mode_derivatives(g))
               for g in (Grid.from_extent(n, n) for n in (64, 128))]
    single_ok = all(abs(s / 0.5812 - 1) <= 5e-3 for s in singles)
    ok = (len(NAMES) == 9 and len(reports) == 18 and all(r.stable for r in reports)
          and drift < 0.05 and single_ok and seconds < 180)
    verdict(capsys, "6 inequality lab", ok,
            f"9 inequalities, no counterexample, max drift={drift:.2e} "
            f"Lad2D single mode={singles[0]:.6f} time={seconds:.1f}s")


def test_7_comparison_horizon(capsys, small_data):
    t0 = time.perf_counter()
    code = main(["horizon", "--c", "1", "--z0", "0", "--cap", "1e9"])
    seconds = time.perf_counter() - t0
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    target = 2 * math.pi / (3 * math.sqrt(3))
    t1 = blowup_horizon(1.0, 0.0, 1e9)
    t_half = blowup_horizon(0.5, 0.0, 1e9)
    _, res, _, _, _ = small_data
    t = res.series.columns()["t"]
    y = res.series.h1_trajectory()
    c = fit_comparison_constant(y, t)
    cmp = comparison_check(y, c, t=t)
    ok = (code == 0 and abs(out["horizon"] - target) <= 1e-6 and abs(t_half - 2 * t1) <= 1e-9
          and seconds < 1.0 and bool(cmp))
    verdict(capsys, "7 comparison ODE", ok,
            f"horizon={out['horizon']:.12f} target={target:.12f} "
            f"halving gap={abs(t_half - 2 * t1):.1e} cli time={seconds:.3f}s "
            f"comparison c={c:.3e} passed={bool(cmp)}")


def test_8_stability(capsys):
    sc = load_scenario(SCENARIOS / "small_data.cfg")
    t0 = time.perf_counter()
    coarse = stability_experiment(sc, 1e-4, T=0.25)
    fine = stability_experiment(sc.replace(dt=sc.dt / 2), 1e-4, T=0.25)
    twins = []
    stability_experiment(sc, 0.0, T=0.25,
                         on_step=lambda n, a, b: twins.append(max_change(a, b)))
    seconds = time.perf_counter() - t0
    c1, c2 = coarse.fit_constant(), fine.fit_constant()
    r1, r2 = coarse.bound_ratio(c1), fine.bound_ratio(c2)
    change = abs(c2 - c1) / c1
    identical = bool(twins) and max(twins) == 0.0
    ok = (r1 <= 1 + 1e-12 and r2 <= 1 + 1e-12 and change < 0.1 and identical
          and seconds < 240)
    verdict(capsys, "8 stability", ok,
            f"c_fit={c1:.4e}/{c2:.4e} change={change:.2%} bound ratio={max(r1, r2):.6f} "
            f"twins identical={identical} time={seconds:.1f}s")


def test_9_check_growth(capsys):
    t0 = time.perf_counter()
    quad = check_growth(get_density("quad"))
    quartic = check_growth(get_density("quartic"))
    seconds = time.perf_counter() - t0
    lip = quad.ratios["lipschitz"]
    ok = (quad.passed and abs(lip - 1.0) <= 1e-12 and not quartic.passed
          and bool(quartic.witnesses) and seconds < 5)
    verdict(capsys, "9 growth checks", ok,
            f"quad lipschitz ratio={lip!r} quartic fails {quartic.failures} "
            f"time={seconds:.2f}s")


def test_10_reproducible_csv(capsys, tmp_path):
    blobs = []
    for k, threads in enumerate(("1", "4", "1")):
        out = tmp_path / f"run{k}"
        code = main(["simulate", str(SCENARIOS / "small_data.cfg"), "--threads", threads,
                     "--out", str(out)])
        capsys.readouterr()
        assert code == 0
        blobs.append((out / "diagnostics.csv").read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2] and len(blobs[0]) > 0
    verdict(capsys, "10 reproducible CSV", ok,
            f"{len(blobs[0])} bytes, identical across repeat and --threads 1/4: {ok}")
