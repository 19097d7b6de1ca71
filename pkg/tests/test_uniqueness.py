import csv

import numpy as np
import pytest

from mvsim.errors import StepFailure, StructuralError
from mvsim.grid import FaceVector, Grid
from mvsim.scenario import Perturbation, Scenario
from mvsim.solver import CoupledSolver
from mvsim.state import StateSnapshot
from mvsim.uniqueness import (N_CONSTANT_TERMS, TERM_KEYS, TERMS, DifferenceSeries,
                              difference_functionals, gronwall_integrand, gronwall_terms,
                              stability_experiment, state_norms)


def _random_state(rng, g, t=0.0):
    u = rng.standard_normal((g.nx + 1, g.ny))
    w = rng.standard_normal((g.nx, g.ny + 1))
    return StateSnapshot(t, FaceVector(u, w), rng.standard_normal(g.shape),
                         rng.standard_normal((2, 2) + g.shape), rng.standard_normal((3,) + g.shape))


def _zero_state(g, t=0.0):
    return StateSnapshot(t, g.zeros_faces(), np.zeros(g.shape), np.zeros((2, 2) + g.shape),
                         np.zeros((3,) + g.shape))


def _f_oracle(g, a, b):
    A = g.hx * g.hy
    dv = [a.v.u - b.v.u, a.v.w - b.v.w]
    dM = a.M - b.M
    P = np.pad(dM, ((0, 0), (1, 1), (1, 1)), mode="edge")
    gx = np.diff(P[:, :, 1:-1], axis=1) / g.hx
    gy = np.diff(P[:, 1:-1, :], axis=2) / g.hy
    return 0.5 * A * (sum(np.sum(x * x) for x in dv) + np.sum((a.F - b.F) ** 2)
                      + np.sum(dM * dM) + np.sum(gx * gx) + np.sum(gy * gy))


SMALL = Scenario(nx=16, ny=16, dt=0.7 / (4 * 16 ** 2), T=0.02, v0="vortex", v0_amp=0.03,
                 F0="bump", F0_amp=0.1, M0="twist", M0_amp=0.5, M0_tilt=0.3, cfl_safety=0.7)


def test_identical_states_give_zero():
    g = Grid.from_extent(7, 6)
    a = _random_state(np.random.default_rng(0), g)
    assert difference_functionals(g, a, a) == (0.0, 0.0)


def test_difference_from_zero_state():
    g = Grid.from_extent(9, 8)
    a = _random_state(np.random.default_rng(1), g)
    f, _ = difference_functionals(g, a, _zero_state(g))
    assert f == pytest.approx(_f_oracle(g, a, _zero_state(g)), rel=1e-12)


def test_difference_random_pair_matches_oracle():
    rng = np.random.default_rng(2)
    g = Grid.from_extent(11, 13, 1.0, 1.2)
    a, b = _random_state(rng, g), _random_state(rng, g)
    f, g_int = difference_functionals(g, a, b)
    assert f == pytest.approx(_f_oracle(g, a, b), rel=1e-12)
    assert difference_functionals(g, b, a) == pytest.approx((f, g_int), rel=1e-14)


def test_pair_must_share_time():
    g = Grid.from_extent(5, 5)
    with pytest.raises(StructuralError):
        difference_functionals(g, _zero_state(g, 0.0), _zero_state(g, 0.1))


def test_zero_backgrounds_leave_only_the_constant():
    g = Grid.from_extent(6, 6)
    z = _zero_state(g)
    assert gronwall_integrand(g, z, z, None, 0.0) == float(N_CONSTANT_TERMS)
    terms = gronwall_terms(state_norms(g, z), state_norms(g, z), {"H_l2": 0.0, "H_w12_sq": 0.0})
    assert [k for k, v in terms.items() if v != 0.0] == ["constant"]


M_KEYS = ("M_sq", "grad_M_sq", "lap_M_sq", "grad_lap_M_sq", "M22_sq", "M32_sq")


@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_terms_are_homogeneous_in_m1(lam):
    g = Grid.from_extent(10, 10)
    rng = np.random.default_rng(3)
    n1 = state_norms(g, _random_state(rng, g))
    n2 = state_norms(g, _random_state(rng, g))
    hn = {"H_l2": 0.3, "H_w12_sq": 0.2}
    scaled = dict(n1)
    for k in M_KEYS:
        scaled[k] = lam ** 2 * n1[k]  # squared norms
    base = gronwall_terms(n1, n2, hn)
    new = gronwall_terms(scaled, n2, hn)
    for term in TERMS:
        assert new[term.key] == pytest.approx(lam ** term.m1_power * base[term.key], rel=1e-13)
    assert len(TERM_KEYS) == len(set(TERM_KEYS))


def test_zero_perturbation_gives_identical_twins():
    series = stability_experiment(SMALL, 0.0)
    assert len(series.t) == SMALL.n_steps + 1
    assert all(f == 0.0 for f in series.f)
    assert all(g == 0.0 for g in series.g_integrand)


def test_initial_difference_is_quadratic_in_eps():
    s = CoupledSolver(SMALL)
    g = SMALL.grid
    a = s.initial_state()
    f1, _ = difference_functionals(g, a, s.initial_state(Perturbation(1e-4)))
    f2, _ = difference_functionals(g, a, s.initial_state(Perturbation(2e-4)))
    assert f2 / f1 == pytest.approx(4.0, rel=1e-2)


def test_small_run_bound_and_weight():
    series = stability_experiment(SMALL, 1e-4)
    t, f, g, h, H = series.arrays()
    assert np.isfinite(h).all() and np.isfinite(H[-1])
    assert np.all(h >= N_CONSTANT_TERMS)
    c = series.fit_constant()
    assert np.isfinite(c) and c >= 0.0
    assert series.bound_ratio(c) <= 1.0 + 1e-12
    assert np.all(g >= 0) and np.all(np.diff(g) >= 0)


def test_difference_csv(tmp_path):
    series = stability_experiment(SMALL.replace(T=SMALL.dt * 3), 1e-4)
    path = series.write_csv(tmp_path / "d.csv")
    rows = list(csv.reader(open(path)))
    assert rows[0][:7] == ["t", "f", "g", "g_integrand", "h", "int_h", "bound"]
    assert len(rows[0]) == 7 + len(TERM_KEYS) and len(rows) == 5


def test_fit_constant_edge_cases():
    s = DifferenceSeries()
    assert np.isnan(s.fit_constant())
    for t, f in ((0.0, 1.0), (0.1, 0.5), (0.2, 0.25)):
        s.append(t, f, 0.0, {k: 1.0 for k in TERM_KEYS})
    assert s.fit_constant() == 0.0


def test_failure_is_tagged_with_run(monkeypatch):
    orig = CoupledSolver.step_with_retry
    count = {"n": 0}

    def flaky(self, state):
        count["n"] += 1
        if count["n"] == 4:
            raise StepFailure("forced", state.t)
        return orig(self, state)

    monkeypatch.setattr(CoupledSolver, "step_with_retry", flaky)
    with pytest.raises(StepFailure) as exc:
        stability_experiment(SMALL, 1e-4)
    assert exc.value.run == "perturbed"
    assert len(exc.value.partial.t) == 2
