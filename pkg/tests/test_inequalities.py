import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsim import inequalities as ineq
from mvsim.errors import ConfigurationError, CounterexampleError
from mvsim.grid import Grid
from mvsim.inequalities import (NAMES, TestFunctionFamily, check_inequality, default_family,
                                field_ratio, single_mode_derivatives, sweep, write_report_csv)

LAD2D_SINGLE_MODE = (9 / 64) ** 0.25 / (math.sqrt(0.5) * math.sqrt(math.pi / math.sqrt(2)))


def test_nine_inequalities():
    assert len(NAMES) == 9
    for name in NAMES:
        assert default_family(name).boundary in ineq.get_inequality(name).classes


def test_lad2d_single_mode():
    assert LAD2D_SINGLE_MODE == pytest.approx(0.5812, rel=5e-3)
    for n in (32, 64, 128):
        g = Grid.from_extent(n, n)
        r = field_ratio("Lad2D", g, single_mode_derivatives(g))
        assert r == pytest.approx(LAD2D_SINGLE_MODE, rel=1e-12)


def test_genlad2d_constant_has_ratio_one():
    g = Grid.from_extent(16, 16)
    d = {k: np.zeros(g.shape) for k in ineq._ORDERS}
    d[(0, 0)] = np.full(g.shape, -2.5)
    assert field_ratio("GenLad2D", g, d) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(name=st.sampled_from(NAMES), lam=st.floats(1e-3, 1e3), index=st.integers(0, 500))
def test_ratio_is_homogeneous(name, lam, index):
    g = Grid.from_extent(24, 24)
    fam = default_family(name)
    ev = ineq._Evaluator(fam, g)
    A = fam.coefficients(index)[None]
    lhs, rhs = ineq.ratios_from_derivatives(name, ev.derivatives(A), g.cell_area)
    lhs2, rhs2 = ineq.ratios_from_derivatives(name, ev.derivatives(lam * A), g.cell_area)
    assert lhs2[0] / rhs2[0] == pytest.approx(lhs[0] / rhs[0], rel=1e-12)


def test_family_is_deterministic_and_grid_free():
    fam = TestFunctionFamily("free", K=5, seed=3)
    assert np.array_equal(fam.coefficients(7), fam.coefficients(7))
    assert not np.array_equal(fam.coefficients(7), fam.coefficients(8))
    assert fam.sample_seed(7) == (3, 7)
    assert len(fam.modes()) == 11
    assert TestFunctionFamily("neumann0", K=1).coefficients(0)[0, 0] == 0.0
    with pytest.raises(ConfigurationError):
        TestFunctionFamily("periodic")
    with pytest.raises(ConfigurationError):
        TestFunctionFamily(K=0)


def test_argmax_sample_reproduces_worst_ratio():
    rep = check_inequality("LadMatrix", n_samples=120, grid=32)
    fam = default_family("LadMatrix")
    assert rep.argmax_seed == fam.sample_seed(rep.argmax_index)
    g = Grid.from_extent(32, 32)
    d = ineq._Evaluator(fam, g).derivatives(fam.coefficients(rep.argmax_index)[None])
    lhs, rhs = ineq.ratios_from_derivatives("LadMatrix", d, g.cell_area)
    assert lhs[0] / rhs[0] == rep.worst_ratio


def test_boundary_class_must_match():
    with pytest.raises(ConfigurationError):
        check_inequality("Lad2D", TestFunctionFamily("free"), n_samples=5)
    with pytest.raises(ConfigurationError):
        check_inequality("Nope", n_samples=5)


def test_counterexample_is_raised(monkeypatch):
    fake = ineq.Inequality("Broken", lambda n: (n.l2 + 1.0, 0.0 * n.l2), ineq.BOUNDARY_CLASSES,
                           "free")
    monkeypatch.setitem(ineq.INEQUALITIES, "Broken", fake)
    with pytest.raises(CounterexampleError, match="sample 0"):
        check_inequality("Broken", n_samples=3, grid=8)


def test_sweep_empty_and_arguments():
    assert sweep([], [64, 128]) == []
    with pytest.raises(ConfigurationError):
        sweep(["Lad2D"], [64])


def test_sweep_stability_small():
    reps = sweep(["Lad2D", "AgmonVariant"], [32, 64], n_samples=200)
    assert len(reps) == 4
    assert all(r.stable for r in reps)
    lad = [r for r in reps if r.name == "Lad2D"]
    assert lad[0].worst_ratio >= LAD2D_SINGLE_MODE * (1 - 1e-12)


def test_w22est_exceeds_single_mode():
    g = Grid.from_extent(64, 64)
    single = field_ratio("W22Est", g, single_mode_derivatives(g))
    rep = check_inequality("W22Est", n_samples=200, grid=g)
    assert single >= 1.0
    assert rep.worst_ratio >= single * (1 - 1e-12)


def test_report_csv(tmp_path):
    reps = sweep(["GenLad2D"], [16, 32], n_samples=20)
    path = tmp_path / "r.csv"
    write_report_csv(path, reps)
    rows = list(csv.DictReader(open(path)))
    assert [r["resolution"] for r in rows] == ["16", "32"]
    assert float(rows[0]["worst_ratio"]) == reps[0].worst_ratio
    assert rows[0]["stable"] == "1"
