import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scipy.integrate import dblquad

from conftest import observed_order, sinsin
from mvsim.errors import DegeneracyError, StructuralError
from mvsim.grid import FaceVector, Grid
from mvsim.state import (StateSnapshot, max_change, norm_l1, norm_l2, norm_l4, norm_sup,
                         read_snapshot, renormalize_magnetization, seminorm_h1,
                         seminorm_h1_sq, unit_deviation, write_snapshot)


SINSIN = {"l2": 0.5, "l4": (9.0 / 64.0) ** 0.25, "h1": np.pi / np.sqrt(2.0)}


def _random_state(rng, g, t=0.25):
    M = rng.standard_normal((3,) + g.shape)
    return StateSnapshot(t, FaceVector(rng.standard_normal((g.nx + 1, g.ny)),
                                       rng.standard_normal((g.nx, g.ny + 1))),
                         rng.standard_normal(g.shape), rng.standard_normal((2, 2) + g.shape),
                         M / np.linalg.norm(M, axis=0))


def test_norms_of_zero():
    g = Grid.from_extent(5, 4)
    z = np.zeros(g.shape)
    assert norm_l2(g, z) == norm_l4(g, z) == norm_l1(g, z) == norm_sup(g, z) == 0.0
    assert seminorm_h1_sq(g, z, "dirichlet0") == 0.0
    assert norm_l2(g, g.zeros_faces()) == 0.0


def test_norms_of_one():
    g = Grid.from_extent(7, 5)
    one = np.ones(g.shape)
    assert norm_l2(g, one) == pytest.approx(1.0, abs=1e-14)
    assert norm_l4(g, one) == pytest.approx(1.0, abs=1e-14)
    assert seminorm_h1_sq(g, one, "neumann0") == 0.0


def test_sinsin_oracles_by_quadrature():
    f = lambda y, x: np.sin(np.pi * x) * np.sin(np.pi * y)
    l2 = dblquad(lambda y, x: f(y, x) ** 2, 0, 1, 0, 1)[0] ** 0.5
    l4 = dblquad(lambda y, x: f(y, x) ** 4, 0, 1, 0, 1)[0] ** 0.25
    h1 = dblquad(lambda y, x: np.pi ** 2 * (np.cos(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2
                                            + np.sin(np.pi * x) ** 2 * np.cos(np.pi * y) ** 2),
                 0, 1, 0, 1)[0] ** 0.5
    assert l2 == pytest.approx(SINSIN["l2"], rel=1e-12)
    assert l4 == pytest.approx(SINSIN["l4"], rel=1e-12)
    assert h1 == pytest.approx(SINSIN["h1"], rel=1e-12)


def test_sinsin_lebesgue_norms_exact_at_midpoints():
    # the midpoint rule integrates these trigonometric polynomials exactly
    for n in (8, 16, 33):
        g = Grid.from_extent(n, n)
        f = sinsin(g)
        assert norm_l2(g, f) == pytest.approx(SINSIN["l2"], abs=1e-14)
        assert norm_l4(g, f) == pytest.approx(SINSIN["l4"], abs=1e-14)


def test_sinsin_h1_converges_at_order_two():
    errs, hs = [], []
    for n in (16, 32, 64):
        g = Grid.from_extent(n, n)
        errs.append(abs(seminorm_h1(g, sinsin(g), "dirichlet0") - SINSIN["h1"]))
        hs.append(g.hx)
    assert abs(observed_order(errs, hs) - 2.0) <= 0.2
    assert errs[-1] < 1e-3


def test_vector_norm_uses_pointwise_magnitude():
    g = Grid.from_extent(4, 4)
    f = np.zeros((3,) + g.shape)
    f[0], f[1] = 3.0, 4.0
    assert norm_sup(g, f) == pytest.approx(5.0)
    assert norm_l1(g, f) == pytest.approx(5.0)


def test_renormalize_unit_field_unchanged():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((3, 6, 5))
    M /= np.linalg.norm(M, axis=0)
    assert np.max(np.abs(renormalize_magnetization(M) - M)) <= 4e-16


def test_renormalize_uniform():
    M = np.zeros((3, 4, 4))
    M[0] = 2.0
    out = renormalize_magnetization(M)
    assert np.array_equal(out[0], np.ones((4, 4))) and not out[1:].any()


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_renormalize_random_magnitudes(seed):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((3, 7, 6))
    d /= np.linalg.norm(d, axis=0)
    M = d * rng.uniform(0.5, 2.0, (7, 6))
    assert unit_deviation(renormalize_magnetization(M)) <= 1e-15


def test_renormalize_degenerate():
    M = np.ones((3, 4, 4))
    M[:, 2, 1] = 1e-12
    with pytest.raises(DegeneracyError, match=r"\(2, 1\)"):
        renormalize_magnetization(M)
    with pytest.raises(StructuralError):
        renormalize_magnetization(np.ones((2, 4, 4)))


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    g = Grid.from_extent(6, 5, 1.0, 0.7)
    s = _random_state(rng, g)
    p = write_snapshot(tmp_path / "s.bin", g, s)
    g2, s2 = read_snapshot(p)
    assert g2 == g and s2.t == s.t
    for k, a in s.arrays().items():
        assert np.array_equal(a, s2.arrays()[k])
    assert p.read_bytes() == write_snapshot(tmp_path / "t.bin", g2, s2).read_bytes()


def test_snapshot_corruption(tmp_path):
    rng = np.random.default_rng(6)
    g = Grid.from_extent(4, 4)
    p = write_snapshot(tmp_path / "s.bin", g, _random_state(rng, g))
    data = p.read_bytes()
    (tmp_path / "trunc.bin").write_bytes(data[:-8])
    with pytest.raises(StructuralError, match="truncated"):
        read_snapshot(tmp_path / "trunc.bin")
    (tmp_path / "magic.bin").write_bytes(b"X" + data[1:])
    with pytest.raises(StructuralError, match="magic"):
        read_snapshot(tmp_path / "magic.bin")


def test_max_change():
    rng = np.random.default_rng(8)
    g = Grid.from_extent(4, 5)
    a = _random_state(rng, g)
    b = a.copy()
    assert max_change(a, b) == 0.0
    b.F[1, 0, 2, 3] += 0.5
    assert max_change(a, b) == pytest.approx(0.5)
