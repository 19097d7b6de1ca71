import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import observed_order, random_faces, sinsin
from mvsim.errors import ConfigurationError, StructuralError
from mvsim.grid import (FaceVector, Grid, HelmholtzSolver, PoissonSolver, advect, divergence,
                        gradient, laplacian, solve_poisson)


def test_grid_invariants():
    g = Grid.from_extent(5, 7, 2.0, 3.5)
    assert g.Lx == 2.0 and g.Ly == 3.5
    assert g.shape == (5, 7)
    with pytest.raises(ConfigurationError):
        Grid(2, 5, 0.1, 0.1)
    with pytest.raises(ConfigurationError):
        Grid(4, 4, 0.0, 0.1)


def test_layout_checks():
    g = Grid.from_extent(4, 5)
    with pytest.raises(StructuralError):
        laplacian(g, np.zeros((5, 4)), "neumann0")
    with pytest.raises(StructuralError):
        divergence(g, FaceVector(np.zeros((4, 5)), np.zeros((4, 6))))
    with pytest.raises(ConfigurationError):
        laplacian(g, np.zeros((4, 5)), "periodic")


@pytest.mark.parametrize("bc", ["dirichlet0", "neumann0"])
def test_laplacian_of_zero(bc):
    g = Grid.from_extent(6, 5)
    assert np.array_equal(laplacian(g, np.zeros((3, 6, 5)), bc), np.zeros((3, 6, 5)))


def test_laplacian_of_constant_neumann():
    g = Grid.from_extent(8, 6, 1.0, 2.0)
    out = laplacian(g, np.full(g.shape, 3.7), "neumann0")
    assert np.max(np.abs(out)) <= 1e-12 * 3.7 / g.hmin ** 2


def test_laplacian_dirichlet_order():
    errs, hs = [], []
    for n in (16, 32, 64):
        g = Grid.from_extent(n, n)
        f = sinsin(g)
        errs.append(np.max(np.abs(laplacian(g, f, "dirichlet0") + 2 * np.pi ** 2 * f)))
        hs.append(g.hx)
    assert abs(observed_order(errs, hs) - 2.0) <= 0.2


def test_gradient_of_constant():
    g = Grid.from_extent(5, 6)
    gr = gradient(g, np.full(g.shape, -2.0))
    assert not gr.u.any() and not gr.w.any()


def test_div_grad_is_neumann_laplacian():
    rng = np.random.default_rng(3)
    g = Grid.from_extent(9, 7, 1.0, 0.8)
    phi = rng.standard_normal(g.shape)
    lhs = divergence(g, gradient(g, phi))
    rhs = laplacian(g, phi, "neumann0")
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


@settings(max_examples=30, deadline=None)
@given(nx=st.integers(3, 12), ny=st.integers(3, 12), seed=st.integers(0, 2 ** 32 - 1))
def test_summation_by_parts(nx, ny, seed):
    rng = np.random.default_rng(seed)
    g = Grid.from_extent(nx, ny, 1.0, 1.3)
    phi = rng.standard_normal(g.shape)
    u = random_faces(rng, g)
    gp = gradient(g, phi)
    a = (np.sum(gp.u * u.u) + np.sum(gp.w * u.w)) * g.cell_area
    b = np.sum(phi * divergence(g, u)) * g.cell_area
    scale = np.sqrt(np.sum(phi ** 2) * (np.sum(u.u ** 2) + np.sum(u.w ** 2))) / g.hmin
    assert abs(a + b) <= 1e-12 * scale


def test_advect_trivial():
    rng = np.random.default_rng(0)
    g = Grid.from_extent(6, 6)
    f = rng.standard_normal((2, 6, 6))
    assert not advect(g, f, g.zeros_faces()).any()
    out = advect(g, np.full((6, 6), 2.5), random_faces(rng, g))
    assert np.max(np.abs(out)) <= 1e-12


def test_advect_order_interior():
    errs, hs = [], []
    for n in (16, 32, 64):
        g = Grid.from_extent(n, n)
        X, _ = g.cell_centers()
        v = FaceVector(np.ones((n + 1, n)), np.zeros((n, n + 1)))
        out = advect(g, np.sin(2 * np.pi * X), v)
        err = out - 2 * np.pi * np.cos(2 * np.pi * X)
        errs.append(np.max(np.abs(err[1:-1, 1:-1])))
        hs.append(g.hx)
    assert abs(observed_order(errs, hs) - 2.0) <= 0.2


def test_poisson_zero_rhs():
    g = Grid.from_extent(8, 8)
    res = solve_poisson(g, np.zeros(g.shape))
    assert not res.phi.any()


@pytest.mark.parametrize("method", ["dct", "jacobi"])
def test_poisson_inverts_laplacian(method):
    rng = np.random.default_rng(1)
    g = Grid.from_extent(16, 12, 1.0, 0.75)
    phi = rng.standard_normal(g.shape)
    phi -= phi.mean()
    res = solve_poisson(g, laplacian(g, phi, "neumann0"), tol=1e-12, method=method)
    assert np.max(np.abs(res.phi - phi)) <= 1e-8 * np.max(np.abs(phi))
    assert abs(res.mean_removed) <= 1e-10


def test_poisson_removes_mean():
    g = Grid.from_extent(8, 8)
    res = solve_poisson(g, np.ones(g.shape))
    assert res.mean_removed == pytest.approx(1.0)
    assert not res.phi.any()


def test_poisson_eigenfunction_order():
    errs, hs = [], []
    for n in (16, 32, 64):
        g = Grid.from_extent(n, n)
        X, _ = g.cell_centers()
        res = solve_poisson(g, np.cos(2 * np.pi * X), tol=1e-13)
        exact = -np.cos(2 * np.pi * X) / (2 * np.pi) ** 2
        errs.append(np.max(np.abs(res.phi - exact)))
        hs.append(g.hx)
    assert abs(observed_order(errs, hs) - 2.0) <= 0.2


def test_poisson_rejects_dirichlet():
    g = Grid.from_extent(4, 4)
    with pytest.raises(ConfigurationError):
        solve_poisson(g, np.zeros(g.shape), bc="dirichlet0")
    with pytest.raises(ConfigurationError):
        PoissonSolver(g, method="multigrid")


@pytest.mark.parametrize("layout", ["cell", "xface", "yface"])
def test_helmholtz_spectral_matches_cg(layout):
    rng = np.random.default_rng(7)
    g = Grid.from_extent(12, 10, 1.0, 0.9)
    shape = {"cell": (2,) + g.shape, "xface": (13, 10), "yface": (12, 11)}[layout]
    b = rng.standard_normal(shape)
    if layout == "xface":
        b[0] = b[-1] = 0.0
    if layout == "yface":
        b[:, 0] = b[:, -1] = 0.0
    alpha = 0.3 * g.hx ** 2 * 10
    xs, _ = HelmholtzSolver(g, alpha, layout, "spectral", tol=1e-12).solve(b)
    xc, its = HelmholtzSolver(g, alpha, layout, "cg", tol=1e-13).solve(b)
    assert its > 0
    assert np.max(np.abs(xs - xc)) <= 1e-11 * np.max(np.abs(xs))


def test_helmholtz_cell_solves_operator():
    rng = np.random.default_rng(2)
    g = Grid.from_extent(9, 11)
    x = rng.standard_normal(g.shape)
    alpha = 1e-3
    b = x - alpha * laplacian(g, x, "dirichlet0")
    y, _ = HelmholtzSolver(g, alpha, "cell").solve(b)
    assert np.max(np.abs(y - x)) <= 1e-12 * np.max(np.abs(x))
