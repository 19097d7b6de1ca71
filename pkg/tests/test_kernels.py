"""The compiled kernels and the NumPy fallback compute the same quantities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsim import _backend, _kernels_py

cy = pytest.importorskip("mvsim._kernels")

TOL = 1e-12


def _close(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    return a.shape == b.shape and float(np.max(np.abs(a - b), initial=0.0)) <= TOL * scale


def _fields(seed, nx, ny):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((3, nx, ny))
    M /= np.linalg.norm(M, axis=0)
    u = rng.standard_normal((nx + 1, ny))
    w = rng.standard_normal((nx, ny + 1))
    u[0] = u[-1] = 0.0
    w[:, 0] = w[:, -1] = 0.0
    return dict(
        M=M, u=u, w=w,
        F=rng.standard_normal((2, 2, nx, ny)),
        Fp=rng.standard_normal((2, 2, nx + 2, ny + 2)),
        uc=rng.standard_normal((nx, ny)), wc=rng.standard_normal((nx, ny)),
        H=rng.standard_normal((3, nx, ny)), f=rng.standard_normal((nx, ny)),
        phi=rng.standard_normal((nx, ny)),
        hx=rng.uniform(0.05, 0.3), hy=rng.uniform(0.05, 0.3))


CASES = {
    "lap_cell_d": lambda k, a: k.lap_cell(a["f"], a["hx"], a["hy"], 0),
    "lap_cell_n": lambda k, a: k.lap_cell(a["f"], a["hx"], a["hy"], 1),
    "lap_xface": lambda k, a: k.lap_xface(a["u"], a["hx"], a["hy"]),
    "lap_yface": lambda k, a: k.lap_yface(a["w"], a["hx"], a["hy"]),
    "advect_cell": lambda k, a: k.advect_cell(a["f"], a["uc"], a["wc"], a["hx"], a["hy"]),
    "grad_sq": lambda k, a: k.grad_sq(a["M"], a["hx"], a["hy"]),
    "llg_rhs": lambda k, a: k.llg_rhs(a["M"], a["uc"], a["wc"], a["H"], a["hx"], a["hy"]),
    "velocity_gradient": lambda k, a: k.velocity_gradient(a["u"], a["w"], a["hx"], a["hy"]),
    "transport_F": lambda k, a: k.transport_F(a["F"], a["u"], a["w"], a["hx"], a["hy"]),
    "tensor_div": lambda k, a: k.tensor_div(a["Fp"], a["hx"], a["hy"]),
    "stress_div": lambda k, a: k.stress_div(a["Fp"], a["Fp"][::-1].copy(), a["hx"], a["hy"]),
    "magnetic_div": lambda k, a: k.magnetic_div(a["M"], a["hx"], a["hy"]),
    "advect_mac": lambda k, a: k.advect_mac(a["u"], a["w"], a["u"], a["w"], a["hx"], a["hy"]),
    "diag_sums": lambda k, a: k.diag_sums(a["u"], a["w"], a["F"], a["M"], a["H"], a["hx"],
                                          a["hy"]),
    "diag_sums_noH": lambda k, a: k.diag_sums(a["u"], a["w"], a["F"], a["M"], None, a["hx"],
                                              a["hy"]),
    "helmholtz_residual": lambda k, a: k.helmholtz_residual(a["f"], a["phi"], 0.01, a["hx"],
                                                            a["hy"], 0),
    "renormalize": lambda k, a: k.renormalize(2.0 * a["M"], 1e-8),
    "project": lambda k, a: k.project(a["u"], a["w"], a["phi"], 0.1, a["hx"], a["hy"]),
}


def _flatten(out):
    if isinstance(out, tuple):
        return [np.asarray(x) for x in out]
    return [np.asarray(out)]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), nx=st.integers(3, 11), ny=st.integers(3, 11))
@pytest.mark.parametrize("name", sorted(CASES))
def test_backends_agree(name, seed, nx, ny):
    a = _fields(seed, nx, ny)
    ref = _flatten(CASES[name](_kernels_py, a))
    got = _flatten(CASES[name](cy, a))
    assert len(ref) == len(got)
    for r, g in zip(ref, got):
        assert _close(r, g), name


@pytest.mark.parametrize("layout", [0, 2, 3])
def test_helmholtz_backends_agree(layout):
    rng = np.random.default_rng(layout)
    nx, ny = 9, 7
    shape = {0: (nx, ny), 2: (nx + 1, ny), 3: (nx, ny + 1)}[layout]
    b = rng.standard_normal(shape)
    d = 1.0 / _kernels_py._helmholtz_diag(shape, 0.02, 0.1, 0.12, layout)
    xp, itp, rp = _kernels_py.helmholtz(b, 0.02, 0.1, 0.12, layout, 1e-13, 200, None, d)
    xc, itc, rc = cy.helmholtz(b, 0.02, 0.1, 0.12, layout, 1e-13, 200, None, d)
    assert rp <= 1e-13 and rc <= 1e-13
    assert np.max(np.abs(xp - xc)) <= 1e-11 * np.max(np.abs(xp))


def test_backend_selection():
    assert _backend.get_kernels("python") is _kernels_py
    assert _backend.get_kernels("cython") is cy
    assert _backend.get_kernels() is _backend.kernels
    with pytest.raises(ValueError):
        _backend.get_kernels("fortran")
