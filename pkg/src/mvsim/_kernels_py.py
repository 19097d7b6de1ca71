"""Pure-NumPy stencil kernels.

Reference implementation of every hot kernel; the compiled extension
``mvsim._kernels`` exposes the same functions with the same signatures and
must agree to rounding.  Layout codes used by :func:`helmholtz`:

    0  cell-centered, homogeneous Dirichlet (odd mirror ghost)
    1  cell-centered, homogeneous Neumann (even mirror ghost)
    2  x-faces, Dirichlet (boundary faces pinned to zero)
    3  y-faces, Dirichlet (boundary faces pinned to zero)
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

DIRICHLET = 0
NEUMANN = 1
XFACE = 2
YFACE = 3


def _dot(a, b):
    # pairwise summation: order fixed by array length only
    return float(np.add.reduce((a * b).ravel()))


def _second_diff_axis0(f, ghost_sign):
    d = np.empty_like(f)
    d[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    d[0] = f[1] - 2.0 * f[0] + ghost_sign * f[0]
    d[-1] = f[-2] - 2.0 * f[-1] + ghost_sign * f[-1]
    return d


def _second_diff_axis1(f, ghost_sign):
    d = np.empty_like(f)
    d[:, 1:-1] = f[:, 2:] - 2.0 * f[:, 1:-1] + f[:, :-2]
    d[:, 0] = f[:, 1] - 2.0 * f[:, 0] + ghost_sign * f[:, 0]
    d[:, -1] = f[:, -2] - 2.0 * f[:, -1] + ghost_sign * f[:, -1]
    return d


def lap_cell(f, hx, hy, bc):
    s = -1.0 if bc == DIRICHLET else 1.0
    return _second_diff_axis0(f, s) / (hx * hx) + _second_diff_axis1(f, s) / (hy * hy)


def lap_xface(u, hx, hy):
    out = np.zeros_like(u)
    dxx = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (hx * hx)
    dyy = _second_diff_axis1(u[1:-1], -1.0) / (hy * hy)
    out[1:-1] = dxx + dyy
    return out


def lap_yface(w, hx, hy):
    out = np.zeros_like(w)
    dyy = (w[:, 2:] - 2.0 * w[:, 1:-1] + w[:, :-2]) / (hy * hy)
    dxx = _second_diff_axis0(w[:, 1:-1], -1.0) / (hx * hx)
    out[:, 1:-1] = dxx + dyy
    return out


def _ddx(f, hx):
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2.0 * hx)
    d[0] = (f[1] - f[0]) / hx
    d[-1] = (f[-1] - f[-2]) / hx
    return d


def _ddy(f, hy):
    d = np.empty_like(f)
    d[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * hy)
    d[:, 0] = (f[:, 1] - f[:, 0]) / hy
    d[:, -1] = (f[:, -1] - f[:, -2]) / hy
    return d


def advect_cell(f, uc, wc, hx, hy):
    return uc * _ddx(f, hx) + wc * _ddy(f, hy)


def grad_sq(M, hx, hy):
    """Sum over components of the averaged squared one-sided differences.

    With Neumann ghosts this satisfies ``M . lap(M) = -grad_sq(M)`` exactly
    whenever every node of ``M`` is a unit vector.
    """
    g = np.zeros(M.shape[1:])
    for m in M:
        ex = np.zeros_like(m)
        ey = np.zeros_like(m)
        dx2 = (m[1:] - m[:-1]) ** 2
        dy2 = (m[:, 1:] - m[:, :-1]) ** 2
        ex[1:] += dx2
        ex[:-1] += dx2
        ey[:, 1:] += dy2
        ey[:, :-1] += dy2
        g += ex / (2.0 * hx * hx) + ey / (2.0 * hy * hy)
    return g


def llg_rhs(M, uc, wc, H, hx, hy):
    lap = np.stack([lap_cell(m, hx, hy, NEUMANN) for m in M])
    g = grad_sq(M, hx, hy)
    adv = np.stack([advect_cell(m, uc, wc, hx, hy) for m in M])
    heff = lap + H
    heff[2] -= M[2]
    hres = H.copy()
    hres[2] -= M[2]
    c1 = np.cross(M, heff, axis=0)
    c2 = np.cross(M, np.cross(M, hres, axis=0), axis=0)
    return lap + g * M - c1 - c2 - adv


def _apply_helmholtz(x, alpha, hx, hy, layout):
    if layout == DIRICHLET or layout == NEUMANN:
        return x - alpha * lap_cell(x, hx, hy, layout)
    if layout == XFACE:
        y = x - alpha * lap_xface(x, hx, hy)
        y[0] = 0.0
        y[-1] = 0.0
        return y
    y = x - alpha * lap_yface(x, hx, hy)
    y[:, 0] = 0.0
    y[:, -1] = 0.0
    return y


def _helmholtz_diag(shape, alpha, hx, hy, layout):
    ax = alpha / (hx * hx)
    ay = alpha / (hy * hy)
    d = np.full(shape, 1.0 + 2.0 * ax + 2.0 * ay)
    if layout == DIRICHLET or layout == NEUMANN:
        s = 1.0 if layout == DIRICHLET else -1.0
        d[0, :] += s * ax
        d[-1, :] += s * ax
        d[:, 0] += s * ay
        d[:, -1] += s * ay
    elif layout == XFACE:
        d[:, 0] += ay
        d[:, -1] += ay
        d[0] = 1.0
        d[-1] = 1.0
    else:
        d[0, :] += ax
        d[-1, :] += ax
        d[:, 0] = 1.0
        d[:, -1] = 1.0
    return d


def _pin(a, layout):
    if layout == XFACE:
        a[0] = 0.0
        a[-1] = 0.0
    elif layout == YFACE:
        a[:, 0] = 0.0
        a[:, -1] = 0.0


def helmholtz(b, alpha, hx, hy, layout, tol, maxiter, x0=None, dinv=None):
    """Jacobi-preconditioned CG for ``(I - alpha*lap) x = b``.

    Returns ``(x, iterations, relative_residual)``.  Pinned boundary faces of
    the face layouts are held at zero regardless of ``b`` and ``x0``.
    ``dinv`` may pass a precomputed inverse diagonal.
    """
    b = np.array(b, dtype=float)
    _pin(b, layout)
    bnorm = np.sqrt(_dot(b, b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    _pin(x, layout)
    if dinv is None:
        dinv = 1.0 / _helmholtz_diag(b.shape, alpha, hx, hy, layout)
    r = b - _apply_helmholtz(x, alpha, hx, hy, layout)
    rn = np.sqrt(_dot(r, r))
    if rn <= tol * bnorm:
        return x, 0, rn / bnorm
    z = dinv * r
    p = z.copy()
    rz = _dot(r, z)
    for it in range(1, maxiter + 1):
        ap = _apply_helmholtz(p, alpha, hx, hy, layout)
        a = rz / _dot(p, ap)
        x += a * p
        r -= a * ap
        rn = np.sqrt(_dot(r, r))
        if rn <= tol * bnorm:
            return x, it, rn / bnorm
        z = dinv * r
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, rn / bnorm


# -- fused kernels for the coupled step -----------------------------------------


def velocity_gradient(u, w, hx, hy):
    """Cell-centered ``G[a, b] = d v_a / d x_b`` from MAC face velocities."""
    nx, ny = w.shape[0], u.shape[1]
    G = np.empty((2, 2, nx, ny))
    G[0, 0] = (u[1:] - u[:-1]) / hx
    G[1, 1] = (w[:, 1:] - w[:, :-1]) / hy
    uc = np.empty((nx + 1, ny + 1))
    uc[:, 1:-1] = (u[:, 1:] - u[:, :-1]) / hy
    uc[:, 0] = 2.0 * u[:, 0] / hy
    uc[:, -1] = -2.0 * u[:, -1] / hy
    wc = np.empty((nx + 1, ny + 1))
    wc[1:-1] = (w[1:] - w[:-1]) / hx
    wc[0] = 2.0 * w[0] / hx
    wc[-1] = -2.0 * w[-1] / hx
    G[0, 1] = 0.25 * (uc[:-1, :-1] + uc[1:, :-1] + uc[:-1, 1:] + uc[1:, 1:])
    G[1, 0] = 0.25 * (wc[:-1, :-1] + wc[1:, :-1] + wc[:-1, 1:] + wc[1:, 1:])
    return G


def transport_F(F, u, w, hx, hy):
    """``grad(v) F - (v . grad) F`` at the cells."""
    G = velocity_gradient(u, w, hx, hy)
    uc = 0.5 * (u[1:] + u[:-1])
    wc = 0.5 * (w[:, 1:] + w[:, :-1])
    out = np.einsum("acij,cbij->abij", G, F)
    for a in range(2):
        for b in range(2):
            out[a, b] -= advect_cell(F[a, b], uc, wc, hx, hy)
    return out


def tensor_div(S, hx, hy):
    """Row-wise divergence onto the interior faces of a tensor given with one ghost layer."""
    Sc01 = 0.25 * (S[0, 1, :-1, :-1] + S[0, 1, 1:, :-1] + S[0, 1, :-1, 1:] + S[0, 1, 1:, 1:])
    Sc10 = 0.25 * (S[1, 0, :-1, :-1] + S[1, 0, 1:, :-1] + S[1, 0, :-1, 1:] + S[1, 0, 1:, 1:])
    S00 = S[0, 0, 1:-1, 1:-1]
    S11 = S[1, 1, 1:-1, 1:-1]
    nx, ny = S00.shape
    fu = np.zeros((nx + 1, ny))
    fw = np.zeros((nx, ny + 1))
    fu[1:-1] = (S00[1:] - S00[:-1]) / hx + (Sc01[1:-1, 1:] - Sc01[1:-1, :-1]) / hy
    fw[:, 1:-1] = (Sc10[1:, 1:-1] - Sc10[:-1, 1:-1]) / hx + (S11[:, 1:] - S11[:, :-1]) / hy
    return fu, fw


def stress_div(Wp, Fp, hx, hy):
    """Divergence of ``S = Wp Fp^T`` from padded ``W'(F)`` and ``F``."""
    return tensor_div(np.einsum("abij,cbij->acij", Wp, Fp), hx, hy)


def magnetic_div(M, hx, hy):
    """``grad(|grad M|^2 / 2) + (grad M)^T lap M`` on the interior faces."""
    g = grad_sq(M, hx, hy)
    nx, ny = M.shape[1:]
    fu = np.zeros((nx + 1, ny))
    fw = np.zeros((nx, ny + 1))
    fu[1:-1] = 0.5 * (g[1:] - g[:-1]) / hx
    fw[:, 1:-1] = 0.5 * (g[:, 1:] - g[:, :-1]) / hy
    for m in M:
        lm = lap_cell(m, hx, hy, NEUMANN)
        fu[1:-1] += (m[1:] - m[:-1]) / hx * 0.5 * (lm[1:] + lm[:-1])
        fw[:, 1:-1] += (m[:, 1:] - m[:, :-1]) / hy * 0.5 * (lm[:, 1:] + lm[:, :-1])
    return fu, fw


def advect_mac(fu, fw, vu, vw, hx, hy):
    """``(v . grad) f`` for face fields; transverse velocity from the four nearest faces."""
    au = np.zeros_like(fu)
    aw = np.zeros_like(fw)
    wf = 0.25 * (vw[:-1, :-1] + vw[1:, :-1] + vw[:-1, 1:] + vw[1:, 1:])
    au[1:-1] = vu[1:-1] * (fu[2:] - fu[:-2]) / (2.0 * hx) + wf * _ddy(fu[1:-1], hy)
    uf = 0.25 * (vu[:-1, :-1] + vu[1:, :-1] + vu[:-1, 1:] + vu[1:, 1:])
    aw[:, 1:-1] = uf * _ddx(fw[:, 1:-1], hx) + vw[:, 1:-1] * (fw[:, 2:] - fw[:, :-2]) / (2.0 * hy)
    return au, aw


def _fdiff_sq(f, h, axis, dirichlet):
    f = np.moveaxis(f, axis, -1)
    d = np.diff(f, axis=-1) / h
    s = _dot(d, d)
    if dirichlet:
        b0 = 2.0 * f[..., 0] / h
        b1 = 2.0 * f[..., -1] / h
        s += 0.5 * (_dot(b0, b0) + _dot(b1, b1))
    return s


def diag_sums(u, w, F, M, H, hx, hy):
    """Unweighted grid sums behind the per-step diagnostics.

    Returns ``(v_sq, grad_v_sq, F_sq, grad_F_sq, F_l4_4, grad_M_sq, lap_M_sq,
    grad_M_l4_4, M3_sq, llg_diss)``; multiply by ``hx*hy`` for the
    quadratures.  ``llg_diss`` is ``sum |M x H_eff|^2`` with
    ``H_eff = lap M - M_3 e_3 + H`` (``H`` may be ``None``).
    """
    v_sq = _dot(u, u) + _dot(w, w)
    gv = (_dot(np.diff(u, axis=0), np.diff(u, axis=0)) / (hx * hx) + _fdiff_sq(u, hy, 1, True)
          + _dot(np.diff(w, axis=1), np.diff(w, axis=1)) / (hy * hy) + _fdiff_sq(w, hx, 0, True))
    F_sq = _dot(F, F)
    gF = _fdiff_sq(F, hx, 2, True) + _fdiff_sq(F, hy, 3, True)
    r2 = np.add.reduce((F * F).reshape(4, *F.shape[2:]), axis=0)
    F4 = _dot(r2, r2)
    gM = _fdiff_sq(M, hx, 1, False) + _fdiff_sq(M, hy, 2, False)
    lap = np.stack([lap_cell(m, hx, hy, NEUMANN) for m in M])
    g = grad_sq(M, hx, hy)
    lM = _dot(lap, lap)
    lap[2] -= M[2]
    if H is not None:
        lap += H
    c = np.cross(M, lap, axis=0)
    return (v_sq, gv, F_sq, gF, F4, gM, lM, _dot(g, g), _dot(M[2], M[2]), _dot(c, c))


def helmholtz_residual(x, b, alpha, hx, hy, layout):
    """``||b - (I - alpha lap) x|| / ||b||`` (pinned face rows of ``b`` ignored); 0 if ``b = 0``."""
    b = np.array(b, dtype=float)
    if layout == XFACE:
        b[0] = 0.0
        b[-1] = 0.0
    elif layout == YFACE:
        b[:, 0] = 0.0
        b[:, -1] = 0.0
    bn = np.sqrt(_dot(b, b))
    r = b - _apply_helmholtz(x, alpha, hx, hy, layout)
    rn = np.sqrt(_dot(r, r))
    if bn == 0.0:
        return rn
    return rn / bn


def renormalize(M, eps):
    """Project every node onto the unit sphere.

    Returns ``(M / |M|, max | |M| - 1 | before, max | |M| - 1 | after,
    min |M|)``; the caller rejects ``min |M| < eps``.
    """
    n = np.sqrt(np.add.reduce(M * M, axis=0))
    if np.min(n) < eps or not np.isfinite(n).all():
        return M.copy(), float(np.max(np.abs(n - 1.0))), np.inf, float(np.min(n))
    out = M / n
    after = np.sqrt(np.add.reduce(out * out, axis=0))
    return (out, float(np.max(np.abs(n - 1.0))), float(np.max(np.abs(after - 1.0))),
            float(np.min(n)))


def project(us, ws, phi, dt, hx, hy):
    """``v = v* - dt grad(phi)`` on interior faces; returns ``(u, w, sum div^2, sum |v|^2)``."""
    u = us.copy()
    w = ws.copy()
    u[1:-1] -= dt * (phi[1:] - phi[:-1]) / hx
    w[:, 1:-1] -= dt * (phi[:, 1:] - phi[:, :-1]) / hy
    div = (u[1:] - u[:-1]) / hx + (w[:, 1:] - w[:, :-1]) / hy
    return u, w, _dot(div, div), _dot(u, u) + _dot(w, w)
