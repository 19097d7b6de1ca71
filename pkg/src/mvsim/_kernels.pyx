# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernels.

Same functions, signatures and layout codes as ``mvsim._kernels_py``; results
agree with the NumPy reference to rounding.  All reductions run serially in
a fixed index order so output is bitwise reproducible.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite, INFINITY

cnp.import_array()

BACKEND = "cython"

DEF DIRICHLET = 0
DEF NEUMANN = 1
DEF XFACE = 2
DEF YFACE = 3


cdef inline double _lap_cell_at(const double[:, ::1] f, Py_ssize_t i, Py_ssize_t j,
                                Py_ssize_t nx, Py_ssize_t ny, double ix2, double iy2,
                                double gs) noexcept nogil:
    cdef double c = f[i, j]
    cdef double xm = f[i - 1, j] if i > 0 else gs * c
    cdef double xp = f[i + 1, j] if i < nx - 1 else gs * c
    cdef double ym = f[i, j - 1] if j > 0 else gs * c
    cdef double yp = f[i, j + 1] if j < ny - 1 else gs * c
    return (xp - 2.0 * c + xm) * ix2 + (yp - 2.0 * c + ym) * iy2


cdef void _lap_cell(const double[:, ::1] f, double[:, ::1] out, double hx, double hy,
                    double gs) noexcept nogil:
    # ghost value gs * f at the walls: gs = -1 Dirichlet, +1 Neumann
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], i, j
    cdef double ix2 = 1.0 / (hx * hx), iy2 = 1.0 / (hy * hy)
    cdef double c
    for i in range(1, nx - 1):
        out[i, 0] = _lap_cell_at(f, i, 0, nx, ny, ix2, iy2, gs)
        for j in range(1, ny - 1):
            c = f[i, j]
            out[i, j] = (f[i + 1, j] - 2.0 * c + f[i - 1, j]) * ix2 + (
                f[i, j + 1] - 2.0 * c + f[i, j - 1]) * iy2
        out[i, ny - 1] = _lap_cell_at(f, i, ny - 1, nx, ny, ix2, iy2, gs)
    for j in range(ny):
        out[0, j] = _lap_cell_at(f, 0, j, nx, ny, ix2, iy2, gs)
        out[nx - 1, j] = _lap_cell_at(f, nx - 1, j, nx, ny, ix2, iy2, gs)


cdef void _lap_xface(const double[:, ::1] u, double[:, ::1] out, double hx,
                     double hy) noexcept nogil:
    cdef Py_ssize_t n0 = u.shape[0], ny = u.shape[1], i, j
    cdef double ix2 = 1.0 / (hx * hx), iy2 = 1.0 / (hy * hy)
    cdef double c
    for j in range(ny):
        out[0, j] = 0.0
        out[n0 - 1, j] = 0.0
    for i in range(1, n0 - 1):
        c = u[i, 0]
        out[i, 0] = (u[i + 1, 0] - 2.0 * c + u[i - 1, 0]) * ix2 + (u[i, 1] - 3.0 * c) * iy2
        for j in range(1, ny - 1):
            c = u[i, j]
            out[i, j] = (u[i + 1, j] - 2.0 * c + u[i - 1, j]) * ix2 + (
                u[i, j + 1] - 2.0 * c + u[i, j - 1]) * iy2
        c = u[i, ny - 1]
        out[i, ny - 1] = (u[i + 1, ny - 1] - 2.0 * c + u[i - 1, ny - 1]) * ix2 + (
            u[i, ny - 2] - 3.0 * c) * iy2


cdef void _lap_yface(const double[:, ::1] w, double[:, ::1] out, double hx,
                     double hy) noexcept nogil:
    cdef Py_ssize_t nx = w.shape[0], n1 = w.shape[1], i, j
    cdef double ix2 = 1.0 / (hx * hx), iy2 = 1.0 / (hy * hy)
    cdef double c, xm, xp
    for i in range(nx):
        out[i, 0] = 0.0
        out[i, n1 - 1] = 0.0
        if i == 0 or i == nx - 1:
            for j in range(1, n1 - 1):
                c = w[i, j]
                xm = w[i - 1, j] if i > 0 else -c
                xp = w[i + 1, j] if i < nx - 1 else -c
                out[i, j] = (xp - 2.0 * c + xm) * ix2 + (w[i, j + 1] - 2.0 * c + w[i, j - 1]) * iy2
        else:
            for j in range(1, n1 - 1):
                c = w[i, j]
                out[i, j] = (w[i + 1, j] - 2.0 * c + w[i - 1, j]) * ix2 + (
                    w[i, j + 1] - 2.0 * c + w[i, j - 1]) * iy2


def lap_cell(f, double hx, double hy, int bc):
    cdef double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    out = np.empty_like(fv)
    cdef double[:, ::1] ov = out
    _lap_cell(fv, ov, hx, hy, -1.0 if bc == DIRICHLET else 1.0)
    return out


def lap_xface(u, double hx, double hy):
    cdef double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty_like(uv)
    _lap_xface(uv, out, hx, hy)
    return out


def lap_yface(w, double hx, double hy):
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    out = np.empty_like(wv)
    _lap_yface(wv, out, hx, hy)
    return out


cdef inline double _dfd(const double[:, ::1] f, Py_ssize_t i, Py_ssize_t j, Py_ssize_t nx,
                        double hx) noexcept nogil:
    if i == 0:
        return (f[1, j] - f[0, j]) / hx
    if i == nx - 1:
        return (f[nx - 1, j] - f[nx - 2, j]) / hx
    return (f[i + 1, j] - f[i - 1, j]) / (2.0 * hx)


cdef inline double _dfdy(const double[:, ::1] f, Py_ssize_t i, Py_ssize_t j, Py_ssize_t ny,
                         double hy) noexcept nogil:
    if j == 0:
        return (f[i, 1] - f[i, 0]) / hy
    if j == ny - 1:
        return (f[i, ny - 1] - f[i, ny - 2]) / hy
    return (f[i, j + 1] - f[i, j - 1]) / (2.0 * hy)


def advect_cell(f, uc, wc, double hx, double hy):
    cdef double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef double[:, ::1] uv = np.ascontiguousarray(uc, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(wc, dtype=np.float64)
    cdef Py_ssize_t nx = fv.shape[0], ny = fv.shape[1], i, j
    out = np.empty_like(fv)
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(nx):
            for j in range(ny):
                ov[i, j] = uv[i, j] * _dfd(fv, i, j, nx, hx) + wv[i, j] * _dfdy(fv, i, j, ny, hy)
    return out


def grad_sq(M, double hx, double hy):
    cdef double[:, :, ::1] mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef Py_ssize_t nc = mv.shape[0], nx = mv.shape[1], ny = mv.shape[2], k, i, j
    cdef double ax = 1.0 / (2.0 * hx * hx), ay = 1.0 / (2.0 * hy * hy), d, s
    out = np.empty((nx, ny))
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(nx):
            for j in range(ny):
                s = 0.0
                for k in range(nc):
                    if i > 0:
                        d = mv[k, i, j] - mv[k, i - 1, j]
                        s += d * d * ax
                    if i < nx - 1:
                        d = mv[k, i + 1, j] - mv[k, i, j]
                        s += d * d * ax
                    if j > 0:
                        d = mv[k, i, j] - mv[k, i, j - 1]
                        s += d * d * ay
                    if j < ny - 1:
                        d = mv[k, i, j + 1] - mv[k, i, j]
                        s += d * d * ay
                ov[i, j] = s
    return out


def llg_rhs(M, uc, wc, H, double hx, double hy):
    cdef double[:, :, ::1] mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef double[:, ::1] uv = np.ascontiguousarray(uc, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(wc, dtype=np.float64)
    cdef double[:, :, ::1] hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef Py_ssize_t nx = mv.shape[1], ny = mv.shape[2], k, i, j
    cdef double ix2 = 1.0 / (hx * hx), iy2 = 1.0 / (hy * hy)
    cdef double c, xm, xp, ym, yp, g, dx, dy
    cdef double m[3]
    cdef double lap[3]
    cdef double adv[3]
    cdef double he[3]
    cdef double hr[3]
    cdef double c1[3]
    cdef double t[3]
    cdef double c2[3]
    out = np.empty((3, nx, ny))
    cdef double[:, :, ::1] ov = out
    with nogil:
        for i in range(nx):
            for j in range(ny):
                g = 0.0
                for k in range(3):
                    c = mv[k, i, j]
                    m[k] = c
                    xm = mv[k, i - 1, j] if i > 0 else c
                    xp = mv[k, i + 1, j] if i < nx - 1 else c
                    ym = mv[k, i, j - 1] if j > 0 else c
                    yp = mv[k, i, j + 1] if j < ny - 1 else c
                    lap[k] = (xp - 2.0 * c + xm) * ix2 + (yp - 2.0 * c + ym) * iy2
                    g += ((xp - c) * (xp - c) + (xm - c) * (xm - c)) * 0.5 * ix2
                    g += ((yp - c) * (yp - c) + (ym - c) * (ym - c)) * 0.5 * iy2
                    if i == 0:
                        dx = (mv[k, 1, j] - c) / hx
                    elif i == nx - 1:
                        dx = (c - mv[k, nx - 2, j]) / hx
                    else:
                        dx = (xp - xm) / (2.0 * hx)
                    if j == 0:
                        dy = (mv[k, i, 1] - c) / hy
                    elif j == ny - 1:
                        dy = (c - mv[k, i, ny - 2]) / hy
                    else:
                        dy = (yp - ym) / (2.0 * hy)
                    adv[k] = uv[i, j] * dx + wv[i, j] * dy
                    he[k] = lap[k] + hv[k, i, j]
                    hr[k] = hv[k, i, j]
                he[2] -= m[2]
                hr[2] -= m[2]
                c1[0] = m[1] * he[2] - m[2] * he[1]
                c1[1] = m[2] * he[0] - m[0] * he[2]
                c1[2] = m[0] * he[1] - m[1] * he[0]
                t[0] = m[1] * hr[2] - m[2] * hr[1]
                t[1] = m[2] * hr[0] - m[0] * hr[2]
                t[2] = m[0] * hr[1] - m[1] * hr[0]
                c2[0] = m[1] * t[2] - m[2] * t[1]
                c2[1] = m[2] * t[0] - m[0] * t[2]
                c2[2] = m[0] * t[1] - m[1] * t[0]
                for k in range(3):
                    ov[k, i, j] = lap[k] + g * m[k] - c1[k] - c2[k] - adv[k]
    return out


cdef void _apply(const double[:, ::1] x, double[:, ::1] y, double alpha, double hx, double hy,
                 int layout) noexcept nogil:
    cdef Py_ssize_t n0 = x.shape[0], n1 = x.shape[1], i, j
    if layout == DIRICHLET or layout == NEUMANN:
        _lap_cell(x, y, hx, hy, -1.0 if layout == DIRICHLET else 1.0)
    elif layout == XFACE:
        _lap_xface(x, y, hx, hy)
    else:
        _lap_yface(x, y, hx, hy)
    for i in range(n0):
        for j in range(n1):
            y[i, j] = x[i, j] - alpha * y[i, j]
    if layout == XFACE:
        for j in range(n1):
            y[0, j] = 0.0
            y[n0 - 1, j] = 0.0
    elif layout == YFACE:
        for i in range(n0):
            y[i, 0] = 0.0
            y[i, n1 - 1] = 0.0


cdef double _dot(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s += a[i, j] * b[i, j]
    return s


def _diag(shape, double alpha, double hx, double hy, int layout):
    from mvsim._kernels_py import _helmholtz_diag
    return _helmholtz_diag(shape, alpha, hx, hy, layout)


def helmholtz(b, double alpha, double hx, double hy, int layout, double tol, int maxiter,
              x0=None, dinv=None):
    """Jacobi-preconditioned CG for ``(I - alpha*lap) x = b``."""
    bb = np.array(b, dtype=np.float64, order="C")
    if layout == XFACE:
        bb[0] = 0.0
        bb[bb.shape[0] - 1] = 0.0
    elif layout == YFACE:
        bb[:, 0] = 0.0
        bb[:, bb.shape[1] - 1] = 0.0
    cdef double[:, ::1] bv = bb
    cdef double bnorm = sqrt(_dot(bv, bv))
    if bnorm == 0.0:
        return np.zeros_like(bb), 0, 0.0
    x = np.zeros_like(bb) if x0 is None else np.array(x0, dtype=np.float64, order="C")
    if layout == XFACE:
        x[0] = 0.0
        x[x.shape[0] - 1] = 0.0
    elif layout == YFACE:
        x[:, 0] = 0.0
        x[:, x.shape[1] - 1] = 0.0
    if dinv is None:
        dinv_a = 1.0 / _diag(bb.shape, alpha, hx, hy, layout)
    else:
        dinv_a = np.ascontiguousarray(dinv, dtype=np.float64)
    r_a = np.empty_like(bb)
    z_a = np.empty_like(bb)
    p_a = np.empty_like(bb)
    ap_a = np.empty_like(bb)
    cdef double[:, ::1] xv = x, dv = dinv_a, r = r_a, z = z_a, p = p_a, ap = ap_a
    cdef Py_ssize_t n0 = bb.shape[0], n1 = bb.shape[1], i, j
    cdef int it = 0
    cdef double rn, rz, rz_new, a, beta
    with nogil:
        _apply(xv, ap, alpha, hx, hy, layout)
        for i in range(n0):
            for j in range(n1):
                r[i, j] = bv[i, j] - ap[i, j]
        rn = sqrt(_dot(r, r))
        if rn > tol * bnorm:
            for i in range(n0):
                for j in range(n1):
                    z[i, j] = dv[i, j] * r[i, j]
                    p[i, j] = z[i, j]
            rz = _dot(r, z)
            while it < maxiter:
                it += 1
                _apply(p, ap, alpha, hx, hy, layout)
                a = rz / _dot(p, ap)
                rn = 0.0
                rz_new = 0.0
                for i in range(n0):
                    for j in range(n1):
                        xv[i, j] += a * p[i, j]
                        r[i, j] -= a * ap[i, j]
                        rn += r[i, j] * r[i, j]
                        z[i, j] = dv[i, j] * r[i, j]
                        rz_new += r[i, j] * z[i, j]
                rn = sqrt(rn)
                if rn <= tol * bnorm:
                    break
                beta = rz_new / rz
                rz = rz_new
                for i in range(n0):
                    for j in range(n1):
                        p[i, j] = z[i, j] + beta * p[i, j]
    return x, it, rn / bnorm


# -- fused kernels for the coupled step -----------------------------------------


def velocity_gradient(u, w, double hx, double hy):
    from mvsim._kernels_py import velocity_gradient as vg
    return vg(np.asarray(u, dtype=np.float64), np.asarray(w, dtype=np.float64), hx, hy)


cdef inline double _corner_uy(const double[:, ::1] u, Py_ssize_t ci, Py_ssize_t cj,
                              Py_ssize_t ny, double hy) noexcept nogil:
    if cj == 0:
        return 2.0 * u[ci, 0] / hy
    if cj == ny:
        return -2.0 * u[ci, ny - 1] / hy
    return (u[ci, cj] - u[ci, cj - 1]) / hy


cdef inline double _corner_wx(const double[:, ::1] w, Py_ssize_t ci, Py_ssize_t cj,
                              Py_ssize_t nx, double hx) noexcept nogil:
    if ci == 0:
        return 2.0 * w[0, cj] / hx
    if ci == nx:
        return -2.0 * w[nx - 1, cj] / hx
    return (w[ci, cj] - w[ci - 1, cj]) / hx


def transport_F(F, u, w, double hx, double hy):
    cdef double[:, :, :, ::1] fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t nx = fv.shape[2], ny = fv.shape[3], i, j, a, b, im, ip, jm, jp
    cdef double g[2][2]
    cdef double uc, wc, sx, sy
    out = np.empty((2, 2, nx, ny))
    cdef double[:, :, :, ::1] ov = out
    with nogil:
        for i in range(nx):
            # centered differences inside, one-sided on the boundary ring
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < nx - 1 else nx - 1
            sx = 1.0 / ((ip - im) * hx)
            for j in range(ny):
                jm = j - 1 if j > 0 else 0
                jp = j + 1 if j < ny - 1 else ny - 1
                sy = 1.0 / ((jp - jm) * hy)
                g[0][0] = (uv[i + 1, j] - uv[i, j]) / hx
                g[1][1] = (wv[i, j + 1] - wv[i, j]) / hy
                g[0][1] = 0.25 * (_corner_uy(uv, i, j, ny, hy) + _corner_uy(uv, i + 1, j, ny, hy)
                                  + _corner_uy(uv, i, j + 1, ny, hy)
                                  + _corner_uy(uv, i + 1, j + 1, ny, hy))
                g[1][0] = 0.25 * (_corner_wx(wv, i, j, nx, hx) + _corner_wx(wv, i + 1, j, nx, hx)
                                  + _corner_wx(wv, i, j + 1, nx, hx)
                                  + _corner_wx(wv, i + 1, j + 1, nx, hx))
                uc = 0.5 * (uv[i, j] + uv[i + 1, j])
                wc = 0.5 * (wv[i, j] + wv[i, j + 1])
                for a in range(2):
                    for b in range(2):
                        ov[a, b, i, j] = (g[a][0] * fv[0, b, i, j] + g[a][1] * fv[1, b, i, j]
                                          - (uc * ((fv[a, b, ip, j] - fv[a, b, im, j]) * sx)
                                             + wc * ((fv[a, b, i, jp] - fv[a, b, i, jm]) * sy)))
    return out


cdef void _tensor_div(const double[:, :, :, ::1] S, double[:, ::1] fu, double[:, ::1] fw,
                      double hx, double hy) noexcept nogil:
    cdef Py_ssize_t nx = S.shape[2] - 2, ny = S.shape[3] - 2, i, j
    cdef double top, bot
    for i in range(nx + 1):
        for j in range(ny):
            fu[i, j] = 0.0
    for i in range(nx):
        for j in range(ny + 1):
            fw[i, j] = 0.0
    # x-face i (1..nx-1) sits between padded cells i and i+1
    for i in range(1, nx):
        for j in range(ny):
            top = 0.25 * (S[0, 1, i, j + 1] + S[0, 1, i + 1, j + 1] + S[0, 1, i, j + 2]
                          + S[0, 1, i + 1, j + 2])
            bot = 0.25 * (S[0, 1, i, j] + S[0, 1, i + 1, j] + S[0, 1, i, j + 1]
                          + S[0, 1, i + 1, j + 1])
            fu[i, j] = (S[0, 0, i + 1, j + 1] - S[0, 0, i, j + 1]) / hx + (top - bot) / hy
    for i in range(nx):
        for j in range(1, ny):
            top = 0.25 * (S[1, 0, i + 1, j] + S[1, 0, i + 2, j] + S[1, 0, i + 1, j + 1]
                          + S[1, 0, i + 2, j + 1])
            bot = 0.25 * (S[1, 0, i, j] + S[1, 0, i + 1, j] + S[1, 0, i, j + 1]
                          + S[1, 0, i + 1, j + 1])
            fw[i, j] = (top - bot) / hx + (S[1, 1, i + 1, j + 1] - S[1, 1, i + 1, j]) / hy


def tensor_div(S, double hx, double hy):
    cdef double[:, :, :, ::1] sv = np.ascontiguousarray(S, dtype=np.float64)
    nx, ny = sv.shape[2] - 2, sv.shape[3] - 2
    fu = np.empty((nx + 1, ny))
    fw = np.empty((nx, ny + 1))
    _tensor_div(sv, fu, fw, hx, hy)
    return fu, fw


def stress_div(Wp, Fp, double hx, double hy):
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(Wp, dtype=np.float64)
    cdef double[:, :, :, ::1] fv = np.ascontiguousarray(Fp, dtype=np.float64)
    cdef Py_ssize_t n0 = fv.shape[2], n1 = fv.shape[3], i, j, a, c
    S = np.empty((2, 2, n0, n1))
    cdef double[:, :, :, ::1] sv = S
    fu = np.empty((n0 - 1, n1 - 2))
    fw = np.empty((n0 - 2, n1 - 1))
    cdef double[:, ::1] fuv = fu, fwv = fw
    with nogil:
        for a in range(2):
            for c in range(2):
                for i in range(n0):
                    for j in range(n1):
                        sv[a, c, i, j] = wv[a, 0, i, j] * fv[c, 0, i, j] + wv[a, 1, i, j] * fv[c, 1, i, j]
        _tensor_div(sv, fuv, fwv, hx, hy)
    return fu, fw


def magnetic_div(M, double hx, double hy):
    cdef double[:, :, ::1] mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef Py_ssize_t nx = mv.shape[1], ny = mv.shape[2], k, i, j
    g_a = grad_sq(mv, hx, hy)
    lap_a = np.empty((3, nx, ny))
    cdef double[:, ::1] g = g_a
    cdef double[:, :, ::1] lap = lap_a
    fu = np.empty((nx + 1, ny))
    fw = np.empty((nx, ny + 1))
    cdef double[:, ::1] fuv = fu, fwv = fw
    cdef double s
    with nogil:
        for k in range(3):
            _lap_cell(mv[k], lap[k], hx, hy, 1.0)
        for j in range(ny):
            fuv[0, j] = 0.0
            fuv[nx, j] = 0.0
        for i in range(1, nx):
            for j in range(ny):
                s = 0.5 * (g[i, j] - g[i - 1, j]) / hx
                for k in range(3):
                    s += (mv[k, i, j] - mv[k, i - 1, j]) / hx * 0.5 * (lap[k, i, j] + lap[k, i - 1, j])
                fuv[i, j] = s
        for i in range(nx):
            fwv[i, 0] = 0.0
            fwv[i, ny] = 0.0
            for j in range(1, ny):
                s = 0.5 * (g[i, j] - g[i, j - 1]) / hy
                for k in range(3):
                    s += (mv[k, i, j] - mv[k, i, j - 1]) / hy * 0.5 * (lap[k, i, j] + lap[k, i, j - 1])
                fwv[i, j] = s
    return fu, fw


def advect_mac(fu, fw, vu, vw, double hx, double hy):
    cdef double[:, ::1] a = np.ascontiguousarray(fu, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(fw, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(vu, dtype=np.float64)
    cdef double[:, ::1] w = np.ascontiguousarray(vw, dtype=np.float64)
    cdef Py_ssize_t nx = b.shape[0], ny = a.shape[1], i, j
    cdef double tv, dy, dx
    au = np.zeros((nx + 1, ny))
    aw = np.zeros((nx, ny + 1))
    cdef double[:, ::1] auv = au, awv = aw
    with nogil:
        for i in range(1, nx):
            for j in range(ny):
                tv = 0.25 * (w[i - 1, j] + w[i, j] + w[i - 1, j + 1] + w[i, j + 1])
                if j == 0:
                    dy = (a[i, 1] - a[i, 0]) / hy
                elif j == ny - 1:
                    dy = (a[i, ny - 1] - a[i, ny - 2]) / hy
                else:
                    dy = (a[i, j + 1] - a[i, j - 1]) / (2.0 * hy)
                auv[i, j] = u[i, j] * (a[i + 1, j] - a[i - 1, j]) / (2.0 * hx) + tv * dy
        for i in range(nx):
            for j in range(1, ny):
                tv = 0.25 * (u[i, j - 1] + u[i + 1, j - 1] + u[i, j] + u[i + 1, j])
                if i == 0:
                    dx = (b[1, j] - b[0, j]) / hx
                elif i == nx - 1:
                    dx = (b[nx - 1, j] - b[nx - 2, j]) / hx
                else:
                    dx = (b[i + 1, j] - b[i - 1, j]) / (2.0 * hx)
                awv[i, j] = tv * dx + w[i, j] * (b[i, j + 1] - b[i, j - 1]) / (2.0 * hy)
    return au, aw


cdef double _fdiff_sq(const double[:, ::1] f, double hx, double hy, bint dirichlet) noexcept nogil:
    cdef Py_ssize_t n0 = f.shape[0], n1 = f.shape[1], i, j
    cdef double s = 0.0, d
    for i in range(n0 - 1):
        for j in range(n1):
            d = (f[i + 1, j] - f[i, j]) / hx
            s += d * d
    for i in range(n0):
        for j in range(n1 - 1):
            d = (f[i, j + 1] - f[i, j]) / hy
            s += d * d
    if dirichlet:
        for j in range(n1):
            d = 2.0 * f[0, j] / hx
            s += 0.5 * d * d
            d = 2.0 * f[n0 - 1, j] / hx
            s += 0.5 * d * d
        for i in range(n0):
            d = 2.0 * f[i, 0] / hy
            s += 0.5 * d * d
            d = 2.0 * f[i, n1 - 1] / hy
            s += 0.5 * d * d
    return s


def diag_sums(u, w, F, M, H, double hx, double hy):
    cdef double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef double[:, :, ::1] mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef Py_ssize_t nx = mv.shape[1], ny = mv.shape[2], i, j, k, a, b
    lap_a = np.empty((3, nx, ny))
    cdef double[:, :, ::1] lap = lap_a
    cdef bint has_h = H is not None
    cdef double[:, :, ::1] hv = np.ascontiguousarray(H if has_h else np.zeros((3, 1, 1)),
                                                     dtype=np.float64)
    cdef double e0, e1, e2, c0, c1, c2, llg = 0.0
    g_a = grad_sq(mv, hx, hy)
    cdef double[:, ::1] g = g_a
    cdef double v_sq = 0.0, gv = 0.0, F_sq = 0.0, gF = 0.0, F4 = 0.0, gM = 0.0
    cdef double lM = 0.0, g4 = 0.0, m3 = 0.0, d, r2
    with nogil:
        v_sq = _dot(uv, uv) + _dot(wv, wv)
        # u is pinned on the x-walls, so its x-differences need no ghost term;
        # its y-differences see the odd ghost (and symmetrically for w)
        for i in range(nx):
            for j in range(ny):
                d = (uv[i + 1, j] - uv[i, j]) / hx
                gv += d * d
                d = (wv[i, j + 1] - wv[i, j]) / hy
                gv += d * d
        for i in range(nx + 1):
            for j in range(ny - 1):
                d = (uv[i, j + 1] - uv[i, j]) / hy
                gv += d * d
            d = 2.0 * uv[i, 0] / hy
            gv += 0.5 * d * d
            d = 2.0 * uv[i, ny - 1] / hy
            gv += 0.5 * d * d
        for j in range(ny + 1):
            for i in range(nx - 1):
                d = (wv[i + 1, j] - wv[i, j]) / hx
                gv += d * d
            d = 2.0 * wv[0, j] / hx
            gv += 0.5 * d * d
            d = 2.0 * wv[nx - 1, j] / hx
            gv += 0.5 * d * d
        for a in range(2):
            for b in range(2):
                F_sq += _dot(fv[a, b], fv[a, b])
                gF += _fdiff_sq(fv[a, b], hx, hy, True)
        for i in range(nx):
            for j in range(ny):
                r2 = (fv[0, 0, i, j] * fv[0, 0, i, j] + fv[0, 1, i, j] * fv[0, 1, i, j]
                      + fv[1, 0, i, j] * fv[1, 0, i, j] + fv[1, 1, i, j] * fv[1, 1, i, j])
                F4 += r2 * r2
                g4 += g[i, j] * g[i, j]
        for k in range(3):
            gM += _fdiff_sq(mv[k], hx, hy, False)
            _lap_cell(mv[k], lap[k], hx, hy, 1.0)
            lM += _dot(lap[k], lap[k])
        m3 = _dot(mv[2], mv[2])
        for i in range(nx):
            for j in range(ny):
                e0 = lap[0, i, j]
                e1 = lap[1, i, j]
                e2 = lap[2, i, j] - mv[2, i, j]
                if has_h:
                    e0 = e0 + hv[0, i, j]
                    e1 = e1 + hv[1, i, j]
                    e2 = e2 + hv[2, i, j]
                c0 = mv[1, i, j] * e2 - mv[2, i, j] * e1
                c1 = mv[2, i, j] * e0 - mv[0, i, j] * e2
                c2 = mv[0, i, j] * e1 - mv[1, i, j] * e0
                llg += c0 * c0 + c1 * c1 + c2 * c2
    return (v_sq, gv, F_sq, gF, F4, gM, lM, g4, m3, llg)


def helmholtz_residual(x, b, double alpha, double hx, double hy, int layout):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n0 = xv.shape[0], n1 = xv.shape[1], i, j
    ap_a = np.empty((n0, n1))
    cdef double[:, ::1] ap = ap_a
    cdef double bn = 0.0, rn = 0.0, bb, r
    with nogil:
        _apply(xv, ap, alpha, hx, hy, layout)
        for i in range(n0):
            for j in range(n1):
                bb = bv[i, j]
                if (layout == XFACE and (i == 0 or i == n0 - 1)) or (
                        layout == YFACE and (j == 0 or j == n1 - 1)):
                    bb = 0.0
                r = bb - ap[i, j]
                bn += bb * bb
                rn += r * r
    if bn == 0.0:
        return sqrt(rn)
    return sqrt(rn) / sqrt(bn)


def renormalize(M, double eps):
    cdef double[:, :, ::1] mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef Py_ssize_t nx = mv.shape[1], ny = mv.shape[2], i, j
    cdef double n, before = 0.0, after = 0.0, nmin = INFINITY, a, b, c, d
    out = np.empty((3, nx, ny))
    cdef double[:, :, ::1] ov = out
    with nogil:
        for i in range(nx):
            for j in range(ny):
                n = sqrt(mv[0, i, j] * mv[0, i, j] + mv[1, i, j] * mv[1, i, j]
                         + mv[2, i, j] * mv[2, i, j])
                if not (n >= nmin):
                    nmin = n
                d = fabs(n - 1.0)
                if not (d <= before):
                    before = d
                a = mv[0, i, j] / n
                b = mv[1, i, j] / n
                c = mv[2, i, j] / n
                ov[0, i, j] = a
                ov[1, i, j] = b
                ov[2, i, j] = c
                d = fabs(sqrt(a * a + b * b + c * c) - 1.0)
                if not (d <= after):
                    after = d
    if not (nmin >= eps) or not isfinite(before):
        return np.array(M, dtype=np.float64), before, INFINITY, nmin
    return out, before, after, nmin


def project(us, ws, phi, double dt, double hx, double hy):
    cdef double[:, ::1] pv = np.ascontiguousarray(phi, dtype=np.float64)
    u = np.array(us, dtype=np.float64, order="C")
    w = np.array(ws, dtype=np.float64, order="C")
    cdef double[:, ::1] uv = u, wv = w
    cdef Py_ssize_t nx = pv.shape[0], ny = pv.shape[1], i, j
    cdef double div, dsum = 0.0, vsum = 0.0
    with nogil:
        for i in range(1, nx):
            for j in range(ny):
                uv[i, j] -= dt * (pv[i, j] - pv[i - 1, j]) / hx
        for i in range(nx):
            for j in range(1, ny):
                wv[i, j] -= dt * (pv[i, j] - pv[i, j - 1]) / hy
        for i in range(nx):
            for j in range(ny):
                div = (uv[i + 1, j] - uv[i, j]) / hx + (wv[i, j + 1] - wv[i, j]) / hy
                dsum += div * div
        vsum = _dot(uv, uv) + _dot(wv, wv)
    return u, w, dsum, vsum
