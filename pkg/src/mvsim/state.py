"""Simulation state, discrete norms and the binary snapshot format.

Norms use midpoint quadrature over the storage nodes, ``||f||_q^q =
sum |f_i|^q hx hy`` with ``|.|`` the Euclidean (Frobenius) magnitude over the
component axes.  The H1 seminorm sums squared face differences with the same
ghost values the Laplacian uses, so that ``seminorm_h1(f)**2 == -<f, lap f>``
holds to rounding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from mvsim.errors import DegeneracyError, StructuralError
from mvsim.grid import FaceVector, Grid, _bc_code, velocity_at_centers

MAGIC = b"MVSIM1\x00\x00"
HEADER = struct.Struct("<8sqqddd8sq")
assert HEADER.size == 64

_TAGS = {"u": 1, "w": 1, "p": 1, "F": 4, "M": 3}


@dataclass
class StateSnapshot:
    """Full state ``(t, v, p, F, M)``; ``F`` has shape ``(2, 2, nx, ny)``, ``M`` ``(3, nx, ny)``."""

    t: float
    v: FaceVector
    p: np.ndarray
    F: np.ndarray
    M: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def copy(self) -> "StateSnapshot":
        return replace(self, v=FaceVector(self.v.u.copy(), self.v.w.copy()), p=self.p.copy(),
                       F=self.F.copy(), M=self.M.copy(), meta=dict(self.meta))

    def arrays(self):
        return {"u": self.v.u, "w": self.v.w, "p": self.p, "F": self.F, "M": self.M}

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays().values())


def check_state(grid: Grid, state: StateSnapshot) -> None:
    grid.check_faces(state.v)
    grid.check_cell(state.p, ())
    grid.check_cell(state.F, (2, 2))
    grid.check_cell(state.M, (3,))


# -- norms ---------------------------------------------------------------------


def _magnitude(grid: Grid, field) -> np.ndarray:
    if isinstance(field, tuple):
        uc, wc = velocity_at_centers(grid, grid.check_faces(field))
        return np.sqrt(uc * uc + wc * wc)
    f = grid.check_cell(field)
    if f.ndim == 2:
        return np.abs(f)
    return np.sqrt(np.add.reduce((f * f).reshape((-1,) + grid.shape), axis=0))


def _qsum(a):
    return float(np.add.reduce(np.ravel(a)))


def norm_l2(grid: Grid, field) -> float:
    if isinstance(field, tuple):
        u, w = grid.check_faces(field)
        return np.sqrt((_qsum(u * u) + _qsum(w * w)) * grid.cell_area)
    f = grid.check_cell(field)
    return np.sqrt(_qsum(f * f) * grid.cell_area)


def norm_lq(grid: Grid, field, q: float) -> float:
    m = _magnitude(grid, field)
    return (_qsum(m ** q) * grid.cell_area) ** (1.0 / q)


def norm_l4(grid: Grid, field) -> float:
    m = _magnitude(grid, field)
    m2 = m * m
    return (_qsum(m2 * m2) * grid.cell_area) ** 0.25


def norm_l1(grid: Grid, field) -> float:
    return _qsum(_magnitude(grid, field)) * grid.cell_area


def norm_sup(grid: Grid, field) -> float:
    return float(np.max(_magnitude(grid, field)))


def _face_diff_sq(f, h, axis, bc_code):
    """Squared differences across faces normal to ``axis``, boundary faces half-weighted."""
    f = np.moveaxis(f, axis, -1)
    d = np.diff(f, axis=-1) / h
    total = _qsum(d * d)
    if bc_code == 0:
        b0 = 2.0 * f[..., 0] / h
        b1 = 2.0 * f[..., -1] / h
        total += 0.5 * (_qsum(b0 * b0) + _qsum(b1 * b1))
    return total


def seminorm_h1_sq(grid: Grid, field, bc: str) -> float:
    code = _bc_code(bc)
    if isinstance(field, tuple):
        if code != 0:
            raise StructuralError("face vectors are Dirichlet fields")
        u, w = grid.check_faces(field)
        s = _qsum(np.diff(u, axis=0) ** 2) / grid.hx ** 2 + _face_diff_sq(u, grid.hy, 1, 0)
        s += _qsum(np.diff(w, axis=1) ** 2) / grid.hy ** 2 + _face_diff_sq(w, grid.hx, 0, 0)
        return s * grid.cell_area
    f = grid.check_cell(field)
    s = _face_diff_sq(f, grid.hx, f.ndim - 2, code) + _face_diff_sq(f, grid.hy, f.ndim - 1, code)
    return s * grid.cell_area


def seminorm_h1(grid: Grid, field, bc: str) -> float:
    return float(np.sqrt(seminorm_h1_sq(grid, field, bc)))


# -- magnetization constraint -------------------------------------------------


def unit_deviation(M: np.ndarray) -> float:
    """``max | |M| - 1 |`` over all nodes."""
    return float(np.max(np.abs(np.sqrt(np.add.reduce(M * M, axis=0)) - 1.0)))


def max_change(a: StateSnapshot, b: StateSnapshot) -> float:
    """Largest nodewise absolute difference over every field of two states."""
    fa, fb = a.arrays(), b.arrays()
    return max(float(np.max(np.abs(fa[k] - fb[k]))) for k in fa)


def renormalize_magnetization(M: np.ndarray, eps_renorm: float = 1e-8) -> np.ndarray:
    """Nodewise projection ``M / |M|`` onto the unit sphere."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != 3:
        raise StructuralError(f"magnetization needs 3 components, got shape {M.shape}")
    norm = np.sqrt(np.add.reduce(M * M, axis=0))
    low = norm < eps_renorm
    if low.any() or not np.isfinite(norm).all():
        idx = np.argwhere(low | ~np.isfinite(norm))[0]
        raise DegeneracyError(
            f"|M| = {norm[tuple(idx)]:.3e} < {eps_renorm:g} at node {tuple(int(i) for i in idx)}")
    return M / norm


# -- snapshot files ---------------------------------------------------------


def write_snapshot(path, grid: Grid, state: StateSnapshot) -> Path:
    """Write every field as a 64-byte header followed by little-endian float64 data."""
    path = Path(path)
    with open(path, "wb") as fh:
        for tag, arr in state.arrays().items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            head = HEADER.pack(MAGIC, grid.nx, grid.ny, grid.hx, grid.hy, float(state.t),
                               tag.encode().ljust(8, b"\x00"), _TAGS[tag])
            fh.write(head)
            fh.write(arr.tobytes(order="C"))
    return path


def _block_shape(tag, nx, ny):
    return {"u": (nx + 1, ny), "w": (nx, ny + 1), "p": (nx, ny),
            "F": (2, 2, nx, ny), "M": (3, nx, ny)}[tag]


def read_snapshot(path) -> tuple[Grid, StateSnapshot]:
    data = Path(path).read_bytes()
    pos = 0
    fields = {}
    grid = None
    t = 0.0
    while pos < len(data):
        if len(data) - pos < HEADER.size:
            raise StructuralError(f"{path}: truncated header at byte {pos}")
        magic, nx, ny, hx, hy, t, tag, ncomp = HEADER.unpack_from(data, pos)
        if magic != MAGIC:
            raise StructuralError(f"{path}: bad magic {magic!r} at byte {pos}")
        tag = tag.rstrip(b"\x00").decode()
        if tag not in _TAGS or _TAGS[tag] != ncomp:
            raise StructuralError(f"{path}: unknown field block {tag!r}/{ncomp}")
        if grid is None:
            grid = Grid(nx, ny, hx, hy)
        elif (nx, ny, hx, hy) != (grid.nx, grid.ny, grid.hx, grid.hy):
            raise StructuralError(f"{path}: blocks disagree on the grid")
        pos += HEADER.size
        shape = _block_shape(tag, nx, ny)
        nbytes = 8 * int(np.prod(shape))
        if len(data) - pos < nbytes:
            raise StructuralError(f"{path}: truncated block {tag!r}")
        fields[tag] = np.frombuffer(data, dtype="<f8", count=nbytes // 8,
                                    offset=pos).reshape(shape).astype(float)
        pos += nbytes
    missing = set(_TAGS) - set(fields)
    if grid is None or missing:
        raise StructuralError(f"{path}: missing blocks {sorted(missing)}")
    state = StateSnapshot(t, FaceVector(fields["u"], fields["w"]), fields["p"], fields["F"],
                          fields["M"])
    return grid, state
