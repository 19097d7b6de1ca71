"""Empirical check of 2D embedding and interpolation inequalities.

Each inequality is written ``LHS(f) <= c * RHS(f)`` with ``RHS`` the
constant-free expression.  Random tensor trig polynomials of degree at most
``K`` are sampled from a boundary class, evaluated with exact derivatives at
the cell centres of a grid, and the sup of ``LHS / RHS`` is reported.  A
finite sup proves nothing; it is a lower estimate of the constant.

Boundary classes on ``[0, Lx] x [0, Ly]``:

* ``dirichlet0``: ``sin(k pi x / Lx) sin(l pi y / Ly)``, ``k, l >= 1``
* ``neumann0``: ``cos(k pi x / Lx) cos(l pi y / Ly)``, ``(k, l) != (0, 0)``
* ``free``: products of ``{1, cos, sin}`` in each direction, constants included

Norms use midpoint quadrature (:mod:`mvsim.state` conventions), which is exact
for the polynomial degrees involved; only the sup norm carries an ``O(h^2)``
sampling error.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from mvsim.errors import ConfigurationError, CounterexampleError
from mvsim.grid import Grid

BOUNDARY_CLASSES = ("dirichlet0", "neumann0", "free")
STABILITY_TOL = 0.05
BATCH = 50

# derivative orders needed by any inequality
_ORDERS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]


@dataclass(frozen=True)
class TestFunctionFamily:
    """Random trig polynomials of a boundary class.

    Coefficient of mode ``(k, l)`` is normal with variance
    ``decay_scale / (1 + k^2 + l^2)^decay``.  Each sample also draws its own
    degree in ``1..K`` so that low-mode functions are well represented.
    """

    __test__ = False

    boundary: str = "dirichlet0"
    K: int = 8
    decay: float = 1.0
    decay_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.boundary not in BOUNDARY_CLASSES:
            raise ConfigurationError(
                f"unknown boundary class {self.boundary!r}; known: {BOUNDARY_CLASSES}")
        if self.K < 1:
            raise ConfigurationError(f"degree bound K must be >= 1, got {self.K}")

    def modes(self):
        """Per-direction basis as ``(kind, k)`` pairs, kind 0 = cos, 1 = sin."""
        if self.boundary == "dirichlet0":
            return [(1, k) for k in range(1, self.K + 1)]
        if self.boundary == "neumann0":
            return [(0, k) for k in range(0, self.K + 1)]
        return [(0, 0)] + [(kind, k) for k in range(1, self.K + 1) for kind in (0, 1)]

    def sample_seed(self, index: int) -> tuple[int, int]:
        return (self.seed, index)

    def coefficients(self, index: int) -> np.ndarray:
        """Coefficient matrix of sample ``index`` (deterministic per ``(seed, index)``)."""
        rng = np.random.default_rng(self.sample_seed(index))
        modes = self.modes()
        k = np.array([m[1] for m in modes], dtype=float)
        degree = int(rng.integers(1, self.K + 1))
        var = self.decay_scale / (1.0 + k[:, None] ** 2 + k[None, :] ** 2) ** self.decay
        A = rng.standard_normal((len(modes), len(modes))) * np.sqrt(var)
        active = k <= degree
        A *= active[:, None] & active[None, :]
        if self.boundary == "neumann0":
            A[0, 0] = 0.0
            if not A.any():
                A[0, 1] = 1.0
        return A


def _basis(modes, n: int, L: float, order: int) -> np.ndarray:
    """Matrix ``B[mode, node]`` of the ``order``-th derivative at cell centres."""
    x = (np.arange(n) + 0.5) * (L / n)
    B = np.empty((len(modes), n))
    for r, (kind, k) in enumerate(modes):
        w = k * np.pi / L
        # d^m cos = w^m cos(. + m pi/2), d^m sin = w^m sin(. + m pi/2)
        phase = w * x + order * np.pi / 2
        B[r] = (w ** order) * (np.sin(phase) if kind else np.cos(phase))
        if k == 0:
            B[r] = 1.0 if order == 0 else 0.0
    return B


class _Evaluator:
    """Batched evaluation of a family's derivatives on a grid."""

    def __init__(self, family: TestFunctionFamily, grid: Grid):
        self.family = family
        self.grid = grid
        modes = family.modes()
        self.Bx = [_basis(modes, grid.nx, grid.Lx, m) for m in range(4)]
        self.By = [_basis(modes, grid.ny, grid.Ly, m) for m in range(4)]

    def derivatives(self, A: np.ndarray) -> dict:
        """``A`` has shape ``(S, nmodes, nmodes)``; returns ``{(p, q): (S, nx, ny)}``."""
        out = {}
        for p, q in _ORDERS:
            tmp = np.einsum("sab,bj->saj", A, self.By[q], optimize=True)
            out[(p, q)] = np.einsum("ai,saj->sij", self.Bx[p], tmp, optimize=True)
        return out


# -- norms on batches ------------------------------------------------------------


def _l2sq(area, *fields):
    return sum(np.add.reduce((f * f).reshape(f.shape[0], -1), axis=1) for f in fields) * area


def _lq(area, mag, q):
    return (np.add.reduce((mag ** q).reshape(mag.shape[0], -1), axis=1) * area) ** (1.0 / q)


def _sup(mag):
    return np.max(mag.reshape(mag.shape[0], -1), axis=1)


class _Norms:
    """Lazy per-batch norm table from a derivative dictionary."""

    def __init__(self, d: dict, area: float):
        self.d = d
        self.a = area
        self._cache = {}

    def __getattr__(self, name):
        if name.startswith("_") or name in ("d", "a"):
            raise AttributeError(name)
        if name not in self._cache:
            self._cache[name] = getattr(type(self), "_" + name)(self)
        return self._cache[name]

    def _f(self):
        return self.d[(0, 0)]

    def _fx(self):
        return self.d[(1, 0)]

    def _fy(self):
        return self.d[(0, 1)]

    def _lap(self):
        return self.d[(2, 0)] + self.d[(0, 2)]

    def _l2(self):
        return np.sqrt(_l2sq(self.a, self.f))

    def _grad_l2(self):
        return np.sqrt(_l2sq(self.a, self.fx, self.fy))

    def _hess_sq(self):
        d = self.d
        return _l2sq(self.a, d[(2, 0)], d[(1, 1)], d[(1, 1)], d[(0, 2)])

    def _third_sq(self):
        d = self.d
        # Frobenius norm of the full symmetric third-derivative tensor
        return (_l2sq(self.a, d[(3, 0)], d[(0, 3)])
                + 3.0 * _l2sq(self.a, d[(2, 1)], d[(1, 2)]))

    def _lap_l2(self):
        return np.sqrt(_l2sq(self.a, self.lap))

    def _grad_lap_l2(self):
        d = self.d
        return np.sqrt(_l2sq(self.a, d[(3, 0)] + d[(1, 2)], d[(2, 1)] + d[(0, 3)]))

    def _grad_mag(self):
        return np.sqrt(self.fx ** 2 + self.fy ** 2)

    def _w12(self):
        return np.sqrt(self.l2 ** 2 + self.grad_l2 ** 2)

    def _w22(self):
        return np.sqrt(self.l2 ** 2 + self.grad_l2 ** 2 + self.hess_sq)


# -- the inequalities -----------------------------------------------------------


def _lad2d(n):
    return _lq(n.a, np.abs(n.f), 4), np.sqrt(n.l2 * n.grad_l2)


def _genlad2d(n):
    return _lq(n.a, np.abs(n.f), 4), n.l2 + np.sqrt(n.l2 * n.grad_l2)


def _longineq(n):
    lhs = np.sqrt(n.grad_l2 ** 2 + n.hess_sq + n.third_sq)
    return lhs, np.sqrt(n.grad_l2 ** 2 + n.grad_lap_l2 ** 2)


def _ladforlaplacian(n):
    rhs = np.sqrt(n.lap_l2) * (n.lap_l2 ** 2 + n.grad_lap_l2 ** 2) ** 0.25
    return _lq(n.a, np.abs(n.lap), 4), rhs


def _agmonvariant(n):
    rhs = np.sqrt(n.grad_l2) * (n.grad_l2 ** 2 + n.grad_lap_l2 ** 2) ** 0.25
    return _sup(n.grad_mag), rhs


def _w22est(n):
    return n.w22, n.lap_l2


def _ladmatrix(n):
    return _lq(n.a, n.grad_mag, 4), np.sqrt(n.grad_l2 * n.lap_l2)


def _l6interp(n):
    rhs = np.cbrt(n.grad_l2) * np.cbrt(n.grad_l2 ** 2 + n.lap_l2 ** 2)
    return _lq(n.a, n.grad_mag, 6), rhs


def _agmon2d(n):
    return _sup(np.abs(n.f)), np.sqrt(n.w12 * n.w22)


@dataclass(frozen=True)
class Inequality:
    name: str
    evaluate: object
    classes: tuple
    default: str


INEQUALITIES = {
    i.name: i for i in [
        Inequality("Lad2D", _lad2d, ("dirichlet0",), "dirichlet0"),
        Inequality("GenLad2D", _genlad2d, BOUNDARY_CLASSES, "free"),
        Inequality("LongIneq", _longineq, BOUNDARY_CLASSES, "neumann0"),
        Inequality("LadForLaplacian", _ladforlaplacian, BOUNDARY_CLASSES, "neumann0"),
        Inequality("AgmonVariant", _agmonvariant, BOUNDARY_CLASSES, "neumann0"),
        Inequality("W22Est", _w22est, ("dirichlet0",), "dirichlet0"),
        Inequality("LadMatrix", _ladmatrix, ("neumann0",), "neumann0"),
        Inequality("L6Interp", _l6interp, ("neumann0",), "neumann0"),
        Inequality("Agmon2D", _agmon2d, BOUNDARY_CLASSES, "free"),
    ]
}
NAMES = tuple(INEQUALITIES)


def get_inequality(name: str) -> Inequality:
    try:
        return INEQUALITIES[name]
    except KeyError:
        raise ConfigurationError(f"unknown inequality {name!r}; known: {list(NAMES)}") from None


def default_family(name: str, K: int = 8, seed: int = 0) -> TestFunctionFamily:
    return TestFunctionFamily(get_inequality(name).default, K=K, seed=seed)


def ratios_from_derivatives(name: str, d: dict, area: float) -> tuple:
    """``(lhs, rhs)`` arrays for a batch of derivative fields."""
    return get_inequality(name).evaluate(_Norms(d, area))


def field_ratio(name: str, grid: Grid, derivs: dict) -> float:
    """Ratio for a single function given as ``{(p, q): (nx, ny) array}``."""
    d = {key: np.asarray(derivs[key], dtype=float)[None] for key in _ORDERS}
    lhs, rhs = ratios_from_derivatives(name, d, grid.cell_area)
    return float(lhs[0] / rhs[0])


# -- reports ------------------------------------------------------------------


@dataclass
class InequalityReport:
    name: str
    boundary: str
    n_samples: int
    resolution: int
    worst_ratio: float
    argmax_index: int
    argmax_seed: tuple
    n_excluded: int = 0
    stable: bool | None = None
    drift: float | None = None

    def summary(self) -> str:
        flag = "-" if self.stable is None else ("stable" if self.stable else "UNSTABLE")
        return (f"{self.name:16s} {self.boundary:10s} n={self.resolution:4d} "
                f"samples={self.n_samples} sup_ratio={self.worst_ratio:.6f} "
                f"argmax={self.argmax_index} {flag}")


REPORT_COLUMNS = ("name", "boundary", "resolution", "n_samples", "worst_ratio",
                  "argmax_index", "argmax_seed", "n_excluded", "drift", "stable")


def _check_values(name, lhs, rhs, base, family):
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    zero_rhs = rhs <= 1e-13 * np.max(scale, initial=1.0)
    bad = zero_rhs & (lhs > 1e-13 * np.max(scale, initial=1.0))
    if bad.any():
        k = int(np.argmax(bad))
        raise CounterexampleError(
            f"{name}: right-hand side vanishes with LHS={lhs[k]:.3e} for sample "
            f"{base + k} (seed {family.sample_seed(base + k)})")
    return zero_rhs


def check_inequality(name: str, family: TestFunctionFamily | None = None, n_samples: int = 1000,
                     grid: Grid | int = 64) -> InequalityReport:
    """Sup of ``LHS / RHS`` over ``n_samples`` functions of ``family`` on ``grid``.

    ``grid`` may be an integer ``n`` for the unit square with ``n x n`` cells.
    Samples where both sides vanish are excluded and counted.

    Raises
    ------
    ConfigurationError
        The family's boundary class is outside the inequality's hypothesis.
    CounterexampleError
        A sample has ``RHS == 0 < LHS``.
    """
    ineq = get_inequality(name)
    if family is None:
        family = default_family(name)
    if family.boundary not in ineq.classes:
        raise ConfigurationError(
            f"{name} needs a family in {ineq.classes}, got {family.boundary!r}")
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be positive, got {n_samples}")
    if isinstance(grid, (int, np.integer)):
        grid = Grid.from_extent(int(grid), int(grid))
    ev = _Evaluator(family, grid)
    best, arg, excluded = -np.inf, -1, 0
    for base in range(0, n_samples, BATCH):
        idx = range(base, min(base + BATCH, n_samples))
        A = np.stack([family.coefficients(i) for i in idx])
        lhs, rhs = ratios_from_derivatives(name, ev.derivatives(A), grid.cell_area)
        zero = _check_values(name, lhs, rhs, base, family)
        excluded += int(zero.sum())
        r = np.where(zero, -np.inf, lhs / np.where(zero, 1.0, rhs))
        k = int(np.argmax(r))
        if r[k] > best:
            best, arg = float(r[k]), base + k
    if arg < 0:
        raise ConfigurationError(f"{name}: every sample was excluded")
    return InequalityReport(name, family.boundary, n_samples, grid.nx, best, arg,
                            family.sample_seed(arg), excluded)


def sweep(names, resolutions, family: TestFunctionFamily | None = None, n_samples: int = 1000,
          K: int = 8, seed: int = 0) -> list[InequalityReport]:
    """Run :func:`check_inequality` per (name, resolution) with shared samples.

    The same family (hence the same sample seeds) is used at every resolution;
    ``stable`` is set on all reports of a name when the relative change of the
    sup ratio between consecutive resolutions stays below 5%.
    ``family=None`` picks each inequality's default boundary class.
    """
    names = list(names)
    resolutions = list(resolutions)
    if not names:
        return []
    if len(resolutions) < 2:
        raise ConfigurationError(f"sweep needs at least two resolutions, got {resolutions}")
    reports = []
    for name in names:
        fam = family if family is not None else default_family(name, K=K, seed=seed)
        rows = [check_inequality(name, fam, n_samples, n) for n in resolutions]
        drift = max(abs(b.worst_ratio - a.worst_ratio) / abs(a.worst_ratio)
                    for a, b in zip(rows, rows[1:]))
        for r in rows:
            r.drift = drift
            r.stable = bool(drift < STABILITY_TOL)
        reports.extend(rows)
    return reports


def write_report_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            row = asdict(r)
            w.writerow([row["name"], row["boundary"], row["resolution"], row["n_samples"],
                        f"{row['worst_ratio']:.16e}", row["argmax_index"],
                        "-".join(str(s) for s in row["argmax_seed"]), row["n_excluded"],
                        "" if row["drift"] is None else f"{row['drift']:.16e}",
                        "" if row["stable"] is None else int(row["stable"])])


def single_mode_derivatives(grid: Grid, kx: int = 1, ky: int = 1, kind: str = "sin"):
    """Exact derivatives of ``sin(kx pi x) sin(ky pi y)`` (or the cosine product)."""
    fam_kind = 1 if kind == "sin" else 0
    bx = [_basis([(fam_kind, kx)], grid.nx, grid.Lx, m)[0] for m in range(4)]
    by = [_basis([(fam_kind, ky)], grid.ny, grid.Ly, m)[0] for m in range(4)]
    return {(p, q): np.outer(bx[p], by[q]) for p, q in _ORDERS}
