"""Elastic energy densities ``W(F)`` and an admissibility checker.

A density must be convex, ``C^2``, have ``W'(0) = 0`` and satisfy

* ``C1 (|A|^2 - 1) <= W(A) <= C1 (|A|^2 + 1)``
* ``|W'(A1) - W'(A2)| <= C2 |A1 - A2|``
* ``|W''(A)| <= C3``

with Frobenius norms.  :func:`check_growth` tests those by sampling.  All
routines act on stacks of matrices: ``A`` has shape ``(2, 2, ...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mvsim.errors import ConfigurationError


def _frob_sq(A):
    return np.add.reduce((A * A).reshape((4,) + A.shape[2:]), axis=0)


def _contract(A, D):
    return np.add.reduce((A * D).reshape((4,) + A.shape[2:]), axis=0)


class ElasticDensity:
    """Interface for a density; subclasses override the three evaluations."""

    name = "abstract"
    C1 = 0.0
    C2 = 0.0
    C3 = 0.0

    def evaluate(self, A: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, A: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_apply(self, A: np.ndarray, D: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r} C=({self.C1}, {self.C2}, {self.C3})>"


class Quadratic(ElasticDensity):
    """``W(A) = |A|^2 / 2``."""

    name = "quad"
    C1 = 0.5
    C2 = 1.0
    C3 = 1.0

    def evaluate(self, A):
        return 0.5 * _frob_sq(np.asarray(A, dtype=float))

    def derivative(self, A):
        return np.array(A, dtype=float)

    def hessian_apply(self, A, D):
        return np.array(D, dtype=float)


class GaussianSoftened(ElasticDensity):
    """``W(A) = |A|^2/2 + beta (exp(-|A|^2/2) - 1)``, convex for ``beta < 1``.

    The perturbation is bounded, so the quadratic sandwich keeps ``C1 = 1/2``;
    the Hessian norm is at most ``1 + 2 beta / e``.
    """

    name = "gauss"
    C1 = 0.5

    def __init__(self, beta: float = 0.25):
        if not 0.0 <= beta < 1.0:
            raise ConfigurationError(f"beta must lie in [0, 1), got {beta}")
        self.beta = beta
        self.C2 = self.C3 = 1.0 + 2.0 * beta / np.e

    def evaluate(self, A):
        r2 = _frob_sq(np.asarray(A, dtype=float))
        return 0.5 * r2 + self.beta * np.expm1(-0.5 * r2)

    def derivative(self, A):
        A = np.asarray(A, dtype=float)
        return (1.0 - self.beta * np.exp(-0.5 * _frob_sq(A))) * A

    def hessian_apply(self, A, D):
        A = np.asarray(A, dtype=float)
        D = np.asarray(D, dtype=float)
        e = self.beta * np.exp(-0.5 * _frob_sq(A))
        return (1.0 - e) * D + e * _contract(A, D) * A


class Quartic(ElasticDensity):
    """``W(A) = |A|^4 / 4``: deliberately inadmissible, kept for the checker."""

    name = "quartic"
    C1 = 0.5
    C2 = 1.0
    C3 = 1.0

    def evaluate(self, A):
        r2 = _frob_sq(np.asarray(A, dtype=float))
        return 0.25 * r2 * r2

    def derivative(self, A):
        A = np.asarray(A, dtype=float)
        return _frob_sq(A) * A

    def hessian_apply(self, A, D):
        A = np.asarray(A, dtype=float)
        D = np.asarray(D, dtype=float)
        return _frob_sq(A) * D + 2.0 * _contract(A, D) * A


DENSITIES = {
    "quad": Quadratic,
    "gauss": GaussianSoftened,
    "quartic": Quartic,
}


def get_density(name: str) -> ElasticDensity:
    try:
        return DENSITIES[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown elastic density {name!r}; known: {sorted(DENSITIES)}") from None


def evaluate(W: ElasticDensity, A):
    return W.evaluate(A)


def derivative(W: ElasticDensity, A):
    return W.derivative(A)


def hessian_apply(W: ElasticDensity, A, D):
    return W.hessian_apply(A, D)


@dataclass
class GrowthReport:
    density: str
    n_samples: int
    ratios: dict[str, float]
    passed: bool
    failures: list[str] = field(default_factory=list)
    witnesses: dict[str, list] = field(default_factory=dict)

    def summary(self) -> str:
        parts = " ".join(f"{k}={v:.6g}" for k, v in self.ratios.items())
        status = "PASS" if self.passed else "FAIL(" + ",".join(self.failures) + ")"
        return f"checkgrowth density={self.density} samples={self.n_samples} {parts} {status}"


def _sample_ball(rng, n, r_max):
    A = rng.standard_normal((2, 2, n))
    A /= np.sqrt(_frob_sq(A))
    # uniform in the 4-ball
    return A * (r_max * rng.random(n) ** 0.25)


def check_growth(W: ElasticDensity, n_samples: int = 1000, seed: int = 0,
                 r_max: float = 10.0, slack: float = 0.01) -> GrowthReport:
    """Sample-based test of the growth conditions, convexity and ``W'(0) = 0``.

    Ratios are reported so that each condition holds iff its ratio is at most
    one (``lipschitz`` and ``hessian`` are the raw sampled quotients,
    compared with ``C2`` and ``C3``).  A failing condition records the first
    witnessing matrix instead of raising.
    """
    if n_samples < 1000:
        raise ConfigurationError(f"check_growth needs >= 1000 samples, got {n_samples}")
    rng = np.random.default_rng(seed)
    A = _sample_ball(rng, n_samples, r_max)
    B = _sample_ball(rng, n_samples, r_max)
    # local pairs probe the Lipschitz constant at small separations too
    B[..., : n_samples // 2] = A[..., : n_samples // 2] + 1e-3 * rng.standard_normal(
        (2, 2, n_samples // 2))
    D = rng.standard_normal((2, 2, n_samples))
    D /= np.sqrt(_frob_sq(D))

    r2 = _frob_sq(A)
    WA = W.evaluate(A)
    WB = W.evaluate(B)
    ratios: dict[str, float] = {}
    witness: dict[str, list] = {}
    failures: list[str] = []

    def record(name, values, limit):
        k = int(np.argmax(values))
        ratios[name] = float(values[k])
        if not np.isfinite(values[k]) or values[k] > limit:
            failures.append(name)
            witness[name] = A[..., k].tolist()

    big = r2 > 1.0
    lower = np.where(big, W.C1 * (r2 - 1.0) / np.where(WA > 0, WA, np.inf), 0.0)
    lower = np.where(big & (WA <= 0), np.inf, lower)
    record("w1_lower", lower, 1.0 + slack)
    record("w1_upper", WA / (W.C1 * (r2 + 1.0)), 1.0 + slack)

    dA = A - B
    lip = np.sqrt(_frob_sq(W.derivative(A) - W.derivative(B)) / _frob_sq(dA))
    record("w2_lipschitz", lip / W.C2, 1.0 + slack)
    ratios["lipschitz"] = float(np.max(lip))

    hess = np.sqrt(_frob_sq(W.hessian_apply(A, D)))
    record("w3_hessian", hess / W.C3, 1.0 + slack)
    ratios["hessian"] = float(np.max(hess))

    mid = W.evaluate(0.5 * (A + B))
    gap = (mid - 0.5 * (WA + WB)) / (1.0 + np.abs(WA) + np.abs(WB))
    record("convexity", gap, 1e-12)

    w0 = float(np.sqrt(_frob_sq(W.derivative(np.zeros((2, 2, 1))))[0]))
    ratios["wprime0"] = w0
    if w0 > 1e-12:
        failures.append("wprime0")
        witness["wprime0"] = np.zeros((2, 2)).tolist()

    return GrowthReport(W.name, n_samples, ratios, not failures, failures, witness)
