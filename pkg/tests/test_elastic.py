import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsim.elastic import (DENSITIES, GaussianSoftened, Quadratic, check_growth, get_density)
from mvsim.errors import ConfigurationError

matrices = st.lists(st.floats(-5, 5), min_size=4, max_size=4).map(
    lambda x: np.array(x).reshape(2, 2))


def test_quad_values():
    W = Quadratic()
    assert W.evaluate(np.zeros((2, 2))) == 0.0
    assert not W.derivative(np.zeros((2, 2))).any()
    assert W.evaluate(np.eye(2)) == 1.0


@pytest.mark.parametrize("name", sorted(DENSITIES))
def test_wprime_zero(name):
    assert not get_density(name).derivative(np.zeros((2, 2, 3))).any()


@settings(max_examples=40, deadline=None)
@given(A=matrices, D=matrices)
def test_quad_hessian_is_identity(A, D):
    assert np.array_equal(Quadratic().hessian_apply(A, D), D)


@pytest.mark.parametrize("name", sorted(DENSITIES))
def test_derivatives_match_finite_differences(name):
    W = get_density(name)
    rng = np.random.default_rng(1)
    A = rng.standard_normal((2, 2, 20))
    D = rng.standard_normal((2, 2, 20))
    errs_g, errs_h = [], []
    for eps in (1e-3, 5e-4):
        fd = (W.evaluate(A + eps * D) - W.evaluate(A - eps * D)) / (2 * eps)
        errs_g.append(np.max(np.abs(fd - np.sum(W.derivative(A) * D, axis=(0, 1)))))
        fdh = (W.derivative(A + eps * D) - W.derivative(A)) / eps
        errs_h.append(np.max(np.abs(fdh - W.hessian_apply(A, D))))
    # central difference: order two; one-sided Hessian difference: order one
    if errs_g[0] > 1e-9:
        assert np.log2(errs_g[0] / errs_g[1]) == pytest.approx(2.0, abs=0.2)
    if errs_h[0] > 1e-9:
        assert np.log2(errs_h[0] / errs_h[1]) == pytest.approx(1.0, abs=0.2)
    assert errs_h[1] < 1e-2 * np.max(np.abs(W.hessian_apply(A, D)))


@settings(max_examples=40, deadline=None)
@given(A=matrices)
def test_quad_sandwich(A):
    W = Quadratic()
    r2 = np.sum(A * A)
    w = W.evaluate(A)
    assert W.C1 * (r2 - 1) <= w <= W.C1 * (r2 + 1)


@pytest.mark.parametrize("seed", [0, 1, 17])
def test_check_growth_quad(seed):
    rep = check_growth(Quadratic(), seed=seed)
    assert rep.passed, rep.summary()
    assert abs(rep.ratios["lipschitz"] - 1.0) <= 1e-12


def test_check_growth_gauss_passes():
    assert check_growth(GaussianSoftened()).passed


def test_check_growth_quartic_fails_with_witness():
    W = get_density("quartic")
    rep = check_growth(W)
    assert not rep.passed
    assert {"w1_upper", "w3_hessian"} <= set(rep.failures)
    A = np.array(rep.witnesses["w1_upper"])
    assert W.evaluate(A) > W.C1 * (np.sum(A * A) + 1)


def test_check_growth_needs_samples():
    with pytest.raises(ConfigurationError):
        check_growth(Quadratic(), n_samples=10)


def test_unknown_density():
    with pytest.raises(ConfigurationError, match="known"):
        get_density("neo-hookean")
    with pytest.raises(ConfigurationError):
        GaussianSoftened(beta=1.5)
