import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metakan import autograd as ag
from metakan.basis import (
    RbfSpec,
    SplineSpec,
    WaveletActivation,
    basis_vector,
    basis_vector_tensor,
    bspline_basis,
    bspline_tensor,
    mexican_hat,
    mexican_hat_tensor,
    rbf_tensor,
    rbf_vector,
    wavelet_activation,
)

from oracles import bspline_reference

HAT0 = -2.0 / (math.pi**0.25 * math.sqrt(3.0))


def test_spline_spec_knots():
    spec = SplineSpec(5, 3)
    assert spec.knots.size == 5 + 2 * 3 + 1
    np.testing.assert_allclose(np.diff(spec.knots), 0.4)
    assert spec.knots[3] == -1.0 and spec.knots[-4] == pytest.approx(1.0)
    assert spec.n_basis == 8 and spec.dim == 9


@pytest.mark.parametrize("kwargs", [dict(G=0), dict(k=-1), dict(domain=(1.0, -1.0))])
def test_spline_spec_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        SplineSpec(**kwargs)


def test_order_zero_indicator():
    np.testing.assert_array_equal(bspline_basis(SplineSpec(2, 0), -0.5), [1.0, 0.0])


def test_partition_of_unity_at_point():
    assert bspline_basis(SplineSpec(5, 3), 0.3).sum() == pytest.approx(1.0, abs=1e-12)


def test_matches_textbook_recursion_at_zero():
    np.testing.assert_allclose(bspline_basis(SplineSpec(5, 3), 0.0), bspline_reference(5, 3, 0.0),
                               rtol=0, atol=1e-12)


@pytest.mark.parametrize("G,k", [(5, 3), (20, 3), (3, 1), (4, 2), (7, 0)])
def test_matches_textbook_recursion_everywhere(G, k):
    spec = SplineSpec(G, k)
    for t in np.linspace(-1.6, 1.6, 41):
        np.testing.assert_allclose(bspline_basis(spec, t), bspline_reference(G, k, t), atol=1e-12)


def test_outside_domain_uses_extended_knots():
    spec = SplineSpec(5, 3)
    t = 1.1
    np.testing.assert_allclose(bspline_basis(spec, t), bspline_reference(5, 3, t), atol=1e-12)
    assert bspline_basis(spec, 5.0).sum() == 0.0


def test_basis_vector_silu_channel():
    spec = SplineSpec(5, 3)
    assert basis_vector(spec, 0.0)[0] == 0.0
    assert basis_vector(spec, 1.0)[0] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-15)
    assert basis_vector(spec, 0.37)[1:].sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.0, 1.0, exclude_max=True), st.sampled_from([(5, 3), (20, 3), (3, 1), (6, 2)]))
def test_spline_invariants(t, gk):
    G, k = gk
    B = bspline_basis(SplineSpec(G, k), t)
    assert abs(B.sum() - 1.0) <= 1e-10
    assert np.all(B >= 0)
    assert np.count_nonzero(B) <= k + 1


def test_rbf_values():
    spec = RbfSpec(8)
    v = rbf_vector(spec, spec.centers[3])
    assert v[3] == 1.0
    shifted = rbf_vector(spec, spec.centers[2] + spec.h)
    assert shifted[2] == pytest.approx(math.exp(-0.5), abs=1e-15)
    grid = rbf_vector(spec, np.linspace(-1, 1, 50))
    assert np.all((grid > 0) & (grid <= 1))


def test_rbf_spec_centers():
    spec = RbfSpec(5, h=0.3)
    assert np.all(np.diff(spec.centers) > 0) and spec.dim == 5 and spec.h == 0.3
    with pytest.raises(ValueError):
        RbfSpec(4, h=-1.0)


def test_mexican_hat_values():
    assert mexican_hat(0.0, 1.0) == pytest.approx(HAT0, abs=1e-15)
    assert mexican_hat(1.0, 1.0) == 0.0
    assert mexican_hat(2.5, 2.5) == pytest.approx(0.0, abs=1e-16)
    assert abs(mexican_hat(60.0, 1.0)) < 1e-300
    with pytest.raises(ValueError):
        mexican_hat(0.0, 0.0)


def test_wavelet_activation_values():
    assert wavelet_activation(WaveletActivation.from_sigma(0.0, 0.3, 1.0), 0.7) == 0.0
    assert wavelet_activation(WaveletActivation.from_sigma(1.0, 0.0, 1.0), 1.0) == pytest.approx(0.0, abs=1e-14)
    act = WaveletActivation.from_sigma(2.0, 0.5, 1.0)
    assert act.sigma == pytest.approx(1.0, abs=1e-15)
    assert wavelet_activation(act, 0.5) == pytest.approx(2 * HAT0, rel=1e-14)


def _input_gradcheck(fn, t):
    x = ag.Parameter(t)
    return ag.gradcheck(lambda: ag.tsum(fn(x)), [x], fd_step=1e-5, rel_tol=1e-5)


def _away_from_knots(spec, n, seed):
    t = np.random.default_rng(seed).uniform(-1, 1, n)
    dist = np.abs(t[:, None] - spec.knots[None, :]).min(axis=1)
    return t[dist >= 1e-3]


@pytest.mark.parametrize("G,k", [(5, 3), (20, 3), (4, 2)])
def test_bspline_input_derivative(G, k):
    spec = SplineSpec(G, k)
    t = _away_from_knots(spec, 40, G)
    w = np.random.default_rng(0).normal(size=spec.n_basis)
    assert _input_gradcheck(lambda x: ag.matmul(bspline_tensor(spec, x), w[:, None]), t).passed
    assert _input_gradcheck(
        lambda x: ag.matmul(basis_vector_tensor(spec, x), np.ones((spec.dim, 1))), t
    ).passed


def test_rbf_input_derivative():
    spec = RbfSpec(6)
    t = np.random.default_rng(1).uniform(-1, 1, 30)
    w = np.random.default_rng(2).normal(size=(6, 1))
    assert _input_gradcheck(lambda x: ag.matmul(rbf_tensor(spec, x), w), t).passed


def test_mexican_hat_tensor_derivatives():
    rng = np.random.default_rng(3)
    t = ag.Parameter(rng.uniform(-2, 2, 10))
    s = ag.Parameter(rng.uniform(0.3, 2, 10))
    np.testing.assert_allclose(mexican_hat_tensor(t, s).data, mexican_hat(t.data, s.data), rtol=1e-14)
    assert ag.gradcheck(lambda: ag.tsum(mexican_hat_tensor(t, s)), [t, s], 1e-5, 1e-5).passed
