import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import erf

from wgflab.errors import NonIntegrableTail
from wgflab.potentials import PiecewisePotential, PotentialPiece, grad_potential, normalize, tail_cutoff
from wgflab.scenarios import gaussian_potential, kinked_potential, quartic_target, synthetic_potential


def brute_log_partition(f):
    val, _ = integrate.quad(lambda x: math.exp(-f(x)), -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return math.log(val)


def test_gaussian_normalizer():
    P = PiecewisePotential.polynomial([0.0, 0.0, 0.5])
    assert normalize(P) == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-13)


def test_quartic_normalizer_matches_quadrature():
    P = PiecewisePotential.polynomial([0.0, 0.0, 0.5, 0.0, 0.25])
    ref = brute_log_partition(lambda x: x * x / 2 + x**4 / 4)
    assert normalize(P) == pytest.approx(ref, abs=1e-12)
    assert normalize(P) == pytest.approx(0.6602, abs=1e-4)


def test_kinked_normalizer_matches_closed_form():
    raw = kinked_potential().with_log_normalizer(0.0)
    closed = math.sqrt(2 * math.pi) * erf(1 / math.sqrt(2)) + 2 / math.sqrt(math.e)
    assert math.exp(normalize(raw)) == pytest.approx(closed, rel=1e-13)
    brute = brute_log_partition(lambda x: x * x / 2 if abs(x) < 1 else abs(x) - 0.5)
    assert normalize(raw) == pytest.approx(brute, abs=1e-8)


def test_kinked_potential_is_c1_at_the_kinks():
    V = kinked_potential()
    assert V.junction_smoothness == (1, 1)
    for b in (-1.0, 1.0):
        assert float(V.grad(b, -1)) == pytest.approx(float(V.grad(b, +1)))
        assert float(V.hess(b, -1)) != pytest.approx(float(V.hess(b, +1)))


def test_hessian_bounds():
    assert kinked_potential().hessian_bounds() == pytest.approx((0.0, 1.0))
    lo, hi = quartic_target().hessian_bounds()
    assert lo == pytest.approx(1.0) and hi == math.inf
    lo, _ = synthetic_potential(2).hessian_bounds()
    assert lo == pytest.approx(-2.0)


@pytest.mark.parametrize("V", [gaussian_potential(), quartic_target(), kinked_potential(), synthetic_potential(2)])
@given(x=st.floats(-4.0, 4.0))
def test_gradient_matches_finite_differences(V, x):
    eps = 1e-6
    if np.any(np.abs(x - V.breakpoints) < 2 * eps):
        return
    fd = (float(V(x + eps)) - float(V(x - eps))) / (2 * eps)
    assert float(grad_potential(V, x)) == pytest.approx(fd, abs=1e-5 * max(1.0, abs(fd)))


def test_synthetic_junction_has_requested_order():
    for m in (2, 3, 5):
        assert synthetic_potential(m).junction_smoothness == (m + 2,)


def test_flat_tail_is_rejected():
    P = PiecewisePotential([PotentialPiece(-math.inf, 0.0, (0.0, 0.0, 1.0)), PotentialPiece(0.0, math.inf, (0.0,))])
    with pytest.raises(NonIntegrableTail):
        normalize(P)


def test_tail_cutoff_bounds_density():
    V = gaussian_potential()
    lo, hi = tail_cutoff(V, 1e-16)
    assert lo == pytest.approx(-hi)
    assert math.exp(-float(V(hi))) <= 1.01e-16
    assert math.exp(-float(V(hi - 0.1))) > 1e-16
