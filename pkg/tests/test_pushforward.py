import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wgflab.flow import kl_velocity
from wgflab.piecewise import PiecewisePolynomial
from wgflab.pushforward import (
    CallableVelocity,
    PolynomialVelocity,
    branch_decompose,
    build_map,
    injectivity_condition,
    preimages,
)
from wgflab.scenarios import example1, example2


def cubic_map(h):
    # T(x) = x - h x^3 built from the example-1 velocity, not typed in by hand
    sc = example1()
    return build_map(PolynomialVelocity(kl_velocity(sc.energy, sc.initial)), h)


def brute_count(h, ys, x_max=60.0, n=400001):
    x = np.linspace(-x_max, x_max, n)
    t = x - h * x**3
    # each grid segment [t_i, t_i+1] is crossed by the y values strictly inside it
    lo = np.sort(np.minimum(t[1:], t[:-1]))
    hi = np.sort(np.maximum(t[1:], t[:-1]))
    return np.searchsorted(lo, ys, side="left") - np.searchsorted(hi, ys, side="right")


def test_example1_velocity_is_cubic():
    T = cubic_map(0.1)
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(T(x), x - 0.1 * x**3, atol=1e-14)


@pytest.mark.parametrize("h", [0.01, 0.1, 0.5])
def test_branches_and_critical_values(h):
    B = branch_decompose(cubic_map(h))
    xc = 1 / math.sqrt(3 * h)
    ystar = 2 / 3 * math.sqrt(1 / (3 * h))
    assert B.critical_points == pytest.approx([-xc, xc])
    assert B.critical_values == pytest.approx([-ystar, ystar])
    assert [b.orientation for b in B.branches] == [-1, 1, -1]
    assert B.to_dict()["branches"][1]["range_hi"] == pytest.approx(ystar)


@pytest.mark.parametrize("h", [0.05, 0.1, 0.3])
def test_branch_count_matches_brute_force(h, rng):
    B = branch_decompose(cubic_map(h))
    ystar = 2 / 3 * math.sqrt(1 / (3 * h))
    ys = rng.uniform(-3 * ystar, 3 * ystar, 10_000)
    # stay away from the critical values where the grid count is ambiguous
    ys = ys[np.abs(np.abs(ys) - ystar) > 1e-3]
    counts = B.count(ys)
    assert set(np.unique(counts)) <= {1, 3}
    np.testing.assert_array_equal(counts, brute_count(h, ys))


def test_three_preimages_at_zero():
    pre = preimages(branch_decompose(cubic_map(0.1)), 0.0)
    xs = [p[0] for p in pre]
    assert xs == pytest.approx([-math.sqrt(10), 0.0, math.sqrt(10)], abs=1e-12)
    assert [p[2] for p in pre] == pytest.approx([0.5, 1.0, 0.5])


def test_critical_value_reports_infinite_weight():
    h = 0.1
    ystar = 2 / 3 * math.sqrt(1 / (3 * h))
    B = branch_decompose(cubic_map(h))
    pre = preimages(B, B.critical_values[1])
    assert any(w == math.inf for _, _, w in pre)
    assert B.critical_values[1] == pytest.approx(ystar)


@given(st.floats(-6.0, 6.0), st.sampled_from([0.02, 0.1, 0.4]))
def test_jacobian_identity(y, h):
    B = branch_decompose(cubic_map(h))
    for x, _, w in preimages(B, y):
        if not math.isfinite(w):
            continue
        assert x - h * x**3 == pytest.approx(y, abs=1e-10 * max(1.0, abs(y)))
        assert w * abs(1 - 3 * h * x * x) == pytest.approx(1.0, abs=1e-10)


def test_generic_map_inversion_matches_polynomial():
    h = 0.1
    w = CallableVelocity(lambda x: x**3)
    B = branch_decompose(build_map(w, h), window=(-20.0, 20.0))
    ref = branch_decompose(cubic_map(h))
    assert B.critical_points == pytest.approx(ref.critical_points, abs=1e-6)
    for y in (-2.0, 0.3, 1.0, 5.0):
        got = [p[0] for p in preimages(B, y)]
        want = [p[0] for p in preimages(ref, y)]
        assert got == pytest.approx(want, abs=1e-8)


def test_example2_map_is_piecewise_affine_and_injective():
    sc = example2()
    T = build_map(PolynomialVelocity(kl_velocity(sc.energy, sc.initial)), 0.3)
    assert T.is_affine()
    x = np.array([-3.0, -1.0, 0.5, 1.0, 2.0])
    want = np.where(x >= 1, 0.7 * x + 0.3, np.where(x <= -1, 0.7 * x - 0.3, x))
    np.testing.assert_allclose(T(x), want)
    B = branch_decompose(T)
    assert len(B.branches) == 1 and B.branches[0].orientation == 1


@pytest.mark.parametrize("h", [1e-3, 1e-2, 0.1, 0.5])
def test_injectivity_fails_for_example1(h):
    sc = example1()
    M, M0 = sc.hessian_bounds()
    rep = injectivity_condition(PolynomialVelocity(kl_velocity(sc.energy, sc.initial)), h, M, M0)
    assert not rep.holds and not rep.grid_positive
    assert rep.witness is not None and 1 - 3 * h * rep.witness**2 <= 0
    assert rep.consistent


@pytest.mark.parametrize("h", [0.05, 0.5, 0.9, 0.999])
def test_injectivity_holds_for_example2(h):
    sc = example2()
    M, M0 = sc.hessian_bounds()
    rep = injectivity_condition(PolynomialVelocity(kl_velocity(sc.energy, sc.initial)), h, M, M0)
    assert rep.bound == pytest.approx(1.0)
    assert rep.holds and rep.grid_positive and rep.witness is None


def test_piecewise_map_rejects_bad_step():
    with pytest.raises(ValueError):
        build_map(PolynomialVelocity(PiecewisePolynomial.polynomial([0.0, 1.0])), 0.0)
