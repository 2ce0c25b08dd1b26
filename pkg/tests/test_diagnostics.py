import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import erf

from wgflab.density import ClosedFormDensity
from wgflab.diagnostics import (
    energy_trace,
    jump_report,
    kl_divergence,
    measure_singularity_exponent,
    pinsker_certificate,
    probe_junction_order,
    series_junction_order,
    tv_lower_bound,
)
from wgflab.errors import FitUnstable
from wgflab.flow import FlowState, fe_step, run_flow
from wgflab.potentials import PiecewisePotential
from wgflab.scenarios import example1, example2, gaussian_potential, synthetic_scenario

D0 = math.sqrt(2 * math.pi) * erf(1 / math.sqrt(2)) + 2 / math.sqrt(math.e)
CERTIFICATE = 4 * math.pi * erf(1 / math.sqrt(2)) ** 2 * (1 / math.sqrt(2 * math.pi) - 1 / D0) ** 2


class PlantedPowerLaw:
    """``p(y) = C |y - y0|^(-alpha) exp(slope (y - y0))`` near ``y0``."""

    def __init__(self, alpha, y0=1.3, slope=0.3):
        self.alpha, self.y0, self.slope = alpha, y0, slope

    def logpdf(self, y):
        t = np.asarray(y, float) - self.y0
        return math.log(0.7) - self.alpha * np.log(np.abs(t)) + self.slope * t


def gaussian(sigma):
    return ClosedFormDensity(PiecewisePotential.polynomial([0.0, 0.0, 0.5 / sigma**2]).normalized())


@given(st.floats(0.05, 0.95), st.sampled_from([-1, 1]))
def test_planted_exponent_is_recovered(alpha, side):
    fit = measure_singularity_exponent(PlantedPowerLaw(alpha), 1.3, side)
    assert fit.alpha == pytest.approx(alpha, abs=0.01)


def test_noisy_density_fit_is_rejected():
    class Noisy(PlantedPowerLaw):
        def logpdf(self, y):
            t = np.asarray(y, float) - self.y0
            return super().logpdf(y) + np.sin(1e5 * t) * 2.0

    with pytest.raises(FitUnstable):
        measure_singularity_exponent(Noisy(0.5), 1.3)


def test_example1_exponent_is_one_half():
    sc = example1()
    d = fe_step(FlowState.initial(sc.initial), sc.energy, 0.1).current
    rep = jump_report(d, 2 / 3 * math.sqrt(10 / 3))
    assert rep.classification == "blow_up" and rep.exponent_side == "left"
    assert rep.left_limit == math.inf and math.isfinite(rep.right_limit)
    assert rep.exponent_estimate == pytest.approx(0.5, abs=0.01)


@pytest.mark.parametrize("s1,s2", [(1.0, 1.0), (1.0, 2.0), (0.5, 1.5)])
def test_kl_between_gaussians(s1, s2):
    want = math.log(s2 / s1) + s1**2 / (2 * s2**2) - 0.5
    assert kl_divergence(gaussian(s1), gaussian(s2)) == pytest.approx(want, abs=1e-12)


def test_kl_of_kinked_start_matches_quadrature():
    sc = example2()
    p, q = sc.rho0, sc.target_density
    f = lambda x: float(p.pdf(x)) * (float(p.logpdf(x)) - float(q.logpdf(x)))
    ref = sum(integrate.quad(f, a, b, epsabs=1e-14, limit=200)[0] for a, b in [(-40, -1), (-1, 1), (1, 40)])
    assert kl_divergence(p, q) == pytest.approx(ref, abs=1e-10)
    assert kl_divergence(p, q) == pytest.approx(0.2606996, abs=1e-6)


def test_kl_is_infinite_when_target_vanishes():
    sc = example2()
    gapped = run_flow(sc.initial, sc.energy, [0.3, 0.3], force=True)[-1].current
    # gapped density as the target of the Gaussian
    assert kl_divergence(sc.target_density, gapped) == math.inf


def test_pinsker_certificate_closed_form():
    sc = example2()
    assert tv_lower_bound(sc.rho0, sc.target_density, (-1, 1)) == pytest.approx(
        math.sqrt(CERTIFICATE / 2), rel=1e-13
    )
    assert pinsker_certificate(sc.rho0, sc.target_density, (-1, 1)) == pytest.approx(CERTIFICATE, rel=1e-12)
    assert CERTIFICATE == pytest.approx(0.0190160690578, abs=1e-12)


def test_certificate_bounds_energy_along_the_flow():
    sc = example2()
    states = run_flow(sc.initial, sc.energy, [0.3] * 6, force=True)
    for (k, kl), S in zip(energy_trace(states, sc.energy), states):
        cert = pinsker_certificate(S.current, sc.target_density, (-1, 1))
        assert cert == pytest.approx(CERTIFICATE, rel=1e-10)
        assert cert <= kl


def test_junction_probe_on_c4_potential():
    sc = synthetic_scenario(2)
    states = run_flow(sc.initial, sc.energy, [0.2, 0.2])
    y = 1.0
    expected = [None, 2, 0]
    for S, want in zip(states, expected):
        if S.last_map is not None:
            y = float(S.last_map(y))
        assert probe_junction_order(S.current, y).order == want
        assert series_junction_order(S.current, y) == (4 if want is None else want)
