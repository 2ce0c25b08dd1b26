import csv
import io
import math

import numpy as np
import pytest

from wgflab.density import ClosedFormDensity
from wgflab.flow import FlowState, fe_step
from wgflab.particles import (
    ParticleEnsemble,
    empirical_cdf,
    ensemble_csv,
    histogram,
    histogram_csv,
    init_ensemble,
    ks_distance,
    particle_step,
)
from wgflab.scenarios import gaussian_potential


def test_initial_ensemble_is_chunk_independent(ex1):
    a = init_ensemble(ex1.rho0, 5000, seed=11)
    b = init_ensemble(ex1.rho0, 5000, seed=11, chunk=777)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert a.positions.flags.writeable is False


def test_zero_step_ks(ex1):
    n = 20000
    P = init_ensemble(ex1.rho0, n, seed=5)
    assert ks_distance(P, ex1.rho0) < 1.95 / math.sqrt(n)


def test_particle_step_moves_along_velocity(ex1):
    S1 = fe_step(FlowState.initial(ex1.initial), ex1.energy, 0.1)
    P = ParticleEnsemble(np.array([-1.0, 0.0, 0.5, 2.0]), seed=0)
    Q = particle_step(P, S1.last_map.velocity, 0.1)
    np.testing.assert_allclose(Q.positions, P.positions - 0.1 * P.positions**3)
    assert Q.steps_taken == 1
    with pytest.raises(ValueError):
        particle_step(P, S1.last_map.velocity, 1.0)


def test_breakpoint_particles_use_mean_velocity(ex2):
    S1 = fe_step(FlowState.initial(ex2.initial), ex2.energy, 0.5)
    # x = 1 is a breakpoint of the velocity
    Q = particle_step(ParticleEnsemble(np.array([1.0]), 0), S1.last_map.velocity, 0.5)
    w = S1.last_map.velocity
    mean = 0.5 * (float(w(1.0, -1)) + float(w(1.0, +1)))
    assert Q.positions[0] == pytest.approx(1.0 - 0.5 * mean)


def test_ks_of_exact_quantiles_is_half_over_n():
    d = ClosedFormDensity(gaussian_potential())
    n = 1000
    P = ParticleEnsemble(d.quantile((np.arange(n) + 0.5) / n), 0)
    assert ks_distance(P, d) == pytest.approx(0.5 / n, abs=1e-9)
    assert empirical_cdf(P, 0.0) == pytest.approx(0.5)


def test_csv_outputs_parse():
    P = ParticleEnsemble(np.array([0.1, -0.2, 0.3]), 0)
    rows = list(csv.reader(io.StringIO(ensemble_csv(P))))
    assert rows[0] == ["index", "position"] and float(rows[2][1]) == -0.2
    rows = list(csv.reader(io.StringIO(histogram_csv(P, bins=4, span=(-1, 1)))))
    assert rows[0] == ["bin_lo", "bin_hi", "count", "density_estimate"]
    assert sum(int(r[2]) for r in rows[1:]) == 3
    lo, hi, counts, dens = histogram(P, 4, (-1, 1))
    assert np.sum(dens * (hi - lo)) == pytest.approx(1.0)


def test_empty_ensemble_is_rejected():
    with pytest.raises(ValueError):
        ParticleEnsemble(np.array([]), 0)
