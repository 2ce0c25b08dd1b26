"""Acceptance criteria 1-8, each at its stated tolerance.

Every test prints one ``CRITERION n: PASS/FAIL`` line (visible with ``-s`` or
in the ``-v`` log) before asserting.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate
from scipy.special import erf

from wgflab.density import ClosedFormDensity, eval_density
from wgflab.diagnostics import (
    jump_report,
    kl_divergence,
    measure_singularity_exponent,
    pinsker_certificate,
    probe_junction_order,
    state_density,
)
from wgflab.errors import FitUnstable
from wgflab.flow import (
    OUT_OF_DOMAIN,
    FlowState,
    KLEnergy,
    ex2_density,
    ex2_recurrence,
    fe_step,
    kl_velocity,
    run_flow,
)
from wgflab.particles import init_ensemble, ks_distance, particle_step
from wgflab.pushforward import PolynomialVelocity, branch_decompose, injectivity_condition, preimages
from wgflab.scenarios import example1, example2, gaussian_potential, kinked_potential, quartic_target, synthetic_scenario

D0_CLOSED = math.sqrt(2 * math.pi) * erf(1 / math.sqrt(2)) + 2 / math.sqrt(math.e)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def ystar(h):
    return 2 / 3 * math.sqrt(1 / (3 * h))


# -- 1 -------------------------------------------------------------------------


def test_criterion_1_example1_discontinuity(capsys):
    sc = example1()
    lines, ok = [], True
    for h in (1e-3, 1e-2, 1e-1):
        t0 = time.perf_counter()
        S1 = fe_step(FlowState.initial(sc.initial), sc.energy, h)
        d = S1.current
        ys = ystar(h)
        cell = 3.0 / math.sqrt(h) / 4000
        rep = jump_report(d, ys)
        mirror = jump_report(d, -ys)
        mass = d.integrate()
        gate = S1.regularity
        elapsed = time.perf_counter() - t0
        good = (
            rep.left_limit == math.inf
            and math.isfinite(rep.right_limit)
            and mirror.right_limit == math.inf
            and math.isfinite(mirror.left_limit)
            and abs(abs(gate.location) - ys) <= cell
            and abs(mass - 1.0) <= 1e-6
            and gate.status == OUT_OF_DOMAIN
            and elapsed < 10.0
        )
        ok &= good
        lines.append(f"h={h:g}: y*={ys:.6f} right={rep.right_limit:.3e} mass-1={mass - 1:.1e} {gate.status} {elapsed:.1f}s")
    report(capsys, 1, ok, "; ".join(lines))
    assert ok


# -- 2 -------------------------------------------------------------------------


def test_criterion_2_monte_carlo_equivalence(capsys):
    t0 = time.perf_counter()
    h, n = 0.01, 1_000_000
    sc = example1()
    d = fe_step(FlowState.initial(sc.initial), sc.energy, h).current
    # independent sampler and the map typed out directly
    x = np.random.default_rng(2024).standard_normal(n)
    y = x - h * x**3
    edges = np.linspace(-5.0, 5.0, 201)
    counts, _ = np.histogram(y, edges)
    ys = ystar(h)
    lo, hi = edges[:-1], edges[1:]
    excluded = np.zeros(200, bool)
    for c in (-ys, ys):
        excluded |= (hi > c - 0.02) & (lo < c + 0.02)
    width = hi - lo
    prob = np.array([d.mass(a, b) for a, b in zip(lo, hi)])
    expected = prob / width
    observed = counts / (n * width)
    se = np.sqrt(prob * (1 - prob) / n) / width
    tol = np.maximum(3 * se, 1e-3)
    bad = (np.abs(observed - expected) > tol) & ~excluded
    # bin averages from eval_density agree with the exact pre-image masses
    mid = 0.5 * (lo + hi)
    avg = np.array([integrate.quad(lambda t: float(eval_density(d, t)), a, b)[0] for a, b in zip(lo[::20], hi[::20])])
    consistent = np.allclose(avg / width[::20], expected[::20], rtol=1e-8, atol=1e-12)
    elapsed = time.perf_counter() - t0
    ok = not bad.any() and consistent and elapsed < 30.0
    report(
        capsys, 2, ok,
        f"{int(bad.sum())} of {int((~excluded).sum())} bins outside tolerance, "
        f"max |obs-exp|/tol={np.max(np.abs(observed - expected)[~excluded] / tol[~excluded]):.2f}, {elapsed:.1f}s",
    )
    assert ok


# -- 3 -------------------------------------------------------------------------


def test_criterion_3_recurrence_equivalence(capsys):
    sc = example2()
    sched = [0.1] * 10
    states = run_flow(sc.initial, sc.energy, sched, force=True)
    coeffs = ex2_recurrence(sched)
    x = np.linspace(-8.0, 8.0, 1000)
    worst = 0.0
    for S, c in zip(states, coeffs):
        ax = np.abs(x)
        keep = ~(np.isclose(ax, 1.0, rtol=1e-12, atol=0) | np.isclose(ax, c.c, rtol=1e-12, atol=0))
        worst = max(worst, float(np.max(np.abs(S.current.pdf(x[keep]) - ex2_density(c, x[keep])))))
    c0 = coeffs[0]
    seed_ok = c0.a == 1.0 and c0.c == 1.0 and abs(c0.b - (0.5 - math.log(D0_CLOSED))) < 1e-15
    ok = worst <= 1e-10 and seed_ok
    report(capsys, 3, ok, f"max pointwise gap {worst:.2e} for k <= 10; seed (a, b, c) = ({c0.a}, {c0.b:.15f}, {c0.c})")
    assert ok


# -- 4 -------------------------------------------------------------------------


def test_criterion_4_non_convergence_certificate(capsys):
    sc = example2()
    target = sc.target_density
    schedules = {
        "h=0.1": [0.1] * 100,
        "h=0.5": [0.5] * 100,
        "h=1/(k+2)": [1 / (k + 2) for k in range(100)],
    }
    kl_ok, order_ok, certs, mins = True, True, [], {}
    for name, sched in schedules.items():
        states = run_flow(sc.initial, sc.energy, sched, force=True)
        kls = []
        for S in states:
            dk = state_density(S)
            kl = kl_divergence(dk, target)
            cert = pinsker_certificate(dk, target, (-1.0, 1.0))
            kls.append(kl)
            certs.append(cert)
            order_ok &= cert <= kl
        kl_ok &= all(v > 0.019 for v in kls)
        mins[name] = min(kls)
    cert = certs[0]
    spread = max(certs) - min(certs)
    value_ok = abs(cert - 0.01906) <= 1e-5
    ok = kl_ok and order_ok and value_ok
    report(
        capsys, 4, ok,
        f"min KL {', '.join(f'{k}: {v:.4f}' for k, v in mins.items())} (all > 0.019: {kl_ok}); "
        f"certificate {cert:.10f} (spread {spread:.1e}, <= KL: {order_ok}); "
        f"|certificate - 0.01906| = {abs(cert - 0.01906):.2e} vs 1e-5",
    )
    assert kl_ok and order_ok
    # the closed form itself evaluates to 0.0190161, 4.4e-5 away from the stated 0.01906
    assert value_ok, f"certificate {cert:.10f} differs from 0.01906 by more than 1e-5"


# -- 5 -------------------------------------------------------------------------


def test_criterion_5_normalization(capsys):
    brute = sum(
        integrate.quad(f, a, b, epsabs=0, epsrel=1e-13, limit=200)[0]
        for f, a, b in [
            (lambda t: math.exp(-abs(t) + 0.5), -np.inf, -1.0),
            (lambda t: math.exp(-t * t / 2), -1.0, 1.0),
            (lambda t: math.exp(-abs(t) + 0.5), 1.0, np.inf),
        ]
    )
    d0_ok = abs(brute - D0_CLOSED) <= 1e-8
    engine_d0 = math.exp(kinked_potential().log_normalizer)
    d0_ok &= abs(engine_d0 - D0_CLOSED) <= 1e-8

    masses = {}
    for name, V in [("gaussian", gaussian_potential()), ("quartic", quartic_target()), ("kinked", kinked_potential())]:
        masses[name] = ClosedFormDensity(V).integrate()
    e1 = example1()
    for h in (1e-3, 1e-2, 1e-1):
        masses[f"ex1 p1 h={h:g}"] = fe_step(FlowState.initial(e1.initial), e1.energy, h).current.integrate()
    e2 = example2()
    for S in run_flow(e2.initial, e2.energy, [0.1] * 10, force=True)[1:]:
        masses[f"ex2 k={S.k} lazy"] = S.current.integrate()
        masses[f"ex2 k={S.k} closed"] = ClosedFormDensity(S.potential_form).integrate()
    syn = synthetic_scenario(2)
    for S in run_flow(syn.initial, syn.energy, [0.2, 0.2]):
        masses[f"synthetic k={S.k}"] = S.current.integrate()
    worst = max(abs(m - 1.0) for m in masses.values())
    ok = d0_ok and worst <= 1e-8
    report(
        capsys, 5, ok,
        f"D0 quadrature {brute:.12f} vs closed form {D0_CLOSED:.12f}; "
        f"{len(masses)} densities, max |mass - 1| = {worst:.1e}",
    )
    assert ok


# -- 6 -------------------------------------------------------------------------


def test_criterion_6_derivative_loss_ledger(capsys):
    sc = synthetic_scenario(2)
    M, M0 = sc.hessian_bounds()
    h = 0.2
    inj = injectivity_condition(PolynomialVelocity(kl_velocity(sc.energy, sc.initial)), h, M, M0)
    states = run_flow(sc.initial, sc.energy, [h, h])
    y, orders = 1.0, []
    for S in states:
        if S.last_map is not None:
            y = float(S.last_map(y))
        orders.append(probe_junction_order(S.current, y, max_order=4).order)
    # C^4 start: all four probed orders agree, then C^2, then C^0
    ledger_ok = inj.holds and orders == [None, 2, 0]

    e1, e2 = example1(), example2()
    w1 = PolynomialVelocity(kl_velocity(e1.energy, e1.initial))
    w2 = PolynomialVelocity(kl_velocity(e2.energy, e2.initial))
    ex1_reports = [injectivity_condition(w1, hh, *e1.hessian_bounds()) for hh in (1e-3, 1e-2, 1e-1, 0.5)]
    ex2_reports = [injectivity_condition(w2, hh, *e2.hessian_bounds()) for hh in (0.01, 0.1, 0.5, 0.9, 0.99)]
    ex1_ok = all(not r.holds and r.witness is not None for r in ex1_reports)
    ex2_ok = all(r.holds and r.grid_positive for r in ex2_reports)
    ok = ledger_ok and ex1_ok and ex2_ok
    report(
        capsys, 6, ok,
        f"h={h} < 1/(M+M0)={inj.bound:.4f}; probed junction orders per step {orders}; "
        f"example 1 witnesses {[round(r.witness, 3) for r in ex1_reports]}; example 2 injective: {ex2_ok}",
    )
    assert ok


# -- 7 -------------------------------------------------------------------------


def test_criterion_7_particle_density_commutation(capsys):
    sc = example1()
    n, h = 100_000, 0.01
    S0 = FlowState.initial(sc.initial)
    S1 = fe_step(S0, sc.energy, h)
    P0 = init_ensemble(S0.current, n, seed=7)
    P1 = particle_step(P0, S1.last_map.velocity, h)
    ks0 = ks_distance(P0, S0.current)
    ks1 = ks_distance(P1, S1.current)
    ok = ks0 < 1.95 / math.sqrt(n) and ks1 < 0.01
    report(capsys, 7, ok, f"KS step 0 = {ks0:.5f} (< {1.95 / math.sqrt(n):.5f}), KS step 1 = {ks1:.5f} (< 0.01)")
    assert ok


# -- 8 -------------------------------------------------------------------------


class _PowerLaw:
    def __init__(self, alpha, y0):
        self.alpha, self.y0 = alpha, y0

    def logpdf(self, y):
        t = np.asarray(y, float) - self.y0
        return -self.alpha * np.log(np.abs(t)) + 0.5 * t - 1.0


def test_criterion_8_property_suite(capsys):
    rng = np.random.default_rng(8)
    checks = {}

    # gradient finite differences
    worst = 0.0
    for V in (gaussian_potential(), quartic_target(), kinked_potential(), synthetic_scenario(2).initial):
        xs = rng.uniform(-4, 4, 200)
        xs = xs[np.min(np.abs(xs[:, None] - np.r_[V.breakpoints, 1e9][None, :]), axis=1) > 1e-4]
        eps = 1e-6
        fd = (V(xs + eps) - V(xs - eps)) / (2 * eps)
        worst = max(worst, float(np.max(np.abs(V.grad(xs) - fd) / np.maximum(1.0, np.abs(fd)))))
    checks["gradient"] = worst <= 1e-5

    # branch counts on 10^4 probes
    e1 = example1()
    w1 = PolynomialVelocity(kl_velocity(e1.energy, e1.initial))
    from wgflab.pushforward import build_map

    h = 0.1
    B = branch_decompose(build_map(w1, h))
    ys = rng.uniform(-4, 4, 10_000)
    ys = ys[np.abs(np.abs(ys) - ystar(h)) > 1e-3]
    grid = np.linspace(-60, 60, 600001)
    t = grid - h * grid**3
    seg_lo = np.sort(np.minimum(t[1:], t[:-1]))
    seg_hi = np.sort(np.maximum(t[1:], t[:-1]))
    brute = np.searchsorted(seg_lo, ys, side="left") - np.searchsorted(seg_hi, ys, side="right")
    checks["branch count"] = bool(np.array_equal(B.count(ys), brute))

    # Jacobian identity
    jac = 0.0
    for y in rng.uniform(-4, 4, 300):
        for x, _, w in preimages(B, y):
            jac = max(jac, abs(w * abs(1 - 3 * h * x * x) - 1.0))
    checks["jacobian"] = jac <= 1e-10

    # fixed point at V = U
    U = quartic_target()
    S = fe_step(FlowState.initial(U), KLEnergy(U), 0.3)
    x = np.linspace(-4, 4, 401)
    fp = float(np.max(np.abs(S.current.pdf(x) / ClosedFormDensity(U).pdf(x) - 1.0)))
    checks["fixed point"] = fp <= 1e-12

    # planted exponents
    errs = []
    for alpha in np.r_[0.2, 1 / 3, 0.5, 0.8, np.linspace(0.1, 0.9, 9)]:
        for side in (-1, 1):
            errs.append(abs(measure_singularity_exponent(_PowerLaw(alpha, 0.7), 0.7, side).alpha - alpha))
    checks["exponent oracle"] = bool(max(errs) <= 0.01)

    # measured example-1 exponent against both candidates (no assertion)
    measured = {}
    for hh in (1e-3, 1e-2, 1e-1):
        d = fe_step(FlowState.initial(e1.initial), e1.energy, hh).current
        try:
            measured[hh] = measure_singularity_exponent(d, ystar(hh), -1).alpha
        except FitUnstable:
            measured[hh] = None
    fmt = ", ".join(
        f"h={k:g}: {'unstable fit' if v is None else f'{v:.5f} (|-1/3|={abs(v - 1/3):.3f}, |-1/2|={abs(v - 0.5):.5f})'}"
        for k, v in measured.items()
    )
    ok = all(checks.values())
    report(capsys, 8, ok, f"{checks}; fp err {fp:.1e}, jac err {jac:.1e}; example-1 exponent {fmt}")
    assert ok
