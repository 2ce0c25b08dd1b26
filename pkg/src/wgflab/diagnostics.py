"""KL divergence, total-variation and Pinsker bounds, and blow-up exponent fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .density import ClosedFormDensity, Density
from .errors import FitUnstable
from .flow import FlowState, KLEnergy, probe_point
from .quadrature import DEFAULT_CONFIG, QuadratureConfig, integrate_between, quad

LOG_FLOOR = math.log(1e-300)


# -- KL divergence -------------------------------------------------------------


def kl_divergence(p: Density, q: Density, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """``KL(p | q) = int p ln(p / q)``; ``+inf`` when ``q`` vanishes where ``p`` does not."""
    if isinstance(p, ClosedFormDensity) and isinstance(q, ClosedFormDensity):
        return _kl_closed_form(p, q, cfg)
    return _kl_generic(p, q, cfg)


def _kl_closed_form(p: ClosedFormDensity, q: ClosedFormDensity, cfg):
    """Piece-by-piece quadrature in local coordinates.

    Each piece is integrated in the variable ``s = (x - anchor) / scale`` with
    ``scale`` the decay length of ``p`` at the anchor, so tails sitting at
    ``x ~ 1e30`` with slopes ``~ 1e30`` are as easy as pieces near the origin.
    """
    P, Q = p.potential, q.potential
    bp = np.union1d(P.raw.breakpoints, Q.raw.breakpoints)
    pr, qr = P.raw.refine(bp), Q.raw.refine(bp)
    total = 0.0
    for a, b in zip(pr.pieces, qr.pieces):
        if a.void:
            continue
        if b.void:
            return math.inf
        vp = np.asarray(a.coeffs, float).copy()
        vp[0] += P.log_normalizer
        vq = np.asarray(b.coeffs, float).copy()
        vq[0] += Q.log_normalizer
        diff = npoly.polysub(vq, vp)
        lo, hi = a.lo - a.anchor, a.hi - a.anchor
        scale = _decay_length(vp, lo, hi)

        def f(s, vp=vp, diff=diff, scale=scale):
            t = s * scale
            e = npoly.polyval(t, vp)
            if e > 745.0:
                return 0.0
            return math.exp(-e) * npoly.polyval(t, diff) * scale

        total += quad(f, lo / scale, hi / scale, cfg)
    return max(total, 0.0) if total > -1e-10 else total


def _decay_length(c, lo, hi):
    t0 = 0.0 if lo <= 0.0 <= hi else (lo if abs(lo) < abs(hi) else hi)
    d1 = abs(float(npoly.polyval(t0, npoly.polyder(c)))) if len(c) > 1 else 0.0
    d2 = abs(float(npoly.polyval(t0, npoly.polyder(c, 2)))) if len(c) > 2 else 0.0
    rate = max(d1, math.sqrt(d2), 1.0)
    return 1.0 / rate


def _kl_generic(p: Density, q: Density, cfg):
    lo, hi = p.support
    pts = set(p.split_points())
    pts.update(s for s in q.singular_points if lo < s < hi)

    def f(y):
        lp = float(p.logpdf(y))
        if lp == -math.inf:
            return 0.0
        lq = float(q.logpdf(y))
        if lq == -math.inf:
            raise _ZeroTarget(y)
        return math.exp(lp) * (lp - max(lq, LOG_FLOOR))

    try:
        return integrate_between(f, sorted(pts), cfg)
    except _ZeroTarget:
        return math.inf


class _ZeroTarget(Exception):
    pass


# -- total variation and Pinsker ----------------------------------------------


def tv_lower_bound(p: Density, q: Density, A, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """``|P(A) - Q(A)|`` for an interval ``A = (a, b)``; a lower bound on TV."""
    a, b = A
    if not b > a:
        return 0.0
    return float(abs(p.mass(a, b) - q.mass(a, b)))


def pinsker_certificate(p: Density, target: Density, A, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """``2 * TV_A^2``, a lower bound on ``KL(p | target)`` (TV as a sup over sets)."""
    return 2.0 * tv_lower_bound(p, target, A, cfg) ** 2


# -- singularity exponents -----------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    alpha: float
    log_constant: float
    residual: float


def measure_singularity_exponent(d, y_star: float, side: int = -1, eps_range=(1e-10, 1e-4), n: int = 20):
    """Fit ``p(y) ~ C |y - y*|^(-alpha)`` on logarithmically spaced offsets.

    ``d`` may be a :class:`Density` or any callable returning log-densities
    via ``logpdf``.  ``residual`` is the RMS misfit in log space; above 0.05
    the fit is rejected with :class:`FitUnstable`.
    """
    eps = np.logspace(math.log10(eps_range[0]), math.log10(eps_range[1]), n)
    logp = np.asarray(d.logpdf(y_star + side * eps), float)
    if not np.all(np.isfinite(logp)):
        raise FitUnstable("density is zero or infinite at some probe offsets")
    A = np.stack([np.ones(n), -np.log(eps)], axis=1)
    coef, *_ = np.linalg.lstsq(A, logp, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - logp) ** 2)))
    if resid > 0.05:
        raise FitUnstable(f"log-log fit residual {resid:.3g} exceeds 0.05")
    return ExponentFit(float(coef[1]), float(coef[0]), resid)


@dataclass(frozen=True)
class JumpReport:
    location: float
    left_limit: float
    right_limit: float
    classification: str
    exponent_estimate: float | None = None
    exponent_side: str | None = None

    def to_dict(self):
        out = asdict(self)
        for key in ("left_limit", "right_limit"):
            if math.isinf(out[key]):
                out[key] = "inf"
        return out


def jump_report(d: Density, y: float) -> JumpReport:
    """Classify the point ``y`` and, for a blow-up, fit its exponent."""
    pr = probe_point(d, y)
    exponent, which = None, None
    if pr.classification == "blow_up":
        side = -1 if math.isinf(pr.left_log_limit) else +1
        try:
            exponent = measure_singularity_exponent(d, y, side).alpha
        except FitUnstable:
            exponent = None
        which = "left" if side < 0 else "right"
    left = math.inf if math.isinf(pr.left_log_limit) and pr.left_log_limit > 0 else pr.left_limit
    right = math.inf if math.isinf(pr.right_log_limit) and pr.right_log_limit > 0 else pr.right_limit
    return JumpReport(float(y), left, right, pr.classification, exponent, which)


# -- energy trace --------------------------------------------------------------


def state_density(S: FlowState) -> Density:
    return ClosedFormDensity(S.potential_form) if S.potential_form is not None else S.current


def energy_trace(states, E: KLEnergy, cfg: QuadratureConfig = DEFAULT_CONFIG):
    target = ClosedFormDensity(E.target)
    return [(S.k, kl_divergence(state_density(S), target, cfg)) for S in states]


# -- reports -------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticReport:
    kind: str
    inputs: dict
    value: object
    tolerance: object
    passed: bool

    def to_dict(self):
        return {"kind": self.kind, "inputs": self.inputs, "value": self.value, "tolerance": self.tolerance, "pass": self.passed}


# -- junction order probe ------------------------------------------------------


def one_sided_derivatives(f, y: float, side: int, max_order: int = 4, step: float = 1e-2, npts: int = 14, degree: int = 8):
    """Derivatives of orders ``0..max_order`` of ``f`` at ``y`` from one side.

    Least-squares polynomial fit to samples at ``y + side * j * step``
    (``j = 1..npts``), differentiated at the junction.  Independent of any
    series machinery, so it cross-checks exact junction orders.
    """
    t = side * step * np.arange(1, npts + 1)
    vals = np.asarray(f(y + t), float)
    c = npoly.polyfit(t / step, vals, degree)
    fact = np.cumprod(np.r_[1.0, np.arange(1, max_order + 1)])
    return c[: max_order + 1] * fact / step ** np.arange(max_order + 1)


@dataclass(frozen=True)
class JunctionOrderProbe:
    location: float
    jumps: tuple  # |left - right| for derivative orders 1..max_order
    order: int | None  # last order that matches; None when all probed orders match


def probe_junction_order(d: Density, y: float, max_order: int = 4, rtol: float = 1e-2, **fit) -> JunctionOrderProbe:
    """Smoothness order of ``ln p`` at ``y`` from one-sided finite differences."""
    left = one_sided_derivatives(d.logpdf, y, -1, max_order, **fit)
    right = one_sided_derivatives(d.logpdf, y, +1, max_order, **fit)
    jumps = np.abs(left - right)
    order = None
    for k in range(max_order + 1):
        scale = max(1.0, abs(left[k]), abs(right[k]))
        if jumps[k] > rtol * scale:
            order = k - 1
            break
    return JunctionOrderProbe(float(y), tuple(float(v) for v in jumps[1:]), order)


def series_junction_order(d: Density, y: float, max_order: int = 6, rtol: float = 1e-8):
    """Exact junction order of ``ln p`` at ``y`` from one-sided Taylor series."""
    ya = np.array([float(y)])
    left = d.logpdf_taylor(ya, max_order, -1)[0]
    right = d.logpdf_taylor(ya, max_order, +1)[0]
    fact = np.cumprod(np.r_[1.0, np.arange(1, max_order + 1)])
    left, right = left * fact, right * fact
    for k in range(max_order + 1):
        if abs(left[k] - right[k]) > rtol * max(1.0, abs(left[k]), abs(right[k])):
            return k - 1
    return None
