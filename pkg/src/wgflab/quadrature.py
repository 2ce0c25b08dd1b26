"""Adaptive quadrature helpers and closed-form integrals of exp(-polynomial)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate, special

from .errors import NonIntegrableTail, QuadratureFailure

_SQRT_PI_2 = 0.5 * math.sqrt(math.pi)


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_depth: int = 60
    singular_exclusion_halfwidth: float = 1e-12

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.singular_exclusion_halfwidth < 0:
            raise ValueError("exclusion halfwidth must be non-negative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")


DEFAULT_CONFIG = QuadratureConfig()


def quad(f, a: float, b: float, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """QUADPACK integration of ``f`` over ``[a, b]`` with failure reporting.

    ``f`` is never evaluated at the endpoints, so integrable endpoint
    singularities are allowed.  ``max_depth`` caps the number of subintervals at
    ``8 * max_depth``.
    """
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, _info, *msg = integrate.quad(
            f, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=8 * cfg.max_depth, full_output=1
        )
    text = msg[0] if msg and isinstance(msg[0], str) else ""
    fatal = any(key in text for key in ("maximum number of subdivisions", "bad integrand", "divergent"))
    if not np.isfinite(val) or fatal:
        raise QuadratureFailure(f"quadrature on [{a}, {b}] failed: {text.strip() or 'non-finite value'}")
    return float(val)


def integrate_between(f, points, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """Integrate ``f`` over consecutive ``points``.

    Singular points must be among ``points``: QUADPACK's open Gauss-Kronrod
    rules never sample an endpoint, and its epsilon-algorithm extrapolation
    resolves integrable ``|y - y*|^(-alpha)`` endpoint behaviour.  An explicit
    exclusion window is not cut out, because QAGS then extrapolates as if the
    singularity sat on the shifted endpoint.
    """
    pts = np.unique(np.asarray(points, float))
    return float(sum(quad(f, a, b, cfg) for a, b in zip(pts[:-1], pts[1:])))


# -- integrals of exp(-p(t)) --------------------------------------------------


def log_exp_poly_integral(coeffs, ta, tb):
    """``log int_{ta}^{tb} exp(-p(t)) dt`` for an ascending-coefficient polynomial.

    Closed forms cover degree <= 2 with a non-negative leading coefficient;
    everything else goes through adaptive quadrature.  ``ta``/``tb`` may be
    arrays and may be infinite.
    """
    c = np.trim_zeros(np.asarray(coeffs, float), "b")
    if len(c) == 0:
        c = np.zeros(1)
    ta, tb = np.broadcast_arrays(np.asarray(ta, float), np.asarray(tb, float))
    scalar = ta.ndim == 0
    ta, tb = np.atleast_1d(ta).astype(float), np.atleast_1d(tb).astype(float)
    out = np.full(ta.shape, -np.inf)
    ok = tb > ta
    if np.any(ok):
        deg = len(c) - 1
        if deg == 0:
            if np.any(~np.isfinite(tb[ok] - ta[ok])):
                raise NonIntegrableTail("constant potential on an unbounded piece")
            out[ok] = np.log(tb[ok] - ta[ok]) - c[0]
        elif deg == 1:
            out[ok] = _log_linear(c[0], c[1], ta[ok], tb[ok])
        elif deg == 2 and c[2] > 0:
            out[ok] = _log_gauss(c[0], c[1], c[2], ta[ok], tb[ok])
        else:
            out[ok] = [_log_numeric(c, a, b) for a, b in zip(ta[ok], tb[ok])]
    return out[0] if scalar else out


def _log_linear(c0, c1, ta, tb):
    with np.errstate(over="ignore", invalid="ignore"):
        if c1 > 0:
            if np.any(~np.isfinite(ta)):
                raise NonIntegrableTail("exp(-V) grows toward -inf")
            return -(c0 + c1 * ta) + np.log(-np.expm1(-c1 * (tb - ta))) - math.log(c1)
        if np.any(~np.isfinite(tb)):
            raise NonIntegrableTail("exp(-V) grows toward +inf")
        return -(c0 + c1 * tb) + np.log(-np.expm1(c1 * (tb - ta))) - math.log(-c1)


def _log_gauss(c0, c1, c2, ta, tb):
    s = math.sqrt(c2)
    m = c1 / (2 * c2)
    K = c0 - c1 * c1 / (4 * c2)
    za, zb = s * (ta + m), s * (tb + m)
    out = np.empty(za.shape)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        right = za >= 0
        left = zb <= 0
        mid = ~(right | left)
        if np.any(right):
            a, b = za[right], zb[right]
            ratio = np.where(np.isinf(b), 0.0, special.erfcx(b) * np.exp(a * a - b * b))
            out[right] = -a * a + np.log(special.erfcx(a) - ratio)
        if np.any(left):
            a, b = -zb[left], -za[left]
            ratio = np.where(np.isinf(b), 0.0, special.erfcx(b) * np.exp(a * a - b * b))
            out[left] = -a * a + np.log(special.erfcx(a) - ratio)
        if np.any(mid):
            out[mid] = np.log(2.0 - special.erfc(zb[mid]) - special.erfc(-za[mid]))
    return out + math.log(_SQRT_PI_2) - math.log(s) - K


def _log_numeric(c, a, b):
    if not np.isfinite(a) or not np.isfinite(b):
        lead = c[-1] * ((-1) ** (len(c) - 1) if not np.isfinite(a) else 1.0)
        if lead <= 0:
            raise NonIntegrableTail("potential does not grow on an unbounded piece")
    # offset by the minimum over a bounded probe so the integrand stays O(1)
    dc = npoly.polyder(c)
    cands = [t.real for t in np.roots(dc[::-1]) if abs(t.imag) < 1e-9] if len(dc) > 1 else []
    probe = [t for t in cands if a < t < b] + [v for v in (a, b) if np.isfinite(v)]
    if not probe:
        probe = [0.0]
    vmin = min(float(npoly.polyval(t, c)) for t in probe)
    val, _ = integrate.quad(lambda t: math.exp(-(npoly.polyval(t, c) - vmin)), a, b, epsabs=0.0, epsrel=1e-13, limit=400)
    if val <= 0:
        return -np.inf
    return math.log(val) - vmin
