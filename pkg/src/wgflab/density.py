"""Probability densities on the real line.

Two representations share one interface:

* :class:`ClosedFormDensity` wraps a normalized potential, ``p = exp(-V)``.
* :class:`PushforwardDensity` stores ``(base, map)`` and evaluates the
  change-of-variables sum over monotone branches on demand.  Nothing is
  resampled onto a grid, so jumps and integrable blow-ups stay exact.

``+inf`` is a legitimate density value at isolated points (critical values of a
folding map); those points carry no mass.
"""

from __future__ import annotations

import csv
import io
import math
from functools import cached_property

import numpy as np

from . import _series
from .piecewise import SMOOTH
from .potentials import PiecewisePotential, log_partition, tail_cutoff
from .pushforward import BranchSet, PiecewiseMap, branch_decompose
from .quadrature import DEFAULT_CONFIG, QuadratureConfig, integrate_between, log_exp_poly_integral

SNAP_RTOL = 1e-12


class Density:
    """Shared interface; subclasses implement ``logpdf``, ``mass`` and ``logpdf_taylor``."""

    support: tuple
    singular_points: np.ndarray

    def logpdf(self, y, side: int = 0):
        raise NotImplementedError

    def pdf(self, y, side: int = 0):
        with np.errstate(over="ignore"):
            return np.exp(self.logpdf(y, side))

    def __call__(self, y, side: int = 0):
        return self.pdf(y, side)

    def mass(self, a, b):
        raise NotImplementedError

    def cdf(self, y):
        y = np.asarray(y, float)
        return np.clip(self.mass(np.full(y.shape, -np.inf), y), 0.0, 1.0)

    def logpdf_taylor(self, y, order: int, side: int = +1):
        """Taylor coefficients of ``ln p`` at ``y`` from one side; shape ``(n, order + 1)``."""
        raise NotImplementedError

    # -- derived operations ---------------------------------------------------

    def quantile(self, u):
        return quantile(self, u)

    def sample(self, n: int, seed: int):
        return sample(self, n, seed)

    def integrate(self, f=None, cfg: QuadratureConfig = DEFAULT_CONFIG):
        return integrate(f, self, cfg)

    def split_points(self):
        lo, hi = self.support
        inner = [s for s in self.singular_points if lo < s < hi]
        return [lo, *inner, hi]


# -- closed form ---------------------------------------------------------------


class ClosedFormDensity(Density):
    """``p(x) = exp(-V(x))`` for a piecewise potential ``V`` (normalized on construction)."""

    def __init__(self, potential: PiecewisePotential, tail_tol: float = 1e-16):
        lz = log_partition(potential)
        if abs(potential.log_normalizer - lz) > 1e-12:
            potential = potential.with_log_normalizer(lz)
        self.potential = potential
        self.tail_tol = tail_tol

    @cached_property
    def support(self):
        return tail_cutoff(self.potential, self.tail_tol)

    @cached_property
    def singular_points(self):
        orders = self.potential.junction_smoothness
        return np.array([b for b, m in zip(self.potential.breakpoints, orders) if m != SMOOTH], float)

    def logpdf(self, y, side: int = 0):
        with np.errstate(invalid="ignore"):
            return -self.potential(y, side)

    def mass(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        scalar = a.ndim == 0
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        total = np.zeros(a.shape)
        shift = self.potential.log_normalizer
        for p in self.potential.raw.pieces:
            if p.void:
                continue
            lo = np.clip(a, p.lo, p.hi)
            hi = np.clip(b, p.lo, p.hi)
            ok = hi > lo
            if not np.any(ok):
                continue
            c = np.array(p.coeffs, float)
            c[0] += shift
            total[ok] += np.exp(log_exp_poly_integral(c, lo[ok] - p.anchor, hi[ok] - p.anchor))
        return total[0] if scalar else total

    def logpdf_taylor(self, y, order: int, side: int = +1):
        out = -self.potential.raw.taylor(y, order, side)
        out[:, 0] -= self.potential.log_normalizer
        void = ~np.isfinite(out[:, 0])
        out[void, 0] = -np.inf
        out[void, 1:] = 0.0
        return out

    def __repr__(self):
        return f"ClosedFormDensity({self.potential!r})"


# -- pushforward ---------------------------------------------------------------


class PushforwardDensity(Density):
    """Lazy pushforward ``T # base`` evaluated through the branch decomposition of ``T``."""

    def __init__(self, base: Density, T: PiecewiseMap):
        self.base = base
        self.map = T

    @cached_property
    def branches(self) -> BranchSet:
        return branch_decompose(self.map, window=self.base.support)

    @cached_property
    def support(self):
        lo, hi = self.base.support
        xs = [lo, hi] + [c for c in self.branches.critical_points if lo < c < hi]
        ys = [float(self.map(x)) for x in xs]
        for b in self.map.breakpoints:
            if lo < b < hi:
                ys += [float(self.map(b, side=-1)), float(self.map(b, side=+1))]
        return (min(ys), max(ys))

    @cached_property
    def singular_points(self):
        T, B = self.map, self.branches
        pts = list(B.critical_values)
        for br in B.branches:
            pts += [br.range_lo, br.range_hi]
        for s in np.r_[self.base.singular_points, T.breakpoints]:
            pts += [float(T(s, side=-1)), float(T(s, side=+1))]
        pts = np.unique(np.asarray(pts, float))
        return pts[np.isfinite(pts)]

    @cached_property
    def _snap_points(self):
        return np.unique(np.r_[self.base.singular_points, self.map.breakpoints])

    def _snap(self, x):
        pts = self._snap_points
        if pts.size == 0 or x.size == 0:
            return x
        idx = np.clip(np.searchsorted(pts, x), 1, pts.size) - 1
        for j in (idx, np.minimum(idx + 1, pts.size - 1)):
            near = np.abs(x - pts[j]) <= SNAP_RTOL * np.maximum(1.0, np.abs(pts[j]))
            x = np.where(near, pts[j], x)
        return x

    def _branch_points(self, y, side):
        """Yield ``(branch, member_mask, x)`` for every branch, including one-sided endpoints."""
        B = self.branches
        crit = set(B.critical_points)
        for (x, valid), br in zip(B.invert(y), B.branches):
            if side:
                # y at a range endpoint approached from inside the range
                for yend, need, xend in (
                    (br.range_lo, side > 0, br.lo if br.orientation > 0 else br.hi),
                    (br.range_hi, side < 0, br.hi if br.orientation > 0 else br.lo),
                ):
                    if need and math.isfinite(xend) and xend not in crit:
                        hit = y == yend
                        x = np.where(hit, xend, x)
                        valid = valid | hit
            yield br, valid, self._snap(x)

    def logpdf(self, y, side: int = 0):
        y = np.asarray(y, float)
        ya = np.atleast_1d(y)
        acc = np.full(ya.shape, -np.inf)
        for br, valid, x in self._branch_points(ya, side):
            if not np.any(valid):
                continue
            xv = x[valid]
            bside = side * br.orientation
            term = np.full(ya.shape, -np.inf)
            with np.errstate(divide="ignore"):
                term[valid] = self.base.logpdf(xv, bside) - np.log(np.abs(self.map.deriv(xv, bside)))
            acc = np.logaddexp(acc, term)
        B = self.branches
        for c, v in zip(B.critical_points, B.critical_values):
            hit = ya == v
            if np.any(hit) and self.base.pdf(c) > 0:
                acc[hit] = np.inf
        return acc[0] if y.ndim == 0 else acc

    def mass(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        scalar = a.ndim == 0
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        out = self._below(b) - self._below(a)
        return out[0] if scalar else out

    def _below(self, y):
        """Base mass of ``{x : T(x) <= y}``, branch by branch."""
        total = np.zeros(y.shape)
        for (x, valid), br in zip(self.branches.invert(y), self.branches.branches):
            full = y >= br.range_hi
            if np.any(full):
                total[full] += self.base.mass(br.lo, br.hi)
            if np.any(valid):
                xv = x[valid]
                if br.orientation > 0:
                    total[valid] += self.base.mass(np.full(xv.shape, br.lo), xv)
                else:
                    total[valid] += self.base.mass(xv, np.full(xv.shape, br.hi))
        return total

    def logpdf_taylor(self, y, order: int, side: int = +1):
        """Exact Taylor coefficients of ``ln p`` by series reversion on each branch."""
        ya = np.atleast_1d(np.asarray(y, float))
        n = ya.size
        terms = []
        for br, valid, x in self._branch_points(ya, side):
            term = np.zeros((n, order + 1))
            term[:, 0] = -np.inf
            if np.any(valid):
                xv = x[valid]
                bside = side * br.orientation
                t = self.map.taylor(xv, order + 1, bside)
                dt = t[:, 1:] * np.arange(1, order + 2)
                r = _series.revert(t[:, : order + 1])
                base = self.base.logpdf_taylor(xv, order, bside)
                composed = _series.compose(_finite(base), r)
                composed[:, 0] = base[:, 0]
                term[valid] = composed - _series.compose(_series.log_abs(dt), r)
            terms.append(term)
        if not terms:
            out = np.zeros((n, order + 1))
            out[:, 0] = -np.inf
            return out
        out = _series.logsumexp(terms)
        dead = np.all(np.stack([t[:, 0] for t in terms]) == -np.inf, axis=0)
        out[dead, 0] = -np.inf
        out[dead, 1:] = 0.0
        return out

    def __repr__(self):
        return f"PushforwardDensity(base={self.base!r}, map={self.map!r})"


def _finite(series):
    s = series.copy()
    bad = ~np.isfinite(s[:, 0])
    s[bad] = 0.0
    return s


# -- module-level operations ---------------------------------------------------


def eval_density(d: Density, y):
    return d.pdf(y)


def cdf(d: Density, y, cfg: QuadratureConfig = DEFAULT_CONFIG):
    return d.cdf(y)


def quantile(d: Density, u, tol: float = 1e-12, max_iter: int = 200):
    """Inverse CDF by safeguarded Newton inside a shrinking bracket."""
    u = np.asarray(u, float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    ua = np.atleast_1d(u)
    lo_edge, hi_edge = d.support
    width = max(1.0, hi_edge - lo_edge)
    lo = np.full(ua.shape, lo_edge - width)
    hi = np.full(ua.shape, hi_edge + width)
    x = np.full(ua.shape, 0.5 * (lo_edge + hi_edge))
    active = np.ones(ua.shape, bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi = x[idx]
        F = d.cdf(xi) - ua[idx]
        done = np.abs(F) <= tol
        below = F < 0
        lo[idx] = np.where(below, xi, lo[idx])
        hi[idx] = np.where(~below, xi, hi[idx])
        p = d.pdf(xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xi - F / p
        l, h = lo[idx], hi[idx]
        inside = np.isfinite(newton) & (newton > l) & (newton < h)
        step = np.where(inside, newton, 0.5 * (l + h))
        narrow = (h - l) <= 4e-16 * np.maximum(1.0, np.abs(xi))
        x[idx] = np.where(done | narrow, xi, step)
        active[idx[done | narrow]] = False
    return x[0] if u.ndim == 0 else x


def uniforms(seed: int, count: int, start: int = 0):
    """Counter-mode uniforms on (0, 1): draw ``i`` depends only on ``(seed, i)``.

    Philox emits four 64-bit words per counter step and ``random()`` consumes
    one word per double, so index ``i`` lives at counter ``i // 4``.
    """
    bitgen = np.random.Philox(key=int(seed) & (2**64 - 1))
    bitgen.advance(start // 4)
    gen = np.random.Generator(bitgen)
    skip = start % 4
    draws = gen.random(count + skip)[skip:]
    return draws + 2.0**-54


def sample(d: Density, n: int, seed: int, start: int = 0):
    """Inverse-CDF samples ``start .. start + n - 1`` of the stream keyed by ``seed``."""
    if n < 1:
        raise ValueError("need at least one sample")
    return quantile(d, uniforms(seed, n, start))


def integrate(f, d: Density, cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """``int f(y) p(y) dy``, split at the density's singular points.

    ``f=None`` integrates the density itself.
    """
    if f is None:
        def integrand(y):
            return float(d.pdf(y))
    else:
        def integrand(y):
            p = float(d.pdf(y))
            return 0.0 if p == 0.0 else float(f(y)) * p

    return integrate_between(integrand, d.split_points(), cfg)


# -- export --------------------------------------------------------------------


def density_table(d: Density, ys):
    ys = np.asarray(ys, float)
    p = d.pdf(ys)
    sing = np.isin(ys, d.singular_points) | ~np.isfinite(p)
    return ys, p, sing.astype(int)


def density_csv(d: Density, ys) -> str:
    ys, p, sing = density_table(d, ys)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["y", "p", "is_singular"])
    for row in zip(ys, p, sing):
        w.writerow([repr(float(row[0])), _fmt(row[1]), int(row[2])])
    return buf.getvalue()


def cdf_csv(d: Density, ys) -> str:
    ys = np.asarray(ys, float)
    F = d.cdf(ys)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["y", "F"])
    for y, v in zip(ys, F):
        w.writerow([repr(float(y)), repr(float(v))])
    return buf.getvalue()


def _fmt(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)
