"""Forward-Euler transport maps, their monotone branches, and branch inverses.

A map ``T(x) = x - h * w(x)`` built from a velocity field ``w`` is split into
maximal strictly monotone branches.  Each branch is inverted separately, which
is what makes the change-of-variables formula usable when ``T`` folds the line
(several pre-images per ``y``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import _series
from .piecewise import Piece, PiecewisePolynomial, cubic_real_roots

CONTINUITY_RTOL = 1e-13


# -- velocity fields -----------------------------------------------------------


class VelocityField:
    """Interface for velocity fields ``w``; the FE map is ``x - h * w(x)``.

    Subclasses provide :meth:`taylor`; ``breakpoints`` lists points where ``w``
    may be non-smooth.  At a breakpoint ``w`` takes the mean of its one-sided
    values unless a side is requested.
    """

    breakpoints = np.empty(0)
    poly: PiecewisePolynomial | None = None

    def taylor(self, x, order: int, side: int = 0):
        raise NotImplementedError

    def __call__(self, x, side: int = 0):
        return self.derivative(x, 0, side)

    def derivative(self, x, order: int = 0, side: int = 0):
        x = np.asarray(x, float)
        xa = np.atleast_1d(x)
        fact = math.factorial(order)
        if side:
            out = self.taylor(xa, order, side)[:, order] * fact
        else:
            out = self.taylor(xa, order, +1)[:, order] * fact
            hit = np.isin(xa, self.breakpoints)
            if np.any(hit):
                left = self.taylor(xa[hit], order, -1)[:, order] * fact
                out[hit] = 0.5 * (out[hit] + left)
        return out[0] if x.ndim == 0 else out


class PolynomialVelocity(VelocityField):
    """Velocity given by a piecewise polynomial (exact derivatives of all orders)."""

    def __init__(self, poly: PiecewisePolynomial):
        self.poly = poly
        self.breakpoints = poly.breakpoints

    def taylor(self, x, order: int, side: int = 0):
        return self.poly.taylor(x, order, side if side else +1)

    def __repr__(self):
        return f"PolynomialVelocity({self.poly!r})"


class CallableVelocity(VelocityField):
    """Wrap a plain vectorized callable ``w(x)``; derivatives by central differences."""

    def __init__(self, func, breakpoints=(), step: float = 1e-5):
        self.func = func
        self.breakpoints = np.asarray(breakpoints, float)
        self.step = step

    def taylor(self, x, order: int, side: int = 0):
        x = np.atleast_1d(np.asarray(x, float))
        out = np.zeros((x.size, order + 1))
        out[:, 0] = self.func(x)
        if order >= 1:
            d = self.step * np.maximum(1.0, np.abs(x))
            out[:, 1] = (self.func(x + d) - self.func(x - d)) / (2 * d)
        if order >= 2:
            out[:, 2] = (self.func(x + d) - 2 * out[:, 0] + self.func(x - d)) / (d * d) / 2
        return out


def as_velocity(w) -> VelocityField:
    if isinstance(w, VelocityField):
        return w
    if isinstance(w, PiecewisePolynomial):
        return PolynomialVelocity(w)
    if callable(w):
        return CallableVelocity(w)
    raise TypeError(f"cannot interpret {w!r} as a velocity field")


ZERO_VELOCITY = PolynomialVelocity(PiecewisePolynomial.polynomial([0.0]))


# -- maps ----------------------------------------------------------------------


class PiecewiseMap:
    """The FE transport map ``T(x) = x - h * w(x)`` and its derivative."""

    def __init__(self, velocity, h: float):
        if not h > 0:
            raise ValueError("step size must be positive")
        self.velocity = as_velocity(velocity)
        self.step_size = float(h)
        self.breakpoints = self.velocity.breakpoints
        if self.velocity.poly is not None:
            ident = PiecewisePolynomial.polynomial([0.0, 1.0])
            self.forward = ident.combine(self.velocity.poly, 1.0, -self.step_size)
            self.derivative_form = self.forward.derivative()
        else:
            self.forward = None
            self.derivative_form = None

    @property
    def is_polynomial(self) -> bool:
        return self.forward is not None

    def __call__(self, x, side: int = 0):
        x = np.asarray(x, float)
        return x - self.step_size * self.velocity(x, side)

    def deriv(self, x, side: int = 0):
        return 1.0 - self.step_size * self.velocity.derivative(x, 1, side)

    def taylor(self, x, order: int, side: int = 0):
        xa = np.atleast_1d(np.asarray(x, float))
        out = -self.step_size * self.velocity.taylor(xa, order, side)
        out[:, 0] += xa
        if order >= 1:
            out[:, 1] += 1.0
        return out

    def is_affine(self) -> bool:
        return self.is_polynomial and all(p.void or p.degree <= 1 for p in self.forward.pieces)

    def __repr__(self):
        return f"PiecewiseMap(h={self.step_size}, velocity={self.velocity!r})"


def build_map(velocity, h: float) -> PiecewiseMap:
    return PiecewiseMap(velocity, h)


# -- branches ------------------------------------------------------------------


@dataclass(frozen=True)
class MonotoneBranch:
    lo: float
    hi: float
    range_lo: float
    range_hi: float
    orientation: int
    inverse_method: str
    cuts: tuple = ()  # interior breakpoints of the map inside the domain

    def contains(self, y):
        y = np.asarray(y, float)
        return (y > self.range_lo) & (y < self.range_hi)


@dataclass
class BranchSet:
    map: PiecewiseMap
    branches: list
    critical_points: list
    critical_values: list
    discontinuities: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def num(v):
            return None if not math.isfinite(v) else float(v)

        return {
            "critical_points": [float(v) for v in self.critical_points],
            "critical_values": [float(v) for v in self.critical_values],
            "branches": [
                {
                    "lo": num(b.lo),
                    "hi": num(b.hi),
                    "orientation": "increasing" if b.orientation > 0 else "decreasing",
                    "range_lo": num(b.range_lo),
                    "range_hi": num(b.range_hi),
                }
                for b in self.branches
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def invert(self, y):
        """Per-branch pre-images of an array ``y``.

        Returns a list of ``(x, valid)`` pairs, one per branch, where ``x`` is
        NaN wherever ``valid`` is false.
        """
        y = np.atleast_1d(np.asarray(y, float))
        out = []
        for b in self.branches:
            valid = b.contains(y)
            x = np.full(y.shape, np.nan)
            if np.any(valid):
                x[valid] = _invert_branch(self.map, b, y[valid])
            out.append((x, valid))
        return out

    def count(self, y):
        y = np.atleast_1d(np.asarray(y, float))
        n = sum(b.contains(y).astype(int) for b in self.branches)
        for v in self.critical_values:
            n = n + (y == v)
        return n


def branch_decompose(T: PiecewiseMap, window=None, grid: int = 20001) -> BranchSet:
    """Split ``T`` into maximal strictly monotone branches.

    Polynomial maps are handled exactly (critical points are the real roots of
    ``T'``).  Other maps are scanned on ``grid`` points over ``window``.
    """
    if T.is_polynomial:
        crit = T.derivative_form.real_roots()
        method_for = _piece_method
    else:
        lo, hi = window if window is not None else (-50.0, 50.0)
        crit = _scan_critical_points(T, lo, hi, grid)
        method_for = None
    crit = sorted(set(crit))
    bps = [float(b) for b in T.breakpoints if float(b) not in crit]
    cuts = sorted(set(crit) | set(bps))
    edges = [-math.inf] + cuts + [math.inf]

    segments = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = _probe(a, b)
        slope = float(T.deriv(mid, side=+1))
        if slope == 0.0:
            slope = float(T.deriv(_probe(mid, b), side=+1))
        if slope == 0.0:
            raise ValueError(f"map is constant on ({a}, {b}); pushforward would be singular")
        segments.append([a, b, 1 if slope > 0 else -1, []])

    discontinuities = []
    merged = [segments[0]]
    for seg in segments[1:]:
        prev = merged[-1]
        b = prev[1]
        if b in crit:
            merged.append(seg)
            continue
        left, right = float(T(b, side=-1)), float(T(b, side=+1))
        continuous = abs(left - right) <= CONTINUITY_RTOL * max(1.0, abs(left), abs(right))
        if not continuous:
            discontinuities.append(b)
        if continuous and prev[2] == seg[2]:
            prev[1] = seg[1]
            prev[3].append(b)
        else:
            merged.append(seg)

    branches = []
    for a, b, orient, inner in merged:
        ya = _limit(T, a, +1)
        yb = _limit(T, b, -1)
        rlo, rhi = (ya, yb) if orient > 0 else (yb, ya)
        method = method_for(T, a, b, inner) if method_for else "bracketed Newton"
        branches.append(MonotoneBranch(a, b, rlo, rhi, orient, method, tuple(inner)))
    crit_vals = [float(T(c)) for c in crit]
    return BranchSet(T, branches, crit, crit_vals, discontinuities)


def _piece_method(T, a, b, inner):
    degs = {T.forward.pieces[int(T.forward.locate(_probe(lo, hi)))].degree for lo, hi in _subintervals(a, b, inner)}
    d = max(degs)
    return {0: "closed-form affine", 1: "closed-form affine", 2: "closed-form quadratic", 3: "closed-form cubic"}.get(
        d, "bracketed Newton"
    )


def _subintervals(a, b, inner):
    pts = [a, *inner, b]
    return list(zip(pts[:-1], pts[1:]))


def _probe(a, b):
    if math.isfinite(a) and math.isfinite(b):
        return 0.5 * (a + b)
    if math.isfinite(a):
        return a + max(1.0, abs(a))
    if math.isfinite(b):
        return b - max(1.0, abs(b))
    return 0.0


def _limit(T, x, side):
    """One-sided limit of ``T`` at ``x``; infinite ends use the tail behaviour."""
    if math.isfinite(x):
        return float(T(x, side=side))
    direction = 1.0 if x > 0 else -1.0
    if T.is_polynomial:
        piece = T.forward.pieces[-1 if direction > 0 else 0]
        c = np.trim_zeros(np.asarray(piece.coeffs, float), "b")
        deg = len(c) - 1
        if deg == 0:
            return float(c[0])
        return math.copysign(math.inf, c[-1] * direction**deg)
    far = direction * 1e6
    return math.copysign(math.inf, float(T(far)) - float(T(far / 2)))


def _scan_critical_points(T, lo, hi, n):
    from scipy.optimize import brentq

    xs = np.linspace(lo, hi, n)
    bp = T.breakpoints
    xs = xs[~np.isin(xs, bp)]
    d = T.deriv(xs, side=+1)
    ok = np.isfinite(d)
    xs, d = xs[ok], d[ok]
    crit = []
    for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
        a, b = xs[i], xs[i + 1]
        if np.any((bp > a) & (bp < b)):
            continue  # sign flip across a breakpoint is a kink, not a root
        crit.append(float(brentq(lambda x: float(T.deriv(x, side=+1)), a, b, xtol=1e-14)))
    return crit


# -- inversion -----------------------------------------------------------------


def _invert_branch(T: PiecewiseMap, br: MonotoneBranch, y):
    y = np.asarray(y, float)
    x = np.full(y.shape, np.nan)
    if T.is_polynomial:
        subs = _subintervals(br.lo, br.hi, br.cuts)
        if len(subs) == 1:
            which = np.zeros(y.shape, int)
        else:
            inner_vals = np.array([float(T(c)) for c in br.cuts])
            if br.orientation > 0:
                which = np.searchsorted(inner_vals, y, side="right")
            else:
                which = np.searchsorted(-inner_vals, -y, side="right")
        for k, (a, b) in enumerate(subs):
            m = which == k
            if np.any(m):
                x[m] = _invert_piece(T, a, b, y[m], br.orientation)
    else:
        x = _bracketed_solve(T, y, br.lo, br.hi, br.orientation)
    return x


def _invert_piece(T, a, b, y, orient):
    piece: Piece = T.forward.pieces[int(T.forward.locate(_probe(a, b)))]
    c = np.trim_zeros(np.asarray(piece.coeffs, float), "b")
    deg = len(c) - 1
    ta, tb = a - piece.anchor, b - piece.anchor
    if deg == 1:
        t = (y - c[0]) / c[1]
        return piece.anchor + t
    if deg == 2:
        t = _quadratic_pick(c, y, ta, tb)
    elif deg == 3:
        roots = cubic_real_roots(c[3], c[2], c[1], c[0] - y)
        t = _pick_root(roots, ta, tb)
    else:
        return _bracketed_solve(T, y, a, b, orient)
    x = piece.anchor + t
    return _polish(T, x, y, a, b, orient)


def _quadratic_pick(c, y, ta, tb):
    A, B = c[2], c[1]
    C = c[0] - y
    disc = np.sqrt(np.maximum(B * B - 4 * A * C, 0.0))
    q = -0.5 * (B + np.copysign(disc, B if B != 0 else 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / A
        r2 = np.where(q != 0, C / q, -B / A - r1)
    roots = np.stack([r1, r2], axis=1)
    return _pick_root(roots, ta, tb)


def _pick_root(roots, ta, tb):
    """Choose, per row, the root inside ``(ta, tb)`` (nearest one if rounding pushed it out)."""
    lo = ta if math.isfinite(ta) else -np.inf
    hi = tb if math.isfinite(tb) else np.inf
    clipped = np.clip(roots, lo, hi)
    dist = np.where(np.isnan(roots), np.inf, np.abs(roots - clipped))
    idx = np.argmin(dist, axis=1)
    return roots[np.arange(len(roots)), idx]


def _polish(T, x, y, a, b, orient, steps: int = 2):
    """Newton polish inside the branch, with a bisection fallback."""
    x = x.copy()
    for _ in range(steps):
        f = T(x) - y
        d = T.deriv(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = x - f / d
        good = np.isfinite(nx) & (nx > a) & (nx < b) & (np.abs(T(nx) - y) <= np.abs(f))
        x = np.where(good, nx, x)
    resid = np.abs(T(x) - y)
    bad = ~(resid <= 1e-12 * np.maximum(1.0, np.abs(y))) | ~((x > a) & (x < b)) | ~np.isfinite(x)
    if np.any(bad):
        x[bad] = _bracketed_solve(T, y[bad], a, b, orient)
    return x


def _bracketed_solve(T, y, a, b, orient, max_iter: int = 200):
    """Vectorized safeguarded Newton on a monotone branch.

    The bracket shrinks at every iterate; Newton steps that leave it are
    replaced by bisection, so the solve cannot jump to another branch.
    """
    y = np.asarray(y, float)
    n = y.size
    lo = np.full(n, a, float)
    hi = np.full(n, b, float)
    # expand infinite ends until they bracket y
    for arr, direction in ((lo, -1.0), (hi, 1.0)):
        inf = ~np.isfinite(arr)
        if np.any(inf):
            other = hi if direction < 0 else lo
            base = np.where(np.isfinite(other), other, 0.0)
            step = np.maximum(1.0, np.abs(base))
            cur = base + direction * step
            for _ in range(2000):
                val = T(cur[inf]) - y[inf]
                need = orient * direction * val < 0
                if not np.any(need):
                    break
                idx = np.flatnonzero(inf)[need]
                step[idx] *= 2.0
                cur[idx] = base[idx] + direction * step[idx]
            arr[inf] = cur[inf]
    x = 0.5 * (lo + hi)
    active = np.ones(n, bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi = x[idx]
        tv = T.taylor(xi, 1)
        f = orient * (tv[:, 0] - y[idx])
        d = orient * tv[:, 1]
        below = f < 0
        lo[idx] = np.where(below, xi, lo[idx])
        hi[idx] = np.where(below, hi[idx], xi)
        l, h = lo[idx], hi[idx]
        done = (np.abs(f) <= 1e-14 * np.maximum(1.0, np.abs(y[idx]))) | ((h - l) <= 1e-13 * np.maximum(1.0, np.abs(xi)))
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xi - f / d
        inside = np.isfinite(newton) & (newton > l) & (newton < h)
        x[idx] = np.where(done, xi, np.where(inside, newton, 0.5 * (l + h)))
        active[idx[done]] = False
    return x


def preimages(B: BranchSet, y: float):
    """All pre-images of a scalar ``y`` as ``(x, branch_id, |J|)`` with ``|J| = 1/|T'(x)|``.

    At a critical value the merged pre-image is reported once with ``|J| = inf``.
    """
    y = float(y)
    out = []
    for i, (x, valid) in enumerate(B.invert(np.array([y]))):
        if valid[0]:
            xv = float(x[0])
            out.append((xv, i, 1.0 / abs(float(B.map.deriv(xv)))))
    for c, v in zip(B.critical_points, B.critical_values):
        if y == v:
            out.append((float(c), -1, math.inf))
    return sorted(out)


# -- injectivity ---------------------------------------------------------------


@dataclass(frozen=True)
class InjectivityReport:
    holds: bool
    bound: float
    grid_positive: bool
    witness: float | None
    min_slope: float

    def __bool__(self):
        return self.holds

    @property
    def consistent(self) -> bool:
        """False when the bound claims injectivity but the grid disagrees."""
        return not (self.holds and not self.grid_positive)


def injectivity_condition(velocity, h: float, M: float, M0: float, window=(-1e3, 1e3), n: int = 200001):
    """Check ``h < 1/(M + M0)`` and verify ``T' > 0`` on a dense grid.

    ``M`` bounds ``Hess[U]`` from above and ``M0`` bounds ``-Hess[V0]``; with the
    bound satisfied ``T' = 1 + h (V0'' - U'') >= 1 - h (M + M0) > 0``.
    """
    v = as_velocity(velocity)
    total = M + M0
    bound = math.inf if total <= 0 else 1.0 / total
    holds = bool(h < bound)
    xs = np.linspace(window[0], window[1], n)
    slope = 1.0 - h * v.derivative(xs, 1, side=+1)
    grid_positive = bool(np.all(slope > 0))
    witness = None
    if not grid_positive:
        # the fold closest to the origin is the most informative witness
        bad = np.flatnonzero(slope <= 0)
        witness = float(xs[bad[np.argmin(np.abs(xs[bad]))]])
    return InjectivityReport(holds, bound, grid_positive, witness, float(slope.min()))
