"""Piecewise polynomials on the real line with per-piece expansion points.

Each piece stores ascending coefficients in powers of ``(x - anchor)``.  Keeping
the anchor next to the piece (rather than at the origin) is what lets the
Example-2 recurrence run for hundreds of steps: the tail pieces drift to
``x ~ 1e30`` while their shape stays O(1) in local coordinates.

A piece whose coefficients are ``None`` is *void*: it represents the value
``+inf`` (used for potentials of zero-density gaps).

Value convention at a breakpoint ``b``: the piece farther from the origin wins,
i.e. the right piece when ``b >= 0`` and the left piece when ``b < 0``.  This
matches intervals such as ``(-1, 1)`` / ``[1, c)`` / ``(-c, -1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

SMOOTH = math.inf  # junction order of two identical pieces


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    coeffs: tuple | None
    anchor: float = 0.0

    @property
    def void(self) -> bool:
        return self.coeffs is None

    @property
    def degree(self) -> int:
        if self.coeffs is None:
            return -1
        c = np.trim_zeros(np.asarray(self.coeffs, float), "b")
        return max(len(c) - 1, 0)

    def local(self, x):
        return np.asarray(x, float) - self.anchor


def default_anchor(lo: float, hi: float) -> float:
    """Expansion point for a piece: 0 if inside, else the endpoint nearest 0."""
    if lo <= 0.0 <= hi:
        return 0.0
    return lo if lo > 0 else hi


def shift_coeffs(coeffs, delta: float):
    """Coefficients of ``p(t + delta)`` given those of ``p(t)``."""
    c = np.asarray(coeffs, float).copy()
    n = len(c)
    if delta == 0.0 or n < 2:
        return c
    # repeated synthetic division (Taylor shift)
    for i in range(n - 1):
        for j in range(n - 2, i - 1, -1):
            c[j] += delta * c[j + 1]
    return c


def reanchor(piece: Piece, anchor: float) -> Piece:
    if piece.void or anchor == piece.anchor:
        return Piece(piece.lo, piece.hi, piece.coeffs, anchor if piece.void else piece.anchor)
    c = shift_coeffs(piece.coeffs, anchor - piece.anchor)
    return Piece(piece.lo, piece.hi, tuple(float(v) for v in c), anchor)


class PiecewisePolynomial:
    """Piecewise polynomial tiling the real line.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing interior breakpoints.
    pieces : sequence of (coeffs, anchor) or Piece
        ``len(breakpoints) + 1`` pieces, left to right.
    """

    def __init__(self, breakpoints: Sequence[float], pieces):
        bp = np.asarray(breakpoints, float)
        if bp.ndim != 1 or np.any(np.diff(bp) <= 0) or not np.all(np.isfinite(bp)):
            raise ValueError("breakpoints must be finite and strictly increasing")
        if len(pieces) != len(bp) + 1:
            raise ValueError("need exactly one more piece than breakpoints")
        edges = np.r_[-np.inf, bp, np.inf]
        built = []
        for i, p in enumerate(pieces):
            if isinstance(p, Piece):
                coeffs, anchor = p.coeffs, p.anchor
            else:
                coeffs, anchor = p
            if coeffs is not None:
                coeffs = tuple(float(v) for v in coeffs) or (0.0,)
            built.append(Piece(float(edges[i]), float(edges[i + 1]), coeffs, float(anchor)))
        self.breakpoints = bp
        self.pieces = tuple(built)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def polynomial(cls, coeffs, anchor: float = 0.0) -> PiecewisePolynomial:
        return cls([], [(tuple(coeffs), anchor)])

    @classmethod
    def from_pieces(cls, pieces: Sequence[Piece]) -> PiecewisePolynomial:
        return cls([p.lo for p in pieces[1:]], list(pieces))

    # -- evaluation -----------------------------------------------------------

    def locate(self, x, side: int = 0):
        """Piece index for each ``x``; ``side`` is -1 (left), +1 (right) or 0 (convention)."""
        x = np.asarray(x, float)
        right = np.searchsorted(self.breakpoints, x, side="right")
        if side > 0:
            return right
        left = np.searchsorted(self.breakpoints, x, side="left")
        if side < 0:
            return left
        return np.where(x >= 0, right, left)

    def __call__(self, x, side: int = 0):
        return self.derivative_values(x, 0, side)

    def derivative_values(self, x, order: int = 0, side: int = 0):
        x = np.asarray(x, float)
        scalar = x.ndim == 0
        xa = np.atleast_1d(x)
        idx = np.atleast_1d(self.locate(xa, side))
        out = np.empty(xa.shape)
        for i in np.unique(idx):
            m = idx == i
            p = self.pieces[i]
            if p.void:
                out[m] = np.inf if order == 0 else np.nan
                continue
            c = np.asarray(p.coeffs)
            if order:
                c = npoly.polyder(c, order) if len(c) > order else np.zeros(1)
            out[m] = npoly.polyval(xa[m] - p.anchor, c)
        return out[0] if scalar else out

    def taylor(self, x, order: int, side: int = 0):
        """Taylor coefficients at ``x`` up to ``order``; shape ``(n, order + 1)``."""
        xa = np.atleast_1d(np.asarray(x, float))
        out = np.empty((xa.size, order + 1))
        fact = 1.0
        for j in range(order + 1):
            if j:
                fact *= j
            out[:, j] = np.atleast_1d(self.derivative_values(xa, j, side)) / fact
        return out

    def one_sided(self, x: float, order: int = 0):
        """(left, right) limits of the ``order``-th derivative at ``x``."""
        return (
            float(self.derivative_values(x, order, -1)),
            float(self.derivative_values(x, order, +1)),
        )

    # -- algebra --------------------------------------------------------------

    def derivative(self, order: int = 1) -> PiecewisePolynomial:
        pieces = []
        for p in self.pieces:
            if p.void:
                pieces.append(p)
                continue
            c = np.asarray(p.coeffs)
            d = npoly.polyder(c, order) if len(c) > order else np.zeros(1)
            pieces.append(Piece(p.lo, p.hi, tuple(d), p.anchor))
        return PiecewisePolynomial(self.breakpoints, pieces)

    def refine(self, breakpoints) -> PiecewisePolynomial:
        """Same function on a finer breakpoint set (each new piece re-anchored)."""
        bp = np.union1d(self.breakpoints, np.asarray(breakpoints, float))
        edges = np.r_[-np.inf, bp, np.inf]
        pieces = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = _interior_point(lo, hi)
            src = self.pieces[int(self.locate(mid))]
            pieces.append(reanchor(Piece(lo, hi, src.coeffs, src.anchor), default_anchor(lo, hi)))
        return PiecewisePolynomial(bp, pieces)

    def combine(self, other: PiecewisePolynomial, a: float = 1.0, b: float = 1.0) -> PiecewisePolynomial:
        """``a * self + b * other`` on the common refinement; void wins."""
        bp = np.union1d(self.breakpoints, other.breakpoints)
        f, g = self.refine(bp), other.refine(bp)
        pieces = []
        for p, q in zip(f.pieces, g.pieces):
            if p.void or q.void:
                pieces.append(Piece(p.lo, p.hi, None, p.anchor))
                continue
            cp = a * np.asarray(p.coeffs)
            cq = b * np.asarray(q.coeffs)
            pieces.append(Piece(p.lo, p.hi, tuple(npoly.polyadd(cp, cq)), p.anchor))
        return PiecewisePolynomial(bp, pieces)

    def __add__(self, other):
        return self.combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self.combine(other, 1.0, -1.0)

    def scale(self, a: float) -> PiecewisePolynomial:
        return PiecewisePolynomial(
            self.breakpoints,
            [p if p.void else Piece(p.lo, p.hi, tuple(a * np.asarray(p.coeffs)), p.anchor) for p in self.pieces],
        )

    def add_constant(self, c: float) -> PiecewisePolynomial:
        pieces = []
        for p in self.pieces:
            if p.void:
                pieces.append(p)
            else:
                cc = list(p.coeffs)
                cc[0] += c
                pieces.append(Piece(p.lo, p.hi, tuple(cc), p.anchor))
        return PiecewisePolynomial(self.breakpoints, pieces)

    # -- structure ------------------------------------------------------------

    def junction_orders(self, rtol: float = 1e-10):
        """Smoothness order at each breakpoint.

        ``-1`` is a value jump, ``0`` a kink, ``k`` means C^k but not C^(k+1);
        :data:`SMOOTH` when the two pieces agree to every order.
        """
        orders = []
        for i, b in enumerate(self.breakpoints):
            left, right = self.pieces[i], self.pieces[i + 1]
            if left.void or right.void:
                orders.append(SMOOTH if left.void and right.void else -1)
                continue
            deg = max(left.degree, right.degree)
            order = SMOOTH
            for k in range(deg + 1):
                lv = float(self.derivative_values(b, k, -1))
                rv = float(self.derivative_values(b, k, +1))
                scale = max(1.0, abs(lv), abs(rv))
                if abs(lv - rv) > rtol * scale:
                    order = k - 1
                    break
            orders.append(order)
        return orders

    def real_roots(self, tol: float = 1e-14):
        """All real zeros, per piece (open intervals), sorted; void pieces skipped."""
        roots = []
        for p in self.pieces:
            if p.void:
                continue
            c = np.trim_zeros(np.asarray(p.coeffs, float), "b")
            if len(c) <= 1:
                continue
            for t in polynomial_real_roots(c):
                x = p.anchor + t
                if p.lo < x < p.hi:
                    roots.append(float(x))
        return sorted(set(roots))

    def to_json_pieces(self):
        return [
            {
                "lo": None if not np.isfinite(p.lo) else p.lo,
                "hi": None if not np.isfinite(p.hi) else p.hi,
                "poly": None if p.void else list(p.coeffs),
                "anchor": p.anchor,
            }
            for p in self.pieces
        ]

    def __repr__(self):
        return f"PiecewisePolynomial(breakpoints={self.breakpoints.tolist()}, n_pieces={len(self.pieces)})"


def _interior_point(lo: float, hi: float) -> float:
    if np.isfinite(lo) and np.isfinite(hi):
        return 0.5 * (lo + hi)
    if np.isfinite(lo):
        return lo + max(1.0, abs(lo))
    if np.isfinite(hi):
        return hi - max(1.0, abs(hi))
    return 0.0


def polynomial_real_roots(coeffs) -> list[float]:
    """Real roots of an ascending-coefficient polynomial.

    Degrees up to three use closed forms; higher degrees use the companion
    matrix.  Every root is polished with Newton steps.
    """
    c = np.trim_zeros(np.asarray(coeffs, float), "b")
    deg = len(c) - 1
    if deg < 1:
        return []
    if deg == 1:
        roots = [-c[0] / c[1]]
    elif deg == 2:
        roots = list(_quadratic_roots(c[2], c[1], c[0]))
    elif deg == 3:
        roots = [r for r in cubic_real_roots(c[3], c[2], c[1], c[0])[0] if np.isfinite(r)]
    else:
        z = np.roots(c[::-1])
        scale = max(1.0, np.max(np.abs(z)))
        roots = [float(r.real) for r in z if abs(r.imag) <= 1e-7 * scale]
    dc = npoly.polyder(c)
    polished = []
    for r in roots:
        for _ in range(3):
            d = npoly.polyval(r, dc)
            if d == 0:
                break
            step = npoly.polyval(r, c) / d
            if not np.isfinite(step) or abs(step) > 1e-3 * max(1.0, abs(r)):
                break
            r -= step
        polished.append(float(r))
    return sorted(polished)


def _quadratic_roots(a, b, c):
    disc = b * b - 4 * a * c
    if disc < 0:
        return ()
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b)) if b != 0 else -0.5 * sq
    if q == 0:
        return (0.0, 0.0) if c == 0 else ()
    r1, r2 = q / a, c / q
    return tuple(sorted((r1, r2)))


def cubic_real_roots(a, b, c, d):
    """Real roots of ``a t^3 + b t^2 + c t + d`` (vectorized over ``d``).

    Returns an array of shape ``(n, 3)`` sorted ascending, NaN-padded when the
    cubic has a single real root.
    """
    d = np.atleast_1d(np.asarray(d, float))
    A, B, C = b / a, c / a, d / a
    p = (3 * B - A * A) / 3
    q = (2 * A**3 - 9 * A * B + 27 * C) / 27
    shift = -A / 3
    out = np.full((d.size, 3), np.nan)
    disc = (q / 2) ** 2 + (p / 3) ** 3
    three = disc < 0
    if np.any(three):
        # trigonometric form; p < 0 here
        r = 2 * np.sqrt(-p / 3)
        arg = np.clip(3 * q[three] / (p * r), -1.0, 1.0)
        theta = np.arccos(arg) / 3
        ks = np.arange(3)
        out[three] = r * np.cos(theta[:, None] - 2 * np.pi * ks / 3) + shift
    one = ~three
    if np.any(one):
        sq = np.sqrt(np.maximum(disc[one], 0.0))
        u = np.cbrt(-q[one] / 2 + sq)
        v = np.cbrt(-q[one] / 2 - sq)
        out[one, 0] = u + v + shift
    out.sort(axis=1)
    return out
