"""Piecewise potentials V with densities exp(-V).

A potential is a :class:`~wgflab.piecewise.PiecewisePolynomial` (plus optional
``c*|x|`` terms on the input side) together with a log-normalizer, so that
``V(x) = raw(x) + log_normalizer``.  After :meth:`PiecewisePotential.normalized`
the density ``exp(-V)`` integrates to one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import NonDifferentiable, NonIntegrableTail
from .piecewise import SMOOTH, PiecewisePolynomial
from .quadrature import log_exp_poly_integral


@dataclass(frozen=True)
class PotentialPiece:
    """One piece of a potential: ``poly(x - anchor) + abs_coeff * |x|`` on ``(lo, hi)``.

    ``poly=None`` marks a piece where the potential is ``+inf`` (zero density).
    """

    lo: float
    hi: float
    poly: tuple | None
    abs_coeff: float = 0.0
    anchor: float = 0.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"degenerate interval ({self.lo}, {self.hi})")
        if self.abs_coeff and self.lo < 0.0 < self.hi:
            raise ValueError("an |x| term needs a piece that does not straddle 0")

    def folded(self):
        """Coefficients in powers of ``x - anchor`` with the ``|x|`` term absorbed."""
        if self.poly is None:
            return None
        c = np.zeros(max(len(self.poly), 2))
        c[: len(self.poly)] = self.poly
        if self.abs_coeff:
            sign = 1.0 if self.lo >= 0 else -1.0
            c[0] += sign * self.abs_coeff * self.anchor
            c[1] += sign * self.abs_coeff
        return tuple(float(v) for v in c)


class PiecewisePotential:
    """Immutable piecewise potential.

    Parameters
    ----------
    pieces : list of PotentialPiece
        Must tile the real line left to right.
    log_normalizer : float
        Constant added to every finite piece.
    """

    def __init__(self, pieces, log_normalizer: float = 0.0):
        pieces = list(pieces)
        if not pieces:
            raise ValueError("need at least one piece")
        if pieces[0].lo != -math.inf or pieces[-1].hi != math.inf:
            raise ValueError("pieces must cover the whole real line")
        for a, b in zip(pieces[:-1], pieces[1:]):
            if a.hi != b.lo:
                raise ValueError(f"pieces leave a gap or overlap at {a.hi} / {b.lo}")
        self.pieces = tuple(pieces)
        self.log_normalizer = float(log_normalizer)
        self.raw = PiecewisePolynomial(
            [p.lo for p in pieces[1:]], [(p.folded(), p.anchor) for p in pieces]
        )

    @classmethod
    def from_polynomial(cls, poly: PiecewisePolynomial, log_normalizer: float = 0.0) -> PiecewisePotential:
        return cls(
            [PotentialPiece(p.lo, p.hi, p.coeffs, 0.0, p.anchor) for p in poly.pieces],
            log_normalizer,
        )

    @classmethod
    def polynomial(cls, coeffs, log_normalizer: float = 0.0) -> PiecewisePotential:
        return cls([PotentialPiece(-math.inf, math.inf, tuple(coeffs))], log_normalizer)

    # -- structure ------------------------------------------------------------

    @property
    def breakpoints(self):
        return self.raw.breakpoints

    @cached_property
    def junction_smoothness(self) -> tuple:
        return tuple(self.raw.junction_orders())

    @property
    def is_normalized(self) -> bool:
        return abs(self.log_normalizer - log_partition(self)) < 1e-12

    def with_log_normalizer(self, value: float) -> PiecewisePotential:
        return PiecewisePotential(self.pieces, value)

    def normalized(self) -> PiecewisePotential:
        return self.with_log_normalizer(log_partition(self))

    def as_polynomial(self) -> PiecewisePolynomial:
        """The full potential (normalizer included) as a piecewise polynomial."""
        return self.raw.add_constant(self.log_normalizer)

    # -- evaluation -----------------------------------------------------------

    def __call__(self, x, side: int = 0):
        return self.raw(x, side) + self.log_normalizer

    def grad(self, x, side: int = 0):
        """First derivative; ``side=0`` averages one-sided values at a kink.

        Raises :class:`NonDifferentiable` at a value jump unless ``side`` is given.
        """
        return self._derivative(x, 1, side)

    def hess(self, x, side: int = 0):
        return self._derivative(x, 2, side)

    def _derivative(self, x, order, side):
        x = np.asarray(x, float)
        if side:
            return self.raw.derivative_values(x, order, side)
        bp = self.breakpoints
        xa = np.atleast_1d(x)
        out = np.atleast_1d(self.raw.derivative_values(xa, order, 0)).astype(float)
        if bp.size:
            hit = np.isin(xa, bp)
            for i in np.flatnonzero(hit):
                j = int(np.searchsorted(bp, xa[i]))
                if self.junction_smoothness[j] < 0:
                    raise NonDifferentiable(xa[i])
                left = self.raw.derivative_values(xa[i], order, -1)
                right = self.raw.derivative_values(xa[i], order, +1)
                out[i] = 0.5 * (left + right)
        return out[0] if x.ndim == 0 else out

    def hessian_bounds(self):
        """(inf, sup) of V'' over all finite pieces; may be infinite."""
        lo, hi = math.inf, -math.inf
        for p in self.raw.pieces:
            if p.void:
                continue
            c = npoly.polyder(np.asarray(p.coeffs), 2) if len(p.coeffs) > 2 else np.zeros(1)
            a, b = _poly_range(c, p.lo - p.anchor, p.hi - p.anchor)
            lo, hi = min(lo, a), max(hi, b)
        return lo, hi

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        pieces = []
        for p in self.pieces:
            d = {
                "lo": None if math.isinf(p.lo) else p.lo,
                "hi": None if math.isinf(p.hi) else p.hi,
                "poly": None if p.poly is None else list(p.poly),
                "abs_coeff": p.abs_coeff,
            }
            if p.anchor:
                d["anchor"] = p.anchor
            pieces.append(d)
        return {"pieces": pieces, "log_normalizer": self.log_normalizer}

    @classmethod
    def from_dict(cls, data: dict) -> PiecewisePotential:
        pieces = [
            PotentialPiece(
                -math.inf if d["lo"] is None else float(d["lo"]),
                math.inf if d["hi"] is None else float(d["hi"]),
                None if d["poly"] is None else tuple(float(v) for v in d["poly"]),
                float(d.get("abs_coeff", 0.0)),
                float(d.get("anchor", 0.0)),
            )
            for d in data["pieces"]
        ]
        return cls(pieces, float(data.get("log_normalizer", 0.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> PiecewisePotential:
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, PiecewisePotential) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.to_json())

    def __repr__(self):
        return f"PiecewisePotential(breakpoints={self.breakpoints.tolist()}, log_normalizer={self.log_normalizer!r})"


def _poly_range(c, ta, tb):
    """(min, max) of a polynomial over ``(ta, tb)``, with limits at infinite ends."""
    c = np.trim_zeros(np.asarray(c, float), "b")
    if len(c) == 0:
        return 0.0, 0.0
    if len(c) == 1:
        return float(c[0]), float(c[0])
    vals = []
    deg = len(c) - 1
    for t, sgn in ((ta, -1.0), (tb, 1.0)):
        if np.isfinite(t):
            vals.append(float(npoly.polyval(t, c)))
        else:
            vals.append(math.copysign(math.inf, c[-1] * sgn**deg))
    dc = npoly.polyder(c)
    if len(dc) > 1:
        for r in np.roots(dc[::-1]):
            if abs(r.imag) < 1e-12 and ta < r.real < tb:
                vals.append(float(npoly.polyval(r.real, c)))
    return min(vals), max(vals)


# -- module-level operations ---------------------------------------------------


def eval_potential(P: PiecewisePotential, x):
    return P(x)


def grad_potential(P: PiecewisePotential, x, side: int = 0):
    return P.grad(x, side)


def check_tails(P: PiecewisePotential) -> None:
    """Raise :class:`NonIntegrableTail` unless both tail pieces grow."""
    for piece, direction in ((P.raw.pieces[0], -1.0), (P.raw.pieces[-1], 1.0)):
        if piece.void:
            continue
        c = np.trim_zeros(np.asarray(piece.coeffs, float), "b")
        deg = len(c) - 1
        if deg < 1 or c[-1] * direction**deg <= 0:
            side = "left" if direction < 0 else "right"
            raise NonIntegrableTail(f"{side} tail piece does not grow toward {direction * math.inf}")


def log_partition(P: PiecewisePotential) -> float:
    """``ln int exp(-raw(x)) dx`` summed piece by piece."""
    check_tails(P)
    logs = []
    for p in P.raw.pieces:
        if p.void:
            continue
        logs.append(float(log_exp_poly_integral(p.coeffs, p.lo - p.anchor, p.hi - p.anchor)))
    return float(np.logaddexp.reduce(logs))


def normalize(P: PiecewisePotential) -> float:
    """Log-normalizer making ``exp(-V)`` a probability density."""
    return log_partition(P)


def tail_cutoff(P: PiecewisePotential, tol: float = 1e-16):
    """Finite truncation points ``(L_left, L_right)`` of ``exp(-V)``.

    Beyond each point the density is below ``tol`` and (for slowly growing
    tails) so is the remaining mass.  Found by bracketing then bisection on the
    tail piece, in its local coordinate.
    """
    out = []
    for idx, direction in ((0, -1.0), (-1, 1.0)):
        finite = [p for p in P.raw.pieces if not p.void]
        piece = finite[idx]
        edge = piece.hi if direction < 0 else piece.lo
        if math.isfinite(piece.lo) and math.isfinite(piece.hi):
            out.append(piece.lo if direction < 0 else piece.hi)
            continue
        t = _tail_local_cut(piece.coeffs, piece.anchor, edge, direction, P.log_normalizer, tol)
        out.append(piece.anchor + t)
    return tuple(out)


def _tail_local_cut(coeffs, anchor, edge, direction, shift, tol):
    c = np.asarray(coeffs, float)
    dc = npoly.polyder(c)
    start = (edge - anchor) if math.isfinite(edge) else 0.0
    log_tol = math.log(tol)

    def small(t):
        v = npoly.polyval(t, c) + shift
        g = direction * npoly.polyval(t, dc)
        return g > 0 and -v + max(0.0, -math.log(g)) < log_tol

    step = 1.0
    # the natural length scale of an exponential tail is 1/|V'|
    g0 = abs(npoly.polyval(start, dc))
    if g0 > 0:
        step = min(1.0, 1.0 / g0)
    a, b = start, start + direction * step
    while not small(b):
        a, step = b, step * 2
        b = start + direction * step
        if step > 1e300:
            raise NonIntegrableTail("tail never drops below tolerance")
    for _ in range(200):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        if small(m):
            b = m
        else:
            a = m
    return b


__all__ = [
    "SMOOTH",
    "PotentialPiece",
    "PiecewisePotential",
    "eval_potential",
    "grad_potential",
    "normalize",
    "log_partition",
    "check_tails",
    "tail_cutoff",
]
