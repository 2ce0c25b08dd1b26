"""Forward-Euler stepping of the KL gradient flow, the regularity gate, and the
closed-form recurrence for the piecewise-exponential example.

One FE step pushes the current density through ``T(x) = x - h * w(x)`` with
the KL velocity ``w = U' - V'`` (``rho = exp(-V)``, target ``exp(-U)``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .density import ClosedFormDensity, Density, PushforwardDensity
from .errors import InvalidStep, NonDifferentiable, RegularityHalt
from .piecewise import Piece, PiecewisePolynomial, default_anchor
from .potentials import PiecewisePotential, PotentialPiece, log_partition
from .pushforward import PiecewiseMap, PolynomialVelocity, VelocityField, build_map

IN_DOMAIN = "in_domain"
OUT_OF_DOMAIN = "out_of_domain"

GATE_OFFSETS = (1e-4, 1e-5, 1e-6)
JUMP_RTOL = 1e-6
BLOWUP_SLOPE = 0.2  # log-log growth rate above which a one-sided limit is treated as +inf
DEEP_OFFSET = 1e-10  # relative offset of the blow-up probe


@dataclass(frozen=True)
class KLEnergy:
    """``F(rho) = KL(rho | exp(-U))`` for a normalized target potential ``U``."""

    target: PiecewisePotential

    def __post_init__(self):
        lz = log_partition(self.target)
        if abs(self.target.log_normalizer - lz) > 1e-8:
            object.__setattr__(self, "target", self.target.with_log_normalizer(lz))


# -- velocity ------------------------------------------------------------------


def kl_velocity(E: KLEnergy, V: PiecewisePotential, one_sided: bool = False) -> PiecewisePolynomial:
    """``w = U' - V'`` as a piecewise polynomial.

    A value jump in ``V`` (including the edge of a zero-density gap) makes the
    velocity undefined there; this raises :class:`NonDifferentiable` unless
    ``one_sided`` is set, in which case each piece keeps its own derivative.
    Gap pieces get the linear interpolant of the neighbouring velocities so the
    map stays continuous across zero-mass regions.
    """
    if not one_sided:
        for b, m in zip(V.breakpoints, V.junction_smoothness):
            if m < 0:
                raise NonDifferentiable(float(b))
    w = E.target.raw.derivative().combine(V.raw.derivative(), 1.0, -1.0)
    return _fill_void(w)


def _fill_void(w: PiecewisePolynomial) -> PiecewisePolynomial:
    pieces = list(w.pieces)
    if all(p.void for p in pieces):
        raise ValueError("velocity undefined everywhere")
    for i, p in enumerate(pieces):
        if not p.void:
            continue
        left = _neighbour_value(w, i, -1)
        right = _neighbour_value(w, i, +1)
        anchor = default_anchor(p.lo, p.hi)
        if left is None or right is None:
            v = left if right is None else right
            pieces[i] = Piece(p.lo, p.hi, (v,), anchor)
        else:
            slope = (right - left) / (p.hi - p.lo)
            # exact value at whichever end the anchor sits on
            if anchor - p.lo <= p.hi - anchor:
                c0 = left + slope * (anchor - p.lo)
            else:
                c0 = right - slope * (p.hi - anchor)
            pieces[i] = Piece(p.lo, p.hi, (c0, slope), anchor)
    return PiecewisePolynomial(w.breakpoints, pieces)


def _neighbour_value(w, i, direction):
    j = i + direction
    while 0 <= j < len(w.pieces) and w.pieces[j].void:
        j += direction
    if not 0 <= j < len(w.pieces):
        return None
    edge = w.pieces[i].lo if direction < 0 else w.pieces[i].hi
    if not math.isfinite(edge):
        return None
    return float(w.derivative_values(edge, 0, direction))


class DensityVelocity(VelocityField):
    """``w = U' + (ln p)'`` for a density known only through its series expansions."""

    def __init__(self, target: PiecewisePotential, density: Density):
        self.target = target
        self.density = density
        self.breakpoints = np.unique(np.r_[density.singular_points, target.breakpoints])

    def taylor(self, x, order: int, side: int = 0):
        side = side or +1
        k = np.arange(1, order + 2)
        du = self.target.raw.taylor(x, order + 1, side)[:, 1:] * k
        dl = self.density.logpdf_taylor(x, order + 1, side)
        dead = ~np.isfinite(dl[:, 0])
        dlog = dl[:, 1:] * k
        dlog[dead] = 0.0
        return du + dlog

    def __repr__(self):
        return f"DensityVelocity(target={self.target!r})"


# -- regularity gate -----------------------------------------------------------


@dataclass(frozen=True)
class Regularity:
    status: str = IN_DOMAIN
    reason: str | None = None
    location: float | None = None
    witnesses: tuple = ()

    @property
    def in_domain(self) -> bool:
        return self.status == IN_DOMAIN

    def to_dict(self):
        return {
            "status": self.status,
            "reason": self.reason,
            "location": self.location,
        }


@dataclass(frozen=True)
class JunctionProbe:
    location: float
    left_limit: float
    right_limit: float
    classification: str  # "jump", "blow_up" or "smooth"
    left_log_limit: float = -math.inf
    right_log_limit: float = -math.inf
    left_growth: float = 0.0
    right_growth: float = 0.0


def one_sided_limit(d: Density, y: float, side: int, offsets=GATE_OFFSETS, deep: float = DEEP_OFFSET):
    """Estimate ``ln lim p(y + side*eps)`` as ``eps -> 0``.

    Works with log-densities so that limits far in the tails (``p ~ 1e-700``)
    are still resolved.  Returns ``(log_limit, growth)`` where ``growth`` is
    the log-log slope of ``p`` against ``1/eps`` between the smallest offset
    and ``deep``; a growth above :data:`BLOWUP_SLOPE` means ``+inf``.
    """
    scale = max(1.0, abs(y))
    eps = np.asarray(offsets, float) * scale
    lv = np.asarray(d.logpdf(y + side * eps), float)
    ldeep = float(d.logpdf(y + side * deep * scale))
    if np.any(lv == np.inf) or ldeep == np.inf:
        return math.inf, math.inf
    growth = 0.0
    if np.isfinite(lv[-1]) and np.isfinite(ldeep):
        growth = (ldeep - lv[-1]) / math.log(eps[-1] / (deep * scale))
    if growth > BLOWUP_SLOPE:
        return math.inf, growth
    ratio = eps[-2] / eps[-1]
    if np.all(np.isfinite(lv[-2:])):
        # ln p(eps) ~ L + c*eps, Richardson on the two smallest offsets
        return float(lv[-1] + (lv[-1] - lv[-2]) / (ratio - 1.0)), growth
    p = np.exp(lv[-2:])
    lim = p[-1] + (p[-1] - p[-2]) / (ratio - 1.0)
    return (math.log(lim) if lim > 0 else -math.inf), growth


def probe_point(d: Density, y: float, offsets=GATE_OFFSETS) -> JunctionProbe:
    left, gl = one_sided_limit(d, y, -1, offsets)
    right, gr = one_sided_limit(d, y, +1, offsets)
    if math.isinf(left) and left > 0 or math.isinf(right) and right > 0:
        kind = "blow_up"
    elif left == right == -math.inf:
        kind = "smooth"
    elif not (math.isfinite(left) and math.isfinite(right)) or abs(left - right) > math.log1p(JUMP_RTOL):
        kind = "jump"
    else:
        kind = "smooth"
    with np.errstate(over="ignore"):
        return JunctionProbe(float(y), float(np.exp(left)), float(np.exp(right)), kind, left, right, gl, gr)


def _closed_form_probes(d: ClosedFormDensity):
    P = d.potential
    out = []
    for b, m in zip(P.breakpoints, P.junction_smoothness):
        if m >= 0:
            continue
        left = float(d.pdf(b, side=-1))
        right = float(d.pdf(b, side=+1))
        if abs(left - right) > JUMP_RTOL * max(left, right):
            with np.errstate(divide="ignore"):
                out.append(JunctionProbe(float(b), left, right, "jump", math.log(left) if left else -math.inf, math.log(right) if right else -math.inf))
    return out


def regularity_gate(d: Density) -> Regularity:
    """Flag jumps and blow-ups of the density (a proxy for leaving ``W^{1,1}_loc``).

    Closed forms are checked exactly at value jumps of the potential; lazy
    pushforwards are probed numerically at their known singular points.  The
    reported location is the witness closest to the origin, positive first.
    """
    if isinstance(d, ClosedFormDensity):
        probes = _closed_form_probes(d)
    else:
        probes = [p for p in (probe_point(d, float(y)) for y in d.singular_points) if p.classification != "smooth"]
    if not probes:
        return Regularity()
    probes.sort(key=lambda p: (abs(p.location), -p.location))
    first = probes[0]
    return Regularity(OUT_OF_DOMAIN, first.classification, first.location, tuple(probes))


# -- closed-form propagation ---------------------------------------------------


def propagate_potential(V: PiecewisePotential, T: PiecewiseMap, rtol: float = 1e-13):
    """``V1 = V o T^-1 + ln|T' o T^-1|`` for a piecewise-affine increasing map.

    Returns ``None`` when ``T`` is not affine per piece or not injective.  Gaps
    in the image (jumps of ``T``) become zero-density (void) pieces.  All
    arithmetic is done in per-piece local coordinates.
    """
    if not T.is_affine():
        return None
    bp = np.union1d(V.raw.breakpoints, T.forward.breakpoints)
    vr, tr = V.raw.refine(bp), T.forward.refine(bp)
    images = []
    for vp, tp in zip(vr.pieces, tr.pieces):
        c = np.zeros(2)
        c[: len(tp.coeffs)] = tp.coeffs
        tau0, tau1 = c
        if tau1 <= 0:
            return None
        lo = tau0 + tau1 * (vp.lo - tp.anchor) if math.isfinite(vp.lo) else -math.inf
        hi = tau0 + tau1 * (vp.hi - tp.anchor) if math.isfinite(vp.hi) else math.inf
        if vp.void:
            coeffs = None
        else:
            k = np.arange(len(vp.coeffs))
            cc = np.asarray(vp.coeffs) / tau1**k
            cc[0] += math.log(tau1)
            coeffs = tuple(float(v) for v in cc)
        images.append([lo, hi, coeffs, tau0])

    # Adjacent images should meet; when they agree up to rounding, keep the
    # boundary of the piece whose anchor sits on it (the one farther from the
    # origin), since shifting an anchored edge by one ulp of 1e30 would move a
    # steep exponential tail by an astronomically large amount.
    pieces = []
    for lo, hi, coeffs, anchor in images:
        if pieces:
            prev = pieces[-1]
            tol = rtol * max(1.0, abs(prev[1]))
            if lo < prev[1] - tol:
                return None
            if lo > prev[1] + tol:
                pieces.append([prev[1], lo, None, 0.0])
            elif lo >= 0:
                prev[1] = lo
            else:
                lo = prev[1]
        pieces.append([lo, hi, coeffs, anchor])

    merged = []
    for lo, hi, coeffs, anchor in pieces:
        if not lo < hi:
            continue
        if merged and coeffs is None and merged[-1][2] is None:
            merged[-1][1] = hi
            continue
        merged.append([lo, hi, coeffs, anchor])
    out = []
    for lo, hi, coeffs, anchor in merged:
        if coeffs is None:
            anchor = default_anchor(lo, hi)
        out.append(PotentialPiece(lo, hi, coeffs, 0.0, anchor))
    return PiecewisePotential(out, V.log_normalizer)


# -- flow state and stepping ---------------------------------------------------


@dataclass(frozen=True)
class FlowState:
    k: int
    current: Density
    potential_form: PiecewisePotential | None = None
    step_history: tuple = ()
    regularity: Regularity = field(default_factory=Regularity)
    conforming: bool = True
    last_map: PiecewiseMap | None = None

    @classmethod
    def initial(cls, V0: PiecewisePotential) -> FlowState:
        d = ClosedFormDensity(V0)
        return cls(0, d, d.potential, (), regularity_gate(d))


def fe_step(S: FlowState, E: KLEnergy, h: float, force: bool = False) -> FlowState:
    """One forward-Euler step ``rho_{k+1} = (Id - h w)_# rho_k``.

    Raises :class:`RegularityHalt` if the current density already left the
    domain of the slope, unless ``force`` is set; forced continuation uses
    one-sided derivatives and marks the trajectory non-conforming.
    """
    if not 0.0 < h < 1.0:
        raise ValueError("step size must lie in (0, 1)")
    forced = not S.regularity.in_domain
    if forced and not force:
        raise RegularityHalt(S.regularity.reason, S.regularity.location)
    if S.potential_form is not None:
        velocity = PolynomialVelocity(kl_velocity(E, S.potential_form, one_sided=forced))
    else:
        velocity = DensityVelocity(E.target, S.current)
    T = build_map(velocity, h)
    current = PushforwardDensity(S.current, T)
    form = propagate_potential(S.potential_form, T) if S.potential_form is not None else None
    gate = regularity_gate(ClosedFormDensity(form) if form is not None else current)
    return FlowState(
        S.k + 1,
        current,
        form,
        S.step_history + (float(h),),
        gate,
        S.conforming and not forced,
        T,
    )


def run_flow(V0: PiecewisePotential, E: KLEnergy, schedule, force: bool = False):
    states = [FlowState.initial(V0)]
    for h in schedule:
        states.append(fe_step(states[-1], E, h, force=force))
    return states


# -- piecewise-exponential example: closed-form recurrence ---------------------


@dataclass(frozen=True)
class Ex2Coefficients:
    k: int
    a: float
    b: float
    c: float
    log_d0: float


def ex2_log_d0() -> float:
    from scipy.special import erf

    return math.log(math.sqrt(2 * math.pi) * erf(1 / math.sqrt(2)) + 2 / math.sqrt(math.e))


def ex2_recurrence(schedule, log_d0: float | None = None):
    """Coefficients ``(a_k, b_k, c_k)`` for ``k = 0 .. len(schedule)``."""
    if log_d0 is None:
        log_d0 = ex2_log_d0()
    a, b, c = 1.0, 0.5 - log_d0, 1.0
    out = [Ex2Coefficients(0, a, b, c, log_d0)]
    for k, h in enumerate(schedule, start=1):
        if not 0.0 < h < 1.0:
            raise ValueError("step sizes must lie in (0, 1)")
        a, b, c = a / (1 - h), b + a * a * h / (1 - h) - math.log1p(-h), (1 - h) * c + a * h
        out.append(Ex2Coefficients(k, a, b, c, log_d0))
    return out


def ex2_density(coeffs: Ex2Coefficients, x):
    """Evaluate the four-case density, mirrored for ``x < 0``."""
    x = np.abs(np.asarray(x, float))
    core = np.exp(-0.5 * x * x - coeffs.log_d0)
    with np.errstate(over="ignore"):
        tail = np.exp(-coeffs.a * x + coeffs.b)
    out = np.where(x < 1.0, core, np.where(x < coeffs.c, 0.0, tail))
    return out[()] if out.ndim == 0 else out


# -- smoothness ledger ---------------------------------------------------------


@dataclass(frozen=True)
class SmoothnessLedger:
    class_of_V: float
    history: tuple = ()

    @property
    def classical_gradient(self) -> bool:
        return self.class_of_V >= 1

    @classmethod
    def start(cls, m: float) -> SmoothnessLedger:
        return cls(m, ((0, m),))


def smoothness_step(L: SmoothnessLedger, valid_step: bool) -> SmoothnessLedger:
    """Record one FE step: the class of ``V`` drops by two.

    ``valid_step`` certifies ``h < 1/(M + M0)``; without it the two-derivative
    loss is not guaranteed and the step is refused.
    """
    if not valid_step:
        raise InvalidStep("step size violates h < 1/(M + M0)")
    new = L.class_of_V - 2 if math.isfinite(L.class_of_V) else L.class_of_V
    k = L.history[-1][0] + 1 if L.history else 1
    return SmoothnessLedger(new, L.history + ((k, new),))


def steps_until_nonclassical(m: float) -> float:
    """FE steps from class ``C^m`` until the class drops below one."""
    if not math.isfinite(m):
        return math.inf
    if m < 1:
        return 0
    return math.floor((m - 1) / 2) + 1


# -- trajectory export ---------------------------------------------------------


def trajectory_record(S: FlowState, coeffs: Ex2Coefficients | None = None, kl_value: float | None = None) -> dict:
    jumps = [p.location for p in S.regularity.witnesses]
    return {
        "k": S.k,
        "h": S.step_history[-1] if S.step_history else None,
        "regularity": S.regularity.to_dict(),
        "conforming": S.conforming,
        "jump_locations": jumps,
        "coefficients": None if coeffs is None else {"a": coeffs.a, "b": coeffs.b, "c": coeffs.c},
        "kl_value": kl_value,
    }


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def trajectory_jsonl(records) -> str:
    return "".join(json.dumps(_jsonable(r), allow_nan=False) + "\n" for r in records)
