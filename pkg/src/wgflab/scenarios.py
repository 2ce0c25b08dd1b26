"""Ready-made potentials for the two counter-examples and the smoothness-loss test."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .density import ClosedFormDensity
from .flow import KLEnergy
from .potentials import PiecewisePotential, PotentialPiece

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def gaussian_potential() -> PiecewisePotential:
    return PiecewisePotential.polynomial([0.0, 0.0, 0.5], LOG_SQRT_2PI)


def quartic_target() -> PiecewisePotential:
    """``x^2/2 + x^4/4`` plus its normalizer."""
    return PiecewisePotential.polynomial([0.0, 0.0, 0.5, 0.0, 0.25]).normalized()


def kinked_potential() -> PiecewisePotential:
    """``x^2/2`` on ``(-1, 1)`` and ``|x| - 1/2`` outside (C^1 at ``x = +-1``)."""
    return PiecewisePotential(
        [
            PotentialPiece(-math.inf, -1.0, (-0.5,), 1.0),
            PotentialPiece(-1.0, 1.0, (0.0, 0.0, 0.5)),
            PotentialPiece(1.0, math.inf, (-0.5,), 1.0),
        ]
    ).normalized()


@dataclass(frozen=True)
class Scenario:
    name: str
    initial: PiecewisePotential
    energy: KLEnergy

    @property
    def rho0(self) -> ClosedFormDensity:
        return ClosedFormDensity(self.initial)

    @property
    def target_density(self) -> ClosedFormDensity:
        return ClosedFormDensity(self.energy.target)

    def hessian_bounds(self):
        """``(M, M0)``: sup of ``U''`` and minus inf of ``V0''``."""
        M = self.energy.target.hessian_bounds()[1]
        M0 = -self.initial.hessian_bounds()[0]
        return M, M0


def example1() -> Scenario:
    """Gaussian start, quartic target: the FE map ``x - h x^3`` folds."""
    return Scenario("example1", gaussian_potential(), KLEnergy(quartic_target()))


def example2() -> Scenario:
    """Kinked start, Gaussian target: FE opens zero-density gaps that never close."""
    return Scenario("example2", kinked_potential(), KLEnergy(gaussian_potential()))


def synthetic_potential(m: int, beta: float = 1.0) -> PiecewisePotential:
    """Potential with a single junction at ``x = 1`` that is exactly ``C^(m+2)``.

    ``x^4/4 - x^2`` on the left and the same plus ``beta (x-1)^(m+3)`` on the
    right; its second derivative is bounded below by -2.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    base = (0.0, 0.0, -1.0, 0.0, 0.25)
    # right piece expanded about x = 1
    right = [0.25 - 1.0, 1.0 - 2.0, 1.5 - 1.0, 1.0, 0.25]
    right += [0.0] * (m + 4 - len(right))
    right[m + 3] += beta
    return PiecewisePotential(
        [PotentialPiece(-math.inf, 1.0, base), PotentialPiece(1.0, math.inf, tuple(right), 0.0, 1.0)]
    ).normalized()


def synthetic_scenario(m: int, beta: float = 1.0) -> Scenario:
    return Scenario(f"synthetic_C{m + 2}", synthetic_potential(m, beta), KLEnergy(gaussian_potential()))
