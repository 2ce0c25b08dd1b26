"""Particle version of the FE step: ``x_i <- x_i - h * w(x_i)``."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .density import Density, sample
from .pushforward import as_velocity


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray
    seed: int
    steps_taken: int = 0

    def __post_init__(self):
        pos = np.array(self.positions, float)
        if pos.ndim != 1 or pos.size < 1:
            raise ValueError("an ensemble needs at least one particle")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.size


def init_ensemble(d: Density, n: int, seed: int, chunk: int | None = None) -> ParticleEnsemble:
    """Draw ``n`` particles by inverse CDF.

    Particle ``i`` depends only on ``(seed, i)``, so drawing in chunks of any
    size gives the same ensemble bit for bit.
    """
    if chunk is None or chunk >= n:
        pos = sample(d, n, seed)
    else:
        pos = np.concatenate([sample(d, min(chunk, n - s), seed, start=s) for s in range(0, n, chunk)])
    return ParticleEnsemble(pos, seed, 0)


def particle_step(P: ParticleEnsemble, velocity, h: float) -> ParticleEnsemble:
    """Move every particle along the supplied velocity field.

    Particles sitting exactly on a velocity breakpoint use the mean of the
    one-sided values.
    """
    if not 0.0 < h < 1.0:
        raise ValueError("step size must lie in (0, 1)")
    w = as_velocity(velocity)
    x = P.positions
    return ParticleEnsemble(x - h * np.asarray(w(x), float), P.seed, P.steps_taken + 1)


def empirical_cdf(P: ParticleEnsemble, y):
    xs = np.sort(P.positions)
    return np.searchsorted(xs, np.asarray(y, float), side="right") / P.n


def ks_distance(P: ParticleEnsemble, d: Density) -> float:
    """Kolmogorov-Smirnov distance using both one-sided empirical values at each sample."""
    xs = np.sort(P.positions)
    n = xs.size
    F = d.cdf(xs)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ensemble_csv(P: ParticleEnsemble) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["index", "position"])
    for i, x in enumerate(P.positions):
        w.writerow([i, repr(float(x))])
    return buf.getvalue()


def histogram(P: ParticleEnsemble, bins: int = 200, span=None):
    counts, edges = np.histogram(P.positions, bins=bins, range=span)
    widths = np.diff(edges)
    return edges[:-1], edges[1:], counts, counts / (P.n * widths)


def histogram_csv(P: ParticleEnsemble, bins: int = 200, span=None) -> str:
    lo, hi, counts, dens = histogram(P, bins, span)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["bin_lo", "bin_hi", "count", "density_estimate"])
    for row in zip(lo, hi, counts, dens):
        w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), repr(float(row[3]))])
    return buf.getvalue()
