"""Forward-Euler discretization of Wasserstein gradient flows in one dimension.

Exact pushforward densities for polynomial and piecewise-polynomial transport
maps, a regularity gate detecting when the flow leaves the domain of the
gradient, and diagnostics for the KL energy along the iteration.
"""

from .density import ClosedFormDensity, PushforwardDensity, cdf, eval_density, quantile, sample
from .diagnostics import (
    kl_divergence,
    measure_singularity_exponent,
    pinsker_certificate,
    probe_junction_order,
    tv_lower_bound,
)
from .errors import (
    FitUnstable,
    InvalidStep,
    NonDifferentiable,
    NonIntegrableTail,
    QuadratureFailure,
    RegularityHalt,
    WGFError,
)
from .flow import (
    FlowState,
    KLEnergy,
    SmoothnessLedger,
    ex2_density,
    ex2_recurrence,
    fe_step,
    kl_velocity,
    regularity_gate,
    run_flow,
    smoothness_step,
    steps_until_nonclassical,
)
from .particles import ParticleEnsemble, init_ensemble, ks_distance, particle_step
from .potentials import PiecewisePotential, PotentialPiece, normalize
from .pushforward import branch_decompose, build_map, injectivity_condition, preimages

__version__ = "0.1.0"
