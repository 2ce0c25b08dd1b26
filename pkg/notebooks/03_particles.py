# %% [markdown]
# # Particles versus the exact pushforward
#
# Draw particles from the Gaussian start by inverse CDF, move each one with
# x <- x - h w(x), and compare the empirical CDF with the exact one obtained
# from pre-image masses.

# %%
import math

from wgflab.flow import FlowState, fe_step
from wgflab.particles import histogram, init_ensemble, ks_distance, particle_step
from wgflab.scenarios import example1

sc = example1()
h, n = 0.01, 100_000
S0 = FlowState.initial(sc.initial)
S1 = fe_step(S0, sc.energy, h)
P0 = init_ensemble(S0.current, n, seed=1)
P1 = particle_step(P0, S1.last_map.velocity, h)

# %%
print("KS step 0:", ks_distance(P0, S0.current), " threshold", 1.95 / math.sqrt(n))
print("KS step 1:", ks_distance(P1, S1.current))

# %%
lo, hi, counts, dens = histogram(P1, bins=20, span=(-4, 4))
for a, b, c, e in zip(lo, hi, counts, dens):
    exact = S1.current.mass(a, b) / (b - a)
    print(f"[{a:+.1f}, {b:+.1f})  particles {e:.4f}  exact {exact:.4f}")

# %% [markdown]
# A second step is refused: the density now blows up at the fold.

# %%
try:
    fe_step(S1, sc.energy, h)
except Exception as exc:
    print(type(exc).__name__, exc)
