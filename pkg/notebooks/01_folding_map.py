# %% [markdown]
# # A Gaussian pushed toward a quartic target
#
# Start from a standard normal and take one forward-Euler step of the KL flow
# toward exp(-x^2/2 - x^4/4).  The transport map is x - h x^3, which folds
# back on itself past x = +-1/sqrt(3h).

# %%
import math

import numpy as np

from wgflab.diagnostics import jump_report
from wgflab.flow import FlowState, fe_step
from wgflab.pushforward import preimages
from wgflab.scenarios import example1

sc = example1()
h = 0.1
S1 = fe_step(FlowState.initial(sc.initial), sc.energy, h)
T, p1 = S1.last_map, S1.current

# %%
B = p1.branches
for br in B.branches:
    print(f"x in ({br.lo:+.4f}, {br.hi:+.4f})  ->  y in ({br.range_lo:+.4f}, {br.range_hi:+.4f})  {br.inverse_method}")
print("critical values:", B.critical_values)

# %% [markdown]
# Every y strictly between the two critical values has three pre-images, and
# the Jacobian weight 1/|T'| blows up at the fold.

# %%
for y in (0.0, 1.0, 1.2, 1.217, 2.0):
    pre = preimages(B, y)
    print(f"y={y:6.3f}: " + ", ".join(f"x={x:+.4f} |J|={w:.3g}" for x, _, w in pre))

# %%
y_star = 2 / 3 * math.sqrt(1 / (3 * h))
rep = jump_report(p1, y_star)
print(rep)
print("regularity:", S1.regularity.status, S1.regularity.reason, S1.regularity.location)

# %% [markdown]
# The density still carries unit mass; the singularity is integrable.

# %%
print("mass:", p1.integrate())
for eps in (1e-2, 1e-4, 1e-6, 1e-8):
    print(f"p1(y* - {eps:g}) = {float(p1.pdf(y_star - eps)):.4f}   p1(y* + {eps:g}) = {float(p1.pdf(y_star + eps)):.3e}")
