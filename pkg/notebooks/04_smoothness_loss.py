# %% [markdown]
# # Two derivatives lost per step
#
# A potential with a single C^4 junction at x = 1.  Each FE step with
# h < 1/(M + M0) maps the junction forward and lowers its smoothness by two.

# %%
from wgflab.diagnostics import probe_junction_order, series_junction_order
from wgflab.flow import kl_velocity, run_flow
from wgflab.pushforward import PolynomialVelocity, injectivity_condition
from wgflab.scenarios import synthetic_scenario

sc = synthetic_scenario(2)
M, M0 = sc.hessian_bounds()
h = 0.2
w = PolynomialVelocity(kl_velocity(sc.energy, sc.initial))
print("bound 1/(M+M0) =", 1 / (M + M0), " holds:", injectivity_condition(w, h, M, M0).holds)

# %%
states = run_flow(sc.initial, sc.energy, [h, h])
y = 1.0
for S in states:
    if S.last_map is not None:
        y = float(S.last_map(y))
    fd = probe_junction_order(S.current, y)
    print(f"k={S.k}  junction at {y:.4f}  exact order {series_junction_order(S.current, y)}  "
          f"finite-difference order {fd.order}  jumps {[f'{j:.2g}' for j in fd.jumps]}")

# %% [markdown]
# A step above the bound folds the map and is refused up front.

# %%
rep = injectivity_condition(w, 0.5, M, M0)
print(rep)
