# %% [markdown]
# # From a law to a stopping rule
#
# For an attainable law we tabulate, per cell, the probability of stopping and
# of moving to the next new maximum or minimum. The resulting chain hits each
# cell with exactly the predicted probability, and its stopped law is the
# target. Sampling it is cheap.

# %%
import time

from rangewalk import chain_law, derive_rule, empirical_law, sample_batch, tv_distance
from rangewalk.oracle import random_rule, reach_probabilities

# %%
law = chain_law(random_rule((3, 3), seed=7))
print(len(law), "atoms, range", law.support_range)
rule = derive_rule(law)
for key, c in sorted(rule.cells.items())[:6]:
    print(key, "stop", c.stop, "up", c.up, "down", c.down)

# %% [markdown]
# Exact re-absorption through the cell chain gives back the law atom by atom.

# %%
print(chain_law(rule) == law)
print(all(r >= 0 for r in reach_probabilities(rule).values()))

# %%
t0 = time.perf_counter()
batch = sample_batch(rule, 10**6, seed=42)
print(f"{len(batch)} paths in {time.perf_counter() - t0:.2f}s")
print("tv distance", tv_distance(empirical_law(batch), law))
print(batch.trajectory(0))
