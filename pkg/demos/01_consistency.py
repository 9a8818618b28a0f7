# %% [markdown]
# # Which stopped laws can a random walk reach?
#
# A law of `(I, X, S, sigma)` (running min, terminal value, running max and
# the direction of the last record) is attainable only if every cell
# `(side, a, b)` passes a linear inequality. This script checks a few laws.

# %%
from fractions import Fraction

from rangewalk import GridMeasure, Quad, check_consistent, psi, two_barrier_m0
from rangewalk.consistency import cell_stats

# %% [markdown]
# Exit of `(-1, 2)`: half the paths stop at -1 right away, the rest follow the
# usual ruin probabilities.

# %%
m0 = two_barrier_m0()
for q, p in m0:
    print(q, p)
print(check_consistent(m0).consistent)

# %%
for side, a, b in [("+", 0, 1), ("+", 0, 2), ("-", 1, 0), ("-", 1, 1)]:
    c = cell_stats(m0, side, a, b)
    print(side, a, b, "psi =", c.psi, "stop mass =", c.p0, "lhs =", c.lhs_he1, "rhs =", c.rhs_he1)

# %% [markdown]
# "Stop the first time the walk reaches 1" has law `{(0,1,1,+1): 1}`. It is
# finite almost surely, but it cannot be reached with the minimum still at 0.

# %%
bad = GridMeasure({Quad(0, 1, 1, 1): Fraction(1)})
rep = check_consistent(bad)
print(rep.consistent, rep.violations[0])
print(psi(bad, 0, 1, "+"))
