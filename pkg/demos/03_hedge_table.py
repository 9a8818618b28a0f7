# %% [markdown]
# # The adapted hedge Y against the measure-side variable Z
#
# Each attainability inequality has an integrand `Z`. Three forward positions,
# opened when the max first reaches `b`, give a tradeable `Y` with `Y <= Z` on
# every path. Equality fails on one ordering of barrier hits only.

# %%
from fractions import Fraction

from rangewalk.construct import Trajectory
from rangewalk.hedging import HedgeContext, TABLE_ROWS, eval_Y, eval_Z, is_exceptional, verify_table

# %%
ctx = HedgeContext(a=1, b=2, h=Fraction(1))
paths = {
    "min -1, then max 3": Trajectory.from_moves([-1, 1, 1, 1], 0),
    "stops at max 2, min -1": Trajectory.from_moves([-1, 1, 1], 1),
    "min -1, max 2, min -2, max 3": Trajectory.from_moves([-1, 1, 1, -1, 1], 0),
}
for name, t in paths.items():
    print(f"{name:32s} Z={eval_Z(ctx, t)!s:6s} Y={eval_Y(ctx, t)!s:6s} exceptional={is_exceptional(ctx, t)}")

# %%
rep = verify_table(draws=20, seed=0)
for row in rep.rows:
    print(row.row, f"{TABLE_ROWS[row.row - 1]:28s}", "max |Z-Y| =", row.max_abs_gap)
print("exceptional ordering gives -(a+b+2h):", rep.exceptional_gaps == rep.exceptional_expected)
