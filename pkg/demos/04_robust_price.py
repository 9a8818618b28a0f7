# %% [markdown]
# # Robust price of the range S - I
#
# Given call prices, maximise the expected range over every attainable law on
# a box. The dual gives a hedge: cash, calls, forwards entered at barrier hits
# and the Y-hedges above. We check it on paths drawn from an optimal law.

# %%
from rangewalk import Payoff, market_from_measure, price, two_barrier_m0

# %%
market = market_from_measure(two_barrier_m0(), [-1, 0, 1, 2], (4, 4))
print(market.to_json())

# %%
res = price(market, Payoff.builtin("range"), paths=10**5, seed=0)
print("upper price", res.solution.value)
print("rational optimizer:")
for q, p in res.optimizer:
    print(" ", q, p)

# %%
p = res.portfolio
print("cash", round(p.alpha, 6), "calls", {str(k): round(v, 6) for k, v in p.eta.items()})
print("active multipliers", {k: round(v, 6) for k, v in p.lambda_plus.items() if v > 1e-12},
      {k: round(v, 6) for k, v in p.lambda_minus.items() if v > 1e-12})
print(res.report.to_json())

# %% [markdown]
# Without the attainability rows the bound can only go up. For the range it
# does not move here; for a digital on the last record being a new max it does.

# %%
loose = price(market, Payoff.builtin("range"), paths=0, consistency=False)
print("range:", loose.solution.value, ">=", res.solution.value)
sig = Payoff.builtin("signature_digital", level=1)
print("last record up:", price(market, sig, paths=0, consistency=False).solution.value,
      ">=", price(market, sig, paths=0).solution.value)
