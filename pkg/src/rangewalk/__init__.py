"""Joint laws of (min, terminal value, max, last record direction) of a stopped
simple random walk: attainability checks, embeddings, exact oracles and robust
pricing by linear programming."""

from .consistency import check_consistent, check_sx, phi, psi
from .construct import Trajectory, derive_rule, empirical_law, sample_batch, tv_distance
from .measure import GridMeasure, Quad, load_measure, save_measure, two_barrier_m0
from .oracle import TabularRule, chain_law, reach_probabilities
from .pricing import Market, Payoff, market_from_measure, price

__version__ = "0.1.0"
