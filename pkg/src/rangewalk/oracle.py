"""Exact ground truth: stopped laws of bounded tabular stopping rules.

A tabular rule stops the walk with a probability that depends on the state
``(position, min, max, side)``. The state space splits into cells ``(min, max,
side)``; inside a cell the walk moves among ``[min, max]`` and leaves only by
setting a new extreme, which moves it to a cell of larger range. Each cell is
therefore a small absorbing chain, solved exactly, and cells are processed in
order of increasing range.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .construct import StoppingRule, cell_reach
from .measure import GridMeasure, Quad, RangewalkError, format_fraction, to_fraction


class UnboundedError(RangewalkError):
    pass


State = tuple  # (position, i, s, side) with side in {+1, -1}

MENU = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))


def coherent_cell(i: int, s: int, side: int) -> bool:
    if i == 0 and s == 0:
        return side == -1
    if i == 0:
        return side == 1
    if s == 0:
        return side == -1
    return side in (1, -1)


@dataclass(frozen=True)
class TabularRule:
    """Stop probabilities per state on positions ``[-A, B]``.

    Unlisted interior states continue; positions ``-A`` and ``B`` always stop.
    """

    box: tuple[int, int]
    stop_prob: Mapping[State, Fraction] = field(default_factory=dict)
    h: Fraction = Fraction(1)

    def __post_init__(self):
        A, B = self.box
        if A < 1 or B < 1:
            raise ValueError(f"box must be positive, got {self.box}")
        clean = {}
        for state, p in dict(self.stop_prob).items():
            pos, i, s, side = (int(v) for v in state)
            p = to_fraction(p)
            if not (-A <= i <= pos <= s <= B and i <= 0 <= s) or not coherent_cell(i, s, side):
                raise ValueError(f"incoherent state {state} for box {self.box}")
            if not 0 <= p <= 1:
                raise ValueError(f"stop probability {p} outside [0, 1] at {state}")
            if pos in (-A, B) and p != 1:
                raise ValueError(f"boundary state {state} must stop with probability 1")
            clean[(pos, i, s, side)] = p
        object.__setattr__(self, "stop_prob", clean)
        object.__setattr__(self, "h", to_fraction(self.h))

    def stop(self, state: State) -> Fraction:
        A, B = self.box
        if state[0] in (-A, B):
            return Fraction(1)
        return self.stop_prob.get(state, Fraction(0))

    def to_json(self) -> dict:
        return {
            "h": format_fraction(self.h),
            "box": list(self.box),
            "states": [[*st, format_fraction(p)] for st, p in sorted(self.stop_prob.items())],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TabularRule":
        box = tuple(int(v) for v in data["box"])
        states = {tuple(int(v) for v in row[:4]): to_fraction(row[4]) for row in data.get("states", [])}
        return cls(box, states, to_fraction(data.get("h", "1")))


def solve_exact(matrix: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]) -> list[Fraction]:
    """Gauss-Jordan elimination over the rationals; raises on a singular system."""
    n = len(matrix)
    aug = [list(map(Fraction, row)) + [Fraction(r)] for row, r in zip(matrix, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("singular system")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [vr - f * vc for vr, vc in zip(aug[r], aug[col])]
    return [aug[r][n] for r in range(n)]


def _occupation(stops: list[Fraction], entry: int) -> list[Fraction]:
    """Expected visits to each position of a cell before stopping or exiting."""
    n = len(stops)
    mat = [[Fraction(0)] * n for _ in range(n)]
    for y in range(n):
        mat[y][y] = Fraction(1)
        for x in (y - 1, y + 1):
            if 0 <= x < n:
                mat[y][x] -= (1 - stops[x]) / 2
    rhs = [Fraction(int(y == entry)) for y in range(n)]
    return solve_exact(mat, rhs)


def _solve_tabular(rule: TabularRule, max_states: int):
    A, B = rule.box
    if (A + B + 1) ** 3 * 2 > max_states:
        raise UnboundedError(f"box {rule.box} exceeds the state limit {max_states}")
    law: dict[Quad, Fraction] = {}
    reach: dict[tuple, Fraction] = {}
    frontier = {(0, 0, -1): Fraction(1)}
    while frontier:
        nxt: dict[tuple, Fraction] = {}
        for (i, s, side), r in sorted(frontier.items()):
            if (i, s) != (0, 0):
                reach[("+" if side == 1 else "-", -i, s)] = r
            entry = s if side == 1 else i
            stops = [rule.stop((pos, i, s, side)) for pos in range(i, s + 1)]
            visits = _occupation(stops, entry - i)
            for k, pos in enumerate(range(i, s + 1)):
                p = r * visits[k] * stops[k]
                if p:
                    q = Quad(i, pos, s, side)
                    law[q] = law.get(q, Fraction(0)) + p
            up = r * visits[-1] * (1 - stops[-1]) / 2
            down = r * visits[0] * (1 - stops[0]) / 2
            if up:
                nxt[(i, s + 1, 1)] = nxt.get((i, s + 1, 1), Fraction(0)) + up
            if down:
                nxt[(i - 1, s, -1)] = nxt.get((i - 1, s, -1), Fraction(0)) + down
        frontier = nxt
    return reach, law


def chain_law(rule: TabularRule | StoppingRule, max_states: int = 200_000) -> GridMeasure:
    """Exact stopped law of a tabular rule or of a cell-chain stopping rule."""
    return chain_solution(rule, max_states)[1]


def reach_probabilities(rule: TabularRule | StoppingRule, max_states: int = 200_000) -> dict[tuple, Fraction]:
    """Exact P(cell ``(side, a, b)`` is entered), i.e. P(H_b <= T, I(H_b) = -a) for side +."""
    return chain_solution(rule, max_states)[0]


def chain_solution(rule: TabularRule | StoppingRule, max_states: int = 200_000):
    if isinstance(rule, TabularRule):
        reach, law = _solve_tabular(rule, max_states)
        return reach, GridMeasure(law, rule.h)
    reach, law = cell_reach(rule, max_range=max_states)
    return reach, GridMeasure(law, rule.h)


def two_barrier_rule(lower: int, upper: int) -> TabularRule:
    """Stop on first exit of ``(-lower, upper)``."""
    return TabularRule((lower, upper))


def stop_at_origin_rule() -> TabularRule:
    return TabularRule((1, 1), {(0, 0, 0, -1): Fraction(1)})


def random_rule(box: tuple[int, int], seed: int, menu: Sequence[Fraction] = MENU) -> TabularRule:
    """Interior stop probabilities drawn uniformly from ``menu``."""
    rng = random.Random(seed)
    A, B = box
    probs = {}
    for i in range(0, -A - 1, -1):
        for s in range(0, B + 1):
            for side in (-1, 1):
                if not coherent_cell(i, s, side):
                    continue
                for pos in range(i, s + 1):
                    if pos in (-A, B):
                        continue
                    p = Fraction(rng.choice(menu))
                    if p:
                        probs[(pos, i, s, side)] = p
    return TabularRule(box, probs)
