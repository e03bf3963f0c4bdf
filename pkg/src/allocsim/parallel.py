"""Parallel allocation protocol: reporter-selection policies, allocation
structures, and the per-profile expected / guaranteed utility recursions.

At each stage a policy designates a set of reporters; every reporter demands
her best remaining object; every demanded object is allocated, with a fair
lottery among the agents demanding it.  The possible runs for one profile form
an acyclic structure whose edges are labeled by the set of lottery losers.
All winner combinations of a stage are equiprobable, which is the same thing
as independent fair lotteries per contested object.

Two per-agent values are computed at every node:

* the expected utility over lottery outcomes (``lottery_expected_utilities``),
* the guaranteed utility an agent keeps even when she loses every lottery she
  takes part in (``guaranteed_utilities``).

For a policy embedding a turn sequence there is a single run and both equal
the realized sequential utility.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .errors import BudgetExceededError, PolicyViolationError
from .model import Profile, ScoringSpec
from .sequential import SequentialPolicy

__all__ = [
    "ParallelPolicy",
    "AllReporting",
    "LoserReporting",
    "FromSequential",
    "CustomPolicy",
    "parse_policy",
    "next_reporters",
    "DemandSituation",
    "STOP",
    "AllocationStructure",
    "build_structure",
    "lottery_expected_utilities",
    "guaranteed_utilities",
    "expected_utility_at",
    "guaranteed_utility_at",
    "enumerate_outcomes",
]

DEFAULT_OUTCOME_BUDGET = 10**6


# ---------------------------------------------------------------------------
# Policies
#
# A policy is formally a function from the history of (reporters, losers)
# pairs to the next reporter set.  Each built-in policy only looks at a small
# summary of that history, captured as an explicit state so that structure
# nodes reached through different histories can be merged when (and only
# when) the policy cannot tell them apart.


class ParallelPolicy:
    """Base class; subclasses decide who reports at each stage."""

    literal: str = "custom"

    def initial_state(self):
        return None

    def reporters(self, state, n: int) -> frozenset[int]:
        raise NotImplementedError

    def advance(self, state, reporters: frozenset[int], losers: frozenset[int]):
        """State after one stage with the given reporters and losers."""
        raise NotImplementedError

    def describe(self) -> str:
        return self.literal


class AllReporting(ParallelPolicy):
    """Every agent reports at every stage."""

    literal = "all"

    def reporters(self, state, n: int) -> frozenset[int]:
        return frozenset(range(1, n + 1))

    def advance(self, state, reporters, losers):
        return None


class LoserReporting(ParallelPolicy):
    """Only the previous stage's lottery losers report; everyone reports when
    there were none."""

    literal = "loser"

    def reporters(self, state, n: int) -> frozenset[int]:
        if state:
            return state
        return frozenset(range(1, n + 1))

    def advance(self, state, reporters, losers):
        return losers if losers else frozenset()


class FromSequential(ParallelPolicy):
    """A turn sequence viewed as a parallel policy: a single reporter per
    stage, so every run is the sequential history."""

    def __init__(self, policy: SequentialPolicy):
        self.policy = policy

    @property
    def literal(self) -> str:  # type: ignore[override]
        return "seq:" + self.policy.literal()

    def initial_state(self):
        return 0

    def reporters(self, state, n: int) -> frozenset[int]:
        if state >= self.policy.m:
            raise PolicyViolationError(
                f"turn sequence exhausted after {self.policy.m} stages with objects remaining"
            )
        return frozenset((self.policy.turns[state],))

    def advance(self, state, reporters, losers):
        return state + 1

    def describe(self) -> str:
        return self.literal


class CustomPolicy(ParallelPolicy):
    """A policy given as an arbitrary function of the full stage history.

    ``fn`` receives a tuple of ``(reporters, losers)`` frozenset pairs and
    must return the next reporter set.  No history summarization is assumed,
    so structure nodes are merged only for identical histories.
    """

    def __init__(self, fn: Callable[[tuple], Sequence[int]], name: str = "custom"):
        self.fn = fn
        self.literal = name

    def initial_state(self):
        return ()

    def reporters(self, state, n: int) -> frozenset[int]:
        result = frozenset(self.fn(state))
        if not result:
            raise PolicyViolationError("policy returned an empty reporter set while objects remain")
        if not result <= frozenset(range(1, n + 1)):
            raise PolicyViolationError(f"policy returned out-of-range agents {sorted(result)}")
        return result

    def advance(self, state, reporters, losers):
        return state + ((reporters, losers),)


def next_reporters(
    policy: ParallelPolicy, prefix: Sequence[tuple[frozenset[int], frozenset[int]]], n: int
) -> frozenset[int]:
    """Reporter set designated by ``policy`` after the given stage history."""
    state = policy.initial_state()
    for reporters, losers in prefix:
        state = policy.advance(state, frozenset(reporters), frozenset(losers))
    return policy.reporters(state, n)


def parse_policy(literal: str) -> ParallelPolicy:
    if literal == "all":
        return AllReporting()
    if literal == "loser":
        return LoserReporting()
    if literal.startswith("seq:"):
        return FromSequential(SequentialPolicy.from_literal(literal))
    raise ValueError(f"unknown policy literal {literal!r}")


# ---------------------------------------------------------------------------
# Allocation structures


class _Stop:
    def __repr__(self):
        return "STOP"


STOP = _Stop()


@dataclass(eq=False)
class DemandSituation:
    """A protocol state: remaining objects plus each reporter's demand.

    ``edges`` holds one entry per possible loser set, each a
    ``(losers, target)`` pair where target is another node or :data:`STOP`.
    Distinct loser sets are equiprobable.
    """

    remaining: frozenset[int]
    reporters: frozenset[int]
    demands: dict[int, int]
    edges: tuple[tuple[frozenset[int], "DemandSituation | _Stop"], ...] = ()

    @property
    def reported(self) -> frozenset[int]:
        return frozenset(self.demands.values())

    @property
    def out_degree(self) -> int:
        return len(self.edges)

    def contenders(self) -> dict[int, tuple[int, ...]]:
        """Demanded object -> agents demanding it."""
        groups: dict[int, list[int]] = {}
        for agent in sorted(self.reporters):
            groups.setdefault(self.demands[agent], []).append(agent)
        return {o: tuple(agents) for o, agents in groups.items()}


@dataclass
class AllocationStructure:
    """All demand situations reachable under truthful reporting, as a DAG."""

    root: DemandSituation
    nodes: tuple[DemandSituation, ...]
    policy: ParallelPolicy
    profile: Profile

    def __post_init__(self):
        self._value_cache: dict = {}

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def m(self) -> int:
        return self.profile.m


def build_structure(policy: ParallelPolicy, profile: Profile) -> AllocationStructure:
    """Build the structure of all truthful runs of ``policy`` on ``profile``.

    Nodes are merged when they share the remaining set, the reporter set and
    the policy's own view of the history; truthful demands are determined by
    the first two plus the fixed profile.
    """
    n, m = profile.n, profile.m
    rankings = profile.rankings
    memo: dict = {}
    order: list[DemandSituation] = []

    def visit(remaining: frozenset[int], state, depth: int) -> DemandSituation:
        key = (remaining, state)
        if key in memo:
            return memo[key]
        if depth > m:
            raise PolicyViolationError("no progress after as many stages as objects")
        reporters = policy.reporters(state, n)
        demands = {i: rankings[i - 1].best_of(remaining) for i in sorted(reporters)}
        node = DemandSituation(remaining=remaining, reporters=reporters, demands=demands)
        memo[key] = node
        groups = node.contenders()
        contested = [(o, agents) for o, agents in sorted(groups.items()) if len(agents) > 1]
        next_remaining = remaining - node.reported
        edges = []
        for winners in itertools.product(*(agents for _, agents in contested)):
            losers = frozenset(
                a for (_, agents), w in zip(contested, winners) for a in agents if a != w
            )
            if next_remaining:
                target = visit(next_remaining, policy.advance(state, reporters, losers), depth + 1)
            else:
                target = STOP
            edges.append((losers, target))
        node.edges = tuple(edges)
        order.append(node)
        return node

    root = visit(frozenset(range(1, m + 1)), policy.initial_state(), 1)
    return AllocationStructure(root=root, nodes=tuple(order), policy=policy, profile=profile)


def lottery_expected_utilities(structure: AllocationStructure, g: ScoringSpec) -> tuple[Fraction, ...]:
    """Per-agent expected utility at the root, over all lottery outcomes.

    At each node an agent demanding an object contested by c agents banks
    1/c of its score; the continuation averages the children, counting one
    equiprobable branch per distinct loser set.
    """
    key = ("hat", g.describe())
    cache = structure._value_cache
    if key in cache:
        return cache[key]
    n, m = structure.n, structure.m
    row = g.score_row(m)
    ranks = structure.profile.rank_rows()
    memo: dict[int, tuple[Fraction, ...]] = {}

    def value(node) -> tuple[Fraction, ...]:
        if node is STOP:
            return (Fraction(0),) * n
        got = memo.get(id(node))
        if got is not None:
            return got
        groups = node.contenders()
        stage = [Fraction(0)] * n
        for agent in node.reporters:
            obj = node.demands[agent]
            stage[agent - 1] = Fraction(row[ranks[agent - 1][obj]], len(groups[obj]))
        out = node.out_degree
        acc = [Fraction(0)] * n
        for _, target in node.edges:
            child = value(target)
            for i in range(n):
                acc[i] += child[i]
        result = tuple(stage[i] + acc[i] / out for i in range(n))
        memo[id(node)] = result
        return result

    result = value(structure.root)
    cache[key] = result
    return result


def guaranteed_utilities(structure: AllocationStructure, g: ScoringSpec) -> tuple[Fraction, ...]:
    """Per-agent utility guaranteed regardless of lottery outcomes.

    Minimum over branches; a branch adds the agent's banked score only when
    she reported and is not among that branch's losers.
    """
    key = ("under", g.describe())
    cache = structure._value_cache
    if key in cache:
        return cache[key]
    n, m = structure.n, structure.m
    row = g.score_row(m)
    ranks = structure.profile.rank_rows()
    memo: dict[int, tuple[Fraction, ...]] = {}

    def value(node) -> tuple[Fraction, ...]:
        if node is STOP:
            return (Fraction(0),) * n
        got = memo.get(id(node))
        if got is not None:
            return got
        gains = [Fraction(0)] * n
        for agent in node.reporters:
            obj = node.demands[agent]
            gains[agent - 1] = row[ranks[agent - 1][obj]]
        best: list[Fraction | None] = [None] * n
        for losers, target in node.edges:
            child = value(target)
            for i in range(n):
                v = child[i]
                if (i + 1) in node.reporters and (i + 1) not in losers:
                    v = v + gains[i]
                if best[i] is None or v < best[i]:
                    best[i] = v
        result = tuple(best)  # every non-Stop node has at least one edge
        memo[id(node)] = result
        return result

    result = value(structure.root)
    cache[key] = result
    return result


def expected_utility_at(structure: AllocationStructure, g: ScoringSpec, agent: int) -> Fraction:
    """Expected utility of one agent at the root (over lottery outcomes)."""
    if not 1 <= agent <= structure.n:
        raise ValueError(f"agent {agent} out of range 1..{structure.n}")
    return lottery_expected_utilities(structure, g)[agent - 1]


def guaranteed_utility_at(structure: AllocationStructure, g: ScoringSpec, agent: int) -> Fraction:
    """Guaranteed (pessimistic) utility of one agent at the root."""
    if not 1 <= agent <= structure.n:
        raise ValueError(f"agent {agent} out of range 1..{structure.n}")
    return guaranteed_utilities(structure, g)[agent - 1]


def enumerate_outcomes(
    structure: AllocationStructure, max_outcomes: int = DEFAULT_OUTCOME_BUDGET
) -> list[tuple[dict[int, frozenset[int]], Fraction]]:
    """Every complete run with its probability.

    Returns ``(allocation, probability)`` pairs where allocation maps each
    agent to the objects she won.  Probabilities sum to one; each node splits
    its mass equally among its loser-set branches.  Mainly an oracle for the
    recursive values, so it enumerates paths without any merging.
    """
    n = structure.n
    outcomes: list[tuple[dict[int, frozenset[int]], Fraction]] = []

    def walk(node, holdings: dict[int, frozenset[int]], prob: Fraction):
        if node is STOP:
            outcomes.append((dict(holdings), prob))
            return
        if len(outcomes) > max_outcomes:
            raise BudgetExceededError(
                f"more than {max_outcomes} outcomes", budget=max_outcomes
            )
        share = prob / node.out_degree
        for losers, target in node.edges:
            updated = dict(holdings)
            for agent in node.reporters:
                if agent not in losers:
                    updated[agent] = updated[agent] | {node.demands[agent]}
            walk(target, updated, share)

    walk(structure.root, {i: frozenset() for i in range(1, n + 1)}, Fraction(1))
    return outcomes


# ---------------------------------------------------------------------------
# Fast per-profile evaluators used by the welfare enumerations.  These bypass
# structure construction; the test suite pins them to the recursive values.


def all_reporting_values_scaled(
    order_rows: Sequence[tuple[int, ...]], int_row: Sequence[int], scale: int
) -> tuple[list[int], list[int]]:
    """Expected and guaranteed utilities under all-reporting, times ``scale``.

    Under all-reporting every demanded object leaves play whoever wins, so
    the remaining set evolves deterministically: an agent banks score/c for a
    demand contested by c agents and keeps the full score exactly when she is
    the lone demander.  ``scale`` must be divisible by 1..n.
    """
    n = len(order_rows)
    m = len(order_rows[0])
    ptr = [0] * n
    taken = [False] * (m + 1)
    expected = [0] * n
    guaranteed = [0] * n
    left = m
    counts: dict[int, int] = {}
    tops = [0] * n
    while left > 0:
        counts.clear()
        for i in range(n):
            row = order_rows[i]
            p = ptr[i]
            while taken[row[p]]:
                p += 1
            ptr[i] = p
            t = row[p]
            tops[i] = t
            counts[t] = counts.get(t, 0) + 1
        for i in range(n):
            t = tops[i]
            c = counts[t]
            s = int_row[ptr[i] + 1]
            expected[i] += s * (scale // c)
            if c == 1:
                guaranteed[i] += s * scale
        for t in counts:
            taken[t] = True
        left -= len(counts)
    return expected, guaranteed


def sequential_values_scaled(
    turns: Sequence[int], order_rows: Sequence[tuple[int, ...]], int_row: Sequence[int], scale: int
) -> list[int]:
    """Realized per-agent utilities of a turn sequence, times ``scale``."""
    n = len(order_rows)
    m = len(order_rows[0])
    taken = [False] * (m + 1)
    ptr = [0] * n
    totals = [0] * n
    for agent in turns:
        row = order_rows[agent - 1]
        p = ptr[agent - 1]
        while taken[row[p]]:
            p += 1
        ptr[agent - 1] = p
        taken[row[p]] = True
        totals[agent - 1] += int_row[p + 1] * scale
    return totals
