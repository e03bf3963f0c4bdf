"""Social-welfare criteria over the full profile space.

A criterion aggregates along three axes, each either utilitarian (``u``,
mean/sum) or egalitarian (``e``, min): over agents (x), over profiles (y) and
over lottery outcomes (z).  ``sw(x,y,z)`` composes them outside-in.  A second,
non-compositional reading used by the expected-min comparison suite averages
the per-profile minimum across agents: ``E_R[min_i u_i(z, R)]``.

Everything here is exhaustive enumeration over the (optionally symmetry
reduced) profile stream, with exact rational results.  One pass per
``(policy, scoring, m, n)`` collects every statistic any criterion needs; the
pass can be chunked across worker processes, and the chunk reduction is
order-fixed so results are bit-identical for any worker count.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import BudgetExceededError
from .model import Profile, ProfileStream, Ranking, ScoringSpec, _all_perms, enumerate_profiles
from .parallel import (
    AllReporting,
    FromSequential,
    LoserReporting,
    ParallelPolicy,
    all_reporting_values_scaled,
    build_structure,
    guaranteed_utilities,
    lottery_expected_utilities,
    parse_policy,
    sequential_values_scaled,
)
from .sequential import (
    Aggregator,
    SequentialPolicy,
    canonical_turn_sequences,
    optimal_sequential,
)

__all__ = [
    "WelfareCriterion",
    "parse_criterion",
    "agent_value",
    "social_welfare",
    "expected_min_welfare",
    "evaluate_criterion",
    "per_profile_welfare",
    "profile_utilities",
    "TableRow",
    "TABLE_SPECS",
    "reproduce_table",
    "optimal_sequential_expected_min",
    "resolve_budget_units",
    "DEFAULT_BUDGET_SECS",
    "UNITS_PER_SECOND",
]

DEFAULT_BUDGET_SECS = 60.0
# Rough throughput of the enumeration hot loops (profile-stages per second on
# one desktop core); only used to turn a seconds budget into a work-unit cap.
UNITS_PER_SECOND = 200_000
BUDGET_ENV_VAR = "ALLOC_BUDGET_SECS"


def resolve_budget_units(budget_secs: float | None = None) -> int:
    """Deterministic work-unit cap (one unit is roughly one stage of one
    profile evaluation).  ``ALLOC_BUDGET_SECS`` overrides the default."""
    if budget_secs is None:
        raw = os.environ.get(BUDGET_ENV_VAR)
        budget_secs = float(raw) if raw else DEFAULT_BUDGET_SECS
    return max(1, int(budget_secs * UNITS_PER_SECOND))


@dataclass(frozen=True)
class WelfareCriterion:
    """Either a compositional ``(x, y, z)`` triple or the expected-min
    criterion for a given lottery axis ``z``."""

    mode: str  # "comp" | "emin"
    x: str | None
    y: str | None
    z: str

    def __post_init__(self):
        if self.mode not in ("comp", "emin"):
            raise ValueError(f"unknown criterion mode {self.mode!r}")
        axes = (self.x, self.y, self.z) if self.mode == "comp" else (self.z,)
        if any(a not in ("u", "e") for a in axes):
            raise ValueError("criterion axes must be 'u' or 'e'")

    @classmethod
    def compositional(cls, x: str, y: str, z: str) -> "WelfareCriterion":
        return cls("comp", x, y, z)

    @classmethod
    def expected_min(cls, z: str) -> "WelfareCriterion":
        return cls("emin", None, None, z)

    def literal(self) -> str:
        if self.mode == "comp":
            return f"{self.x}{self.y}{self.z}"
        return f"em-{self.z}"


def parse_criterion(text: str) -> WelfareCriterion:
    """Parse ``uuu``-style triples or ``em-u`` / ``em-e``."""
    text = text.strip().lower()
    if text.startswith("em-"):
        return WelfareCriterion.expected_min(text[3:])
    if len(text) == 3:
        return WelfareCriterion.compositional(*text)
    raise ValueError(f"unknown criterion literal {text!r}")


# ---------------------------------------------------------------------------
# One-pass aggregates over the profile stream


@dataclass(frozen=True)
class ProfileAggregates:
    """Everything a criterion can ask of one ``(policy, g, m, n)`` pass."""

    total_weight: int
    sum_hat: tuple[Fraction, ...]
    min_hat: tuple[Fraction, ...]
    sum_under: tuple[Fraction, ...]
    min_under: tuple[Fraction, ...]
    sum_min_hat: Fraction
    sum_min_under: Fraction

    def expected(self, z: str) -> tuple[Fraction, ...]:
        sums = self.sum_hat if z == "u" else self.sum_under
        return tuple(s / self.total_weight for s in sums)

    def minimum(self, z: str) -> tuple[Fraction, ...]:
        return self.min_hat if z == "u" else self.min_under

    def expected_min(self, z: str) -> Fraction:
        total = self.sum_min_hat if z == "u" else self.sum_min_under
        return total / self.total_weight


def _policy_token(policy: ParallelPolicy):
    """Picklable description of a policy, or None when there is none."""
    if isinstance(policy, AllReporting):
        return "all"
    if isinstance(policy, LoserReporting):
        return "loser"
    if isinstance(policy, FromSequential):
        return "seq:" + policy.policy.literal()
    return None


def _scoring_token(g: ScoringSpec):
    if g.kind == "custom":
        return ("custom", tuple(str(v) for v in g.table))
    return (g.kind, None)


def _scoring_from_token(token) -> ScoringSpec:
    kind, table = token
    if kind == "custom":
        return ScoringSpec.custom([Fraction(v) for v in table])
    return ScoringSpec(kind)


def _chunk_stats_fast(orders_iter, evaluate, n: int, scale: int):
    """Accumulate the raw statistics of one chunk using scaled integers."""
    count = 0
    sum_hat = [0] * n
    sum_under = [0] * n
    min_hat: list[int | None] = [None] * n
    min_under: list[int | None] = [None] * n
    sum_min_hat = 0
    sum_min_under = 0
    for orders, weight in orders_iter:
        hat, under = evaluate(orders)
        count += weight
        for i in range(n):
            h, u = hat[i], under[i]
            sum_hat[i] += h * weight
            sum_under[i] += u * weight
            if min_hat[i] is None or h < min_hat[i]:
                min_hat[i] = h
            if min_under[i] is None or u < min_under[i]:
                min_under[i] = u
        sum_min_hat += min(hat) * weight
        sum_min_under += min(under) * weight
    if count == 0:
        return None
    return (
        count,
        tuple(Fraction(v, scale) for v in sum_hat),
        tuple(Fraction(v, scale) for v in min_hat),
        tuple(Fraction(v, scale) for v in sum_under),
        tuple(Fraction(v, scale) for v in min_under),
        Fraction(sum_min_hat, scale),
        Fraction(sum_min_under, scale),
    )


def _chunk_stats_generic(orders_iter, policy: ParallelPolicy, g: ScoringSpec, n: int):
    """Same statistics via full structure construction (any policy)."""
    count = 0
    sum_hat = [Fraction(0)] * n
    sum_under = [Fraction(0)] * n
    min_hat: list[Fraction | None] = [None] * n
    min_under: list[Fraction | None] = [None] * n
    sum_min_hat = Fraction(0)
    sum_min_under = Fraction(0)
    for orders, weight in orders_iter:
        profile = Profile(tuple(Ranking(o) for o in orders))
        structure = build_structure(policy, profile)
        hat = lottery_expected_utilities(structure, g)
        under = guaranteed_utilities(structure, g)
        count += weight
        for i in range(n):
            sum_hat[i] += hat[i] * weight
            sum_under[i] += under[i] * weight
            if min_hat[i] is None or hat[i] < min_hat[i]:
                min_hat[i] = hat[i]
            if min_under[i] is None or under[i] < min_under[i]:
                min_under[i] = under[i]
        sum_min_hat += min(hat) * weight
        sum_min_under += min(under) * weight
    if count == 0:
        return None
    return (
        count,
        tuple(sum_hat),
        tuple(min_hat),
        tuple(sum_under),
        tuple(min_under),
        sum_min_hat,
        sum_min_under,
    )


def _compute_chunk(task):
    """Worker entry point: evaluate one stream chunk described by a task tuple."""
    m, n, policy_token, scoring_token, reduce_symmetry, lo, hi = task
    policy = parse_policy(policy_token)
    g = _scoring_from_token(scoring_token)
    stream = ProfileStream(m, n, reduce_symmetry, lo=lo, hi=hi)
    return _stats_for_chunk(stream.iter_order_rows(), policy, g, m, n)


def _stats_for_chunk(orders_iter, policy, g, m, n):
    int_row, denom = g.integer_row(m)
    if isinstance(policy, AllReporting):
        scale = math.lcm(*range(1, n + 1))
        return _chunk_stats_fast(
            orders_iter,
            lambda orders: all_reporting_values_scaled(orders, int_row, scale),
            n,
            scale * denom,
        )
    if isinstance(policy, FromSequential):
        turns = policy.policy.turns
        if policy.policy.m != m or policy.policy.max_agent > n:
            raise ValueError("turn sequence does not fit m and n")

        def evaluate(orders):
            v = sequential_values_scaled(turns, orders, int_row, 1)
            return v, v

        return _chunk_stats_fast(orders_iter, evaluate, n, denom)
    return _chunk_stats_generic(orders_iter, policy, g, n)


def _merge_stats(parts):
    parts = [p for p in parts if p is not None]
    if not parts:
        raise ValueError("empty profile stream")
    count = sum(p[0] for p in parts)
    n = len(parts[0][1])
    sum_hat = tuple(sum(p[1][i] for p in parts) for i in range(n))
    min_hat = tuple(min(p[2][i] for p in parts) for i in range(n))
    sum_under = tuple(sum(p[3][i] for p in parts) for i in range(n))
    min_under = tuple(min(p[4][i] for p in parts) for i in range(n))
    sum_min_hat = sum(p[5] for p in parts)
    sum_min_under = sum(p[6] for p in parts)
    return ProfileAggregates(
        count, sum_hat, min_hat, sum_under, min_under, sum_min_hat, sum_min_under
    )


_aggregate_cache: dict = {}


def profile_aggregates(
    policy: ParallelPolicy,
    g: ScoringSpec,
    m: int,
    n: int,
    reduce_symmetry: bool = True,
    jobs: int = 1,
    budget_units: int | None = None,
) -> ProfileAggregates:
    """Exhaustive one-pass statistics for a policy over the profile stream."""
    if m < 1 or n < 1:
        raise ValueError("m and n must both be at least 1")
    budget = budget_units if budget_units is not None else resolve_budget_units()
    stream = enumerate_profiles(m, n, reduce_symmetry)
    estimated = stream.count * m
    if estimated > budget:
        raise BudgetExceededError(
            f"enumeration needs about {estimated} work units, budget is {budget}",
            estimated=estimated,
            budget=budget,
        )
    token = _policy_token(policy)
    cache_key = None
    if token is not None:
        cache_key = (m, n, token, _scoring_token(g), reduce_symmetry)
        cached = _aggregate_cache.get(cache_key)
        if cached is not None:
            return cached
    if jobs > 1 and token is not None and stream.count > 4 * jobs:
        chunks = stream.partition(jobs * 4)
        tasks = [
            (m, n, token, _scoring_token(g), reduce_symmetry, c.lo, c.hi) for c in chunks
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_compute_chunk, tasks))
        result = _merge_stats(parts)
    else:
        result = _merge_stats([_stats_for_chunk(stream.iter_order_rows(), policy, g, m, n)])
    if cache_key is not None:
        _aggregate_cache[cache_key] = result
    return result


# ---------------------------------------------------------------------------
# Quotient pass: identical statistics for agent-symmetric scalars, folding
# together profiles that differ only by permuting agents 2..n.  Sound only
# for policies that never mention agent identities; used for the expensive
# utilitarian table cells and pinned to the plain pass by tests.


def _multiset_weight(combo: tuple[int, ...]) -> int:
    weight = math.factorial(len(combo))
    for _, group in itertools.groupby(combo):
        weight //= math.factorial(sum(1 for _ in group))
    return weight


def _symmetric_chunk(task):
    m, n, scoring_token, lo, hi = task
    g = _scoring_from_token(scoring_token)
    int_row, denom = g.integer_row(m)
    scale = math.lcm(*range(1, n + 1))
    perms = _all_perms(m)
    fixed = tuple(range(1, m + 1))
    count = 0
    sum_total_hat = 0
    sum_min_hat = 0
    sum_min_under = 0
    min_min_under: int | None = None
    min_min_hat: int | None = None
    for lead in range(lo, hi):
        for rest in itertools.combinations_with_replacement(range(lead, len(perms)), n - 2):
            combo = (lead,) + rest
            weight = _multiset_weight(combo)
            orders = (fixed,) + tuple(perms[i] for i in combo)
            hat, under = all_reporting_values_scaled(orders, int_row, scale)
            count += weight
            sum_total_hat += sum(hat) * weight
            mh = min(hat)
            mu = min(under)
            sum_min_hat += mh * weight
            sum_min_under += mu * weight
            if min_min_hat is None or mh < min_min_hat:
                min_min_hat = mh
            if min_min_under is None or mu < min_min_under:
                min_min_under = mu
    if count == 0:
        return None
    full_scale = scale * denom
    return (
        count,
        Fraction(sum_total_hat, full_scale),
        Fraction(sum_min_hat, full_scale),
        Fraction(sum_min_under, full_scale),
        Fraction(min_min_hat, full_scale),
        Fraction(min_min_under, full_scale),
    )


@dataclass(frozen=True)
class SymmetricAggregates:
    """Agent-symmetric statistics from the quotient pass."""

    total_weight: int
    sum_total_hat: Fraction
    sum_min_hat: Fraction
    sum_min_under: Fraction
    min_min_hat: Fraction
    min_min_under: Fraction


_symmetric_cache: dict = {}


def symmetric_aggregates(
    policy: ParallelPolicy,
    g: ScoringSpec,
    m: int,
    n: int,
    jobs: int = 1,
    budget_units: int | None = None,
) -> SymmetricAggregates:
    if not isinstance(policy, AllReporting):
        raise ValueError("quotient pass only applies to identity-insensitive stage policies")
    if n < 2:
        raise ValueError("quotient pass needs at least two agents")
    budget = budget_units if budget_units is not None else resolve_budget_units()
    perm_count = math.factorial(m)
    items = math.comb(perm_count + n - 2, n - 1)
    estimated = items * m
    if estimated > budget:
        raise BudgetExceededError(
            f"enumeration needs about {estimated} work units, budget is {budget}",
            estimated=estimated,
            budget=budget,
        )
    key = (m, n, _policy_token(policy), _scoring_token(g))
    cached = _symmetric_cache.get(key)
    if cached is not None:
        return cached
    if jobs > 1 and perm_count > jobs:
        bounds = [(perm_count * k) // (jobs * 4) for k in range(jobs * 4 + 1)]
        tasks = [
            (m, n, _scoring_token(g), a, b) for a, b in zip(bounds, bounds[1:]) if b > a
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = [p for p in pool.map(_symmetric_chunk, tasks) if p is not None]
    else:
        parts = [_symmetric_chunk((m, n, _scoring_token(g), 0, perm_count))]
        parts = [p for p in parts if p is not None]
    count = sum(p[0] for p in parts)
    result = SymmetricAggregates(
        count * math.factorial(m),
        sum(p[1] for p in parts) * math.factorial(m),
        sum(p[2] for p in parts) * math.factorial(m),
        sum(p[3] for p in parts) * math.factorial(m),
        min(p[4] for p in parts),
        min(p[5] for p in parts),
    )
    _symmetric_cache[key] = result
    return result


# ---------------------------------------------------------------------------
# Criterion evaluation


def agent_value(
    agent: int,
    y: str,
    z: str,
    policy: ParallelPolicy,
    g: ScoringSpec,
    m: int,
    n: int,
    reduce_symmetry: bool = True,
    jobs: int = 1,
    budget_units: int | None = None,
) -> Fraction:
    """One agent's value of a policy: mean (y='u') or worst case (y='e') over
    all profiles of her expected (z='u') or guaranteed (z='e') utility."""
    if not 1 <= agent <= n:
        raise ValueError(f"agent {agent} out of range 1..{n}")
    stats = profile_aggregates(policy, g, m, n, reduce_symmetry, jobs, budget_units)
    values = stats.expected(z) if y == "u" else stats.minimum(z)
    return values[agent - 1]


def social_welfare(
    criterion: WelfareCriterion,
    policy: ParallelPolicy,
    g: ScoringSpec,
    m: int,
    n: int,
    reduce_symmetry: bool = True,
    jobs: int = 1,
    budget_units: int | None = None,
) -> Fraction:
    """Compositional social welfare sw(x, y, z) of a policy."""
    if criterion.mode != "comp":
        raise ValueError("social_welfare expects a compositional criterion")
    stats = profile_aggregates(policy, g, m, n, reduce_symmetry, jobs, budget_units)
    values = stats.expected(criterion.z) if criterion.y == "u" else stats.minimum(criterion.z)
    if criterion.x == "u":
        return sum(values, Fraction(0))
    return min(values)


def expected_min_welfare(
    z: str,
    policy: ParallelPolicy,
    g: ScoringSpec,
    m: int,
    n: int,
    reduce_symmetry: bool = True,
    jobs: int = 1,
    budget_units: int | None = None,
) -> Fraction:
    """Mean over profiles of the per-profile minimum across agents."""
    stats = profile_aggregates(policy, g, m, n, reduce_symmetry, jobs, budget_units)
    return stats.expected_min(z)


def evaluate_criterion(
    criterion: WelfareCriterion,
    policy: ParallelPolicy,
    g: ScoringSpec,
    m: int,
    n: int,
    reduce_symmetry: bool = True,
    jobs: int = 1,
    budget_units: int | None = None,
) -> Fraction:
    if criterion.mode == "comp":
        return social_welfare(criterion, policy, g, m, n, reduce_symmetry, jobs, budget_units)
    return expected_min_welfare(criterion.z, policy, g, m, n, reduce_symmetry, jobs, budget_units)


def profile_utilities(
    policy: ParallelPolicy, profile: Profile, g: ScoringSpec
) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Per-agent (expected, guaranteed) utilities of one profile."""
    structure = build_structure(policy, profile)
    return lottery_expected_utilities(structure, g), guaranteed_utilities(structure, g)


def per_profile_welfare(
    x: str, z: str, policy: ParallelPolicy, profile: Profile, g: ScoringSpec
) -> Fraction:
    """Single-profile welfare, aggregating only the agent and lottery axes.

    This is the fixed-profile counterpart of sw(x, y, z); the profile axis is
    pinned to the given profile instead of being aggregated.
    """
    hat, under = profile_utilities(policy, profile, g)
    values = hat if z == "u" else under
    if x == "u":
        return sum(values, Fraction(0))
    return min(values)


# ---------------------------------------------------------------------------
# Comparison tables


@dataclass(frozen=True)
class TableRow:
    table_id: int
    m: int
    n: int
    policy_star: SequentialPolicy | None
    value_star: Fraction | None
    value_all_reporting: Fraction | None
    status: str = "ok"


@dataclass(frozen=True)
class TableSpec:
    criterion: WelfareCriterion
    scoring: str  # "borda" | "lex"
    cells: tuple[tuple[int, int], ...]


def _cells(ranges: dict[int, range]) -> tuple[tuple[int, int], ...]:
    return tuple((m, n) for n, ms in ranges.items() for m in ms)


TABLE_SPECS: dict[int, TableSpec] = {
    1: TableSpec(
        WelfareCriterion.compositional("u", "u", "u"),
        "borda",
        _cells({2: range(4, 11), 3: range(4, 9), 4: range(4, 7)}),
    ),
    2: TableSpec(
        WelfareCriterion.compositional("u", "u", "u"),
        "lex",
        _cells({2: range(4, 11), 3: range(4, 9), 4: range(4, 7)}),
    ),
    3: TableSpec(
        WelfareCriterion.compositional("e", "u", "u"),
        "borda",
        _cells({2: range(4, 11), 3: range(4, 9), 4: range(4, 7)}),
    ),
    4: TableSpec(
        WelfareCriterion.compositional("e", "u", "u"),
        "lex",
        _cells({2: range(4, 11), 3: range(4, 9), 4: range(4, 7)}),
    ),
    5: TableSpec(
        WelfareCriterion.expected_min("u"),
        "borda",
        _cells({2: range(2, 9)}),
    ),
}


def optimal_sequential_expected_min(
    m: int,
    n: int,
    g: ScoringSpec,
    jobs: int = 1,
    budget_units: int | None = None,
) -> tuple[SequentialPolicy, Fraction]:
    """Argmax of the expected per-profile minimum utility over all turn
    sequences (canonical representatives, lexicographic tie-break)."""
    budget = budget_units if budget_units is not None else resolve_budget_units()
    items = math.factorial(m) ** (n - 1)
    estimated = n**m * items * m
    if estimated > budget:
        raise BudgetExceededError(
            f"search needs about {estimated} work units, budget is {budget}",
            estimated=estimated,
            budget=budget,
        )
    best: tuple[Fraction, tuple[int, ...]] | None = None
    for turns in canonical_turn_sequences(m, n):
        policy = FromSequential(SequentialPolicy(turns))
        value = expected_min_welfare("u", policy, g, m, n, jobs=jobs, budget_units=budget)
        if best is None or value > best[0]:
            best = (value, turns)
    assert best is not None
    return SequentialPolicy(best[1]), best[0]


def _scoring_for(table: TableSpec) -> ScoringSpec:
    return ScoringSpec.borda() if table.scoring == "borda" else ScoringSpec.lexicographic()


def _all_reporting_value(
    criterion: WelfareCriterion, g: ScoringSpec, m: int, n: int, jobs: int, budget_units
) -> Fraction:
    """All-reporting column value; routes agent-symmetric scalars through the
    quotient pass when that is cheaper."""
    symmetric = criterion.mode == "emin" or (criterion.mode == "comp" and criterion.y == "u" and criterion.x == "u")
    if symmetric and n >= 3:
        stats = symmetric_aggregates(AllReporting(), g, m, n, jobs, budget_units)
        if criterion.mode == "emin":
            total = stats.sum_min_hat if criterion.z == "u" else stats.sum_min_under
            return total / stats.total_weight
        if criterion.z == "u":
            return stats.sum_total_hat / stats.total_weight
    return evaluate_criterion(criterion, AllReporting(), g, m, n, jobs=jobs, budget_units=budget_units)


def reproduce_table(
    table_id: int,
    max_m: int | None = None,
    max_n: int | None = None,
    cells: Sequence[tuple[int, int]] | None = None,
    jobs: int = 1,
    budget_units: int | None = None,
) -> list[TableRow]:
    """Recompute one comparison table: per cell, the optimal turn sequence
    under the table's criterion next to the all-reporting policy's value.

    Cells whose deterministic work estimate exceeds the budget are emitted
    with status ``timeout`` instead of aborting the run.
    """
    if table_id not in TABLE_SPECS:
        raise ValueError(f"unknown table id {table_id}")
    table = TABLE_SPECS[table_id]
    g = _scoring_for(table)
    wanted = cells if cells is not None else table.cells
    rows: list[TableRow] = []
    for m, n in wanted:
        if cells is None:
            if max_m is not None and m > max_m:
                continue
            if max_n is not None and n > max_n:
                continue
        try:
            if table.criterion.mode == "emin":
                pi_star, value_star = optimal_sequential_expected_min(
                    m, n, g, jobs=jobs, budget_units=budget_units
                )
            else:
                aggregator = Aggregator.UTILITARIAN if table.criterion.x == "u" else Aggregator.EGALITARIAN
                pi_star, value_star = optimal_sequential(m, n, g, aggregator)
            value_all = _all_reporting_value(table.criterion, g, m, n, jobs, budget_units)
            rows.append(TableRow(table_id, m, n, pi_star, value_star, value_all))
        except BudgetExceededError:
            rows.append(TableRow(table_id, m, n, None, None, None, status="timeout"))
    return rows
