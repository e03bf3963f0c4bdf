import itertools
from fractions import Fraction

import pytest

from allocsim.errors import BudgetExceededError
from allocsim.model import Profile, Ranking, ScoringSpec, identity_ranking
from allocsim.parallel import AllReporting, FromSequential, LoserReporting
from allocsim.sequential import (
    Aggregator,
    SequentialPolicy,
    expected_welfare_sequential,
    optimal_sequential,
)
from allocsim.welfare import (
    WelfareCriterion,
    agent_value,
    evaluate_criterion,
    expected_min_welfare,
    optimal_sequential_expected_min,
    parse_criterion,
    per_profile_welfare,
    profile_aggregates,
    reproduce_table,
    social_welfare,
    symmetric_aggregates,
)

MILLI = Fraction(1, 1000)


def close(value, printed, tol=MILLI):
    return abs(value - Fraction(str(printed))) <= tol


class TestCriterionParsing:
    def test_compositional(self):
        c = parse_criterion("ueu")
        assert (c.mode, c.x, c.y, c.z) == ("comp", "u", "e", "u")
        assert c.literal() == "ueu"

    def test_expected_min(self):
        c = parse_criterion("em-e")
        assert (c.mode, c.z) == ("emin", "e")
        assert c.literal() == "em-e"

    def test_invalid(self):
        with pytest.raises(ValueError):
            parse_criterion("uu")
        with pytest.raises(ValueError):
            parse_criterion("uux")
        with pytest.raises(ValueError):
            parse_criterion("em-x")


class TestAgentValue:
    def test_mean_expected_all_reporting(self, borda):
        value = agent_value(1, "u", "u", AllReporting(), borda, 5, 3)
        assert close(3 * value, "20.382")

    def test_worst_profile_two_by_two(self, borda):
        assert agent_value(1, "e", "u", AllReporting(), borda, 2, 2) == Fraction(3, 2)

    def test_sequential_embedding_matches_expectation(self, borda):
        pi = SequentialPolicy((1, 2, 3, 3, 2))
        value = agent_value(1, "u", "u", FromSequential(pi), borda, 5, 3)
        assert value == 5

    def test_agent_validation(self, borda):
        with pytest.raises(ValueError):
            agent_value(0, "u", "u", AllReporting(), borda, 2, 2)
        with pytest.raises(ValueError):
            agent_value(3, "u", "u", AllReporting(), borda, 2, 2)


class TestSocialWelfare:
    def test_utilitarian_all_reporting(self, borda):
        value = social_welfare(parse_criterion("uuu"), AllReporting(), borda, 5, 3)
        assert close(value, "20.382")

    def test_egalitarian_all_reporting(self, borda):
        value = social_welfare(parse_criterion("euu"), AllReporting(), borda, 4, 2)
        assert close(value, "6.146")

    def test_global_min_loser_reporting(self, lex):
        # The worst guaranteed utility over every profile and agent: a chain
        # of lost lotteries can push an agent down to her rank-n object but
        # no further, so the value is the rank-3 lexicographic score, 4.
        value = social_welfare(parse_criterion("eee"), LoserReporting(), lex, 5, 3)
        assert value == 4

    def test_rejects_expected_min_criterion(self, borda):
        with pytest.raises(ValueError):
            social_welfare(parse_criterion("em-u"), AllReporting(), borda, 2, 2)

    def test_budget_refusal(self, borda):
        with pytest.raises(BudgetExceededError):
            social_welfare(parse_criterion("uuu"), AllReporting(), borda, 9, 3)


class TestPerProfileWelfare:
    def test_fixed_profile_guaranteed_min(self, example_profile, lex):
        # min over agents of the guaranteed utilities (8, 16, 12)
        value = per_profile_welfare("e", "e", LoserReporting(), example_profile, lex)
        assert value == 8

    def test_fixed_profile_expected_sum(self, example_profile, borda):
        value = per_profile_welfare("u", "u", AllReporting(), example_profile, borda)
        assert value == Fraction(29, 6) + 8 + Fraction(15, 2)


class TestExpectedMin:
    def test_all_reporting_two_objects(self, borda):
        assert expected_min_welfare("u", AllReporting(), borda, 2, 2) == Fraction(7, 4)

    def test_alternating_two_objects(self, borda):
        policy = FromSequential(SequentialPolicy((1, 2)))
        assert expected_min_welfare("u", policy, borda, 2, 2) == Fraction(3, 2)

    def test_three_objects(self, borda):
        policy = FromSequential(SequentialPolicy((1, 2, 2)))
        assert expected_min_welfare("u", policy, borda, 3, 2) == 3

    def test_reduction_is_exact(self, borda):
        for m, n in [(2, 2), (3, 2), (3, 3)]:
            policy = FromSequential(SequentialPolicy(tuple((k % n) + 1 for k in range(m))))
            reduced = expected_min_welfare("u", policy, borda, m, n, reduce_symmetry=True)
            full = expected_min_welfare("u", policy, borda, m, n, reduce_symmetry=False)
            assert reduced == full


class TestIdentityInsensitivity:
    @pytest.mark.parametrize("policy_cls", [AllReporting, LoserReporting])
    @pytest.mark.parametrize("kind", ["borda", "lex"])
    def test_per_agent_values_equal_small(self, policy_cls, kind):
        g = ScoringSpec(kind)
        for m, n in [(2, 2), (3, 2), (3, 3)]:
            stats = profile_aggregates(policy_cls(), g, m, n)
            for z in ("u", "e"):
                expected = stats.expected(z)
                minimum = stats.minimum(z)
                assert len(set(expected)) == 1
                assert len(set(minimum)) == 1
                for y, values in (("u", expected), ("e", minimum)):
                    total = sum(values, Fraction(0))
                    assert total == n * min(values)


class TestSequentialEmbeddingConsistency:
    @pytest.mark.parametrize("m,n", [(2, 2), (3, 2), (3, 3)])
    def test_welfare_of_embedding_equals_sequential(self, borda, m, n):
        for turns in itertools.product(range(1, n + 1), repeat=m):
            pi = SequentialPolicy(turns)
            policy = FromSequential(pi)
            util = social_welfare(parse_criterion("uuu"), policy, borda, m, n)
            egal = social_welfare(parse_criterion("euu"), policy, borda, m, n)
            assert util == expected_welfare_sequential(pi, borda, Aggregator.UTILITARIAN, n=n)
            assert egal == expected_welfare_sequential(pi, borda, Aggregator.EGALITARIAN, n=n)

    def test_spot_check_larger(self, borda):
        pi = SequentialPolicy((1, 2, 3, 1))
        value = social_welfare(parse_criterion("uuu"), FromSequential(pi), borda, 4, 3)
        assert value == expected_welfare_sequential(pi, borda, Aggregator.UTILITARIAN, n=3)


class TestQuotientPass:
    @pytest.mark.parametrize("kind", ["borda", "lex"])
    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_matches_plain_pass(self, kind, m):
        g = ScoringSpec(kind)
        sym = symmetric_aggregates(AllReporting(), g, m, 3)
        plain = profile_aggregates(AllReporting(), g, m, 3)
        assert sym.total_weight == plain.total_weight
        assert sym.sum_total_hat == sum(plain.sum_hat)
        assert sym.sum_min_hat == plain.sum_min_hat
        assert sym.sum_min_under == plain.sum_min_under
        assert sym.min_min_hat == min(plain.min_hat)
        assert sym.min_min_under == min(plain.min_under)


class TestSymmetrySoundness:
    @pytest.mark.parametrize("kind", ["borda", "lex"])
    @pytest.mark.parametrize("policy_literal", ["all", "loser", "seq"])
    def test_reduced_equals_full(self, kind, policy_literal):
        g = ScoringSpec(kind)
        for m, n in [(2, 2), (3, 2), (3, 3)]:
            if policy_literal == "seq":
                policy = FromSequential(SequentialPolicy(tuple((k % n) + 1 for k in range(m))))
            elif policy_literal == "all":
                policy = AllReporting()
            else:
                policy = LoserReporting()
            reduced = profile_aggregates(policy, g, m, n, reduce_symmetry=True)
            full = profile_aggregates(policy, g, m, n, reduce_symmetry=False)
            for z in ("u", "e"):
                assert reduced.expected(z) == full.expected(z)
                assert reduced.minimum(z) == full.minimum(z)
                assert reduced.expected_min(z) == full.expected_min(z)


class TestAllReportingDominance:
    def test_utilitarian_parity_two_agents(self, borda, lex):
        # Empirically the all-reporting value coincides with the optimal
        # sequence for two agents and strictly exceeds it for three.
        for g in (borda, lex):
            for m in (4, 5):
                _, star = optimal_sequential(m, 2, g, Aggregator.UTILITARIAN)
                value_all = social_welfare(parse_criterion("uuu"), AllReporting(), g, m, 2)
                assert value_all == star

    def test_utilitarian_strictly_better_three_agents(self, borda):
        for m in (4, 5):
            _, star = optimal_sequential(m, 3, borda, Aggregator.UTILITARIAN)
            value_all = social_welfare(parse_criterion("uuu"), AllReporting(), borda, m, 3)
            assert value_all > star

    def test_egalitarian_strictly_better(self, borda):
        for m, n in [(4, 2), (5, 2), (4, 3)]:
            _, star = optimal_sequential(m, n, borda, Aggregator.EGALITARIAN)
            value_all = social_welfare(parse_criterion("euu"), AllReporting(), borda, m, n)
            assert value_all > star


class TestTables:
    def test_table_one_small_cells(self):
        rows = reproduce_table(1, cells=[(4, 2), (5, 2), (6, 2)])
        for row, printed in zip(rows, ("12.292", "18.625", "26.396")):
            assert close(row.value_star, printed)
            assert close(row.value_all_reporting, printed)
            assert row.status == "ok"

    def test_table_two_cell(self):
        (row,) = reproduce_table(2, cells=[(4, 3)])
        assert close(row.value_star, "23.000")
        assert close(row.value_all_reporting, "23.460")

    def test_table_four_cell(self):
        (row,) = reproduce_table(4, cells=[(5, 3)])
        assert close(row.value_star, "16.000")
        assert close(row.value_all_reporting, "17.676")

    def test_table_five_rows(self):
        rows = reproduce_table(5, max_m=4)
        expected = [("12", "1.500", "1.750"), ("122", "3.000", "3.500"), ("1221", "5.667", "5.958")]
        assert len(rows) == 3
        for row, (pi, star, all_value) in zip(rows, expected):
            assert row.policy_star.literal() == pi
            assert close(row.value_star, star)
            assert close(row.value_all_reporting, all_value)

    def test_timeout_cells_reported_not_fatal(self):
        rows = reproduce_table(1, cells=[(4, 2), (8, 3)], budget_units=10_000)
        assert rows[0].status == "ok"
        assert rows[1].status == "timeout"
        assert rows[1].value_star is None

    def test_unknown_table(self):
        with pytest.raises(ValueError):
            reproduce_table(7)

    def test_expected_min_search_small(self, borda):
        pi, value = optimal_sequential_expected_min(2, 2, borda)
        assert pi.turns == (1, 2)
        assert value == Fraction(3, 2)


class TestEvaluateCriterion:
    def test_dispatches_both_modes(self, borda):
        policy = AllReporting()
        assert evaluate_criterion(parse_criterion("uuu"), policy, borda, 2, 2) == social_welfare(
            parse_criterion("uuu"), policy, borda, 2, 2
        )
        assert evaluate_criterion(parse_criterion("em-u"), policy, borda, 2, 2) == Fraction(7, 4)
