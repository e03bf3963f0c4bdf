import itertools
import math
from fractions import Fraction

import pytest

from allocsim.errors import ProfileParseError
from allocsim.model import (
    Profile,
    Ranking,
    ScoringSpec,
    enumerate_profiles,
    identity_ranking,
    is_convex,
    parse_profile_text,
    parse_scoring_text,
    rank_of,
    score,
)


class TestRanking:
    def test_rank_of_identity(self):
        r = identity_ranking(5)
        assert rank_of(r, 3) == 3

    def test_rank_of_example_agent2(self):
        r = Ranking((4, 2, 5, 1, 3))
        assert rank_of(r, 2) == 2
        assert rank_of(r, 3) == 5

    def test_rank_of_out_of_range(self):
        r = identity_ranking(3)
        with pytest.raises(ValueError):
            rank_of(r, 0)
        with pytest.raises(ValueError):
            rank_of(r, 4)

    def test_not_a_permutation(self):
        with pytest.raises(ValueError):
            Ranking((1, 1, 2))
        with pytest.raises(ValueError):
            Ranking((2, 3))

    @pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
    def test_rank_of_is_bijection(self, m):
        for perm in itertools.permutations(range(1, m + 1)):
            r = Ranking(perm)
            assert sorted(r.rank_of(o) for o in range(1, m + 1)) == list(range(1, m + 1))

    def test_best_of(self):
        r = Ranking((4, 2, 5, 1, 3))
        assert r.best_of([1, 2, 3, 4, 5]) == 4
        assert r.best_of({3, 5}) == 5
        with pytest.raises(ValueError):
            r.best_of([])


class TestScoring:
    def test_borda_top(self):
        assert score(ScoringSpec.borda(), 1, 5) == 5

    def test_lex_bottom(self):
        assert score(ScoringSpec.lexicographic(), 5, 5) == 1

    @pytest.mark.parametrize("m", range(1, 8))
    def test_borda_last_rank_is_one(self, m):
        assert score(ScoringSpec.borda(), m, m) == 1

    def test_rank_out_of_range(self):
        with pytest.raises(ValueError):
            score(ScoringSpec.borda(), 0, 4)
        with pytest.raises(ValueError):
            score(ScoringSpec.borda(), 5, 4)

    @pytest.mark.parametrize("m", range(1, 11))
    @pytest.mark.parametrize("kind", ["borda", "lex"])
    def test_non_increasing(self, kind, m):
        g = ScoringSpec(kind)
        row = [score(g, k, m) for k in range(1, m + 1)]
        assert all(a >= b for a, b in zip(row, row[1:]))
        assert all(v > 0 for v in row)

    @pytest.mark.parametrize("m", range(1, 11))
    @pytest.mark.parametrize("kind", ["borda", "lex"])
    def test_builtin_convex(self, kind, m):
        assert is_convex(ScoringSpec(kind), m)

    def test_custom_non_convex(self):
        # differences 1 then 2 increase with rank
        g = ScoringSpec.custom([4, 3, 1])
        assert not is_convex(g, 3)

    def test_custom_convex_table(self):
        assert is_convex(ScoringSpec.custom([Fraction(7, 2), 2, 1]), 3)

    def test_custom_rejects_zero_and_negative(self):
        with pytest.raises(ValueError):
            ScoringSpec.custom([3, 2, 0])
        with pytest.raises(ValueError):
            ScoringSpec.custom([3, -1, 1])

    def test_custom_rejects_increasing(self):
        with pytest.raises(ValueError):
            ScoringSpec.custom([1, 2, 3])

    def test_custom_length_must_match_m(self):
        g = ScoringSpec.custom([3, 2, 1])
        with pytest.raises(ValueError):
            score(g, 1, 4)

    def test_integer_row_clears_denominators(self):
        g = ScoringSpec.custom([Fraction(3, 2), Fraction(2, 3), Fraction(1, 6)])
        row, denom = g.integer_row(3)
        assert denom == 6
        assert row == (0, 9, 4, 1)


class TestEnumeration:
    def test_counts_2_2(self):
        stream = enumerate_profiles(2, 2, reduce_symmetry=False)
        items = list(stream)
        assert len(items) == 4
        assert all(w == 1 for _, w in items)
        assert stream.total_weight == 4

    def test_counts_3_2(self):
        assert enumerate_profiles(3, 2, reduce_symmetry=False).count == 36

    def test_counts_reduced_5_3(self):
        stream = enumerate_profiles(5, 3, reduce_symmetry=True)
        assert stream.count == 14400
        assert stream.item_weight == 120
        assert stream.total_weight == 120**3

    def test_zero_sizes_rejected(self):
        with pytest.raises(ValueError):
            enumerate_profiles(0, 2, False)
        with pytest.raises(ValueError):
            enumerate_profiles(2, 0, False)

    def test_reduced_fixes_agent_one(self):
        for profile, w in enumerate_profiles(3, 2, reduce_symmetry=True):
            assert profile.rankings[0].order == (1, 2, 3)
            assert w == 6

    def test_lexicographic_order_and_distinct(self):
        seen = [p.order_rows() for p, _ in enumerate_profiles(3, 2, False)]
        assert len(set(seen)) == 36
        assert seen == sorted(seen)

    def test_partition_covers_stream(self):
        stream = enumerate_profiles(3, 2, reduce_symmetry=False)
        whole = [p.order_rows() for p, _ in stream]
        for parts in (1, 2, 4, 5):
            chunks = stream.partition(parts)
            assert sum(c.count for c in chunks) == stream.count
            glued = [p.order_rows() for c in chunks for p, _ in c]
            assert glued == whole

    def test_partition_weighted_sum_invariant(self):
        stream = enumerate_profiles(3, 3, reduce_symmetry=True)
        total = sum(w * p.rankings[2].rank_of(1) for p, w in stream)
        for parts in (2, 3):
            split = sum(
                w * p.rankings[2].rank_of(1)
                for c in stream.partition(parts)
                for p, w in c
            )
            assert split == total


class TestParsing:
    def test_profile_round_trip(self, example_profile):
        text = "1 2 3 4 5\n4 2 5 1 3\n1 3 5 4 2\n"
        assert parse_profile_text(text) == example_profile

    def test_profile_skips_comments_and_blanks(self):
        text = "# agents\n\n1 2\n2 1\n"
        assert parse_profile_text(text).n == 2

    def test_profile_error_carries_line_number(self):
        with pytest.raises(ProfileParseError) as err:
            parse_profile_text("1 2 3\n3 oops 1\n")
        assert err.value.line == 2

    def test_profile_bad_permutation(self):
        with pytest.raises(ProfileParseError):
            parse_profile_text("1 2 3\n1 1 3\n")

    def test_profile_mismatched_lengths(self):
        with pytest.raises(ValueError):
            parse_profile_text("1 2 3\n2 1\n")

    def test_scoring_text(self):
        g = parse_scoring_text("3 3/2 0.5")
        assert g.table == (Fraction(3), Fraction(3, 2), Fraction(1, 2))

    def test_scoring_text_rejects_zero(self):
        with pytest.raises(ProfileParseError):
            parse_scoring_text("2 1 0")
