import pytest

from allocsim.model import Profile, Ranking, ScoringSpec


@pytest.fixture
def example_profile() -> Profile:
    """The worked m=5, n=3 profile used across the suite."""
    return Profile(
        (
            Ranking((1, 2, 3, 4, 5)),
            Ranking((4, 2, 5, 1, 3)),
            Ranking((1, 3, 5, 4, 2)),
        )
    )


@pytest.fixture
def borda() -> ScoringSpec:
    return ScoringSpec.borda()


@pytest.fixture
def lex() -> ScoringSpec:
    return ScoringSpec.lexicographic()
