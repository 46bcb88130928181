"""
Shared fixtures: the three hand-solved one-period games, a depth-2 binary
tree, small seeded corpora and the acceptance-size corpora of the slow suite
"""

from fractions import Fraction

import pytest

from dynkin_games.generator import generate_games
from dynkin_games.models import DynkinGame, FiltrationTree

HALF = Fraction(1, 2)


def one_period_game(x, y, z, leaves=(0, 4), name=None) -> DynkinGame:
    """Root n0 with payoffs (x, y, z) over two equiprobable leaves n1, n2"""
    tree = FiltrationTree.from_edges(
        {'n0': 0, 'n1': 1, 'n2': 1},
        [('n0', 'n1', HALF), ('n0', 'n2', HALF)],
    )
    low, high = leaves
    return DynkinGame.create(
        tree,
        x={'n0': x},
        y={'n0': y},
        z={'n0': z, 'n1': low, 'n2': high},
        name=name,
    )


@pytest.fixture
def case_a():
    return one_period_game(1, 5, 3, name='case A')


@pytest.fixture
def case_b():
    return one_period_game(5, 1, 3, name='case B')


@pytest.fixture
def case_c():
    return one_period_game(5, 4, 0, name='case C')


@pytest.fixture
def binary_tree():
    """Root, two middle nodes, four leaves; all branches 1/2"""
    times = {'r': 0, 'a': 1, 'b': 1, 'aa': 2, 'ab': 2, 'ba': 2, 'bb': 2}
    edges = [
        ('r', 'a', HALF), ('r', 'b', HALF),
        ('a', 'aa', HALF), ('a', 'ab', HALF),
        ('b', 'ba', HALF), ('b', 'bb', HALF),
    ]
    return FiltrationTree.from_edges(times, edges)


@pytest.fixture
def binary_game(binary_tree):
    x = {'r': 2, 'a': 6, 'b': -1}
    y = {'r': 7, 'a': 1, 'b': 3}
    z = {'r': 0, 'a': 4, 'b': 5, 'aa': 3, 'ab': -2, 'ba': 8, 'bb': 1}
    return DynkinGame.create(binary_tree, x, y, z, name='binary')


def corpus(mode, count, seed=7, depth=3, branching=2, cap=2000):
    return generate_games(seed, depth=depth, branching=branching, count=count, mode=mode, cap=cap)


@pytest.fixture(scope='session')
def general_corpus():
    return corpus('general', 60)


@pytest.fixture(scope='session')
def standard_corpus():
    return corpus('standard', 40, seed=11)


@pytest.fixture(scope='session')
def z_equals_y_corpus():
    return corpus('z-equals-y', 40, seed=13)


@pytest.fixture(scope='session')
def z_between_corpus():
    return corpus('z-between', 40, seed=17)


# Acceptance-size corpora; only built when a slow test asks for them
ACCEPTANCE_CAP = 200


def acceptance_corpus(mode, count, seed):
    return corpus(mode, count, seed=seed, depth=4, branching=3, cap=ACCEPTANCE_CAP)


@pytest.fixture(scope='session')
def acceptance_general_corpus():
    return acceptance_corpus('general', 1000, seed=2024)


@pytest.fixture(scope='session')
def acceptance_standard_corpus():
    return acceptance_corpus('standard', 500, seed=2025)


@pytest.fixture(scope='session')
def acceptance_z_equals_y_corpus():
    return acceptance_corpus('z-equals-y', 500, seed=2026)


@pytest.fixture(scope='session')
def acceptance_z_between_corpus():
    return acceptance_corpus('z-between', 100, seed=2027)
