"""
Seeded random games for property runs and the generate command
"""

import logging
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .config import (
    ENUMERATION_CAP,
    MAX_GENERATED_BRANCHING,
    MAX_GENERATED_DEPTH,
    NODE_BUDGET,
    PAYOFF_RANGE,
)
from .exceptions import BudgetExceeded, EnumerationCapExceeded
from .models import RATIONAL, Arithmetic, DynkinGame, FiltrationTree
from .solver import z_equal_y_game
from .tree import count_stopping_times

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 1000


class GeneratorMode(str, Enum):
    STANDARD = 'standard'
    GENERAL = 'general'
    Z_BETWEEN = 'z-between'
    Z_EQUALS_Y = 'z-equals-y'


def _check_budget(depth: int, branching: int):
    if depth < 1 or branching < 1:
        raise BudgetExceeded(NODE_BUDGET, 0, what=f"depth {depth} and branching {branching} (both must be >= 1)")
    largest = sum(branching ** t for t in range(depth + 1))
    if largest > NODE_BUDGET:
        raise BudgetExceeded(NODE_BUDGET, largest)


def random_tree(rng: np.random.Generator, depth: int, branching: int,
                arithmetic: Arithmetic = RATIONAL) -> FiltrationTree:
    """Tree with horizon in [1, depth] and 1..branching children per internal node"""
    horizon = int(rng.integers(1, depth + 1))
    times: Dict[str, int] = {'n0': 0}
    edges: List[Tuple[str, str, object]] = []
    frontier = ['n0']
    for t in range(1, horizon + 1):
        next_frontier = []
        for parent in frontier:
            width = int(rng.integers(1, branching + 1))
            weights = [int(w) for w in rng.integers(1, 5, size=width)]
            total = sum(weights)
            for weight in weights:
                child = f"n{len(times)}"
                times[child] = t
                probability = f"{weight}/{total}" if arithmetic.exact else weight / total
                edges.append((parent, child, probability))
                next_frontier.append(child)
        frontier = next_frontier
    return FiltrationTree.from_edges(times, edges, arithmetic=arithmetic)


def _draw(rng: np.random.Generator) -> int:
    low, high = PAYOFF_RANGE
    return int(rng.integers(low, high + 1))


def random_payoffs(rng: np.random.Generator, tree: FiltrationTree,
                   mode: GeneratorMode) -> Tuple[Dict[str, int], Dict[str, int], Dict[str, int]]:
    x: Dict[str, int] = {}
    y: Dict[str, int] = {}
    z: Dict[str, int] = {}
    for node in tree.order:
        if tree.is_leaf(node):
            x[node] = y[node] = z[node] = _draw(rng)
            continue
        a, b, c = _draw(rng), _draw(rng), _draw(rng)
        if mode == GeneratorMode.STANDARD:
            a, c, b = sorted((a, b, c))
        elif mode == GeneratorMode.Z_BETWEEN:
            c = min(max(c, min(a, b)), max(a, b))
        x[node], y[node], z[node] = a, b, c
    return x, y, z


def random_game(rng: np.random.Generator, depth: int = MAX_GENERATED_DEPTH,
                branching: int = MAX_GENERATED_BRANCHING,
                mode: Union[GeneratorMode, str] = GeneratorMode.GENERAL,
                arithmetic: Arithmetic = RATIONAL, cap: Optional[int] = None,
                name: Optional[str] = None) -> DynkinGame:
    """
    One random game whose stopping times can be enumerated within cap

    Trees with too many stopping times are redrawn from the same generator.
    """
    mode = GeneratorMode(mode)
    cap = ENUMERATION_CAP if cap is None else cap
    _check_budget(depth, branching)
    for attempt in range(MAX_ATTEMPTS):
        tree = random_tree(rng, depth, branching, arithmetic)
        count = count_stopping_times(tree, distinct=True)
        if count <= cap:
            break
        logger.debug(f"Redrawing tree with {count} stopping times (attempt {attempt + 1})")
    else:
        raise EnumerationCapExceeded(cap, count)
    x, y, z = random_payoffs(rng, tree, mode)
    if mode == GeneratorMode.Z_EQUALS_Y:
        return z_equal_y_game(tree, x, y, name=name)
    return DynkinGame.create(tree, x, y, z, name=name)


def generate_games(seed: int, depth: int = MAX_GENERATED_DEPTH, branching: int = MAX_GENERATED_BRANCHING,
                   count: int = 1, mode: Union[GeneratorMode, str] = GeneratorMode.GENERAL,
                   arithmetic: Arithmetic = RATIONAL, cap: Optional[int] = None) -> List[DynkinGame]:
    """count games from one seeded generator; the same arguments always give the same games"""
    mode = GeneratorMode(mode)
    rng = np.random.default_rng(seed)
    games = [
        random_game(rng, depth, branching, mode, arithmetic, cap, name=f"{mode.value}-{seed}-{index}")
        for index in range(count)
    ]
    logger.info(f"Generated {count} {mode.value} games from seed {seed}")
    return games
