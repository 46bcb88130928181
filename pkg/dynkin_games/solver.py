"""
Backward-induction solver for standard and general Dynkin games

The value candidate is V_T = Z_T and, at internal nodes,
V = min(U, max(L, E[V_next])) with L = min(X, Z) and U = max(Y, Z).
The candidate is the value of the subgame at every node exactly when
min(X, Y) <= V <= max(X, Y) holds everywhere; check_assumption reports where
it fails.
"""

import logging
from collections import deque
from typing import Any, Dict, Mapping, Optional, Tuple

from .exceptions import PreconditionError
from .models import (
    AdaptedProcess,
    AssumptionReport,
    DynkinGame,
    FiltrationTree,
    Number,
    StoppingTime,
    ValueProcess,
    Violation,
    ViolationKind,
)

logger = logging.getLogger(__name__)


def envelopes(game: DynkinGame) -> Tuple[AdaptedProcess, AdaptedProcess]:
    """Lower envelope L = min(X, Z) and upper envelope U = max(Y, Z)"""
    lower = game.x.combine(game.z, min)
    upper = game.y.combine(game.z, max)
    return lower, upper


def compute_value(game: DynkinGame) -> ValueProcess:
    """Evaluate the value recursion in one leaf-to-root pass"""
    tree = game.tree
    zero = tree.arithmetic.zero()
    lower, upper = envelopes(game)
    value: Dict[str, Number] = {}
    continuation: Dict[str, Number] = {}
    for node in reversed(tree.order):
        children = tree.children(node)
        if not children:
            value[node] = game.z[node]
            continue
        expected = sum((p * value[child] for child, p in children), zero)
        continuation[node] = expected
        value[node] = min(upper[node], max(lower[node], expected))
    logger.debug(f"Solved game on {len(tree)} nodes, root value {value[tree.root]}")
    return ValueProcess(
        game=game,
        v=AdaptedProcess(tree, value),
        lower=lower,
        upper=upper,
        continuation=continuation,
    )


def optimal_stopping_times(value: ValueProcess, start: Optional[str] = None) -> Tuple[StoppingTime, StoppingTime]:
    """
    First hitting times of the envelopes from start

    tau* stops where V = L, sigma* stops where V = U. Both stop at leaves,
    where V = L = U = Z.
    """
    tree = value.tree
    arithmetic = tree.arithmetic
    v, lower, upper = value.v, value.lower, value.upper
    tau_star = StoppingTime.build(tree, lambda n: arithmetic.eq(v[n], lower[n]), start)
    sigma_star = StoppingTime.build(tree, lambda n: arithmetic.eq(v[n], upper[n]), start)
    return tau_star, sigma_star


def check_standard(game: DynkinGame) -> bool:
    """True iff X <= Z <= Y at every node"""
    arithmetic = game.arithmetic
    return all(
        arithmetic.le(game.x[n], game.z[n]) and arithmetic.le(game.z[n], game.y[n])
        for n in game.tree.order
    )


def check_assumption(game: DynkinGame, value: Optional[ValueProcess] = None) -> AssumptionReport:
    """Report every node where V < min(X, Y) or V > max(X, Y), with the gap"""
    value = compute_value(game) if value is None else value
    arithmetic = game.arithmetic
    violations = []
    for node in game.tree.order:
        v = value.v[node]
        low = min(game.x[node], game.y[node])
        high = max(game.x[node], game.y[node])
        if arithmetic.lt(v, low):
            violations.append(Violation(node, ViolationKind.BELOW, low - v))
        elif arithmetic.gt(v, high):
            violations.append(Violation(node, ViolationKind.ABOVE, v - high))
    if violations:
        logger.info(f"Assumption violated at {len(violations)} node(s), first at {violations[0].node_id}")
    return AssumptionReport(tuple(violations))


def single_period_conditions(game: DynkinGame, value: ValueProcess, node: str,
                             tau_stops: bool, sigma_stops: bool) -> bool:
    """
    Equilibrium conditions of the one-period game at node

    both stop:     Y <= V = Z <= X
    tau only:      P <= V = X <= Z
    sigma only:    Z <= V = Y <= P
    neither stops: X <= V = P <= Y
    where P is the continuation value at node.
    """
    if node not in value.continuation:
        raise PreconditionError(f"no continuation value at leaf {node}")
    arithmetic = game.arithmetic
    le, eq = arithmetic.le, arithmetic.eq
    v = value.v[node]
    x, y, z = game.x[node], game.y[node], game.z[node]
    p = value.continuation[node]
    if tau_stops and sigma_stops:
        return le(y, v) and eq(v, z) and le(z, x)
    if tau_stops:
        return le(p, v) and eq(v, x) and le(x, z)
    if sigma_stops:
        return le(z, v) and eq(v, y) and le(y, p)
    return le(x, v) and eq(v, p) and le(p, y)


def value_for_z_equal_y(game: DynkinGame) -> AdaptedProcess:
    """
    Direct recursion for games whose simultaneous payoff equals Y

    V_T = Y_T and V = Y where Y <= X, otherwise min(Y, max(X, E[V_next])).
    """
    tree = game.tree
    arithmetic = tree.arithmetic
    for node in tree.order:
        if not arithmetic.eq(game.z[node], game.y[node]):
            raise PreconditionError(f"Z differs from Y at node {node}")
    zero = arithmetic.zero()
    value: Dict[str, Number] = {}
    for node in reversed(tree.order):
        children = tree.children(node)
        x, y = game.x[node], game.y[node]
        if not children:
            value[node] = y
        elif y <= x:
            value[node] = y
        else:
            expected = sum((p * value[child] for child, p in children), zero)
            value[node] = min(y, max(x, expected))
    return AdaptedProcess(tree, value)


def martingale_deviation(value: ValueProcess, tau: StoppingTime, sigma: StoppingTime,
                         start: Optional[str] = None) -> Number:
    """Largest |V - E[V_next]| over nodes from start that neither time has stopped"""
    tree = value.tree
    start = tree.root if start is None else start
    deviation = tree.arithmetic.zero()
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if tau.stops_at(node) or sigma.stops_at(node):
            continue
        deviation = max(deviation, abs(value.v[node] - value.continuation[node]))
        for child, _ in tree.children(node):
            if child not in seen:
                seen.add(child)
                queue.append(child)
    return deviation


def envelope_game(game: DynkinGame) -> DynkinGame:
    """The standard game with payoffs (L, U, Z) on the same tree"""
    lower, upper = envelopes(game)
    name = f"{game.name} envelopes" if game.name else None
    return DynkinGame.create(game.tree, lower, upper, game.z, name=name)


def z_equal_y_game(tree: FiltrationTree, x: Mapping[str, Any], y: Mapping[str, Any],
                   name: Optional[str] = None) -> DynkinGame:
    """Game paying X when the max-player stops strictly first and Y otherwise"""
    return DynkinGame.create(tree, x, y, y, name=name)


def check_z_between(game: DynkinGame) -> Tuple[str, ...]:
    """Nodes where Z lies outside [min(X, Y), max(X, Y)]"""
    arithmetic = game.arithmetic
    return tuple(
        n for n in game.tree.order
        if arithmetic.lt(game.z[n], min(game.x[n], game.y[n]))
        or arithmetic.gt(game.z[n], max(game.x[n], game.y[n]))
    )


def check_sufficient_conditions(game: DynkinGame) -> Tuple[str, ...]:
    """
    Internal nodes failing the explicit one-step conditions

    Where min(X, Y) > Z we need min(X, Y) <= E[min(X, U) next]; where
    max(X, Y) < Z we need max(X, Y) >= E[max(L, Y) next]. When no node fails,
    the band condition holds everywhere.
    """
    tree = game.tree
    arithmetic = tree.arithmetic
    zero = arithmetic.zero()
    lower, upper = envelopes(game)
    failures = []
    for node in tree.internal_nodes:
        children = tree.children(node)
        low = min(game.x[node], game.y[node])
        high = max(game.x[node], game.y[node])
        z = game.z[node]
        if arithmetic.gt(low, z):
            target = sum((p * min(game.x[c], upper[c]) for c, p in children), zero)
            if arithmetic.gt(low, target):
                failures.append(node)
                continue
        if arithmetic.lt(high, z):
            target = sum((p * max(lower[c], game.y[c]) for c, p in children), zero)
            if arithmetic.lt(high, target):
                failures.append(node)
    return tuple(failures)


class DynkinSolver:
    """Solves one game once and answers the value-based questions about it"""

    def __init__(self, game: DynkinGame):
        self.game = game
        self._value: Optional[ValueProcess] = None
        self._assumption: Optional[AssumptionReport] = None

    @property
    def value(self) -> ValueProcess:
        if self._value is None:
            self._value = compute_value(self.game)
        return self._value

    @property
    def assumption(self) -> AssumptionReport:
        if self._assumption is None:
            self._assumption = check_assumption(self.game, self.value)
        return self._assumption

    def stopping_times(self, start: Optional[str] = None) -> Tuple[StoppingTime, StoppingTime]:
        return optimal_stopping_times(self.value, start)

    def martingale_deviation(self, tau: StoppingTime, sigma: StoppingTime,
                             start: Optional[str] = None) -> Number:
        return martingale_deviation(self.value, tau, sigma, start)

    def sufficient_conditions(self) -> Dict[str, Tuple[str, ...]]:
        """Failing nodes of each explicit condition implying the band condition"""
        return {
            'z_between_failures': check_z_between(self.game),
            'one_step_failures': check_sufficient_conditions(self.game),
        }
