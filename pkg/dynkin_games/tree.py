"""
Tree primitives: validation, conditional expectations, payoff evaluation and
stopping-time enumeration
"""

import logging
from itertools import product
from typing import Dict, Iterator, List, Optional, Tuple

from .config import ENUMERATION_CAP
from .exceptions import EnumerationCapExceeded, PreconditionError
from .models import (
    AdaptedProcess,
    DynkinGame,
    FiltrationTree,
    Number,
    StoppingTime,
    TreeViolation,
    ValidationReport,
)

logger = logging.getLogger(__name__)


def validate_tree(tree: FiltrationTree) -> ValidationReport:
    """
    Check the structural invariants of a filtration tree

    Returns every violation found instead of stopping at the first one.
    """
    arithmetic = tree.arithmetic
    violations: List[TreeViolation] = []

    roots = [n for n in tree.order if not tree.nodes[n].parents]
    if len(roots) != 1:
        violations.append(TreeViolation(None, f"expected exactly one root, found {len(roots)}"))
    for root in roots:
        if tree.nodes[root].time != 0:
            violations.append(TreeViolation(root, f"root is at time {tree.nodes[root].time}, not 0"))

    for node_id in tree.order:
        node = tree.nodes[node_id]
        if len(node.parents) > 1 and not tree.recombining:
            violations.append(TreeViolation(node_id, f"node has {len(node.parents)} parents"))
        if len(set(c for c, _ in node.children)) != len(node.children):
            violations.append(TreeViolation(node_id, "duplicate child edge"))
        for child, _ in node.children:
            child_time = tree.nodes[child].time
            if child_time != node.time + 1:
                violations.append(TreeViolation(
                    child, f"child time {child_time} does not follow parent time {node.time}"))
        if node.is_leaf:
            if node.time != tree.horizon:
                violations.append(TreeViolation(
                    node_id, f"leaf at time {node.time} before horizon {tree.horizon}"))
            continue
        total = sum((p for _, p in node.children), arithmetic.zero())
        if not arithmetic.eq(total, 1):
            violations.append(TreeViolation(
                node_id, f"probabilities sum {arithmetic.format(total)} ≠ 1 at node {node_id}"))

    reachable = set(tree.subtree(roots[0])) if roots else set()
    for node_id in tree.order:
        if node_id not in reachable and tree.nodes[node_id].parents:
            violations.append(TreeViolation(node_id, "node is not reachable from the root"))

    return ValidationReport(tuple(violations))


def conditional_expectation(process: AdaptedProcess, node: str) -> Number:
    """One-step conditional expectation: sum of p_child * process(child)"""
    tree = process.tree
    children = tree.children(node)
    if not children:
        raise PreconditionError(f"no successors at leaf {node}")
    return sum((p * process[child] for child, p in children), tree.arithmetic.zero())


def first_stop_payoff(path: Tuple[str, ...], tau: StoppingTime, sigma: StoppingTime,
                      first: AdaptedProcess, second: AdaptedProcess,
                      both: AdaptedProcess) -> Number:
    """first at the tau node, second at the sigma node, both at a common node"""
    for node in path:
        tau_stops = tau.stops_at(node)
        sigma_stops = sigma.stops_at(node)
        if tau_stops and sigma_stops:
            return both[node]
        if tau_stops:
            return first[node]
        if sigma_stops:
            return second[node]
    raise PreconditionError(f"path ending at {path[-1]} is not a leaf path")


def realized_payoff(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime, path: str,
                    start: Optional[str] = None) -> Number:
    """Payoff on the path from start to leaf path: X if tau first, Y if sigma first, Z if together"""
    nodes = game.tree.path_to(path, start)
    return first_stop_payoff(nodes, tau, sigma, game.x, game.y, game.z)


def leaf_paths(tree: FiltrationTree, node: Optional[str] = None) -> Iterator[Tuple[str, Number]]:
    """Leaves below node with their probability conditional on node"""
    if tree.recombining:
        raise PreconditionError("leaf paths are not unique on a recombining lattice; expand it first")
    node = tree.root if node is None else node
    stack = [(node, tree.arithmetic.coerce(1))]
    while stack:
        current, weight = stack.pop()
        children = tree.children(current)
        if not children:
            yield current, weight
            continue
        for child, p in reversed(children):
            stack.append((child, weight * p))


def expected_payoff(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime,
                    node: Optional[str] = None) -> Number:
    """Conditional expected payoff of (tau, sigma) for the game started at node"""
    tree = game.tree
    node = tree.root if node is None else node
    zero = tree.arithmetic.zero()
    payoff: Dict[str, Number] = {}
    for current in reversed(tree.subtree(node)):
        tau_stops = tau.stops_at(current)
        sigma_stops = sigma.stops_at(current)
        if tau_stops and sigma_stops:
            payoff[current] = game.z[current]
        elif tau_stops:
            payoff[current] = game.x[current]
        elif sigma_stops:
            payoff[current] = game.y[current]
        else:
            payoff[current] = sum((p * payoff[child] for child, p in tree.children(current)), zero)
    return payoff[node]


def expected_payoff_by_paths(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime,
                             node: Optional[str] = None) -> Number:
    """Same quantity as expected_payoff, by enumerating every leaf path"""
    tree = game.tree
    node = tree.root if node is None else node
    total = tree.arithmetic.zero()
    for leaf, weight in leaf_paths(tree, node):
        total += weight * realized_payoff(game, tau, sigma, leaf, start=node)
    return total


def count_stopping_times(tree: FiltrationTree, from_node: Optional[str] = None,
                         distinct: bool = False) -> int:
    """
    Number of stopping times on the subtree of from_node

    All maps: c(leaf) = 1, c(n) = 2 * prod c(child).
    Distinct realised times: c(leaf) = 1, c(n) = 1 + prod c(child).
    """
    if tree.recombining:
        raise PreconditionError("stopping times are only enumerated on trees")
    counts: Dict[str, int] = {}
    for current in reversed(tree.subtree(from_node)):
        children = tree.children(current)
        if not children:
            counts[current] = 1
            continue
        below = 1
        for child, _ in children:
            below *= counts[child]
        counts[current] = 1 + below if distinct else 2 * below
    return counts[tree.root if from_node is None else from_node]


def _stop_sets(tree: FiltrationTree, node: str) -> List[Tuple[str, ...]]:
    """Antichains of first-stop nodes below node, one per distinct realised time"""
    children = tree.children(node)
    if not children:
        return [(node,)]
    below = [_stop_sets(tree, child) for child, _ in children]
    sets = [(node,)]
    for combo in product(*below):
        sets.append(tuple(n for part in combo for n in part))
    return sets


def enumerate_stopping_times(tree: FiltrationTree, from_node: Optional[str] = None,
                             distinct: bool = False, cap: Optional[int] = None) -> Iterator[StoppingTime]:
    """
    Iterate over every stopping time on the subtree of from_node exactly once

    With distinct=False every stop/continue map over the internal nodes is
    produced. With distinct=True one canonical map per realised stopping time
    is produced: it stops exactly at the first-stop nodes and at leaves.
    """
    cap = ENUMERATION_CAP if cap is None else cap
    start = tree.root if from_node is None else from_node
    count = count_stopping_times(tree, start, distinct=distinct)
    if count > cap:
        logger.warning(f"Refusing to enumerate {count} stopping times below {start} (cap {cap})")
        raise EnumerationCapExceeded(cap, count, node_id=start)
    logger.debug(f"Enumerating {count} stopping times below {start}")

    if distinct:
        return (StoppingTime.from_stop_set(tree, stop_set) for stop_set in _stop_sets(tree, start))

    internal = [n for n in tree.subtree(start) if not tree.nodes[n].is_leaf]
    return (StoppingTime(tree, dict(zip(internal, flags)))
            for flags in product((True, False), repeat=len(internal)))


def expected_stop_time(tree: FiltrationTree, stopping_time: StoppingTime,
                       start: Optional[str] = None) -> Number:
    """Expected realised time of a stopping time, by forward propagation of probability mass"""
    start = tree.root if start is None else start
    zero = tree.arithmetic.zero()
    mass: Dict[str, Number] = {start: tree.arithmetic.coerce(1)}
    expected = zero
    for current in tree.subtree(start):
        weight = mass.get(current, zero)
        if not weight:
            continue
        if stopping_time.stops_at(current):
            expected += weight * tree.nodes[current].time
            continue
        for child, p in tree.children(current):
            mass[child] = mass.get(child, zero) + weight * p
    return expected
