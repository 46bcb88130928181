"""
Ground-truth verification for Dynkin games

Best responses are one-player optimal stopping problems against a frozen
opponent and are solved by backward induction. Minimax and maximin enumerate
only the inner player's stopping times and answer each with a best response.
"""

import concurrent.futures
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .config import ENUMERATION_CAP, MAX_LISTED_EQUILIBRIA, WORKERS
from .exceptions import CertificationError, EnumerationCapExceeded, PreconditionError
from .models import (
    BestResponse,
    Deviation,
    DynkinGame,
    EquilibriumCertificate,
    MinimaxReport,
    Number,
    Player,
    StoppingTime,
    ValueProcess,
    Verdict,
)
from .solver import DynkinSolver, compute_value, envelopes, optimal_stopping_times
from .tree import count_stopping_times, enumerate_stopping_times, expected_payoff, first_stop_payoff

logger = logging.getLogger(__name__)


def best_response_max(game: DynkinGame, sigma: StoppingTime, start: Optional[str] = None) -> BestResponse:
    """
    Best reply of the max-player to a frozen sigma

    Where sigma stops the choice is Z (stop too) against Y (be stopped);
    elsewhere it is X against the continuation. Ties stop.
    """
    tree = game.tree
    arithmetic = tree.arithmetic
    zero = arithmetic.zero()
    nodes = tree.subtree(start)
    value: Dict[str, Number] = {}
    stop: Dict[str, bool] = {}
    for node in reversed(nodes):
        children = tree.children(node)
        if not children:
            value[node], stop[node] = game.z[node], True
        elif sigma.stops_at(node):
            z, y = game.z[node], game.y[node]
            stop[node] = arithmetic.ge(z, y)
            value[node] = max(z, y)
        else:
            expected = sum((p * value[child] for child, p in children), zero)
            x = game.x[node]
            stop[node] = arithmetic.ge(x, expected)
            value[node] = max(x, expected)
    return BestResponse(value[nodes[0]], StoppingTime(tree, stop))


def best_response_min(game: DynkinGame, tau: StoppingTime, start: Optional[str] = None) -> BestResponse:
    """Best reply of the min-player to a frozen tau; mirror of best_response_max"""
    tree = game.tree
    arithmetic = tree.arithmetic
    zero = arithmetic.zero()
    nodes = tree.subtree(start)
    value: Dict[str, Number] = {}
    stop: Dict[str, bool] = {}
    for node in reversed(nodes):
        children = tree.children(node)
        if not children:
            value[node], stop[node] = game.z[node], True
        elif tau.stops_at(node):
            z, x = game.z[node], game.x[node]
            stop[node] = arithmetic.le(z, x)
            value[node] = min(z, x)
        else:
            expected = sum((p * value[child] for child, p in children), zero)
            y = game.y[node]
            stop[node] = arithmetic.le(y, expected)
            value[node] = min(y, expected)
    return BestResponse(value[nodes[0]], StoppingTime(tree, stop))


def best_deviation(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime,
                   start: Optional[str] = None) -> Optional[Deviation]:
    """
    Most profitable unilateral deviation from (tau, sigma), or None for a Nash pair

    When both players can improve, the larger gain wins and the max-player
    wins ties.
    """
    arithmetic = game.arithmetic
    payoff = expected_payoff(game, tau, sigma, start)
    reply_max = best_response_max(game, sigma, start)
    reply_min = best_response_min(game, tau, start)
    gain_max = reply_max.value - payoff
    gain_min = payoff - reply_min.value
    candidates = []
    if arithmetic.gt(reply_max.value, payoff):
        candidates.append(Deviation(Player.MAX, reply_max.stopping_time, gain_max, payoff, reply_max.value))
    if arithmetic.lt(reply_min.value, payoff):
        candidates.append(Deviation(Player.MIN, reply_min.stopping_time, gain_min, payoff, reply_min.value))
    if not candidates:
        return None
    return max(candidates, key=lambda d: d.gain)


def is_nash(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime, start: Optional[str] = None) -> bool:
    return best_deviation(game, tau, sigma, start) is None


def _scan(game: DynkinGame, stop_sets: Sequence[Tuple[str, ...]], start: str,
          player: Player) -> List[Number]:
    """Best-response values against each frozen opponent in stop_sets"""
    reply = best_response_max if player == Player.MAX else best_response_min
    tree = game.tree
    return [reply(game, StoppingTime.from_stop_set(tree, s), start).value for s in stop_sets]


def _scan_all(game: DynkinGame, strategies: List[StoppingTime], start: str,
              player: Player, workers: int) -> List[Number]:
    if workers <= 1 or len(strategies) < 2 * workers:
        return _scan(game, [s.realized_nodes(start) for s in strategies], start, player)

    size = -(-len(strategies) // workers)
    chunks = [
        [s.realized_nodes(start) for s in strategies[i:i + size]]
        for i in range(0, len(strategies), size)
    ]
    results: Dict[int, List[Number]] = {}
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(_scan, game, chunk, start, player): index
            for index, chunk in enumerate(chunks)
        }
        for future in concurrent.futures.as_completed(futures):
            results[futures[future]] = future.result()
    return [value for index in sorted(results) for value in results[index]]


def brute_force_minimax(game: DynkinGame, start: Optional[str] = None, cap: Optional[int] = None,
                        value: Optional[ValueProcess] = None, workers: Optional[int] = None) -> MinimaxReport:
    """
    Exact maximin and minimax of the subgame at start

    minimax = min over sigma of best_response_max(sigma) and
    maximin = max over tau of best_response_min(tau), with sigma and tau
    ranging over every distinct stopping time of the subtree. Raises
    CertificationError if the solver's value falls outside [maximin, minimax].
    """
    tree = game.tree
    arithmetic = tree.arithmetic
    start = tree.root if start is None else start
    cap = ENUMERATION_CAP if cap is None else cap
    workers = WORKERS if workers is None else workers
    value = compute_value(game) if value is None else value

    strategies = list(enumerate_stopping_times(tree, start, distinct=True, cap=cap))
    keys = [s.key(start) for s in strategies]
    logger.info(f"Scanning {len(strategies)} stopping times below {start}")

    against_sigma = _scan_all(game, strategies, start, Player.MAX, workers)
    against_tau = _scan_all(game, strategies, start, Player.MIN, workers)

    minimax_index = min(range(len(strategies)), key=lambda i: (against_sigma[i], keys[i]))
    maximin_index = min(range(len(strategies)), key=lambda i: (-against_tau[i], keys[i]))
    minimax = against_sigma[minimax_index]
    maximin = against_tau[maximin_index]
    candidate = value.v[start]

    if not (arithmetic.le(maximin, candidate) and arithmetic.le(candidate, minimax)):
        raise CertificationError(
            f"value {candidate} at {start} lies outside [maximin {maximin}, minimax {minimax}]")

    has_value = arithmetic.eq(maximin, minimax)
    equilibria: Tuple[Tuple[StoppingTime, StoppingTime], ...] = ()
    count = 0
    if has_value:
        taus = [strategies[i] for i in range(len(strategies)) if arithmetic.eq(against_tau[i], maximin)]
        sigmas = [strategies[i] for i in range(len(strategies)) if arithmetic.eq(against_sigma[i], minimax)]
        count = len(taus) * len(sigmas)
        listed = []
        for tau in taus:
            for sigma in sigmas:
                if len(listed) >= MAX_LISTED_EQUILIBRIA:
                    break
                listed.append((tau, sigma))
        equilibria = tuple(listed)

    return MinimaxReport(
        node=start,
        maximin=maximin,
        minimax=minimax,
        value_candidate=candidate,
        has_value=has_value,
        equilibria=equilibria,
        equilibrium_count=count,
        maximin_strategy=strategies[maximin_index],
        minimax_strategy=strategies[minimax_index],
        strategies_examined=len(strategies),
    )


def improve_strategy(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime) -> StoppingTime:
    """Stop together with sigma wherever sigma stops and Z > Y there"""
    arithmetic = game.arithmetic
    return StoppingTime(game.tree, {
        n: tau.stops_at(n) or (sigma.stops_at(n) and arithmetic.gt(game.z[n], game.y[n]))
        for n in game.tree.order
    })


def improve_strategy_min(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime) -> StoppingTime:
    """Stop together with tau wherever tau stops and Z < X there"""
    arithmetic = game.arithmetic
    return StoppingTime(game.tree, {
        n: sigma.stops_at(n) or (tau.stops_at(n) and arithmetic.lt(game.z[n], game.x[n]))
        for n in game.tree.order
    })


def modified_payoff(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime, path: str,
                    start: Optional[str] = None) -> Number:
    """Realised payoff with (X, Y) replaced by the envelopes (L, U)"""
    lower, upper = envelopes(game)
    nodes = game.tree.path_to(path, start)
    return first_stop_payoff(nodes, tau, sigma, lower, upper, game.z)


def _as_epsilon(game: DynkinGame, epsilon: Any) -> Number:
    arithmetic = game.arithmetic
    if arithmetic.exact and isinstance(epsilon, float):
        epsilon = Fraction(str(epsilon))
    epsilon = arithmetic.coerce(epsilon)
    if epsilon < 0:
        raise PreconditionError(f"epsilon must be non-negative, got {epsilon}")
    return epsilon


def certify_epsilon(game: DynkinGame, tau: StoppingTime, sigma: StoppingTime,
                    start: Optional[str] = None, epsilon: Any = 0,
                    value: Optional[ValueProcess] = None) -> bool:
    """True iff tau guarantees V - epsilon and sigma concedes at most V + epsilon"""
    epsilon = _as_epsilon(game, epsilon)
    arithmetic = game.arithmetic
    start = game.tree.root if start is None else start
    value = compute_value(game) if value is None else value
    v = value.v[start]
    floor = best_response_min(game, tau, start).value
    ceiling = best_response_max(game, sigma, start).value
    return arithmetic.ge(floor, v - epsilon) and arithmetic.le(ceiling, v + epsilon)


def find_nash(game: DynkinGame, start: Optional[str] = None, cap: Optional[int] = None,
              epsilon: Any = 0, value: Optional[ValueProcess] = None,
              workers: Optional[int] = None) -> EquilibriumCertificate:
    """
    Search for a Nash pair of the subgame at start

    The hitting times of the value envelopes are tried first, then the pair
    improved against each other, then exhaustive minimax. Without a Nash
    pair the certificate carries a profitable deviation from the hitting
    pair; with epsilon > 0 the maximin/minimax pair may be certified as
    epsilon-optimal instead.
    """
    tree = game.tree
    arithmetic = tree.arithmetic
    start = tree.root if start is None else start
    epsilon = _as_epsilon(game, epsilon)
    value = compute_value(game) if value is None else value

    tau_star, sigma_star = optimal_stopping_times(value, start)
    witness = best_deviation(game, tau_star, sigma_star, start)
    if witness is None:
        return EquilibriumCertificate(
            node=start,
            verdict=Verdict.NASH_EXISTS,
            strategies=(tau_star, sigma_star),
            payoff=expected_payoff(game, tau_star, sigma_star, start),
            evidence='envelope hitting times',
        )

    tau_hat = improve_strategy(game, tau_star, sigma_star)
    sigma_hat = improve_strategy_min(game, tau_star, sigma_star)
    for candidate in ((tau_hat, sigma_star), (tau_star, sigma_hat), (tau_hat, sigma_hat)):
        if is_nash(game, *candidate, start):
            return EquilibriumCertificate(
                node=start,
                verdict=Verdict.NASH_EXISTS,
                strategies=candidate,
                payoff=expected_payoff(game, *candidate, start),
                evidence='improved hitting times',
            )

    try:
        report = brute_force_minimax(game, start, cap=cap, value=value, workers=workers)
    except EnumerationCapExceeded as exc:
        logger.warning(f"No Nash pair among candidates at {start}; enumeration refused: {exc}")
        return EquilibriumCertificate(
            node=start,
            verdict=Verdict.NONE_WITHIN_CAP,
            strategies=(tau_star, sigma_star),
            witness=witness,
            evidence=f'hitting pair refuted; {exc.count} stopping times exceed cap {exc.cap}',
        )

    if report.has_value:
        pair = report.equilibria[0]
        return EquilibriumCertificate(
            node=start,
            verdict=Verdict.NASH_EXISTS,
            strategies=pair,
            payoff=expected_payoff(game, *pair, start),
            minimax=report,
            evidence='exhaustive minimax',
        )

    v = value.v[start]
    gap = max(v - report.maximin, report.minimax - v)
    if epsilon > 0 and arithmetic.le(gap, epsilon):
        pair = (report.maximin_strategy, report.minimax_strategy)
        return EquilibriumCertificate(
            node=start,
            verdict=Verdict.EPSILON_ONLY,
            epsilon=gap,
            strategies=pair,
            payoff=expected_payoff(game, *pair, start),
            minimax=report,
            evidence='maximin and minimax strategies',
        )

    return EquilibriumCertificate(
        node=start,
        verdict=Verdict.NONE,
        epsilon=gap,
        strategies=(tau_star, sigma_star),
        payoff=expected_payoff(game, tau_star, sigma_star, start),
        witness=witness,
        minimax=report,
        evidence=f'maximin {report.maximin} < minimax {report.minimax}',
    )


@dataclass(frozen=True)
class CharacterisationCheck:
    """Both sides of the existence characterisation, computed independently"""
    agrees: bool
    assumption_holds: bool
    nash_everywhere: bool
    offending_node: Optional[str] = None
    certificates: Dict[str, EquilibriumCertificate] = field(default_factory=dict, repr=False)


class EquilibriumOracle:
    """
    Exhaustive verification of one game

    Holds a single solve of the game, shared by every start and epsilon it
    is asked about.
    """

    def __init__(self, game: DynkinGame, cap: Optional[int] = None, workers: Optional[int] = None,
                 solver: Optional[DynkinSolver] = None):
        self.game = game
        self.cap = ENUMERATION_CAP if cap is None else cap
        self.workers = WORKERS if workers is None else workers
        self.solver = solver or DynkinSolver(game)

    @property
    def value(self) -> ValueProcess:
        return self.solver.value

    def minimax(self, start: Optional[str] = None) -> MinimaxReport:
        return brute_force_minimax(self.game, start, cap=self.cap, value=self.value, workers=self.workers)

    def find_nash(self, start: Optional[str] = None, epsilon: Any = 0) -> EquilibriumCertificate:
        return find_nash(self.game, start, cap=self.cap, epsilon=epsilon, value=self.value, workers=self.workers)

    def certify(self, tau: StoppingTime, sigma: StoppingTime, start: Optional[str] = None,
                epsilon: Any = 0) -> bool:
        return certify_epsilon(self.game, tau, sigma, start, epsilon, value=self.value)

    def characterisation(self) -> CharacterisationCheck:
        """
        Compare "V stays in [min(X, Y), max(X, Y)] at every node" with
        "every subgame has a Nash pair"

        Also checks that every node where the band is left has no Nash pair.
        """
        tree = self.game.tree
        count = count_stopping_times(tree, tree.root, distinct=True)
        if count > self.cap:
            logger.warning(f"Refusing characterisation check: {count} stopping times exceed cap {self.cap}")
            raise EnumerationCapExceeded(self.cap, count, node_id=tree.root)

        assumption = self.solver.assumption
        certificates = {node: self.find_nash(node) for node in tree.order}
        nash_everywhere = all(c.verdict == Verdict.NASH_EXISTS for c in certificates.values())
        agrees = assumption.holds_everywhere == nash_everywhere
        offending = None
        if not agrees:
            offending = next((n for n in tree.order if certificates[n].verdict != Verdict.NASH_EXISTS),
                             tree.root)
        for violation in assumption.violations:
            if certificates[violation.node_id].verdict != Verdict.NONE:
                agrees = False
                offending = offending or violation.node_id
        if agrees:
            logger.info(f"Characterisation agrees on {len(certificates)} subgames")
        else:
            logger.error(f"Characterisation disagrees at node {offending}")
        return CharacterisationCheck(
            agrees=agrees,
            assumption_holds=assumption.holds_everywhere,
            nash_everywhere=nash_everywhere,
            offending_node=offending,
            certificates=certificates,
        )


def check_existence_characterisation(game: DynkinGame, cap: Optional[int] = None,
                                     workers: Optional[int] = None) -> CharacterisationCheck:
    return EquilibriumOracle(game, cap=cap, workers=workers).characterisation()
