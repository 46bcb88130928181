"""
Lattice approximations of continuous-time Dynkin games

A lattice is a recombining two-branch DAG with one node per (step, state),
ids "k:j" where k is the step and j the number of up moves. Payoffs are
Markov functions of (time, state) drawn from a closed catalog of forms, so
the lattice is solved in recombined form; expand_lattice turns a small one
into a genuine tree for exhaustive cross-checks.
"""

import concurrent.futures
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import EXPANSION_MAX_STEPS, FLOAT_TOLERANCE, NODE_BUDGET, WORKERS
from .exceptions import BudgetExceeded, CertificationError, GameValidationError, PreconditionError
from .models import (
    Arithmetic,
    ArithmeticMode,
    AssumptionReport,
    Deviation,
    DynkinGame,
    FiltrationTree,
    Number,
    StoppingTime,
    ValueProcess,
)
from .oracle import best_deviation, best_response_max, best_response_min, certify_epsilon
from .solver import check_assumption, compute_value, envelope_game
from .tree import expected_stop_time

logger = logging.getLogger(__name__)

STUDY_COLUMNS = ['N', 'epsilon', 'value_root', 'gap_max', 'gap_min', 'E_tau', 'E_sigma', 'runtime_ms']


class PayoffKind(str, Enum):
    AFFINE = 'affine'
    CALL = 'call'
    PUT = 'put'
    CONSTANT = 'constant'
    SHIFTED = 'shifted'


@dataclass(frozen=True)
class PayoffForm:
    """
    One catalog payoff as a function of the lattice state

    shifted evaluates another payoff (base "x" or "y") plus delta.
    """
    kind: PayoffKind
    intercept: float = 0.0
    slope: float = 1.0
    strike: float = 0.0
    value: float = 0.0
    base: Optional[str] = None
    delta: float = 0.0

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], label: str) -> 'PayoffForm':
        if not isinstance(data, Mapping) or 'form' not in data:
            raise GameValidationError(f"payoff {label} needs a 'form'", field=f"payoffs.{label}")
        try:
            kind = PayoffKind(data['form'])
        except ValueError:
            raise GameValidationError(f"unknown payoff form {data['form']!r}", field=f"payoffs.{label}.form")
        required = {
            PayoffKind.AFFINE: ('intercept', 'slope'),
            PayoffKind.CALL: ('strike',),
            PayoffKind.PUT: ('strike',),
            PayoffKind.CONSTANT: ('value',),
            PayoffKind.SHIFTED: ('base', 'delta'),
        }[kind]
        missing = [name for name in required if name not in data]
        if missing:
            raise GameValidationError(f"{kind.value} payoff needs {', '.join(missing)}", field=f"payoffs.{label}")
        params: Dict[str, Any] = {}
        for name in required:
            if name == 'base':
                if data['base'] not in ('x', 'y') or data['base'] == label:
                    raise GameValidationError(f"shifted base must be another payoff, got {data['base']!r}",
                                              field=f"payoffs.{label}.base")
                params['base'] = data['base']
            else:
                params[name] = _real(data[name], f"payoffs.{label}.{name}")
        return cls(kind=kind, **params)

    def to_dict(self) -> Dict[str, Any]:
        params = {
            PayoffKind.AFFINE: {'intercept': self.intercept, 'slope': self.slope},
            PayoffKind.CALL: {'strike': self.strike},
            PayoffKind.PUT: {'strike': self.strike},
            PayoffKind.CONSTANT: {'value': self.value},
            PayoffKind.SHIFTED: {'base': self.base, 'delta': self.delta},
        }[self.kind]
        return {'form': self.kind.value, **params}

    def evaluate(self, states: np.ndarray, evaluated: Mapping[str, np.ndarray]) -> np.ndarray:
        if self.kind == PayoffKind.AFFINE:
            return self.intercept + self.slope * states
        if self.kind == PayoffKind.CALL:
            return np.maximum(states - self.strike, 0.0)
        if self.kind == PayoffKind.PUT:
            return np.maximum(self.strike - states, 0.0)
        if self.kind == PayoffKind.CONSTANT:
            return np.full_like(states, self.value, dtype=float)
        return evaluated[self.base] + self.delta


class StateModelKind(str, Enum):
    RANDOM_WALK = 'random_walk'
    MARKET = 'market'


@dataclass(frozen=True)
class StateModel:
    """
    State dynamics of a lattice

    random_walk moves by +/- sqrt(T/N) with probability 1/2. market multiplies
    by up or down; give either (up, down, probability) or (volatility, rate),
    from which the per-step factors are derived for each step count.
    """
    kind: StateModelKind
    initial_state: float = 0.0
    up: Optional[float] = None
    down: Optional[float] = None
    probability: Optional[float] = None
    volatility: Optional[float] = None
    rate: float = 0.0

    def __post_init__(self):
        if self.kind != StateModelKind.MARKET:
            return
        explicit = self.up is not None or self.down is not None or self.probability is not None
        if explicit:
            if self.up is None or self.down is None or self.probability is None:
                raise GameValidationError("market model needs up, down and probability together", field='model')
            if not self.up > self.down > 0:
                raise GameValidationError(f"need up > down > 0, got up={self.up}, down={self.down}",
                                          field='model')
            if not 0 < self.probability < 1:
                raise GameValidationError(f"branch probability {self.probability} must lie in (0, 1)",
                                          field='model.probability')
        elif self.volatility is None or self.volatility <= 0:
            raise GameValidationError("market model needs a positive volatility or explicit factors",
                                      field='model.volatility')
        if self.initial_state <= 0:
            raise GameValidationError("market initial state must be positive", field='model.initial_state')

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'StateModel':
        if not isinstance(data, Mapping) or 'kind' not in data:
            raise GameValidationError("model needs a 'kind'", field='model')
        try:
            kind = StateModelKind(data['kind'])
        except ValueError:
            raise GameValidationError(f"unknown model kind {data['kind']!r}", field='model.kind')
        params = {
            name: _real(data[name], f"model.{name}")
            for name in ('initial_state', 'up', 'down', 'probability', 'volatility', 'rate')
            if data.get(name) is not None
        }
        return cls(kind=kind, **params)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'kind': self.kind.value, 'initial_state': self.initial_state}
        for name in ('up', 'down', 'probability', 'volatility'):
            if getattr(self, name) is not None:
                data[name] = getattr(self, name)
        if self.kind == StateModelKind.MARKET and self.volatility is not None:
            data['rate'] = self.rate
        return data

    def factors(self, horizon_time: float, steps: int) -> Tuple[float, float, float]:
        """(up move, down move, up probability) for one step"""
        dt = horizon_time / steps
        if self.kind == StateModelKind.RANDOM_WALK:
            jump = math.sqrt(dt)
            return jump, -jump, 0.5
        if self.up is not None:
            return self.up, self.down, self.probability
        up = math.exp(self.volatility * math.sqrt(dt))
        down = 1 / up
        p = (math.exp(self.rate * dt) - down) / (up - down)
        if not 0 < p < 1:
            raise GameValidationError(f"derived branch probability {p:.6f} outside (0, 1) for {steps} steps",
                                      field='model')
        return up, down, p

    def states(self, horizon_time: float, steps: int, k: int) -> np.ndarray:
        """States at step k, indexed by the number of up moves"""
        up, down, _ = self.factors(horizon_time, steps)
        j = np.arange(k + 1)
        if self.kind == StateModelKind.RANDOM_WALK:
            return self.initial_state + j * up + (k - j) * down
        return self.initial_state * up ** j * down ** (k - j)


@dataclass(frozen=True)
class LatticeSpec:
    horizon_time: float
    steps: Tuple[int, ...]
    model: StateModel
    payoffs: Mapping[str, PayoffForm]
    discount_rate: float = 0.0
    epsilons: Tuple[float, ...] = ()
    tolerance: float = FLOAT_TOLERANCE

    def __post_init__(self):
        if not self.horizon_time > 0:
            raise GameValidationError(f"horizon_time must be positive, got {self.horizon_time}",
                                      field='horizon_time')
        if not self.steps or any(int(n) < 1 for n in self.steps):
            raise GameValidationError("steps must be a non-empty list of integers >= 1", field='steps')
        if set(self.payoffs) != {'x', 'y', 'z'}:
            raise GameValidationError("payoffs must define exactly x, y and z", field='payoffs')
        self.evaluation_order()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'LatticeSpec':
        for name in ('horizon_time', 'steps', 'model', 'payoffs'):
            if name not in data:
                raise GameValidationError(f"lattice spec needs '{name}'", field=name)
        steps = data['steps'] if isinstance(data['steps'], list) else [data['steps']]
        if any(isinstance(n, bool) or not isinstance(n, int) for n in steps):
            raise GameValidationError("steps must be integers", field='steps')
        payoffs = data['payoffs']
        if not isinstance(payoffs, Mapping):
            raise GameValidationError("payoffs must be an object", field='payoffs')
        return cls(
            horizon_time=_real(data['horizon_time'], 'horizon_time'),
            steps=tuple(steps),
            model=StateModel.from_dict(data['model']),
            payoffs={label: PayoffForm.from_dict(payoffs[label], label) for label in payoffs},
            discount_rate=_real(data.get('discount_rate', 0.0), 'discount_rate'),
            epsilons=tuple(_real(e, 'epsilons') for e in data.get('epsilons', ())),
            tolerance=_real(data.get('tolerance', FLOAT_TOLERANCE), 'tolerance'),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'horizon_time': self.horizon_time,
            'steps': list(self.steps),
            'model': self.model.to_dict(),
            'payoffs': {label: self.payoffs[label].to_dict() for label in sorted(self.payoffs)},
            'discount_rate': self.discount_rate,
            'epsilons': list(self.epsilons),
            'tolerance': self.tolerance,
        }

    def evaluation_order(self) -> List[str]:
        """Payoff labels ordered so that every shifted base comes first"""
        order: List[str] = []
        pending = sorted(self.payoffs)
        while pending:
            ready = [label for label in pending
                     if self.payoffs[label].kind != PayoffKind.SHIFTED or self.payoffs[label].base in order]
            if not ready:
                raise GameValidationError("shifted payoffs refer to each other in a cycle", field='payoffs')
            order.extend(ready)
            pending = [label for label in pending if label not in ready]
        return order


@dataclass(frozen=True)
class EpsilonStrategyPair:
    """First hits of L >= V - epsilon (tau) and U <= V + epsilon (sigma)"""
    epsilon: float
    tau: StoppingTime
    sigma: StoppingTime


class CertificateVerdict(str, Enum):
    CERTIFIED = 'certified'
    FAILED = 'failed'
    NOT_APPLICABLE = 'not_applicable'


@dataclass(frozen=True)
class EpsilonCertificate:
    node: str
    verdict: CertificateVerdict
    epsilon: float
    value: Number
    gap_max: Number
    gap_min: Number
    assumption: AssumptionReport = field(repr=False)


@dataclass(frozen=True)
class MartingaleReport:
    """Drift-sign checks before the epsilon stops: V <= E[V_next] before tau, V >= E[V_next] before sigma"""
    nodes_before_tau: int
    nodes_before_sigma: int
    sub_violations: int
    super_violations: int
    max_sub_excess: Number
    max_super_excess: Number

    @property
    def holds(self) -> bool:
        return self.sub_violations == 0 and self.super_violations == 0


@dataclass(frozen=True)
class TruncatedPair:
    tau: StoppingTime
    sigma: StoppingTime
    deviation: Optional[Deviation] = None

    @property
    def is_nash(self) -> bool:
        return self.deviation is None


def _real(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GameValidationError(f"expected a number, got {value!r}", field=name)
    return float(value)


def lattice_size(steps: int) -> int:
    return (steps + 1) * (steps + 2) // 2


def build_lattice(spec: LatticeSpec, steps: Optional[int] = None) -> DynkinGame:
    """
    Recombining float-mode game for one step count

    Payoffs are evaluated from the catalog at (k * T / N, state) and
    discounted by exp(-discount_rate * t). Leaf X and Y are set to Z.
    """
    steps = spec.steps[0] if steps is None else int(steps)
    size = lattice_size(steps)
    if size > NODE_BUDGET:
        logger.warning(f"Refusing lattice with {size} nodes (budget {NODE_BUDGET})")
        raise BudgetExceeded(NODE_BUDGET, size)
    _, _, p_up = spec.model.factors(spec.horizon_time, steps)
    dt = spec.horizon_time / steps
    order = spec.evaluation_order()

    times: Dict[str, int] = {}
    edges: List[Tuple[str, str, float]] = []
    values: Dict[str, Dict[str, float]] = {'x': {}, 'y': {}, 'z': {}}
    for k in range(steps + 1):
        states = spec.model.states(spec.horizon_time, steps, k)
        discount = math.exp(-spec.discount_rate * k * dt)
        evaluated: Dict[str, np.ndarray] = {}
        for label in order:
            evaluated[label] = spec.payoffs[label].evaluate(states, evaluated)
        if k == steps:
            evaluated['x'] = evaluated['y'] = evaluated['z']
        for j in range(k + 1):
            node = f"{k}:{j}"
            times[node] = k
            for label in ('x', 'y', 'z'):
                values[label][node] = float(evaluated[label][j]) * discount
            if k < steps:
                edges.append((node, f"{k + 1}:{j + 1}", p_up))
                edges.append((node, f"{k + 1}:{j}", 1 - p_up))

    arithmetic = Arithmetic(ArithmeticMode.FLOAT, spec.tolerance)
    tree = FiltrationTree.from_edges(times, edges, arithmetic=arithmetic, recombining=True)
    logger.debug(f"Built lattice with {steps} steps and {size} nodes")
    return DynkinGame.create(tree, values['x'], values['y'], values['z'], name=f"lattice N={steps}")


def expand_lattice(game: DynkinGame, max_steps: int = EXPANSION_MAX_STEPS) -> Tuple[DynkinGame, Dict[str, str]]:
    """
    Unfold a recombining lattice into a tree

    Returns the tree game and the map from tree node to lattice node.
    """
    tree = game.tree
    if tree.horizon > max_steps:
        raise BudgetExceeded(max_steps, tree.horizon, what="steps for expansion")
    times: Dict[str, int] = {'e0': 0}
    edges: List[Tuple[str, str, Number]] = []
    source: Dict[str, str] = {'e0': tree.root}
    frontier = ['e0']
    while frontier:
        next_frontier = []
        for expanded in frontier:
            for child, p in tree.children(source[expanded]):
                node = f"e{len(times)}"
                times[node] = times[expanded] + 1
                source[node] = child
                edges.append((expanded, node, p))
                next_frontier.append(node)
        frontier = next_frontier
    expanded_tree = FiltrationTree.from_edges(times, edges, arithmetic=tree.arithmetic)

    def pick(process):
        return {n: process[source[n]] for n in times}

    expanded_game = DynkinGame.create(expanded_tree, pick(game.x), pick(game.y), pick(game.z), name=game.name)
    return expanded_game, source


def epsilon_strategies(game: DynkinGame, value: ValueProcess, epsilon: float,
                       start: Optional[str] = None) -> EpsilonStrategyPair:
    """First hits of L >= V - epsilon for tau and U <= V + epsilon for sigma"""
    if not epsilon > 0:
        raise PreconditionError("epsilon must be positive")
    arithmetic = game.arithmetic
    v, lower, upper = value.v, value.lower, value.upper
    tau = StoppingTime.build(game.tree, lambda n: arithmetic.ge(lower[n], v[n] - epsilon), start)
    sigma = StoppingTime.build(game.tree, lambda n: arithmetic.le(upper[n], v[n] + epsilon), start)
    return EpsilonStrategyPair(epsilon, tau, sigma)


def zero_hitting_times(game: DynkinGame, value: ValueProcess,
                       start: Optional[str] = None) -> Tuple[StoppingTime, StoppingTime]:
    """First hits of L >= V and U <= V"""
    arithmetic = game.arithmetic
    v, lower, upper = value.v, value.lower, value.upper
    tau = StoppingTime.build(game.tree, lambda n: arithmetic.ge(lower[n], v[n]), start)
    sigma = StoppingTime.build(game.tree, lambda n: arithmetic.le(upper[n], v[n]), start)
    return tau, sigma


def verify_epsilon_optimality(game: DynkinGame, value: ValueProcess, pair: EpsilonStrategyPair,
                              start: Optional[str] = None) -> EpsilonCertificate:
    """
    Best-response gaps of an epsilon pair at start

    gap_max = BRmax(sigma) - V and gap_min = V - BRmin(tau). The verdict is
    not_applicable when V leaves [min(X, Y), max(X, Y)] somewhere.
    """
    start = game.tree.root if start is None else start
    assumption = check_assumption(game, value)
    v = value.v[start]
    gap_max = best_response_max(game, pair.sigma, start).value - v
    gap_min = v - best_response_min(game, pair.tau, start).value
    if not assumption.holds_everywhere:
        verdict = CertificateVerdict.NOT_APPLICABLE
    elif certify_epsilon(game, pair.tau, pair.sigma, start, pair.epsilon, value=value):
        verdict = CertificateVerdict.CERTIFIED
    else:
        verdict = CertificateVerdict.FAILED
        logger.warning(f"Epsilon pair failed at {start}: gaps {gap_max}, {gap_min} for epsilon {pair.epsilon}")
    return EpsilonCertificate(start, verdict, pair.epsilon, v, gap_max, gap_min, assumption)


def _reached_before(tree: FiltrationTree, stopping_time: StoppingTime, start: str) -> List[str]:
    reached = []
    seen = {start}
    frontier = [start]
    while frontier:
        next_frontier = []
        for node in frontier:
            if stopping_time.stops_at(node):
                continue
            reached.append(node)
            for child, _ in tree.children(node):
                if child not in seen:
                    seen.add(child)
                    next_frontier.append(child)
        frontier = next_frontier
    return reached


def martingale_structure(game: DynkinGame, value: ValueProcess, pair: EpsilonStrategyPair,
                         start: Optional[str] = None) -> MartingaleReport:
    tree = game.tree
    arithmetic = tree.arithmetic
    start = tree.root if start is None else start
    zero = arithmetic.zero()

    before_tau = _reached_before(tree, pair.tau, start)
    sub_excess = [value.v[n] - value.continuation[n] for n in before_tau
                  if not arithmetic.le(value.v[n], value.continuation[n])]
    before_sigma = _reached_before(tree, pair.sigma, start)
    super_excess = [value.continuation[n] - value.v[n] for n in before_sigma
                    if not arithmetic.ge(value.v[n], value.continuation[n])]
    return MartingaleReport(
        nodes_before_tau=len(before_tau),
        nodes_before_sigma=len(before_sigma),
        sub_violations=len(sub_excess),
        super_violations=len(super_excess),
        max_sub_excess=max(sub_excess, default=zero),
        max_super_excess=max(super_excess, default=zero),
    )


def truncate_equilibrium(game: DynkinGame, value: ValueProcess, tau: StoppingTime, sigma: StoppingTime,
                         start: Optional[str] = None, check_input: bool = True) -> TruncatedPair:
    """
    Stop a Nash pair of the envelope game no later than the zero hitting times

    The input must be a Nash pair of the (L, U, Z) game at start unless
    check_input is False. The returned pair carries the most profitable
    deviation in the original game, None when it is a Nash pair there.
    """
    start = game.tree.root if start is None else start
    if check_input:
        deviation = best_deviation(envelope_game(game), tau, sigma, start)
        if deviation is not None:
            raise CertificationError(
                f"input pair is not a Nash pair of the envelope game at {start}: "
                f"{deviation.player.value}-player gains {deviation.gain}")
    tau_zero, sigma_zero = zero_hitting_times(game, value, start)
    tau_cut = tau.earliest(tau_zero)
    sigma_cut = sigma.earliest(sigma_zero)
    return TruncatedPair(tau_cut, sigma_cut, best_deviation(game, tau_cut, sigma_cut, start))


def _study_cell(spec: LatticeSpec, steps: int, epsilons: Sequence[float]) -> List[Dict[str, Any]]:
    began = time.perf_counter()
    game = build_lattice(spec, steps)
    value = compute_value(game)
    setup_ms = (time.perf_counter() - began) * 1000
    tree = game.tree
    rows = []
    for epsilon in epsilons:
        began = time.perf_counter()
        pair = epsilon_strategies(game, value, epsilon=epsilon)
        certificate = verify_epsilon_optimality(game, value, pair)
        rows.append({
            'N': steps,
            'epsilon': epsilon,
            'value_root': value.v[tree.root],
            'gap_max': certificate.gap_max,
            'gap_min': certificate.gap_min,
            'E_tau': expected_stop_time(tree, pair.tau) * spec.horizon_time / steps,
            'E_sigma': expected_stop_time(tree, pair.sigma) * spec.horizon_time / steps,
            'runtime_ms': setup_ms + (time.perf_counter() - began) * 1000,
        })
    return rows


def convergence_study(spec: LatticeSpec, epsilons: Optional[Sequence[float]] = None,
                      steps: Optional[Sequence[int]] = None, workers: Optional[int] = None) -> pd.DataFrame:
    """
    One row per (N, epsilon): root value, best-response gaps and expected
    stop times in model time units

    runtime_ms includes building and solving the lattice for that N. Rows are
    ordered by N, then epsilon, whatever the number of workers.
    """
    epsilons = list(spec.epsilons if epsilons is None else epsilons)
    steps = list(spec.steps if steps is None else steps)
    workers = WORKERS if workers is None else workers
    if not epsilons:
        raise PreconditionError("a study needs at least one epsilon")
    for epsilon in epsilons:
        if not epsilon > 0:
            raise PreconditionError("epsilon must be positive")
    for n in steps:
        if lattice_size(n) > NODE_BUDGET:
            raise BudgetExceeded(NODE_BUDGET, lattice_size(n))

    results: Dict[int, List[Dict[str, Any]]] = {}
    if workers <= 1 or len(steps) == 1:
        for index, n in enumerate(steps):
            results[index] = _study_cell(spec, n, epsilons)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_study_cell, spec, n, epsilons): index for index, n in enumerate(steps)}
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()

    rows = [row for index in sorted(results) for row in results[index]]
    frame = pd.DataFrame(rows, columns=STUDY_COLUMNS)
    logger.info(f"Study finished: {len(steps)} step counts x {len(epsilons)} epsilons")
    return frame.sort_values(['N', 'epsilon'], kind='mergesort').reset_index(drop=True)
