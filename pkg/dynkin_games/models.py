"""
Data models for Dynkin games on finite filtration trees

Trees, processes and stopping times are immutable once built. A process or a
stopping time keeps a reference to the tree it lives on, so operations never
need the tree passed separately.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from .config import FLOAT_TOLERANCE
from .exceptions import GameValidationError

logger = logging.getLogger(__name__)

Number = Union[Fraction, float]


class ArithmeticMode(str, Enum):
    """Number system used by every value on a tree"""
    RATIONAL = 'rational'
    FLOAT = 'float'


@dataclass(frozen=True)
class Arithmetic:
    """
    Number coercion and comparison for one tree

    Rational mode compares exactly. Float mode treats two numbers as equal when
    they differ by at most tolerance * max(1, |a|, |b|).
    """
    mode: ArithmeticMode = ArithmeticMode.RATIONAL
    tolerance: float = FLOAT_TOLERANCE

    @property
    def exact(self) -> bool:
        return self.mode == ArithmeticMode.RATIONAL

    def coerce(self, value: Any) -> Number:
        """Convert a literal into this mode's number type"""
        if isinstance(value, bool):
            raise GameValidationError(f"boolean {value!r} is not a number")
        if self.exact:
            if isinstance(value, float):
                raise GameValidationError(f"float {value!r} is not accepted in rational mode")
            try:
                return Fraction(value)
            except (ValueError, TypeError, ZeroDivisionError):
                raise GameValidationError(f"cannot read {value!r} as a rational number")
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise GameValidationError(f"cannot read {value!r} as a decimal number")
        try:
            return float(value)
        except (ValueError, TypeError):
            raise GameValidationError(f"cannot read {value!r} as a decimal number")

    def zero(self) -> Number:
        return Fraction(0) if self.exact else 0.0

    def _slack(self, a: Number, b: Number) -> float:
        if self.exact:
            return 0
        return self.tolerance * max(1.0, abs(a), abs(b))

    def eq(self, a: Number, b: Number) -> bool:
        return abs(a - b) <= self._slack(a, b)

    def le(self, a: Number, b: Number) -> bool:
        return a <= b + self._slack(a, b)

    def ge(self, a: Number, b: Number) -> bool:
        return a + self._slack(a, b) >= b

    def lt(self, a: Number, b: Number) -> bool:
        return not self.ge(a, b)

    def gt(self, a: Number, b: Number) -> bool:
        return not self.le(a, b)

    def format(self, value: Number) -> Union[int, str, float]:
        """JSON-ready rendering: ints and "p/q" strings when exact"""
        if self.exact:
            value = Fraction(value)
            if value.denominator == 1:
                return value.numerator
            return f"{value.numerator}/{value.denominator}"
        return float(value)


RATIONAL = Arithmetic(ArithmeticMode.RATIONAL)
FLOAT = Arithmetic(ArithmeticMode.FLOAT)


@dataclass(frozen=True)
class Node:
    """One atom of the filtration: a node with its time and branches"""
    id: str
    time: int
    parents: Tuple[str, ...] = ()
    children: Tuple[Tuple[str, Number], ...] = ()

    @property
    def parent(self) -> Optional[str]:
        return self.parents[0] if self.parents else None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class FiltrationTree:
    """
    Finite filtration as a rooted tree of atoms

    With recombining=True a node may have several parents; the structure is
    then a recombining lattice in which every per-node quantity is a Markov
    function of (time, state).
    """
    nodes: Mapping[str, Node]
    arithmetic: Arithmetic = RATIONAL
    recombining: bool = False
    root: str = field(init=False)
    horizon: int = field(init=False)
    order: Tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.nodes:
            raise GameValidationError("a tree needs at least one node")
        ordered = tuple(sorted(self.nodes, key=lambda n: (self.nodes[n].time, n)))
        roots = [n for n in ordered if not self.nodes[n].parents]
        object.__setattr__(self, 'order', ordered)
        object.__setattr__(self, 'root', roots[0] if roots else ordered[0])
        object.__setattr__(self, 'horizon', max(node.time for node in self.nodes.values()))

    @classmethod
    def from_edges(cls, times: Mapping[str, int], edges: Iterable[Tuple[str, str, Any]],
                   arithmetic: Arithmetic = RATIONAL, recombining: bool = False) -> 'FiltrationTree':
        """
        Build a tree from node times and (parent, child, probability) edges

        Raises GameValidationError for references that cannot be wired up
        (unknown ids, non-positive probabilities). Softer invariants such as
        probability sums are left to validate_tree.
        """
        parents: Dict[str, List[str]] = {node_id: [] for node_id in times}
        children: Dict[str, List[Tuple[str, Number]]] = {node_id: [] for node_id in times}
        for parent, child, probability in edges:
            if parent not in times:
                raise GameValidationError(f"unknown parent {parent!r}", node_id=child, field='parent')
            if child not in times:
                raise GameValidationError(f"unknown node {child!r}", node_id=child)
            p = arithmetic.coerce(probability)
            if p <= 0:
                raise GameValidationError(f"branch probability {p} must be strictly positive",
                                          node_id=child, field='probability')
            if p > 1:
                raise GameValidationError(f"branch probability {p} exceeds 1",
                                          node_id=child, field='probability')
            parents[child].append(parent)
            children[parent].append((child, p))
        nodes = {
            node_id: Node(
                id=node_id,
                time=int(times[node_id]),
                parents=tuple(parents[node_id]),
                children=tuple(sorted(children[node_id])),
            )
            for node_id in times
        }
        return cls(nodes=nodes, arithmetic=arithmetic, recombining=recombining)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: object) -> bool:
        return node_id in self.nodes

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise GameValidationError(f"unknown node {node_id!r}", node_id=str(node_id))

    def children(self, node_id: str) -> Tuple[Tuple[str, Number], ...]:
        return self.node(node_id).children

    def time(self, node_id: str) -> int:
        return self.node(node_id).time

    def is_leaf(self, node_id: str) -> bool:
        return self.node(node_id).is_leaf

    @property
    def leaves(self) -> Tuple[str, ...]:
        return tuple(n for n in self.order if self.nodes[n].is_leaf)

    @property
    def internal_nodes(self) -> Tuple[str, ...]:
        return tuple(n for n in self.order if not self.nodes[n].is_leaf)

    def subtree(self, start: Optional[str] = None) -> Tuple[str, ...]:
        """Nodes reachable from start (inclusive), in forward time order"""
        start = self.root if start is None else start
        if start == self.root:
            return self.order
        self.node(start)
        seen = {start}
        queue = deque([start])
        while queue:
            current = queue.popleft()
            for child, _ in self.nodes[current].children:
                if child not in seen:
                    seen.add(child)
                    queue.append(child)
        return tuple(n for n in self.order if n in seen)

    def path_to(self, leaf: str, start: Optional[str] = None) -> Tuple[str, ...]:
        """Node ids from start down to leaf; requires a genuine tree"""
        if self.recombining:
            from .exceptions import PreconditionError
            raise PreconditionError("paths are not unique on a recombining lattice; expand it first")
        start = self.root if start is None else start
        node = self.node(leaf)
        if not node.is_leaf:
            raise GameValidationError("path must end at a leaf", node_id=leaf)
        path = [leaf]
        while path[-1] != start:
            parent = self.nodes[path[-1]].parent
            if parent is None:
                raise GameValidationError(f"leaf is not below node {start}", node_id=leaf)
            path.append(parent)
        return tuple(reversed(path))


@dataclass(frozen=True)
class AdaptedProcess(Mapping):
    """One real value per node of a tree"""
    tree: FiltrationTree = field(repr=False, compare=False)
    values: Mapping[str, Number] = field(default_factory=dict)

    def __post_init__(self):
        arithmetic = self.tree.arithmetic
        missing = [n for n in self.tree.order if n not in self.values]
        if missing:
            raise GameValidationError("process is not defined at every node", node_id=missing[0])
        extra = [n for n in self.values if n not in self.tree.nodes]
        if extra:
            raise GameValidationError("process has a value at an unknown node", node_id=str(extra[0]))
        coerced = {n: arithmetic.coerce(self.values[n]) for n in self.tree.order}
        object.__setattr__(self, 'values', coerced)

    @classmethod
    def constant(cls, tree: FiltrationTree, value: Any) -> 'AdaptedProcess':
        return cls(tree, {n: value for n in tree.order})

    @classmethod
    def from_function(cls, tree: FiltrationTree, fn: Callable[[str], Any]) -> 'AdaptedProcess':
        return cls(tree, {n: fn(n) for n in tree.order})

    def __getitem__(self, node_id: str) -> Number:
        return self.values[node_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def combine(self, other: 'AdaptedProcess', fn: Callable[[Number, Number], Number]) -> 'AdaptedProcess':
        return AdaptedProcess(self.tree, {n: fn(self.values[n], other[n]) for n in self.tree.order})


@dataclass(frozen=True)
class StoppingTime:
    """
    Per-node stop/continue rule

    A stopping time always stops at leaves. On a path it realises at the first
    node whose flag is set; flags above the start of a subgame are ignored.
    """
    tree: FiltrationTree = field(repr=False, compare=False)
    stop: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        flags = {n: bool(self.stop.get(n, False)) or self.tree.nodes[n].is_leaf for n in self.tree.order}
        object.__setattr__(self, 'stop', flags)

    @classmethod
    def build(cls, tree: FiltrationTree, rule: Callable[[str], bool],
              start: Optional[str] = None) -> 'StoppingTime':
        """Evaluate rule inside the start subtree; outside it the time continues"""
        nodes = tree.subtree(start)
        return cls(tree, {n: rule(n) for n in nodes})

    @classmethod
    def from_stop_set(cls, tree: FiltrationTree, stop_nodes: Iterable[str]) -> 'StoppingTime':
        return cls(tree, {n: True for n in stop_nodes})

    @classmethod
    def immediate(cls, tree: FiltrationTree) -> 'StoppingTime':
        return cls(tree, {n: True for n in tree.order})

    @classmethod
    def at_leaves(cls, tree: FiltrationTree) -> 'StoppingTime':
        return cls(tree, {})

    def stops_at(self, node_id: str) -> bool:
        return self.stop[node_id]

    def earliest(self, other: 'StoppingTime') -> 'StoppingTime':
        """Pointwise minimum of two stopping times"""
        return StoppingTime(self.tree, {n: self.stop[n] or other.stop[n] for n in self.tree.order})

    def realized_nodes(self, start: Optional[str] = None) -> Tuple[str, ...]:
        """Nodes where this time actually stops when the game starts at start"""
        start = self.tree.root if start is None else start
        hits = []
        seen = {start}
        queue = deque([start])
        while queue:
            current = queue.popleft()
            if self.stop[current]:
                hits.append(current)
                continue
            for child, _ in self.tree.nodes[current].children:
                if child not in seen:
                    seen.add(child)
                    queue.append(child)
        return tuple(sorted(hits, key=lambda n: (self.tree.nodes[n].time, n)))

    def key(self, start: Optional[str] = None) -> str:
        """Identifier of the realised stopping time, used for deterministic tie-breaks"""
        return ','.join(self.realized_nodes(start))


class GameFlavor(str, Enum):
    STANDARD = 'standard'
    GENERAL = 'general'


@dataclass(frozen=True)
class DynkinGame:
    """A filtration tree with the payoff triple (X, Y, Z)"""
    tree: FiltrationTree
    x: AdaptedProcess
    y: AdaptedProcess
    z: AdaptedProcess
    warnings: Tuple[str, ...] = ()
    name: Optional[str] = None

    @classmethod
    def create(cls, tree: FiltrationTree, x: Mapping[str, Any], y: Mapping[str, Any],
               z: Mapping[str, Any], name: Optional[str] = None) -> 'DynkinGame':
        """
        Validate the tree and enforce the terminal convention

        X and Y are overwritten with Z at every leaf; each overwrite is logged
        and recorded in warnings.
        """
        from .tree import validate_tree

        report = validate_tree(tree)
        if not report.ok:
            first = report.violations[0]
            raise GameValidationError(first.message, node_id=first.node_id)

        z_process = z if isinstance(z, AdaptedProcess) else AdaptedProcess(tree, dict(z))
        x_values = dict(x.values if isinstance(x, AdaptedProcess) else x)
        y_values = dict(y.values if isinstance(y, AdaptedProcess) else y)
        warnings = []
        arithmetic = tree.arithmetic
        for leaf in tree.leaves:
            terminal = z_process[leaf]
            for label, values in (('X', x_values), ('Y', y_values)):
                if leaf in values and arithmetic.coerce(values[leaf]) != terminal:
                    message = f"{label} at leaf {leaf} replaced by terminal value {arithmetic.format(terminal)}"
                    logger.warning(message)
                    warnings.append(message)
                values[leaf] = terminal
        return cls(
            tree=tree,
            x=AdaptedProcess(tree, x_values),
            y=AdaptedProcess(tree, y_values),
            z=z_process,
            warnings=tuple(warnings),
            name=name,
        )

    @property
    def arithmetic(self) -> Arithmetic:
        return self.tree.arithmetic

    @property
    def flavor(self) -> GameFlavor:
        from .solver import check_standard
        return GameFlavor.STANDARD if check_standard(self) else GameFlavor.GENERAL


@dataclass(frozen=True)
class TreeViolation:
    node_id: Optional[str]
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[TreeViolation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class ValueProcess:
    """Value candidate V with its envelopes and one-step continuation"""
    game: DynkinGame = field(repr=False)
    v: AdaptedProcess
    lower: AdaptedProcess
    upper: AdaptedProcess
    continuation: Mapping[str, Number]

    @property
    def tree(self) -> FiltrationTree:
        return self.game.tree


class ViolationKind(str, Enum):
    BELOW = 'below'
    ABOVE = 'above'


@dataclass(frozen=True)
class Violation:
    node_id: str
    kind: ViolationKind
    gap: Number


@dataclass(frozen=True)
class AssumptionReport:
    """Nodes where V leaves the band [X min Y, X max Y]"""
    violations: Tuple[Violation, ...] = ()

    @property
    def holds_everywhere(self) -> bool:
        return not self.violations

    def violated_at(self, node_id: str) -> bool:
        return any(v.node_id == node_id for v in self.violations)


class Player(str, Enum):
    MAX = 'max'
    MIN = 'min'


@dataclass(frozen=True)
class BestResponse:
    value: Number
    stopping_time: StoppingTime


@dataclass(frozen=True)
class Deviation:
    """A unilateral deviation that improves the deviator's payoff by gain"""
    player: Player
    stopping_time: StoppingTime
    gain: Number
    base_payoff: Number
    deviation_payoff: Number


@dataclass(frozen=True)
class MinimaxReport:
    node: str
    maximin: Number
    minimax: Number
    value_candidate: Number
    has_value: bool
    equilibria: Tuple[Tuple[StoppingTime, StoppingTime], ...]
    equilibrium_count: int
    maximin_strategy: StoppingTime
    minimax_strategy: StoppingTime
    strategies_examined: int

    @property
    def epsilon_star(self) -> Number:
        return self.minimax - self.maximin


class Verdict(str, Enum):
    NASH_EXISTS = 'nash_exists'
    EPSILON_ONLY = 'epsilon_only'
    NONE = 'none'
    NONE_WITHIN_CAP = 'none_within_cap'


@dataclass(frozen=True)
class EquilibriumCertificate:
    node: str
    verdict: Verdict
    epsilon: Optional[Number] = None
    strategies: Optional[Tuple[StoppingTime, StoppingTime]] = None
    payoff: Optional[Number] = None
    witness: Optional[Deviation] = None
    minimax: Optional[MinimaxReport] = None
    evidence: str = ''
