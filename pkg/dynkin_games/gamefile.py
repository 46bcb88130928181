"""
JSON codec for game files and lattice spec files

Game file:
    {"format_version": 1, "mode": "rational", "horizon": 1,
     "nodes": [{"id": "n0", "time": 0, "parent": null, "x": 1, "y": 5, "z": 3},
               {"id": "n1", "time": 1, "parent": "n0", "probability": "1/2", "z": 0}, ...],
     "starts": ["n0"]}

Rational files take integers and "p/q" strings, float files take numbers;
values are never converted between the two. x and y may be left out at
leaves, where they equal z.
"""

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .config import FLOAT_TOLERANCE, FORMAT_VERSION
from .exceptions import GameFileError, GameValidationError, PreconditionError
from .lattice import LatticeSpec
from .models import Arithmetic, ArithmeticMode, DynkinGame, FiltrationTree

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GameFile:
    game: DynkinGame
    starts: Tuple[str, ...] = ()


def _parse_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise GameFileError(f"invalid JSON: {e.msg}", line=e.lineno, column=e.colno)


def _check_version(data: Mapping[str, Any]):
    version = data.get('format_version', FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise GameFileError(f"unsupported format_version {version!r}", field='format_version')


def _literal(arithmetic: Arithmetic, value: Any, node_id: str, name: str):
    if not arithmetic.exact and isinstance(value, str):
        raise GameFileError(f"string {value!r} is not accepted in float mode", node_id=node_id, field=name)
    try:
        return arithmetic.coerce(value)
    except GameValidationError as e:
        raise GameFileError(str(e), node_id=node_id, field=name)


def game_from_dict(data: Any, mode: Optional[str] = None, tolerance: Optional[float] = None) -> GameFile:
    """
    Build a game from a decoded game file

    mode and tolerance fill in what the file leaves out; a mode that
    contradicts the file's is an error.
    """
    if not isinstance(data, Mapping):
        raise GameFileError("a game file must be a JSON object")
    _check_version(data)

    declared = data.get('mode')
    if declared is not None and mode is not None and declared != mode:
        raise GameFileError(f"file declares mode {declared!r}, requested {mode!r}", field='mode')
    try:
        arithmetic_mode = ArithmeticMode(declared or mode or ArithmeticMode.RATIONAL.value)
    except ValueError:
        raise GameFileError(f"unknown mode {declared!r}", field='mode')
    if tolerance is None:
        tolerance = data.get('tolerance', FLOAT_TOLERANCE)
    if isinstance(tolerance, bool):
        raise GameFileError(f"tolerance must be a number, got {tolerance!r}", field='tolerance')
    try:
        tolerance = float(tolerance)
    except (TypeError, ValueError):
        raise GameFileError(f"tolerance must be a number, got {tolerance!r}", field='tolerance')
    if not tolerance >= 0:
        raise GameFileError(f"tolerance must be non-negative, got {tolerance!r}", field='tolerance')
    arithmetic = Arithmetic(arithmetic_mode, tolerance)

    nodes = data.get('nodes')
    if not isinstance(nodes, list) or not nodes:
        raise GameFileError("'nodes' must be a non-empty list", field='nodes')

    times: Dict[str, int] = {}
    edges: List[Tuple[str, str, Any]] = []
    payoffs: Dict[str, Dict[str, Any]] = {'x': {}, 'y': {}, 'z': {}}
    for index, record in enumerate(nodes):
        if not isinstance(record, Mapping):
            raise GameFileError(f"node entry {index} is not an object", field='nodes')
        node_id = record.get('id')
        if not isinstance(node_id, str) or not node_id:
            raise GameFileError(f"node entry {index} needs a string id", field='id')
        if node_id in times:
            raise GameFileError("duplicate node id", node_id=node_id, field='id')
        node_time = record.get('time')
        if isinstance(node_time, bool) or not isinstance(node_time, int) or node_time < 0:
            raise GameFileError("time must be a non-negative integer", node_id=node_id, field='time')
        times[node_id] = node_time
        parent = record.get('parent')
        if parent is not None:
            if not isinstance(parent, str):
                raise GameFileError(f"parent {parent!r} is not a node id", node_id=node_id, field='parent')
            if 'probability' not in record:
                raise GameFileError("missing branch probability", node_id=node_id, field='probability')
            edges.append((parent, node_id, _literal(arithmetic, record['probability'], node_id, 'probability')))
        if 'z' not in record:
            raise GameFileError("missing payoff", node_id=node_id, field='z')
        for label in ('x', 'y', 'z'):
            if label in record:
                payoffs[label][node_id] = _literal(arithmetic, record[label], node_id, label)

    horizon = data.get('horizon')
    if horizon is not None and horizon != max(times.values()):
        raise GameFileError(f"horizon {horizon} does not match the deepest node time {max(times.values())}",
                            field='horizon')

    tree = FiltrationTree.from_edges(times, edges, arithmetic=arithmetic)
    for label in ('x', 'y'):
        missing = [n for n in tree.internal_nodes if n not in payoffs[label]]
        if missing:
            raise GameFileError("missing payoff at internal node", node_id=missing[0], field=label)
        for leaf in tree.leaves:
            payoffs[label].setdefault(leaf, payoffs['z'][leaf])
    game = DynkinGame.create(tree, payoffs['x'], payoffs['y'], payoffs['z'], name=data.get('name'))

    starts = data.get('starts') or []
    if not isinstance(starts, list):
        raise GameFileError("'starts' must be a list of node ids", field='starts')
    for start in starts:
        if not isinstance(start, str):
            raise GameFileError(f"start {start!r} is not a node id", field='starts')
        if start not in tree:
            raise GameFileError("unknown start node", node_id=str(start), field='starts')
    return GameFile(game, tuple(starts))


def game_to_dict(game: DynkinGame, starts: Tuple[str, ...] = ()) -> Dict[str, Any]:
    tree = game.tree
    if tree.recombining:
        raise PreconditionError("recombining lattices are stored as lattice specs, not game files")
    arithmetic = tree.arithmetic
    nodes = []
    for node_id in tree.order:
        node = tree.nodes[node_id]
        record: Dict[str, Any] = {'id': node_id, 'time': node.time, 'parent': node.parent}
        if node.parent is not None:
            probability = dict(tree.nodes[node.parent].children)[node_id]
            record['probability'] = arithmetic.format(probability)
        for label, process in (('x', game.x), ('y', game.y), ('z', game.z)):
            record[label] = arithmetic.format(process[node_id])
        nodes.append(record)
    data: Dict[str, Any] = {
        'format_version': FORMAT_VERSION,
        'mode': arithmetic.mode.value,
        'horizon': tree.horizon,
        'nodes': nodes,
    }
    if not arithmetic.exact:
        data['tolerance'] = arithmetic.tolerance
    if game.name:
        data['name'] = game.name
    if starts:
        data['starts'] = list(starts)
    return data


def loads_game(text: str, mode: Optional[str] = None, tolerance: Optional[float] = None) -> GameFile:
    return game_from_dict(_parse_json(text), mode=mode, tolerance=tolerance)


def dumps_game(game: DynkinGame, starts: Tuple[str, ...] = ()) -> str:
    return json.dumps(game_to_dict(game, starts), indent=2, sort_keys=True) + '\n'


def read_text(path: str) -> str:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return f.read()
    except OSError as e:
        raise GameFileError(f"cannot read {path}: {e.strerror}")


def load_game(path: str, mode: Optional[str] = None, tolerance: Optional[float] = None) -> GameFile:
    logger.debug(f"Loading game file {path}")
    return loads_game(read_text(path), mode=mode, tolerance=tolerance)


def loads_lattice_spec(text: str) -> LatticeSpec:
    data = _parse_json(text)
    if not isinstance(data, Mapping):
        raise GameFileError("a lattice spec must be a JSON object")
    _check_version(data)
    return LatticeSpec.from_dict(data)


def load_lattice_spec(path: str) -> LatticeSpec:
    return loads_lattice_spec(read_text(path))


def write_atomic(path: str, text: str):
    """Write text to path through a temporary file in the same directory"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temporary = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            f.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise
