"""
Report assembly for the command-line front end

Reports are plain dicts rendered with sorted keys; exact numbers appear as
integers or "p/q" strings. Nothing time-dependent goes into a report, so the
same input always renders to the same bytes.
"""

import json
import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence

from .config import FORMAT_VERSION, TOOL_VERSION
from .exceptions import EnumerationCapExceeded
from .lattice import (
    EpsilonCertificate,
    LatticeSpec,
    MartingaleReport,
    build_lattice,
    epsilon_strategies,
    martingale_structure,
    verify_epsilon_optimality,
)
from .models import (
    Arithmetic,
    AssumptionReport,
    Deviation,
    DynkinGame,
    EquilibriumCertificate,
    MinimaxReport,
    StoppingTime,
    ValueProcess,
)
from .oracle import EquilibriumOracle
from .solver import DynkinSolver
from .tree import expected_payoff, expected_stop_time

logger = logging.getLogger(__name__)


def render(report: Dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + '\n'


def _header(command: str) -> Dict[str, Any]:
    return {'format_version': FORMAT_VERSION, 'tool_version': TOOL_VERSION, 'command': command}


def game_summary(game: DynkinGame) -> Dict[str, Any]:
    return {
        'name': game.name,
        'mode': game.arithmetic.mode.value,
        'flavor': game.flavor.value,
        'horizon': game.tree.horizon,
        'nodes': len(game.tree),
        'warnings': list(game.warnings),
    }


def value_table(value: ValueProcess) -> Dict[str, Dict[str, Any]]:
    fmt = value.tree.arithmetic.format
    game = value.game
    table = {}
    for node in value.tree.order:
        continuation = value.continuation.get(node)
        table[node] = {
            'x': fmt(game.x[node]),
            'y': fmt(game.y[node]),
            'z': fmt(game.z[node]),
            'V': fmt(value.v[node]),
            'L': fmt(value.lower[node]),
            'U': fmt(value.upper[node]),
            'continuation': None if continuation is None else fmt(continuation),
        }
    return table


def assumption_dict(report: AssumptionReport, arithmetic: Arithmetic, limit: Optional[int] = None) -> Dict[str, Any]:
    violations = report.violations if limit is None else report.violations[:limit]
    return {
        'holds_everywhere': report.holds_everywhere,
        'violation_count': len(report.violations),
        'violations': [
            {'node': v.node_id, 'kind': v.kind.value, 'gap': arithmetic.format(v.gap)}
            for v in violations
        ],
    }


def stopping_nodes(stopping_time: StoppingTime, start: Optional[str] = None) -> List[str]:
    return list(stopping_time.realized_nodes(start))


def deviation_dict(deviation: Deviation, arithmetic: Arithmetic, start: str) -> Dict[str, Any]:
    return {
        'player': deviation.player.value,
        'stops_at': stopping_nodes(deviation.stopping_time, start),
        'gain': arithmetic.format(deviation.gain),
        'base_payoff': arithmetic.format(deviation.base_payoff),
        'deviation_payoff': arithmetic.format(deviation.deviation_payoff),
    }


def minimax_dict(report: MinimaxReport, arithmetic: Arithmetic) -> Dict[str, Any]:
    fmt = arithmetic.format
    start = report.node
    return {
        'maximin': fmt(report.maximin),
        'minimax': fmt(report.minimax),
        'value_candidate': fmt(report.value_candidate),
        'epsilon_star': fmt(report.epsilon_star),
        'has_value': report.has_value,
        'equilibrium_count': report.equilibrium_count,
        'equilibria': [
            {'tau': stopping_nodes(tau, start), 'sigma': stopping_nodes(sigma, start)}
            for tau, sigma in report.equilibria
        ],
        'maximin_tau': stopping_nodes(report.maximin_strategy, start),
        'minimax_sigma': stopping_nodes(report.minimax_strategy, start),
        'strategies_examined': report.strategies_examined,
    }


def certificate_dict(certificate: EquilibriumCertificate, arithmetic: Arithmetic) -> Dict[str, Any]:
    fmt = arithmetic.format
    start = certificate.node
    data: Dict[str, Any] = {'verdict': certificate.verdict.value, 'evidence': certificate.evidence}
    if certificate.epsilon is not None:
        data['epsilon'] = fmt(certificate.epsilon)
    if certificate.strategies is not None:
        tau, sigma = certificate.strategies
        data['tau'] = stopping_nodes(tau, start)
        data['sigma'] = stopping_nodes(sigma, start)
    if certificate.payoff is not None:
        data['payoff'] = fmt(certificate.payoff)
    if certificate.witness is not None:
        data['witness'] = deviation_dict(certificate.witness, arithmetic, start)
    return data


def solve_report(game: DynkinGame, starts: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """Value process, hitting times per start, assumption and sufficient-condition checks"""
    tree = game.tree
    arithmetic = tree.arithmetic
    solver = DynkinSolver(game)
    value = solver.value
    starts = list(tree.order if not starts else starts)

    per_start = {}
    for start in starts:
        tau_star, sigma_star = solver.stopping_times(start)
        per_start[start] = {
            'value': arithmetic.format(value.v[start]),
            'tau_star': stopping_nodes(tau_star, start),
            'sigma_star': stopping_nodes(sigma_star, start),
            'payoff': arithmetic.format(expected_payoff(game, tau_star, sigma_star, start)),
            'martingale_deviation': arithmetic.format(solver.martingale_deviation(tau_star, sigma_star, start)),
        }

    report = _header('solve')
    report.update({
        'game': game_summary(game),
        'nodes': value_table(value),
        'starts': per_start,
        'assumption': assumption_dict(solver.assumption, arithmetic),
        'sufficient_conditions': {
            name: list(nodes) for name, nodes in solver.sufficient_conditions().items()
        },
    })
    return report


def oracle_report(game: DynkinGame, starts: Optional[Sequence[str]] = None, cap: Optional[int] = None,
                  epsilon: Any = 0, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Minimax report and equilibrium certificate per start, plus the
    all-nodes existence characterisation when it fits within cap

    Raises EnumerationCapExceeded when a requested start is too large.
    """
    tree = game.tree
    arithmetic = tree.arithmetic
    oracle = EquilibriumOracle(game, cap=cap, workers=workers)
    value = oracle.value
    starts = list(starts) if starts else [tree.root]

    per_start = {}
    for start in starts:
        minimax = oracle.minimax(start)
        certificate = oracle.find_nash(start, epsilon)
        per_start[start] = {
            'value': arithmetic.format(value.v[start]),
            'minimax': minimax_dict(minimax, arithmetic),
            'certificate': certificate_dict(certificate, arithmetic),
        }
        logger.info(f"Oracle at {start}: {certificate.verdict.value}")

    try:
        check = oracle.characterisation()
        characterisation = {
            'status': 'checked',
            'agrees': check.agrees,
            'assumption_holds': check.assumption_holds,
            'nash_everywhere': check.nash_everywhere,
            'offending_node': check.offending_node,
        }
    except EnumerationCapExceeded as e:
        characterisation = {'status': 'cap_exceeded', 'count': e.count, 'cap': e.cap}

    report = _header('oracle')
    report.update({
        'game': game_summary(game),
        'starts': per_start,
        'assumption': assumption_dict(oracle.solver.assumption, arithmetic),
        'characterisation': characterisation,
    })
    return report


def _epsilon_cell(certificate: EpsilonCertificate, structure: MartingaleReport,
                  arithmetic: Arithmetic, e_tau, e_sigma) -> Dict[str, Any]:
    fmt = arithmetic.format
    return {
        'epsilon': certificate.epsilon,
        'verdict': certificate.verdict.value,
        'gap_max': fmt(certificate.gap_max),
        'gap_min': fmt(certificate.gap_min),
        'E_tau': fmt(e_tau),
        'E_sigma': fmt(e_sigma),
        'martingale': {
            'holds': structure.holds,
            'sub_violations': structure.sub_violations,
            'super_violations': structure.super_violations,
            'max_sub_excess': fmt(structure.max_sub_excess),
            'max_super_excess': fmt(structure.max_super_excess),
        },
    }


def lattice_report(spec: LatticeSpec, epsilons: Iterable[float], steps: Iterable[int]) -> Dict[str, Any]:
    """
    Epsilon certificates and drift checks for every (N, epsilon) cell

    Expected stop times are in step units. Leaf payoffs are listed for
    lattices with at most 64 steps.
    """
    epsilons = list(epsilons)
    cells = {}
    for n in steps:
        game = build_lattice(spec, n)
        tree = game.tree
        arithmetic = tree.arithmetic
        solver = DynkinSolver(game)
        value = solver.value
        rows = []
        for epsilon in epsilons:
            pair = epsilon_strategies(game, value, epsilon=epsilon)
            certificate = verify_epsilon_optimality(game, value, pair)
            structure = martingale_structure(game, value, pair)
            rows.append(_epsilon_cell(certificate, structure, arithmetic,
                                      expected_stop_time(tree, pair.tau), expected_stop_time(tree, pair.sigma)))
        cell = {
            'value_root': arithmetic.format(value.v[tree.root]),
            'nodes': len(tree),
            'assumption': assumption_dict(solver.assumption, arithmetic, limit=10),
            'epsilons': rows,
        }
        if n <= 64:
            cell['leaf_z'] = {leaf: arithmetic.format(game.z[leaf]) for leaf in tree.leaves}
        cells[str(n)] = cell

    report = _header('lattice')
    report.update({'spec': spec.to_dict(), 'cells': cells})
    return report


def lattice_assumption_holds(report: Dict[str, Any]) -> bool:
    return all(cell['assumption']['holds_everywhere'] for cell in report['cells'].values())


def generate_report(seed: int, mode: str, depth: int, branching: int,
                    games: Sequence[DynkinGame], files: Sequence[str]) -> Dict[str, Any]:
    entries = []
    for game, path in zip(games, files):
        assumption = DynkinSolver(game).assumption
        entries.append({
            'file': path,
            'name': game.name,
            'nodes': len(game.tree),
            'flavor': game.flavor.value,
            'assumption_holds': assumption.holds_everywhere,
        })
    report = _header('generate')
    report.update({'seed': seed, 'mode': mode, 'depth': depth, 'branch': branching, 'games': entries})
    return report
