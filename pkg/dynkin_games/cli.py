"""
Command-line front end

Exit codes: 0 success, 1 invalid input, 2 enumeration cap or node budget
exceeded, 3 computed successfully but V leaves [min(X, Y), max(X, Y)]
somewhere. Nothing is written on exit 1.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from .config import LOG_FORMAT, LOG_LEVEL, MAX_GENERATED_BRANCHING, MAX_GENERATED_DEPTH
from .database import RunStore, digest
from .exceptions import (
    BudgetExceeded,
    CertificationError,
    EnumerationCapExceeded,
    GameValidationError,
    PreconditionError,
)
from .gamefile import dumps_game, loads_game, loads_lattice_spec, read_text, write_atomic
from .generator import GeneratorMode, generate_games
from .lattice import convergence_study
from .models import Arithmetic, ArithmeticMode
from .reports import (
    generate_report,
    lattice_assumption_holds,
    lattice_report,
    oracle_report,
    render,
    solve_report,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_LIMIT = 2
EXIT_ASSUMPTION = 3


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog='dynkin',
        description='Solve, verify and study zero-sum Dynkin games on finite trees and lattices.',
    )
    parser.add_argument('--db', help='run store URL (default from DYNKIN_DATABASE_URL)')
    parser.add_argument('--workers', type=int, help='worker processes for enumeration and studies')
    parser.add_argument('--verbose', action='store_true', help='log progress')
    parser.add_argument('--debug', action='store_true', help='log per-node details')
    commands = parser.add_subparsers(dest='command', required=True)

    solve = commands.add_parser('solve', help='value process, hitting times and assumption report')
    solve.add_argument('game')
    solve.add_argument('--start', nargs='+', help='subgame start nodes (default: every node)')
    solve.add_argument('--mode', choices=[m.value for m in ArithmeticMode])
    solve.add_argument('--tolerance', type=float)
    solve.add_argument('--out')
    solve.add_argument('--store', action='store_true')

    oracle = commands.add_parser('oracle', help='exhaustive minimax and equilibrium certificates')
    oracle.add_argument('game')
    oracle.add_argument('--start', nargs='+', help='subgame start nodes (default: root)')
    oracle.add_argument('--cap', type=int, help='enumeration cap')
    oracle.add_argument('--epsilon', default='0', help='accept epsilon-equilibria up to this gap')
    oracle.add_argument('--mode', choices=[m.value for m in ArithmeticMode])
    oracle.add_argument('--tolerance', type=float)
    oracle.add_argument('--out')
    oracle.add_argument('--store', action='store_true')

    lattice = commands.add_parser('lattice', help='epsilon strategies and certificates on lattices')
    lattice.add_argument('spec')
    lattice.add_argument('--epsilon', type=float, nargs='+', help='default: the spec file epsilons')
    lattice.add_argument('--steps', type=int, nargs='+', help='default: the spec file steps')
    lattice.add_argument('--study', action='store_true', help='also emit the convergence table')
    lattice.add_argument('--csv', help='write the convergence table here')
    lattice.add_argument('--format', choices=['json', 'csv'], default='json')
    lattice.add_argument('--out')
    lattice.add_argument('--store', action='store_true')

    generate = commands.add_parser('generate', help='seeded random game files')
    generate.add_argument('--seed', type=int, required=True)
    generate.add_argument('--depth', type=int, default=MAX_GENERATED_DEPTH)
    generate.add_argument('--branch', type=int, default=MAX_GENERATED_BRANCHING)
    generate.add_argument('--count', type=int, default=1)
    generate.add_argument('--mode', choices=[m.value for m in GeneratorMode], default=GeneratorMode.GENERAL.value)
    generate.add_argument('--arithmetic', choices=[m.value for m in ArithmeticMode],
                          default=ArithmeticMode.RATIONAL.value)
    generate.add_argument('--cap', type=int, help='redraw trees with more stopping times than this')
    generate.add_argument('--out-dir', required=True)
    generate.add_argument('--out')
    generate.add_argument('--store', action='store_true')

    report = commands.add_parser('report', help='list stored runs or re-emit one')
    report.add_argument('--run', type=int)
    report.add_argument('--command', dest='run_command', choices=['solve', 'oracle', 'lattice', 'generate'])
    report.add_argument('--format', choices=['json', 'csv'], default='json')
    report.add_argument('--out')

    return parser.parse_args(argv)


def _configure_logging(args: argparse.Namespace):
    level = LOG_LEVEL
    if args.verbose:
        level = 'INFO'
    if args.debug:
        level = 'DEBUG'
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def _emit(text: str, out: Optional[str]):
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _store(args: argparse.Namespace, command: str, text: str, exit_code: int,
           source: Optional[str] = None, seed: Optional[int] = None):
    if not args.store:
        return
    run = RunStore(args.db).save_run(command, text, exit_code,
                                     input_digest=digest(source) if source is not None else None, seed=seed)
    logger.info(f"Stored {command} run {run.id}")


def cmd_solve(args: argparse.Namespace) -> int:
    source = read_text(args.game)
    game_file = loads_game(source, mode=args.mode, tolerance=args.tolerance)
    report = solve_report(game_file.game, args.start or game_file.starts)
    code = EXIT_OK if report['assumption']['holds_everywhere'] else EXIT_ASSUMPTION
    text = render(report)
    _emit(text, args.out)
    _store(args, 'solve', text, code, source)
    return code


def cmd_oracle(args: argparse.Namespace) -> int:
    source = read_text(args.game)
    game_file = loads_game(source, mode=args.mode, tolerance=args.tolerance)
    report = oracle_report(game_file.game, args.start or game_file.starts or None, cap=args.cap,
                           epsilon=args.epsilon, workers=args.workers)
    code = EXIT_OK if report['assumption']['holds_everywhere'] else EXIT_ASSUMPTION
    text = render(report)
    _emit(text, args.out)
    _store(args, 'oracle', text, code, source)
    return code


def cmd_lattice(args: argparse.Namespace) -> int:
    source = read_text(args.spec)
    spec = loads_lattice_spec(source)
    epsilons = args.epsilon if args.epsilon is not None else list(spec.epsilons)
    steps = args.steps if args.steps is not None else list(spec.steps)
    if not epsilons:
        raise PreconditionError("no epsilon given on the command line or in the spec")
    for epsilon in epsilons:
        if not epsilon > 0:
            raise PreconditionError("epsilon must be positive; use solve for the zero hitting times")

    report = lattice_report(spec, epsilons, steps)
    code = EXIT_OK if lattice_assumption_holds(report) else EXIT_ASSUMPTION
    text = render(report)
    if args.study or args.format == 'csv':
        table = convergence_study(spec, epsilons, steps, workers=args.workers).to_csv(index=False)
        if args.csv:
            write_atomic(args.csv, table)
        if args.format == 'csv':
            text = table
    _emit(text, args.out)
    _store(args, 'lattice', text, code, source)
    return code


def cmd_generate(args: argparse.Namespace) -> int:
    arithmetic = Arithmetic(ArithmeticMode(args.arithmetic))
    games = generate_games(args.seed, args.depth, args.branch, args.count, args.mode,
                           arithmetic=arithmetic, cap=args.cap)
    files = []
    for index, game in enumerate(games):
        path = os.path.join(args.out_dir, f"{args.mode}-{args.seed}-{index:04d}.json")
        write_atomic(path, dumps_game(game))
        files.append(path)
    text = render(generate_report(args.seed, args.mode, args.depth, args.branch, games, files))
    _emit(text, args.out)
    _store(args, 'generate', text, EXIT_OK, seed=args.seed)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    store = RunStore(args.db)
    if args.run is not None:
        run = store.get_run(args.run)
        if run is None:
            raise GameValidationError(f"no stored run with id {args.run}", field='run')
        _emit(run.report, args.out)
        return EXIT_OK
    frame = store.runs_frame(args.run_command)
    if args.format == 'csv':
        text = frame.to_csv(index=False)
    else:
        text = json.dumps(frame.to_dict(orient='records'), indent=2, sort_keys=True, default=str) + '\n'
    _emit(text, args.out)
    return EXIT_OK


COMMANDS = {
    'solve': cmd_solve,
    'oracle': cmd_oracle,
    'lattice': cmd_lattice,
    'generate': cmd_generate,
    'report': cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except (GameValidationError, PreconditionError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_INVALID
    except (EnumerationCapExceeded, BudgetExceeded) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_LIMIT
    except CertificationError as e:
        logger.error(f"{args.command}: internal cross-check failed: {e}")
        return EXIT_LIMIT


if __name__ == '__main__':
    sys.exit(main())
