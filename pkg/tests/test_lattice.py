import math

import numpy as np
import pytest

from dynkin_games.exceptions import BudgetExceeded, CertificationError, GameValidationError, PreconditionError
from dynkin_games.lattice import (
    STUDY_COLUMNS,
    CertificateVerdict,
    LatticeSpec,
    build_lattice,
    convergence_study,
    epsilon_strategies,
    expand_lattice,
    lattice_size,
    martingale_structure,
    truncate_equilibrium,
    verify_epsilon_optimality,
    zero_hitting_times,
)
from dynkin_games.models import StoppingTime
from dynkin_games.oracle import brute_force_minimax, is_nash
from dynkin_games.solver import (
    check_assumption,
    check_standard,
    compute_value,
    envelope_game,
    optimal_stopping_times,
)
from dynkin_games.tree import expected_stop_time


def walk_spec(**overrides):
    data = {
        'horizon_time': 1.0,
        'steps': [20],
        'model': {'kind': 'random_walk', 'initial_state': 0.0},
        'payoffs': {
            'x': {'form': 'affine', 'intercept': 0.0, 'slope': 1.0},
            'y': {'form': 'shifted', 'base': 'x', 'delta': 1.0},
            'z': {'form': 'shifted', 'base': 'x', 'delta': 0.5},
        },
        'epsilons': [0.5, 0.1, 0.01],
    }
    data.update(overrides)
    return LatticeSpec.from_dict(data)


def game_option_spec(**overrides):
    data = {
        'horizon_time': 1.0,
        'steps': [50],
        'model': {'kind': 'market', 'initial_state': 100.0, 'volatility': 0.2, 'rate': 0.05},
        'discount_rate': 0.05,
        'payoffs': {
            'x': {'form': 'put', 'strike': 100.0},
            'y': {'form': 'shifted', 'base': 'x', 'delta': 5.0},
            'z': {'form': 'shifted', 'base': 'x', 'delta': 0.0},
        },
        'epsilons': [0.5, 0.1, 0.01],
    }
    data.update(overrides)
    return LatticeSpec.from_dict(data)


def constant_spec(c=3.0):
    constant = {'form': 'constant', 'value': c}
    return LatticeSpec.from_dict({
        'horizon_time': 1.0,
        'steps': [4, 8],
        'model': {'kind': 'random_walk'},
        'payoffs': {'x': constant, 'y': constant, 'z': constant},
        'epsilons': [0.1, 0.5],
    })


def test_one_step_walk():
    spec = walk_spec(horizon_time=4.0, steps=[1], payoffs={
        label: {'form': 'affine', 'intercept': 0.0, 'slope': 1.0} for label in ('x', 'y', 'z')
    })
    game = build_lattice(spec)
    tree = game.tree
    assert tree.recombining
    assert tree.order == ('0:0', '1:0', '1:1')
    assert game.z['1:1'] == pytest.approx(2.0)
    assert game.z['1:0'] == pytest.approx(-2.0)
    assert game.x['0:0'] == game.y['0:0'] == game.z['0:0'] == 0.0
    assert dict(tree.children('0:0')) == {'1:0': 0.5, '1:1': 0.5}


def test_constant_payoffs():
    game = build_lattice(constant_spec(), 4)
    assert len(game.tree) == lattice_size(4) == 15
    for process in (game.x, game.y, game.z):
        assert set(process.values()) == {3.0}


def test_market_call_leaves():
    spec = LatticeSpec.from_dict({
        'horizon_time': 1.0,
        'steps': [2],
        'model': {'kind': 'market', 'initial_state': 4, 'up': 2, 'down': 0.5, 'probability': 0.5},
        'payoffs': {
            'x': {'form': 'constant', 'value': 0},
            'y': {'form': 'constant', 'value': 20},
            'z': {'form': 'call', 'strike': 5},
        },
    })
    game = build_lattice(spec)
    leaves = {leaf: game.z[leaf] for leaf in game.tree.leaves}
    assert leaves == {'2:0': 0.0, '2:1': 0.0, '2:2': 11.0}
    assert all(game.x[leaf] == game.y[leaf] == game.z[leaf] for leaf in game.tree.leaves)
    assert game.warnings == ()


def test_derived_market_factors():
    up, down, p = game_option_spec().model.factors(1.0, 50)
    assert up * down == pytest.approx(1.0)
    assert up == pytest.approx(math.exp(0.2 * math.sqrt(1 / 50)))
    assert 0 < p < 1


def test_discounting():
    spec = constant_spec()
    spec = LatticeSpec.from_dict({**spec.to_dict(), 'discount_rate': 1.0})
    game = build_lattice(spec, 4)
    assert game.z['4:0'] == pytest.approx(3.0 * math.exp(-1.0))
    assert game.z['0:0'] == pytest.approx(3.0)


def test_spec_round_trip():
    spec = game_option_spec()
    assert LatticeSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize('model', [
    {'kind': 'market', 'initial_state': 4, 'up': 0.5, 'down': 2, 'probability': 0.5},
    {'kind': 'market', 'initial_state': 4, 'up': 2, 'down': 0.5, 'probability': 1.5},
    {'kind': 'market', 'initial_state': 4, 'up': 2},
    {'kind': 'market', 'initial_state': 4},
    {'kind': 'brownian'},
])
def test_invalid_models(model):
    with pytest.raises(GameValidationError):
        walk_spec(model=model)


def test_invalid_payoffs():
    with pytest.raises(GameValidationError):
        walk_spec(payoffs={'x': {'form': 'affine', 'intercept': 0, 'slope': 1}})
    with pytest.raises(GameValidationError):
        walk_spec(payoffs={
            'x': {'form': 'affine', 'intercept': 0, 'slope': 1},
            'y': {'form': 'shifted', 'base': 'y', 'delta': 1},
            'z': {'form': 'constant', 'value': 0},
        })
    with pytest.raises(GameValidationError):
        walk_spec(payoffs={
            'x': {'form': 'shifted', 'base': 'y', 'delta': -1},
            'y': {'form': 'shifted', 'base': 'x', 'delta': 1},
            'z': {'form': 'constant', 'value': 0},
        })
    with pytest.raises(GameValidationError):
        walk_spec(steps=[0])


def test_node_budget():
    with pytest.raises(BudgetExceeded):
        build_lattice(walk_spec(), 3000)


def test_epsilon_strategies_constant_game():
    game = build_lattice(constant_spec(), 8)
    value = compute_value(game)
    for epsilon in (1.0, 0.1, 1e-6):
        pair = epsilon_strategies(game, value, epsilon=epsilon)
        assert pair.sigma.realized_nodes() == ('0:0',)
        assert pair.tau.realized_nodes() == ('0:0',)


def test_epsilon_strategies_large_epsilon():
    game = build_lattice(walk_spec(), 20)
    value = compute_value(game)
    widest = max(value.upper[n] - value.v[n] for n in game.tree.order)
    pair = epsilon_strategies(game, value, epsilon=widest + 1)
    assert pair.sigma.realized_nodes() == ('0:0',)


def test_epsilon_strategies_case_a(case_a):
    pair = epsilon_strategies(case_a, compute_value(case_a), epsilon=0.5)
    assert not pair.sigma.stops_at('n0')
    assert pair.sigma.realized_nodes() == ('n1', 'n2')


def test_epsilon_must_be_positive(case_a):
    with pytest.raises(PreconditionError, match='epsilon must be positive'):
        epsilon_strategies(case_a, compute_value(case_a), epsilon=0)
    with pytest.raises(TypeError):
        epsilon_strategies(case_a, compute_value(case_a))


def test_hitting_sets_shrink_with_epsilon():
    game = build_lattice(game_option_spec(), 50)
    value = compute_value(game)
    small = epsilon_strategies(game, value, epsilon=0.01)
    large = epsilon_strategies(game, value, epsilon=0.5)
    for node in game.tree.order:
        assert not small.tau.stops_at(node) or large.tau.stops_at(node)
        assert not small.sigma.stops_at(node) or large.sigma.stops_at(node)
    assert expected_stop_time(game.tree, small.sigma) >= expected_stop_time(game.tree, large.sigma)


def test_zero_hitting_times_match_solver(general_corpus):
    for game in general_corpus[:20]:
        value = compute_value(game)
        for start in game.tree.order:
            tau_zero, sigma_zero = zero_hitting_times(game, value, start)
            tau_star, sigma_star = optimal_stopping_times(value, start)
            assert tau_zero.stop == tau_star.stop
            assert sigma_zero.stop == sigma_star.stop


@pytest.mark.parametrize('spec_factory', [walk_spec, game_option_spec])
def test_standard_lattices_are_certified(spec_factory):
    spec = spec_factory()
    game = build_lattice(spec)
    assert check_standard(game)
    value = compute_value(game)
    root = game.tree.root
    for epsilon in (0.5, 0.1, 0.01):
        pair = epsilon_strategies(game, value, epsilon=epsilon)
        certificate = verify_epsilon_optimality(game, value, pair)
        assert certificate.verdict == CertificateVerdict.CERTIFIED
        assert certificate.gap_max <= epsilon + 1e-9
        assert certificate.gap_min <= epsilon + 1e-9
        assert certificate.value == value.v[root]
        assert martingale_structure(game, value, pair).holds


def test_certificate_not_applicable_when_assumption_fails(case_c):
    value = compute_value(case_c)
    pair = epsilon_strategies(case_c, value, epsilon=1)
    certificate = verify_epsilon_optimality(case_c, value, pair)
    assert certificate.verdict == CertificateVerdict.NOT_APPLICABLE
    assert certificate.assumption.violated_at('n0')


def test_martingale_structure_cases(case_a):
    value = compute_value(case_a)
    report = martingale_structure(case_a, value, epsilon_strategies(case_a, value, epsilon=0.5))
    assert report.holds
    assert report.nodes_before_tau == report.nodes_before_sigma == 1
    assert report.max_sub_excess == report.max_super_excess == 0

    game = build_lattice(constant_spec(), 4)
    value = compute_value(game)
    assert martingale_structure(game, value, epsilon_strategies(game, value, epsilon=0.1)).holds


def test_truncation_is_idempotent_on_zero_hitting_times(case_a):
    value = compute_value(case_a)
    tau_zero, sigma_zero = zero_hitting_times(case_a, value)
    truncated = truncate_equilibrium(case_a, value, tau_zero, sigma_zero)
    assert truncated.tau.stop == tau_zero.stop
    assert truncated.sigma.stop == sigma_zero.stop
    assert truncated.is_nash


def test_truncation_case_b(case_b):
    value = compute_value(case_b)
    never = StoppingTime.at_leaves(case_b.tree)
    truncated = truncate_equilibrium(case_b, value, never, never, check_input=False)
    assert truncated.tau.realized_nodes() == ('n0',)
    assert truncated.sigma.realized_nodes() == ('n0',)
    assert truncated.is_nash
    with pytest.raises(CertificationError):
        truncate_equilibrium(case_b, value, never, never)


def test_truncated_envelope_equilibria_are_nash(general_corpus, z_between_corpus):
    checked = 0
    for game in list(general_corpus) + list(z_between_corpus):
        value = compute_value(game)
        if not check_assumption(game, value).holds_everywhere:
            continue
        report = brute_force_minimax(envelope_game(game))
        assert report.has_value
        for tau, sigma in report.equilibria:
            truncated = truncate_equilibrium(game, value, tau, sigma)
            assert truncated.is_nash
            assert is_nash(game, truncated.tau, truncated.sigma)
        checked += 1
    assert checked > 0


def test_expand_lattice_matches_recombined_solution():
    game = build_lattice(walk_spec(), 3)
    expanded, source = expand_lattice(game)
    assert not expanded.tree.recombining
    assert len(expanded.tree) == 15
    assert source['e0'] == '0:0'
    assert all(source[leaf].startswith('3:') for leaf in expanded.tree.leaves)
    value = compute_value(game)
    expanded_value = compute_value(expanded)
    for node, origin in source.items():
        assert expanded_value.v[node] == pytest.approx(value.v[origin])
    report = brute_force_minimax(expanded)
    assert report.has_value
    assert report.maximin == pytest.approx(value.v['0:0'])


def test_expand_lattice_limit():
    with pytest.raises(BudgetExceeded):
        expand_lattice(build_lattice(walk_spec(), 20), max_steps=12)


def test_study_constant_game():
    frame = convergence_study(constant_spec())
    assert list(frame.columns) == STUDY_COLUMNS
    assert len(frame) == 4
    assert list(frame['N']) == [4, 4, 8, 8]
    assert list(frame['epsilon']) == [0.1, 0.5, 0.1, 0.5]
    assert (frame['value_root'] == 3.0).all()
    assert (frame['gap_max'] == 0).all() and (frame['gap_min'] == 0).all()
    assert (frame['E_tau'] == 0).all()


def test_study_stop_times_grow_as_epsilon_shrinks():
    frame = convergence_study(walk_spec(steps=[30]), epsilons=[0.01, 0.5])
    small, large = frame.iloc[0], frame.iloc[1]
    assert small['E_sigma'] >= large['E_sigma']
    assert small['E_tau'] >= large['E_tau']
    assert (frame['gap_max'] <= frame['epsilon'] + 1e-9).all()


def test_study_is_independent_of_worker_count():
    spec = walk_spec(steps=[10, 20, 30])
    serial = convergence_study(spec, workers=1).drop(columns='runtime_ms')
    parallel = convergence_study(spec, workers=2).drop(columns='runtime_ms')
    assert serial.equals(parallel)


def test_study_rejects_bad_input():
    with pytest.raises(PreconditionError):
        convergence_study(walk_spec(), epsilons=[0.0])
    with pytest.raises(PreconditionError):
        convergence_study(walk_spec(epsilons=[]))
    with pytest.raises(BudgetExceeded):
        convergence_study(walk_spec(), steps=[5000])


@pytest.mark.slow
def test_game_option_lattice_suite():
    spec = game_option_spec(steps=[50, 100, 200])
    frame = convergence_study(spec)
    assert (frame['gap_max'] <= frame['epsilon'] + 1e-9).all()
    assert (frame['gap_min'] <= frame['epsilon'] + 1e-9).all()
    for n in spec.steps:
        game = build_lattice(spec, n)
        value = compute_value(game)
        for epsilon in spec.epsilons:
            assert martingale_structure(game, value, epsilon_strategies(game, value, epsilon=epsilon)).holds


def between_spec(base='y', steps=20):
    """Z equals X or Y while X and Y cross, so the game is not standard but Z stays between them"""
    return LatticeSpec.from_dict({
        'horizon_time': 1.0,
        'steps': [steps],
        'model': {'kind': 'random_walk', 'initial_state': 0.0},
        'payoffs': {
            'x': {'form': 'put', 'strike': 0.0},
            'y': {'form': 'constant', 'value': 0.5},
            'z': {'form': 'shifted', 'base': base, 'delta': 0.0},
        },
        'epsilons': [0.5, 0.1, 0.01],
    })


def seeded_lattice_specs(seed, count):
    """Random walk and market lattices whose payoffs keep Z between X and Y"""
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(count):
        if rng.random() < 0.5:
            model = {'kind': 'random_walk', 'initial_state': float(rng.uniform(-1, 1))}
            strike = float(rng.uniform(-1, 1))
            level = float(rng.uniform(0.1, 1.5))
        else:
            model = {'kind': 'market', 'initial_state': 100.0,
                     'volatility': float(rng.uniform(0.1, 0.4)), 'rate': float(rng.uniform(0, 0.05))}
            strike = float(rng.uniform(90, 110))
            level = float(rng.uniform(1, 10))
        form = str(rng.choice(['put', 'call']))
        if rng.random() < 0.5:
            spread = float(rng.uniform(0.5, 5))
            payoffs = {
                'x': {'form': form, 'strike': strike},
                'y': {'form': 'shifted', 'base': 'x', 'delta': spread},
                'z': {'form': 'shifted', 'base': 'x', 'delta': float(rng.uniform(0, spread))},
            }
        else:
            payoffs = {
                'x': {'form': form, 'strike': strike},
                'y': {'form': 'constant', 'value': level},
                'z': {'form': 'shifted', 'base': str(rng.choice(['x', 'y'])), 'delta': 0.0},
            }
        specs.append(LatticeSpec.from_dict({
            'horizon_time': 1.0,
            'steps': [int(rng.choice([50, 100, 200]))],
            'model': model,
            'discount_rate': float(rng.uniform(0, 0.05)),
            'payoffs': payoffs,
            'epsilons': [0.5, 0.1, 0.01],
        }))
    return specs


@pytest.mark.parametrize('base', ['x', 'y'])
def test_general_lattice_with_z_between_is_certified(base):
    game = build_lattice(between_spec(base))
    assert not check_standard(game)
    value = compute_value(game)
    assert check_assumption(game, value).holds_everywhere
    for epsilon in (0.5, 0.1, 0.01):
        pair = epsilon_strategies(game, value, epsilon=epsilon)
        certificate = verify_epsilon_optimality(game, value, pair)
        assert certificate.verdict == CertificateVerdict.CERTIFIED
        assert certificate.gap_max <= epsilon + 1e-9
        assert certificate.gap_min <= epsilon + 1e-9
        assert martingale_structure(game, value, pair).holds


def test_seeded_lattice_specs_are_reproducible():
    first = [spec.to_dict() for spec in seeded_lattice_specs(3, 5)]
    assert first == [spec.to_dict() for spec in seeded_lattice_specs(3, 5)]


@pytest.mark.slow
def test_seeded_lattice_suite():
    specs = seeded_lattice_specs(31, 24)
    for spec in specs:
        game = build_lattice(spec)
        value = compute_value(game)
        assert check_assumption(game, value).holds_everywhere
        for epsilon in spec.epsilons:
            pair = epsilon_strategies(game, value, epsilon=epsilon)
            certificate = verify_epsilon_optimality(game, value, pair)
            assert certificate.verdict == CertificateVerdict.CERTIFIED
            assert certificate.gap_max <= epsilon + 1e-9
            assert certificate.gap_min <= epsilon + 1e-9
            assert martingale_structure(game, value, pair).holds


@pytest.mark.slow
def test_truncation_acceptance_suite(acceptance_z_between_corpus):
    for game in acceptance_z_between_corpus:
        value = compute_value(game)
        assert check_assumption(game, value).holds_everywhere
        report = brute_force_minimax(envelope_game(game))
        assert report.has_value
        for tau, sigma in report.equilibria:
            assert truncate_equilibrium(game, value, tau, sigma).is_nash
