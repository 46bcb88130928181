import pytest

from conftest import ACCEPTANCE_CAP
from dynkin_games.exceptions import EnumerationCapExceeded, PreconditionError
from dynkin_games.models import Player, StoppingTime, Verdict
from dynkin_games.oracle import (
    EquilibriumOracle,
    best_deviation,
    best_response_max,
    best_response_min,
    brute_force_minimax,
    certify_epsilon,
    check_existence_characterisation,
    find_nash,
    improve_strategy,
    improve_strategy_min,
    is_nash,
    modified_payoff,
)
from dynkin_games.solver import check_assumption, compute_value, envelope_game, optimal_stopping_times
from dynkin_games.tree import count_stopping_times, enumerate_stopping_times, leaf_paths, realized_payoff


def stop(game):
    return StoppingTime.immediate(game.tree)


def wait(game):
    return StoppingTime.at_leaves(game.tree)


def test_best_response_max_case_c(case_c):
    assert best_response_max(case_c, wait(case_c)).value == 5
    assert best_response_max(case_c, wait(case_c)).stopping_time.stops_at('n0')
    reply = best_response_max(case_c, stop(case_c))
    assert reply.value == 4
    assert not reply.stopping_time.stops_at('n0')


def test_best_response_max_against_immediate_stop(case_a, case_b):
    for game in (case_a, case_b):
        assert best_response_max(game, stop(game)).value == max(game.z['n0'], game.y['n0'])


def test_best_response_min_case_c(case_c):
    reply = best_response_min(case_c, wait(case_c))
    assert reply.value == 2
    assert not reply.stopping_time.stops_at('n0')
    assert best_response_min(case_c, stop(case_c)).value == 0


def test_best_response_min_against_immediate_stop(case_a, case_b):
    for game in (case_a, case_b):
        assert best_response_min(game, stop(game)).value == min(game.z['n0'], game.x['n0'])


def test_minimax_case_c(case_c):
    report = brute_force_minimax(case_c)
    assert report.maximin == 2
    assert report.minimax == 4
    assert report.value_candidate == 2
    assert report.epsilon_star == 2
    assert not report.has_value
    assert report.equilibria == ()
    assert report.strategies_examined == 2
    assert report.maximin_strategy.realized_nodes() == ('n1', 'n2')
    assert report.minimax_strategy.realized_nodes() == ('n0',)


def test_minimax_case_a(case_a):
    report = brute_force_minimax(case_a)
    assert report.maximin == report.minimax == report.value_candidate == 2
    assert report.has_value
    assert report.equilibrium_count == 1
    tau, sigma = report.equilibria[0]
    assert tau.realized_nodes() == sigma.realized_nodes() == ('n1', 'n2')


def test_minimax_at_leaf(case_c):
    report = brute_force_minimax(case_c, 'n2')
    assert report.maximin == report.minimax == 4
    assert report.has_value


def test_minimax_respects_cap(case_c):
    with pytest.raises(EnumerationCapExceeded):
        brute_force_minimax(case_c, cap=1)


def test_minimax_is_independent_of_worker_count(binary_game):
    serial = brute_force_minimax(binary_game, workers=1)
    parallel = brute_force_minimax(binary_game, workers=2)
    assert (serial.maximin, serial.minimax, serial.equilibrium_count) == \
        (parallel.maximin, parallel.minimax, parallel.equilibrium_count)
    assert serial.maximin_strategy.key() == parallel.maximin_strategy.key()
    assert serial.minimax_strategy.key() == parallel.minimax_strategy.key()


def test_find_nash_case_a(case_a):
    certificate = find_nash(case_a)
    assert certificate.verdict == Verdict.NASH_EXISTS
    assert certificate.payoff == 2
    tau, sigma = certificate.strategies
    assert tau.realized_nodes() == sigma.realized_nodes() == ('n1', 'n2')


def test_find_nash_case_b(case_b):
    certificate = find_nash(case_b)
    assert certificate.verdict == Verdict.NASH_EXISTS
    assert certificate.payoff == 3
    tau, sigma = certificate.strategies
    assert tau.realized_nodes() == sigma.realized_nodes() == ('n0',)


def test_find_nash_case_c(case_c):
    certificate = find_nash(case_c)
    assert certificate.verdict == Verdict.NONE
    assert certificate.epsilon == 2
    assert certificate.minimax.maximin == 2
    assert certificate.minimax.minimax == 4
    witness = certificate.witness
    assert witness.player == Player.MAX
    assert witness.gain >= 2
    assert witness.deviation_payoff - witness.base_payoff == witness.gain


def test_find_nash_accepts_epsilon_equilibrium(case_c):
    certificate = find_nash(case_c, epsilon=2)
    assert certificate.verdict == Verdict.EPSILON_ONLY
    assert certificate.epsilon == 2
    tau, sigma = certificate.strategies
    assert certify_epsilon(case_c, tau, sigma, epsilon=2)
    assert find_nash(case_c, epsilon=1).verdict == Verdict.NONE


def test_find_nash_reports_cap(case_c):
    certificate = find_nash(case_c, cap=1)
    assert certificate.verdict == Verdict.NONE_WITHIN_CAP
    assert certificate.witness is not None


def test_find_nash_at_leaf(case_c):
    certificate = find_nash(case_c, 'n1')
    assert certificate.verdict == Verdict.NASH_EXISTS
    assert certificate.payoff == 0


def test_certify_epsilon_case_c(case_c):
    assert certify_epsilon(case_c, stop(case_c), stop(case_c), epsilon=2)
    assert not certify_epsilon(case_c, stop(case_c), stop(case_c), epsilon=1)


def test_certify_epsilon_nash_pair(case_a):
    tau_star, sigma_star = optimal_stopping_times(compute_value(case_a))
    assert certify_epsilon(case_a, tau_star, sigma_star)
    assert is_nash(case_a, tau_star, sigma_star)


def test_negative_epsilon_rejected(case_a):
    with pytest.raises(PreconditionError):
        certify_epsilon(case_a, stop(case_a), stop(case_a), epsilon=-1)


def test_improvement_is_identity_without_trigger(case_a, binary_game):
    tau, sigma = wait(case_a), stop(case_a)
    assert improve_strategy(case_a, tau, sigma).stop == tau.stop
    for tau in enumerate_stopping_times(binary_game.tree):
        assert improve_strategy(binary_game, tau, tau).stop == tau.stop
        assert improve_strategy_min(binary_game, tau, tau).stop == tau.stop


def test_improvement_joins_when_z_beats_y(case_b):
    tau_hat = improve_strategy(case_b, wait(case_b), stop(case_b))
    assert tau_hat.stops_at('n0')


def test_improved_strategies_dominate_modified_payoff(general_corpus):
    checked = 0
    for game in general_corpus:
        tree = game.tree
        if count_stopping_times(tree, distinct=True) > 8:
            continue
        times = list(enumerate_stopping_times(tree, distinct=True))
        for tau in times:
            for sigma in times:
                tau_hat = improve_strategy(game, tau, sigma)
                sigma_hat = improve_strategy_min(game, tau, sigma)
                for leaf, _ in leaf_paths(tree):
                    baseline = modified_payoff(game, tau, sigma, leaf)
                    assert realized_payoff(game, tau_hat, sigma, leaf) >= baseline
                    assert realized_payoff(game, tau, sigma_hat, leaf) <= baseline
        checked += 1
    assert checked > 0


def test_minimax_sandwich_on_corpus(general_corpus):
    for game in general_corpus:
        value = compute_value(game)
        holds = check_assumption(game, value).holds_everywhere
        for node in game.tree.order:
            report = brute_force_minimax(game, node, value=value)
            assert report.maximin <= value.v[node] <= report.minimax
            if holds:
                assert report.maximin == value.v[node] == report.minimax


def test_refutations_carry_strict_improvements(general_corpus):
    for game in general_corpus:
        for node in game.tree.order:
            certificate = find_nash(game, node)
            if certificate.verdict == Verdict.NASH_EXISTS:
                assert best_deviation(game, *certificate.strategies, node) is None
                continue
            assert certificate.verdict == Verdict.NONE
            assert certificate.witness.gain > 0
            assert certificate.epsilon > 0


def test_characterisation_cases(case_a, case_c):
    check = check_existence_characterisation(case_a)
    assert check.agrees and check.assumption_holds and check.nash_everywhere
    check = check_existence_characterisation(case_c)
    assert check.agrees
    assert not check.assumption_holds
    assert not check.nash_everywhere
    assert check.certificates['n0'].verdict == Verdict.NONE
    assert check.offending_node is None


def test_characterisation_refuses_over_cap(case_c):
    with pytest.raises(EnumerationCapExceeded):
        check_existence_characterisation(case_c, cap=1)


def test_characterisation_on_corpus(general_corpus):
    for game in general_corpus:
        check = check_existence_characterisation(game)
        assert check.agrees, game.name
        assert check.assumption_holds == check.nash_everywhere


def test_nash_pairs_transfer_to_envelope_game(general_corpus, z_between_corpus):
    transferred = 0
    for game in list(general_corpus) + list(z_between_corpus):
        value = compute_value(game)
        if not check_assumption(game, value).holds_everywhere:
            continue
        envelopes_only = envelope_game(game)
        for node in game.tree.internal_nodes:
            report = brute_force_minimax(game, node, value=value)
            for tau, sigma in report.equilibria:
                assert is_nash(envelopes_only, tau, sigma, node)
                transferred += 1
    assert transferred > 0


def test_oracle_shares_one_solve(case_c):
    oracle = EquilibriumOracle(case_c, cap=10, workers=1)
    assert oracle.value is oracle.solver.value
    assert oracle.minimax().minimax == 4
    assert oracle.find_nash().verdict == Verdict.NONE
    assert oracle.find_nash(epsilon=2).verdict == Verdict.EPSILON_ONLY
    assert oracle.certify(stop(case_c), stop(case_c), epsilon=2)
    check = oracle.characterisation()
    assert check.agrees and not check.nash_everywhere


def test_oracle_cap_applies_to_characterisation(case_c):
    with pytest.raises(EnumerationCapExceeded):
        EquilibriumOracle(case_c, cap=1).characterisation()


@pytest.mark.slow
def test_oracle_acceptance_suite(acceptance_general_corpus):
    for game in acceptance_general_corpus:
        oracle = EquilibriumOracle(game, cap=ACCEPTANCE_CAP, workers=1)
        value = oracle.value
        holds = oracle.solver.assumption.holds_everywhere
        for node in game.tree.internal_nodes:
            report = oracle.minimax(node)
            assert report.maximin <= value.v[node] <= report.minimax
            if holds:
                assert report.maximin == value.v[node] == report.minimax

        check = oracle.characterisation()
        assert check.agrees, game.name
        for certificate in check.certificates.values():
            if certificate.verdict == Verdict.NONE:
                witness = certificate.witness
                assert witness.gain > 0
                assert abs(witness.deviation_payoff - witness.base_payoff) == witness.gain
