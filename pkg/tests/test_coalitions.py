"""Characteristic function, Shapley allocation and gain report tests."""

import math

import numpy as np
import pytest

from emissiongame.coalitions import (
    CharacteristicFunction,
    all_coalitions,
    characteristic_function,
    coalition,
    cooperation_gains,
    shapley_value,
)
from emissiongame.model import GameInputError, GameSpec, PlayerParams
from emissiongame.solver import cooperative_controls, nash_controls, player_payoff


def make_spec(bs, ds, delta, t0=0.0, t_end=1.0, x0=0.0):
    players = [PlayerParams(f"p{i + 1}", b, d) for i, (b, d) in enumerate(zip(bs, ds))]
    return GameSpec(players=players, t0=t0, t_end=t_end, delta=delta, x0=x0)


def random_specs(count, seed):
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(count):
        n = int(rng.integers(2, 5))
        specs.append(make_spec(rng.uniform(0.2, 5.0, n), rng.uniform(0.0, 1.5, n),
                               delta=rng.uniform(0.05, 1.2),
                               t_end=rng.uniform(0.2, 5.0)))
    return specs


def test_all_coalitions_enumeration():
    subsets = all_coalitions(3)
    assert len(subsets) == 8
    assert subsets[0] == ()
    assert subsets[-1] == (0, 1, 2)
    assert (0, 2) in subsets


def test_coalition_canonicalization():
    assert coalition([2, 0, 2], 3) == (0, 2)
    with pytest.raises(GameInputError):
        coalition([3], 3)
    with pytest.raises(GameInputError):
        coalition([-1], 3)


def test_empty_coalition_is_worthless():
    cf = characteristic_function(make_spec([1.0, 2.0], [0.3, 0.4], delta=0.5))
    assert cf[()].intercept == 0.0
    assert cf[()].x0_slope == 0.0


def test_grand_coalition_is_the_cooperative_payoff():
    for spec in random_specs(10, seed=21):
        cf = characteristic_function(spec)
        coop = cooperative_controls(spec)
        intercept = sum(player_payoff(spec, coop, i).intercept
                        for i in range(spec.n_players))
        slope = sum(player_payoff(spec, coop, i).x0_slope
                    for i in range(spec.n_players))
        assert cf.grand_value.intercept == pytest.approx(intercept, rel=1e-12)
        assert cf.grand_value.x0_slope == pytest.approx(slope, rel=1e-12)


def test_singleton_value_never_beats_best_response():
    for spec in random_specs(15, seed=22):
        cf = characteristic_function(spec)
        nash = nash_controls(spec)
        coop = cooperative_controls(spec)
        for i in range(spec.n_players):
            best = player_payoff(spec, nash, i).intercept
            value = cf[(i,)].intercept
            scale = max(1.0, abs(best))
            assert value <= best + 1e-10 * scale
            # strict once the cooperative schedule actually differs
            ts = np.linspace(spec.t0, spec.t_end, 50)
            deviation = max(abs(coop[i].value(t) - nash[i].value(t)) for t in ts)
            if deviation > 1e-6 * spec.players[i].revenue_slope:
                assert value < best - 1e-12 * scale


def test_shapley_efficiency_exact():
    for spec in random_specs(15, seed=23):
        cf = characteristic_function(spec)
        allocation = shapley_value(cf)
        total_i = sum(s.intercept for s in allocation.shares)
        total_s = sum(s.x0_slope for s in allocation.shares)
        assert total_i == pytest.approx(cf.grand_value.intercept, rel=1e-10)
        assert total_s == pytest.approx(cf.grand_value.x0_slope, rel=1e-10)


def test_shapley_symmetry_for_identical_players():
    spec = make_spec([2.0, 2.0], [0.7, 0.7], delta=0.4, t_end=2.0)
    allocation = shapley_value(characteristic_function(spec))
    a, b = allocation.shares
    assert a.intercept == pytest.approx(b.intercept, rel=1e-12)
    assert a.x0_slope == pytest.approx(b.x0_slope, rel=1e-12)


def test_all_zero_fines_make_the_game_additive():
    # with no fines every schedule is the constant cap, so marginal
    # contributions are constant and each player just keeps their own value
    spec = make_spec([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], delta=0.5, t_end=2.0)
    cf = characteristic_function(spec)
    allocation = shapley_value(cf)
    for i in range(3):
        assert allocation.shares[i].intercept == pytest.approx(
            cf[(i,)].intercept, rel=1e-12)
        assert allocation.shares[i].x0_slope == 0.0


def test_shapley_rejects_incomplete_functions():
    spec = make_spec([1.0, 2.0], [0.3, 0.4], delta=0.5)
    cf = characteristic_function(spec)
    values = dict(cf.values)
    del values[(0, 1)]
    partial = CharacteristicFunction(n_players=2, values=values)
    with pytest.raises(GameInputError):
        shapley_value(partial)
    with pytest.raises(GameInputError):
        shapley_value(cf, n_players=3)
    with pytest.raises(GameInputError):
        partial[(0, 1)]


def test_coalition_slopes_add_over_members():
    for spec in random_specs(10, seed=24):
        cf = characteristic_function(spec)
        per_player = [(p.fine_rate / spec.delta) * math.expm1(-spec.delta * spec.horizon)
                      for p in spec.players]
        for members in all_coalitions(spec.n_players):
            expected = sum(per_player[i] for i in members)
            assert cf[members].x0_slope == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_gains_do_not_depend_on_initial_stock():
    base = make_spec([1.5, 0.9, 2.1], [0.5, 0.2, 0.8], delta=0.3, t_end=2.5, x0=0.0)
    shifted = make_spec([1.5, 0.9, 2.1], [0.5, 0.2, 0.8], delta=0.3, t_end=2.5, x0=7.0)
    a = cooperation_gains(base)
    b = cooperation_gains(shifted)
    assert a.gains == b.gains
    assert a.joint_gain == b.joint_gain


def test_joint_gain_equals_sum_of_player_gains():
    for spec in random_specs(10, seed=25):
        report = cooperation_gains(spec)
        assert sum(report.gains) == pytest.approx(report.joint_gain, rel=1e-9, abs=1e-12)
        assert report.benefits == tuple(g > 0 for g in report.gains)


def test_single_player_gains_nothing():
    spec = make_spec([2.0], [0.6], delta=0.4, t_end=2.0)
    report = cooperation_gains(spec)
    assert report.joint_gain == pytest.approx(0.0, abs=1e-9)
    assert report.gains[0] == pytest.approx(0.0, abs=1e-9)
