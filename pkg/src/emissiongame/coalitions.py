"""Coalition values, Shapley allocation and cooperation-gain reports.

A coalition's value is computed with its members playing their components of
the grand-coalition optimum while outsiders keep their Nash schedules; the
members' controls are deliberately not re-optimized for the smaller coalition.
Values stay affine in x0, and since every profile shares the same x0 slope per
player, all gain figures come out independent of the initial stock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import chain, combinations
from typing import Iterable

from .model import GameInputError, GameSpec
from .solver import AffinePayoff, cooperative_controls, nash_controls, player_payoff

__all__ = [
    "Coalition",
    "coalition",
    "all_coalitions",
    "CharacteristicFunction",
    "Allocation",
    "GainReport",
    "characteristic_function",
    "shapley_value",
    "cooperation_gains",
]

Coalition = tuple[int, ...]


def coalition(members: Iterable[int], n_players: int) -> Coalition:
    """Canonical (sorted, duplicate-free) encoding of a set of player indices."""
    canon = tuple(sorted(set(members)))
    for i in canon:
        if not 0 <= i < n_players:
            raise GameInputError(f"player index {i} out of range for {n_players} players")
    return canon


def all_coalitions(n_players: int) -> list[Coalition]:
    """Every subset of the player set, empty set first, grand coalition last."""
    players = range(n_players)
    return list(chain.from_iterable(combinations(players, r) for r in range(n_players + 1)))


@dataclass(frozen=True)
class CharacteristicFunction:
    """Map from coalitions to affine payoff values."""

    n_players: int
    values: dict[Coalition, AffinePayoff]

    def __post_init__(self) -> None:
        canon = {coalition(s, self.n_players): v for s, v in self.values.items()}
        object.__setattr__(self, "values", canon)

    def __getitem__(self, members: Iterable[int]) -> AffinePayoff:
        key = coalition(members, self.n_players)
        try:
            return self.values[key]
        except KeyError:
            raise GameInputError(f"characteristic function has no value for coalition {key}") from None

    def coalitions(self) -> list[Coalition]:
        return sorted(self.values, key=lambda s: (len(s), s))

    @property
    def grand_value(self) -> AffinePayoff:
        return self[range(self.n_players)]


@dataclass(frozen=True)
class Allocation:
    """Per-player affine payoff shares of the grand coalition's value."""

    shares: tuple[AffinePayoff, ...]

    def __post_init__(self) -> None:
        if isinstance(self.shares, list):
            object.__setattr__(self, "shares", tuple(self.shares))


@dataclass(frozen=True)
class GainReport:
    """What cooperation is worth versus everyone playing Nash."""

    nash_payoffs: tuple[AffinePayoff, ...]
    shapley: Allocation
    gains: tuple[float, ...]
    joint_gain: float
    benefits: tuple[bool, ...]


def characteristic_function(spec: GameSpec) -> CharacteristicFunction:
    """Value every coalition against Nash-playing outsiders.

    The empty coalition is worth exactly zero; a proper coalition's value sums
    its members' payoffs under the mixed profile (members cooperative,
    outsiders Nash); the grand coalition's value is the full cooperative joint
    payoff. Each evaluation is an independent pure computation.
    """
    nash = nash_controls(spec)
    coop = cooperative_controls(spec)
    values: dict[Coalition, AffinePayoff] = {}
    for members in all_coalitions(spec.n_players):
        if not members:
            values[members] = AffinePayoff(0.0, 0.0)
            continue
        inside = set(members)
        profile = [coop[i] if i in inside else nash[i] for i in range(spec.n_players)]
        total = AffinePayoff(0.0, 0.0)
        for i in members:
            total = total + player_payoff(spec, profile, i)
        values[members] = total
    return CharacteristicFunction(n_players=spec.n_players, values=values)


def shapley_value(cf: CharacteristicFunction, n_players: int | None = None) -> Allocation:
    """Average marginal contribution of each player over all join orders.

    Direct enumeration over all 2^n coalitions with factorial weights
    (|S|-1)!(n-|S|)!/n!; exact and fine for the roster sizes this library
    targets (n up to ~20).

    Raises:
        GameInputError: if any coalition value is missing.
    """
    n = cf.n_players if n_players is None else n_players
    if n != cf.n_players:
        raise GameInputError(
            f"characteristic function covers {cf.n_players} players, not {n}"
        )
    for members in all_coalitions(n):
        if members not in cf.values:
            raise GameInputError(f"characteristic function has no value for coalition {members}")
    total_orders = math.factorial(n)
    shares = []
    for i in range(n):
        share = AffinePayoff(0.0, 0.0)
        for members in all_coalitions(n):
            if i not in members:
                continue
            weight = (
                math.factorial(len(members) - 1)
                * math.factorial(n - len(members))
                / total_orders
            )
            marginal = cf[members] - cf[tuple(j for j in members if j != i)]
            share = share + marginal.scaled(weight)
        shares.append(share)
    return Allocation(shares=tuple(shares))


def cooperation_gains(spec: GameSpec) -> GainReport:
    """Per-player Shapley gain and joint gain over the Nash baseline.

    Both gains are plain scalars: the x0 slopes of the Shapley share and the
    Nash payoff coincide term by term, which is asserted here rather than
    assumed.
    """
    nash = nash_controls(spec)
    nash_payoffs = tuple(player_payoff(spec, nash, i) for i in range(spec.n_players))
    cf = characteristic_function(spec)
    allocation = shapley_value(cf)
    gains = []
    for share, baseline in zip(allocation.shares, nash_payoffs):
        slope_scale = max(1.0, abs(baseline.x0_slope))
        assert abs(share.x0_slope - baseline.x0_slope) <= 1e-10 * slope_scale, (
            "x0 slopes failed to cancel in a gain computation"
        )
        gains.append(share.intercept - baseline.intercept)
    grand = cf.grand_value
    nash_total = AffinePayoff(0.0, 0.0)
    for payoff in nash_payoffs:
        nash_total = nash_total + payoff
    assert abs(grand.x0_slope - nash_total.x0_slope) <= 1e-10 * max(1.0, abs(grand.x0_slope))
    return GainReport(
        nash_payoffs=nash_payoffs,
        shapley=allocation,
        gains=tuple(gains),
        joint_gain=grand.intercept - nash_total.intercept,
        benefits=tuple(g > 0 for g in gains),
    )
