"""Domain model: company records, per-player coefficients, game setup, regimes.

Raw company reports (operating profit, emission volume, pollution payment) are
converted into the two per-player model coefficients at the ingestion boundary:
the revenue slope b = profit / own emissions and the fine rate
d = payment / total emissions of all players. Everything downstream works in
base units (rubles, tons).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "GameInputError",
    "ConfigError",
    "RawCompanyData",
    "PlayerParams",
    "GameSpec",
    "RegimeInfo",
    "RegimeReport",
    "derive_coefficients",
    "split_joint_profit",
    "classify_regimes",
    "player_regime",
]

# Switch times closer than this (relative to horizon length) to an endpoint are
# collapsed so that no zero-length segment is ever produced.
SNAP_TOLERANCE = 1e-12


class GameInputError(ValueError):
    """Domain-invalid game data: bad volumes, horizons, bounds or profiles."""


class ConfigError(GameInputError):
    """Malformed or inconsistent scenario configuration."""


def _require_finite(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise GameInputError(f"{what} must be finite, got {value!r}")


@dataclass(frozen=True)
class RawCompanyData:
    """One company's reported figures, already in base units (rubles, tons)."""

    name: str
    operating_profit: float
    emission_volume: float
    pollution_payment: float

    def __post_init__(self) -> None:
        if not self.name:
            raise GameInputError("company name must be non-empty")
        for what, value in (
            ("operating profit", self.operating_profit),
            ("emission volume", self.emission_volume),
            ("pollution payment", self.pollution_payment),
        ):
            _require_finite(value, f"{what} of {self.name!r}")
        if self.operating_profit <= 0:
            raise GameInputError(f"operating profit must be positive for {self.name!r}")
        if self.emission_volume <= 0:
            raise GameInputError(f"emission volume must be positive for {self.name!r}")
        if self.pollution_payment < 0:
            raise GameInputError(f"pollution payment must be non-negative for {self.name!r}")


@dataclass(frozen=True)
class PlayerParams:
    """Model coefficients for one player.

    ``revenue_slope`` (config key ``b``, rubles per ton emitted) is both the
    marginal revenue at zero emission and the emission cap: emitting at rate u
    earns u*(b - u/2) per unit time, which peaks exactly at u = b.
    ``fine_rate`` (config key ``d``, rubles per ton of accumulated stock per
    unit time) scales the linear pollution cost.
    """

    name: str
    revenue_slope: float
    fine_rate: float

    def __post_init__(self) -> None:
        _require_finite(self.revenue_slope, f"revenue slope of {self.name!r}")
        _require_finite(self.fine_rate, f"fine rate of {self.name!r}")
        if self.revenue_slope <= 0:
            raise GameInputError(f"revenue slope must be positive for {self.name!r}")
        if self.fine_rate < 0:
            raise GameInputError(f"fine rate must be non-negative for {self.name!r}")


@dataclass(frozen=True)
class GameSpec:
    """Immutable description of one game instance.

    The pollution stock obeys x' = sum_i u_i(t) - delta*x on [t0, t_end] with
    x(t0) = x0; each player's emission rate u_i is constrained to
    [0, revenue_slope_i]. A degenerate horizon t_end == t0 is allowed and makes
    every payoff identically zero.
    """

    players: tuple[PlayerParams, ...]
    t0: float
    t_end: float
    delta: float
    x0: float = 0.0

    def __post_init__(self) -> None:
        if isinstance(self.players, list):
            object.__setattr__(self, "players", tuple(self.players))
        if not self.players:
            raise GameInputError("a game needs at least one player")
        for what, value in (("t0", self.t0), ("t_end", self.t_end),
                            ("delta", self.delta), ("x0", self.x0)):
            _require_finite(value, what)
        if self.t_end < self.t0:
            raise GameInputError(f"t_end={self.t_end} precedes t0={self.t0}")
        if self.delta <= 0:
            # delta = 0 is out of the supported range: every closed form below
            # divides by it. Reject instead of special-casing the limit.
            raise GameInputError("decay rate delta must be strictly positive")
        if self.x0 < 0:
            raise GameInputError("initial stock x0 must be non-negative")

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def total_revenue_slope(self) -> float:
        return sum(p.revenue_slope for p in self.players)

    @property
    def total_fine_rate(self) -> float:
        return sum(p.fine_rate for p in self.players)

    @property
    def horizon(self) -> float:
        return self.t_end - self.t0


@dataclass(frozen=True)
class RegimeInfo:
    """Regime of one player's optimal control in one mode.

    kind is "interior" (the exponential form is feasible on the whole
    horizon), "switching" (zero until switch_time, exponential after), or
    "boundary" (identically zero; only reachable for absurdly large fine
    rates, kept so no zero-length segment is ever built).
    """

    kind: str
    switch_time: float | None = None


@dataclass(frozen=True)
class RegimeReport:
    """Per-player regimes for both solution modes."""

    nash: tuple[RegimeInfo, ...]
    cooperative: tuple[RegimeInfo, ...]


def derive_coefficients(companies: list[RawCompanyData]) -> list[PlayerParams]:
    """Convert raw company reports into per-player model coefficients.

    b_i = profit_i / emissions_i and d_i = payment_i / sum_j emissions_j.
    Order is preserved; no rounding is applied here, so re-multiplication
    recovers the inputs to machine precision.
    """
    if not companies:
        raise ConfigError("no companies given")
    total_emissions = 0.0
    for company in companies:
        if company.emission_volume <= 0:
            raise GameInputError(f"emission volume must be positive for {company.name!r}")
        total_emissions += company.emission_volume
    return [
        PlayerParams(
            name=c.name,
            revenue_slope=c.operating_profit / c.emission_volume,
            fine_rate=c.pollution_payment / total_emissions,
        )
        for c in companies
    ]


def split_joint_profit(joint_profit: float, outputs: list[float]) -> list[float]:
    """Split a jointly reported profit across companies by production output."""
    _require_finite(joint_profit, "joint profit")
    if joint_profit <= 0:
        raise GameInputError("joint profit must be positive")
    if not outputs:
        raise GameInputError("no production outputs given")
    for out in outputs:
        _require_finite(out, "production output")
        if out < 0:
            raise GameInputError("production outputs must be non-negative")
    total = sum(outputs)
    if total <= 0:
        raise GameInputError("production outputs sum to zero, cannot split")
    return [joint_profit * out / total for out in outputs]


def player_regime(revenue_slope: float, effective_fine: float, spec: GameSpec) -> RegimeInfo:
    """Regime of one player's optimal control for a given effective fine rate.

    The optimal control b - f/delta + (f/delta)*e^{delta*(t - t_end)} (with f
    the effective fine: own d in Nash mode, total d in cooperative mode) stays
    within [0, b] on the whole horizon unless it would start negative, in
    which case it is zero until switch_time = t_end + ln(1 - b*delta/f)/delta.
    """
    b = revenue_slope
    f = effective_fine
    if f == 0.0:
        return RegimeInfo("interior")
    # no-switch sufficient test: the switch time is bounded above by
    # t_end - b/f, so a short horizon cannot contain it
    if spec.t_end <= spec.t0 + b / f:
        return RegimeInfo("interior")
    if spec.delta >= f / b:
        # control at t0 is already non-negative
        return RegimeInfo("interior")
    switch = spec.t_end + math.log1p(-b * spec.delta / f) / spec.delta
    snap = SNAP_TOLERANCE * spec.horizon
    if switch <= spec.t0 + snap:
        return RegimeInfo("interior")
    if switch >= spec.t_end - snap:
        return RegimeInfo("boundary")
    return RegimeInfo("switching", switch_time=max(switch, spec.t0))


def classify_regimes(spec: GameSpec) -> RegimeReport:
    """Classify every player's control regime in both solution modes."""
    total_fine = spec.total_fine_rate
    nash = tuple(player_regime(p.revenue_slope, p.fine_rate, spec) for p in spec.players)
    coop = tuple(player_regime(p.revenue_slope, total_fine, spec) for p in spec.players)
    return RegimeReport(nash=nash, cooperative=coop)
