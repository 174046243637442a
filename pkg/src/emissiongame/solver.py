"""Closed-form open-loop strategies, stock trajectories and exact payoffs.

Optimal emission schedules in both modes share one shape: an optional leading
zero arc followed by u(t) = c0 + c1*e^{delta*(t - t_end)}. The pollution stock
under any such profile is itself a sum of exponentials per segment, so payoffs
integrate in closed form and come out exactly affine in the initial stock x0.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

from .model import GameInputError, GameSpec, RegimeInfo, player_regime

__all__ = [
    "ControlSegment",
    "PiecewiseControl",
    "TrajectoryPiece",
    "StockTrajectory",
    "AffinePayoff",
    "nash_controls",
    "cooperative_controls",
    "stock_trajectory",
    "player_payoff",
    "total_emission_gap",
    "stock_gap_closed_form",
]

# construction-time slack for bound/continuity checks; the closed forms land
# within a few ulps of the exact values, real violations are far larger
_CHECK_SLACK = 1e-9


@dataclass(frozen=True)
class ControlSegment:
    """One arc of an emission schedule: u(t) = level + amplitude*e^{delta*(t - t_anchor)}.

    A zero arc is stored as level = amplitude = 0.
    """

    t_start: float
    t_end: float
    level: float
    amplitude: float

    @property
    def is_zero(self) -> bool:
        return self.level == 0.0 and self.amplitude == 0.0


@dataclass(frozen=True)
class PiecewiseControl:
    """A player's emission schedule over the whole horizon.

    Segments tile [t_start of first, t_end of last] without gaps; values are
    validated into [0, u_max] at construction (endpoints suffice: each arc is
    monotone in t) and must agree across segment boundaries. Out-of-range
    hand-built profiles are rejected, never clamped, since silent clamping
    would corrupt payoff comparisons.
    """

    player: int
    delta: float
    t_anchor: float
    u_max: float
    segments: tuple[ControlSegment, ...]

    def __post_init__(self) -> None:
        if isinstance(self.segments, list):
            object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise GameInputError("a control needs at least one segment")
        if self.u_max <= 0:
            raise GameInputError("control cap u_max must be positive")
        slack = _CHECK_SLACK * max(1.0, self.u_max, *(abs(s.level) + abs(s.amplitude) for s in self.segments))
        prev_end: float | None = None
        prev_value: float | None = None
        for seg in self.segments:
            if seg.t_end < seg.t_start:
                raise GameInputError(f"segment runs backwards: [{seg.t_start}, {seg.t_end}]")
            if prev_end is not None and seg.t_start != prev_end:
                raise GameInputError(
                    f"segments do not tile the horizon: gap or overlap at {seg.t_start} vs {prev_end}"
                )
            lo = self._segment_value(seg, seg.t_start)
            hi = self._segment_value(seg, seg.t_end)
            for value in (lo, hi):
                if value < -slack or value > self.u_max + slack:
                    raise GameInputError(
                        f"control value {value} outside [0, {self.u_max}] for player {self.player}"
                    )
            if prev_value is not None and abs(lo - prev_value) > slack:
                raise GameInputError(
                    f"control jumps by {lo - prev_value} at t={seg.t_start} for player {self.player}"
                )
            prev_end = seg.t_end
            prev_value = hi

    def _segment_value(self, seg: ControlSegment, t: float) -> float:
        if seg.is_zero:
            return 0.0
        return seg.level + seg.amplitude * math.exp(self.delta * (t - self.t_anchor))

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    @property
    def switch_time(self) -> float | None:
        """Boundary between a leading zero arc and the exponential arc, if any."""
        for first, second in zip(self.segments, self.segments[1:]):
            if first.is_zero and not second.is_zero:
                return second.t_start
        return None

    def segment_at(self, t: float) -> ControlSegment:
        if t < self.t_start or t > self.t_end:
            raise GameInputError(f"t={t} outside control horizon [{self.t_start}, {self.t_end}]")
        starts = [seg.t_start for seg in self.segments]
        idx = min(bisect_right(starts, t) - 1, len(self.segments) - 1)
        return self.segments[max(idx, 0)]

    def value(self, t: float) -> float:
        """Emission rate at time t."""
        return self._segment_value(self.segment_at(t), t)


@dataclass(frozen=True)
class TrajectoryPiece:
    """Stock on one interval: x(t) = decay_coef*e^{-delta*t} + drive_coef*e^{delta*(t - t_anchor)} + steady_level."""

    t_start: float
    t_end: float
    decay_coef: float
    drive_coef: float
    steady_level: float


@dataclass(frozen=True)
class StockTrajectory:
    """Exact pollution stock under a piecewise-exponential control profile."""

    delta: float
    t_anchor: float
    pieces: tuple[TrajectoryPiece, ...]

    def piece_at(self, t: float) -> TrajectoryPiece:
        if t < self.pieces[0].t_start or t > self.pieces[-1].t_end:
            raise GameInputError(
                f"t={t} outside trajectory horizon [{self.pieces[0].t_start}, {self.pieces[-1].t_end}]"
            )
        starts = [p.t_start for p in self.pieces]
        idx = min(bisect_right(starts, t) - 1, len(self.pieces) - 1)
        return self.pieces[max(idx, 0)]

    def value(self, t: float) -> float:
        p = self.piece_at(t)
        return (
            p.decay_coef * math.exp(-self.delta * t)
            + p.drive_coef * math.exp(self.delta * (t - self.t_anchor))
            + p.steady_level
        )

    @property
    def terminal_value(self) -> float:
        return self.value(self.pieces[-1].t_end)


@dataclass(frozen=True)
class AffinePayoff:
    """A payoff stored exactly as intercept + x0_slope * x0.

    Payoffs of this game are affine in the initial stock because the stock
    enters the running cost linearly and the dynamics are linear, so the
    whole table of results can be reported without ever fixing x0.
    """

    intercept: float
    x0_slope: float

    def value(self, x0: float) -> float:
        return self.intercept + self.x0_slope * x0

    def __add__(self, other: "AffinePayoff") -> "AffinePayoff":
        return AffinePayoff(self.intercept + other.intercept, self.x0_slope + other.x0_slope)

    def __sub__(self, other: "AffinePayoff") -> "AffinePayoff":
        return AffinePayoff(self.intercept - other.intercept, self.x0_slope - other.x0_slope)

    def scaled(self, factor: float) -> "AffinePayoff":
        return AffinePayoff(factor * self.intercept, factor * self.x0_slope)


def _control_from_regime(
    spec: GameSpec, player: int, cap: float, effective_fine: float, regime: RegimeInfo
) -> PiecewiseControl:
    level = cap - effective_fine / spec.delta
    amplitude = effective_fine / spec.delta
    if regime.kind == "boundary":
        segments = [ControlSegment(spec.t0, spec.t_end, 0.0, 0.0)]
    elif regime.kind == "switching":
        segments = [
            ControlSegment(spec.t0, regime.switch_time, 0.0, 0.0),
            ControlSegment(regime.switch_time, spec.t_end, level, amplitude),
        ]
    else:
        segments = [ControlSegment(spec.t0, spec.t_end, level, amplitude)]
    return PiecewiseControl(
        player=player, delta=spec.delta, t_anchor=spec.t_end, u_max=cap, segments=segments
    )


def _mode_controls(spec: GameSpec, effective_fines: list[float]) -> list[PiecewiseControl]:
    return [
        _control_from_regime(
            spec, i, p.revenue_slope, fine, player_regime(p.revenue_slope, fine, spec)
        )
        for i, (p, fine) in enumerate(zip(spec.players, effective_fines))
    ]


def nash_controls(spec: GameSpec) -> list[PiecewiseControl]:
    """Open-loop Nash equilibrium emission schedules.

    Each player's schedule is u(t) = b_i - d_i/delta + (d_i/delta)*e^{delta*(t - t_end)},
    preceded by a zero arc when that form would start negative. The equilibrium
    decouples: a player's schedule depends only on their own coefficients.
    """
    return _mode_controls(spec, [p.fine_rate for p in spec.players])


def cooperative_controls(spec: GameSpec) -> list[PiecewiseControl]:
    """Joint-payoff-maximizing emission schedules.

    Same shape as the Nash schedules with each player's own fine rate replaced
    by the total fine rate of all players, which is what makes cooperation
    emit less everywhere before the terminal time.
    """
    total = spec.total_fine_rate
    return _mode_controls(spec, [total] * spec.n_players)


def _validate_profile(spec: GameSpec, profile: list[PiecewiseControl]) -> None:
    if len(profile) != spec.n_players:
        raise GameInputError(
            f"profile has {len(profile)} controls for {spec.n_players} players"
        )
    for i, control in enumerate(profile):
        if control.player != i:
            raise GameInputError(f"control at position {i} claims player {control.player}")
        if control.delta != spec.delta or control.t_anchor != spec.t_end:
            raise GameInputError(f"control for player {i} was built for a different game")
        if control.t_start != spec.t0 or control.t_end != spec.t_end:
            raise GameInputError(f"control for player {i} does not cover [{spec.t0}, {spec.t_end}]")


def _breakpoints(spec: GameSpec, profile: list[PiecewiseControl]) -> list[float]:
    points = {spec.t0, spec.t_end}
    for control in profile:
        for seg in control.segments:
            points.add(seg.t_start)
            points.add(seg.t_end)
    return sorted(points)


def stock_trajectory(
    spec: GameSpec, profile: list[PiecewiseControl], *, x0: float | None = None
) -> StockTrajectory:
    """Integrate the stock ODE exactly under the given control profile.

    Works interval-by-interval over the union of all players' breakpoints; on
    each interval the total emission rate is s0 + s1*e^{delta*(t - t_end)}, so
    x(t) = A*e^{-delta*t} + B*e^{delta*(t - t_end)} + C with B = s1/(2*delta),
    C = s0/delta and A fixed by continuity.
    """
    _validate_profile(spec, profile)
    start_x = spec.x0 if x0 is None else x0
    delta = spec.delta
    points = _breakpoints(spec, profile)
    pieces = []
    x_at = start_x
    if len(points) == 1:
        # degenerate empty horizon
        points = [spec.t0, spec.t_end]
    for s, e in zip(points, points[1:]):
        mid = 0.5 * (s + e)
        s0 = s1 = 0.0
        for control in profile:
            seg = control.segment_at(mid)
            s0 += seg.level
            s1 += seg.amplitude
        drive = s1 / (2 * delta)
        steady = s0 / delta
        homogeneous = x_at - drive * math.exp(delta * (s - spec.t_end)) - steady
        decay = homogeneous * math.exp(delta * s)
        pieces.append(TrajectoryPiece(s, e, decay, drive, steady))
        x_at = (
            homogeneous * math.exp(-delta * (e - s))
            + drive * math.exp(delta * (e - spec.t_end))
            + steady
        )
    return StockTrajectory(delta=delta, t_anchor=spec.t_end, pieces=tuple(pieces))


def player_payoff(spec: GameSpec, profile: list[PiecewiseControl], i: int) -> AffinePayoff:
    """Exact payoff of player i under the profile, as a function of x0.

    K_i = integral of u_i*(b_i - u_i/2) - d_i*x(t) over the horizon. Every
    piece integrand is a combination of constants, e^{delta*(t - t_end)}, its
    square and e^{-delta*t}, so the integral is analytic. The x0 dependence is
    profile-independent: x0 only adds x0*e^{-delta*(t - t0)} to the stock,
    hence x0_slope = -(d_i/delta)*(1 - e^{-delta*(t_end - t0)}) always.
    """
    if not 0 <= i < spec.n_players:
        raise GameInputError(f"player index {i} out of range for {spec.n_players} players")
    _validate_profile(spec, profile)
    params = spec.players[i]
    b = params.revenue_slope
    d = params.fine_rate
    delta = spec.delta
    trajectory = stock_trajectory(spec, profile, x0=0.0)
    intercept = 0.0
    for piece in trajectory.pieces:
        s, e = piece.t_start, piece.t_end
        if e == s:
            continue
        seg = profile[i].segment_at(0.5 * (s + e))
        c0, c1 = seg.level, seg.amplitude
        es = math.exp(delta * (s - spec.t_end))
        ee = math.exp(delta * (e - spec.t_end))
        revenue = (
            (b * c0 - 0.5 * c0 * c0) * (e - s)
            + c1 * (b - c0) * (ee - es) / delta
            - c1 * c1 * (ee * ee - es * es) / (4 * delta)
        )
        # stock integral, re-anchored at the piece start for conditioning
        x_start = piece.decay_coef * math.exp(-delta * s) + piece.drive_coef * es + piece.steady_level
        homogeneous = x_start - piece.drive_coef * es - piece.steady_level
        stock_integral = (
            -homogeneous * math.expm1(-delta * (e - s)) / delta
            + piece.drive_coef * (ee - es) / delta
            + piece.steady_level * (e - s)
        )
        intercept += revenue - d * stock_integral
    slope = (d / delta) * math.expm1(-delta * spec.horizon)
    return AffinePayoff(intercept=intercept, x0_slope=slope)


def total_emission_gap(spec: GameSpec, t: float) -> float:
    """Total Nash emission rate minus total cooperative rate at time t.

    Non-negative on the horizon and zero exactly at the terminal time. When
    every control is interior in both modes this collapses to the closed form
    (n-1)*(d_N/delta)*(1 - e^{delta*(t - t_end)}).
    """
    if t < spec.t0 or t > spec.t_end:
        raise GameInputError(f"t={t} outside horizon [{spec.t0}, {spec.t_end}]")
    nash = nash_controls(spec)
    coop = cooperative_controls(spec)
    all_interior = all(len(c.segments) == 1 and not c.segments[0].is_zero for c in nash + coop)
    if all_interior or spec.total_fine_rate == 0.0:
        scale = (spec.n_players - 1) * spec.total_fine_rate / spec.delta
        return -scale * math.expm1(spec.delta * (t - spec.t_end))
    return sum(c.value(t) for c in nash) - sum(c.value(t) for c in coop)


def stock_gap_closed_form(spec: GameSpec) -> float:
    """Terminal stock excess of Nash play over cooperation, all-interior case.

    Equals (n-1)*d_N/(2*delta^2) * (1 - e^{-delta*(t_end - t0)})^2; used as a
    cross-check against the trajectory difference.
    """
    shrink = -math.expm1(-spec.delta * spec.horizon)
    return (spec.n_players - 1) * spec.total_fine_rate / (2 * spec.delta**2) * shrink**2
