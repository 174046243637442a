"""Independent discretized verification of the closed-form solutions.

Controls are piecewise constant on a uniform grid; the stock advances by the
exact linear-ODE step, so every remaining error is control discretization, not
integration. Best responses and the joint optimum are found by projected
gradient ascent with exact discrete gradients (via the backward sensitivity
recursion) and compared against the closed forms sampled at step midpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import GameInputError, GameSpec
from .solver import PiecewiseControl, cooperative_controls, nash_controls, player_payoff

__all__ = [
    "OracleConvergenceError",
    "GridControl",
    "OracleReport",
    "PontryaginCheck",
    "simulate",
    "sample_profile",
    "best_response",
    "iterated_best_response",
    "joint_optimum",
    "pontryagin_residual",
]

DEFAULT_STEPS = 10_000
DEFAULT_TOLERANCE = 1e-9
_MAX_ITERATIONS = 200


class OracleConvergenceError(RuntimeError):
    """An iterative oracle solve failed; carries the last residual seen."""

    def __init__(self, message: str, last_residual: float):
        super().__init__(f"{message} (last residual {last_residual:.3e})")
        self.last_residual = last_residual


@dataclass(frozen=True, eq=False)
class GridControl:
    """Per-player piecewise-constant emission rates on a uniform grid."""

    t0: float
    t_end: float
    rates: np.ndarray  # shape (n_players, n_steps)

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=float)
        object.__setattr__(self, "rates", rates)
        if rates.ndim != 2:
            raise GameInputError(f"grid rates must be 2-D (players x steps), got shape {rates.shape}")
        if rates.shape[1] < 2:
            raise GameInputError("a grid needs at least 2 steps")
        if not np.all(np.isfinite(rates)):
            raise GameInputError("grid rates must be finite")
        if rates.min(initial=0.0) < 0:
            raise GameInputError("grid rates must be non-negative")

    @property
    def n_steps(self) -> int:
        return self.rates.shape[1]

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / self.n_steps

    def midpoints(self) -> np.ndarray:
        return self.t0 + (np.arange(self.n_steps) + 0.5) * self.dt

    def replace_row(self, i: int, row: np.ndarray) -> "GridControl":
        rates = self.rates.copy()
        rates[i] = row
        return GridControl(self.t0, self.t_end, rates)


@dataclass(frozen=True)
class PontryaginCheck:
    """Finite-difference residual of the adjoint ODE plus the terminal gap."""

    adjoint_residual: float  # max over players/samples, scaled by the fine rate
    terminal_gap: float      # max over players of |u_i(t_end) - b_i|


@dataclass(frozen=True)
class OracleReport:
    """Outcome of a discretized solve compared against the closed form."""

    converged: bool
    iterations: int
    control_gap: float                # sup over players and steps, absolute
    payoff_gaps: tuple[float, ...]    # per player, relative at the spec's x0
    pontryagin_residual: float

    @property
    def payoff_gap(self) -> float:
        return max(self.payoff_gaps)


def _check_grid(spec: GameSpec, grid: GridControl) -> None:
    if grid.rates.shape[0] != spec.n_players:
        raise GameInputError(
            f"grid has {grid.rates.shape[0]} control rows for {spec.n_players} players"
        )
    if grid.t0 != spec.t0 or grid.t_end != spec.t_end:
        raise GameInputError("grid horizon does not match the game horizon")
    caps = np.array([p.revenue_slope for p in spec.players])
    slack = 1e-9 * caps
    if np.any(grid.rates > (caps + slack)[:, None]):
        raise GameInputError("grid rates exceed a player's emission cap")


def _step_constants(delta: float, dt: float) -> tuple[float, float]:
    shrink = math.exp(-delta * dt)
    gain = -math.expm1(-delta * dt) / delta
    return shrink, gain


def simulate(spec: GameSpec, grid: GridControl) -> tuple[np.ndarray, np.ndarray]:
    """Advance the stock with the exact step and integrate payoffs exactly.

    With rates constant on each step, x_{k+1} = x_k*e^{-delta*dt} + U_k*gain
    is the exact solution, and the per-step integral of x is available in
    closed form, so the returned payoffs carry no quadrature error for the
    given piecewise-constant profile.

    Returns:
        (stock, payoffs): stock has n_steps+1 nodes; payoffs one entry per player.
    """
    _check_grid(spec, grid)
    dt = grid.dt
    delta = spec.delta
    shrink, gain = _step_constants(delta, dt)
    total = grid.rates.sum(axis=0)
    stock = np.empty(grid.n_steps + 1)
    stock[0] = spec.x0
    x = spec.x0
    for k in range(grid.n_steps):
        x = x * shrink + total[k] * gain
        stock[k + 1] = x
    # integral of x over step k given constant input on the step
    step_integrals = stock[:-1] * gain + total * (dt - gain) / delta
    caps = np.array([p.revenue_slope for p in spec.players])
    fines = np.array([p.fine_rate for p in spec.players])
    revenue = dt * (grid.rates * caps[:, None] - 0.5 * grid.rates**2).sum(axis=1)
    payoffs = revenue - fines * step_integrals.sum()
    return stock, payoffs


def sample_profile(spec: GameSpec, profile: list[PiecewiseControl], n_steps: int) -> GridControl:
    """Closed-form profile sampled at step midpoints as a grid control."""
    dt = spec.horizon / n_steps
    mids = spec.t0 + (np.arange(n_steps) + 0.5) * dt
    rates = np.array([[control.value(t) for t in mids] for control in profile])
    return GridControl(spec.t0, spec.t_end, np.clip(rates, 0.0, None))


def _cost_weights(delta: float, dt: float, n_steps: int) -> np.ndarray:
    """Sensitivity of the total stock integral to each step's emission rate.

    Backward recursion over the step map: s_k = gain + shrink*s_{k+1}
    accumulates how the stock at node k propagates into all later per-step
    integrals; each weight then adds the step's own direct contribution.
    """
    shrink, gain = _step_constants(delta, dt)
    direct = (dt - gain) / delta
    weights = np.empty(n_steps)
    future = 0.0
    for k in range(n_steps - 1, -1, -1):
        weights[k] = direct + gain * future
        future = gain + shrink * future
    return weights


def best_response(
    spec: GameSpec,
    i: int,
    others: GridControl,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = _MAX_ITERATIONS,
) -> np.ndarray:
    """Maximize player i's discrete payoff over their rate box, others fixed.

    Projected gradient ascent with step 1/dt (the inverse curvature of the
    concave quadratic objective); stops when the projected step, in rate
    units, falls below tolerance scaled by the player's cap. The ascent is
    monitored: a payoff decrease raises OracleConvergenceError.
    """
    if not 0 <= i < spec.n_players:
        raise GameInputError(f"player index {i} out of range for {spec.n_players} players")
    _check_grid(spec, others)
    n_steps = others.n_steps
    dt = others.dt
    cap = spec.players[i].revenue_slope
    fine = spec.players[i].fine_rate
    weights = _cost_weights(spec.delta, dt, n_steps)
    u = np.full(n_steps, cap)
    grid = others.replace_row(i, u)
    _, payoffs = simulate(spec, grid)
    last_payoff = payoffs[i]
    residual = math.inf
    for iteration in range(1, max_iterations + 1):
        gradient = dt * (cap - u) - fine * weights
        candidate = np.clip(u + gradient / dt, 0.0, cap)
        residual = float(np.max(np.abs(candidate - u)))
        u = candidate
        grid = grid.replace_row(i, u)
        _, payoffs = simulate(spec, grid)
        if payoffs[i] < last_payoff - 1e-12 * max(1.0, abs(last_payoff)):
            raise OracleConvergenceError(
                f"best response for player {i} lost payoff on iteration {iteration}",
                residual,
            )
        last_payoff = payoffs[i]
        if residual <= tolerance * cap:
            return u
    raise OracleConvergenceError(
        f"best response for player {i} did not converge in {max_iterations} iterations",
        residual,
    )


def _compare_with_closed_form(
    spec: GameSpec,
    grid: GridControl,
    profile: list[PiecewiseControl],
    mode: str,
    converged: bool,
    iterations: int,
) -> OracleReport:
    reference = sample_profile(spec, profile, grid.n_steps)
    control_gap = float(np.max(np.abs(grid.rates - reference.rates)))
    _, payoffs = simulate(spec, grid)
    gaps = []
    for i in range(spec.n_players):
        exact = player_payoff(spec, profile, i).value(spec.x0)
        gaps.append(abs(payoffs[i] - exact) / max(1.0, abs(exact)))
    residual = pontryagin_residual(spec, profile, mode).adjoint_residual
    return OracleReport(
        converged=converged,
        iterations=iterations,
        control_gap=control_gap,
        payoff_gaps=tuple(gaps),
        pontryagin_residual=residual,
    )


def iterated_best_response(
    spec: GameSpec,
    *,
    n_steps: int = DEFAULT_STEPS,
    tolerance: float = DEFAULT_TOLERANCE,
    max_sweeps: int = 50,
) -> OracleReport:
    """Cycle best responses in player order until the profile stops moving.

    Returns an OracleReport comparing the fixed point against the closed-form
    Nash profile; iterations counts full sweeps.
    """
    caps = [p.revenue_slope for p in spec.players]
    rates = np.array([np.full(n_steps, cap) for cap in caps])
    grid = GridControl(spec.t0, spec.t_end, rates)
    converged = False
    sweeps = 0
    change = math.inf
    for sweeps in range(1, max_sweeps + 1):
        change = 0.0
        for i in range(spec.n_players):
            row = best_response(spec, i, grid, tolerance=tolerance)
            change = max(change, float(np.max(np.abs(row - grid.rates[i]))) / caps[i])
            grid = grid.replace_row(i, row)
        if change <= tolerance:
            converged = True
            break
    if not converged:
        raise OracleConvergenceError(
            f"best-response sweeps did not settle in {max_sweeps} rounds", change
        )
    return _compare_with_closed_form(spec, grid, nash_controls(spec), "nash", converged, sweeps)


def joint_optimum(
    spec: GameSpec,
    *,
    n_steps: int = DEFAULT_STEPS,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = _MAX_ITERATIONS,
) -> OracleReport:
    """Maximize the summed payoff over every player's grid simultaneously.

    Projected gradient on the stacked rates; the cost term uses the total
    fine rate, which is the only difference from per-player best response.
    Compared against the closed-form cooperative profile.
    """
    caps = np.array([p.revenue_slope for p in spec.players])
    total_fine = spec.total_fine_rate
    dt = spec.horizon / n_steps
    weights = _cost_weights(spec.delta, dt, n_steps)
    rates = np.tile(caps[:, None], (1, n_steps)).astype(float)
    grid = GridControl(spec.t0, spec.t_end, rates)
    _, payoffs = simulate(spec, grid)
    last_total = payoffs.sum()
    converged = False
    iterations = 0
    residual = math.inf
    for iterations in range(1, max_iterations + 1):
        gradient = dt * (caps[:, None] - grid.rates) - total_fine * weights[None, :]
        candidate = np.clip(grid.rates + gradient / dt, 0.0, caps[:, None])
        residual = float(np.max(np.abs(candidate - grid.rates) / caps[:, None]))
        grid = GridControl(spec.t0, spec.t_end, candidate)
        _, payoffs = simulate(spec, grid)
        total = payoffs.sum()
        if total < last_total - 1e-12 * max(1.0, abs(last_total)):
            raise OracleConvergenceError(
                f"joint ascent lost payoff on iteration {iterations}", residual
            )
        last_total = total
        if residual <= tolerance:
            converged = True
            break
    if not converged:
        raise OracleConvergenceError(
            f"joint optimum did not converge in {max_iterations} iterations", residual
        )
    return _compare_with_closed_form(
        spec, grid, cooperative_controls(spec), "cooperative", converged, iterations
    )


def pontryagin_residual(
    spec: GameSpec, profile: list[PiecewiseControl], mode: str
) -> PontryaginCheck:
    """Finite-difference check of the adjoint ODE on interior arcs.

    On interior arcs the costate is u_i - b_i and must satisfy
    psi' = f + delta*psi with f the effective fine (own rate for "nash", total
    rate for "cooperative") and psi(t_end) = 0. Residuals are scaled by the
    fine so the reported number is dimensionless.
    """
    if mode not in ("nash", "cooperative"):
        raise GameInputError(f"mode must be 'nash' or 'cooperative', got {mode!r}")
    if len(profile) != spec.n_players:
        raise GameInputError(
            f"profile has {len(profile)} controls for {spec.n_players} players"
        )
    worst = 0.0
    terminal = 0.0
    samples = 101
    for i, control in enumerate(profile):
        cap = spec.players[i].revenue_slope
        fine = spec.players[i].fine_rate if mode == "nash" else spec.total_fine_rate
        terminal = max(terminal, abs(control.value(spec.t_end) - cap))
        scale = max(fine, 1e-300)
        for seg in control.segments:
            if seg.is_zero or seg.t_end <= seg.t_start:
                continue
            width = seg.t_end - seg.t_start
            eta = min(1e-4 * max(spec.horizon, width), 0.125 * width)
            times = np.linspace(seg.t_start + eta, seg.t_end - eta, samples)
            for t in times:
                psi = control.value(t) - cap
                derivative = (control.value(t + eta) - control.value(t - eta)) / (2 * eta)
                residual = abs(derivative - (fine + spec.delta * psi))
                worst = max(worst, residual / scale if fine > 0 else residual)
    return PontryaginCheck(adjoint_residual=worst, terminal_gap=terminal)
