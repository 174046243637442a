"""Scenario runner: config ingestion, table emission, oracle verification.

The config is a YAML document (schema documented in the README next to the
bundled example). Players are given either as direct coefficients (b, d) or
as raw company reports that pass through derive_coefficients; a run sweeps
every requested decay rate and writes one row set per value. Output is CSV
and/or aligned text with deterministic formatting: the same config always
produces byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import yaml

from .coalitions import characteristic_function, cooperation_gains, shapley_value
from .model import (
    ConfigError,
    GameSpec,
    PlayerParams,
    RawCompanyData,
    derive_coefficients,
    split_joint_profit,
)
from .oracle import (
    OracleConvergenceError,
    OracleReport,
    iterated_best_response,
    joint_optimum,
)
from .solver import (
    AffinePayoff,
    PiecewiseControl,
    cooperative_controls,
    nash_controls,
    player_payoff,
    stock_gap_closed_form,
    stock_trajectory,
)

__all__ = [
    "ScenarioConfig",
    "load_config",
    "bundled_config_path",
    "run",
    "main",
]

COMMANDS = ("tables", "nash", "coop", "charfn", "shapley", "gains", "verify")

_UNIT_FACTORS = {"rub": 1.0, "ths_rub": 1e3, "mln_rub": 1e6}


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved scenario: players are already coefficients."""

    players: tuple[PlayerParams, ...]
    t0: float
    t_end: float
    deltas: tuple[float, ...]
    x0_values: tuple[float, ...]
    out_dir: str
    formats: tuple[str, ...]
    sig_digits: int
    oracle_enabled: bool
    oracle_steps: int
    oracle_tolerance: float

    def spec_for(self, delta: float) -> GameSpec:
        x0 = self.x0_values[0] if self.x0_values else 0.0
        return GameSpec(players=self.players, t0=self.t0, t_end=self.t_end,
                        delta=delta, x0=x0)


def bundled_config_path() -> Path:
    """Path of the packaged Siberian 2016 dataset."""
    return Path(str(resources.files("emissiongame") / "data" / "siberia2016.yaml"))


class _Doc:
    """Parsed YAML plus its node tree, for line-anchored error messages."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            self.data = yaml.safe_load(text)
            self.root = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" (line {mark.line + 1})" if mark is not None else ""
            raise ConfigError(f"{source}: invalid YAML{where}: {exc}") from None

    def line_of(self, *path) -> str:
        node = self.root
        for key in path:
            if isinstance(node, yaml.MappingNode) and isinstance(key, str):
                for k, v in node.value:
                    if k.value == key:
                        node = v
                        break
                else:
                    return ""
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int):
                if not 0 <= key < len(node.value):
                    return ""
                node = node.value[key]
            else:
                return ""
        return f" (line {node.start_mark.line + 1})"

    def fail(self, message: str, *path) -> None:
        raise ConfigError(f"{self.source}: {message}{self.line_of(*path)}")


def _need_number(doc: _Doc, mapping: dict, key: str, *path) -> float:
    if key not in mapping:
        doc.fail(f"missing required key {key!r}", *path)
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        doc.fail(f"key {key!r} must be a number, got {value!r}", *path, key)
    return float(value)


def _unit_factor(doc: _Doc, mapping: dict, key: str, default: str, *path) -> float:
    unit = mapping.get(key, default)
    if unit not in _UNIT_FACTORS:
        doc.fail(f"unknown unit {unit!r} for {key!r}, expected one of {sorted(_UNIT_FACTORS)}", *path)
    return _UNIT_FACTORS[unit]


_DIRECT_KEYS = {"name", "b", "d"}
_RAW_KEYS = {"name", "profit", "profit_unit", "joint_profit_output",
             "emissions", "payment", "payment_unit", "payment_share"}


def _resolve_players(doc: _Doc, raw_players: list) -> tuple[PlayerParams, ...]:
    direct = [("b" in p or "d" in p) for p in raw_players]
    if all(direct):
        players = []
        for idx, entry in enumerate(raw_players):
            unknown = set(entry) - _DIRECT_KEYS
            if unknown:
                doc.fail(f"player has both direct and raw keys: {sorted(unknown)}",
                         "players", idx)
            name = entry.get("name")
            if not isinstance(name, str) or not name:
                doc.fail("player needs a non-empty name", "players", idx)
            players.append(PlayerParams(
                name=name,
                revenue_slope=_need_number(doc, entry, "b", "players", idx),
                fine_rate=_need_number(doc, entry, "d", "players", idx),
            ))
        return tuple(players)
    if any(direct):
        idx = direct.index(True)
        doc.fail("players must all use direct coefficients (b, d) or all use raw "
                 "company data; this one is direct while others are raw",
                 "players", idx)

    joint_block = doc.data.get("joint_profits")
    joint_members: list[int] = []
    profits_rub: dict[int, float] = {}
    for idx, entry in enumerate(raw_players):
        unknown = set(entry) - _RAW_KEYS
        if unknown:
            doc.fail(f"unknown player keys {sorted(unknown)}", "players", idx)
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            doc.fail("player needs a non-empty name", "players", idx)
        has_profit = "profit" in entry
        has_joint = "joint_profit_output" in entry
        if has_profit == has_joint:
            doc.fail(f"player {name!r} needs exactly one profit source: "
                     "either profit or joint_profit_output", "players", idx)
        if has_profit:
            factor = _unit_factor(doc, entry, "profit_unit", "rub", "players", idx)
            profits_rub[idx] = _need_number(doc, entry, "profit", "players", idx) * factor
        else:
            joint_members.append(idx)

    if joint_members:
        if not isinstance(joint_block, dict):
            doc.fail("players use joint_profit_output but there is no joint_profits block")
        total = _need_number(doc, joint_block, "total", "joint_profits")
        factor = _unit_factor(doc, joint_block, "unit", "rub", "joint_profits")
        decimals = joint_block.get("decimals")
        if decimals is not None and not isinstance(decimals, int):
            doc.fail("joint_profits.decimals must be an integer", "joint_profits", "decimals")
        outputs = [_need_number(doc, raw_players[i], "joint_profit_output", "players", i)
                   for i in joint_members]
        shares = split_joint_profit(total, outputs)
        if decimals is not None:
            # quote each share at reporting precision before unit conversion,
            # matching how jointly reported profits are published
            shares = [round(s, decimals) for s in shares]
        for member, share in zip(joint_members, shares):
            profits_rub[member] = share * factor
    elif joint_block is not None:
        doc.fail("joint_profits block given but no player has joint_profit_output",
                 "joint_profits")

    companies = []
    for idx, entry in enumerate(raw_players):
        pay_factor = _unit_factor(doc, entry, "payment_unit", "rub", "players", idx)
        share = entry.get("payment_share", 1.0)
        if isinstance(share, bool) or not isinstance(share, (int, float)) or not 0 < share <= 1:
            doc.fail(f"payment_share must be in (0, 1], got {share!r}", "players", idx)
        companies.append(RawCompanyData(
            name=entry["name"],
            operating_profit=profits_rub[idx],
            emission_volume=_need_number(doc, entry, "emissions", "players", idx),
            pollution_payment=_need_number(doc, entry, "payment", "players", idx) * pay_factor * share,
        ))
    players = derive_coefficients(companies)

    coeff_block = doc.data.get("coefficients") or {}
    if not isinstance(coeff_block, dict):
        doc.fail("coefficients block must be a mapping", "coefficients")
    decimals = coeff_block.get("decimals")
    if decimals is not None:
        if not isinstance(decimals, int):
            doc.fail("coefficients.decimals must be an integer", "coefficients", "decimals")
        players = [PlayerParams(p.name, round(p.revenue_slope, decimals),
                                round(p.fine_rate, decimals)) for p in players]
    return tuple(players)


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario file into a resolved ScenarioConfig.

    Raises:
        ConfigError: on unreadable files, bad YAML, or schema violations;
            messages carry the source line where one can be attributed.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    doc = _Doc(text, str(path))
    data = doc.data
    if not isinstance(data, dict):
        doc.fail("top level must be a mapping")

    game = data.get("game")
    if not isinstance(game, dict):
        doc.fail("missing game block")
    t0 = _need_number(doc, game, "t0", "game")
    t_end = _need_number(doc, game, "T", "game")
    deltas = game.get("delta")
    if isinstance(deltas, (int, float)) and not isinstance(deltas, bool):
        deltas = [deltas]
    if not isinstance(deltas, list) or not deltas:
        doc.fail("game.delta must be a non-empty number or list", "game", "delta")
    for k, value in enumerate(deltas):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            doc.fail(f"decay rate must be a positive number, got {value!r}", "game", "delta", k)
    x0_values = game.get("x0", [])
    if isinstance(x0_values, (int, float)) and not isinstance(x0_values, bool):
        x0_values = [x0_values]
    if not isinstance(x0_values, list):
        doc.fail("game.x0 must be a number or list", "game", "x0")
    for k, value in enumerate(x0_values):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
            doc.fail(f"x0 must be a non-negative number, got {value!r}", "game", "x0", k)

    raw_players = data.get("players")
    if not isinstance(raw_players, list) or not raw_players:
        doc.fail("players block must be a non-empty list", "players")
    for idx, entry in enumerate(raw_players):
        if not isinstance(entry, dict):
            doc.fail("each player must be a mapping", "players", idx)
    players = _resolve_players(doc, raw_players)

    output = data.get("output") or {}
    if not isinstance(output, dict):
        doc.fail("output block must be a mapping", "output")
    out_dir = output.get("directory", "out")
    formats = output.get("formats", ["csv"])
    if isinstance(formats, str):
        formats = [formats]
    if (not isinstance(formats, list) or not formats
            or any(f not in ("csv", "text") for f in formats)):
        doc.fail("output.formats entries must be 'csv' or 'text'", "output", "formats")
    sig_digits = output.get("sig_digits", 6)
    if not isinstance(sig_digits, int) or not 1 <= sig_digits <= 17:
        doc.fail("output.sig_digits must be an integer in [1, 17]", "output", "sig_digits")

    oracle_block = data.get("oracle") or {}
    if not isinstance(oracle_block, dict):
        doc.fail("oracle block must be a mapping", "oracle")
    enabled = oracle_block.get("enabled", True)
    if not isinstance(enabled, bool):
        doc.fail("oracle.enabled must be a boolean", "oracle", "enabled")
    steps = oracle_block.get("steps", 10_000)
    if not isinstance(steps, int) or steps < 2:
        doc.fail("oracle.steps must be an integer >= 2", "oracle", "steps")
    tolerance = oracle_block.get("tolerance", 1e-9)
    if isinstance(tolerance, bool) or not isinstance(tolerance, (int, float)) or tolerance <= 0:
        doc.fail("oracle.tolerance must be a positive number", "oracle", "tolerance")

    config = ScenarioConfig(
        players=players,
        t0=t0,
        t_end=t_end,
        deltas=tuple(float(d) for d in deltas),
        x0_values=tuple(float(v) for v in x0_values),
        out_dir=str(out_dir),
        formats=tuple(formats),
        sig_digits=sig_digits,
        oracle_enabled=enabled,
        oracle_steps=steps,
        oracle_tolerance=float(tolerance),
    )
    for delta in config.deltas:
        config.spec_for(delta)  # surfaces domain errors (bad horizon etc.) now
    return config


class _TableWriter:
    """Accumulates rows and writes them as CSV and/or aligned text."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.sig = config.sig_digits
        self.written: list[Path] = []

    def fmt(self, value: float) -> str:
        if value != value:  # NaN marks an unavailable cell
            return ""
        text = format(value, f".{self.sig}g")
        return "0" if text in ("-0", "-0.0") else text

    def write(self, name: str, header: list[str], rows: list[list[str]]) -> None:
        out = Path(self.config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in self.config.formats:
            path = out / f"{name}.csv"
            with open(path, "w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
            self.written.append(path)
        if "text" in self.config.formats:
            path = out / f"{name}.txt"
            widths = [len(h) for h in header]
            for row in rows:
                widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
            lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
            lines.append("  ".join("-" * w for w in widths))
            for row in rows:
                lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
            path.write_text("\n".join(lines) + "\n")
            self.written.append(path)


def _formula(control: PiecewiseControl, fmt) -> str:
    last = control.segments[-1]
    if last.is_zero:
        return "0"
    body = (f"{fmt(last.level)} + {fmt(last.amplitude)}"
            f"*exp({fmt(control.delta)}*(t - {fmt(control.t_anchor)}))")
    switch = control.switch_time
    if switch is None:
        return body
    return f"0 for t <= {fmt(switch)}, then {body}"


def _x0_headers(config: ScenarioConfig, label: str, fmt) -> list[str]:
    return [f"{label}_at_x0_{fmt(v)}" for v in config.x0_values]


def _strategy_rows(config: ScenarioConfig, writer: _TableWriter, cooperative: bool) -> tuple[list[str], list[list[str]]]:
    fmt = writer.fmt
    header = ["delta", "player", "name", "regime", "switch_time", "c0", "c1",
              "formula", "payoff_intercept", "payoff_x0_slope"]
    header += _x0_headers(config, "payoff", fmt)
    rows = []
    for delta in config.deltas:
        spec = config.spec_for(delta)
        profile = cooperative_controls(spec) if cooperative else nash_controls(spec)
        for i, control in enumerate(profile):
            last = control.segments[-1]
            regime = ("boundary" if last.is_zero
                      else "switching" if control.switch_time is not None else "interior")
            payoff = player_payoff(spec, profile, i)
            row = [
                fmt(delta), str(i + 1), spec.players[i].name, regime,
                fmt(control.switch_time) if control.switch_time is not None else "",
                fmt(last.level) if not last.is_zero else "",
                fmt(last.amplitude) if not last.is_zero else "",
                _formula(control, fmt),
                fmt(payoff.intercept), fmt(payoff.x0_slope),
            ]
            row += [fmt(payoff.value(v)) for v in config.x0_values]
            rows.append(row)
    return header, rows


def _emit_coefficients(config: ScenarioConfig, writer: _TableWriter) -> None:
    header = ["player", "name", "b", "d"]
    rows = [[str(i + 1), p.name, writer.fmt(p.revenue_slope), writer.fmt(p.fine_rate)]
            for i, p in enumerate(config.players)]
    writer.write("coefficients", header, rows)


def _emit_nash(config: ScenarioConfig, writer: _TableWriter) -> None:
    header, rows = _strategy_rows(config, writer, cooperative=False)
    writer.write("nash_strategies", header, rows)


def _emit_coop(config: ScenarioConfig, writer: _TableWriter) -> None:
    header, rows = _strategy_rows(config, writer, cooperative=True)
    writer.write("cooperative_strategies", header, rows)


def _emit_gaps(config: ScenarioConfig, writer: _TableWriter) -> None:
    fmt = writer.fmt
    header = ["delta", "emission_gap_scale", "emission_gap_formula",
              "stock_gap_at_T", "stock_gap_closed_form",
              "nash_joint_intercept", "nash_joint_x0_slope",
              "coop_joint_intercept", "coop_joint_x0_slope", "joint_gain"]
    header += _x0_headers(config, "nash_joint", fmt)
    header += _x0_headers(config, "coop_joint", fmt)
    rows = []
    for delta in config.deltas:
        spec = config.spec_for(delta)
        nash = nash_controls(spec)
        coop = cooperative_controls(spec)
        nash_total = sum((player_payoff(spec, nash, i) for i in range(spec.n_players)),
                         start=_ZERO_PAYOFF)
        coop_total = sum((player_payoff(spec, coop, i) for i in range(spec.n_players)),
                         start=_ZERO_PAYOFF)
        gap_at_end = (stock_trajectory(spec, nash).terminal_value
                      - stock_trajectory(spec, coop).terminal_value)
        scale = (spec.n_players - 1) * spec.total_fine_rate / spec.delta
        gap_formula = (f"{fmt(scale)}*(1 - exp({fmt(spec.delta)}*(t - {fmt(spec.t_end)})))")
        row = [
            fmt(delta), fmt(scale), gap_formula,
            fmt(gap_at_end), fmt(stock_gap_closed_form(spec)),
            fmt(nash_total.intercept), fmt(nash_total.x0_slope),
            fmt(coop_total.intercept), fmt(coop_total.x0_slope),
            fmt(coop_total.intercept - nash_total.intercept),
        ]
        row += [fmt(nash_total.value(v)) for v in config.x0_values]
        row += [fmt(coop_total.value(v)) for v in config.x0_values]
        rows.append(row)
    writer.write("emission_gaps", header, rows)


def _coalition_label(members: tuple[int, ...]) -> str:
    return "{" + ",".join(str(i + 1) for i in members) + "}"


def _emit_charfn(config: ScenarioConfig, writer: _TableWriter) -> None:
    fmt = writer.fmt
    header = ["delta", "coalition", "size", "intercept", "x0_slope"]
    header += _x0_headers(config, "value", fmt)
    rows = []
    for delta in config.deltas:
        spec = config.spec_for(delta)
        cf = characteristic_function(spec)
        for members in cf.coalitions():
            value = cf[members]
            row = [fmt(delta), _coalition_label(members), str(len(members)),
                   fmt(value.intercept), fmt(value.x0_slope)]
            row += [fmt(value.value(v)) for v in config.x0_values]
            rows.append(row)
    writer.write("characteristic_function", header, rows)


def _emit_shapley(config: ScenarioConfig, writer: _TableWriter) -> None:
    fmt = writer.fmt
    header = ["delta", "player", "name", "intercept", "x0_slope"]
    header += _x0_headers(config, "value", fmt)
    rows = []
    for delta in config.deltas:
        spec = config.spec_for(delta)
        allocation = shapley_value(characteristic_function(spec))
        for i, share in enumerate(allocation.shares):
            row = [fmt(delta), str(i + 1), spec.players[i].name,
                   fmt(share.intercept), fmt(share.x0_slope)]
            row += [fmt(share.value(v)) for v in config.x0_values]
            rows.append(row)
    writer.write("shapley_values", header, rows)


def _emit_gains(config: ScenarioConfig, writer: _TableWriter) -> None:
    fmt = writer.fmt
    header = ["delta", "player", "name", "nash_intercept", "shapley_intercept",
              "gain", "benefits"]
    rows = []
    for delta in config.deltas:
        spec = config.spec_for(delta)
        report = cooperation_gains(spec)
        for i in range(spec.n_players):
            rows.append([
                fmt(delta), str(i + 1), spec.players[i].name,
                fmt(report.nash_payoffs[i].intercept),
                fmt(report.shapley.shares[i].intercept),
                fmt(report.gains[i]),
                "yes" if report.benefits[i] else "no",
            ])
        nash_total = sum(p.intercept for p in report.nash_payoffs)
        rows.append([
            fmt(delta), "joint", "(all players)", fmt(nash_total),
            fmt(nash_total + report.joint_gain), fmt(report.joint_gain),
            "yes" if report.joint_gain > 0 else "no",
        ])
    writer.write("gains", header, rows)


def _emit_oracle(config: ScenarioConfig, writer: _TableWriter) -> bool:
    fmt = writer.fmt
    header = ["delta", "mode", "converged", "iterations", "control_gap",
              "max_payoff_gap", "pontryagin_residual", "status"]
    rows = []
    ok = True
    nan = float("nan")
    for delta in config.deltas:
        spec = config.spec_for(delta)
        for mode, solve in (("nash", iterated_best_response), ("cooperative", joint_optimum)):
            try:
                report: OracleReport = solve(
                    spec, n_steps=config.oracle_steps, tolerance=config.oracle_tolerance
                )
            except OracleConvergenceError as exc:
                ok = False
                rows.append([fmt(delta), mode, "no", "", fmt(nan), fmt(nan), fmt(nan),
                             f"failed: {exc}"])
                continue
            rows.append([
                fmt(delta), mode, "yes" if report.converged else "no",
                str(report.iterations), fmt(report.control_gap),
                fmt(report.payoff_gap), fmt(report.pontryagin_residual), "ok",
            ])
    writer.write("oracle_report", header, rows)
    return ok


_ZERO_PAYOFF = AffinePayoff(0.0, 0.0)


def run(config: ScenarioConfig, command: str) -> tuple[int, list[Path]]:
    """Execute one command against a resolved config.

    Returns (exit_code, written_paths): 0 on success, 3 when the oracle failed
    to converge (partial outputs, including the failure row, are retained).
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}, expected one of {COMMANDS}")
    writer = _TableWriter(config)
    ok = True
    if command == "tables":
        _emit_coefficients(config, writer)
        _emit_nash(config, writer)
        _emit_coop(config, writer)
        _emit_gaps(config, writer)
        _emit_charfn(config, writer)
        _emit_shapley(config, writer)
        _emit_gains(config, writer)
    elif command == "nash":
        _emit_nash(config, writer)
    elif command == "coop":
        _emit_coop(config, writer)
    elif command == "charfn":
        _emit_charfn(config, writer)
    elif command == "shapley":
        _emit_shapley(config, writer)
    elif command == "gains":
        _emit_gains(config, writer)
    else:
        if not config.oracle_enabled:
            raise ConfigError("oracle is disabled in this config; enable oracle.enabled "
                              "or drop the verify command")
        ok = _emit_oracle(config, writer)
    return (0 if ok else 3), writer.written


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="emission-game",
        description="Closed-form emission game solver: Nash and cooperative "
                    "strategies, coalition values, Shapley allocations, and "
                    "an independent numeric verification pass.",
    )
    parser.add_argument("--config", default=None,
                        help="scenario YAML (default: bundled 2016 Siberian dataset)")
    parser.add_argument("--command", default="tables", choices=COMMANDS,
                        help="what to compute (default: tables)")
    parser.add_argument("--delta", type=float, nargs="+", default=None,
                        help="override the decay-rate sweep")
    parser.add_argument("--x0", type=float, nargs="+", default=None,
                        help="override initial-stock evaluation points")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--verify-steps", type=int, default=None,
                        help="override the oracle grid size")
    parser.add_argument("--format", choices=("csv", "text"), default=None,
                        help="restrict output to one format")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config if args.config else bundled_config_path())
        if args.delta is not None:
            for value in args.delta:
                if value <= 0 or not math.isfinite(value):
                    raise ConfigError(f"--delta values must be positive, got {value}")
            config = replace(config, deltas=tuple(args.delta))
        if args.x0 is not None:
            for value in args.x0:
                if value < 0 or not math.isfinite(value):
                    raise ConfigError(f"--x0 values must be non-negative, got {value}")
            config = replace(config, x0_values=tuple(args.x0))
        if args.out is not None:
            config = replace(config, out_dir=args.out)
        if args.verify_steps is not None:
            if args.verify_steps < 2:
                raise ConfigError("--verify-steps must be at least 2")
            config = replace(config, oracle_steps=args.verify_steps)
        if args.format is not None:
            config = replace(config, formats=(args.format,))
        for delta in config.deltas:
            config.spec_for(delta)
        code, written = run(config, args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
