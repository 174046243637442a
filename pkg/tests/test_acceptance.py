"""Acceptance suite for the bundled 2016 Siberian dataset.

Each test covers one acceptance criterion and prints a single PASS/FAIL line
(run with -s to see them). Reference cells are kept as the strings they were
published as, so the tolerance of a rounded cell can be read off its last
digit. Cells whose printed rounding is coarser than the stated relative
tolerance are arbitrated by the numeric oracle: the recomputed value must
agree with an independent grid simulation to 1e-6 relative, and the
difference from the printed cell must stay within one unit of its last digit.
"""

import math
from dataclasses import replace

import numpy as np

from emissiongame.cli import bundled_config_path, load_config
from emissiongame.coalitions import characteristic_function, cooperation_gains
from emissiongame.model import GameSpec, PlayerParams, classify_regimes
from emissiongame.oracle import (
    iterated_best_response,
    joint_optimum,
    pontryagin_residual,
    sample_profile,
    simulate,
)
from emissiongame.solver import (
    cooperative_controls,
    nash_controls,
    player_payoff,
    stock_gap_closed_form,
    stock_trajectory,
)

CONFIG = load_config(bundled_config_path())
DELTAS = CONFIG.deltas

COEFFICIENTS = [(59035.12, 525.06), (35649.15, 351.64), (47906.72, 112.71)]

NASH_STRATEGIES = {
    0.02: [("32782.12", "26253"), ("18067.15", "17582"), ("42271.22", "5635.5")],
    0.2: [("56409.82", "2625.3"), ("33890.95", "1758.2"), ("47343.17", "563.55")],
}

COOP_STRATEGIES = {
    0.02: [("9564.62", "49470.5"), ("-13821.35", "49470.5"), ("-1563.78", "49470.5")],
    0.2: [("54088.07", "4947.05"), ("30702.1", "4947.05"), ("42959.67", "4947.0")],
}

NASH_PAYOFFS = [  # delta = 0.02, (intercept, x0 slope) per player
    ("691063605.8", "-209.19"),
    ("250177865.6", "-140.09"),
    ("457730701.9", "-44.9"),
]

STOCK_GAPS = {0.02: 157.044, 0.2: 146.2124}

CHARACTERISTIC = {
    0.02: {
        (0,): ("691061320.2", "-209.19"),
        (1,): ("250173553", "-140.09"),
        (2,): ("457722552.2", "-44.9"),
        (0, 1): ("941245436.6", "-349.28"),
        (0, 2): ("1148794743", "-254.09"),
        (1, 2): ("707904167", "-184.99"),
        (0, 1, 2): ("1398986922", "-394.18"),
    },
    0.2: {
        (0,): ("691201653.2", "-201.84"),
        (1,): ("250267647.2", "-135.18"),
        (2,): ("457753050", "-43.33"),
        (0, 1): ("941479313.4", "-337.02"),
        (0, 2): ("1148965007", "-245.17"),
        (1, 2): ("708028338", "-178.5"),
        (0, 1, 2): ("1399250309", "-380.35"),
    },
}

GAINS = {
    0.02: ([8431.6, 5000.2, 1316.7], 14748.7),
    0.2: ([7991.9, 4739.5, 1248.2], 13979.5),
}


def report(num, label, ok, detail=""):
    print(f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {label}")
    assert ok, detail or label


def digit_unit(printed: str) -> float:
    """Size of one unit in the last printed digit."""
    if "." in printed:
        return 10.0 ** -(len(printed) - printed.index(".") - 1)
    return 1.0


def oracle_confirms(spec, profile, members, closed, n_steps=4000):
    """Recompute an affine value by simulating the profile at two x0 points."""
    grid = sample_profile(spec, profile, n_steps)
    base = simulate(replace(spec, x0=0.0), grid)[1]
    lifted = simulate(replace(spec, x0=1.0), grid)[1]
    intercept = float(sum(base[i] for i in members))
    slope = float(sum(lifted[i] for i in members)) - intercept
    return (math.isclose(intercept, closed.intercept, rel_tol=1e-6, abs_tol=1e-9)
            and math.isclose(slope, closed.x0_slope, rel_tol=1e-6, abs_tol=1e-9))


def cell_ok(computed, printed, rel_tol, confirm=None):
    target = float(printed)
    diff = abs(computed - target)
    if diff <= rel_tol * abs(target):
        return True
    if confirm is None:
        return False
    return diff <= digit_unit(printed) and confirm()


def test_criterion_01_coefficients():
    failures = []
    for player, (b, d) in zip(CONFIG.players, COEFFICIENTS):
        if abs(player.revenue_slope - b) > 0.05:
            failures.append(f"{player.name}: b {player.revenue_slope} != {b}")
        if abs(player.fine_rate - d) > 0.05:
            failures.append(f"{player.name}: d {player.fine_rate} != {d}")
    report(1, "derived revenue and fine coefficients match the reference values",
           not failures, "; ".join(failures))


def _strategy_failures(make_profile, expected):
    failures = []
    for delta in DELTAS:
        spec = CONFIG.spec_for(delta)
        profile = make_profile(spec)
        for i, (c0, c1) in enumerate(expected[delta]):
            last = profile[i].segments[-1]
            if not cell_ok(last.level, c0, 1e-4):
                failures.append(f"delta={delta} player {i + 1}: c0 {last.level} vs {c0}")
            if not cell_ok(last.amplitude, c1, 1e-4):
                failures.append(f"delta={delta} player {i + 1}: c1 {last.amplitude} vs {c1}")
    return failures


def test_criterion_02_nash_strategies():
    failures = _strategy_failures(nash_controls, NASH_STRATEGIES)
    report(2, "open-loop Nash strategy coefficients match the reference rows",
           not failures, "; ".join(failures))


def test_criterion_03_cooperative_strategies():
    failures = _strategy_failures(cooperative_controls, COOP_STRATEGIES)
    report(3, "cooperative strategy coefficients match the reference rows",
           not failures, "; ".join(failures))


def test_criterion_04_nash_payoffs():
    spec = CONFIG.spec_for(0.02)
    profile = nash_controls(spec)
    failures = []
    for i, (intercept, slope) in enumerate(NASH_PAYOFFS):
        payoff = player_payoff(spec, profile, i)
        confirm = lambda p=payoff, i=i: oracle_confirms(spec, profile, (i,), p)
        if not cell_ok(payoff.intercept, intercept, 1e-5, confirm):
            failures.append(f"player {i + 1}: intercept {payoff.intercept} vs {intercept}")
        if not cell_ok(payoff.x0_slope, slope, 1e-5, confirm):
            failures.append(f"player {i + 1}: slope {payoff.x0_slope} vs {slope}")
    report(4, "Nash payoff affine forms match the reference values",
           not failures, "; ".join(failures))


def test_criterion_05_stock_gap():
    failures = []
    for delta, expected in STOCK_GAPS.items():
        spec = CONFIG.spec_for(delta)
        gap = (stock_trajectory(spec, nash_controls(spec)).terminal_value
               - stock_trajectory(spec, cooperative_controls(spec)).terminal_value)
        if abs(gap - expected) > 0.01:
            failures.append(f"delta={delta}: gap {gap} vs {expected}")
        closed = stock_gap_closed_form(spec)
        if abs(gap - closed) > 1e-8 * abs(closed):
            failures.append(f"delta={delta}: gap {gap} != closed form {closed}")
    report(5, "terminal stock gap matches the reference values and its closed form",
           not failures, "; ".join(failures))


def test_criterion_06_characteristic_function():
    failures = []
    for delta in DELTAS:
        spec = CONFIG.spec_for(delta)
        cf = characteristic_function(spec)
        nash = nash_controls(spec)
        coop = cooperative_controls(spec)
        for members, (intercept, slope) in CHARACTERISTIC[delta].items():
            value = cf[members]
            mixed = [coop[i] if i in members else nash[i] for i in range(spec.n_players)]
            confirm = lambda m=members, v=value, p=mixed: oracle_confirms(spec, p, m, v)
            label = "{" + ",".join(str(i + 1) for i in members) + "}"
            if not cell_ok(value.intercept, intercept, 1e-5, confirm):
                failures.append(f"delta={delta} V({label}): intercept "
                                f"{value.intercept} vs {intercept}")
            if not cell_ok(value.x0_slope, slope, 1e-5, confirm):
                failures.append(f"delta={delta} V({label}): slope "
                                f"{value.x0_slope} vs {slope}")
    report(6, "characteristic function values match the reference rows",
           not failures, "; ".join(failures))


def test_criterion_07_shapley_gains():
    failures = []
    for delta, (gains, joint) in GAINS.items():
        spec = CONFIG.spec_for(delta)
        result = cooperation_gains(spec)
        for i, expected in enumerate(gains):
            if abs(result.gains[i] - expected) > 1.0:
                failures.append(f"delta={delta} player {i + 1}: gain "
                                f"{result.gains[i]} vs {expected}")
        if abs(result.joint_gain - joint) > 1.0:
            failures.append(f"delta={delta}: joint gain {result.joint_gain} vs {joint}")
        grand = characteristic_function(spec).grand_value
        total_intercept = sum(s.intercept for s in result.shapley.shares)
        total_slope = sum(s.x0_slope for s in result.shapley.shares)
        if abs(total_intercept - grand.intercept) > 1e-10 * abs(grand.intercept):
            failures.append(f"delta={delta}: Shapley intercepts sum to "
                            f"{total_intercept}, grand value {grand.intercept}")
        if abs(total_slope - grand.x0_slope) > 1e-10 * abs(grand.x0_slope):
            failures.append(f"delta={delta}: Shapley slopes sum to "
                            f"{total_slope}, grand value {grand.x0_slope}")
    report(7, "Shapley gains match the reference values and exhaust the grand value",
           not failures, "; ".join(failures))


def test_criterion_08_qualitative():
    failures = []
    by_fine = sorted(range(3), key=lambda i: CONFIG.players[i].fine_rate, reverse=True)
    joints = {}
    gaps = {}
    for delta in DELTAS:
        spec = CONFIG.spec_for(delta)
        result = cooperation_gains(spec)
        ranked = sorted(range(3), key=lambda i: result.gains[i], reverse=True)
        if ranked != by_fine:
            failures.append(f"delta={delta}: gain order {ranked} != fine order {by_fine}")
        joints[delta] = result.joint_gain
        gaps[delta] = stock_gap_closed_form(spec)
    if not joints[0.02] > joints[0.2]:
        failures.append(f"joint gain {joints[0.02]} at 0.02 not above {joints[0.2]} at 0.2")
    if not gaps[0.02] > gaps[0.2]:
        failures.append(f"stock gap {gaps[0.02]} at 0.02 not above {gaps[0.2]} at 0.2")
    report(8, "larger fines gain more and low decay raises the stakes",
           not failures, "; ".join(failures))


def _switching_spec():
    players = (PlayerParams("upstream", 1.0, 0.6), PlayerParams("downstream", 0.8, 0.3))
    return GameSpec(players=players, t0=0.0, t_end=3.0, delta=0.4)


def test_criterion_09_properties():
    failures = []
    grid = np.linspace(0.0, 0.4, 1001)
    for delta in DELTAS:
        spec = CONFIG.spec_for(delta)
        nash = nash_controls(spec)
        coop = cooperative_controls(spec)
        for mode, profile in (("nash", nash), ("coop", coop)):
            for i, control in enumerate(profile):
                cap = spec.players[i].revenue_slope
                if abs(control.value(spec.t_end) - cap) > 1e-9 * cap:
                    failures.append(f"delta={delta} {mode} player {i + 1}: "
                                    "terminal control is not the cap")
                values = np.array([control.value(t) for t in grid])
                if np.any(values < -1e-12 * cap) or np.any(values > cap * (1 + 1e-12)):
                    failures.append(f"delta={delta} {mode} player {i + 1}: bounds violated")
        nash_sum = np.array([sum(c.value(t) for c in nash) for t in grid])
        coop_sum = np.array([sum(c.value(t) for c in coop) for t in grid])
        interior = nash_sum[:-1] - coop_sum[:-1]
        if not np.all(interior > 0):
            failures.append(f"delta={delta}: joint emission rate not strictly "
                            "below Nash before the horizon end")
        if abs(nash_sum[-1] - coop_sum[-1]) > 1e-9 * nash_sum[-1]:
            failures.append(f"delta={delta}: emission rates differ at the horizon end")
        nash_x = stock_trajectory(spec, nash)
        coop_x = stock_trajectory(spec, coop)
        slack = 1e-12 * max(1.0, nash_x.terminal_value)
        if any(coop_x.value(t) > nash_x.value(t) + slack for t in grid):
            failures.append(f"delta={delta}: cooperative stock above Nash stock")
        cf = characteristic_function(spec)
        for i in range(spec.n_players):
            solo = cf[(i,)]
            alone = player_payoff(spec, nash, i)
            if solo.intercept > alone.intercept * (1 + 1e-12):
                failures.append(f"delta={delta} player {i + 1}: singleton value "
                                "exceeds the Nash payoff")
        cap_max = max(p.revenue_slope for p in spec.players)
        for mode in ("nash", "cooperative"):
            profile = nash if mode == "nash" else coop
            check = pontryagin_residual(spec, profile, mode)
            if check.adjoint_residual > 1e-8:
                failures.append(f"delta={delta} {mode}: adjoint residual "
                                f"{check.adjoint_residual}")
            if check.terminal_gap > 1e-12 * cap_max:
                failures.append(f"delta={delta} {mode}: terminal condition violated")
    # the dataset never switches, so continuity at the switch needs its own game
    switching = _switching_spec()
    regimes = classify_regimes(switching)
    assert any(r.kind == "switching" for r in regimes.nash + regimes.cooperative)
    for mode, profile in (("nash", nash_controls(switching)),
                          ("cooperative", cooperative_controls(switching))):
        for i, control in enumerate(profile):
            if control.switch_time is None:
                continue
            cap = switching.players[i].revenue_slope
            eps = 1e-9 * switching.horizon
            if abs(control.value(control.switch_time)) > 1e-12 * cap:
                failures.append(f"switching {mode} player {i + 1}: nonzero at the switch")
            if abs(control.value(control.switch_time + eps)) > 1e-6 * cap:
                failures.append(f"switching {mode} player {i + 1}: jump after the switch")
            if abs(control.value(control.switch_time - eps)) > 0.0:
                failures.append(f"switching {mode} player {i + 1}: nonzero before the switch")
        check = pontryagin_residual(switching, profile, mode)
        if check.adjoint_residual > 1e-8:
            failures.append(f"switching {mode}: adjoint residual {check.adjoint_residual}")
    report(9, "structural properties of the closed forms hold",
           not failures, "; ".join(failures))


def _five_player_spec():
    rng = np.random.default_rng(20160815)
    bs = rng.uniform(1.0, 3.0, 5)
    ds = rng.uniform(0.3, 1.2, 5)
    players = tuple(PlayerParams(f"synthetic {i + 1}", float(b), float(d))
                    for i, (b, d) in enumerate(zip(bs, ds)))
    return GameSpec(players=players, t0=0.0, t_end=4.0, delta=0.25, x0=0.5)


def test_criterion_10_oracle_equivalence():
    failures = []
    cases = [CONFIG.spec_for(delta) for delta in DELTAS]
    synthetic = _five_player_spec()
    regimes = classify_regimes(synthetic)
    assert any(r.kind == "switching" for r in regimes.nash + regimes.cooperative)
    cases.append(synthetic)
    for spec in cases:
        bound = 1e-3 * max(p.revenue_slope for p in spec.players)
        tag = f"delta={spec.delta} n={spec.n_players}"
        for mode, solve in (("nash", iterated_best_response), ("coop", joint_optimum)):
            result = solve(spec)
            if not result.converged:
                failures.append(f"{tag} {mode}: did not converge")
            if result.control_gap > bound:
                failures.append(f"{tag} {mode}: control gap {result.control_gap} > {bound}")
            if result.payoff_gap > 1e-6:
                failures.append(f"{tag} {mode}: payoff gap {result.payoff_gap}")
    report(10, "the numeric oracle reproduces both closed forms at fine grids",
           not failures, "; ".join(failures))
