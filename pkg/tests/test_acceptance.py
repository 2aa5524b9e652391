"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (lines appear in the
terminal summary) or ``python3 tests/test_acceptance.py``.
"""

import filecmp
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES, TARIFF, random_instance  # noqa: E402
from eqwm.centralized import brute_force_eqwm, solve_eqwm  # noqa: E402
from eqwm.cli import main as cli_main  # noqa: E402
from eqwm.domain import (  # noqa: E402
    CommonUtility,
    EquityStandard,
    InfeasibleBudget,
    InfeasibleEquityStandard,
    Member,
    NO_EQUITY,
    QuadraticUtility,
    make_members,
)
from eqwm.equity import check_front, lorenz, pareto_sweep, rawlsian_swf  # noqa: E402
from eqwm.member import chi  # noqa: E402
from eqwm.pricing import check_constraints, psi, volumetric_price  # noqa: E402
from eqwm.scenario import COMMUNITY, DEQWM, STANDALONE, ScenarioConfig, monte_carlo, scenario_members  # noqa: E402
from eqwm.tariff import standalone_optimum  # noqa: E402

# final spacing of the brute-force oracle; see the ledger for why not 1e-3
ORACLE_GRID = 1e-4


def record(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)
    assert ok, line


def test_criterion_1_efficiency_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    done = skipped = central_only = 0
    worst_rel = worst_bf = 0.0
    bad = []
    while done < 200:
        ms, std = random_instance(rng)
        try:
            _, alloc = psi(ms, TARIFF, std, report_bound=False)
        except InfeasibleEquityStandard:
            skipped += 1
            try:
                solve_eqwm(ms, TARIFF, std, report_bound=False)
                # the operator can mandate consumption above priced demand; prices cannot
                central_only += 1
            except InfeasibleEquityStandard:
                pass
            continue
        w_psi = alloc.welfare
        w_c = solve_eqwm(ms, TARIFF, std).welfare
        bf = brute_force_eqwm(ms, TARIFF, std, grid_step=ORACLE_GRID)
        rel = abs(w_psi - w_c) / max(1.0, abs(w_c))
        gap = math.inf if bf is None else max(abs(bf.welfare - w_c), abs(bf.welfare - w_psi))
        worst_rel, worst_bf = max(worst_rel, rel), max(worst_bf, gap)
        if rel > 1e-5 or gap > 1e-3:
            bad.append(done)
        done += 1
    elapsed = time.perf_counter() - t0
    record(
        1,
        not bad and elapsed <= 60,
        f"200 instances ({skipped} infeasible under prices skipped, {central_only} of them "
        f"solvable centrally), max rel gap psi/EqWM {worst_rel:.2e}, "
        f"max gap to grid oracle {worst_bf:.2e}, {elapsed:.1f}s",
    )


def _big_instance(rng):
    n = int(rng.integers(1, 101))
    a = rng.uniform(1, 3, n)
    b = rng.uniform(0.05, 0.5, n)
    g = rng.uniform(0, 15, n) * (rng.random(n) < 0.6)
    x = rng.lognormal(0, 1, n)
    return make_members(a, b, g, x)


def test_criterion_2_constraint_suite():
    rng = np.random.default_rng(99)
    done = violations = 0
    worst = {"revenue": 0.0, "ir": -math.inf, "budget": -math.inf, "equity": -math.inf}
    while done < 1000:
        ms = _big_instance(rng)
        omega = float(rng.uniform(0, 6)) if rng.random() < 0.7 else -math.inf
        alloc = std = None
        # halve an infeasible equity level until it fits, so many floors bind
        for _ in range(8):
            std = EquityStandard(omega)
            try:
                _, alloc = psi(ms, TARIFF, std, report_bound=False)
                break
            except InfeasibleEquityStandard:
                omega /= 2
        if alloc is None:
            continue
        v = check_constraints(ms, TARIFF, std, alloc)
        for k in worst:
            worst[k] = max(worst[k], v[k])
        if v["revenue"] > 1e-9 or v["ir"] > 1e-9 or v["budget"] > 1e-9 or v["equity"] > 1e-8:
            violations += 1
        done += 1
    record(
        2,
        violations == 0,
        f"1000 instances, {violations} violations; worst revenue {worst['revenue']:.1e}, "
        f"IR {worst['ir']:.1e}, budget {worst['budget']:.1e}, equity {worst['equity']:.1e}",
    )


def test_criterion_3_volumetric_structure():
    a = np.array([2.0, 3.0, 1.5, 2.5, 1.2])
    b = np.array([0.1, 0.2, 0.15, 0.3, 0.05])
    share = np.array([0.1, 0.3, 0.2, 0.25, 0.15])
    ms0 = make_members(a, b, np.zeros(5), np.full(5, 1e6))
    _, reg0 = volumetric_price(ms0, TARIFF)
    prev = math.inf
    errors = []
    for G in np.linspace(0, 2 * reg0.d_minus, 401):
        ms = make_members(a, b, G * share, np.full(5, 1e6))
        params, alloc = psi(ms, TARIFF, NO_EQUITY)
        th = params.theta_0
        if G < reg0.d_plus and th != TARIFF.pi_plus:
            errors.append(f"G={G:g}: {th} != pi+")
        elif G > reg0.d_minus and th != TARIFF.pi_minus:
            errors.append(f"G={G:g}: {th} != pi-")
        elif reg0.d_plus <= G <= reg0.d_minus:
            if not (TARIFF.pi_minus <= th <= TARIFF.pi_plus) or abs(alloc.community_net_z) > 1e-6:
                errors.append(f"G={G:g}: theta {th}, net {alloc.community_net_z:g}")
        if th > prev + 1e-15:
            errors.append(f"G={G:g}: price rose")
        prev = th
    record(3, not errors, f"401-point sweep of G over [0, {2 * reg0.d_minus:.1f}]; {len(errors)} errors "
           + "; ".join(errors[:3]))


def test_criterion_4_pareto_front():
    ms = scenario_members(ScenarioConfig(), 0, 0)
    base = psi(ms, TARIFF, NO_EQUITY)[1]
    with pytest.raises(InfeasibleEquityStandard) as exc:
        psi(ms, TARIFF, EquityStandard(1e3))
    top = exc.value.max_feasible_omega
    lo = float(np.min(base.consumption_d))
    grid = np.linspace(lo, top - 1e-9 * max(1.0, top), 20)
    pts = pareto_sweep(ms, TARIFF, grid)
    feasible = sum(p.feasible for p in pts)
    chk = check_front(pts, rtol=1e-6)
    w = [p.welfare for p in pts]
    record(
        4,
        feasible == 20 and chk.ok,
        f"100 members, omega in [{lo:.4f}, {top:.4f}], {feasible}/20 feasible, welfare "
        f"{w[0]:.4f} -> {w[-1]:.4f}, increases {len(chk.welfare_increases)}, "
        f"convex kinks {len(chk.convex_kinks)}, equity misses {len(chk.swf_below_omega)}",
    )


_MC = {}


def _policy_comparison_run():
    if "res" not in _MC:
        t0 = time.perf_counter()
        _MC["res"] = monte_carlo(ScenarioConfig(), threads=min(4, os.cpu_count() or 1))
        _MC["time"] = time.perf_counter() - t0
    return _MC["res"], _MC["time"]


def test_criterion_5_lorenz_ordering():
    res, elapsed = _policy_comparison_run()
    d, c, s = res[DEQWM], res[COMMUNITY], res[STANDALONE]
    q = d.lorenz.pop_share
    gap_c = float(np.min(d.lorenz.at(q) - c.lorenz.at(q)))
    gap_s = float(np.min(d.lorenz.at(q) - s.lorenz.at(q)))
    ok = d.gini < c.gini and d.gini < s.gini and gap_c >= -1e-3 and gap_s >= -1e-3 and elapsed <= 300
    record(
        5,
        ok,
        f"gini DEqwm {d.gini:.4f} < community {c.gini:.4f}, standalone {s.gini:.4f}; "
        f"min Lorenz gap {gap_c:.1e} / {gap_s:.1e}; infeasible {res.infeasible_count}/{res.n_scenarios}; "
        f"{elapsed:.1f}s",
    )


def test_criterion_6_surplus_improvement():
    res, _ = _policy_comparison_run()
    imp = res[DEQWM].expected_surplus - res[STANDALONE].expected_surplus
    order = np.argsort(res.budget_mean, kind="stable")
    q = len(order) // 5
    low, high = float(np.mean(imp[order[:q]])), float(np.mean(imp[order[-q:]]))
    record(
        6,
        float(np.min(imp)) >= -1e-6 and low > high,
        f"min improvement {np.min(imp):.2e}; lowest-budget quintile {low:.4f} > highest {high:.4f}",
    )


def _grid(value, top, step=1e-4):
    d = np.arange(0.0, top + step / 2, step)
    v = value(d)
    k = int(np.argmax(v))
    return d[k], v[k]


def test_criterion_7_member_oracles():
    rng = np.random.default_rng(7)
    worst_d = worst_v = 0.0
    fails = 0
    for _ in range(1000):
        a, b = rng.uniform(0.5, 3), rng.uniform(0.1, 1)
        g = rng.uniform(0, 10) * (rng.random() < 0.6)
        x = rng.lognormal(0, 1)
        m = Member(1, QuadraticUtility(a, b), g, x)
        t0 = rng.uniform(0.05, 1.0)
        ti = rng.uniform(-2, x + t0 * g)
        cases = []
        dec = chi(m, ti, t0)
        cases.append((dec.consumption_d, dec.surplus, dec.budget_bound,
                      lambda d: np.where(ti + t0 * (d - g) <= x + 1e-12,
                                         a * d - 0.5 * b * d * d - ti - t0 * (d - g), -np.inf)))
        d_out, s_out = standalone_optimum(m, TARIFF)
        z = lambda d: np.where(d >= g, TARIFF.pi_plus * (d - g), TARIFF.pi_minus * (d - g))  # noqa: E731
        smooth = min(abs(d_out - max(0.0, (a - p) / b)) for p in (TARIFF.pi_plus, TARIFF.pi_minus))
        cases.append((d_out, s_out, smooth > 1e-12,
                      lambda d: np.where(z(d) <= x + 1e-12, a * d - 0.5 * b * d * d - z(d), -np.inf)))
        for d, s, kinked, value in cases:
            dg, vg = _grid(value, a / b)
            dd, dv = abs(d - dg), s - vg
            worst_d = max(worst_d, dd)
            # never beaten by a feasible grid point; equal to it unless the optimum sits
            # on a kink (budget cap or d = g) between grid nodes, where the grid lags by slope * step
            if dd > 1e-4 + 1e-12 or dv < -1e-9 or (not kinked and dv > 1e-6):
                fails += 1
            if not kinked:
                worst_v = max(worst_v, abs(dv))
    record(7, fails == 0, f"2000 solves, {fails} mismatches; max |d - grid| {worst_d:.1e} kWh, "
           f"max interior value gap {worst_v:.1e}")


def test_criterion_8_equity_fuzz():
    rng = np.random.default_rng(8)
    utils = [CommonUtility("identity"), CommonUtility("log1p"), CommonUtility("quadratic", 2.0, 0.05)]
    lorenz_fails = swf_fails = 0
    d = rng.lognormal(0, 1, 25)
    for k in range(10_000):
        if k % 500 == 0:
            d = rng.lognormal(0, 1, int(rng.integers(2, 40)))
        i, j = rng.choice(len(d), 2, replace=False)
        poor, rich = (i, j) if d[i] <= d[j] else (j, i)
        e = d.copy()
        delta = rng.random() * (d[rich] - d[poor]) / 2
        e[poor] += delta
        e[rich] -= delta
        if np.any(lorenz(e).share < lorenz(d).share - 1e-10):
            lorenz_fails += 1
        for cu in utils:
            if rawlsian_swf(e, cu) < rawlsian_swf(d, cu) - 1e-12:
                swf_fails += 1
        d = e
    record(8, lorenz_fails == 0 and swf_fails == 0,
           f"10000 transfers, Lorenz drops {lorenz_fails}, Rawlsian drops {swf_fails}")


def test_criterion_9_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(ScenarioConfig(n_budget_draws=4, n_generation_draws=4).model_dump_json())
    runs = []
    for k, threads in enumerate(("1", "1", "3")):
        out = tmp_path / f"run{k}"
        assert cli_main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "77",
                         "--threads", threads]) == 0
        runs.append(out)
    names = sorted(p.name for p in runs[0].iterdir())
    match, mismatch, errors = filecmp.cmpfiles(runs[0], runs[1], names, shallow=False)
    m2, mm2, e2 = filecmp.cmpfiles(runs[0], runs[2], names, shallow=False)
    ok = not (mismatch or errors or mm2 or e2) and len(names) == 7
    record(9, ok, f"{len(names)} CSVs byte-identical across repeat and --threads 1/3: "
           f"{len(match)}/{len(names)}, {len(m2)}/{len(names)}")


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as tmp:
                        fn(Path(tmp))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
