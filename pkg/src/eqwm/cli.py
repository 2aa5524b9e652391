"""Command-line front end.

    eqwm price    --config FILE [--out DIR]
    eqwm simulate --config FILE --out DIR [--seed N] [--threads N]
    eqwm pareto   --config FILE --omega-min W --omega-max W --steps K [--out DIR]

Exit codes: 0 success, 2 input error, 3 infeasible equity standard.
Log verbosity comes from the EQWM_LOG environment variable (e.g. DEBUG).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .domain import (
    CommonUtility,
    DomainError,
    EquityStandard,
    InfeasibleEquityStandard,
    Member,
    NO_EQUITY,
    make_members,
)
from .equity import pareto_sweep
from .pricing import psi, volumetric_price
from .scenario import ScenarioConfig, TariffConfig, monte_carlo, scenario_members, write_results

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3

log = logging.getLogger("eqwm")


class MemberSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    a: float = Field(gt=0)
    b: float = Field(gt=0)
    g: float = Field(0.0, ge=0)
    x: float = Field(math.inf, ge=0)


class CommunityConfig(BaseModel):
    """Explicit community for ``price`` and ``pareto``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    members: list[MemberSpec] = Field(min_length=1)
    tariff: TariffConfig = TariffConfig()
    omega: float | None = None
    common_utility: Literal["identity", "log1p"] = "identity"

    def standard(self) -> EquityStandard:
        if self.omega is None:
            return NO_EQUITY
        return EquityStandard(self.omega, CommonUtility(self.common_utility))


class InputError(Exception):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def load_config(path: str, seed: int | None = None) -> ScenarioConfig | CommunityConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError(f"config {path} must be a JSON object")
    try:
        if "members" in raw:
            return CommunityConfig(**raw)
        if seed is not None:
            raw["seed"] = seed
        return ScenarioConfig(**raw)
    except (ValidationError, DomainError, ValueError) as exc:
        raise InputError(f"invalid config {path}: {exc}") from None


def community_members(cfg: ScenarioConfig | CommunityConfig) -> list[Member]:
    """Explicit members, or the first sampled draw of a scenario config."""
    if isinstance(cfg, CommunityConfig):
        m = cfg.members
        return make_members([s.a for s in m], [s.b for s in m], [s.g for s in m], [s.x for s in m])
    return scenario_members(cfg, 0, 0)


def cmd_price(cfg, out_dir: str) -> int:
    try:
        members = community_members(cfg)
        tariff = cfg.tariff.to_tariff()
        standard = cfg.standard()
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    theta_u, regions = volumetric_price(members, tariff)
    try:
        params, alloc = psi(members, tariff, standard)
    except InfeasibleEquityStandard as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        print(f"max feasible omega: {exc.max_feasible_omega:.6g}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"theta_0*      {params.theta_0:.6g}")
    print(f"region        {regions.region}")
    print(f"D+            {regions.d_plus:.6g}")
    print(f"D-            {regions.d_minus:.6g}")
    print(f"G             {regions.total_generation:.6g}")
    if params.theta_0 != theta_u:
        print(f"(price re-derived from budget-capped demand; unconstrained {theta_u:.6g})")
    print(f"{'member':>6} {'theta_i':>12} {'d':>10} {'payment':>10} {'surplus':>10}")
    for i, m in enumerate(members):
        print(f"{m.id:>6} {params.theta_fixed[i]:>12.6g} {alloc.consumption_d[i]:>10.5g} "
              f"{alloc.payment_p[i]:>10.5g} {alloc.surplus_s[i]:>10.5g}")
    print(f"welfare       {alloc.welfare:.6g}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "allocation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["member_id", "theta_0", "theta_i", "consumption_kwh", "payment", "surplus"])
        for i, m in enumerate(members):
            w.writerow([m.id, _fmt(params.theta_0), _fmt(params.theta_fixed[i]),
                        _fmt(alloc.consumption_d[i]), _fmt(alloc.payment_p[i]), _fmt(alloc.surplus_s[i])])
    return EXIT_OK


def cmd_simulate(cfg, out_dir: str, threads: int = 1) -> int:
    if not isinstance(cfg, ScenarioConfig):
        print("error: simulate needs a scenario config", file=sys.stderr)
        return EXIT_INPUT
    result = monte_carlo(cfg, threads=threads)
    if result.infeasible_count == result.n_scenarios:
        print(f"infeasible: every {result.n_scenarios} scenario fails omega={cfg.omega}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if result.partial:
        print(f"warning: {result.infeasible_count} of {result.n_scenarios} scenarios infeasible; "
              "DEqwm averages use feasible scenarios only", file=sys.stderr)
    write_results(result, out_dir)
    for pr in result.policies:
        print(f"{pr.policy:<18} welfare {pr.welfare_mean:.6g}  gini {pr.gini:.4f}  "
              f"min consumption {np.min(pr.expected_consumption):.4g}")
    return EXIT_OK


def knee(omegas: Sequence[float], welfare: Sequence[float], rtol: float = 1e-6) -> float | None:
    """Largest equity level reached without giving up welfare."""
    if not omegas:
        return None
    base = welfare[0]
    free = [w for w, v in zip(omegas, welfare) if v >= base - rtol * max(1.0, abs(base))]
    return free[-1]


def cmd_pareto(cfg, out_dir: str, omega_min: float, omega_max: float, steps: int) -> int:
    if not (math.isfinite(omega_min) and math.isfinite(omega_max)) or omega_min >= omega_max or steps < 2:
        print("error: need finite omega_min < omega_max and steps >= 2", file=sys.stderr)
        return EXIT_INPUT
    try:
        members = community_members(cfg)
        tariff = cfg.tariff.to_tariff()
        cu = cfg.standard().common_utility
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    grid = np.linspace(omega_min, omega_max, steps)
    points = pareto_sweep(members, tariff, grid, cu)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pareto.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "welfare", "feasible"])
        for p in points:
            w.writerow([_fmt(p.omega), _fmt(p.welfare) if p.feasible else "", str(p.feasible).lower()])
    feas = [p for p in points if p.feasible]
    if not feas:
        print("no feasible omega in range")
        return EXIT_OK
    k = knee([p.omega for p in feas], [p.welfare for p in feas])
    print(f"feasible points  {len(feas)} of {len(points)}")
    print(f"max feasible     {feas[-1].omega:.6g} (welfare {feas[-1].welfare:.6g})")
    print(f"knee             {k:.6g} (welfare flat up to here: {feas[0].welfare:.6g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eqwm", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes")

    common(sub.add_parser("price", help="operator prices for one community"), "eqwm_out")
    common(sub.add_parser("simulate", help="Monte Carlo policy comparison"), "eqwm_out")
    p = sub.add_parser("pareto", help="welfare against equity level")
    common(p, "eqwm_out")
    p.add_argument("--omega-min", type=float, required=True)
    p.add_argument("--omega-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=10)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = logging.getLevelName(os.environ.get("EQWM_LOG", "WARNING").upper())
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = load_config(args.config, args.seed)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "price":
        return cmd_price(cfg, args.out)
    if args.command == "simulate":
        return cmd_simulate(cfg, args.out, args.threads)
    return cmd_pareto(cfg, args.out, args.omega_min, args.omega_max, args.steps)


if __name__ == "__main__":
    sys.exit(main())
