"""Monte Carlo comparison of three pricing policies on a sampled community.

Budgets are drawn once per budget realization and solar output once per
(budget, generation) pair; every policy sees the same draw. Each draw has
its own Philox stream keyed by its indices, so a draw's numbers do not
depend on how many draws are run or in which order they are evaluated.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .domain import (
    Allocation,
    CommonUtility,
    EquityStandard,
    InfeasibleEquityStandard,
    Member,
    NemTariff,
    community_arrays,
    make_members,
    NO_EQUITY,
)
from .equity import LorenzCurve, gini, lorenz
from .pricing import psi
from .tariff import nem_payment, standalone_arrays

log = logging.getLogger(__name__)

STANDALONE = "StandaloneNem"
COMMUNITY = "CommunityNoEquity"
DEQWM = "DEqwm"
POLICIES = (STANDALONE, COMMUNITY, DEQWM)

_BUDGET_STREAM = 0
_GENERATION_STREAM = 1
_SETUP_STREAM = 2


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LognormalBudget(_Model):
    """Budget in currency per scheduling hour; median is exp(mu)."""

    kind: Literal["lognormal"] = "lognormal"
    mu: float = math.log(0.3)
    sigma: float = Field(0.8, ge=0)


class CsvBudget(_Model):
    """Empirical budgets resampled with replacement from a one-column CSV."""

    kind: Literal["csv"] = "csv"
    path: str

    def values(self) -> np.ndarray:
        return read_budget_csv(self.path)


class UniformUtility(_Model):
    """Quadratic utility coefficients a ~ U[a_low, a_high], b ~ U[b_low, b_high].

    The default keeps b common, so members differ in marginal value and
    satiation but respond identically to a price change.
    """

    a_low: float = Field(1.0, gt=0)
    a_high: float = Field(2.0, gt=0)
    b_low: float = Field(0.45, gt=0)
    b_high: float = Field(0.45, gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.a_low > self.a_high or self.b_low > self.b_high:
            raise ValueError("utility bounds must satisfy low <= high")
        return self


class TariffConfig(_Model):
    pi_plus: float = Field(0.4, gt=0)
    pi_minus: float = Field(0.2, ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.pi_minus > self.pi_plus:
            raise ValueError("pi_minus must not exceed pi_plus")
        return self

    def to_tariff(self) -> NemTariff:
        return NemTariff(self.pi_plus, self.pi_minus)


class ScenarioConfig(_Model):
    """Experiment definition; the JSON config file mirrors these fields.

    ``omega`` of None means no equity standard. ``budget_assignment`` of
    ``ranked`` hands member i the i-th smallest budget of every draw, so a
    member's expected budget rank is fixed and budget groups are comparable
    across draws; ``iid`` draws each member's budget independently.
    """

    n_members: int = Field(100, ge=1)
    n_solar: int = Field(75, ge=0)
    budget_dist: Union[LognormalBudget, CsvBudget] = LognormalBudget()
    budget_assignment: Literal["ranked", "iid"] = "ranked"
    solar_forecast: Union[float, list[float]] = 3.0
    solar_noise_sigma: float = Field(0.5, ge=0)
    n_budget_draws: int = Field(20, ge=1)
    n_generation_draws: int = Field(20, ge=1)
    seed: int = Field(20240601, ge=0, lt=2**64)
    tariff: TariffConfig = TariffConfig()
    omega: float | None = 1.2
    common_utility: Literal["identity", "log1p"] = "identity"
    utility_dist: UniformUtility = UniformUtility()

    @field_validator("solar_forecast")
    @classmethod
    def _nonneg(cls, v):
        vals = [v] if isinstance(v, (int, float)) else v
        if any(not math.isfinite(f) or f < 0 for f in vals):
            raise ValueError("solar forecasts must be finite and >= 0")
        return v

    @model_validator(mode="after")
    def _counts(self):
        if self.n_solar > self.n_members:
            raise ValueError("n_solar cannot exceed n_members")
        if isinstance(self.solar_forecast, list) and len(self.solar_forecast) != self.n_solar:
            raise ValueError("solar_forecast list needs one entry per solar member")
        return self

    def standard(self) -> EquityStandard:
        if self.omega is None:
            return NO_EQUITY
        return EquityStandard(self.omega, CommonUtility(self.common_utility))


def read_budget_csv(path: str | os.PathLike) -> np.ndarray:
    """Budgets from a CSV with the single header ``budget_currency``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["budget_currency"]:
        raise ValueError(f"{path}: expected header 'budget_currency'")
    vals = np.array([float(r[0]) for r in rows[1:] if r and r[0].strip()], dtype=float)
    if vals.size == 0 or np.any(~np.isfinite(vals)) or np.any(vals < 0):
        raise ValueError(f"{path}: budgets must be finite, >= 0 and at least one row")
    return vals


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class Community:
    """Draw-independent member attributes."""

    a: np.ndarray
    b: np.ndarray
    solar: np.ndarray  # indices of members with solar
    forecast: np.ndarray  # aligned with ``solar``


def setup_community(config: ScenarioConfig) -> Community:
    rng = _rng(config.seed, _SETUP_STREAM)
    u = config.utility_dist
    n = config.n_members
    a = rng.uniform(u.a_low, u.a_high, n)
    b = rng.uniform(u.b_low, u.b_high, n)
    solar = np.sort(rng.permutation(n)[: config.n_solar])
    fc = np.broadcast_to(np.asarray(config.solar_forecast, dtype=float), (config.n_solar,)).copy()
    return Community(a, b, solar, fc)


def sample_budgets(config: ScenarioConfig, rng: np.random.Generator, pool: np.ndarray | None = None) -> np.ndarray:
    n = config.n_members
    dist = config.budget_dist
    if isinstance(dist, CsvBudget):
        x = rng.choice(dist.values() if pool is None else pool, size=n, replace=True)
    else:
        x = rng.lognormal(dist.mu, dist.sigma, n)
    return np.sort(x) if config.budget_assignment == "ranked" else x


def sample_generation(config: ScenarioConfig, rng: np.random.Generator, community: Community | None = None) -> np.ndarray:
    """Solar output: forecast plus Gaussian error, clipped at zero."""
    community = community or setup_community(config)
    g = np.zeros(config.n_members)
    eps = rng.normal(0.0, 1.0, config.n_solar) * config.solar_noise_sigma
    g[community.solar] = np.maximum(0.0, community.forecast + eps)
    return g


def scenario_members(config: ScenarioConfig, budget_draw: int = 0, generation_draw: int = 0) -> list[Member]:
    """The community sampled for one (budget draw, generation draw) pair."""
    community = setup_community(config)
    pool = config.budget_dist.values() if isinstance(config.budget_dist, CsvBudget) else None
    x = sample_budgets(config, _rng(config.seed, _BUDGET_STREAM, budget_draw), pool)
    g = sample_generation(config, _rng(config.seed, _GENERATION_STREAM, budget_draw, generation_draw), community)
    return make_members(community.a, community.b, g, x)


def run_policy(
    policy: str, members: Sequence[Member], tariff: NemTariff, standard: EquityStandard
) -> Allocation:
    if policy == STANDALONE:
        c = community_arrays(members)
        d, s = standalone_arrays(c, tariff)
        pay = nem_payment(tariff, d - c.g)
        z = float(np.sum(d - c.g))
        return Allocation(d, pay, s, z, float(np.sum(pay)))
    if policy == COMMUNITY:
        return psi(members, tariff, NO_EQUITY, report_bound=False)[1]
    if policy == DEQWM:
        return psi(members, tariff, standard, report_bound=False)[1]
    raise ValueError(f"unknown policy {policy!r}")


@dataclass(frozen=True)
class PolicyResult:
    policy: str
    expected_consumption: np.ndarray
    expected_surplus: np.ndarray
    gini: float
    lorenz: LorenzCurve
    welfare_mean: float
    infeasible_count: int = 0


@dataclass(frozen=True)
class MonteCarloResult:
    config: ScenarioConfig
    policies: tuple[PolicyResult, ...]
    budget_mean: np.ndarray
    infeasible_count: int
    n_scenarios: int
    # per (budget draw, generation draw, policy): mean consumption, welfare
    scenario_stats: np.ndarray

    @property
    def partial(self) -> bool:
        return self.infeasible_count > 0

    def __getitem__(self, policy: str) -> PolicyResult:
        for p in self.policies:
            if p.policy == policy:
                return p
        raise KeyError(policy)


def _budget_draw(args) -> tuple:
    """All generation draws of one budget draw; NaN marks infeasible runs."""
    config, k, pool = args
    community = setup_community(config)
    tariff = config.tariff.to_tariff()
    standard = config.standard()
    n, m = config.n_members, config.n_generation_draws
    x = sample_budgets(config, _rng(config.seed, _BUDGET_STREAM, k), pool)
    cons = np.full((m, len(POLICIES), n), np.nan)
    surp = np.full((m, len(POLICIES), n), np.nan)
    for j in range(m):
        g = sample_generation(config, _rng(config.seed, _GENERATION_STREAM, k, j), community)
        members = make_members(community.a, community.b, g, x)
        for p, policy in enumerate(POLICIES):
            try:
                alloc = run_policy(policy, members, tariff, standard)
            except InfeasibleEquityStandard:
                log.info("budget draw %d, generation draw %d: %s infeasible", k, j, policy)
                continue
            cons[j, p] = alloc.consumption_d
            surp[j, p] = alloc.surplus_s
    return x, cons, surp


def monte_carlo(config: ScenarioConfig, threads: int = 1) -> MonteCarloResult:
    """Expected per-member consumption and surplus under each policy.

    Expectations run over generation draws first, then budget draws.
    Infeasible runs are dropped from their policy's averages and counted.
    Results are identical for any ``threads``.
    """
    pool = config.budget_dist.values() if isinstance(config.budget_dist, CsvBudget) else None
    jobs = [(config, k, pool) for k in range(config.n_budget_draws)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            draws = list(ex.map(_budget_draw, jobs))
    else:
        draws = [_budget_draw(j) for j in jobs]

    x = np.stack([d[0] for d in draws])  # (K, n)
    cons = np.stack([d[1] for d in draws])  # (K, M, P, n)
    surp = np.stack([d[2] for d in draws])
    feasible = ~np.isnan(cons[..., 0])  # (K, M, P)
    infeasible = int(np.sum(~feasible[:, :, POLICIES.index(DEQWM)]))
    if infeasible:
        log.warning("%d of %d scenarios infeasible under %s", infeasible, feasible.shape[0] * feasible.shape[1], DEQWM)

    with np.errstate(invalid="ignore"):
        welfare = np.sum(surp, axis=-1)
        stats = np.stack([np.mean(cons, axis=-1), welfare], axis=-1)
    results = []
    for p, policy in enumerate(POLICIES):
        ok = feasible[:, :, p]
        n_ok = ok.sum(axis=1)
        draws_ok = n_ok > 0
        if not np.any(draws_ok):
            results.append(
                PolicyResult(policy, np.full(config.n_members, np.nan), np.full(config.n_members, np.nan),
                             math.nan, None, math.nan, int(np.sum(~ok)))
            )
            continue
        c_draw = np.nansum(cons[:, :, p], axis=1)[draws_ok] / n_ok[draws_ok, None]
        s_draw = np.nansum(surp[:, :, p], axis=1)[draws_ok] / n_ok[draws_ok, None]
        e_cons = np.mean(c_draw, axis=0)
        e_surp = np.mean(s_draw, axis=0)
        results.append(
            PolicyResult(
                policy=policy,
                expected_consumption=e_cons,
                expected_surplus=e_surp,
                gini=gini(e_cons),
                lorenz=lorenz(e_cons),
                welfare_mean=float(np.mean(welfare[:, :, p][ok])),
                infeasible_count=int(np.sum(~ok)),
            )
        )
    return MonteCarloResult(
        config=config,
        policies=tuple(results),
        budget_mean=np.mean(x, axis=0),
        infeasible_count=infeasible,
        n_scenarios=int(feasible.shape[0] * feasible.shape[1]),
        scenario_stats=stats,
    )


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_results(result: MonteCarloResult, out_dir: str | os.PathLike) -> list[Path]:
    """Per-policy, summary and Lorenz CSVs; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for pr in result.policies:
        path = out / f"{pr.policy}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["member_id", "expected_consumption_kwh", "expected_surplus", "budget_mean"])
            for i in range(len(pr.expected_consumption)):
                w.writerow([i + 1, _fmt(pr.expected_consumption[i]), _fmt(pr.expected_surplus[i]),
                            _fmt(result.budget_mean[i])])
        written.append(path)
    path = out / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "welfare_mean", "gini", "min_consumption", "infeasible_count"])
        for pr in result.policies:
            w.writerow([pr.policy, _fmt(pr.welfare_mean), _fmt(pr.gini),
                        _fmt(np.min(pr.expected_consumption)), pr.infeasible_count])
    written.append(path)
    for pr in result.policies:
        if pr.lorenz is None:
            continue
        path = out / f"lorenz_{pr.policy}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pop_share", "consumption_share"])
            for q, s in zip(pr.lorenz.pop_share, pr.lorenz.share):
                w.writerow([_fmt(q), _fmt(s)])
        written.append(path)
    return written
