"""Operator pricing policy: volumetric price and discriminative fixed charges.

The volumetric price follows the community's aggregate position against the
network: buy rate when the community net-consumes, sell rate when it
net-produces, and the internal clearing price in between. Fixed charges are
lump-sum transfers chosen so that total welfare is maximal while revenue
balances, every member keeps at least its standalone surplus, stays within
budget, and consumes at least the equity floor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _core
from .domain import (
    Allocation,
    CommunityArrays,
    EquityStandard,
    InfeasibleEquityStandard,
    Member,
    NemTariff,
    PricingParams,
    community_arrays,
)
from .member import chi
from .tariff import nem_payment, standalone_arrays

log = logging.getLogger(__name__)

NET_CONSUMER = "net-consumer"
NET_ZERO = "net-zero"
NET_PRODUCER = "net-producer"

# relative tolerance on the community net position when checking the regime
_REGIME_TOL = 1e-6
RESIDUAL_TOL = 1e-9
EQUITY_TOL = 1e-8


@dataclass(frozen=True)
class VolumetricRegions:
    d_plus: float
    d_minus: float
    clearing_price: float | None
    total_generation: float

    @property
    def region(self) -> str:
        if self.total_generation < self.d_plus:
            return NET_CONSUMER
        if self.total_generation > self.d_minus:
            return NET_PRODUCER
        return NET_ZERO


@dataclass(frozen=True)
class FixedChargeSolution:
    theta_0: float
    theta_fixed: np.ndarray
    consumption_d: np.ndarray
    payment_p: np.ndarray
    binding_sets: tuple[frozenset, ...]
    max_min_surplus: float
    multiplier: float


def _region_price(demand_of, G: float, tariff: NemTariff) -> tuple[float, float, float, float | None]:
    d_plus = float(demand_of(tariff.pi_plus))
    d_minus = float(demand_of(tariff.pi_minus))
    if G < d_plus:
        return tariff.pi_plus, d_plus, d_minus, None
    if G > d_minus:
        return tariff.pi_minus, d_plus, d_minus, None
    p0 = _core.clearing_price(demand_of, G, tariff.pi_minus, tariff.pi_plus)
    return p0, d_plus, d_minus, p0


def _volumetric(c: CommunityArrays, tariff: NemTariff) -> tuple[float, VolumetricRegions]:
    G = c.total_generation
    theta, d_plus, d_minus, p0 = _region_price(
        lambda p: np.sum(_core.demand(c.a, c.b, p)), G, tariff
    )
    return theta, VolumetricRegions(d_plus, d_minus, p0, G)


def volumetric_price(members: Sequence[Member], tariff: NemTariff) -> tuple[float, VolumetricRegions]:
    """Community volumetric price from unconstrained aggregate demand."""
    return _volumetric(community_arrays(members), tariff)


class _Problem:
    """Per-community quantities that do not depend on prices."""

    def __init__(self, c: CommunityArrays, tariff: NemTariff, floor: float):
        self.c = c
        self.tariff = tariff
        self.floor = floor
        _, self.s_out = standalone_arrays(c, tariff)
        self.kink = _core.budget_kink(c, self.s_out)
        self.sat = c.satiation()

    def slack(self, d) -> float:
        return _core.collection_slack(self.c, d, self.s_out, self.tariff)

    def consumption_at(self, theta0: float, floor: float | None = None) -> tuple[np.ndarray, float]:
        """Welfare-maximal consumption when the volumetric price is held fixed."""
        c = self.c
        floor = self.floor if floor is None else floor
        f0 = _core.demand(c.a, c.b, theta0)
        if np.any(floor > f0 * (1 + 1e-12) + 1e-12):
            raise _core.Infeasible("equity floor above a member's priced demand")
        lo = np.minimum(floor, f0)

        def d_of(lam):
            return _core.response(c, self.kink, lo, f0, theta0, lam)

        if theta0 <= 0:
            if self.slack(d_of(0.0)) < 0:
                raise _core.Infeasible("collection constraint cannot be met")
            return d_of(0.0), 0.0
        lam_top = float(np.max(c.a)) / theta0
        lam = _core.smallest_feasible_multiplier(lambda m: self.slack(d_of(m)), lam_top)
        return d_of(lam), lam

    def joint_price(self, floor: float | None = None) -> float:
        """Volumetric price re-derived from budget-capped demands.

        The multiplier on the collection constraint and the regional price
        are searched together so the price matches the community position
        that the reduced consumption actually produces.
        """
        c = self.c
        floor = self.floor if floor is None else floor
        if np.any(floor > self.sat):
            raise _core.Infeasible("equity floor above satiation")
        G = c.total_generation

        def state(lam):
            def dem(p):
                return np.sum(_core.response(c, self.kink, floor, self.sat, p, lam))

            theta, *_ = _region_price(dem, G, self.tariff)
            return theta, _core.response(c, self.kink, floor, self.sat, theta, lam)

        lam = _core.expanding_multiplier(lambda m: self.slack(state(m)[1]))
        theta, d = state(lam)
        if np.any(floor > _core.demand(c.a, c.b, theta) * (1 + 1e-12) + 1e-12):
            raise _core.Infeasible("equity floor above a member's priced demand")
        return theta


def _regime_consistent(theta0: float, z: float, tariff: NemTariff, scale: float) -> bool:
    tol = _REGIME_TOL * max(1.0, scale)
    if tariff.pi_plus == tariff.pi_minus:
        return True
    if theta0 >= tariff.pi_plus:
        return z >= -tol
    if theta0 <= tariff.pi_minus:
        return z <= tol
    return abs(z) <= tol


def _fixed_charges(prob: _Problem, theta0: float, d: np.ndarray, lam: float) -> FixedChargeSolution:
    c = prob.c
    f0 = _core.demand(c.a, c.b, theta0)
    reduced = d < f0 * (1 - 1e-12)
    z = float(np.sum(d - c.g))
    required = nem_payment(prob.tariff, z)
    u = c.utility(d)
    pay = np.empty(c.n)
    pay[reduced] = c.x[reduced]
    flex = ~reduced
    cap = _core.caps(c, d, prob.s_out)
    pay_flex, level = _core.maximin_payments(
        u[flex], cap[flex], required - float(np.sum(pay[reduced]))
    )
    pay[flex] = pay_flex
    theta_fixed = pay - theta0 * (d - c.g)
    surplus = u - pay
    tol = 1e-9 * max(1.0, float(np.max(np.abs(u))))
    binding = tuple(
        frozenset(
            {"balance"}
            | ({"budget"} if pay[i] >= c.x[i] - tol else set())
            | ({"IR"} if surplus[i] <= prob.s_out[i] + tol else set())
            | ({"equity"} if d[i] <= prob.floor + tol and prob.floor > 0 else set())
        )
        for i in range(c.n)
    )
    return FixedChargeSolution(
        theta_0=theta0,
        theta_fixed=theta_fixed,
        consumption_d=d,
        payment_p=pay,
        binding_sets=binding,
        max_min_surplus=float(np.min(surplus)),
        multiplier=lam,
    )


def _max_feasible_omega(standard: EquityStandard, feasible) -> float:
    """Largest equity level whose consumption floor passes ``feasible``."""
    if not feasible(0.0):
        return -math.inf
    lo, hi = 0.0, 1.0
    while feasible(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e9:
            return math.inf
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return float(standard.common_utility(lo))


def _feasible(fn) -> bool:
    try:
        fn()
    except _core.Infeasible:
        return False
    return True


def solve_fixed_charges(
    members: Sequence[Member], tariff: NemTariff, theta_0: float, standard: EquityStandard
) -> FixedChargeSolution:
    """Welfare-maximizing fixed charges for a given volumetric price.

    Among welfare-equal charge vectors the one maximizing the smallest
    member surplus is returned. Rebates (negative charges) are allowed.
    """
    prob = _Problem(community_arrays(members), tariff, standard.floor)
    try:
        d, lam = prob.consumption_at(theta_0)
        return _fixed_charges(prob, theta_0, d, lam)
    except _core.Infeasible as exc:
        best = _max_feasible_omega(
            standard, lambda fl: _feasible(lambda: prob.consumption_at(theta_0, fl))
        )
        raise InfeasibleEquityStandard(
            f"equity standard omega={standard.omega:g} infeasible at theta_0={theta_0:g} "
            f"({exc}); max feasible omega={best:.6g}",
            best,
        ) from None


def _solve(prob: _Problem) -> FixedChargeSolution:
    c = prob.c
    theta0, _ = _volumetric(c, prob.tariff)
    try:
        d, lam = prob.consumption_at(theta0)
        z = float(np.sum(d - c.g))
        if _regime_consistent(theta0, z, prob.tariff, c.total_generation + np.sum(d)):
            return _fixed_charges(prob, theta0, d, lam)
        log.debug("regime changed after budget capping (theta0=%g, z=%g); re-pricing", theta0, z)
    except _core.Infeasible:
        log.debug("infeasible at unconstrained price %g; re-pricing", theta0)
    theta0 = prob.joint_price()
    d, lam = prob.consumption_at(theta0)
    return _fixed_charges(prob, theta0, d, lam)


def _assemble(members: Sequence[Member], tariff: NemTariff, sol: FixedChargeSolution) -> Allocation:
    decisions = [chi(m, float(t), sol.theta_0) for m, t in zip(members, sol.theta_fixed)]
    d = np.array([dec.consumption_d for dec in decisions])
    p = np.array([dec.payment for dec in decisions])
    s = np.array([dec.surplus for dec in decisions])
    z = float(np.sum(d - np.array([m.generation_g for m in members])))
    return Allocation(d, p, s, z, nem_payment(tariff, z))


def check_constraints(
    members: Sequence[Member], tariff: NemTariff, standard: EquityStandard, alloc: Allocation
) -> dict[str, float]:
    """Worst violation of each community constraint (<= 0 means satisfied)."""
    c = community_arrays(members)
    _, s_out = standalone_arrays(c, tariff)
    rawls = float(np.min(standard.common_utility(alloc.consumption_d)))
    return {
        "revenue": abs(float(np.sum(alloc.payment_p)) - alloc.operator_cost),
        "ir": float(np.max(s_out - alloc.surplus_s)),
        "budget": float(np.max(alloc.payment_p - c.x)),
        "equity": standard.omega - rawls if standard.omega > -math.inf else -math.inf,
    }


def psi(
    members: Sequence[Member],
    tariff: NemTariff,
    standard: EquityStandard,
    *,
    report_bound: bool = True,
) -> tuple[PricingParams, Allocation]:
    """Operator policy: prices for every member and the resulting allocation.

    On infeasibility the raised error carries the largest feasible equity
    level; pass ``report_bound=False`` to skip that (costly) search.
    """
    members = list(members)
    prob = _Problem(community_arrays(members), tariff, standard.floor)
    try:
        sol = _solve(prob)
    except _core.Infeasible as exc:
        if not report_bound:
            raise InfeasibleEquityStandard(str(exc)) from None
        best = _max_feasible_omega(
            standard,
            lambda fl: _feasible(lambda: _solve(_Problem(prob.c, tariff, fl))),
        )
        raise InfeasibleEquityStandard(
            f"equity standard omega={standard.omega:g} infeasible ({exc}); "
            f"max feasible omega={best:.6g}",
            best,
        ) from None
    alloc = _assemble(members, tariff, sol)
    viol = check_constraints(members, tariff, standard, alloc)
    if (
        viol["revenue"] > RESIDUAL_TOL
        or viol["ir"] > RESIDUAL_TOL
        or viol["budget"] > RESIDUAL_TOL
        or viol["equity"] > EQUITY_TOL
    ):
        raise RuntimeError(f"pricing solution violates community constraints: {viol}")
    return PricingParams(sol.theta_0, tuple(float(t) for t in sol.theta_fixed)), alloc
