"""Member consumption response to the community's affine payment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DomainError, InfeasibleBudget, Member, QuadraticUtility

# relative slack under which the budget cap and the interior optimum count as tied
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class MemberDecision:
    consumption_d: float
    payment: float
    surplus: float
    budget_bound: bool


def demand_at_price(u: QuadraticUtility, p: float) -> float:
    """Maximizer of U(d) - p*d over d >= 0."""
    if p < 0:
        raise DomainError(f"price must be >= 0, got {p}")
    return float(np.clip((u.a - p) / u.b, 0.0, u.a / u.b))


def chi(m: Member, theta_i: float, theta_0: float) -> MemberDecision:
    """Budget-constrained surplus-maximizing consumption.

    The member pays theta_i + theta_0*(d - g); with theta_0 > 0 the budget
    caps consumption at g + (x - theta_i)/theta_0.
    """
    u, g, x = m.utility, m.generation_g, m.budget_x
    if theta_0 < 0:
        raise DomainError(f"volumetric price must be >= 0, got {theta_0}")
    if theta_0 == 0:
        # zero marginal price: consume to satiation if the fixed charge is affordable
        if theta_i > x:
            raise InfeasibleBudget(f"member {m.id}: fixed charge {theta_i} exceeds budget {x}")
        d, bound = u.a / u.b, False
    else:
        free = demand_at_price(u, theta_0)
        cap = g + (x - theta_i) / theta_0
        if cap < 0:
            raise InfeasibleBudget(
                f"member {m.id}: budget {x} cannot cover fixed charge {theta_i} "
                f"at volumetric price {theta_0}"
            )
        bound = cap < free * (1 - _TIE_RTOL)
        d = cap if bound else free
    payment = theta_i + theta_0 * (d - g)
    surplus = u.a * d - 0.5 * u.b * d * d - payment
    return MemberDecision(float(d), float(payment), float(surplus), bool(bound))
