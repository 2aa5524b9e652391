"""Vectorized building blocks shared by the pricing and centralized solvers.

Both solvers work on the Lagrangian of

    max  sum U_i(d_i) - Pi(z)
    s.t. sum_i min(x_i, U_i(d_i) - s_out_i) >= Pi(z),   floor <= d_i <= hi_i

where the left side of the constraint is the most the community can collect
without breaking any member's budget or individual rationality. For a
marginal network price ``theta`` and multiplier ``lam`` on the collection
constraint, each member's Lagrangian is concave in d with a kink at the
consumption ``kink_i`` where its IR slack equals its budget, which gives the
closed-form ``response`` below.
"""

from __future__ import annotations

import math

import numpy as np

from .domain import CommunityArrays, NemTariff
from .tariff import nem_payment


class Infeasible(Exception):
    """Internal signal; public entry points translate it."""


def demand(a, b, p):
    """Unconstrained demand clamp((a - p)/b, 0, a/b); p may be an array."""
    return np.clip((a - p) / b, 0.0, a / b)


def budget_kink(c: CommunityArrays, s_out: np.ndarray) -> np.ndarray:
    """Smallest d with U(d) - s_out >= x, or inf when IR always binds first."""
    need = c.x + s_out
    with np.errstate(invalid="ignore"):
        disc = c.a**2 - 2 * c.b * need
        root = (c.a - np.sqrt(np.where(disc >= 0, disc, 0.0))) / c.b
    kink = np.where(disc >= 0, root, math.inf)
    kink = np.where(need <= 0, 0.0, kink)
    return np.where(np.isfinite(need), kink, math.inf)


def response(c: CommunityArrays, kink, lo, hi, theta: float, lam: float) -> np.ndarray:
    f_theta = demand(c.a, c.b, theta)
    f_red = demand(c.a, c.b, (1.0 + lam) * theta)
    d = np.where(kink >= f_theta, f_theta, np.maximum(kink, f_red))
    return np.minimum(np.maximum(d, lo), hi)


def caps(c: CommunityArrays, d: np.ndarray, s_out: np.ndarray) -> np.ndarray:
    """Largest payment each member can make: min(budget, IR headroom)."""
    return np.minimum(c.x, c.utility(d) - s_out)


# roundoff allowance on the collection constraint, relative to total utility
SLACK_RTOL = 1e-12


def collection_slack(c: CommunityArrays, d, s_out, tariff: NemTariff) -> float:
    """Collectable revenue minus the NEM bill, shifted by a roundoff allowance.

    When the feasible set shrinks to a point (e.g. a single member, whose
    only feasible consumption is its standalone optimum) the exact slack is
    zero and would otherwise flip sign on rounding.
    """
    z = float(np.sum(d - c.g))
    u = c.utility(d)
    allowance = SLACK_RTOL * max(1.0, float(np.sum(np.abs(u))) + float(np.sum(np.abs(s_out))))
    return float(np.sum(np.minimum(c.x, u - s_out))) - nem_payment(tariff, z) + allowance


def welfare(c: CommunityArrays, d, tariff: NemTariff) -> float:
    return float(np.sum(c.utility(d))) - nem_payment(tariff, float(np.sum(d - c.g)))


def smallest_feasible_multiplier(slack_of, lam_hi: float, iters: int = 200) -> float:
    """Smallest lam >= 0 with slack_of(lam) >= 0; slack must be nondecreasing.

    Raises Infeasible when slack_of(lam_hi) < 0.
    """
    if slack_of(0.0) >= 0:
        return 0.0
    if slack_of(lam_hi) < 0:
        raise Infeasible("collection constraint cannot be met")
    lo, hi = 0.0, lam_hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if slack_of(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def expanding_multiplier(slack_of, start: float = 1.0, limit: float = 1e12) -> float:
    """Smallest feasible lam when no finite bracket is known in advance."""
    if slack_of(0.0) >= 0:
        return 0.0
    hi = start
    while slack_of(hi) < 0:
        hi *= 4.0
        if hi > limit:
            raise Infeasible("collection constraint cannot be met")
    return smallest_feasible_multiplier(slack_of, hi)


def clearing_price(demand_of, G: float, p_lo: float, p_hi: float, rtol: float = 1e-8,
                   iters: int = 200) -> float:
    """Bisection for demand_of(p) = G on [p_lo, p_hi]; demand nonincreasing in p."""
    tol = rtol * max(1.0, G)
    lo, hi = p_lo, p_hi
    mid = 0.5 * (lo + hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        gap = demand_of(mid) - G
        if abs(gap) <= tol:
            break
        if gap > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    return mid


def maximin_payments(utility: np.ndarray, cap: np.ndarray, required: float) -> tuple[np.ndarray, float]:
    """Payments p_i <= cap_i summing to ``required`` that maximize min(U_i - p_i).

    Water-filling: p_i = min(cap_i, U_i - t) with the level t solved exactly
    on the sorted breakpoints. Returns (payments, t).
    """
    n = len(cap)
    if n == 0:
        if abs(required) > 1e-9:
            raise Infeasible("nobody left to fund the balance")
        return np.zeros(0), math.inf
    total_cap = float(np.sum(cap))
    if required > total_cap + 1e-10 * max(1.0, abs(total_cap), float(np.sum(np.abs(utility)))):
        raise Infeasible("payment caps cannot cover the required revenue")
    tau = utility - cap
    order = np.argsort(tau, kind="stable")
    tau_s, u_s, cap_s = tau[order], utility[order], cap[order]
    # members order[:k] pay U - t, the rest pay their cap
    u_prefix = np.cumsum(u_s)
    cap_suffix = total_cap - np.cumsum(cap_s)
    level = tau_s[0]
    for k in range(1, n + 1):
        t = (u_prefix[k - 1] + cap_suffix[k - 1] - required) / k
        upper = tau_s[k] if k < n else math.inf
        if t <= upper:
            level = max(t, tau_s[k - 1])
            break
    pay = np.minimum(cap, utility - level)
    # spread the rounding residue (and any within-tolerance shortfall) evenly,
    # so no single member absorbs it
    pay += (required - float(np.sum(pay))) / n
    return pay, float(level)
