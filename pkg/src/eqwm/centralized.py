"""Centralized equity-regarding welfare maximization.

The operator picks consumption and payments directly. The NEM cost is the
maximum of two lines (buy and sell rate), so the problem splits into three
smooth concave subproblems: net consumption billed at the buy rate, net
production credited at the sell rate, and an exactly balanced community.
Replacing the NEM cost by either line relaxes the problem, so a relaxed
optimum that lands on its own side of zero is globally optimal; otherwise
the balanced subproblem holds the optimum.
"""

from __future__ import annotations

import itertools
import math
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
    community_arrays,
)
from .tariff import nem_payment, standalone_arrays

class _Centralized:
    def __init__(self, c: CommunityArrays, tariff: NemTariff, floor: float):
        self.c, self.tariff, self.floor = c, tariff, floor
        _, self.s_out = standalone_arrays(c, tariff)
        self.kink = _core.budget_kink(c, self.s_out)
        self.sat = c.satiation()

    def _resp(self, theta, lam):
        return _core.response(self.c, self.kink, self.floor, self.sat, theta, lam)

    def _linear_piece(self, rate: float) -> np.ndarray | None:
        """Optimum with the NEM cost replaced by rate * z."""
        c, s_out = self.c, self.s_out

        def slack(lam):
            d = self._resp(rate, lam)
            return _core.collection_slack(c, d, s_out, NemTariff(rate, rate))

        try:
            lam = _core.expanding_multiplier(slack)
        except _core.Infeasible:
            return None
        return self._resp(rate, lam)

    def _balanced_piece(self) -> np.ndarray | None:
        """Optimum subject to zero community net position."""
        c, s_out = self.c, self.s_out
        G = c.total_generation
        p_top = float(np.max(c.a))

        def state(lam):
            p = _core.clearing_price(
                lambda q: np.sum(self._resp(q, lam)), G, 0.0, p_top, rtol=1e-13, iters=400
            )
            return self._resp(p, lam)

        if np.sum(self._resp(p_top, 0.0)) > G * (1 + 1e-12) or np.sum(self.sat) < G:
            return None
        try:
            lam = _core.expanding_multiplier(
                lambda m: _core.collection_slack(c, state(m), s_out, NemTariff(1.0, 0.0))
            )
        except _core.Infeasible:
            return None
        return state(lam)

    def feasible(self, d: np.ndarray) -> bool:
        return _core.collection_slack(self.c, d, self.s_out, self.tariff) >= 0

    def solve(self) -> np.ndarray:
        if self.floor > np.min(self.sat):
            raise _core.Infeasible("equity floor above a member's satiation")
        best, best_w = None, -math.inf
        for d in (
            self._linear_piece(self.tariff.pi_plus),
            self._linear_piece(self.tariff.pi_minus),
            self._balanced_piece(),
        ):
            if d is None or not self.feasible(d):
                continue
            w = _core.welfare(self.c, d, self.tariff)
            if w > best_w:
                best, best_w = d, w
        if best is None:
            raise _core.Infeasible("no consumption vector meets every constraint")
        return best


def _allocation(c: CommunityArrays, tariff: NemTariff, s_out, d) -> Allocation:
    z = float(np.sum(d - c.g))
    cost = nem_payment(tariff, z)
    u = c.utility(d)
    pay, _ = _core.maximin_payments(u, _core.caps(c, d, s_out), cost)
    return Allocation(d, pay, u - pay, z, cost)


def solve_eqwm(
    members: Sequence[Member],
    tariff: NemTariff,
    standard: EquityStandard,
    *,
    report_bound: bool = True,
) -> Allocation:
    """Welfare-optimal consumption and payments chosen by the operator.

    Payments are the maximin-surplus split of the NEM bill among members.
    ``report_bound=False`` skips the search for the largest feasible
    equity level when the standard cannot be met.
    """
    c = community_arrays(members)
    prob = _Centralized(c, tariff, standard.floor)
    try:
        d = prob.solve()
    except _core.Infeasible as exc:
        if not report_bound:
            raise InfeasibleEquityStandard(str(exc)) from None
        best = _max_feasible(c, tariff, standard)
        raise InfeasibleEquityStandard(
            f"equity standard omega={standard.omega:g} infeasible ({exc}); "
            f"max feasible omega={best:.6g}",
            best,
        ) from None
    return _allocation(c, tariff, prob.s_out, d)


def _max_feasible(c: CommunityArrays, tariff: NemTariff, standard: EquityStandard) -> float:
    def ok(fl):
        try:
            _Centralized(c, tariff, fl).solve()
        except _core.Infeasible:
            return False
        return True

    if not ok(0.0):
        return -math.inf
    lo, hi = 0.0, float(np.min(c.satiation()))
    if ok(hi):
        return float(standard.common_utility(hi))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return float(standard.common_utility(lo))


def brute_force_eqwm(
    members: Sequence[Member],
    tariff: NemTariff,
    standard: EquityStandard,
    grid_step: float = 1e-3,
    coarse_points: int = 41,
    keep: int = 6,
) -> Allocation | None:
    """Grid search over consumption vectors in [floor, satiation]^N.

    Exhaustive on a coarse grid, then exhaustive again on successively finer
    grids around the ``keep`` best points until the spacing reaches
    ``grid_step``. Payments at the best point come from a linear program.
    Returns None when no grid point is feasible. Meant for N <= 3.
    """
    from scipy.optimize import linprog

    c = community_arrays(members)
    if c.n > 3:
        raise ValueError("brute force is limited to three members")
    _, s_out = standalone_arrays(c, tariff)
    floor = standard.floor
    sat = c.satiation()
    if np.any(floor > sat):
        return None

    def evaluate(pts, step):
        u = c.a * pts - 0.5 * c.b * pts * pts
        z = np.sum(pts - c.g, axis=1)
        cost = np.where(z >= 0, tariff.pi_plus * z, tariff.pi_minus * z)
        slack = np.sum(np.minimum(c.x, u - s_out), axis=1) - cost
        w = np.sum(u, axis=1) - cost
        # a feasible set thinner than the grid spacing (a single point when
        # nobody gains from pooling) is missed by every grid point, so accept
        # the smallest shortfall, starting at one step of the NEM rate, that
        # leaves some point standing; past the slack's variation over half a
        # grid cell no feasible point can be nearby
        tol = tariff.pi_plus * float(np.min(step))
        tol_max = 0.5 * float(np.sum((c.a + tariff.pi_plus) * step))
        while not np.any(slack >= -tol):
            tol *= 2.0
            if tol > 2 * tol_max:
                return pts[:0]
        tol = min(tol, tol_max)
        if not np.any(slack >= -tol):
            return pts[:0]
        w = np.where(slack >= -tol, w, -np.inf)
        top = np.argsort(-w, kind="stable")[:keep]
        return pts[top[np.isfinite(w[top])]]

    def window(center, half, spacing):
        axes = []
        for i in range(c.n):
            left = max(lo[i], center[i] - half[i])
            right = min(sat[i], center[i] + half[i])
            n_pts = int(math.floor((right - left) / spacing[i] + 1e-9)) + 1
            axes.append(np.unique(np.append(left + spacing[i] * np.arange(n_pts), center[i])))
        return np.array(list(itertools.product(*axes)))

    lo = np.full(c.n, floor)
    step = (sat - lo) / (coarse_points - 1)
    axes = [np.linspace(l, h, coarse_points) for l, h in zip(lo, sat)]
    cands = evaluate(np.array(list(itertools.product(*axes))), step)
    if len(cands) == 0:
        return None
    half = 3 * step
    while True:
        # re-centre at this spacing until the incumbent stops moving
        for _ in range(200):
            moved = cands[0]
            cands = evaluate(np.vstack([window(p, half, step) for p in cands]), step)
            if len(cands) == 0:
                return None
            if np.all(np.abs(cands[0] - moved) <= 0.5 * step):
                break
        if np.max(step) <= grid_step:
            break
        # equal spacing on every axis so the search can follow diagonal ridges
        step = np.full(c.n, max(float(np.max(step)) / 4.0, grid_step))
        half = np.maximum(half, 3 * step)
        cands = evaluate(np.vstack([window(p, half, step) for p in cands]), step)
        half = 3 * step
        if len(cands) == 0:
            return None

    d = cands[0]
    u = c.utility(d)
    z = float(np.sum(d - c.g))
    cost = nem_payment(tariff, z)
    cap = np.minimum(c.x, u - s_out)
    # variables (p_1..p_N, t): maximize t s.t. t + p_i <= U_i, p_i <= cap_i, sum p = cost
    n = c.n
    obj = np.zeros(n + 1)
    obj[-1] = -1.0
    a_ub = np.hstack([np.eye(n), np.ones((n, 1))])
    a_eq = np.append(np.ones(n), 0.0)[None, :]
    bounds = [(None, float(cap[i])) for i in range(n)] + [(None, None)]
    res = linprog(obj, A_ub=a_ub, b_ub=u, A_eq=a_eq, b_eq=[cost], bounds=bounds, method="highs")
    pay = res.x[:n] if res.success else np.minimum(cap, u)
    return Allocation(d, pay, u - pay, z, cost)
