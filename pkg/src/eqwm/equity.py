"""Equity metrics: Rawlsian welfare, Lorenz curves, Gini and the welfare-equity front."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import (
    CommonUtility,
    DomainError,
    EquityStandard,
    InfeasibleEquityStandard,
    Member,
    NemTariff,
)

DOMINATES = "dominates"
DOMINATED_OR_EQUAL = "dominated_or_equal"
INCOMPARABLE = "incomparable"

LORENZ_TOL = 1e-10


def _consumption(d) -> np.ndarray:
    d = np.asarray(d, dtype=float).ravel()
    if d.size == 0:
        raise DomainError("consumption vector is empty")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise DomainError("consumption entries must be finite and >= 0")
    return d


def rawlsian_swf(d, common_utility: CommonUtility = CommonUtility()) -> float:
    """Welfare of the worst-off member, min_i U~(d_i)."""
    return float(np.min(common_utility(_consumption(d))))


@dataclass(frozen=True)
class LorenzCurve:
    """Cumulative consumption share against population share, ascending sort."""

    pop_share: np.ndarray
    share: np.ndarray

    def __post_init__(self):
        p, s = self.pop_share, self.share
        if len(p) != len(s) or len(p) < 2:
            raise DomainError("Lorenz curve needs matching arrays with at least two points")
        if p[0] != 0 or s[0] != 0 or p[-1] != 1 or abs(s[-1] - 1) > LORENZ_TOL:
            raise DomainError("Lorenz curve must run from (0,0) to (1,1)")
        if np.any(np.diff(p) <= 0) or np.any(np.diff(s) < -LORENZ_TOL):
            raise DomainError("Lorenz curve must be increasing in population share")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.pop_share.tolist(), self.share.tolist()))

    def at(self, q) -> np.ndarray:
        """Linear interpolation at population shares q."""
        return np.interp(q, self.pop_share, self.share)


def lorenz(d) -> LorenzCurve:
    d = _consumption(d)
    total = float(np.sum(d))
    if total <= 0:
        raise DomainError("Lorenz curve undefined for an all-zero vector")
    n = d.size
    cum = np.concatenate([[0.0], np.cumsum(np.sort(d))]) / total
    cum[-1] = 1.0
    return LorenzCurve(np.arange(n + 1) / n, cum)


def lorenz_dominates(a: LorenzCurve, b: LorenzCurve, tol: float = LORENZ_TOL) -> str:
    """Pigou-Dalton verdict of ``a`` against ``b``.

    ``dominates`` when ``a`` is nowhere below ``b`` (equal curves included),
    ``dominated_or_equal`` when ``a`` is nowhere above ``b``, otherwise
    ``incomparable``. Both curves are compared on the union of their grids.
    """
    grid = np.union1d(a.pop_share, b.pop_share)
    gap = a.at(grid) - b.at(grid)
    if np.all(gap >= -tol):
        return DOMINATES
    if np.all(gap <= tol):
        return DOMINATED_OR_EQUAL
    return INCOMPARABLE


def gini(d) -> float:
    """1 - 2 * (area under the Lorenz curve), trapezoid rule on the exact curve."""
    curve = lorenz(d)
    area = float(np.sum(np.diff(curve.pop_share) * (curve.share[1:] + curve.share[:-1]) / 2))
    return min(1.0, max(0.0, 1.0 - 2.0 * area))


@dataclass(frozen=True)
class ParetoPoint:
    omega: float
    welfare: float
    feasible: bool
    allocation_digest: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FrontCheck:
    """Diagnostics of a sweep: indices where a front property fails."""

    welfare_increases: tuple[int, ...]
    convex_kinks: tuple[int, ...]
    swf_below_omega: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not (self.welfare_increases or self.convex_kinks or self.swf_below_omega)


def _digest(d: np.ndarray, standard: EquityStandard) -> dict:
    return {
        "mean": float(np.mean(d)),
        "min": float(np.min(d)),
        "max": float(np.max(d)),
        "gini": gini(d) if np.sum(d) > 0 else 0.0,
        "rawlsian": rawlsian_swf(d, standard.common_utility),
    }


def pareto_sweep(
    members: Sequence[Member],
    tariff: NemTariff,
    omega_grid: Sequence[float],
    common_utility: CommonUtility = CommonUtility(),
) -> list[ParetoPoint]:
    """Optimal welfare at each equity level; infeasible levels are flagged."""
    from .pricing import psi

    grid = [float(w) for w in omega_grid]
    if any(w2 < w1 for w1, w2 in zip(grid, grid[1:])):
        raise DomainError("omega grid must be sorted ascending")
    out = []
    for w in grid:
        standard = EquityStandard(w, common_utility)
        try:
            _, alloc = psi(members, tariff, standard, report_bound=False)
        except InfeasibleEquityStandard:
            out.append(ParetoPoint(w, math.nan, False))
            continue
        out.append(ParetoPoint(w, alloc.welfare, True, _digest(alloc.consumption_d, standard)))
    return out


def check_front(points: Sequence[ParetoPoint], rtol: float = 1e-6, swf_tol: float = 1e-8) -> FrontCheck:
    """Monotonicity, concavity and equity attainment over the feasible points.

    Concavity uses divided differences so unevenly spaced grids are fine.
    """
    feas = [p for p in points if p.feasible]
    idx = [i for i, p in enumerate(points) if p.feasible]
    scale = max([1.0] + [abs(p.welfare) for p in feas])
    tol = rtol * scale
    inc = tuple(idx[k + 1] for k in range(len(feas) - 1) if feas[k + 1].welfare > feas[k].welfare + tol)
    kinks = []
    for k in range(1, len(feas) - 1):
        w0, w1, w2 = (feas[k + j].omega for j in (-1, 0, 1))
        if not (w0 < w1 < w2) or math.isinf(w0):
            continue
        s_left = (feas[k].welfare - feas[k - 1].welfare) / (w1 - w0)
        s_right = (feas[k + 1].welfare - feas[k].welfare) / (w2 - w1)
        if (s_right - s_left) * 0.5 * (w2 - w0) > tol:
            kinks.append(idx[k])
    low = tuple(
        i
        for i, p in zip(idx, feas)
        if p.omega > -math.inf and p.allocation_digest.get("rawlsian", math.inf) < p.omega - swf_tol
    )
    return FrontCheck(inc, tuple(kinks), low)
