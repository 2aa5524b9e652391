"""Core value types for the energy-community pricing model.

Units: energy in kWh, money in $ (any currency), prices in $/kWh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class InfeasibleBudget(ValueError):
    """No nonnegative consumption keeps the member's payment within budget."""


class InfeasibleEquityStandard(RuntimeError):
    """The requested equity level cannot be met by any admissible pricing.

    ``max_feasible_omega`` is the largest equity level that can be met
    (``-inf`` when even the unconstrained problem has no solution).
    """

    def __init__(self, message: str, max_feasible_omega: float = float("nan")):
        super().__init__(message)
        self.max_feasible_omega = max_feasible_omega


@dataclass(frozen=True)
class QuadraticUtility:
    """U(d) = a*d - b/2*d**2, increasing on [0, a/b]."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError(f"utility needs a > 0 and b > 0, got a={self.a}, b={self.b}")

    def __call__(self, d: float) -> float:
        return utility_value(self, d)


@dataclass(frozen=True)
class Member:
    id: int
    utility: QuadraticUtility
    generation_g: float = 0.0
    budget_x: float = math.inf

    def __post_init__(self):
        if self.generation_g < 0 or self.budget_x < 0:
            raise DomainError(f"member {self.id}: generation and budget must be >= 0")


@dataclass(frozen=True)
class NemTariff:
    pi_plus: float
    pi_minus: float

    def __post_init__(self):
        if not (0 <= self.pi_minus <= self.pi_plus) or self.pi_plus <= 0:
            raise DomainError(
                f"tariff needs 0 <= pi_minus <= pi_plus and pi_plus > 0, "
                f"got ({self.pi_plus}, {self.pi_minus})"
            )


@dataclass(frozen=True)
class PricingParams:
    theta_0: float
    theta_fixed: tuple[float, ...]


@dataclass(frozen=True)
class Allocation:
    consumption_d: np.ndarray
    payment_p: np.ndarray
    surplus_s: np.ndarray
    community_net_z: float
    operator_cost: float

    @property
    def welfare(self) -> float:
        return float(np.sum(self.surplus_s))

    @property
    def n(self) -> int:
        return len(self.consumption_d)


# Common utility used only to measure equity.

@dataclass(frozen=True)
class CommonUtility:
    """Strictly increasing concave function used for the Rawlsian measure.

    kind is one of ``identity``, ``log1p`` or ``quadratic`` (the latter uses
    a, b and is restricted to [0, a/b]).
    """

    kind: str = "identity"
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "log1p", "quadratic"):
            raise DomainError(f"unknown common utility {self.kind!r}")
        if self.kind == "quadratic" and not (self.a > 0 and self.b > 0):
            raise DomainError("quadratic common utility needs a > 0, b > 0")

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        if self.kind == "identity":
            out = d
        elif self.kind == "log1p":
            out = np.log1p(d)
        else:
            dd = np.minimum(d, self.a / self.b)
            out = self.a * dd - 0.5 * self.b * dd**2
        return out if out.ndim else float(out)

    def inverse(self, level: float) -> float:
        """Smallest consumption reaching ``level``; inf if unreachable."""
        if level == -math.inf:
            return 0.0
        if self.kind == "identity":
            return level
        if self.kind == "log1p":
            return math.expm1(level)
        top = self.a**2 / (2 * self.b)
        if level > top:
            return math.inf
        return (self.a - math.sqrt(self.a**2 - 2 * self.b * level)) / self.b


@dataclass(frozen=True)
class EquityStandard:
    omega: float = -math.inf
    common_utility: CommonUtility = field(default_factory=CommonUtility)

    @property
    def floor(self) -> float:
        """Consumption floor equivalent to the Rawlsian constraint."""
        return max(0.0, self.common_utility.inverse(self.omega))


NO_EQUITY = EquityStandard()


def utility_value(u: QuadraticUtility, d: float) -> float:
    if d < 0:
        raise DomainError(f"consumption must be >= 0, got {d}")
    return u.a * d - 0.5 * u.b * d * d


def satiation(u: QuadraticUtility) -> float:
    return u.a / u.b


@dataclass(frozen=True)
class CommunityArrays:
    """Column view of a member list, for vectorized solvers."""

    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    x: np.ndarray

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def total_generation(self) -> float:
        return float(np.sum(self.g))

    def utility(self, d: np.ndarray) -> np.ndarray:
        return self.a * d - 0.5 * self.b * d * d

    def satiation(self) -> np.ndarray:
        return self.a / self.b


def community_arrays(members: Sequence[Member]) -> CommunityArrays:
    if len(members) == 0:
        raise DomainError("community must have at least one member")
    return CommunityArrays(
        a=np.array([m.utility.a for m in members], dtype=float),
        b=np.array([m.utility.b for m in members], dtype=float),
        g=np.array([m.generation_g for m in members], dtype=float),
        x=np.array([m.budget_x for m in members], dtype=float),
    )


def make_members(a, b, g, x) -> list[Member]:
    """Build a member list from parallel sequences (ids start at 1)."""
    return [
        Member(i + 1, QuadraticUtility(float(ai), float(bi)), float(gi), float(xi))
        for i, (ai, bi, gi, xi) in enumerate(zip(a, b, g, x))
    ]
