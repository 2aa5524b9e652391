"""Equity-regarding welfare maximization for energy communities."""

from .centralized import brute_force_eqwm, solve_eqwm
from .domain import (
    NO_EQUITY,
    Allocation,
    CommonUtility,
    DomainError,
    EquityStandard,
    InfeasibleBudget,
    InfeasibleEquityStandard,
    Member,
    NemTariff,
    PricingParams,
    QuadraticUtility,
    make_members,
)
from .equity import gini, lorenz, lorenz_dominates, pareto_sweep, rawlsian_swf
from .member import chi
from .pricing import psi, solve_fixed_charges, volumetric_price
from .scenario import ScenarioConfig, monte_carlo, run_policy
from .tariff import nem_payment, standalone_optimum

__version__ = "0.1.0"
