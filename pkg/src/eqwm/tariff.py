"""Net energy metering payment and the standalone-customer benchmark."""

from __future__ import annotations

import numpy as np

from .domain import CommunityArrays, Member, NemTariff


def nem_payment(t: NemTariff, z):
    """Payment for net consumption z: buy rate if z >= 0, sell rate otherwise.

    Accepts scalars or arrays.
    """
    z = np.asarray(z, dtype=float)
    out = np.where(z >= 0, t.pi_plus * z, t.pi_minus * z)
    return out if out.ndim else float(out)


def _demand(a, b, p):
    return np.clip((a - p) / b, 0.0, a / b)


def standalone_arrays(c: CommunityArrays, t: NemTariff) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized standalone optimum; returns (consumption, surplus)."""
    f_buy = _demand(c.a, c.b, t.pi_plus)
    f_sell = _demand(c.a, c.b, t.pi_minus)
    with np.errstate(invalid="ignore"):
        capped = np.minimum(f_buy, c.g + c.x / t.pi_plus)
    d = np.where(f_buy > c.g, capped, np.where(f_sell < c.g, f_sell, c.g))
    surplus = c.utility(d) - nem_payment(t, d - c.g)
    return d, surplus


def standalone_optimum(m: Member, t: NemTariff) -> tuple[float, float]:
    """Best consumption and surplus of a member billed directly under NEM.

    The problem is one-dimensional and concave with a single kink at d = g,
    so the solution is read off the three regimes: net consumer (capped by
    the budget at g + x/pi_plus), net producer, or exactly net-zero.
    """
    u = m.utility
    f_buy = float(_demand(u.a, u.b, t.pi_plus))
    f_sell = float(_demand(u.a, u.b, t.pi_minus))
    g, x = m.generation_g, m.budget_x
    if f_buy > g:
        d = min(f_buy, g + x / t.pi_plus)
    elif f_sell < g:
        d = f_sell
    else:
        d = g
    s = u.a * d - 0.5 * u.b * d * d - nem_payment(t, d - g)
    return d, float(s)
