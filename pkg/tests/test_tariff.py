import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqwm.domain import Member, NemTariff, QuadraticUtility
from eqwm.tariff import nem_payment, standalone_optimum
from conftest import grid_argmax

T = NemTariff(0.4, 0.2)


def standalone_grid(a, b, g, x, t=T, step=1e-4):
    """Brute force over d in [0, a/b]: best surplus among budget-feasible points."""

    def value(d):
        z = d - g
        pay = np.where(z >= 0, t.pi_plus * z, t.pi_minus * z)
        return np.where(pay <= x + 1e-12, a * d - 0.5 * b * d * d - pay, -np.inf)

    return grid_argmax(value, 0.0, a / b, step)


@pytest.mark.parametrize("z,expected", [(5, 2.0), (-3, -0.6), (0, 0.0)])
def test_nem_payment_examples(z, expected):
    assert nem_payment(T, z) == pytest.approx(expected)


def test_nem_payment_vectorized():
    assert np.allclose(nem_payment(T, np.array([5.0, -3.0, 0.0])), [2.0, -0.6, 0.0])


@pytest.mark.parametrize(
    "g,x,d_exp,s_exp",
    [(17, 100, 17, 19.55), (0, 100, 16, 12.8), (0, 2, 5, 6.75)],
)
def test_standalone_examples(g, x, d_exp, s_exp):
    d, s = standalone_optimum(Member(1, QuadraticUtility(2, 0.1), g, x), T)
    assert d == pytest.approx(d_exp, abs=1e-12)
    assert s == pytest.approx(s_exp, abs=1e-12)
    dg, sg = standalone_grid(2, 0.1, g, x)
    assert abs(d - dg) <= 1e-4 and s >= sg - 1e-12 and s - sg <= 1e-6


def test_standalone_matches_grid_on_random_members():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a, b = rng.uniform(0.5, 3), rng.uniform(0.1, 1)
        g = rng.uniform(0, 10) * (rng.random() < 0.6)
        x = rng.lognormal(0, 1)
        d, s = standalone_optimum(Member(1, QuadraticUtility(a, b), g, x), T)
        dg, sg = standalone_grid(a, b, g, x)
        assert abs(d - dg) <= 1e-4 + 1e-9
        # the optimum is never beaten by a feasible grid point
        assert s >= sg - 1e-9


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 1))
def test_nem_payment_convex_nondecreasing(z1, z2, lam):
    lo, hi = min(z1, z2), max(z1, z2)
    assert nem_payment(T, lo) <= nem_payment(T, hi)
    mid = lam * z1 + (1 - lam) * z2
    assert nem_payment(T, mid) <= lam * nem_payment(T, z1) + (1 - lam) * nem_payment(T, z2) + 1e-12


@settings(max_examples=200)
@given(
    st.floats(0.5, 3), st.floats(0.1, 1), st.floats(0, 10), st.floats(0, 10),
    st.floats(0, 5), st.floats(0, 5),
)
def test_standalone_monotone_in_generation_and_budget(a, b, g1, g2, x1, x2):
    u = QuadraticUtility(a, b)
    ga, gb = sorted((g1, g2))
    xa, xb = sorted((x1, x2))
    s_low = standalone_optimum(Member(1, u, ga, xa), T)[1]
    assert standalone_optimum(Member(1, u, gb, xa), T)[1] >= s_low - 1e-12
    assert standalone_optimum(Member(1, u, ga, xb), T)[1] >= s_low - 1e-12
