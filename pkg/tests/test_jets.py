"""Order-2 jet arithmetic: products, deflating division, comparisons."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsefolio.jets import Jet, divide, jcmp, jet_sign

NAN = float("nan")
TOL = 1e-12


def test_real_embedding():
    j = Jet.real(3.5)
    assert j.coeffs() == (3.5, 0.0, 0.0)


def test_ring_operations():
    a = Jet(1.0, 2.0, 3.0)
    b = Jet(4.0, 5.0, 6.0)
    assert (a + b).coeffs() == (5.0, 7.0, 9.0)
    assert (a - b).coeffs() == (-3.0, -3.0, -3.0)
    assert (-a).coeffs() == (-1.0, -2.0, -3.0)
    # (1 + 2e + 3e^2)(4 + 5e + 6e^2) = 4 + 13e + 28e^2 + O(e^3)
    assert (a * b).coeffs() == (4.0, 13.0, 28.0)
    assert a.scaled(2.0).coeffs() == (2.0, 4.0, 6.0)


def test_exact_zero_annihilates_unknown():
    # 0 * unknown must stay 0, otherwise every product with a truncated
    # jet would poison all coefficients
    prod = Jet(0.0, 1.0, 0.0) * Jet(NAN, NAN, NAN)
    assert prod.c0 == 0.0
    assert math.isnan(prod.c1)
    prod2 = Jet(NAN, 2.0, NAN).scaled(0.0)
    assert prod2.coeffs() == (0.0, 0.0, 0.0)


def test_known_through():
    assert Jet(1.0, 2.0, 3.0).known_through() == 2
    assert Jet(1.0, 2.0, NAN).known_through() == 1
    assert Jet(1.0, NAN, 3.0).known_through() == 0
    assert Jet(NAN, 2.0, 3.0).known_through() == -1


def test_divide_plain():
    q = divide(Jet(1.0, 2.0, 3.0), Jet(2.0, 0.0, 0.0), TOL)
    assert q.coeffs() == (0.5, 1.0, 1.5)


def test_divide_deflates_common_zero():
    # (2e + 3e^2) / (e + e^2) = 2 + e + O(e^2); the top coefficient of the
    # quotient is unknowable after deflation
    q = divide(Jet(0.0, 2.0, 3.0), Jet(0.0, 1.0, 1.0), TOL)
    assert q.c0 == 2.0
    assert q.c1 == 1.0
    assert math.isnan(q.c2)


def test_divide_divergent_is_none():
    # 1 / e diverges as e -> 0
    assert divide(Jet(1.0, 0.0, 0.0), Jet(0.0, 1.0, 0.0), TOL) is None


def test_divide_zero_denominator_is_none():
    assert divide(Jet(1.0, 0.0, 0.0), Jet(0.0, 0.0, 0.0), TOL) is None
    # below-tolerance coefficients count as zero
    assert divide(Jet(1.0), Jet(1e-15, 1e-14, 0.0), TOL) is None


def test_divide_unknown_leading_denominator_is_none():
    assert divide(Jet(1.0, 0.0, 0.0), Jet(NAN, 1.0, 0.0), TOL) is None
    # numerator unknown above the denominator's leading order
    assert divide(Jet(NAN, 1.0, 0.0), Jet(0.0, 1.0, 0.0), TOL) is None


def test_divide_rounds_before_deflating():
    # a sub-tolerance numerator head is treated as exact zero
    q = divide(Jet(1e-15, 2.0, 0.0), Jet(0.0, 1.0, 0.0), TOL)
    assert q.c0 == 2.0


def test_jcmp_orders_lexicographically():
    assert jcmp(Jet(1.0, 0.0, 0.0), Jet(0.0, 5.0, 0.0), TOL) == 1
    assert jcmp(Jet(1.0, -1.0, 0.0), Jet(1.0, 0.0, 0.0), TOL) == -1
    assert jcmp(Jet(1.0, 2.0, 3.0), Jet(1.0, 2.0, 3.0), TOL) == 0
    # ties at every known order but an unknown below: undecidable
    assert jcmp(Jet(1.0, 2.0, NAN), Jet(1.0, 2.0, 0.0), TOL) is None


def test_jet_sign():
    assert jet_sign(Jet(0.0, 0.0, -2.0), TOL) == -1
    assert jet_sign(Jet(0.0, 3.0, -2.0), TOL) == 1
    assert jet_sign(Jet(0.0, 0.0, 0.0), TOL) == 0
    assert jet_sign(Jet(0.0, NAN, 1.0), TOL) is None


finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(n0=finite, n1=finite, n2=finite, d0=finite, d1=finite, d2=finite)
def test_divide_multiply_round_trip(n0, n1, n2, d0, d1, d2):
    """(num/den)*den reproduces num through order 2 when den has a unit head."""
    num = Jet(n0, n1, n2)
    den = Jet(d0, d1, d2)
    if abs(d0) < 1e-3:
        den = Jet(1.0, d1, d2)
    q = divide(num, den, 1e-300)
    assert q is not None
    back = q * den
    scale = max(1.0, *(abs(c) for c in num.coeffs()), *(abs(c) for c in den.coeffs()))
    assert np.allclose(back.coeffs(), num.coeffs(), rtol=0.0, atol=1e-6 * scale * scale)
