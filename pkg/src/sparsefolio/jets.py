"""Truncated formal-perturbation scalars (order-2 jets).

A Jet represents x = c0 + eps*c1 + eps^2*c2 for an infinitesimal eps > 0,
truncated after the second order. Comparisons are lexicographic, which makes
the jets an ordered field as far as the truncation can see. They drive the
constraint-attainment phase of the constrained path solver, where step sizes
and boundary gaps are genuinely infinitesimal-valued.

Unknown coefficients are carried as NaN: an operation that cannot determine
an order yields NaN there, and comparisons that would be decided by an
unknown order report "undecidable" (None) instead of guessing. One deliberate
exception to NaN propagation: an exact 0.0 coefficient annihilates an unknown
factor (0 * unknown = 0). Callers round certified-zero coefficients to exact
0.0 (see `rounded`) precisely so that structural cancellations survive
contact with unknown orders.

Division deflates: when the denominator's leading nonzero coefficient sits at
order k > 0, the quotient is the series shifted down by k, and its top k
orders are unknowable within the truncation (NaN).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["Jet", "divide", "jcmp", "jet_sign", "jet_abs"]

_NAN = float("nan")


def _p(x: float, y: float) -> float:
    # NaN-aware coefficient product: exact zero annihilates unknowns.
    if x == 0.0 or y == 0.0:
        return 0.0
    return x * y


@dataclass(frozen=True)
class Jet:
    """x = c0 + eps*c1 + eps^2*c2, NaN marking an unknown coefficient."""

    c0: float
    c1: float = 0.0
    c2: float = 0.0

    @staticmethod
    def real(x: float) -> "Jet":
        return Jet(float(x), 0.0, 0.0)

    def coeffs(self) -> tuple[float, float, float]:
        return (self.c0, self.c1, self.c2)

    def __add__(self, other: "Jet") -> "Jet":
        return Jet(self.c0 + other.c0, self.c1 + other.c1, self.c2 + other.c2)

    def __sub__(self, other: "Jet") -> "Jet":
        return Jet(self.c0 - other.c0, self.c1 - other.c1, self.c2 - other.c2)

    def __neg__(self) -> "Jet":
        return Jet(-self.c0, -self.c1, -self.c2)

    def __mul__(self, other: "Jet") -> "Jet":
        a0, a1, a2 = self.coeffs()
        b0, b1, b2 = other.coeffs()
        return Jet(
            _p(a0, b0),
            _p(a0, b1) + _p(a1, b0),
            _p(a0, b2) + _p(a1, b1) + _p(a2, b0),
        )

    def scaled(self, s: float) -> "Jet":
        return Jet(_p(s, self.c0), _p(s, self.c1), _p(s, self.c2))

    def rounded(self, tol: float) -> "Jet":
        """Snap coefficients with |c| <= tol to exact 0.0 (NaN untouched)."""
        def snap(c: float) -> float:
            if not math.isnan(c) and abs(c) <= tol:
                return 0.0
            return c
        return Jet(snap(self.c0), snap(self.c1), snap(self.c2))

    def known_through(self) -> int:
        """Highest order k such that c0..ck are all known (-1 if c0 is NaN)."""
        if math.isnan(self.c0):
            return -1
        if math.isnan(self.c1):
            return 0
        if math.isnan(self.c2):
            return 1
        return 2


def divide(num: Jet, den: Jet, tol: float) -> Jet | None:
    """Deflating division num/den.

    Returns None when the quotient is not a representable finite jet: the
    denominator vanishes through its known orders, the denominator's leading
    order is hidden behind an unknown coefficient, the numerator's leading
    order cannot be certified down to the denominator's (an unknown sits
    above it), or the numerator's leading order is strictly higher --- that
    quotient diverges as eps -> 0 and is never a finite event.
    """
    n = num.rounded(tol).coeffs()
    d = den.rounded(tol).coeffs()
    k = None
    for i, c in enumerate(d):
        if math.isnan(c):
            return None  # leading order of the denominator is unknown
        if c != 0.0:
            k = i
            break
    if k is None:
        return None  # denominator is zero through the truncation
    for i in range(k):
        if math.isnan(n[i]) or n[i] != 0.0:
            return None  # quotient diverges, or cannot be certified finite
    # synthetic division of the shifted series, NaN-aware
    ns = n[k:]
    ds = d[k:]
    q: list[float] = []
    for i in range(3 - k):
        acc = ns[i]
        for j in range(i):
            acc -= _p(q[j], ds[i - j])
        q.append(acc / ds[0] if not math.isnan(acc) else _NAN)
    while len(q) < 3:
        q.append(_NAN)
    return Jet(q[0], q[1], q[2])


def jcmp(a: Jet, b: Jet, tol: float) -> int | None:
    """Lexicographic comparison with tolerance.

    Returns -1, 0, or 1; None when the order that would decide is unknown.
    0 means indistinguishable through the truncation at tolerance tol.
    """
    for ca, cb in zip(a.coeffs(), b.coeffs()):
        if math.isnan(ca) or math.isnan(cb):
            return None
        diff = ca - cb
        if diff > tol:
            return 1
        if diff < -tol:
            return -1
    return 0


def jet_sign(a: Jet, tol: float) -> int | None:
    """Sign of the leading coefficient: -1, 0 (zero through truncation), +1.

    None when an unknown coefficient hides the leading order.
    """
    for c in a.coeffs():
        if math.isnan(c):
            return None
        if c > tol:
            return 1
        if c < -tol:
            return -1
    return 0


def jet_abs(a: Jet, tol: float) -> Jet | None:
    """|a| in the lexicographic order; None if the sign is undecidable."""
    s = jet_sign(a, tol)
    if s is None:
        return None
    return -a if s < 0 else a
