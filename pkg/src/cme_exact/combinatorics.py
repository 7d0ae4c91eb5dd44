"""Exact integer combinatorics: Stirling numbers, falling factorials, transforms."""

from __future__ import annotations

import threading
from fractions import Fraction
from math import comb, factorial
from typing import Sequence

__all__ = [
    "stirling1",
    "stirling2",
    "stirling2_explicit",
    "falling_factorial",
    "rising_factorial",
    "binomial",
    "stirling_transform",
    "inverse_stirling_transform",
]

_lock = threading.Lock()
_S1: list[list[int]] = [[1]]
_S2: list[list[int]] = [[1]]


def _grow(table: list[list[int]], upto: int, first_kind: bool) -> None:
    with _lock:
        while len(table) <= upto:
            k = len(table)
            prev = table[-1]
            row = [0] * (k + 1)
            for ell in range(1, k + 1):
                left = prev[ell - 1] if ell - 1 < len(prev) else 0
                same = prev[ell] if ell < len(prev) else 0
                if first_kind:
                    # s(k, l) = s(k-1, l-1) - (k-1) s(k-1, l)
                    row[ell] = left - (k - 1) * same
                else:
                    # S(k, l) = S(k-1, l-1) + l S(k-1, l)
                    row[ell] = left + ell * same
            table.append(row)


def stirling1(k: int, l: int) -> int:
    """Signed Stirling number of the first kind s1(k, l)."""
    if k < 0 or l < 0:
        raise ValueError("Stirling numbers need nonnegative arguments")
    if l > k:
        return 0
    if k >= len(_S1):
        _grow(_S1, k, first_kind=True)
    return _S1[k][l]


def stirling2(l: int, k: int) -> int:
    """Stirling number of the second kind S2(l, k): partitions of l items into k blocks."""
    if k < 0 or l < 0:
        raise ValueError("Stirling numbers need nonnegative arguments")
    if k > l:
        return 0
    if l >= len(_S2):
        _grow(_S2, l, first_kind=False)
    return _S2[l][k]


def stirling2_explicit(l: int, k: int) -> int:
    """S2(l, k) from the alternating sum (1/k!) sum_j (-1)^(k-j) C(k,j) j^l."""
    total = sum((-1) ** (k - j) * comb(k, j) * j**l for j in range(k + 1))
    q, r = divmod(total, factorial(k))
    assert r == 0
    return q


def falling_factorial(n: int, i: int) -> int:
    """(n)_i = n (n-1) ... (n-i+1); zero when n < i."""
    if i < 0:
        raise ValueError("order must be nonnegative")
    if n < i:
        return 0
    out = 1
    for j in range(i):
        out *= n - j
    return out


def rising_factorial(x, m: int):
    """Pochhammer symbol x (x+1) ... (x+m-1), for any ring element x."""
    out = 1 if not isinstance(x, Fraction) else Fraction(1)
    for j in range(m):
        out = out * (x + j)
    return out


def binomial(n, k: int):
    """Generalized binomial coefficient C(n, k) for integer k >= 0 and any n.

    Integer n uses the usual convention C(n, k) = 0 for 0 <= n < k.
    """
    if k < 0:
        return 0
    if isinstance(n, int):
        if n >= 0:
            return comb(n, k)
        return (-1) ** k * comb(k - n - 1, k)
    return Fraction(falling_factorial_general(n, k), factorial(k))


def falling_factorial_general(x, m: int):
    out = Fraction(1)
    for j in range(m):
        out *= x - j
    return out


def stirling_transform(a: Sequence) -> list[Fraction]:
    """b_n = sum_k S2(n, k) a_k."""
    a = [Fraction(v) for v in a]
    return [sum((stirling2(n, k) * a[k] for k in range(n + 1)), Fraction(0)) for n in range(len(a))]


def inverse_stirling_transform(b: Sequence) -> list[Fraction]:
    """a_k = sum_n s1(k, n) b_n; inverts :func:`stirling_transform`."""
    b = [Fraction(v) for v in b]
    return [sum((stirling1(k, n) * b[n] for n in range(k + 1)), Fraction(0)) for k in range(len(b))]
