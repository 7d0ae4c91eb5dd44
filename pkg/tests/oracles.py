"""Independent reference computations shared by the test modules."""

from fractions import Fraction


def exact_solve(basis, target):
    """Coefficients c with ``target = sum c_n basis[n]`` by Gauss-Jordan over the rationals.

    ``basis[n][i]`` is the coefficient of ``x^i`` in the n-th polynomial.
    """
    n = len(basis)
    rows = [[Fraction(basis[j][i]) for j in range(n)] + [Fraction(target[i])] for i in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if rows[r][col] != 0)
        rows[col], rows[piv] = rows[piv], rows[col]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                f = rows[r][col] / rows[col][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    return [rows[i][n] / rows[i][i] for i in range(n)]
