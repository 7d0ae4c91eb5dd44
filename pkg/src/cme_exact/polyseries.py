"""Truncated power series and exact rational polynomials.

:class:`TruncatedSeries` carries probability generating functions in one to
three formal variables, truncated at a total degree ``max_deg``.  Coefficients
are either ``float64`` or exact :class:`fractions.Fraction` (numpy object
arrays); the mode is fixed per series and mixing modes is an error.

:class:`RationalPolynomial` is a plain dense univariate polynomial over the
rationals, used for the Sobolev-Jacobi basis and for polynomial initial PGFs.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "MAX_VARS",
    "DEFAULT_MAX_DEG",
    "SeriesError",
    "TruncatedSeries",
    "RationalPolynomial",
    "mul",
    "compose",
    "pow_real",
    "exp_poly",
    "exp_series",
    "log_series",
    "reciprocal",
    "eval_at_one",
    "coefficient",
    "derivative",
]

MAX_VARS = 3
DEFAULT_MAX_DEG = 220

Number = Union[int, float, Fraction]


class SeriesError(ValueError):
    """Mode/shape mismatch or an operation undefined for the given series."""


def _degree_grid(nvars: int, max_deg: int) -> np.ndarray:
    grids = np.indices((max_deg + 1,) * nvars)
    return grids.sum(axis=0)


class TruncatedSeries:
    """Dense power series in ``nvars`` variables, truncated at total degree ``max_deg``.

    Stored as an ndarray of shape ``(max_deg + 1,) * nvars``; entries whose
    total degree exceeds ``max_deg`` are kept at zero.
    """

    __slots__ = ("coeffs", "max_deg", "_deg")

    def __init__(self, coeffs: np.ndarray, max_deg: int | None = None):
        coeffs = np.asarray(coeffs)
        if coeffs.ndim < 1 or coeffs.ndim > MAX_VARS:
            raise SeriesError(f"1 to {MAX_VARS} variables supported, got {coeffs.ndim}")
        if max_deg is None:
            max_deg = coeffs.shape[0] - 1
        if max_deg < 0:
            raise SeriesError("max_deg must be nonnegative")
        shape = (max_deg + 1,) * coeffs.ndim
        if coeffs.dtype != object:
            coeffs = coeffs.astype(np.float64, copy=False)
        if coeffs.shape != shape:
            out = np.zeros(shape, dtype=coeffs.dtype)
            if coeffs.dtype == object:
                out[...] = Fraction(0)
            sl = tuple(slice(0, min(a, b)) for a, b in zip(coeffs.shape, shape))
            out[sl] = coeffs[sl]
            coeffs = out
        self._deg = _degree_grid(coeffs.ndim, max_deg) if coeffs.ndim > 1 else None
        if self._deg is not None:
            coeffs = coeffs.copy()
            coeffs[self._deg > max_deg] = Fraction(0) if coeffs.dtype == object else 0.0
        self.coeffs = coeffs
        self.max_deg = max_deg

    # -- construction -------------------------------------------------
    @classmethod
    def zeros(cls, nvars: int = 1, max_deg: int = DEFAULT_MAX_DEG, exact: bool = False) -> "TruncatedSeries":
        shape = (max_deg + 1,) * nvars
        if exact:
            arr = np.empty(shape, dtype=object)
            arr[...] = Fraction(0)
        else:
            arr = np.zeros(shape)
        return cls(arr, max_deg)

    @classmethod
    def constant(cls, c: Number, nvars: int = 1, max_deg: int = DEFAULT_MAX_DEG,
                 exact: bool = False) -> "TruncatedSeries":
        s = cls.zeros(nvars, max_deg, exact)
        s.coeffs[(0,) * nvars] = Fraction(c) if exact else float(c)
        return s

    @classmethod
    def variable(cls, i: int = 0, nvars: int = 1, max_deg: int = DEFAULT_MAX_DEG,
                 exact: bool = False) -> "TruncatedSeries":
        s = cls.zeros(nvars, max_deg, exact)
        if max_deg >= 1:
            idx = [0] * nvars
            idx[i] = 1
            s.coeffs[tuple(idx)] = Fraction(1) if exact else 1.0
        return s

    @classmethod
    def from_terms(cls, terms: Mapping, nvars: int = 1, max_deg: int = DEFAULT_MAX_DEG,
                   exact: bool = False) -> "TruncatedSeries":
        """Build from ``{multi_index: coefficient}``; ints are accepted for 1 variable.

        Terms above ``max_deg`` are dropped.
        """
        s = cls.zeros(nvars, max_deg, exact)
        for idx, c in terms.items():
            idx = (idx,) if isinstance(idx, int) else tuple(idx)
            if len(idx) != nvars:
                raise SeriesError(f"index {idx} does not match {nvars} variables")
            if sum(idx) <= max_deg:
                s.coeffs[idx] += Fraction(c) if exact else float(c)
        return s

    @classmethod
    def from_polynomial(cls, poly: "RationalPolynomial", max_deg: int = DEFAULT_MAX_DEG,
                        exact: bool = False) -> "TruncatedSeries":
        return cls.from_terms(dict(enumerate(poly.coeffs)), 1, max_deg, exact)

    def _like(self, coeffs: np.ndarray) -> "TruncatedSeries":
        out = object.__new__(TruncatedSeries)
        out.coeffs = coeffs
        out.max_deg = self.max_deg
        out._deg = self._deg
        return out

    # -- properties ---------------------------------------------------
    @property
    def nvars(self) -> int:
        return self.coeffs.ndim

    @property
    def exact(self) -> bool:
        return self.coeffs.dtype == object

    @property
    def mode(self) -> str:
        return "exact-rational" if self.exact else "float64"

    @property
    def const(self) -> Number:
        return self.coeffs[(0,) * self.nvars]

    def degree_grid(self) -> np.ndarray:
        if self._deg is None:
            return np.arange(self.max_deg + 1)
        return self._deg

    def to_float(self) -> "TruncatedSeries":
        if not self.exact:
            return self
        return self._like(self.coeffs.astype(np.float64))

    def to_exact(self) -> "TruncatedSeries":
        if self.exact:
            return self
        arr = np.empty(self.coeffs.shape, dtype=object)
        for idx, v in np.ndenumerate(self.coeffs):
            arr[idx] = Fraction(float(v))
        return self._like(arr)

    def truncate(self, max_deg: int) -> "TruncatedSeries":
        """Drop terms above ``max_deg`` (or zero-extend when ``max_deg`` is larger)."""
        return TruncatedSeries(self.coeffs, max_deg)

    def _check(self, other: "TruncatedSeries") -> None:
        if not isinstance(other, TruncatedSeries):
            raise SeriesError(f"expected TruncatedSeries, got {type(other).__name__}")
        if other.nvars != self.nvars or other.max_deg != self.max_deg:
            raise SeriesError(
                f"shape mismatch: ({self.nvars} vars, deg {self.max_deg}) vs "
                f"({other.nvars} vars, deg {other.max_deg})")
        if other.exact != self.exact:
            raise SeriesError(f"mode mismatch: {self.mode} vs {other.mode}")

    def _scalar(self, c: Number):
        if self.exact:
            if isinstance(c, float):
                raise SeriesError("float scalar in exact-rational mode")
            return Fraction(c)
        return float(c)

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        if isinstance(other, TruncatedSeries):
            self._check(other)
            return self._like(self.coeffs + other.coeffs)
        out = self.coeffs.copy()
        out[(0,) * self.nvars] += self._scalar(other)
        return self._like(out)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries):
            return mul(self, other)
        return self._like(self.coeffs * self._scalar(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, TruncatedSeries):
            return mul(self, reciprocal(other))
        c = self._scalar(other)
        return self._like(self.coeffs / c)

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise SeriesError("integer power must be a nonnegative int; use pow_real")
        result = TruncatedSeries.constant(1, self.nvars, self.max_deg, self.exact)
        base = self
        while k:
            if k & 1:
                result = mul(result, base)
            k >>= 1
            if k:
                base = mul(base, base)
        return result

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return (self.nvars == other.nvars and self.max_deg == other.max_deg
                and self.exact == other.exact and bool(np.all(self.coeffs == other.coeffs)))

    __hash__ = None

    def __repr__(self) -> str:
        nz = [(idx, v) for idx, v in np.ndenumerate(self.coeffs) if v != 0][:6]
        body = " + ".join(f"{v}*x^{idx if self.nvars > 1 else idx[0]}" for idx, v in nz)
        return f"TruncatedSeries({body or '0'}{' + ...' if len(nz) == 6 else ''}; deg<={self.max_deg}, {self.mode})"

    # -- evaluation ---------------------------------------------------
    def coefficient(self, index) -> Number:
        idx = (index,) if isinstance(index, (int, np.integer)) else tuple(index)
        if len(idx) != self.nvars:
            raise SeriesError(f"index {idx} does not match {self.nvars} variables")
        if any(i < 0 for i in idx) or sum(idx) > self.max_deg:
            raise SeriesError(f"index {idx} beyond max_deg {self.max_deg}")
        return self.coeffs[idx]

    def eval_at_one(self) -> Number:
        if self.exact:
            return sum(self.coeffs.flat, Fraction(0))
        return float(self.coeffs.sum())

    def __call__(self, *point: Number) -> Number:
        """Evaluate the truncated polynomial at a point."""
        if len(point) != self.nvars:
            raise SeriesError("point dimension mismatch")
        out = self.coeffs
        for x in point:
            out = np.polynomial.polynomial.polyval(x, out)
        return out

    def derivative(self, var: int = 0) -> "TruncatedSeries":
        if not 0 <= var < self.nvars:
            raise SeriesError(f"no variable {var}")
        n = self.max_deg
        shifted = np.moveaxis(self.coeffs, var, 0)[1:]
        k = np.arange(1, n + 1).reshape((-1,) + (1,) * (self.nvars - 1))
        if self.exact:
            k = k.astype(object)
        d = shifted * k
        out = np.zeros_like(self.coeffs)
        if self.exact:
            out[...] = Fraction(0)
        np.moveaxis(out, var, 0)[:-1] = d
        return self._like(out)

    def probabilities(self) -> np.ndarray:
        """Coefficients as a float array (p_n for a PGF)."""
        return np.asarray(self.coeffs, dtype=np.float64)


# ---------------------------------------------------------------------
# core operations


def _conv_nd(a: np.ndarray, b: np.ndarray, max_deg: int, deg: np.ndarray | None) -> np.ndarray:
    if a.ndim == 1:
        return np.convolve(a, b)[: max_deg + 1]
    out = np.zeros_like(a)
    if a.dtype == object:
        out[...] = Fraction(0)
    size = max_deg + 1
    for idx in zip(*np.nonzero(a)):
        if sum(idx) > max_deg:
            continue
        dst = tuple(slice(i, size) for i in idx)
        src = tuple(slice(0, size - i) for i in idx)
        out[dst] += a[idx] * b[src]
    out[deg > max_deg] = Fraction(0) if a.dtype == object else 0.0
    return out


def mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Cauchy product truncated at ``max_deg``."""
    a._check(b)
    return a._like(_conv_nd(a.coeffs, b.coeffs, a.max_deg, a._deg))


def _euler(s: TruncatedSeries, inverse: bool = False) -> TruncatedSeries:
    # Euler (total degree) operator, or its inverse on the non-constant part
    deg = s.degree_grid()
    if s.exact:
        deg = deg.astype(object)
    if not inverse:
        return s._like(s.coeffs * deg)
    out = s.coeffs.copy()
    mask = deg != 0
    out[mask] = out[mask] / deg[mask]
    out[~mask] = Fraction(0) if s.exact else 0.0
    return s._like(out)


def reciprocal(s: TruncatedSeries) -> TruncatedSeries:
    """1/s as a series; needs a nonzero constant term."""
    c0 = s.const
    if c0 == 0:
        raise SeriesError("reciprocal of a series with zero constant term")
    if s.nvars == 1:
        a = s.coeffs
        n = s.max_deg
        r = np.zeros_like(a)
        if s.exact:
            r[...] = Fraction(0)
        r[0] = (Fraction(1) if s.exact else 1.0) / c0
        for k in range(1, n + 1):
            r[k] = -np.dot(a[1:k + 1], r[k - 1::-1]) / c0
        return s._like(r)
    # Newton iteration r <- r (2 - s r), doubling correct degrees
    r = TruncatedSeries.constant(1, s.nvars, s.max_deg, s.exact) * ((Fraction(1) if s.exact else 1.0) / c0)
    prec = 1
    while prec <= s.max_deg:
        r = r * (2 - s * r)
        prec *= 2
    return r


def log_series(s: TruncatedSeries) -> TruncatedSeries:
    """log(s); the constant term must be positive (and equal to 1 in exact mode)."""
    c0 = s.const
    if s.exact and c0 != 1:
        raise SeriesError("exact log needs constant term 1")
    if c0 <= 0:
        raise SeriesError("log needs a positive constant term")
    core = _euler(mul(_euler(s), reciprocal(s)), inverse=True)
    if not s.exact:
        core = core + math.log(c0)
    return core


def exp_series(s: TruncatedSeries) -> TruncatedSeries:
    """exp(s) truncated; exact mode requires a zero constant term."""
    c0 = s.const
    if s.exact and c0 != 0:
        raise SeriesError("exp of a nonzero constant is not rational")
    lead = Fraction(1) if s.exact else math.exp(c0)
    if s.nvars == 1:
        a = s.coeffs
        n = s.max_deg
        k = np.arange(n + 1)
        ka = a * (k.astype(object) if s.exact else k)
        e = np.zeros_like(a)
        if s.exact:
            e[...] = Fraction(0)
        e[0] = lead
        for m in range(1, n + 1):
            e[m] = np.dot(ka[1:m + 1], e[m - 1::-1]) / m
        return s._like(e)
    # Newton iteration e <- e (1 + s0 - log e) on the zero-constant part
    s0 = s - c0
    e = TruncatedSeries.constant(1, s.nvars, s.max_deg, s.exact)
    prec = 1
    while prec <= s.max_deg:
        e = e * (1 + s0 - log_series(e))
        prec *= 2
    return e * lead


def exp_poly(p: Union[TruncatedSeries, "RationalPolynomial", Mapping], nvars: int = 1,
             max_deg: int = DEFAULT_MAX_DEG, exact: bool = False) -> TruncatedSeries:
    """Taylor expansion of exp(p) for a polynomial argument ``p``.

    ``p`` may be a series, a :class:`RationalPolynomial`, or a
    ``{multi_index: coefficient}`` mapping.
    """
    if isinstance(p, RationalPolynomial):
        p = TruncatedSeries.from_polynomial(p, max_deg, exact)
    elif not isinstance(p, TruncatedSeries):
        p = TruncatedSeries.from_terms(p, nvars, max_deg, exact)
    return exp_series(p)


def pow_real(s: TruncatedSeries, mu: Number) -> TruncatedSeries:
    """s**mu for real mu >= 0 via (s^mu)' s = mu s' s^mu.

    Float mode for non-integer mu; the constant term must be positive.
    """
    if mu < 0:
        raise SeriesError("exponent must be nonnegative")
    c0 = s.const
    if c0 == 0:
        raise SeriesError("pow_real needs a nonzero constant term")
    if mu == 0:
        return TruncatedSeries.constant(1, s.nvars, s.max_deg, s.exact)
    if float(mu).is_integer():
        return s ** int(mu)
    if s.exact:
        raise SeriesError("non-integer power in exact-rational mode")
    if c0 < 0:
        raise SeriesError("non-integer power of a series with negative constant term")
    if s.nvars > 1:
        return exp_series(log_series(s) * float(mu))
    a = s.coeffs
    n = s.max_deg
    f = np.zeros(n + 1)
    f[0] = c0 ** float(mu)
    k = np.arange(n + 1, dtype=np.float64)
    for m in range(1, n + 1):
        kk = k[1:m + 1]
        f[m] = np.dot((mu * kk - (m - kk)) * a[1:m + 1], f[m - 1::-1]) / (m * c0)
    return s._like(f)


def _as_multivariate_terms(outer) -> dict:
    if isinstance(outer, RationalPolynomial):
        return {(i,): c for i, c in enumerate(outer.coeffs) if c != 0}
    if isinstance(outer, TruncatedSeries):
        return {idx: v for idx, v in np.ndenumerate(outer.coeffs) if v != 0}
    terms = {}
    for idx, c in dict(outer).items():
        terms[(idx,) if isinstance(idx, int) else tuple(idx)] = c
    return terms


def compose(outer, inner: Union[TruncatedSeries, Sequence[TruncatedSeries]]) -> TruncatedSeries:
    """Evaluate a polynomial ``outer`` at series argument(s) ``inner``.

    ``outer`` is a :class:`RationalPolynomial`, a finite mapping
    ``{multi_index: coefficient}``, or a series whose coefficients are
    read as a polynomial (a finitely supported PGF).  ``inner`` supplies one
    series per variable of ``outer``.
    """
    if isinstance(outer, (int, float, Fraction)):
        raise SeriesError("outer must be a polynomial, got a scalar")
    inners = [inner] if isinstance(inner, TruncatedSeries) else list(inner)
    if not inners:
        raise SeriesError("no inner series given")
    ref = inners[0]
    for s in inners[1:]:
        ref._check(s)
    terms = _as_multivariate_terms(outer)
    if not isinstance(outer, (RationalPolynomial, TruncatedSeries, Mapping)):
        raise SeriesError("outer is not a polynomial")
    if terms and len(next(iter(terms))) != len(inners):
        raise SeriesError(f"outer has {len(next(iter(terms)))} variables, {len(inners)} inner series given")

    def coerce(c):
        if ref.exact:
            return Fraction(c)
        return float(c)

    if len(inners) == 1:
        # Horner in the single variable
        top = max((i[0] for i in terms), default=0)
        acc = TruncatedSeries.zeros(ref.nvars, ref.max_deg, ref.exact)
        for k in range(top, -1, -1):
            acc = mul(acc, ref) if k != top else acc
            c = terms.get((k,), 0)
            if c != 0:
                acc = acc + coerce(c)
        return acc
    # multivariate: cache powers per variable
    powers: list[dict[int, TruncatedSeries]] = [dict() for _ in inners]

    def power(v: int, k: int) -> TruncatedSeries:
        cache = powers[v]
        if k not in cache:
            cache[k] = inners[v] ** k
        return cache[k]

    acc = TruncatedSeries.zeros(ref.nvars, ref.max_deg, ref.exact)
    for idx, c in terms.items():
        term = TruncatedSeries.constant(coerce(c), ref.nvars, ref.max_deg, ref.exact)
        for v, k in enumerate(idx):
            if k:
                term = mul(term, power(v, k))
        acc = acc + term
    return acc


def eval_at_one(s: TruncatedSeries) -> Number:
    return s.eval_at_one()


def coefficient(s: TruncatedSeries, index) -> Number:
    return s.coefficient(index)


def derivative(s: TruncatedSeries, var: int = 0) -> TruncatedSeries:
    return s.derivative(var)


# ---------------------------------------------------------------------
# exact polynomials


class RationalPolynomial:
    """Dense univariate polynomial with :class:`~fractions.Fraction` coefficients.

    ``coeffs[k]`` multiplies ``x**k``; trailing zeros are trimmed, so the zero
    polynomial has an empty coefficient tuple.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[Number] = ()):
        cs = [Fraction(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs: tuple[Fraction, ...] = tuple(cs)

    @classmethod
    def monomial(cls, k: int, c: Number = 1) -> "RationalPolynomial":
        return cls([0] * k + [c])

    @classmethod
    def x(cls) -> "RationalPolynomial":
        return cls([0, 1])

    @property
    def degree(self) -> int:
        """Degree; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def __getitem__(self, k: int) -> Fraction:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else Fraction(0)

    def __iter__(self):
        return iter(self.coeffs)

    def __add__(self, other):
        other = _as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        return RationalPolynomial(self[k] + other[k] for k in range(n))

    __radd__ = __add__

    def __neg__(self):
        return RationalPolynomial(-c for c in self.coeffs)

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        if not isinstance(other, RationalPolynomial):
            c = Fraction(other)
            return RationalPolynomial(c * a for a in self.coeffs)
        if self.is_zero() or other.is_zero():
            return RationalPolynomial()
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return RationalPolynomial(out)

    __rmul__ = __mul__

    def __truediv__(self, c: Number):
        c = Fraction(c)
        return RationalPolynomial(a / c for a in self.coeffs)

    def __pow__(self, k: int):
        out = RationalPolynomial([1])
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = RationalPolynomial([other])
        if not isinstance(other, RationalPolynomial):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __call__(self, x):
        acc = 0 * x if not isinstance(x, (int, Fraction)) else Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def derivative(self) -> "RationalPolynomial":
        return RationalPolynomial(k * c for k, c in enumerate(self.coeffs) if k > 0)

    def compose(self, inner: "RationalPolynomial") -> "RationalPolynomial":
        """self(inner(x)) by Horner's rule."""
        acc = RationalPolynomial()
        for c in reversed(self.coeffs):
            acc = acc * inner + c
        return acc

    def affine(self, c0: Number, c1: Number) -> "RationalPolynomial":
        """Coefficients of ``self(c0 + c1 x)`` via the binomial theorem."""
        c0, c1 = Fraction(c0), Fraction(c1)
        n = len(self.coeffs)
        p0 = [Fraction(1)]
        for _ in range(1, n):
            p0.append(p0[-1] * c0)
        out = []
        scale = Fraction(1)
        for i in range(n):
            acc = sum((self.coeffs[m] * math.comb(m, i) * p0[m - i] for m in range(i, n) if self.coeffs[m]),
                      Fraction(0))
            out.append(acc * scale)
            scale *= c1
        return RationalPolynomial(out)

    def shift(self, a: Number) -> "RationalPolynomial":
        """Coefficients of self(x + a)."""
        return self.compose(RationalPolynomial([a, 1]))

    def to_float(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs])

    def __repr__(self) -> str:
        if not self.coeffs:
            return "RationalPolynomial(0)"
        terms = [f"{c}*x^{k}" for k, c in enumerate(self.coeffs) if c != 0]
        return f"RationalPolynomial({' + '.join(terms)})"


def _as_poly(p) -> RationalPolynomial:
    if isinstance(p, RationalPolynomial):
        return p
    return RationalPolynomial([p])


def all_multi_indices(nvars: int, max_deg: int):
    """Multi-indices of total degree <= max_deg in graded order."""
    for d in range(max_deg + 1):
        for idx in itertools.product(range(d + 1), repeat=nvars):
            if sum(idx) == d:
                yield idx
