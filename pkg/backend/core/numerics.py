"""
Exact arithmetic over a real quadratic field Q(√d).

Every coordinate, length and measure in the lab is a QuadNum. Decisions
(ordering, equality, orientation tests) are made with rational arithmetic and
squaring only; `approx` exists for reporting.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import isqrt
from typing import Optional, Union

from backend.core.errors import FieldMismatchError, LiteralError

Rational = Union[int, Fraction]

_LITERAL = re.compile(
    r"^\s*(?P<a>[+-]?\d+(?:/\d+)?)"
    r"(?:\s*(?P<op>[+-])\s*(?P<b>\d+(?:/\d+)?)\s*(?:√|sqrt|r)\s*(?P<d>\d+))?\s*$"
)


@lru_cache(maxsize=None)
def _is_squarefree(n: int) -> bool:
    if n < 1:
        return False
    k = 2
    while k * k <= n:
        if n % (k * k) == 0:
            return False
        k += 1
    return True


def _sign(x: Rational) -> int:
    return (x > 0) - (x < 0)


class QuadNum:
    """a + b·√d with rational a, b. Immutable.

    Pure rationals (b == 0) are context-free: they combine with values of any
    field, and two pure rationals compare equal regardless of their stored d.
    """

    __slots__ = ("a", "b", "d")

    def __init__(self, a: Rational = 0, b: Rational = 0, d: int = 5):
        if not _is_squarefree(d) or d == 1:
            raise FieldMismatchError(f"d={d} is not a square-free integer > 1")
        object.__setattr__(self, "a", a if type(a) is Fraction else Fraction(a))
        object.__setattr__(self, "b", b if type(b) is Fraction else Fraction(b))
        object.__setattr__(self, "d", d)

    def __setattr__(self, key, value):
        raise AttributeError("QuadNum is immutable")

    # ─── Construction helpers ─────────────────────────────────

    @classmethod
    def coerce(cls, x, d: int = 5) -> "QuadNum":
        if isinstance(x, QuadNum):
            return x
        if isinstance(x, (int, Fraction)):
            return cls(x, 0, d)
        if isinstance(x, str):
            return parse(x)
        raise TypeError(f"cannot convert {type(x).__name__} to QuadNum")

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def _ctx(self, other: "QuadNum") -> int:
        if self.b == 0:
            return other.d
        if other.b == 0 or other.d == self.d:
            return self.d
        raise FieldMismatchError(f"cannot combine values of Q(√{self.d}) and Q(√{other.d})")

    def _other(self, other) -> "QuadNum":
        if isinstance(other, QuadNum):
            return other
        if isinstance(other, (int, Fraction)):
            return QuadNum(other, 0, self.d)
        return NotImplemented

    # ─── Field operations ─────────────────────────────────────

    def __add__(self, other):
        other = self._other(other)
        if other is NotImplemented:
            return other
        return QuadNum(self.a + other.a, self.b + other.b, self._ctx(other))

    __radd__ = __add__

    def __neg__(self):
        return QuadNum(-self.a, -self.b, self.d)

    def __pos__(self):
        return self

    def __sub__(self, other):
        other = self._other(other)
        if other is NotImplemented:
            return other
        return QuadNum(self.a - other.a, self.b - other.b, self._ctx(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._other(other)
        if other is NotImplemented:
            return other
        d = self._ctx(other)
        return QuadNum(self.a * other.a + self.b * other.b * d,
                       self.a * other.b + self.b * other.a, d)

    __rmul__ = __mul__

    def conjugate(self) -> "QuadNum":
        return QuadNum(self.a, -self.b, self.d)

    def norm(self) -> Fraction:
        return self.a * self.a - self.b * self.b * self.d

    def inverse(self) -> "QuadNum":
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("QuadNum division by zero")
        return QuadNum(self.a / n, -self.b / n, self.d)

    def __truediv__(self, other):
        other = self._other(other)
        if other is NotImplemented:
            return other
        self._ctx(other)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return self.inverse() * other

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # ─── Ordering ─────────────────────────────────────────────

    def sign(self) -> int:
        """Exact sign of a + b√d by comparing a² with b²d."""
        sa, sb = _sign(self.a), _sign(self.b)
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb
        # opposite signs: the larger magnitude wins
        return sa if self.a * self.a > self.b * self.b * self.d else sb

    def __eq__(self, other):
        other = self._other(other) if not isinstance(other, QuadNum) else other
        if other is NotImplemented:
            return False
        if self.b == 0 and other.b == 0:
            return self.a == other.a
        return self.a == other.a and self.b == other.b and self.d == other.d

    def __hash__(self):
        if self.b == 0:
            return hash(self.a)
        return hash((self.a, self.b, self.d))

    def __lt__(self, other):
        return compare(self, other) < 0

    def __le__(self, other):
        return compare(self, other) <= 0

    def __gt__(self, other):
        return compare(self, other) > 0

    def __ge__(self, other):
        return compare(self, other) >= 0

    def __bool__(self):
        return self.a != 0 or self.b != 0

    # ─── Rendering ────────────────────────────────────────────

    def __str__(self):
        return render(self)

    def __repr__(self):
        return f"QuadNum({render(self)!r})"

    def __float__(self):
        return float(approx(self, 17))

    def floor(self) -> int:
        """Largest integer n with n ≤ self (exact)."""
        n = _rough_floor(self)
        while QuadNum(n, 0, self.d) > self:
            n -= 1
        while QuadNum(n + 1, 0, self.d) <= self:
            n += 1
        return n


def _rough_floor(x: QuadNum) -> int:
    # |b|·√d = √(num·den)/den within 1/den of the true root
    b2d = x.b * x.b * x.d
    root = Fraction(isqrt(b2d.numerator * b2d.denominator), b2d.denominator)
    est = x.a + (root if x.b > 0 else -root)
    return est.numerator // est.denominator - 1


def compare(x, y) -> int:
    """Exact sign of x − y (−1, 0, +1)."""
    x = QuadNum.coerce(x) if not isinstance(x, QuadNum) else x
    y = QuadNum.coerce(y, x.d) if not isinstance(y, QuadNum) else y
    return (x - y).sign()


def approx(x: QuadNum, digits: int) -> str:
    """Decimal string truncated (toward zero) to `digits` places; reporting only."""
    if digits < 1:
        raise ValueError("digits must be ≥ 1")
    x = QuadNum.coerce(x)
    negative = x.sign() < 0
    scaled = abs(x) * (10 ** digits)
    n = scaled.floor()
    whole, frac = divmod(n, 10 ** digits)
    text = f"{whole}.{frac:0{digits}d}"
    return f"-{text}" if negative and n != 0 else text


def _render_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def render(x: QuadNum) -> str:
    """Textual literal `a`, `a+b√d` or `a-b√d`."""
    if x.b == 0:
        return _render_rational(x.a)
    op = "+" if x.b > 0 else "-"
    return f"{_render_rational(x.a)}{op}{_render_rational(abs(x.b))}√{x.d}"


def parse(text: str, d: Optional[int] = None) -> QuadNum:
    """Parse a QuadNum literal; `d` is the field context for pure rationals."""
    m = _LITERAL.match(text)
    if not m:
        raise LiteralError(f"malformed number literal {text!r}")
    a = Fraction(m.group("a"))
    if m.group("b") is None:
        return QuadNum(a, 0, d or 5)
    b = Fraction(m.group("b"))
    if m.group("op") == "-":
        b = -b
    field = int(m.group("d"))
    if d is not None and field != d and b != 0:
        raise FieldMismatchError(f"literal {text!r} is in Q(√{field}), expected Q(√{d})")
    return QuadNum(a, b, field)


ZERO = QuadNum(0)
ONE = QuadNum(1)


# ─── Plane geometry over the field ───────────────────────────────


@dataclass(frozen=True, slots=True)
class Vec:
    x: QuadNum
    y: QuadNum

    @classmethod
    def of(cls, x, y) -> "Vec":
        return cls(QuadNum.coerce(x), QuadNum.coerce(y))

    def __add__(self, o: "Vec") -> "Vec":
        return Vec(self.x + o.x, self.y + o.y)

    def __sub__(self, o: "Vec") -> "Vec":
        return Vec(self.x - o.x, self.y - o.y)

    def __neg__(self) -> "Vec":
        return Vec(-self.x, -self.y)

    def scale(self, k) -> "Vec":
        return Vec(self.x * k, self.y * k)

    def cross(self, o: "Vec") -> QuadNum:
        return self.x * o.y - self.y * o.x

    def dot(self, o: "Vec") -> QuadNum:
        return self.x * o.x + self.y * o.y

    def is_zero(self) -> bool:
        return not self.x and not self.y

    def cmul(self, o: "Vec") -> "Vec":
        """Complex product; its argument is the sum of the arguments."""
        return Vec(self.x * o.x - self.y * o.y, self.x * o.y + self.y * o.x)

    def conj(self) -> "Vec":
        return Vec(self.x, -self.y)

    def l1(self) -> QuadNum:
        return abs(self.x) + abs(self.y)

    def linf(self) -> QuadNum:
        return max(abs(self.x), abs(self.y))

    def __str__(self):
        return f"({render(self.x)}, {render(self.y)})"


@dataclass(frozen=True, slots=True)
class Placement:
    """Chart transition z ↦ sign·z + shift (sign = ±1)."""

    sign: int
    shift: Vec

    @classmethod
    def identity(cls) -> "Placement":
        return cls(1, Vec(ZERO, ZERO))

    def __call__(self, z: Vec) -> Vec:
        return (z if self.sign > 0 else -z) + self.shift

    def direction(self, w: Vec) -> Vec:
        return w if self.sign > 0 else -w

    def compose(self, inner: "Placement") -> "Placement":
        """self ∘ inner."""
        return Placement(self.sign * inner.sign, self(inner.shift))

    def inverse(self) -> "Placement":
        return Placement(self.sign, self.direction(-self.shift))

    @property
    def is_translation(self) -> bool:
        return self.sign > 0
