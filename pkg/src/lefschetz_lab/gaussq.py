"""Exact Gaussian rationals ``a + b i`` with ``a, b`` in Q."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational


class GaussQ:
    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @staticmethod
    def coerce(x) -> "GaussQ":
        if isinstance(x, GaussQ):
            return x
        if isinstance(x, (int, Rational)):
            return GaussQ(x, 0)
        raise TypeError(f"cannot coerce {type(x).__name__} to GaussQ exactly")

    def _other(self, x):
        if isinstance(x, GaussQ):
            return x
        if isinstance(x, (int, Rational)):
            return GaussQ(x, 0)
        return None

    def __add__(self, x):
        o = self._other(x)
        if o is None:
            return complex(self) + x
        return GaussQ(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussQ(-self.re, -self.im)

    def __sub__(self, x):
        o = self._other(x)
        if o is None:
            return complex(self) - x
        return GaussQ(self.re - o.re, self.im - o.im)

    def __rsub__(self, x):
        return (-self) + x

    def __mul__(self, x):
        o = self._other(x)
        if o is None:
            return complex(self) * x
        return GaussQ(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, x):
        o = self._other(x)
        if o is None:
            return complex(self) / x
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("GaussQ division by zero")
        num = self * o.conjugate()
        return GaussQ(num.re / d, num.im / d)

    def __rtruediv__(self, x):
        return GaussQ.coerce(x) / self if self._other(x) is not None else x / complex(self)

    def __pow__(self, k: int):
        out = GaussQ(1)
        for _ in range(k):
            out = out * self
        return out

    def conjugate(self) -> "GaussQ":
        return GaussQ(self.re, -self.im)

    def __abs__(self):
        return abs(complex(self))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __eq__(self, x):
        o = self._other(x)
        if o is None:
            try:
                return complex(self) == complex(x)
            except TypeError:
                return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __repr__(self):
        return f"GaussQ({self.re}, {self.im})"


I = GaussQ(0, 1)


def is_exact(x) -> bool:
    return isinstance(x, (GaussQ, int, Rational))
