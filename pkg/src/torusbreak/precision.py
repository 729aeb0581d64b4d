"""Explicit arbitrary-precision context built on gmpy2.

Precision is never ambient global state: every routine that does extended
arithmetic receives a Context and runs inside ``with ctx:``, which pushes a
gmpy2 context with the right mantissa size and pops it on exit.
"""
import gmpy2

_LOG2_10 = 3.321928094887362347870319429


class Context:
    """A working precision of `digits` decimal digits (>= 15)."""

    def __init__(self, digits=30):
        if digits < 15:
            raise ValueError(f"digits must be >= 15, got {digits}")
        self.digits = int(digits)
        self.prec = int(self.digits * _LOG2_10) + 12

    def __enter__(self):
        self._saved = gmpy2.get_context()
        gmpy2.set_context(gmpy2.context(precision=self.prec))
        return self

    def __exit__(self, *exc):
        gmpy2.set_context(self._saved)
        return False

    def __repr__(self):
        return f"Context(digits={self.digits})"

    def __eq__(self, other):
        return isinstance(other, Context) and other.digits == self.digits

    # -- constructors ------------------------------------------------------
    def real(self, x):
        """RealX from int/float/decimal string/mpfr; strings parsed exactly."""
        with self:
            return gmpy2.mpfr(x)

    def complex(self, re, im=0):
        with self:
            if isinstance(re, (complex, gmpy2.mpc)):
                return gmpy2.mpc(re) + gmpy2.mpc(0, 1) * gmpy2.mpfr(im)
            return gmpy2.mpc(gmpy2.mpfr(re), gmpy2.mpfr(im))

    @property
    def pi(self):
        with self:
            return gmpy2.const_pi()

    @property
    def two_pi(self):
        with self:
            return 2 * gmpy2.const_pi()

    def exp_i(self, theta):
        """e^{i theta} for real theta."""
        with self:
            t = gmpy2.mpfr(theta)
            return gmpy2.mpc(gmpy2.cos(t), gmpy2.sin(t))

    def eps(self, drop=0):
        """10^-(digits - drop), the usual tolerance scale."""
        with self:
            return gmpy2.mpfr(10) ** (-(self.digits - drop))

    # -- serialization -----------------------------------------------------
    def to_str(self, x):
        """Decimal string that round-trips through real() at this precision."""
        with self:
            if isinstance(x, gmpy2.mpc):
                return f"{self.to_str(x.real)} {self.to_str(x.imag)}"
            return format(gmpy2.mpfr(x), f".{self.digits + 8}e")


DOUBLE = Context(digits=16)
DEFAULT = Context(digits=30)
LINDSTEDT = Context(digits=60)
