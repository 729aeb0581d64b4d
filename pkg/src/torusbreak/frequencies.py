"""Algebraic frequencies, continued fractions, Jacobi-Perron, Diophantine scan.

Named constants: the golden-ratio conjugate (root of x^2+x-1 in (0,1)), the
spiral mean s (root of s^3-s-1), and tau (root of t^3-t^2-t-1).  All values
are recomputed at the caller's precision by polynomial Newton from the
bracketing interval; no stored decimal constants.
"""
from dataclasses import dataclass
from fractions import Fraction

import gmpy2

from .precision import Context


@dataclass(frozen=True)
class AlgebraicFrequency:
    """Real algebraic number: integer polynomial + bracket selecting the root."""
    poly: tuple            # integer coefficients, ascending
    bracket: tuple         # (lo, hi) isolating interval
    name: str = ""

    def value(self, ctx):
        with ctx:
            lo, hi = ctx.real(self.bracket[0]), ctx.real(self.bracket[1])
            cs = self.poly

            def p(x):
                acc = ctx.real(0)
                for c in reversed(cs):
                    acc = acc * x + c
                return acc

            def dp(x):
                acc = ctx.real(0)
                for k in range(len(cs) - 1, 0, -1):
                    acc = acc * x + k * cs[k]
                return acc

            slo = p(lo) <= 0
            # bisect a few times to get a safe Newton start
            for _ in range(8):
                mid = (lo + hi) / 2
                if (p(mid) <= 0) == slo:
                    lo = mid
                else:
                    hi = mid
            x = (lo + hi) / 2
            tol = ctx.eps(drop=2)
            for _ in range(200):
                dx = p(x) / dp(x)
                x -= dx
                if abs(dx) < tol * (1 + abs(x)):
                    break
            return x


GOLDEN = AlgebraicFrequency(poly=(-1, 1, 1), bracket=(0, 1), name="golden")
SPIRAL = AlgebraicFrequency(poly=(-1, -1, 0, 1), bracket=(1, 2), name="spiral")
TAU = AlgebraicFrequency(poly=(-1, -1, -1, 1), bracket=(1, 2), name="tau")


@dataclass(frozen=True)
class FrequencyVector2D:
    """(omega1, omega2) built from arithmetic over algebraic constants.

    Each component is a tuple of terms (coeff_num, coeff_den, base, power)
    meaning sum of coeff * base^power with base an AlgebraicFrequency (or None
    for the constant 1)."""
    name: str
    comp1: tuple
    comp2: tuple

    def value(self, ctx):
        with ctx:
            return (_eval_terms(self.comp1, ctx), _eval_terms(self.comp2, ctx))


def _eval_terms(terms, ctx):
    with ctx:
        acc = ctx.real(0)
        for num, den, base, power in terms:
            t = ctx.real(num) / ctx.real(den)
            if base is not None:
                t *= base.value(ctx) ** power
            acc += t
        return acc


def _t(num, den, base, power):
    return (num, den, base, power)


OMEGA_S = FrequencyVector2D("omega_s",
                            (_t(1, 1, SPIRAL, 1), _t(-1, 1, None, 0)),
                            (_t(1, 1, SPIRAL, -1),))
OMEGA_U = FrequencyVector2D("omega_u",
                            (_t(1, 1, SPIRAL, -1),),
                            (_t(1, 1, SPIRAL, 1), _t(-1, 1, None, 0)))
OMEGA_TAU = FrequencyVector2D("omega_tau",
                              (_t(1, 1, TAU, -1),),
                              (_t(1, 1, TAU, 1), _t(-1, 1, None, 0)))
OMEGA_G = FrequencyVector2D("omega_g",
                            (_t(1, 1, GOLDEN, 1),),
                            (_t(1, 1, SPIRAL, -1),))
OMEGA_A = FrequencyVector2D("omega_a",
                            (_t(1, 1, SPIRAL, -1),),
                            (_t(1, 1, SPIRAL, -2),))
OMEGA_C = FrequencyVector2D("omega_c",
                            (_t(2, 1, SPIRAL, 1), _t(-2, 1, None, 0),
                             _t(-1, 24, SPIRAL, -1)),
                            (_t(1, 1, SPIRAL, 1), _t(-1, 1, None, 0)))

NAMED_VECTORS = {v.name: v for v in
                 (OMEGA_S, OMEGA_U, OMEGA_TAU, OMEGA_G, OMEGA_A, OMEGA_C)}

# s^{-1} satisfies x^3 + x^2 - 1 = 0 (reversed coefficients of s^3 - s - 1)
SPIRAL_INV = AlgebraicFrequency(poly=(-1, 0, 1, 1), bracket=(0, 1),
                                name="spiral-inv")

NAMED_SCALARS = {"golden": GOLDEN, "spiral-inv": SPIRAL_INV}


def cf_approximants(omega, n, ctx=None):
    """First n continued-fraction convergents (p, q) in lowest terms.

    `omega` may be an AlgebraicFrequency, a Fraction (terminates exactly), or
    an mpfr in (0, 1).
    """
    if isinstance(omega, Fraction):
        x = gmpy2.mpq(omega.numerator, omega.denominator)
        exact = True
        work = Context(30)
    else:
        # enough precision that q_n^2 stays well below 10^digits
        work = Context(max((ctx.digits if ctx else 30), 30 + 2 * n))
        x = omega.value(work) if isinstance(omega, AlgebraicFrequency) else work.real(omega)
        exact = False
    if not 0 < x < 1:
        raise ValueError("omega must lie in (0, 1)")
    out = []
    with work:
        p_prev, p = 1, 0
        q_prev, q = 0, 1
        # x = [0; a1, a2, ...]
        frac = x
        for _ in range(n):
            if exact:
                if frac == 0:
                    break
                inv = 1 / frac
                a = int(inv)
                frac = inv - a
            else:
                if frac <= 0:
                    break
                inv = 1 / frac
                a = int(gmpy2.floor(inv))
                frac = inv - a
            p_prev, p = p, a * p + p_prev
            q_prev, q = q, a * q + q_prev
            out.append((p, q))
    return out


def jacobi_perron(omega, n, ctx=None):
    """First n Jacobi-Perron triples (p1, p2, q) for a 2D frequency vector.

    Map T(x, y) = (y/x - floor(y/x), 1/x - floor(1/x)) with partial quotients
    a = floor(y/x), b = floor(1/x); integer columns follow
    v_{m+1} = v_{m-2} + a*v_{m-1} + b*v_m from the identity seed.  Raw triples
    are returned without gcd reduction.
    """
    base = ctx.digits if ctx else 30
    work = Context(max(2 * base, 30 + 6 * n))   # floors at >= 2x precision
    if isinstance(omega, FrequencyVector2D):
        x, y = omega.value(work)
    else:
        with work:
            x, y = work.real(omega[0]), work.real(omega[1])
    if not (0 < x < 1 and 0 < y < 1):
        raise ValueError("both components must lie in (0, 1)")
    cols = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]   # v_{-2}, v_{-1}, v_0
    out = []
    with work:
        for _ in range(n):
            if x == 0:
                raise ZeroDivisionError("Jacobi-Perron expansion exhausted (x=0)")
            a = int(gmpy2.floor(y / x))
            b = int(gmpy2.floor(1 / x))
            x, y = y / x - a, 1 / x - b
            v = tuple(cols[0][i] + a * cols[1][i] + b * cols[2][i]
                      for i in range(3))
            cols = [cols[1], cols[2], v]
            out.append(v)
    return out


def jp_matrix_det(cols):
    """Determinant of the 3x3 matrix with the given integer columns."""
    m = [[cols[j][i] for j in range(3)] for i in range(3)]
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def diophantine_scan(omega, max_norm, tau=2.0, ctx=None):
    """min over 0 < |m|_1 <= max_norm of |omega . m + n| * |m|^tau, with n the
    nearest integer; returns (constant, m, n).  Works for 1D (scalar omega)
    and 2D vectors; runs in double precision (adequate for desk-scale norms).
    """
    work = ctx or Context(30)
    if isinstance(omega, FrequencyVector2D):
        w = [float(v) for v in omega.value(work)]
    elif isinstance(omega, AlgebraicFrequency):
        w = [float(omega.value(work))]
    else:
        w = [float(x) for x in omega] if hasattr(omega, "__len__") else [float(omega)]
    best = None
    if len(w) == 1:
        for m1 in range(1, max_norm + 1):
            t = w[0] * m1
            n = -round(t)
            val = abs(t + n) * m1 ** tau
            if best is None or val < best[0]:
                best = (val, (m1,), n)
    else:
        for m1 in range(-max_norm, max_norm + 1):
            rem = max_norm - abs(m1)
            for m2 in range(-rem, rem + 1):
                if m1 == 0 and m2 == 0:
                    continue
                norm = abs(m1) + abs(m2)
                t = w[0] * m1 + w[1] * m2
                n = -round(t)
                val = abs(t + n) * norm ** tau
                if best is None or val < best[0]:
                    best = (val, (m1, m2), n)
    return best
