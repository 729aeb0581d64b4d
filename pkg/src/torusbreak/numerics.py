"""Extended-precision FFT, polynomial roots, and small dense linear algebra.

Everything here works on gmpy2 scalars under an explicit precision Context.
Pure functions, deterministic for a fixed context.
"""
import gmpy2

from .precision import Context


class SingularMatrixError(ValueError):
    def __init__(self, pivot):
        super().__init__(f"matrix numerically singular (best pivot {pivot})")
        self.pivot = pivot


class DensePoly:
    """Dense polynomial, coefficients ascending, trailing zeros trimmed."""

    def __init__(self, coeffs, ctx):
        self.ctx = ctx
        cs = [ctx.complex(c) if not isinstance(c, gmpy2.mpc) else c for c in coeffs]
        while len(cs) > 1 and cs[-1] == 0:
            cs.pop()
        self.coeffs = cs

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, x):
        with self.ctx:
            acc = self.ctx.complex(0)
            for c in reversed(self.coeffs):
                acc = acc * x + c
            return acc

    def deriv(self):
        if self.degree == 0:
            return DensePoly([0], self.ctx)
        return DensePoly([k * c for k, c in enumerate(self.coeffs)][1:], self.ctx)

    def is_zero(self):
        return all(c == 0 for c in self.coeffs)


def _bit_reverse_permute(a):
    n = len(a)
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            a[i], a[j] = a[j], a[i]


def fft(values, inverse=False, ctx=None):
    """Radix-2 complex FFT of gmpy2 scalars; length must be a power of two."""
    if ctx is None:
        ctx = Context(30)
    n = len(values)
    if n == 0 or n & (n - 1):
        raise ValueError(f"fft length must be a power of two, got {n}")
    with ctx:
        a = [v if isinstance(v, gmpy2.mpc) else ctx.complex(v) for v in values]
        _bit_reverse_permute(a)
        sign = 1 if inverse else -1
        length = 2
        while length <= n:
            ang = sign * ctx.two_pi / length
            wl = ctx.exp_i(ang)
            half = length // 2
            # twiddle table for this stage
            ws = [ctx.complex(1)]
            for _ in range(half - 1):
                ws.append(ws[-1] * wl)
            for start in range(0, n, length):
                for k in range(half):
                    u = a[start + k]
                    t = ws[k] * a[start + k + half]
                    a[start + k] = u + t
                    a[start + k + half] = u - t
            length <<= 1
        if inverse:
            inv_n = ctx.real(1) / n
            a = [x * inv_n for x in a]
        return a


def poly_roots(p, ctx=None, max_iter=500):
    """All complex roots of a DensePoly via Aberth-Ehrlich iteration."""
    if ctx is None:
        ctx = p.ctx
    if p.is_zero():
        raise ValueError("zero polynomial has no well-defined roots")
    with ctx:
        coeffs = list(p.coeffs)
        # explicit zero roots: strip low-order zero coefficients
        zero_roots = 0
        while coeffs[0] == 0:
            coeffs.pop(0)
            zero_roots += 1
        deg = len(coeffs) - 1
        roots = [ctx.complex(0)] * zero_roots
        if deg == 0:
            return roots
        if deg == 1:
            roots.append(-coeffs[0] / coeffs[1])
            return roots
        q = DensePoly(coeffs, ctx)
        dq = q.deriv()
        lead = abs(coeffs[-1])
        radius = 1 + max(abs(c) for c in coeffs[:-1]) / lead
        # initial guesses on the Cauchy circle, irrational angle offset so no
        # guess sits on a symmetry axis of the root set
        x = [radius * ctx.exp_i(ctx.two_pi * k / deg + ctx.real("0.3941"))
             for k in range(deg)]
        tol = ctx.eps(drop=4)
        for _ in range(max_iter):
            done = True
            for i in range(deg):
                xi = x[i]
                pv = q(xi)
                dpv = dq(xi)
                s = ctx.complex(0)
                for j in range(deg):
                    if j != i:
                        d = xi - x[j]
                        if d == 0:
                            d = ctx.complex(tol)
                        s += 1 / d
                denom = dpv - pv * s
                if denom == 0:
                    continue
                delta = pv / denom
                x[i] = xi - delta
                if abs(delta) > tol * (1 + abs(xi)):
                    done = False
            if done:
                break
        return roots + x


def dense_solve(A, b, ctx):
    """Solve Ax = b (n <= 8) by Gaussian elimination with partial pivoting."""
    n = len(A)
    if n > 8:
        raise ValueError(f"dense_solve limited to n <= 8, got {n}")
    with ctx:
        M = [[ctx.real(A[i][j]) if not isinstance(A[i][j], (gmpy2.mpfr, gmpy2.mpc))
              else A[i][j] for j in range(n)] for i in range(n)]
        v = [x if isinstance(x, (gmpy2.mpfr, gmpy2.mpc)) else ctx.real(x) for x in b]
        for col in range(n):
            piv = max(range(col, n), key=lambda r: abs(M[r][col]))
            pmag = abs(M[piv][col])
            if pmag < ctx.eps(drop=6):
                raise SingularMatrixError(pmag)
            if piv != col:
                M[col], M[piv] = M[piv], M[col]
                v[col], v[piv] = v[piv], v[col]
            for r in range(col + 1, n):
                f = M[r][col] / M[col][col]
                if f == 0:
                    continue
                for c in range(col, n):
                    M[r][c] -= f * M[col][c]
                v[r] -= f * v[col]
        x = [None] * n
        for r in range(n - 1, -1, -1):
            acc = v[r]
            for c in range(r + 1, n):
                acc -= M[r][c] * x[c]
            x[r] = acc / M[r][r]
        return x


def eigenvalues_small(A, ctx):
    """Eigenvalues of a 2x2 or 4x4 matrix via char poly + poly_roots."""
    n = len(A)
    if n not in (2, 4):
        raise ValueError(f"eigenvalues_small supports n in {{2, 4}}, got {n}")
    with ctx:
        M = [[A[i][j] if isinstance(A[i][j], (gmpy2.mpfr, gmpy2.mpc))
              else ctx.real(A[i][j]) for j in range(n)] for i in range(n)]
        cs = char_poly(M, ctx)
        return poly_roots(DensePoly(cs, ctx), ctx)


def char_poly(M, ctx):
    """Characteristic polynomial coefficients (ascending, monic) by the
    Faddeev-LeVerrier recursion."""
    n = len(M)
    with ctx:
        one = ctx.real(1)
        c = [one]          # descending from lambda^n; c[0]=1
        B = [[M[i][j] for j in range(n)] for i in range(n)]
        for k in range(1, n + 1):
            tr = sum(B[i][i] for i in range(n))
            ck = -tr / k
            c.append(ck)
            if k < n:
                # B <- M (B + ck I)
                Bs = [[B[i][j] + (ck if i == j else 0) for j in range(n)]
                      for i in range(n)]
                B = [[sum(M[i][t] * Bs[t][j] for t in range(n)) for j in range(n)]
                     for i in range(n)]
        return list(reversed(c))
