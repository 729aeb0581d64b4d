"""Pade and log-Pade approximants of scalar eps-series; pole filtering and
annulus/threshold estimation.

The [M,N] approximant Q1/Q2 solves W_i + sum_{j=1}^N W_{i-j} Q2_j = 0 for
M < i <= M+N (denominator, Q2_0 = 1) and Q1_i = sum_j W_{i-j} Q2_j for
0 <= i <= M (numerator).  Log-Pade applies the same construction to
(d/d eps) log(W/eps^{k0}), turning branch points into simple poles whose
residues estimate the branch order.
"""
import json
import math
from dataclasses import dataclass, field

from .numerics import DensePoly, SingularMatrixError, poly_roots
from .precision import Context


@dataclass
class ScalarSeries:
    """Scalar eps-series: w0 + sum_{k>=1} coeffs[k-1] eps^k.

    Lindstedt observables have w0 = 0; the slot exists so closed-form test
    series with a constant term fit the same container."""
    coeffs: list
    ctx: Context
    w0: object = None
    provenance: str = ""

    def __len__(self):
        return len(self.coeffs)

    def coeff(self, k):
        """W_k, with zeros outside the stored range."""
        if k == 0:
            return self.w0 if self.w0 is not None else self.ctx.complex(0)
        if k < 1 or k > len(self.coeffs):
            return self.ctx.complex(0)
        return self.coeffs[k - 1]


@dataclass
class Pole:
    value: object            # mpc
    kind: str                # direct | logarithmic
    order: tuple             # (M, N)
    residue: object = None   # branch-order estimate for log-Pade poles
    genuine: bool = False


@dataclass
class PadeApproximant:
    M: int
    N: int
    Q1: DensePoly
    Q2: DensePoly
    kind: str                 # direct | logarithmic
    poles: list = field(default_factory=list)
    zeros: list = field(default_factory=list)

    def __call__(self, x):
        return self.Q1(x) / self.Q2(x)

    def taylor(self, n):
        """First n+1 Taylor coefficients of Q1/Q2 (series division)."""
        ctx = self.Q1.ctx
        with ctx:
            q1 = [self.Q1.coeffs[i] if i <= self.Q1.degree else ctx.complex(0)
                  for i in range(n + 1)]
            q2 = [self.Q2.coeffs[i] if i <= self.Q2.degree else ctx.complex(0)
                  for i in range(n + 1)]
            out = []
            for i in range(n + 1):
                acc = q1[i]
                for j in range(1, i + 1):
                    acc -= q2[j] * out[i - j]
                out.append(acc / q2[0])
            return out


def _ge_solve(A, b, ctx):
    """Gaussian elimination with partial pivoting, any n (internal)."""
    n = len(A)
    with ctx:
        M = [row[:] for row in A]
        v = list(b)
        for col in range(n):
            piv = max(range(col, n), key=lambda r: abs(M[r][col]))
            if abs(M[piv][col]) == 0:
                raise SingularMatrixError(abs(M[piv][col]))
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


def _max_order(series):
    """Highest coefficient index available (M+N must not exceed it)."""
    return len(series.coeffs) if series.w0 is None else len(series.coeffs)


def pade(series, M, N, kind="direct"):
    """[M, N] Pade approximant of a ScalarSeries."""
    if M + N > len(series.coeffs) + (0 if series.w0 is None else 0):
        # W_k available for k <= len(coeffs); w0 adds the k=0 slot only
        raise ValueError(
            f"series too short for [{M},{N}]: have order {len(series.coeffs)}")
    ctx = series.ctx
    with ctx:
        if N == 0:
            q2 = DensePoly([1], ctx)
        else:
            A = [[series.coeff(i - j) for j in range(1, N + 1)]
                 for i in range(M + 1, M + N + 1)]
            b = [-series.coeff(i) for i in range(M + 1, M + N + 1)]
            try:
                sol = _ge_solve(A, b, ctx)
            except SingularMatrixError:
                raise SingularMatrixError(
                    f"degenerate Pade table at [{M},{N}]; try [{M-1},{N-1}]"
                ) from None
            q2 = DensePoly([ctx.complex(1)] + sol, ctx)
        q1 = []
        for i in range(M + 1):
            acc = series.coeff(i)
            for j in range(1, min(i, q2.degree) + 1):
                acc += q2.coeffs[j] * series.coeff(i - j)
            q1.append(acc)
        q1 = DensePoly(q1, ctx)
        approx = PadeApproximant(M=M, N=N, Q1=q1, Q2=q2, kind=kind)
        if q2.degree >= 1:
            dq2 = q2.deriv()
            for r in poly_roots(q2, ctx):
                res = None
                if kind == "logarithmic":
                    dv = dq2(r)
                    if abs(dv) > 0:
                        res = q1(r) / dv
                approx.poles.append(Pole(value=r, kind=kind, order=(M, N),
                                         residue=res))
        if q1.degree >= 1 and not q1.is_zero():
            approx.zeros = poly_roots(q1, ctx)
        return approx


def log_series(series):
    """(d/d eps) log(W/eps^{k0}) as a ScalarSeries (with constant term)."""
    ctx = series.ctx
    with ctx:
        scale = max((abs(series.coeff(k)) for k in
                     range(0, len(series.coeffs) + 1)), default=0)
        if scale == 0:
            raise ValueError("series is numerically zero; log-Pade undefined")
        tiny = ctx.eps(drop=ctx.digits // 2) * scale
        k0 = None
        for k in range(0, len(series.coeffs) + 1):
            if abs(series.coeff(k)) > tiny:
                k0 = k
                break
        # g = W/eps^{k0}: g_i = W_{k0+i}, g_0 != 0; F = g'/g
        n_g = len(series.coeffs) + 1 - k0
        g = [series.coeff(k0 + i) for i in range(n_g)]
        dg = [(i + 1) * g[i + 1] for i in range(n_g - 1)]
        F = []
        for i in range(n_g - 1):
            acc = dg[i]
            for j in range(1, i + 1):
                acc -= g[j] * F[i - j]
            F.append(acc / g[0])
        return ScalarSeries(coeffs=F[1:], ctx=ctx, w0=F[0],
                            provenance=series.provenance + "|logderiv")


def log_pade(series, M, N):
    """Pade of the logarithmic derivative; poles approximate branch points,
    residues their branch orders."""
    return pade(log_series(series), M, N, kind="logarithmic")


def filter_spurious(approximants, persist_tol=0.05, froissart_tol=1e-3):
    """Flag poles: genuine iff (a) a pole within relative distance
    `persist_tol` exists in every other supplied order, and (b) no zero of the
    same approximant's numerator lies within froissart_tol*|pole|."""
    if len(approximants) < 2:
        raise ValueError("need approximants at >= 2 orders")
    for a in approximants:
        for p in a.poles:
            p.genuine = False
    for a in approximants:
        for p in a.poles:
            pv = complex(p.value)
            if pv == 0:
                continue
            persists = all(
                any(abs(complex(q.value) - pv) <= persist_tol * abs(pv)
                    for q in other.poles)
                for other in approximants if other is not a)
            if not persists:
                continue
            froissart = any(abs(complex(z) - pv) <= froissart_tol * abs(pv)
                            for z in a.zeros)
            p.genuine = not froissart
    return [p for a in approximants for p in a.poles]


@dataclass
class ThresholdEstimate:
    inner: float
    outer: float
    crossing: float = None      # None when no pole near the positive real axis
    low_confidence: bool = False
    n_genuine: int = 0

    def to_json(self):
        return {
            "inner": repr(self.inner),
            "outer": repr(self.outer),
            "crossing": repr(self.crossing) if self.crossing is not None else None,
            "low_confidence": self.low_confidence,
            "n_genuine": self.n_genuine,
        }


def threshold_estimate(poles, angle_window_deg=15.0):
    """Annulus (10th/90th percentile of genuine-pole moduli) and positive
    real-axis crossing (smallest-|arg| genuine pole, if inside the window)."""
    genuine = [complex(p.value) for p in poles if p.genuine]
    moduli = sorted(abs(z) for z in genuine)
    if not moduli:
        return ThresholdEstimate(inner=float("nan"), outer=float("nan"),
                                 crossing=None, low_confidence=True, n_genuine=0)
    inner = _percentile(moduli, 0.10)
    outer = _percentile(moduli, 0.90)
    best = min(genuine, key=lambda z: abs(math.atan2(z.imag, z.real)))
    ang = abs(math.atan2(best.imag, best.real))
    crossing = abs(best) if ang <= math.radians(angle_window_deg) else None
    return ThresholdEstimate(inner=inner, outer=outer, crossing=crossing,
                             low_confidence=len(moduli) < 8,
                             n_genuine=len(moduli))


def _percentile(sorted_vals, q):
    n = len(sorted_vals)
    if n == 1:
        return sorted_vals[0]
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_vals[lo] * (1 - frac) + sorted_vals[hi] * frac


def diagonal_orders(n_coeffs, levels=3):
    """Order ladder {(N,N), (N-2,N-2), ...} fitting n_coeffs coefficients."""
    N = n_coeffs // 2
    return [(N - 2 * i, N - 2 * i) for i in range(levels) if N - 2 * i >= 1]


def _pade_backoff(series, M, N, kind):
    """Pade at [M,N], stepping down the diagonal past degenerate table blocks
    (exact rational input makes high orders singular)."""
    while M >= 1 and N >= 1:
        try:
            return pade(series, M, N, kind=kind)
        except SingularMatrixError:
            M, N = M - 1, N - 1
    return None


def pole_analysis(series, orders=None, with_log=True):
    """Direct (and log) Pade at an order ladder, then spuriousness filtering;
    returns (flagged pole list, approximants)."""
    if orders is None:
        orders = diagonal_orders(len(series.coeffs))
    approxs = [a for (M, N) in orders
               if (a := _pade_backoff(series, M, N, "direct")) is not None]
    if with_log:
        ls = log_series(series)
        for (M, N) in orders:
            if M + N <= len(ls.coeffs):
                a = _pade_backoff(ls, M, N, "logarithmic")
                if a is not None:
                    approxs.append(a)
    direct = [a for a in approxs if a.kind == "direct"]
    logs = [a for a in approxs if a.kind == "logarithmic"]
    flagged = filter_spurious(direct)
    if len(logs) >= 2:
        flagged += filter_spurious(logs)
    else:
        flagged += [p for a in logs for p in a.poles]
    return flagged, approxs


def write_poles_csv(poles, path):
    with open(path, "w") as f:
        f.write("kind,order,re,im,genuine\n")
        for p in poles:
            z = complex(p.value)
            f.write(f"{p.kind},{p.order[0]}:{p.order[1]},{z.real!r},{z.imag!r},"
                    f"{int(p.genuine)}\n")


def write_threshold_json(est, path, meta=None):
    payload = est.to_json()
    if meta:
        payload["meta"] = meta
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
