"""Order-by-order power-series solution of the hull-function equation.

The torus is written as xi = psi + P(psi) with P = sum_j P_j eps^j and drift
mu = sum_j mu_j eps^j.  Order 0 gives mu0_i = 2*pi*(1-lam_i)*omega_i; order
j >= 1 is the cohomology equation

    P_j(psi + 2*pi*omega) - (1+lam) P_j(psi) + lam P_j(psi - 2*pi*omega)
        - mu_j = V_{j-1}(psi)

solved mode-wise, with V_{j-1} the eps^{j-1} coefficient of V(psi + P(psi)).
Those coefficients come from expanding E_k = exp(i k.P(eps)) per distinct
potential harmonic k via the derivative recursion

    E_k[0] = 1,   E_k[m] = (i/m) * sum_{h=1}^{m} h (k.P_h) E_k[m-h],

all products taken pointwise on an alias-free grid.
"""
import math
from dataclasses import dataclass

import gmpy2
import numpy as np

from . import ddcore
from .frequencies import AlgebraicFrequency, FrequencyVector2D
from .maps import MapSpec, integrable_drift
from .numerics import fft
from .precision import Context


class DivisorUnderflow(ArithmeticError):
    def __init__(self, k, magnitude):
        super().__init__(f"near-resonant cohomology divisor at k={k}: |d|={magnitude}")
        self.k = k


# ---------------------------------------------------------------------------
# TrigPoly
# ---------------------------------------------------------------------------

class TrigPoly:
    """Real periodic function on T^1 or T^2 as complex Fourier coefficients."""

    def __init__(self, d, coeffs, ctx):
        self.d = d
        self.ctx = ctx
        self.coeffs = {}
        for k, c in coeffs.items():
            key = (k,) if isinstance(k, int) else tuple(k)
            if len(key) != d:
                raise ValueError(f"mode {key} has wrong dimension")
            c = c if isinstance(c, gmpy2.mpc) else ctx.complex(c)
            if c != 0:
                self.coeffs[key] = c

    @classmethod
    def zero(cls, d, ctx):
        return cls(d, {}, ctx)

    def average(self):
        z = (0,) * self.d
        return self.coeffs.get(z, self.ctx.complex(0))

    def drop_average(self):
        out = dict(self.coeffs)
        out.pop((0,) * self.d, None)
        return TrigPoly(self.d, out, self.ctx)

    def value(self, psi):
        """Evaluate at a point (scalar or d-tuple of reals)."""
        if isinstance(psi, (int, float, gmpy2.mpfr)):
            psi = (psi,)
        ctx = self.ctx
        with ctx:
            acc = ctx.complex(0)
            for k, c in self.coeffs.items():
                phase = sum(ki * ctx.real(pi_) for ki, pi_ in zip(k, psi))
                acc += c * ctx.exp_i(phase)
            return acc

    def shift(self, delta):
        """Compose with psi -> psi + delta (a d-tuple): multiply modes by
        e^{i k.delta}."""
        ctx = self.ctx
        with ctx:
            out = {}
            for k, c in self.coeffs.items():
                phase = sum(ki * ctx.real(di) for ki, di in zip(k, delta))
                out[k] = c * ctx.exp_i(phase)
        return TrigPoly(self.d, out, ctx)

    def __add__(self, other):
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, self.ctx.complex(0)) + c
        return TrigPoly(self.d, out, self.ctx)

    def scale(self, a):
        with self.ctx:
            return TrigPoly(self.d, {k: c * a for k, c in self.coeffs.items()},
                            self.ctx)

    def mul(self, other):
        """Exact product by coefficient convolution (small polys only)."""
        ctx = self.ctx
        with ctx:
            out = {}
            for k1, c1 in self.coeffs.items():
                for k2, c2 in other.coeffs.items():
                    k = tuple(a + b for a, b in zip(k1, k2))
                    out[k] = out.get(k, ctx.complex(0)) + c1 * c2
        return TrigPoly(self.d, out, ctx)

    def max_imag_on_grid(self, n=64):
        ctx = self.ctx
        with ctx:
            worst = ctx.real(0)
            pts = [ctx.two_pi * i / n for i in range(n)]
            for i in range(n):
                psi = (pts[i],) if self.d == 1 else (pts[i], pts[(7 * i) % n])
                worst = max(worst, abs(self.value(psi).imag))
            return worst

    def bandwidth(self):
        if not self.coeffs:
            return 0
        return max(max(abs(ki) for ki in k) for k in self.coeffs)


def harmonic(d, k, ctx):
    """e^{i k.psi} as a TrigPoly."""
    return TrigPoly(d, {tuple(k) if d > 1 else (k,): ctx.complex(1)}, ctx)


# ---------------------------------------------------------------------------
# cohomology equation
# ---------------------------------------------------------------------------

def cohomology_divisor(lam, omega, k, ctx):
    """e^{2 pi i omega.k} - (1+lam) + lam e^{-2 pi i omega.k}."""
    with ctx:
        phase = ctx.two_pi * sum(w * ki for w, ki in zip(omega, k))
        e = ctx.exp_i(phase)
        return e - (1 + lam) + lam / e


def cohomology_solve(lam, omega, eta, ctx=None):
    """Solve L_{lam,omega} g - mu = eta; returns (g zero-average, mu)."""
    ctx = ctx or eta.ctx
    omega = _omega_values(omega, eta.d, ctx)
    with ctx:
        mu = -eta.average().real
        floor = ctx.real(10) ** (-(ctx.digits // 2))
        out = {}
        for k, c in eta.coeffs.items():
            if all(ki == 0 for ki in k):
                continue
            d = cohomology_divisor(ctx.real(lam), omega, k, ctx)
            if abs(d) < floor:
                raise DivisorUnderflow(k, abs(d))
            out[k] = c / d
    return TrigPoly(eta.d, out, ctx), mu


def _omega_values(omega, d, ctx):
    if isinstance(omega, FrequencyVector2D):
        return omega.value(ctx)
    if isinstance(omega, AlgebraicFrequency):
        return (omega.value(ctx),)
    if isinstance(omega, (int, float, gmpy2.mpfr, str)):
        return (ctx.real(omega),)
    return tuple(ctx.real(w) for w in omega)


# ---------------------------------------------------------------------------
# exponential-coefficient recursion (TrigPoly-exact; small orders)
# ---------------------------------------------------------------------------

def exp_coefficients(k, p_series, ctx):
    """b_{0..j,k} for e^{i k.(psi + P)}; p_series is [P_1..P_j], each a tuple
    of TrigPoly components (one per angle).  Exact convolution arithmetic."""
    if p_series and isinstance(p_series[0], TrigPoly):
        p_series = [(p,) for p in p_series]
    d = len(k) if hasattr(k, "__len__") else 1
    kvec = tuple(k) if d > 1 else (k,)
    with ctx:
        ii = ctx.complex(0, 1)
        # k.P_h as TrigPoly
        kdot = []
        for comps in p_series:
            acc = TrigPoly.zero(d, ctx)
            for ki, comp in zip(kvec, comps):
                if ki:
                    acc = acc + comp.scale(ctx.real(ki))
            kdot.append(acc)
        bs = [harmonic(d, kvec if d > 1 else kvec[0], ctx)]
        for j in range(len(p_series)):
            acc = TrigPoly.zero(d, ctx)
            for h in range(j + 1):
                acc = acc + kdot[h].mul(bs[j - h]).scale(ctx.real(h + 1))
            bs.append(acc.scale(ii / (j + 1)))
        return bs


# ---------------------------------------------------------------------------
# grid engine (gmpy2 backend)
# ---------------------------------------------------------------------------

def _next_pow2(n):
    return 1 << max(1, (n - 1)).bit_length()


class GmpEngine:
    """Alias-free Lindstedt grid engine over gmpy2 scalars (any d in {1,2})."""

    def __init__(self, spec, omega, ctx, order_cap):
        self.spec = spec
        self.ctx = ctx
        self.d = spec.d
        self.omega = _omega_values(omega, self.d, ctx)
        kpot = spec.potential.max_harmonic
        self.kpot = kpot
        self.G = _next_pow2(2 * order_cap * kpot + 2)
        self._setup_tables()
        self.p_grids = []        # per order: tuple of real object grids
        self.mu = []             # per order: tuple of mpfr
        self.chains = {}         # kvec -> list of complex grids E_k[m]
        self.cdot = {}           # kvec -> list of real grids m*(k.P_m)

    # -- infrastructure ------------------------------------------------------
    def _setup_tables(self):
        ctx, G, d = self.ctx, self.G, self.d
        with ctx:
            shape = (G,) * d
            base = [ctx.exp_i(ctx.two_pi * i / G) for i in range(G)]
            self._unit = base
            # signed mode numbers in FFT order
            modes = [i if i < G // 2 else i - G for i in range(G)]
            self.modes = modes
            lam = [ctx.real(l) for l in self.spec.lam]
            floor = ctx.real(10) ** (-(ctx.digits // 2))
            self.recip = []
            for li in lam:
                r = np.empty(shape, dtype=object)
                for idx in np.ndindex(shape):
                    k = tuple(modes[i] for i in idx)
                    if all(ki == 0 for ki in k):
                        r[idx] = ctx.complex(0)
                        continue
                    dv = cohomology_divisor(li, self.omega, k, ctx)
                    if abs(dv) < floor:
                        raise DivisorUnderflow(k, abs(dv))
                    r[idx] = 1 / dv
                self.recip.append(r)
            # harmonic phase grids and amplitudes per force component
            self.terms = []      # per component: list of (kvec, amp mpc, grid)
            self._chain_keys = set()
            gamma = ctx.real(self.spec.potential.gamma)
            for comp in self.spec.potential.harmonics():
                rows = []
                for k, (re, im, gpow) in comp:
                    kvec = tuple(k)
                    amp = ctx.complex(re, im) * gamma ** gpow
                    grid = self._harmonic_grid(kvec)
                    rows.append((kvec, amp, grid))
                    self._chain_keys.add(kvec)
                self.terms.append(rows)

    def _harmonic_grid(self, kvec):
        ctx, G, d = self.ctx, self.G, self.d
        with ctx:
            if d == 1:
                return np.array([self._unit[(kvec[0] * i) % G] for i in range(G)],
                                dtype=object)
            out = np.empty((G, G), dtype=object)
            for i in range(G):
                for j in range(G):
                    out[i, j] = self._unit[(kvec[0] * i + kvec[1] * j) % G]
            return out

    def _fft_grid(self, grid, inverse=False):
        ctx = self.ctx
        if self.d == 1:
            return np.array(fft(list(grid), inverse=inverse, ctx=ctx), dtype=object)
        out = np.empty_like(grid)
        for i in range(grid.shape[0]):
            out[i, :] = fft(list(grid[i, :]), inverse=inverse, ctx=ctx)
        for j in range(grid.shape[1]):
            out[:, j] = fft(list(out[:, j]), inverse=inverse, ctx=ctx)
        return out

    # -- the order recursion ---------------------------------------------------
    def extend_to(self, n):
        while len(self.p_grids) < n:
            self._one_order()

    def _one_order(self):
        ctx = self.ctx
        j = len(self.p_grids) + 1
        with ctx:
            ii = ctx.complex(0, 1)
            # advance every chain to index j-1
            for kvec in sorted(self._chain_keys):
                chain = self.chains.setdefault(
                    kvec, [np.full((self.G,) * self.d, ctx.complex(1), dtype=object)])
                cdot = self.cdot.setdefault(kvec, [])
                m = j - 1
                if m >= 1 and len(chain) == m:
                    acc = None
                    for h in range(1, m + 1):
                        t = cdot[h - 1] * chain[m - h]
                        acc = t if acc is None else acc + t
                    chain.append(acc * (ii / m))
            # V_{j-1} per component: sum over listed harmonics + conjugates
            new_p, new_mu = [], []
            for i, rows in enumerate(self.terms):
                v = None
                for kvec, amp, grid in rows:
                    t = amp * (grid * self.chains[kvec][j - 1])
                    v = t if v is None else v + t
                v = np.array([2 * z.real for z in v.ravel()],
                             dtype=object).reshape(v.shape)
                eta = self._fft_grid(v, inverse=False)
                scale = ctx.real(1) / (self.G ** self.d)
                mu = -(eta[(0,) * self.d] * scale).real
                ph = eta * self.recip[i]
                ph = self._mask(ph, j * self.kpot)
                pg = self._fft_grid(ph, inverse=True)
                # analysis/synthesis scaling cancels: forward had no 1/G^d,
                # inverse fft applied 1/G^d
                pg = np.array([z.real for z in pg.ravel()],
                              dtype=object).reshape(pg.shape)
                new_p.append(pg)
                new_mu.append(mu)
            self.p_grids.append(tuple(new_p))
            self.mu.append(tuple(new_mu))
            # chain source terms for this order: h*(k.P_h)
            for kvec in self._chain_keys:
                acc = None
                for ki, pg in zip(kvec, new_p):
                    if ki:
                        t = pg * ctx.real(ki)
                        acc = t if acc is None else acc + t
                if acc is None:
                    acc = np.full((self.G,) * self.d, ctx.real(0), dtype=object)
                self.cdot[kvec].append(acc * ctx.real(j))

    def _mask(self, coeff_grid, band):
        if band >= self.G // 2:
            return coeff_grid
        out = coeff_grid.copy()
        zero = self.ctx.complex(0)
        for idx in np.ndindex(out.shape):
            if any(abs(self.modes[i]) > band for i in idx):
                out[idx] = zero
        return out

    # -- extraction -------------------------------------------------------------
    def mu_values(self):
        return list(self.mu)

    def coeffs_at(self, j):
        """TrigPoly coefficients of P_j components (1-indexed order)."""
        ctx = self.ctx
        band = min(j * self.kpot, self.G // 2 - 1)
        out = []
        with ctx:
            scale = ctx.real(1) / (self.G ** self.d)
            tiny = ctx.eps(drop=6)
            for pg in self.p_grids[j - 1]:
                chat = self._fft_grid(pg, inverse=False)
                cs = {}
                for idx in np.ndindex(chat.shape):
                    k = tuple(self.modes[i] for i in idx)
                    if any(abs(ki) > band for ki in k) or all(ki == 0 for ki in k):
                        continue
                    c = chat[idx] * scale
                    if abs(c) > tiny:
                        cs[k] = c
                out.append(TrigPoly(self.d, cs, ctx))
        return tuple(out)

    def point_values(self, psibar):
        """u_j(psibar) per component for all computed orders, by trig
        interpolation from the grids (exact for trig polynomials)."""
        ctx = self.ctx
        out = [[] for _ in range(self.d)]
        with ctx:
            for j in range(1, len(self.p_grids) + 1):
                for i, tp in enumerate(self.coeffs_at(j)):
                    out[i].append(tp.value(psibar))
        return out


# ---------------------------------------------------------------------------
# public series object
# ---------------------------------------------------------------------------

@dataclass
class LindstedtSeries:
    spec: MapSpec
    omega: tuple
    ctx: Context
    mu0: tuple
    P: list            # P[j-1] = tuple of TrigPoly (one per angle)
    mu: list           # mu[j-1] = tuple of mpfr
    _engine: object = None

    @property
    def order(self):
        return len(self.P)

    def mu_series(self, i=0):
        """Drift series coefficients [mu0_i, mu1_i, ...]."""
        return [self.mu0[i]] + [m[i] for m in self.mu]


def lindstedt_series(spec, omega, order, ctx=None, backend="gmp"):
    """Compute the Lindstedt series of (spec-family, omega) to given order."""
    ctx = ctx or Context(60)
    om = _omega_values(omega, spec.d, ctx)
    if backend == "gmp":
        eng = GmpEngine(spec, om, ctx, order)
    elif backend == "dd":
        eng = ddcore.DDEngine(spec, om, ctx, order)
        eng.keep_coeffs = True
    else:
        raise ValueError(f"unknown backend {backend!r}")
    eng.extend_to(order)
    with ctx:
        mu0 = tuple(ctx.two_pi * (1 - ctx.real(l)) * w
                    for l, w in zip(spec.lam, om))
    P = [eng.coeffs_at(j) for j in range(1, order + 1)]
    return LindstedtSeries(spec=spec, omega=om, ctx=ctx, mu0=mu0,
                           P=P, mu=eng.mu_values(), _engine=eng)


def extend(series, to_order):
    """Extend a series to a higher order; returns a new snapshot."""
    if to_order <= series.order:
        return series
    eng = series._engine
    if eng is None:
        eng = GmpEngine(series.spec, series.omega, series.ctx, to_order)
    eng.extend_to(to_order)
    P = list(series.P) + [eng.coeffs_at(j)
                          for j in range(series.order + 1, to_order + 1)]
    return LindstedtSeries(spec=series.spec, omega=series.omega, ctx=series.ctx,
                           mu0=series.mu0, P=P, mu=eng.mu_values(), _engine=eng)


def evaluate(series, eps, psi):
    """Horner summation in eps; returns (P(psi) tuple, mu tuple)."""
    ctx = series.ctx
    with ctx:
        e = eps if isinstance(eps, (gmpy2.mpfr, gmpy2.mpc)) else ctx.real(eps)
        d = series.spec.d
        pv = [ctx.complex(0)] * d
        mv = [ctx.real(0)] * d
        for j in range(series.order, 0, -1):
            for i in range(d):
                pv[i] = pv[i] * e + series.P[j - 1][i].value(psi)
                mv[i] = mv[i] * e + series.mu[j - 1][i]
        for i in range(d):
            pv[i] = pv[i] * e
            mv[i] = mv[i] * e + series.mu0[i]
        return tuple(pv), tuple(mv)


def default_psibar(d):
    return 1.0 if d == 1 else (1.0, 1.0)


def radius_estimate(series, psibar=None):
    """Root-test sequence r_n = |u_n(psibar)|^{-1/n} per component, plus the
    mean/min/max of the last quarter of the sequence."""
    d = series.spec.d
    if psibar is None:
        psibar = default_psibar(d)
    ctx = series.ctx
    out = []
    with ctx:
        for i in range(d):
            rs, skipped = [], []
            for j in range(1, series.order + 1):
                val = abs(series.P[j - 1][i].value(psibar))
                if val == 0:
                    skipped.append(j)
                    rs.append(None)
                    continue
                rs.append(float(val ** (ctx.real(-1) / j)))
            tail = [r for r in rs[-(max(1, series.order // 4)):] if r is not None]
            est = sum(tail) / len(tail) if tail else float("nan")
            out.append({
                "sequence": rs, "estimate": est,
                "window_min": min(tail) if tail else float("nan"),
                "window_max": max(tail) if tail else float("nan"),
                "skipped": skipped,
            })
    return out


# ---------------------------------------------------------------------------
# series store (text format, round-trip exact)
# ---------------------------------------------------------------------------

def save_series(series, path):
    from .maps import spec_to_config
    ctx = series.ctx
    lines = ["torusbreak-series v1"]
    for k, v in sorted(spec_to_config(series.spec).items()):
        lines.append(f"spec {k} {v}")
    for i, w in enumerate(series.omega):
        lines.append(f"omega{i + 1} {ctx.to_str(w)}")
    lines.append(f"order {series.order}")
    lines.append(f"digits {ctx.digits}")
    for i, m in enumerate(series.mu0):
        lines.append(f"mu0_{i + 1} {ctx.to_str(m)}")
    for j in range(1, series.order + 1):
        lines.append(f"order-block {j}")
        for i, m in enumerate(series.mu[j - 1]):
            lines.append(f"mu{i + 1} {ctx.to_str(m)}")
        for i, tp in enumerate(series.P[j - 1]):
            for k in sorted(tp.coeffs):
                c = tp.coeffs[k]
                ks = " ".join(str(ki) for ki in k)
                lines.append(f"c{i + 1} {ks} {ctx.to_str(c.real)} {ctx.to_str(c.imag)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_series(path):
    from .maps import spec_from_config
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if lines[0] != "torusbreak-series v1":
        raise ValueError("not a series store file")
    cfg, omega, mu0 = {}, {}, {}
    order = digits = None
    blocks = []
    cur = None
    for ln in lines[1:]:
        parts = ln.split()
        tag = parts[0]
        if tag == "spec":
            cfg[parts[1]] = " ".join(parts[2:])
        elif tag.startswith("omega"):
            omega[int(tag[5:])] = parts[1]
        elif tag == "order":
            order = int(parts[1])
        elif tag == "digits":
            digits = int(parts[1])
        elif tag.startswith("mu0_"):
            mu0[int(tag[4:])] = parts[1]
        elif tag == "order-block":
            cur = {"mu": {}, "coeffs": {}}
            blocks.append(cur)
        elif tag.startswith("mu"):
            cur["mu"][int(tag[2:])] = parts[1]
        elif tag.startswith("c"):
            comp = int(tag[1:])
            k = tuple(int(x) for x in parts[1:-2])
            cur["coeffs"].setdefault(comp, {})[k] = (parts[-2], parts[-1])
        else:
            raise ValueError(f"bad line in series store: {ln!r}")
    ctx = Context(digits)
    spec = spec_from_config(cfg)
    d = spec.d
    om = tuple(ctx.real(omega[i + 1]) for i in range(d))
    m0 = tuple(ctx.real(mu0[i + 1]) for i in range(d))
    P, mu = [], []
    for b in blocks:
        mu.append(tuple(ctx.real(b["mu"][i + 1]) for i in range(d)))
        comps = []
        for i in range(d):
            cs = {k: ctx.complex(ctx.real(re), ctx.real(im))
                  for k, (re, im) in b["coeffs"].get(i + 1, {}).items()}
            comps.append(TrigPoly(d, cs, ctx))
        P.append(tuple(comps))
    return LindstedtSeries(spec=spec, omega=om, ctx=ctx, mu0=m0, P=P, mu=mu)
