"""Vectorized double-double arithmetic and the fast Lindstedt grid engine.

A double-double ("DD") number is an unevaluated sum hi + lo of two float64
values giving ~31-32 significant decimal digits.  Real DD arrays are (hi, lo)
pairs of numpy arrays; complex DD arrays are (re, im) pairs of real DD pairs.
All transcendental constants (FFT twiddles, cohomology divisor reciprocals,
harmonic phase grids) are computed in gmpy2 at full context precision and
split into DD, so the hot loops need only +, -, *.

This backend exists because the 4D Lindstedt runs (order 128, 256x256 grids,
18 series) are far too slow with object-array bignum arithmetic on one core;
the gmpy2 engine remains the reference implementation and the two are
cross-checked in the test suite.
"""
import numpy as np

_SPLIT = 134217729.0  # 2^27 + 1, Dekker splitting constant


# -- scalar-free, vectorized double-double kernels ---------------------------

def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    t = _SPLIT * a
    hi = t - (t - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def dd_add(a, b):
    sh, sl = _two_sum(a[0], b[0])
    th, tl = _two_sum(a[1], b[1])
    sl = sl + th
    sh, sl = _quick_two_sum(sh, sl)
    sl = sl + tl
    return _quick_two_sum(sh, sl)


def dd_neg(a):
    return (-a[0], -a[1])


def dd_sub(a, b):
    return dd_add(a, dd_neg(b))


def dd_mul(a, b):
    p, e = _two_prod(a[0], b[0])
    e = e + (a[0] * b[1] + a[1] * b[0])
    return _quick_two_sum(p, e)


def dd_mul_pow2(a, f):
    """Multiply by an exact power of two; exact, no renormalization needed."""
    return (a[0] * f, a[1] * f)


def dd_mul_float(a, f):
    """Multiply a DD array by a plain float64 scalar/array, correctly rounded."""
    p, e = _two_prod(a[0], f)
    e = e + a[1] * f
    return _quick_two_sum(p, e)


def cdd_mul_float(a, f):
    return (dd_mul_float(a[0], f), dd_mul_float(a[1], f))


def dd_zero(shape):
    return (np.zeros(shape), np.zeros(shape))


def dd_sum(a):
    """Sum all elements of a real DD array, pairwise in DD."""
    h, l = np.ravel(a[0]), np.ravel(a[1])
    while h.size > 1:
        n = h.size
        if n & 1:
            h = np.append(h, 0.0)
            l = np.append(l, 0.0)
            n += 1
        h, l = dd_add((h[0::2], l[0::2]), (h[1::2], l[1::2]))
    return h[0], l[0]


# complex DD: c = (re_pair, im_pair)

def cdd_add(a, b):
    return (dd_add(a[0], b[0]), dd_add(a[1], b[1]))


def cdd_sub(a, b):
    return (dd_sub(a[0], b[0]), dd_sub(a[1], b[1]))


def cdd_mul(a, b):
    re = dd_sub(dd_mul(a[0], b[0]), dd_mul(a[1], b[1]))
    im = dd_add(dd_mul(a[0], b[1]), dd_mul(a[1], b[0]))
    return (re, im)


def cdd_mul_real(r, b):
    """real DD * complex DD."""
    return (dd_mul(r, b[0]), dd_mul(r, b[1]))


def cdd_mul_i(a):
    """Multiply by the imaginary unit."""
    return (dd_neg(a[1]), a[0])


def cdd_conj(a):
    return (a[0], dd_neg(a[1]))


def cdd_zero(shape):
    return (dd_zero(shape), dd_zero(shape))


def cdd_index(a, idx):
    return ((a[0][0][idx], a[0][1][idx]), (a[1][0][idx], a[1][1][idx]))


def cdd_stack(parts):
    """Concatenate complex DD arrays along the last axis."""
    return tuple(tuple(np.concatenate([p[i][j] for p in parts], axis=-1)
                       for j in range(2)) for i in range(2))


def dd_from_mp(x):
    """Split a gmpy2/mpmath/py float scalar into a DD pair of floats."""
    hi = float(x)
    lo = float(x - hi)
    return hi, lo


def dd_to_float(a):
    return a[0] + a[1]


def cdd_scalar(re_mp, im_mp):
    rh, rl = dd_from_mp(re_mp)
    ih, il = dd_from_mp(im_mp)
    return ((np.float64(rh), np.float64(rl)), (np.float64(ih), np.float64(il)))


# -- FFT ---------------------------------------------------------------------

class DDFFT:
    """Radix-2 complex FFT in DD along the last axis, batched over leading
    axes.  Twiddles are seeded from gmpy2 at context precision."""

    def __init__(self, n, ctx):
        self.n = n
        with ctx:
            tw = [ctx.exp_i(-ctx.two_pi * k / n) for k in range(n // 2)]
        wr = np.array([dd_from_mp(t.real) for t in tw])
        wi = np.array([dd_from_mp(t.imag) for t in tw])
        self.w = ((wr[:, 0], wr[:, 1]), (wi[:, 0], wi[:, 1]))
        idx = np.arange(n)
        rev = np.zeros(n, dtype=int)
        bits = n.bit_length() - 1
        for b in range(bits):
            rev |= ((idx >> b) & 1) << (bits - 1 - b)
        self.rev = rev

    def transform(self, x, sign=-1):
        """x: complex DD array (..., n). sign=-1 forward (e^{-i}), +1 inverse
        (unscaled synthesis)."""
        n = self.n
        x = cdd_index(x, (Ellipsis, self.rev))
        L = 2
        while L <= n:
            half = L // 2
            step = n // L
            shape = x[0][0].shape[:-1] + (n // L, L)
            xr = tuple(tuple(c.reshape(shape) for c in p) for p in x)
            even = cdd_index(xr, (Ellipsis, slice(0, half)))
            odd = cdd_index(xr, (Ellipsis, slice(half, L)))
            w = cdd_index(self.w, (slice(0, n // 2, step),))
            if sign > 0:
                w = cdd_conj(w)
            t = cdd_mul(w, odd)
            a = cdd_add(even, t)
            b = cdd_sub(even, t)
            x = cdd_stack([a, b])
            flat = x[0][0].shape[:-2] + (n,)
            x = tuple(tuple(c.reshape(flat) for c in p) for p in x)
            L <<= 1
        return x

    def transform_axis(self, x, axis, sign=-1):
        if axis in (-1, x[0][0].ndim - 1):
            return self.transform(x, sign)
        xm = tuple(tuple(np.ascontiguousarray(np.moveaxis(c, axis, -1))
                         for c in p) for p in x)
        xm = self.transform(xm, sign)
        return tuple(tuple(np.ascontiguousarray(np.moveaxis(c, -1, axis))
                           for c in p) for p in xm)


# -- Lindstedt engine --------------------------------------------------------

class DDEngine:
    """Drop-in alternative to lindstedt.GmpEngine on the DD backend.

    Grid size is the smallest power of two above 2*order_cap*kpot + 1 per
    axis, which keeps every pointwise product alias-free through the stated
    order cap (order-j data has exact bandwidth <= j*kpot).
    """

    def __init__(self, spec, omega, ctx, order_cap, psibar=None):
        from .lindstedt import cohomology_divisor, DivisorUnderflow  # cycle-safe
        self.spec = spec
        self.ctx = ctx
        self.d = spec.d
        self.omega = omega
        kpot = spec.potential.max_harmonic
        self.kpot = kpot
        G = 1 << max(2, (2 * order_cap * kpot + 1).bit_length())
        self.G = G
        self.shape = (G,) * self.d
        self.fft = DDFFT(G, ctx)
        self.psibar = psibar
        # signed mode numbers in FFT layout
        m1 = np.where(np.arange(G) < G // 2, np.arange(G), np.arange(G) - G)
        if self.d == 1:
            self.kgrids = [m1]
        else:
            self.kgrids = [m1[:, None] + 0 * m1[None, :],
                           0 * m1[:, None] + m1[None, :]]
        with ctx:
            # divisor reciprocal tables per component
            e1 = ctx.exp_i(ctx.two_pi * omega[0])
            base = [e1]
            if self.d == 2:
                base.append(ctx.exp_i(ctx.two_pi * omega[1]))
            floor = ctx.real(10) ** (-(ctx.digits // 2))
            self.recip = []
            for lam in spec.lam:
                li = ctx.real(lam)
                rr = np.zeros(self.shape)
                rl = np.zeros(self.shape)
                ir = np.zeros(self.shape)
                il = np.zeros(self.shape)
                it = np.nditer(rr, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    k = tuple(int(self.kgrids[a][idx]) for a in range(self.d))
                    if all(ki == 0 for ki in k):
                        continue
                    e = base[0] ** k[0]
                    if self.d == 2:
                        e = e * base[1] ** k[1]
                    dv = e - (1 + li) + li / e
                    if abs(dv) < floor:
                        raise DivisorUnderflow(k, abs(dv))
                    r = 1 / dv
                    rr[idx], rl[idx] = dd_from_mp(r.real)
                    ir[idx], il[idx] = dd_from_mp(r.imag)
                self.recip.append(((rr, rl), (ir, il)))
            # harmonic phase grids and chain registry
            self.terms = []
            keys = set()
            gamma = ctx.real(spec.potential.gamma)
            for comp in spec.potential.harmonics():
                rows = []
                for k, (re, im, gpow) in comp:
                    kvec = tuple(k)
                    amp = ctx.complex(ctx.real(re), ctx.real(im)) * gamma ** gpow
                    rows.append((kvec, cdd_scalar(amp.real, amp.imag),
                                 self._harmonic_grid(kvec)))
                    keys.add(kvec)
                self.terms.append(rows)
            self._chain_keys = sorted(keys)
            # point-evaluation phase table e^{i k.psibar}
            if psibar is not None:
                self.eval_table = self._phase_table(psibar)
            else:
                self.eval_table = None
        self.chains = {k: [self._ones()] for k in self._chain_keys}
        self.cdot = {k: [] for k in self._chain_keys}
        self.mu = []
        self.point_series = [[] for _ in range(self.d)]
        self.p_hat = []          # coefficient grids, only if keep_coeffs
        self.keep_coeffs = False

    # -- tables -------------------------------------------------------------
    def _unit_circle(self):
        ctx, G = self.ctx, self.G
        with ctx:
            return [ctx.exp_i(ctx.two_pi * i / G) for i in range(G)]

    def _harmonic_grid(self, kvec):
        G = self.G
        unit = getattr(self, "_unit", None)
        if unit is None:
            unit = self._unit_circle()
            self._unit = unit
        idx = np.zeros(self.shape, dtype=int)
        for a, ka in enumerate(kvec):
            if ka:
                ax = np.arange(G) * ka
                sh = [1] * self.d
                sh[a] = G
                idx = idx + ax.reshape(sh)
        idx %= G
        re = np.array([dd_from_mp(u.real) for u in unit])
        im = np.array([dd_from_mp(u.imag) for u in unit])
        return ((re[idx, 0], re[idx, 1]), (im[idx, 0], im[idx, 1]))

    def _phase_table(self, psibar):
        ctx, G = self.ctx, self.G
        with ctx:
            ps = [ctx.real(p) for p in (psibar if self.d == 2 else (psibar,))]
            rr = np.zeros(self.shape)
            rl = np.zeros(self.shape)
            ir = np.zeros(self.shape)
            il = np.zeros(self.shape)
            # e^{i k.psibar} built from per-axis power tables
            pows = []
            for a in range(self.d):
                e = ctx.exp_i(ps[a])
                tab = {}
                for m in range(-(G // 2), G // 2):
                    tab[m] = e ** m
                pows.append(tab)
            it = np.nditer(rr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                v = ctx.complex(1)
                for a in range(self.d):
                    v *= pows[a][int(self.kgrids[a][idx])]
                rr[idx], rl[idx] = dd_from_mp(v.real)
                ir[idx], il[idx] = dd_from_mp(v.imag)
            return ((rr, rl), (ir, il))

    def _ones(self):
        return ((np.ones(self.shape), np.zeros(self.shape)),
                (np.zeros(self.shape), np.zeros(self.shape)))

    def _band_mask(self, band):
        m = np.ones(self.shape)
        for a in range(self.d):
            m = m * (np.abs(self.kgrids[a]) <= band)
        return m

    # -- recursion ----------------------------------------------------------
    def extend_to(self, n):
        while len(self.mu) < n:
            self._one_order()

    def _one_order(self):
        j = len(self.mu) + 1
        m = j - 1
        # advance chains to index m: E[m] = (i/m) sum_h c_h E[m-h]
        for kvec in self._chain_keys:
            chain = self.chains[kvec]
            if m >= 1 and len(chain) == m:
                cd = self.cdot[kvec]
                acc = None
                for h in range(1, m + 1):
                    t = cdd_mul_real(cd[h - 1], chain[m - h])
                    acc = t if acc is None else cdd_add(acc, t)
                inv_m = self._dd_inv_int(m)
                acc = cdd_mul_i(acc)
                chain.append((dd_mul(acc[0], inv_m), dd_mul(acc[1], inv_m)))
        new_p = []
        scale = 1.0 / (self.G ** self.d)   # exact power of two
        mask = self._band_mask(min(j * self.kpot, self.G // 2))
        mus = []
        hats = []
        for i, rows in enumerate(self.terms):
            v = None
            for kvec, amp, grid in rows:
                t = cdd_mul(grid, self.chains[kvec][m])
                t = cdd_mul(amp, t)
                v = t if v is None else cdd_add(v, t)
            # V is real: the listed harmonics are half of a conjugate pair
            vr = dd_mul_pow2(v[0], 2.0)
            eta = self._fft_all((vr, dd_zero(self.shape)), sign=-1)
            z = (0,) * self.d
            mus.append((-eta[0][0][z] * scale, -eta[0][1][z] * scale))
            ph = cdd_mul(eta, self.recip[i])
            ph = tuple(tuple(c * mask for c in p) for p in ph)
            hats.append(ph)
            if self.eval_table is not None:
                dot = cdd_mul(ph, self.eval_table)
                sr = dd_sum(dot[0])
                si = dd_sum(dot[1])
                self.point_series[i].append(
                    (dd_mul_pow2(sr, scale), dd_mul_pow2(si, scale)))
            pg = self._fft_all(ph, sign=+1)
            new_p.append(dd_mul_pow2(pg[0], scale))   # real part
        self.mu.append(tuple(mus))
        if self.keep_coeffs:
            self.p_hat.append(tuple(
                tuple(tuple(c * scale for c in p) for p in ph) for ph in hats))
        # chain source terms for this order: j*(k.P_j)
        for kvec in self._chain_keys:
            acc = None
            for ki, pg in zip(kvec, new_p):
                if ki:
                    t = dd_mul_float(pg, float(ki))
                    acc = t if acc is None else dd_add(acc, t)
            if acc is None:
                acc = dd_zero(self.shape)
            self.cdot[kvec].append(dd_mul_float(acc, float(j)))

    def _dd_inv_int(self, m):
        """1/m as a DD scalar pair."""
        with self.ctx:
            return dd_from_mp(self.ctx.real(1) / m)

    def _fft_all(self, x, sign):
        for axis in range(self.d):
            x = self.fft.transform_axis(x, axis, sign)
        return x

    # -- extraction ---------------------------------------------------------
    def point_values(self, psibar=None):
        """Scalar series u_j(psibar) per component as gmpy2 complex values."""
        ctx = self.ctx
        with ctx:
            out = []
            for comp in self.point_series:
                vals = []
                for (rh, rl), (ih, il) in comp:
                    vals.append(ctx.complex(ctx.real(float(rh)) + ctx.real(float(rl)),
                                            ctx.real(float(ih)) + ctx.real(float(il))))
                out.append(vals)
            return out

    def mu_values(self):
        ctx = self.ctx
        with ctx:
            return [tuple(ctx.real(h) + ctx.real(l) for h, l in m)
                    for m in self.mu]

    def coeffs_at(self, j):
        """TrigPoly components of P_j (requires keep_coeffs=True)."""
        from .lindstedt import TrigPoly
        if not self.keep_coeffs:
            raise RuntimeError("engine was run without keep_coeffs")
        ctx = self.ctx
        band = min(j * self.kpot, self.G // 2)
        out = []
        with ctx:
            for ph in self.p_hat[j - 1]:
                cs = {}
                it = np.nditer(ph[0][0], flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    k = tuple(int(self.kgrids[a][idx]) for a in range(self.d))
                    if all(ki == 0 for ki in k) or any(abs(ki) > band for ki in k):
                        continue
                    re = ctx.real(ph[0][0][idx]) + ctx.real(ph[0][1][idx])
                    im = ctx.real(ph[1][0][idx]) + ctx.real(ph[1][1][idx])
                    c = ctx.complex(re, im)
                    if abs(c) > ctx.real(1e-40):
                        cs[k] = c
                out.append(TrigPoly(self.d, cs, ctx))
        return tuple(out)
