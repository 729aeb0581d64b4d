"""Spectral Newton solver for the torus invariance equation f_mu(K) = K(T_w)
with T_w(psi) = psi + 2*pi*omega, plus eps-continuation with Sobolev-seminorm
blow-up detection.

Works for the 2D map (d = 1 angle) and the 4D map with equal conformal
factors (d = 2).  The Newton step uses automatic reducibility: the matrix
M = [DK | J^{-1} DK N] with N = (DK^T DK)^{-1} conjugates the linearized
invariance equation into constant-coefficient difference equations solved
mode-wise in Fourier space.  Everything runs in hardware double precision on
power-of-two grids via numpy FFTs.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import SingularMatrixError, dense_solve
from .precision import DOUBLE

TWO_PI = 2.0 * math.pi


class UnderResolvedError(Exception):
    """Spectral tail above bound; caller should double modes."""


class SolvabilityError(Exception):
    """lambda = 1 cohomology equation with non-zero-average right side."""


def _omega_floats(omega):
    """Accept scalars, tuples, or the frequency objects and return floats."""
    if hasattr(omega, "value"):
        v = omega.value(DOUBLE)
        return (float(v),) if not isinstance(v, tuple) else tuple(float(x) for x in v)
    if hasattr(omega, "__len__"):
        return tuple(float(x) for x in omega)
    return (float(omega),)


@dataclass(frozen=True)
class TorusEmbedding:
    """Invariant-torus parameterization on a regular power-of-two grid.

    Component ordering matches the map: (y, x) for 2D, (y, x, w, z) for 4D.
    `P` stores the periodic parts: actions as-is, angles minus the identity
    (K_x = psi_1 + u, K_z = psi_2 + v with u = P[1], v = P[3])."""
    omega: tuple
    lam: float
    mu: tuple
    eps: float
    P: np.ndarray      # shape (2d, L1[, L2])

    @property
    def d(self):
        return len(self.omega)

    @property
    def grid_shape(self):
        return self.P.shape[1:]

    @classmethod
    def identity(cls, omega, lam, grid_shape):
        """Exact eps = 0 torus: K = (2*pi*w_1, psi_1[, 2*pi*w_2, psi_2]),
        mu = 2*pi*(1 - lam)*omega."""
        omega = _omega_floats(omega)
        d = len(omega)
        if len(grid_shape) != d:
            raise ValueError("grid dimension must match the frequency vector")
        if any(L & (L - 1) for L in grid_shape):
            raise ValueError("grid sizes must be powers of two")
        P = np.zeros((2 * d,) + tuple(grid_shape))
        for i in range(d):
            P[2 * i] = TWO_PI * omega[i]
        mu = tuple(TWO_PI * (1 - lam) * w for w in omega)
        return cls(omega=omega, lam=lam, mu=mu, eps=0.0, P=P)

    def hull(self):
        """Periodic parts (u[, v]) of the angle components."""
        return tuple(self.P[2 * i + 1] for i in range(self.d))

    def angle_coeffs(self):
        """Normalized Fourier coefficients of the angle periodic parts."""
        n = self.P[0].size
        return tuple(np.fft.fftn(self.P[2 * i + 1]) / n for i in range(self.d))


@dataclass
class NewtonReport:
    err_before: float
    err_after: float
    correction: float
    mu: tuple
    iterations: int = 1


@dataclass
class SobolevRecord:
    eps: float
    norms: tuple        # (|u|_2,) for 2D; (K1_par, K2_par, K1_perp, K2_perp) 4D
    L: tuple
    err_inf: float


# -- spectral helpers --------------------------------------------------------

def _modes(shape):
    return [np.fft.fftfreq(L, 1.0 / L) for L in shape]


def _nyquist_mask(shape):
    """True on the self-conjugate Nyquist planes (index L/2 on any axis).

    Mode-wise multiplication by a non-real symbol on these planes breaks the
    Hermitian symmetry of real data, so spectral solves project them out and
    shifts/derivatives use a reality-preserving symbol there.  Tail control
    keeps their content at round-off."""
    m = np.zeros(shape, dtype=bool)
    for l, L in enumerate(shape):
        sl = [slice(None)] * len(shape)
        sl[l] = L // 2
        m[tuple(sl)] = True
    return m


def _shift_factor(shape, delta):
    """Grid of exp(i sum_l k_l delta_l) for composition with T_delta,
    realified on each axis' Nyquist entry to preserve conjugate symmetry."""
    ks = _modes(shape)
    acc = None
    for l, (k, L) in enumerate(zip(ks, shape)):
        sl = [None] * len(shape)
        sl[l] = slice(None)
        term = np.exp(1j * delta[l] * k)
        term[L // 2] = term[L // 2].real
        term = term[tuple(sl)]
        acc = term if acc is None else acc * term
    return acc


def _compose(g, phase):
    """g(psi + delta) for periodic g, given the precomputed phase grid."""
    axes = tuple(range(phase.ndim))
    extra = g.ndim - phase.ndim
    ph = phase.reshape(phase.shape + (1,) * extra)
    return np.real(np.fft.ifftn(np.fft.fftn(g, axes=axes) * ph, axes=axes))


def _deriv(g, axis, shape):
    k = _modes(shape)[axis].copy()
    k[shape[axis] // 2] = 0.0      # odd symbol has no real Nyquist counterpart
    sl = [None] * len(shape)
    sl[axis] = slice(None)
    axes = tuple(range(len(shape)))
    return np.real(np.fft.ifftn(np.fft.fftn(g, axes=axes)
                                * (1j * k)[tuple(sl)], axes=axes))


def _psi_grids(shape):
    axes = [TWO_PI * np.arange(L) / L for L in shape]
    return np.meshgrid(*axes, indexing="ij")


def _symplectic_J(d):
    J = np.zeros((2 * d, 2 * d))
    for i in range(d):
        J[2 * i, 2 * i + 1] = 1.0     # dy ^ dx pairing, ordering (y, x)
        J[2 * i + 1, 2 * i] = -1.0
    return J


def _dmu_f(d):
    """D_mu f: each factor's action and angle rows respond to its own drift."""
    A = np.zeros((2 * d, d))
    for i in range(d):
        A[2 * i, i] = 1.0
        A[2 * i + 1, i] = 1.0
    return A


def _k_values(emb):
    """Full K on the grid (identity added to angle components)."""
    psis = _psi_grids(emb.grid_shape)
    K = emb.P.copy()
    for i in range(emb.d):
        K[2 * i + 1] = K[2 * i + 1] + psis[i]
    return K


def _f_of_K(emb, spec, K):
    """Map image of K on the grid, using the embedding's current drift
    (the drift is a solver unknown; spec.mu is ignored here)."""
    d = emb.d
    eps = spec.epsilon
    out = np.empty_like(K)
    if d == 1:
        V = (spec.potential.force(K[1]),)
    else:
        V = spec.potential.force(K[1], K[3])
    for i in range(d):
        y1 = spec.lam[i] * K[2 * i] + emb.mu[i] + eps * V[i]
        out[2 * i] = y1
        out[2 * i + 1] = K[2 * i + 1] + y1
    return out


def _df_of_K(emb, spec, K):
    """Df along the torus: shape (*grid, 2d, 2d), ordering (y, x[, w, z])."""
    d = emb.d
    eps = spec.epsilon
    shape = K.shape[1:]
    Df = np.zeros(shape + (2 * d, 2 * d))
    if d == 1:
        c = eps * spec.potential.dforce(K[1])
        lam = spec.lam[0]
        Df[..., 0, 0] = lam
        Df[..., 0, 1] = c
        Df[..., 1, 0] = lam
        Df[..., 1, 1] = 1 + c
        return Df
    (d11, d12), (d21, d22) = spec.potential.dforce(K[1], K[3])
    l1, l2 = spec.lam
    e11, e12, e21, e22 = eps * d11, eps * d12, eps * d21, eps * d22
    Df[..., 0, 0] = l1
    Df[..., 0, 1] = e11
    Df[..., 0, 3] = e12
    Df[..., 1, 0] = l1
    Df[..., 1, 1] = 1 + e11
    Df[..., 1, 3] = e12
    Df[..., 2, 1] = e21
    Df[..., 2, 2] = l2
    Df[..., 2, 3] = e22
    Df[..., 3, 1] = e21
    Df[..., 3, 2] = l2
    Df[..., 3, 3] = 1 + e22
    return Df


def _pad_to(g, fine):
    """Exact trigonometric interpolation of g onto the finer grid."""
    shape = g.shape
    h = np.fft.fftn(g) / g.size
    H = np.zeros(fine, dtype=complex)
    idx = np.ix_(*[_embed_indices(L, Lf) for L, Lf in zip(shape, fine)])
    src = np.ix_(*[np.concatenate([np.arange(0, L // 2),
                                   np.arange(L // 2, L)]) for L in shape])
    H[idx] = h[src]
    return np.real(np.fft.ifftn(H) * H.size)


def _truncate_to(g, shape):
    """Galerkin projection of a fine-grid function onto the coarse mode set."""
    fine = g.shape
    h = np.fft.fftn(g) / g.size
    H = np.zeros(shape, dtype=complex)
    dst = np.ix_(*[np.concatenate([np.arange(0, L // 2),
                                   np.arange(L // 2, L)]) for L in shape])
    src = np.ix_(*[_embed_indices(L, Lf) for L, Lf in zip(shape, fine)])
    H[dst] = h[src]
    H[_nyquist_mask(shape)] = 0.0
    return np.real(np.fft.ifftn(H) * H.size)


def invariance_error(emb, spec):
    """E = f_mu(K) - K(T_w) on the grid; shape (2d, *grid).

    The nonlinearity is evaluated on a 2x zero-padded grid and projected back
    (dealiasing).  Without it, products of strongly near-resonant high modes
    fold onto the Nyquist plane, leak back through the coupling harmonic, get
    re-amplified by the small-divisor solves, and the iteration diverges."""
    shape = emb.grid_shape
    fine = tuple(2 * L for L in shape)
    phase = _shift_factor(shape, [TWO_PI * w for w in emb.omega])
    psis = _psi_grids(fine)
    Kf = np.stack([_pad_to(emb.P[c], fine) for c in range(2 * emb.d)])
    for i in range(emb.d):
        Kf[2 * i + 1] = Kf[2 * i + 1] + psis[i]
    FKf = _f_of_K(emb, spec, Kf)
    E = np.empty_like(emb.P)
    for i in range(emb.d):
        y1 = _truncate_to(FKf[2 * i], shape)
        Py_shift = _compose(emb.P[2 * i], phase)
        Pu_shift = _compose(emb.P[2 * i + 1], phase)
        E[2 * i] = y1 - Py_shift
        # angle: (K_x + y') - (psi + 2*pi*w + u(T_w)); identity parts cancel
        E[2 * i + 1] = (emb.P[2 * i + 1] + y1
                        - TWO_PI * emb.omega[i] - Pu_shift)
    return E


def _band_mask(fine, coarse):
    """True at fine-grid modes inside the open coarse band |k_l| < L_l/2."""
    m = np.ones(fine, dtype=bool)
    for l, (Lf, Lc) in enumerate(zip(fine, coarse)):
        k = _modes(fine)[l]
        keep = np.abs(k) < Lc / 2
        sl = [None] * len(fine)
        sl[l] = slice(None)
        m &= keep[tuple(sl)]
    return m


def _band_limit(g, mask):
    H = np.fft.fftn(g)
    H[~mask] = 0.0
    return np.real(np.fft.ifftn(H))


def cohomology_solve_const(lam, omega, rhs, zero_average_input=False,
                           band=None, div_floor=0.0):
    """Solve lam*B - B(T_w) = -rhs mode-wise: B_k = -r_k/(lam - e^{2 pi i w.k}).

    `rhs` is a real grid array; for lam = 1 the k = 0 mode of B is set to 0 and
    a non-zero-average rhs raises SolvabilityError.  `band` optionally
    restricts the solve to a mode mask (modes outside are zeroed).

    `div_floor` > 0 zeroes solution modes whose divisor is smaller in modulus.
    Near-resonant high modes (|lam - e^{2 pi i w.k}| ~ 1e-4 on fine grids)
    amplify round-off-level defect into O(1e-3) corrections whose quadratic
    feedback diverges; the genuine torus content at such modes is tiny, so
    skipping them leaves a defect of order div * content, far below the Newton
    tolerance."""
    omega = _omega_floats(omega)
    shape = rhs.shape
    ks = _modes(shape)
    acc = np.zeros(shape)
    for l, k in enumerate(ks):
        sl = [None] * len(shape)
        sl[l] = slice(None)
        acc = acc + (TWO_PI * omega[l] * k)[tuple(sl)]
    div = lam - np.exp(1j * acc)
    r = np.fft.fftn(rhs)
    if lam == 1.0:
        avg = abs(r.flat[0]) / rhs.size
        scale = np.max(np.abs(rhs)) + 1e-300
        if not zero_average_input and avg > 1e-10 * scale:
            raise SolvabilityError(
                f"lambda=1 cohomology equation needs zero-average rhs "
                f"(average {avg:.3e})")
        div.flat[0] = 1.0      # placeholder; mode forced to zero below
        B = -r / div
        B.flat[0] = 0.0
    else:
        B = -r / div
    B[_nyquist_mask(shape)] = 0.0
    if div_floor > 0.0:
        B[np.abs(div) < div_floor] = 0.0
    if band is not None:
        B[~band] = 0.0
    return np.real(np.fft.ifftn(B))


def newton_step(emb, spec, div_floor=None):
    """One quadratically-convergent correction of (K, mu).

    Steps: error E; alpha = DK; N = (alpha^T alpha)^{-1}; M = [alpha |
    J^{-1} alpha N]; transform E and D_mu f by M^{-1}(T_w); build the torsion
    S; two lam-cohomology solves; the small average system for (mean W2,
    sigma); the lam=1 solve for W1; update K += M W, mu += sigma; re-center
    the parameterization phase so the hull functions have zero average."""
    if len(set(spec.lam)) != 1:
        raise ValueError("Newton step requires equal conformal factors")
    d = emb.d
    lam = spec.lam[0]
    shape_c = emb.grid_shape
    shape = tuple(2 * L for L in shape_c)
    band = _band_mask(shape, shape_c)
    ngrid = len(shape)
    phase = _shift_factor(shape, [TWO_PI * w for w in emb.omega])

    # all pointwise algebra runs on the 2x zero-padded grid so that products
    # of band-limited factors are alias-free for every retained mode; without
    # this, aliased junk at near-resonant high modes is re-amplified by the
    # small-divisor solves and the iteration diverges on fine grids
    Pf = np.stack([_pad_to(emb.P[c], shape) for c in range(2 * d)])
    psis = _psi_grids(shape)
    K = Pf.copy()
    for i in range(d):
        K[2 * i + 1] = K[2 * i + 1] + psis[i]
    FK = _f_of_K(emb, spec, K)
    E = np.empty_like(Pf)
    for i in range(d):
        y1 = _band_limit(FK[2 * i], band)
        E[2 * i] = y1 - _compose(Pf[2 * i], phase)
        E[2 * i + 1] = (Pf[2 * i + 1] + y1 - TWO_PI * emb.omega[i]
                        - _compose(Pf[2 * i + 1], phase))
    err_before = float(np.max(np.abs(E)))
    if div_floor is None:
        # a divisor-delta channel contracts only while E < delta^2/C; clip
        # channels below that margin now, and let the floor shrink with E so
        # they are corrected once the step can no longer destabilize them
        # the cap keeps low modes (O(1) divisors, O(1) content) always active;
        # only strongly near-resonant modes, whose genuine content is far
        # below the Newton tolerance, are ever clipped
        div_floor = min(5e-2, math.sqrt(10.0 * err_before))

    # alpha = DK, shape (*grid, 2d, d); identity contributes to angle rows
    alpha = np.zeros(shape + (2 * d, d))
    for c in range(2 * d):
        for l in range(d):
            alpha[..., c, l] = _deriv(Pf[c], l, shape)
    for i in range(d):
        alpha[..., 2 * i + 1, i] += 1.0

    J = _symplectic_J(d)
    Jinv = -J
    at = np.swapaxes(alpha, -1, -2)
    N = np.linalg.inv(at @ alpha)
    M = np.concatenate([alpha, np.einsum("ab,...bc,...cd->...ad",
                                         Jinv, alpha, N)], axis=-1)
    beta = _compose(np.linalg.inv(M), phase)

    Evec = np.moveaxis(E, 0, -1)[..., None]          # (*grid, 2d, 1)
    Et = (beta @ Evec)[..., 0]                        # (*grid, 2d)

    Df = _df_of_K(emb, spec, K)
    Pm = alpha @ N                                    # (*grid, 2d, d)
    gamma = np.einsum("...ca,cb,...bd->...ad", alpha, Jinv, alpha)
    Pm_s = _compose(Pm, phase)
    N_s = _compose(N, phase)
    gamma_s = _compose(gamma, phase)
    S = (np.einsum("...ca,...cb,bd,...de->...ae", Pm_s, Df, Jinv, Pm)
         - lam * (np.swapaxes(N_s, -1, -2) @ gamma_s @ N_s))
    At = beta @ _dmu_f(d)                             # (*grid, 2d, d)

    E1, E2 = Et[..., :d], Et[..., d:]
    A1, A2 = At[..., :d, :], At[..., d:, :]
    gax = tuple(range(ngrid))

    def zero_avg(g):
        return g - np.mean(g, axis=gax)

    Ba = np.stack([cohomology_solve_const(lam, emb.omega, zero_avg(E2[..., i]),
                                          band=band, div_floor=div_floor)
                   for i in range(d)], axis=-1)
    Bb = np.stack([np.stack(
        [cohomology_solve_const(lam, emb.omega, zero_avg(A2[..., i, j]),
                                band=band, div_floor=div_floor)
         for j in range(d)], axis=-1) for i in range(d)], axis=-2)

    Sbar = np.mean(S, axis=gax)
    SBb_bar = np.mean(S @ Bb, axis=gax)
    A1bar = np.mean(A1, axis=gax)
    A2bar = np.mean(A2, axis=gax)
    SBa_bar = np.mean((S @ Ba[..., None])[..., 0], axis=gax)
    E1bar = np.mean(E1, axis=gax)
    E2bar = np.mean(E2, axis=gax)

    big = np.zeros((2 * d, 2 * d))
    big[:d, :d] = Sbar
    big[:d, d:] = SBb_bar + A1bar
    big[d:, :d] = (lam - 1.0) * np.eye(d)
    big[d:, d:] = A2bar
    rhs = np.concatenate([-E1bar - SBa_bar, -E2bar])
    try:
        sol = dense_solve(big.tolist(), rhs.tolist(), DOUBLE)
    except SingularMatrixError:
        raise SingularMatrixError(
            "degenerate torus: average Newton system singular (near-resonance)"
        ) from None
    sol = np.array([float(x) for x in sol])
    W2bar, sigma = sol[:d], sol[d:]

    W2 = Ba + (Bb @ sigma)[...] + W2bar               # (*grid, d)
    rhs1 = ((S @ W2[..., None])[..., 0] + E1 + A1 @ sigma)
    W1 = np.stack([cohomology_solve_const(1.0, emb.omega,
                                          zero_avg(rhs1[..., i]),
                                          zero_average_input=True, band=band,
                                          div_floor=div_floor)
                   for i in range(d)], axis=-1)

    W = np.concatenate([W1, W2], axis=-1)             # (*grid, 2d)
    dK = (M @ W[..., None])[..., 0]                   # (*grid, 2d)
    dK_c = np.stack([_truncate_to(dK[..., c], shape_c)
                     for c in range(2 * d)])
    newP = emb.P + dK_c
    new_mu = tuple(float(m) + float(s) for m, s in zip(emb.mu, sigma))
    out = replace(emb, P=newP, mu=new_mu)
    out = _spectral_clean(_renormalize_phase(out))

    E_new = invariance_error(out, spec)
    err_after = float(np.max(np.abs(E_new)))
    report = NewtonReport(err_before=err_before, err_after=err_after,
                          correction=float(np.max(np.abs(dK))), mu=new_mu)
    return out, report


def _spectral_clean(emb):
    """Zero Fourier coefficients at the round-off floor (and the Nyquist
    planes, whose genuine content is below it on a resolved grid).

    Without this, round-off seeds at strongly near-resonant high modes are
    re-amplified through the small-divisor solves each step and the iteration
    slowly diverges; the floor is ~1e-14 relative, far below the 1e-9
    acceptance tolerance, so cleaning never touches genuine content."""
    shape = emb.grid_shape
    nyq = _nyquist_mask(shape)
    n = emb.P[0].size
    newP = np.empty_like(emb.P)
    for c in range(emb.P.shape[0]):
        H = np.fft.fftn(emb.P[c])
        a = np.abs(H)
        H[(a < 1e-14 * a.max()) | nyq] = 0.0
        newP[c] = np.real(np.fft.ifftn(H))
    return replace(emb, P=newP)


def _renormalize_phase(emb):
    """Exact origin shift K <- K(T_delta), delta = -(mean u, mean v), making
    the hull-function averages vanish; a true symmetry of the invariance
    equation, so the defect is unchanged."""
    gax = tuple(range(len(emb.grid_shape)))
    delta = [-float(np.mean(emb.P[2 * i + 1])) for i in range(emb.d)]
    if all(abs(x) < 1e-300 for x in delta):
        return emb
    phase = _shift_factor(emb.grid_shape, delta)
    newP = np.stack([_compose(emb.P[c], phase) for c in range(2 * emb.d)])
    for i in range(emb.d):
        newP[2 * i + 1] += delta[i]
    return replace(emb, P=newP)


def newton_solve(emb, spec, tol=1e-9, max_iter=20, div_floor=None):
    """Iterate newton_step until the sup-norm defect is below tol.

    Returns (embedding, reports, converged)."""
    reports = []
    best = emb
    prev_err = float(np.max(np.abs(invariance_error(emb, spec))))
    if prev_err < tol:
        return emb, reports, True
    for _ in range(max_iter):
        try:
            emb, rep = newton_step(emb, spec, div_floor=div_floor)
        except (SingularMatrixError, np.linalg.LinAlgError):
            return best, reports, False
        reports.append(rep)
        if not math.isfinite(rep.err_after):
            return best, reports, False
        if rep.err_after < tol:
            return emb, reports, True
        if rep.err_after > 10 * prev_err:
            return best, reports, False
        prev_err = rep.err_after
        best = emb
    return best, reports, False


def sobolev(emb, r=2, err_inf=float("nan")):
    """Sobolev seminorms of the hull functions.

    2D: |u|_r = (sum k^{2r} |u_k|^2)^{1/2}.  4D: directional seminorms with
    weights (2 pi w.k)^{2r} (parallel) and (2 pi w_perp.k)^{2r} with
    w_perp = (-w2, w1), for each angle component."""
    shape = emb.grid_shape
    coeffs = emb.angle_coeffs()
    if emb.d == 1:
        k = _modes(shape)[0]
        u = coeffs[0]
        val = math.sqrt(float(np.sum(k ** (2 * r) * np.abs(u) ** 2)))
        return SobolevRecord(eps=emb.eps, norms=(val,), L=tuple(shape),
                             err_inf=err_inf)
    k1 = _modes(shape)[0][:, None]
    k2 = _modes(shape)[1][None, :]
    w1, w2 = emb.omega
    par = (TWO_PI * (w1 * k1 + w2 * k2)) ** (2 * r)
    perp = (TWO_PI * (-w2 * k1 + w1 * k2)) ** (2 * r)
    norms = []
    for wgt in (par, perp):
        for u in coeffs:
            norms.append(math.sqrt(float(np.sum(wgt * np.abs(u) ** 2))))
    # order: K1_par, K2_par, K1_perp, K2_perp
    return SobolevRecord(eps=emb.eps, norms=tuple(norms), L=tuple(shape),
                         err_inf=err_inf)


def tails(emb):
    """Per-angle tail sums: max over components of sum |K_hat| over the DFT
    index band L_l/4 <= k_l <= 3 L_l/4."""
    shape = emb.grid_shape
    n = emb.P[0].size
    out = []
    for l, L in enumerate(shape):
        band = np.zeros(L, dtype=bool)
        band[L // 4:3 * L // 4 + 1] = True
        sl = [None] * len(shape)
        sl[l] = slice(None)
        mask = band[tuple(sl)]
        worst = 0.0
        for c in range(2 * emb.d):
            h = np.abs(np.fft.fftn(emb.P[c])) / n
            # ignore coefficients at the round-off floor: on big grids the
            # band holds thousands of ~1e-16 entries whose sum would swamp
            # any fixed tail bound without reflecting real high-mode content
            h[h < 1e-14 * (h.max() + 1e-300)] = 0.0
            worst = max(worst, float(np.sum(h * mask)))
        out.append(worst)
    return tuple(out)


def double_modes(emb, axis):
    """Double the grid along one angle by exact zero-padding in Fourier."""
    shape = emb.grid_shape
    newshape = tuple(L * 2 if l == axis else L for l, L in enumerate(shape))
    n_old = emb.P[0].size
    newP = np.zeros((2 * emb.d,) + newshape)
    for c in range(2 * emb.d):
        h = np.fft.fftn(emb.P[c]) / n_old
        H = np.zeros(newshape, dtype=complex)
        idx_old = np.ix_(*[_signed_indices(L) for L in shape])
        idx_new = np.ix_(*[_embed_indices(L, L * 2 if l == axis else L)
                           for l, L in enumerate(shape)])
        H[idx_new] = h[idx_old]
        newP[c] = np.real(np.fft.ifftn(H) * H.size)
    return replace(emb, P=newP)


def _signed_indices(L):
    return np.concatenate([np.arange(0, L // 2), np.arange(L // 2, L)])


def _embed_indices(L_old, L_new):
    lo = np.arange(0, L_old // 2)
    hi = np.arange(L_new - L_old // 2, L_new)
    return np.concatenate([lo, hi])


@dataclass
class ContinuationResult:
    records: list
    embedding: TorusEmbedding
    reason: str          # blowup | stall | mode-budget | eps-max


def continuation(spec, omega, eps_max=None, stop_norm=100.0, tail_bound=1e-13,
                 step0=0.05, step_min=1e-4, step_cap=0.05, tol=1e-9,
                 grid0=None, max_size=None, r=2, callback=None):
    """Continue the eps = 0 torus in eps, recording Sobolev seminorms.

    Each accepted eps must have defect < tol; the eps-step halves on Newton
    failure (floor step_min) and grows 1.5x after success (cap step_cap).
    Tails above tail_bound trigger doubling of the grid in the offending
    angle.  Stops on seminorm blow-up (> stop_norm), step underflow, grid
    budget exhaustion, or reaching eps_max."""
    omega = _omega_floats(omega)
    d = len(omega)
    if len(set(spec.lam)) != 1:
        raise ValueError(
            "continuation requires equal conformal factors (the reducibility "
            "construction does not cover the mixed case)")
    if grid0 is None:
        grid0 = (64,) if d == 1 else (32, 32)
    if max_size is None:
        max_size = 1 << 18 if d == 1 else 1 << 10
    emb = TorusEmbedding.identity(omega, spec.lam[0], grid0)
    emb = replace(emb, mu=tuple(spec.mu) if any(spec.mu) else emb.mu)
    records = []
    eps = 0.0
    step = step0
    reason = "stall"
    while True:
        if eps_max is not None and eps >= eps_max - 1e-15:
            reason = "eps-max"
            break
        target = eps + step
        if eps_max is not None:
            target = min(target, eps_max)
        trial = replace(emb, eps=target)
        sp = spec.with_epsilon(target).with_mu(trial.mu)
        cand, _, ok = newton_solve(trial, sp, tol=tol)
        if ok:
            # refine until tails pass, re-solving on the finer grid
            budget_hit = False
            while True:
                t = tails(cand)
                bad = [l for l in range(d) if t[l] > tail_bound]
                if not bad:
                    break
                l = max(bad, key=lambda i: t[i])
                if cand.grid_shape[l] * 2 > max_size:
                    budget_hit = True
                    break
                cand = double_modes(cand, l)
                sp = sp.with_mu(cand.mu)
                cand, _, ok = newton_solve(cand, sp, tol=tol)
                if not ok:
                    break
            if budget_hit:
                err = float(np.max(np.abs(invariance_error(cand, sp))))
                records.append(sobolev(cand, r=r, err_inf=err))
                emb = cand
                reason = "mode-budget"
                break
        if not ok:
            step *= 0.5
            if step < step_min:
                reason = "stall"
                break
            continue
        emb = cand
        eps = target
        err = float(np.max(np.abs(invariance_error(emb,
                                                   sp.with_mu(emb.mu)))))
        rec = sobolev(emb, r=r, err_inf=err)
        records.append(rec)
        if callback is not None:
            callback(rec)
        if max(rec.norms) > stop_norm:
            reason = "blowup"
            break
        step = min(step * 1.5, step_cap)
    return ContinuationResult(records=records, embedding=emb, reason=reason)


def reducibility_residual(emb, spec):
    """Sup-norm of (Df(K)) M - M(T_w) [[I, S], [0, lam I]] on the grid; small
    at a converged torus (the reducibility identity the step relies on)."""
    d = emb.d
    lam = spec.lam[0]
    shape = emb.grid_shape
    phase = _shift_factor(shape, [TWO_PI * w for w in emb.omega])
    alpha = np.zeros(shape + (2 * d, d))
    for c in range(2 * d):
        for l in range(d):
            alpha[..., c, l] = _deriv(emb.P[c], l, shape)
    for i in range(d):
        alpha[..., 2 * i + 1, i] += 1.0
    J = _symplectic_J(d)
    Jinv = -J
    at = np.swapaxes(alpha, -1, -2)
    N = np.linalg.inv(at @ alpha)
    M = np.concatenate([alpha, np.einsum("ab,...bc,...cd->...ad",
                                         Jinv, alpha, N)], axis=-1)
    K = _k_values(emb)
    Df = _df_of_K(emb, spec, K)
    Pm = alpha @ N
    gamma = np.einsum("...ca,cb,...bd->...ad", alpha, Jinv, alpha)
    Pm_s = _compose(Pm, phase)
    N_s = _compose(N, phase)
    gamma_s = _compose(gamma, phase)
    S = (np.einsum("...ca,...cb,bd,...de->...ae", Pm_s, Df, Jinv, Pm)
         - lam * (np.swapaxes(N_s, -1, -2) @ gamma_s @ N_s))
    T = np.zeros(shape + (2 * d, 2 * d))
    T[..., :d, :d] = np.eye(d)
    T[..., :d, d:] = S
    T[..., d:, d:] = lam * np.eye(d)
    M_s = _compose(M, phase)
    return float(np.max(np.abs(Df @ M - M_s @ T)))


def write_continuation_csv(records, path, d):
    with open(path, "w") as f:
        if d == 1:
            f.write("epsilon,norm_u,err_inf,L\n")
            for r in records:
                f.write(f"{r.eps!r},{r.norms[0]!r},{r.err_inf!r},{r.L[0]}\n")
        else:
            f.write("epsilon,norm_K1_par,norm_K2_par,norm_K1_perp,"
                    "norm_K2_perp,L1,L2,err_inf\n")
            for r in records:
                n = r.norms
                f.write(f"{r.eps!r},{n[0]!r},{n[1]!r},{n[2]!r},{n[3]!r},"
                        f"{r.L[0]},{r.L[1]},{r.err_inf!r}\n")


def save_embedding(emb, path):
    """Text store: header lines then normalized Fourier coefficients of the
    periodic parts, one mode per line."""
    n = emb.P[0].size
    with open(path, "w") as f:
        f.write("torusbreak-embedding v1\n")
        f.write(f"d {emb.d}\n")
        f.write("omega " + " ".join(repr(w) for w in emb.omega) + "\n")
        f.write(f"lambda {emb.lam!r}\n")
        f.write("mu " + " ".join(repr(m) for m in emb.mu) + "\n")
        f.write(f"epsilon {emb.eps!r}\n")
        f.write("grid " + " ".join(str(L) for L in emb.grid_shape) + "\n")
        for c in range(2 * emb.d):
            h = np.fft.fftn(emb.P[c]) / n
            f.write(f"component {c}\n")
            it = np.nditer(h, flags=["multi_index"])
            for v in it:
                z = complex(v)
                if abs(z) > 1e-300:
                    idx = " ".join(str(i) for i in it.multi_index)
                    f.write(f"c {idx} {z.real!r} {z.imag!r}\n")
    return path


def load_embedding(path):
    with open(path) as f:
        header = f.readline().strip()
        if header != "torusbreak-embedding v1":
            raise ValueError(f"unrecognized embedding file: {header!r}")
        meta = {}
        comps = None
        cur = None
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "component":
                if comps is None:
                    shape = tuple(int(x) for x in meta["grid"])
                    d = int(meta["d"][0])
                    comps = np.zeros((2 * d,) + shape, dtype=complex)
                cur = int(parts[1])
            elif parts[0] == "c":
                k = len(meta["grid"])
                idx = tuple(int(x) for x in parts[1:1 + k])
                comps[cur][idx] = float(parts[1 + k]) + 1j * float(parts[2 + k])
            else:
                meta[parts[0]] = parts[1:]
    shape = tuple(int(x) for x in meta["grid"])
    n = int(np.prod(shape))
    P = np.stack([np.real(np.fft.ifftn(comps[c]) * n)
                  for c in range(comps.shape[0])])
    return TorusEmbedding(
        omega=tuple(float(x) for x in meta["omega"]),
        lam=float(meta["lambda"][0]),
        mu=tuple(float(x) for x in meta["mu"]),
        eps=float(meta["epsilon"][0]),
        P=P)
