"""Periodic-orbit machinery: extended-map orbit solvers, Arnold-tongue scans,
linear stability, residues, and Greene-style threshold bisection.

Orbits with rotation (p1/q[, p2/q]) are roots of G(X) = F^q(X) - X - shift
for the lifted constant-drift map.  A dissipative factor adds its drift mu_i
as an unknown together with the scalar closure mu_i = y_i (1 - lam_i)
- eps V_i(psi) at the orbit's start point (the extended-map heuristic: the
drift is a dynamical variable whose return condition, on a closed orbit,
collapses to this pointwise relation).  The same drift frozen into the
constant-drift map reproduces the orbit exactly; the measured rotation
number is validated a posteriori.

All orbit arithmetic runs in a gmpy2 context sized to the period: the cycle
Jacobian conditions like Lip^q, so digits = max(30, 2 q log10(Lip) + 20).
"""
import math
from dataclasses import dataclass, field, replace

import gmpy2

from .maps import MapSpec, integrable_drift
from .numerics import (DensePoly, SingularMatrixError, char_poly, dense_solve,
                       poly_roots)
from .precision import Context


class OrbitError(RuntimeError):
    """Newton failed to locate the requested periodic orbit."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class OrbitProblem:
    """Target periodic orbit: map family plus rotation (p1/q[, p2/q])."""
    spec: MapSpec
    p: tuple                 # (p1,) or (p1, p2)
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("period q must be >= 1")
        if len(self.p) != self.spec.d:
            raise ValueError("need one integer p per degree of freedom")


@dataclass
class PeriodicOrbit:
    p: tuple
    q: int
    state: tuple             # (y, x) or (y, x, w, z), start point (mpfr)
    mu: tuple                # drift values found (mpfr; fixed entries echoed)
    residual: float          # sup-norm of G at the solution
    ctx: Context
    eigenvalues: list = field(default_factory=list)
    residue: float = None
    stable: bool = None

    @property
    def point_floats(self):
        return tuple(float(v) for v in self.state)

    @property
    def mu_floats(self):
        return tuple(float(m) for m in self.mu)


@dataclass
class Tongue:
    p: tuple
    q: int
    slices: list             # rows (eps, (mu1_lo, mu1_hi)[, (mu2_lo, mu2_hi)])


def lipschitz_bound(spec):
    """Crude per-step Lipschitz bound of the lifted map (row-sum estimate)."""
    pot = spec.potential
    amp = pot.max_harmonic / 3 + 1 + 2 * pot.gamma   # sup of |dV| per component
    return 1 + max(spec.lam) + spec.epsilon * amp


def orbit_context(spec, q):
    """Precision sized to the worst-case conditioning Lip^q of the cycle."""
    digits = max(30, int(2 * q * math.log10(lipschitz_bound(spec))) + 20)
    return Context(digits)


# -- high-precision forcing from exact Fourier data --------------------------

def _force_terms(pot, ctx):
    """Per component: list of (k, re, im, gamma_pow) with ctx-real re/im."""
    out = []
    with ctx:
        g = ctx.real(pot.gamma)
        for comp in pot.harmonics():
            terms = []
            for k, (re, im, gp) in comp:
                terms.append((k, ctx.real(re), ctx.real(im), g ** gp if gp else None))
            out.append(terms)
    return out


def _eval_force(terms, psi, ctx, derivative=None):
    """V_i(psi) = sum 2 Re(a e^{i k.psi}); derivative l multiplies by i k_l."""
    with ctx:
        vals = []
        for comp in terms:
            acc = ctx.real(0)
            for k, re, im, gfac in comp:
                arg = sum(ki * pi_ for ki, pi_ in zip(k, psi))
                c, s = gmpy2.cos(arg), gmpy2.sin(arg)
                if derivative is None:
                    t = 2 * (re * c - im * s)
                else:
                    t = -2 * (re * s + im * c) * k[derivative]
                if gfac is not None:
                    t *= gfac
                acc += t
            vals.append(acc)
        return vals


# -- map steps with analytic Jacobians ---------------------------------------

def _step_map(spec, terms, state, mu, ctx, with_jac=True):
    """One step of the lifted constant-drift map.

    Returns the new state (y, x[, w, z]) and, optionally, the Jacobian blocks
    A = dX'/dX (2d x 2d) and B = dX'/dmu (2d x d)."""
    d = spec.d
    n = 2 * d
    with ctx:
        eps = ctx.real(spec.epsilon)
        lam = [ctx.real(l) for l in spec.lam]
        psi = [state[2 * j + 1] for j in range(d)]
        V = _eval_force(terms, psi, ctx)
        # dV[l][i] = dV_i/dpsi_l
        dV = ([_eval_force(terms, psi, ctx, derivative=l) for l in range(d)]
              if with_jac else None)
        new = [None] * n
        A = [[ctx.real(0) for _ in range(n)] for _ in range(n)] if with_jac else None
        B = [[ctx.real(0) for _ in range(d)] for _ in range(n)] if with_jac else None
        for i in range(d):
            a1 = lam[i] * state[2 * i] + mu[i] + eps * V[i]
            new[2 * i] = a1
            new[2 * i + 1] = state[2 * i + 1] + a1
            if with_jac:
                A[2 * i][2 * i] = lam[i]
                for l in range(d):
                    A[2 * i][2 * l + 1] = eps * dV[l][i]
                B[2 * i][i] = ctx.real(1)
                for c in range(n):
                    A[2 * i + 1][c] = A[2 * i][c]
                A[2 * i + 1][2 * i + 1] += 1
                B[2 * i + 1][i] = ctx.real(1)
        return new, A, B


def _mat_mul_ctx(A, B, ctx):
    n, m, k = len(A), len(B[0]), len(B)
    with ctx:
        return [[sum(A[i][t] * B[t][j] for t in range(k)) for j in range(m)]
                for i in range(n)]


def _orbit_G(spec, terms, u0, q, shift, ctx, free_mu, with_jac=True):
    """Orbit system: q-step closure of the frozen-drift map plus one scalar
    drift-closure equation per free drift component.

    Unknowns u0 = (y, x[, w, z][, mu_i for i in free_mu]).  Rows 0..2d-1 are
    F_mu^q(X) - X - shift with mu held fixed during the iteration; row 2d+slot
    is mu_i - (y_i (1 - lam_i) - eps V_i(psi)) at the start point, which on a
    closed orbit equals the extended-map return condition for the drift."""
    d = spec.d
    m = len(free_mu)
    n = 2 * d + m
    with ctx:
        mu = [ctx.real(v) for v in spec.mu]
        for slot, i in enumerate(free_mu):
            mu[i] = u0[2 * d + slot]
        X = list(u0[:2 * d])
        # M = dX_k/du0, a (2d) x n block, starts as [I | 0]
        M = ([[ctx.real(1) if i == j else ctx.real(0) for j in range(n)]
              for i in range(2 * d)] if with_jac else None)
        for _ in range(q):
            X, A, B = _step_map(spec, terms, X, mu, ctx, with_jac)
            if with_jac:
                M = _mat_mul_ctx(A, M, ctx)
                for r in range(2 * d):
                    for slot, i in enumerate(free_mu):
                        M[r][2 * d + slot] += B[r][i]
        G = [X[i] - u0[i] - shift[i] for i in range(2 * d)]
        DG = None
        if with_jac:
            DG = [row[:] for row in M]
            for i in range(2 * d):
                DG[i][i] -= 1
        if m:
            eps = ctx.real(spec.epsilon)
            psi0 = [u0[2 * j + 1] for j in range(d)]
            V0 = _eval_force(terms, psi0, ctx)
            dV0 = ([_eval_force(terms, psi0, ctx, derivative=l)
                    for l in range(d)] if with_jac else None)
            for slot, i in enumerate(free_mu):
                lam_i = ctx.real(spec.lam[i])
                G.append(u0[2 * d + slot]
                         - (u0[2 * i] * (1 - lam_i) - eps * V0[i]))
                if with_jac:
                    row = [ctx.real(0) for _ in range(n)]
                    row[2 * i] = -(1 - lam_i)
                    for l in range(d):
                        row[2 * l + 1] = eps * dV0[l][i]
                    row[2 * d + slot] = ctx.real(1)
                    DG.append(row)
        return G, DG


def _newton_orbit(spec, u0, q, shift, ctx, free_mu, max_iter=200):
    """Newton on the extended q-iterate fixed-point system."""
    terms = _force_terms(spec.potential, ctx)
    with ctx:
        tol = ctx.real(10) ** (-(ctx.digits // 2))
        u = [ctx.real(v) for v in u0]
        best, best_it = None, 0
        for it in range(max_iter):
            G, DG = _orbit_G(spec, terms, u, q, shift, ctx, free_mu)
            res = max(abs(g) for g in G)
            if best is None or res < best:
                best, best_it = res, it
            if res < tol:
                return u, float(res)
            # a converging Newton keeps setting new bests; bail early on
            # stall or runaway instead of burning the full iteration budget
            if it - best_it >= 8 or res > 1e9:
                raise OrbitError("orbit Newton stalled", residual=float(best))
            try:
                delta = dense_solve(DG, [-g for g in G], ctx)
            except SingularMatrixError as exc:
                raise OrbitError("singular cycle Jacobian in orbit Newton",
                                 residual=float(res)) from exc
            u = [ui + di for ui, di in zip(u, delta)]
            if any(not gmpy2.is_finite(v) for v in u):
                raise OrbitError("orbit Newton diverged", residual=float(best))
        raise OrbitError("orbit Newton did not converge in "
                         f"{max_iter} iterations", residual=float(best))


def _measured_rotation(spec, state, mu, q, ctx):
    """Average actions of the q-cycle of the constant-drift map / 2 pi."""
    frozen = spec.with_mu(tuple(float(m) for m in mu)) if spec.d else spec
    terms = _force_terms(frozen.potential, ctx)
    d = spec.d
    with ctx:
        eps = ctx.real(spec.epsilon)
        lam = [ctx.real(l) for l in spec.lam]
        mus = [ctx.real(m) for m in mu]
        u = [ctx.real(v) for v in state]
        sums = [ctx.real(0) for _ in range(d)]
        for _ in range(q):
            psi = [u[2 * j + 1] for j in range(d)]
            V = _eval_force(terms, psi, ctx)
            for i in range(d):
                a1 = lam[i] * u[2 * i] + mus[i] + eps * V[i]
                u[2 * i] = a1
                u[2 * i + 1] += a1
                sums[i] += a1
        return tuple(float(s / q / ctx.two_pi) for s in sums)


def _validate(problem, state, mu, ctx):
    rot = _measured_rotation(problem.spec, state, mu, problem.q, ctx)
    for r, pi_ in zip(rot, problem.p):
        if abs(r - pi_ / problem.q) > 0.5 / problem.q:
            raise OrbitError(
                f"orbit rotation {rot} differs from target "
                f"{[x / problem.q for x in problem.p]} by more than 1/(2q)")


def _free_mu(spec):
    """Drift components treated as unknowns: every dissipative factor."""
    return [i for i, l in enumerate(spec.lam) if l != 1]


def _guess_eps0(spec, p, q, ctx, z_offsets=(0.0,)):
    """Integrable-limit orbit: actions 2 pi p_i/q, drifts 2 pi (1-lam) p/q."""
    with ctx:
        two_pi = ctx.two_pi
        omega = [ctx.real(pi_) / q for pi_ in p]
        u = []
        for i in range(spec.d):
            u.append(two_pi * omega[i])
            u.append(ctx.real(z_offsets[i % len(z_offsets)]))
        for i in _free_mu(spec):
            u.append(two_pi * (1 - ctx.real(spec.lam[i])) * omega[i])
        return u


def _solve_at(problem, guess, ctx):
    spec, q = problem.spec, problem.q
    d = spec.d
    free = _free_mu(spec)
    with ctx:
        shift = []
        for i in range(d):
            shift += [ctx.real(0), ctx.two_pi * problem.p[i]]
        u, res = _newton_orbit(spec, guess, q, shift, ctx, free)
        state = tuple(u[:2 * d])
        mu = [ctx.real(m) for m in spec.mu]
        for slot, i in enumerate(free):
            mu[i] = u[2 * d + slot]
        return state, tuple(mu), res, u


_ANGLE_STARTS = (0.0, math.pi, math.pi / 2, 3 * math.pi / 2)


def _continue_in(problem, build, values, guess, ctx, step0=None):
    """Generic secant-free continuation: re-solve at each value of a parameter
    ladder, halving the step on failure (floor 1e-4 of the range).  The ladder
    may run in either direction (warm starts can sit above the target)."""
    start, target = values
    span = abs(target - start)
    if span == 0:
        r = _solve_at(build(target), guess, ctx)
        return r[0], r[1], r[2], r[3]
    sgn = 1.0 if target > start else -1.0
    step = step0 if step0 is not None else max(span / 4, 1e-3)
    t = start
    u = guess
    while True:
        t_next = target if abs(target - t) <= step else t + sgn * step
        prob = build(t_next)
        try:
            state, mu, res, u_new = _solve_at(prob, u, ctx)
        except OrbitError:
            step /= 2
            if step < 1e-4 * span:
                raise OrbitError(
                    f"continuation stalled at parameter {t:.6g}")
            continue
        u, t = u_new, t_next
        step = min(step * 1.5, span / 4)
        if t == target:
            return state, mu, res, u


def _candidate_orbits(problem, ctx):
    """Continuation from the integrable limit over several starting phases.

    The orbit system has several roots inside the Arnold tongue (stable and
    unstable members at slightly different drifts); different phase seeds land
    on different roots.  Returns deduplicated (state, mu, res, u) tuples."""
    spec = problem.spec
    found, seen = [], set()
    last = None
    for z0 in _ANGLE_STARTS:
        guess = _guess_eps0(spec.with_epsilon(0), problem.p, problem.q, ctx,
                            z_offsets=(z0,))
        build = lambda e: replace(problem, spec=spec.with_epsilon(e))
        try:
            state, mu, res, u = _continue_in(problem, build,
                                             (0.0, spec.epsilon), guess, ctx)
            _validate(problem, state, mu, ctx)
        except OrbitError as exc:
            last = exc
            continue
        key = tuple(round(float(m), 8) for m in mu)
        if key in seen:
            continue
        seen.add(key)
        found.append((state, mu, res, u))
    if not found:
        raise last or OrbitError("no orbit found from any starting phase")
    return found


def _select_orbit(problem, candidates, ctx):
    """Pick the representative tongue member among the root families.

    Stable beats unstable; when several families are stable the one whose
    drift lies deepest inside the Arnold tongue (closest to the midpoint,
    "as far as possible from the boundaries") is kept.  With no stable
    family, the least unstable one is returned."""
    spec = problem.spec
    orbits = []
    for state, mu, res, u in candidates:
        orbit = PeriodicOrbit(p=problem.p, q=problem.q, state=state, mu=mu,
                              residual=res, ctx=ctx)
        stability(orbit, spec)
        orbits.append((orbit, u))
    stable = [(o, u) for o, u in orbits if o.stable]
    if len(stable) > 1:
        ivals = tongue_slice(spec, problem.p, problem.q, stable[0][0], ctx=ctx)
        mids = [0.5 * (lo + hi) for lo, hi in ivals]

        def depth(o):
            return sum(abs(m - mid) for m, mid in zip(o.mu_floats, mids))

        best = min(stable, key=lambda t: depth(t[0]))
    elif stable:
        best = stable[0]
    else:
        best = min(orbits,
                   key=lambda t: max(float(abs(k)) for k in t[0].eigenvalues))
    residue(best[0], spec)
    return best[0], best[1]


def find_orbit_2d(problem, guess=None, ctx=None):
    """Dissipative (or conservative) 2D orbit: Newton on the 3-unknown
    (2-unknown when symplectic) closure system, with continuation in eps from
    the integrable limit and stable-root selection."""
    spec = problem.spec
    if spec.dim != 2:
        raise ValueError("find_orbit_2d needs a 2D spec")
    ctx = ctx or orbit_context(spec, problem.q)
    if guess is None:
        orbit, _ = _select_orbit(problem, _candidate_orbits(problem, ctx), ctx)
        return orbit
    state, mu, res, _ = _solve_at(problem, guess, ctx)
    _validate(problem, state, mu, ctx)
    orbit = PeriodicOrbit(p=problem.p, q=problem.q, state=state, mu=mu,
                          residual=res, ctx=ctx)
    stability(orbit, spec)
    residue(orbit, spec)
    return orbit


def find_orbit_4d(problem, guess=None, ctx=None):
    """4D orbit (dissipative or mixed) via the 5/6-unknown extended system.

    Warm start: the gamma = 0 problem splits into two 2D factors solved
    independently; the coupling is then switched on by continuation in gamma,
    followed by continuation in eps up to the target."""
    from .maps import ONE_HARMONIC_2D, PotentialSpec, TWO_HARMONIC_2D
    spec = problem.spec
    if spec.dim != 4:
        raise ValueError("find_orbit_4d needs a 4D spec")
    ctx = ctx or orbit_context(spec, problem.q)
    gamma = spec.potential.gamma
    if guess is None:
        # split gamma=0 warm start at a small eps, then continue
        eps_warm = min(spec.epsilon, 0.05)
        var2d = (TWO_HARMONIC_2D if spec.potential.max_harmonic == 3
                 else ONE_HARMONIC_2D)
        pot2d = PotentialSpec(var2d)
        f1 = MapSpec(dim=2, lam=(spec.lam[0],), mu=(spec.mu[0],),
                     epsilon=eps_warm, potential=pot2d)
        o1 = find_orbit_2d(OrbitProblem(spec=f1, p=(problem.p[0],),
                                        q=problem.q), ctx=ctx)
        s1, mu1 = o1.state, o1.mu
        f2 = MapSpec(dim=2, lam=(spec.lam[1],), mu=(spec.mu[1],),
                     epsilon=eps_warm, potential=pot2d)
        o2 = find_orbit_2d(OrbitProblem(spec=f2, p=(problem.p[1],),
                                        q=problem.q), ctx=ctx)
        s2, mu2 = o2.state, o2.mu
        u = [s1[0], s1[1], s2[0], s2[1]]
        free = _free_mu(spec)
        pool = {0: mu1[0], 1: mu2[0]}
        u += [pool[i] for i in free]
        # switch the coupling on at eps_warm, then push eps to the target
        def build_gamma(g):
            pot = replace(spec.potential, gamma=g)
            return replace(problem,
                           spec=replace(spec, epsilon=eps_warm, potential=pot))
        if gamma > 0:
            _, _, _, u = _continue_in(problem, build_gamma, (0.0, gamma),
                                      u, ctx)
        else:
            _, _, _, u = _solve_at(build_gamma(0.0), u, ctx)
        build_eps = lambda e: replace(problem, spec=spec.with_epsilon(e))
        state, mu, res, _ = _continue_in(problem, build_eps,
                                         (eps_warm, spec.epsilon), u, ctx)
    else:
        state, mu, res, _ = _solve_at(problem, guess, ctx)
    _validate(problem, state, mu, ctx)
    orbit = PeriodicOrbit(p=problem.p, q=problem.q, state=state, mu=mu,
                          residual=res, ctx=ctx)
    stability(orbit, spec)
    residue(orbit, spec)
    return orbit


def find_orbit(problem, guess=None, ctx=None):
    if problem.spec.dim == 2:
        return find_orbit_2d(problem, guess=guess, ctx=ctx)
    return find_orbit_4d(problem, guess=guess, ctx=ctx)


# -- stability, residue ------------------------------------------------------

def cycle_jacobian(orbit, spec):
    """Product of the (2d x 2d) map Jacobians along the q-cycle (mpfr).

    No renormalization is needed: mpfr exponents cover the dynamic range of
    Lip^q directly."""
    ctx = orbit.ctx
    d = spec.d
    frozen = spec.with_mu(orbit.mu_floats)
    terms = _force_terms(frozen.potential, ctx)
    with ctx:
        eps = ctx.real(spec.epsilon)
        lam = [ctx.real(l) for l in spec.lam]
        mus = [ctx.real(m) for m in orbit.mu]
        u = [ctx.real(v) for v in orbit.state]
        n = 2 * d
        J = [[ctx.real(1) if i == j else ctx.real(0) for j in range(n)]
             for i in range(n)]
        for _ in range(orbit.q):
            psi = [u[2 * j + 1] for j in range(d)]
            V = _eval_force(terms, psi, ctx)
            dV = [_eval_force(terms, psi, ctx, derivative=l) for l in range(d)]
            Js = [[ctx.real(0) for _ in range(n)] for _ in range(n)]
            for i in range(d):
                a1 = lam[i] * u[2 * i] + mus[i] + eps * V[i]
                u[2 * i] = a1
                u[2 * i + 1] += a1
                Js[2 * i][2 * i] = lam[i]
                for l in range(d):
                    Js[2 * i][2 * l + 1] = eps * dV[l][i]
                for c in range(n):
                    Js[2 * i + 1][c] = Js[2 * i][c]
                Js[2 * i + 1][2 * i + 1] += 1
            J = _mat_mul_ctx(Js, J, ctx)
        return J


STABILITY_MARGIN = 1e-8


def stability(orbit, spec):
    """Eigenvalues of the cycle Jacobian; stable iff all |kappa| <= 1 + 1e-8."""
    ctx = orbit.ctx
    J = cycle_jacobian(orbit, spec)
    with ctx:
        if spec.dim == 2:
            tr = J[0][0] + J[1][1]
            det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
            disc = gmpy2.sqrt(ctx.complex(tr * tr - 4 * det))
            eig = [(tr + disc) / 2, (tr - disc) / 2]
        else:
            cs = char_poly(J, ctx)
            eig = poly_roots(DensePoly(cs, ctx), ctx)
        orbit.eigenvalues = eig
        orbit.stable = all(abs(k) <= 1 + STABILITY_MARGIN for k in eig)
        return eig, orbit.stable


def residue(orbit, spec):
    """R = sum_{j=1..d} |c_j - c_j^0|: distance of the low-order cycle
    characteristic-polynomial coefficients from the integrable reference
    (x-1)^d prod_i (x - lam_i^q)."""
    ctx = orbit.ctx
    d = spec.d
    J = cycle_jacobian(orbit, spec)
    with ctx:
        cs = char_poly(J, ctx)              # ascending, monic
        roots0 = [ctx.real(1)] * d + [ctx.real(l) ** orbit.q for l in spec.lam]
        ref = [ctx.real(1)]
        for r in roots0:
            ref = [a - r * b for a, b in
                   zip([ctx.real(0)] + ref, ref + [ctx.real(0)])]
        ref.reverse()                        # ascending
        R = sum(abs(cs[j] - ref[j]) for j in range(1, d + 1))
        orbit.residue = float(R)
        return orbit.residue


# -- tongues -----------------------------------------------------------------

def _orbit_exists_fixed_mu(spec, p, q, guess_state, ctx):
    """Closure Newton in the phase variables only (all drifts frozen)."""
    prob = OrbitProblem(spec=spec, p=p, q=q)
    d = spec.d
    terms = _force_terms(spec.potential, ctx)
    with ctx:
        shift = []
        for i in range(d):
            shift += [ctx.real(0), ctx.two_pi * p[i]]
        try:
            u, res = _newton_orbit(spec, list(guess_state), q, shift, ctx, [],
                                   max_iter=60)
        except OrbitError:
            return None
        rot = _measured_rotation(spec, u, spec.mu, q, ctx)
        for r, pi_ in zip(rot, p):
            if abs(r - pi_ / q) > 0.5 / q:
                return None
        return tuple(u)


def tongue_slice(spec, p, q, center_orbit, ctx=None, rel_tol=1e-3):
    """Per-drift-component interval [mu-, mu+] at fixed eps, bisecting outward
    from a found orbit until the fixed-mu solve fails persistently."""
    ctx = ctx or center_orbit.ctx
    d = spec.d
    mu_c = center_orbit.mu_floats
    out = []
    # seed step near the expected width eps^q, but keep it within [1e-9, 1e-3]
    scale = min(1e-3, max(1e-9, spec.epsilon ** q))
    for i in range(d):
        if spec.lam[i] == 1:
            out.append((mu_c[i], mu_c[i]))
            continue
        bounds = []
        for sgn in (-1.0, 1.0):
            lo = 0.0                  # offset known inside
            hi = None
            step = scale
            state = center_orbit.state
            # expand until failure
            while hi is None:
                probe = list(mu_c)
                probe[i] = mu_c[i] + sgn * step
                got = _orbit_exists_fixed_mu(spec.with_mu(probe), p, q,
                                             state, ctx)
                if got is None:
                    hi = step
                else:
                    lo, state = step, got
                    step *= 2
                    if step > 10.0:
                        hi = step     # tongue effectively unbounded; stop
            while hi - lo > max(1e-13, rel_tol * hi):
                mid = 0.5 * (lo + hi)
                probe = list(mu_c)
                probe[i] = mu_c[i] + sgn * mid
                got = _orbit_exists_fixed_mu(spec.with_mu(probe), p, q,
                                             state, ctx)
                if got is None:
                    hi = mid
                else:
                    lo, state = mid, got
            bounds.append(sgn * lo)
        out.append((mu_c[i] + bounds[0], mu_c[i] + bounds[1]))
    return out


def tongue_scan(spec, p, q, eps_values, ctx=None):
    """Tongue intervals over an eps ladder (continuation along the ladder)."""
    slices = []
    guess = None
    for e in sorted(eps_values):
        se = spec.with_epsilon(e)
        prob = OrbitProblem(spec=se, p=p, q=q)
        cctx = ctx or orbit_context(se, q)
        try:
            orbit = find_orbit(prob, guess=guess, ctx=cctx)
        except OrbitError:
            guess = None
            try:
                orbit = find_orbit(prob, ctx=cctx)
            except OrbitError:
                continue
        free = _free_mu(se)
        guess = list(orbit.state) + [orbit.mu[i] for i in free]
        ivals = tongue_slice(se, p, q, orbit, ctx=cctx)
        slices.append((e, ivals))
    return Tongue(p=p, q=q, slices=slices)


# -- Greene threshold --------------------------------------------------------

@dataclass
class ThresholdResult:
    p: tuple
    q: int
    eps_c: float
    censored: bool           # True when the orbit was lost before instability
    orbit: PeriodicOrbit     # last stable orbit found


def greene_threshold(spec, p, q, eps_hi, eps_lo=0.0, tol=1e-3, ctx=None):
    """Largest eps in [eps_lo, eps_hi] for which a (p, q) orbit continued from
    the integrable limit is stable.

    The closure system has several root families inside the Arnold tongue
    (a near-boundary member can restabilize after the central one is lost, so
    "any stable orbit exists" is the wrong predicate).  Each family found
    from the phase seeds is continued up an eps ladder; its own threshold is
    its first loss of stability, refined by bisection with warm starts from
    the nearest converged probe of the same family.  The reported threshold
    is the max over families: the tongue member that stays stable longest."""
    work = ctx or orbit_context(spec.with_epsilon(eps_hi), q)
    free = _free_mu(spec)
    n_steps = max(8, int(round((eps_hi - eps_lo) / max(tol * 10, 1e-3))))
    n_steps = min(n_steps, 400)
    h = (eps_hi - eps_lo) / n_steps
    e0 = round(eps_lo + h, 12)

    def solve_from(e_from, u_from, e_to):
        """Continue one family from (e_from, u_from) to e_to; returns
        (orbit, u) or raises OrbitError."""
        se = spec.with_epsilon(e_to)
        prob = OrbitProblem(spec=se, p=p, q=q)
        build = lambda t: replace(prob, spec=spec.with_epsilon(t))
        state, mu, res, u = _continue_in(prob, build, (e_from, e_to),
                                         u_from, work)
        _validate(prob, state, mu, work)
        orbit = PeriodicOrbit(p=p, q=q, state=state, mu=mu, residual=res,
                              ctx=work)
        stability(orbit, se)
        residue(orbit, se)
        return orbit, u

    # discover root families at the first rung
    families, seen = [], set()
    for z0 in _ANGLE_STARTS:
        guess = _guess_eps0(spec.with_epsilon(0), p, q, work, z_offsets=(z0,))
        try:
            orbit, u = solve_from(0.0, guess, e0)
        except OrbitError:
            continue
        key = tuple(round(float(m), 8) for m in orbit.mu)
        if key in seen:
            continue
        seen.add(key)
        families.append({"cache": {e0: u}, "orbit": orbit})
    if not families:
        raise OrbitError("no orbit found at the bottom of the eps ladder")

    best = None
    for fam in families:
        cache = fam["cache"]

        def probe(e):
            e = round(e, 12)
            eg = e if e in cache else min(cache, key=lambda t: abs(t - e))
            orbit, u = solve_from(eg, cache[eg], e)
            cache[e] = u
            return orbit

        # upward walk to this family's first loss of stability
        last = (e0, fam["orbit"]) if fam["orbit"].stable else None
        bracket_hi = None if fam["orbit"].stable else e0
        e = e0
        censored = False
        while bracket_hi is None and e < eps_hi - 1e-12:
            e2 = round(min(e + h, eps_hi), 12)
            try:
                orbit = probe(e2)
            except OrbitError:
                bracket_hi, censored = e2, True
                break
            if orbit.stable:
                last, e = (e2, orbit), e2
            else:
                bracket_hi = e2
        if last is None:
            continue                      # family never stable on the ladder
        lo, orbit_lo = last
        if bracket_hi is None:
            result = ThresholdResult(p=p, q=q, eps_c=lo, censored=True,
                                     orbit=orbit_lo)
        else:
            hi = bracket_hi
            while hi - lo > tol:
                mid = round(0.5 * (lo + hi), 12)
                try:
                    orbit = probe(mid)
                except OrbitError:
                    hi, censored = mid, True
                    continue
                if orbit.stable:
                    lo, orbit_lo, censored = mid, orbit, False
                else:
                    hi = mid
            result = ThresholdResult(p=p, q=q, eps_c=lo, censored=censored,
                                     orbit=orbit_lo)
        if best is None or result.eps_c > best.eps_c:
            best = result
    if best is None:
        raise OrbitError("no stable orbit found on the eps ladder")
    return best


# -- output ------------------------------------------------------------------

def write_greene_csv(results, path):
    """Rows: one ThresholdResult per approximant."""
    with open(path, "w") as f:
        f.write("p1,p2,q,eps_c,mu1,mu2,y,x,w,z,residue\n")
        for r in results:
            o = r.orbit
            mu = o.mu_floats
            st = o.point_floats
            row = [str(r.p[0]),
                   str(r.p[1]) if len(r.p) > 1 else "",
                   str(r.q), repr(r.eps_c), repr(mu[0]),
                   repr(mu[1]) if len(mu) > 1 else "",
                   repr(st[0]), repr(st[1]),
                   repr(st[2]) if len(st) > 3 else "",
                   repr(st[3]) if len(st) > 3 else "",
                   repr(o.residue)]
            f.write(",".join(row) + "\n")


def write_tongue_csv(tongue, path):
    with open(path, "w") as f:
        f.write("eps,mu1_lo,mu1_hi,mu2_lo,mu2_hi\n")
        for e, ivals in tongue.slices:
            row = [repr(e)]
            for iv in ivals:
                row += [repr(iv[0]), repr(iv[1])]
            while len(row) < 5:
                row.append("")
            f.write(",".join(row) + "\n")
