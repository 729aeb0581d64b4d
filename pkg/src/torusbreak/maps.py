"""2D and 4D (conformally) symplectic standard-map families.

2D map (ordering (y, x), y updated first):
    y' = lam*y + mu + eps*V(x),   x' = x + y'   (mod 2*pi)

4D map, two coupled 2D maps (ordering (y, x, w, z)):
    y' = lam1*y + mu1 + eps*V1(x, z),   x' = x + y'
    w' = lam2*w + mu2 + eps*V2(x, z),   z' = z + w'

Angles live in [0, 2*pi); frequencies are dimensionless rotation numbers, so
the integrable drift is mu0 = 2*pi*(1 - lam)*omega and rotation estimates
divide averaged actions by 2*pi.
"""
import math
from dataclasses import dataclass, field, replace

TWO_PI = 2.0 * math.pi

ONE_HARMONIC_2D = "one_harmonic_2d"
TWO_HARMONIC_2D = "two_harmonic_2d"
COUPLED_W_4D = "coupled_w_4d"
TWO_HARMONIC_COUPLED_4D = "two_harmonic_coupled_4d"

_VARIANTS_2D = (ONE_HARMONIC_2D, TWO_HARMONIC_2D)
_VARIANTS_4D = (COUPLED_W_4D, TWO_HARMONIC_COUPLED_4D)


@dataclass(frozen=True)
class PotentialSpec:
    """Closed enumeration of forcing potentials with analytic derivatives.

    2D variants give V(x); 4D variants give the pair (V1, V2) = (dW/dx, dW/dz)
    of the generating potential W(x, z) = -cos x - cos z - gamma*cos(x - z)
    (zero average in each angle), optionally with a 1/3 sin(3*) harmonic.
    """
    variant: str
    gamma: float = 0.0

    def __post_init__(self):
        if self.variant not in _VARIANTS_2D + _VARIANTS_4D:
            raise ValueError(f"unknown potential variant {self.variant!r}")
        if self.gamma < 0:
            raise ValueError("coupling gamma must be >= 0")
        if self.variant in _VARIANTS_2D and self.gamma != 0.0:
            raise ValueError("2D potentials take no coupling")

    @property
    def dim_angles(self):
        return 1 if self.variant in _VARIANTS_2D else 2

    @property
    def max_harmonic(self):
        return 3 if self.variant in (TWO_HARMONIC_2D, TWO_HARMONIC_COUPLED_4D) else 1

    # -- pointwise values --------------------------------------------------
    def force(self, x, z=None):
        """V(x) (2D) or the pair (V1, V2)(x, z) (4D). Works elementwise on
        numpy arrays as well as on scalars."""
        sin, cos = _sin_cos_for(x)
        if self.variant == ONE_HARMONIC_2D:
            return sin(x)
        if self.variant == TWO_HARMONIC_2D:
            return sin(x) + sin(3 * x) / 3
        g = self.gamma
        coupling = g * sin(x - z)
        if self.variant == COUPLED_W_4D:
            return sin(x) + coupling, sin(z) - coupling
        return (sin(x) + sin(3 * x) / 3 + coupling,
                sin(z) + sin(3 * z) / 3 - coupling)

    def dforce(self, x, z=None):
        """dV/dx (2D) or the 2x2 matrix [[dV1/dx, dV1/dz], [dV2/dx, dV2/dz]]."""
        sin, cos = _sin_cos_for(x)
        if self.variant == ONE_HARMONIC_2D:
            return cos(x)
        if self.variant == TWO_HARMONIC_2D:
            return cos(x) + cos(3 * x)
        g = self.gamma
        dc = g * cos(x - z)
        if self.variant == COUPLED_W_4D:
            return ((cos(x) + dc, -dc), (-dc, cos(z) + dc))
        return ((cos(x) + cos(3 * x) + dc, -dc),
                (-dc, cos(z) + cos(3 * z) + dc))

    # -- exact Fourier data ------------------------------------------------
    def harmonics(self):
        """Per force component, the exact Fourier modes: list of (k, a) with
        V_i = sum_k a_k e^{i k.psi}; only the k with positive leading entry are
        listed (the conjugate partner is implied).  `a` is (re, im, gamma_pow)
        with gamma_pow in {0, 1} so callers can build exact coefficients at any
        precision: coefficient = (re + i*im) * gamma^gamma_pow."""
        half = (0.0, -0.5, 0)      # sin k.psi -> -i/2 at +k
        sixth = (0.0, -1.0 / 6, 0)
        cp = (0.0, -0.5, 1)        # +gamma*sin(x-z)
        cm = (0.0, +0.5, 1)        # -gamma*sin(x-z)
        if self.variant == ONE_HARMONIC_2D:
            return [[((1,), half)]]
        if self.variant == TWO_HARMONIC_2D:
            return [[((1,), half), ((3,), sixth)]]
        if self.variant == COUPLED_W_4D:
            return [[((1, 0), half), ((1, -1), cp)],
                    [((0, 1), half), ((1, -1), cm)]]
        return [[((1, 0), half), ((3, 0), sixth), ((1, -1), cp)],
                [((0, 1), half), ((0, 3), sixth), ((1, -1), cm)]]


@dataclass(frozen=True)
class MapSpec:
    """Full parameterization of a 2D or 4D standard map."""
    dim: int
    lam: tuple          # (lam,) for 2D, (lam1, lam2) for 4D; each in (0, 1]
    mu: tuple           # drift, same length as lam
    epsilon: float
    potential: PotentialSpec

    def __post_init__(self):
        if self.dim not in (2, 4):
            raise ValueError("dim must be 2 or 4")
        d = self.dim // 2
        if len(self.lam) != d or len(self.mu) != d:
            raise ValueError("lam/mu length must match dim/2")
        if not all(0 < l <= 1 for l in self.lam):
            raise ValueError("conformal factors must lie in (0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.potential.dim_angles != d:
            raise ValueError("potential dimension does not match map dimension")

    @property
    def d(self):
        return self.dim // 2

    def classify(self):
        lam, mu = self.lam, self.mu
        if all(l == 1 for l in lam):
            return "symplectic" if all(m == 0 for m in mu) else "symplectic-drift"
        if self.dim == 2:
            return "conformally symplectic"
        l1, l2 = lam
        if l1 == l2 != 1:
            return "conformally symplectic"
        if l1 != 1 and l2 == 1 and mu[1] == 0:
            return "mixed"
        if l1 != l2 and l1 < 1 and l2 < 1:
            return "dissipative"
        return "mixed" if (l1 == 1 and l2 != 1 and mu[0] == 0) else "other"

    def with_epsilon(self, eps):
        return replace(self, epsilon=eps)

    def with_mu(self, mu):
        return replace(self, mu=tuple(mu))

    # -- dynamics ----------------------------------------------------------
    def step(self, p):
        """One iteration; angles reduced mod 2*pi unless the point is lifted."""
        eps = self.epsilon
        if self.dim == 2:
            (lam,), (mu,) = self.lam, self.mu
            y1 = lam * p.y + mu + eps * self.potential.force(p.x)
            x1 = p.x + y1
            if not p.lifted:
                x1 %= TWO_PI
            return PhasePoint(y=y1, x=x1, lifted=p.lifted)
        l1, l2 = self.lam
        m1, m2 = self.mu
        f1, f2 = self.potential.force(p.x, p.z)
        y1 = l1 * p.y + m1 + eps * f1
        x1 = p.x + y1
        w1 = l2 * p.w + m2 + eps * f2
        z1 = p.z + w1
        if not p.lifted:
            x1 %= TWO_PI
            z1 %= TWO_PI
        return PhasePoint(y=y1, x=x1, w=w1, z=z1, lifted=p.lifted)

    def jacobian(self, p):
        """Analytic derivative of step, ordering (y, x) / (y, x, w, z)."""
        eps = self.epsilon
        if self.dim == 2:
            (lam,) = self.lam
            c = eps * self.potential.dforce(p.x)
            return [[lam, c], [lam, 1 + c]]
        l1, l2 = self.lam
        (d11, d12), (d21, d22) = self.potential.dforce(p.x, p.z)
        r_y = [l1, eps * d11, 0.0, eps * d12]
        r_x = [l1, 1 + eps * d11, 0.0, eps * d12]
        r_w = [0.0, eps * d21, l2, eps * d22]
        r_z = [0.0, eps * d21, l2, 1 + eps * d22]
        return [r_y, r_x, r_w, r_z]


@dataclass(frozen=True)
class PhasePoint:
    """Point in phase space; `lifted` keeps angles as unbounded reals."""
    y: float
    x: float
    w: float = 0.0
    z: float = 0.0
    lifted: bool = False

    def lift(self):
        return replace(self, lifted=True)


def _sin_cos_for(x):
    """Pick math or numpy trig depending on argument type."""
    if isinstance(x, (float, int)):
        return math.sin, math.cos
    import numpy as np
    return np.sin, np.cos


def conformal_check(spec, p):
    """Max-norm residual of Df^T J Df = lam*J (conformal symplecticity).

    For a 4D spec with lam1 != lam2 the identity fails globally; then the
    blockwise residuals (one per 2D factor at eps-coupling ignored... ) are
    returned as a tuple (lam1-block, lam2-block) computed on the diagonal
    blocks of Df^T J Df.
    """
    Df = spec.jacobian(p)
    n = spec.dim
    J = [[0.0] * n for _ in range(n)]
    if n == 2:
        J[0][1], J[1][0] = 1.0, -1.0        # dy ^ dx pairing for ordering (y, x)
    else:
        J[0][1], J[1][0] = 1.0, -1.0
        J[2][3], J[3][2] = 1.0, -1.0
    M = _mat_mul(_mat_mul(_transpose(Df), J), Df)
    if n == 2 or spec.lam[0] == spec.lam[1]:
        lam = spec.lam[0]
        return max(abs(M[i][j] - lam * J[i][j]) for i in range(n) for j in range(n))
    l1, l2 = spec.lam
    r1 = max(abs(M[i][j] - l1 * J[i][j]) for i in range(2) for j in range(2))
    r2 = max(abs(M[i][j] - l2 * J[i][j]) for i in range(2, 4) for j in range(2, 4))
    return (r1, r2)


def rotation_estimate(spec, p0, n0):
    """Average the action variables along an orbit and divide by 2*pi."""
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    p = p0
    sy = sw = 0.0
    for _ in range(n0):
        p = spec.step(p)
        sy += p.y
        sw += p.w
    if spec.dim == 2:
        return (sy / n0 / TWO_PI,)
    return (sy / n0 / TWO_PI, sw / n0 / TWO_PI)


def integrable_drift(lam, omega):
    """mu0 components 2*pi*(1 - lam_i)*omega_i."""
    return tuple(TWO_PI * (1 - l) * w for l, w in zip(lam, omega))


def spec_to_config(spec):
    """Serialize to the flat key set used by the config files."""
    cfg = {
        "dim": spec.dim,
        "lambda1": repr(spec.lam[0]),
        "mu1": repr(spec.mu[0]),
        "epsilon": repr(spec.epsilon),
        "potential": spec.potential.variant,
    }
    if spec.dim == 4:
        cfg["lambda2"] = repr(spec.lam[1])
        cfg["mu2"] = repr(spec.mu[1])
        cfg["gamma"] = repr(spec.potential.gamma)
    return cfg


def spec_from_config(cfg):
    dim = int(cfg["dim"])
    lam = [float(cfg["lambda1"])]
    mu = [float(cfg.get("mu1", 0.0))]
    gamma = float(cfg.get("gamma", 0.0))
    if dim == 4:
        lam.append(float(cfg["lambda2"]))
        mu.append(float(cfg.get("mu2", 0.0)))
    pot = PotentialSpec(cfg["potential"], gamma=gamma)
    return MapSpec(dim=dim, lam=tuple(lam), mu=tuple(mu),
                   epsilon=float(cfg["epsilon"]), potential=pot)


def _transpose(M):
    return [list(r) for r in zip(*M)]


def _mat_mul(A, B):
    n, m, k = len(A), len(B[0]), len(B)
    return [[sum(A[i][t] * B[t][j] for t in range(k)) for j in range(m)]
            for i in range(n)]
