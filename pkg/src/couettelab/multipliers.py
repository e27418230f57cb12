"""Time-dependent Fourier multipliers of the nonzero and zero modes.

Nonzero modes are weighted by

    A(t, k, eta) = exp(c nu^{1/3} t) * M(t, k, eta) * <k, eta>^s,
    M = exp(K (M1 + M2 + M3)),

where M1 (enhanced dissipation), M2 (inviscid damping) and M3 (a slightly
stronger damping for small |k|) vanish at t = 0 and decrease in t. The zero
mode theta_02 is weighted by m(t, eta), built on the resonance intervals
I_{k,eta} = [2 eta/(2k+1), 2 eta/(2k-1)].

All symbol functions accept scalars or broadcastable arrays; k = 0 is
rejected wherever the symbol is undefined.
"""
from __future__ import annotations
from typing import List, Tuple
from dataclasses import dataclass, field
from functools import lru_cache
import numpy as np
from scipy import integrate, interpolate, special
from dataclasses_json import dataclass_json

from . import utils as u

logger = u.init_logger(__name__)

# int_R (1 + s^2)^{-3/4} ds = B(1/2, 1/4)
I_INF = float(special.beta(0.5, 0.25))
# lower bound of the zero-mode multiplier: exp(-sum_k k^-2 I_INF)
M_MIN = float(np.exp(-np.pi**2 / 6 * I_INF))
# quadrature tolerance, tighter than the 1e-10 contract so that finite
# differences of quadrature values stay meaningful
QUAD_TOL = 1e-12

def _check_k(k):
    if np.any(np.asarray(k) == 0):
        raise ValueError("symbol is undefined for k = 0")

# ====================
# phi profile
# ====================

def smoothstep(x):
    """C-infinity step from 0 (x <= 0) to 1 (x >= 1), with S(x) + S(1-x) = 1"""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide='ignore', over='ignore'):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)

@lru_cache(maxsize=None)
def _ramp_spline(n_table):
    # R(x) = int_0^x S, R(1) = 1/2 by symmetry of S
    nodes = np.linspace(0.0, 1.0, n_table)
    vals = np.zeros(n_table)
    for i in range(1, n_table):
        piece, _ = integrate.quad(lambda v: float(smoothstep(v)), nodes[i-1], nodes[i],
                                  epsabs=1e-15, epsrel=1e-13)
        vals[i] = vals[i-1] + piece
    vals *= 0.5 / vals[-1]
    return interpolate.CubicSpline(nodes, vals)

@dataclass_json
@dataclass(frozen=True)
class PhiProfile:
    """Non-decreasing phi: R -> [0, 1] with phi(x) = 1/2 + x/4 on [-1, 1].

    phi' equals 1/4 on [-1, 1] and ramps to 0 over [-3, -1] and [1, 3]
    through ``smoothstep``; phi itself is the exact integral of phi', tabulated
    once on ``n_table`` nodes for the ramp pieces.
    """
    n_table: int = 2001

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        return np.where(ax <= 1, 0.25, 0.25 * smoothstep((3 - ax) / 2))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        ramp = _ramp_spline(self.n_table)
        # value for x >= 0; odd symmetry about (0, 1/2) gives the rest
        right = np.where(ax <= 1, 0.5 + ax / 4,
                         1.0 - 0.5 * ramp(np.clip((3 - ax) / 2, 0, 1)))
        right = np.where(ax >= 3, 1.0, right)
        return np.where(x >= 0, right, 1.0 - right)

# ====================
# parameters
# ====================

@dataclass_json
@dataclass(frozen=True)
class MultiplierParams:
    """Parameters fixing every multiplier symbol.

    Parameters
    ----------
    nu : viscosity, > 0
    gamma2 : Richardson number, > 1/4
    s : Sobolev index, >= 6
    c : enhanced-dissipation rate in exp(c nu^{1/3} t), 0 < c <= 1/8
    K : weight of M1 + M2 + M3, >= 3/sigma; defaults to max(3/sigma, 4)
    phi : PhiProfile
    """
    nu: float
    gamma2: float = 1.0
    s: float = 6
    c: float = 1/8
    K: float = None
    phi: PhiProfile = field(default_factory=PhiProfile)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu should be > 0, got {self.nu}")
        if not self.gamma2 > 0.25:
            raise ValueError(f"gamma2 = {self.gamma2} violates γ² > 1/4")
        if not self.s >= 6:
            raise ValueError(f"s = {self.s} violates s ≥ 6")
        if not (0 < self.c <= 1/8):
            raise ValueError(f"c = {self.c} violates 0 < c ≤ 1/8")
        if self.K is None:
            object.__setattr__(self, 'K', max(3 / self.sigma, 4.0))
        if not self.K >= 3 / self.sigma:
            raise ValueError(f"K = {self.K} violates K ≥ 3/σ = {3 / self.sigma:.6g}")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(4 * self.gamma2 - 1))

    @property
    def c0(self) -> float:
        """lower bound of script_M: exp(-K(1 + pi + sup|M3|))"""
        return float(np.exp(-self.K * (1 + np.pi + I_INF)))

# ====================
# M1, M2, M3
# ====================

def _x_arg(t, k, eta, nu):
    k = np.asarray(k, dtype=float)
    return nu**(1/3) * np.abs(k)**(-1/3) * np.sign(k) * (eta - k * t)

def m1(t, k, eta, params: MultiplierParams):
    """M1 = phi(x(t)) - phi(x(0)), x(t) = nu^{1/3}|k|^{-1/3} sgn(k)(eta - kt)"""
    _check_k(k)
    phi = params.phi
    return phi(_x_arg(t, k, eta, params.nu)) - phi(_x_arg(0.0, k, eta, params.nu))

def m1_rate(t, k, eta, params: MultiplierParams):
    _check_k(k)
    return -params.nu**(1/3) * np.abs(k)**(2/3) * params.phi.derivative(_x_arg(t, k, eta, params.nu))

def m2(t, k, eta):
    _check_k(k)
    r = np.asarray(eta, dtype=float) / k
    return np.arctan(r - t) - np.arctan(r)

def m2_rate(t, k, eta):
    _check_k(k)
    return -np.square(k) / (np.square(k) + np.square(eta - k * t))

def gfunc(x):
    """G(x) = int_0^x (1 + v^2)^{-3/4} dv, odd, G(+-inf) = +-I_INF/2

    Uses v = x^2/(1+x^2): G = (1/2) B(v; 1/2, 1/4), switching to the
    complementary incomplete beta for |x| > 1 to keep the tail accurate.
    """
    x = np.asarray(x, dtype=float)
    x2 = np.square(x)
    small = 0.5 * I_INF * special.betainc(0.5, 0.25, x2 / (1 + x2))
    large = 0.5 * I_INF * (1 - special.betainc(0.25, 0.5, 1 / (1 + x2)))
    return np.sign(x) * np.where(np.abs(x) <= 1, small, large)

def m3(t: float, k: int, eta: float) -> float:
    """M3 = -int_0^t (k^2 + (eta - ks)^2)^{-3/4} ds by adaptive quadrature"""
    _check_k(k)
    if t == 0: return 0.0
    tc = eta / k
    points = [tc] if 0 < tc < t else None
    val, _ = integrate.quad(lambda s: (k**2 + (eta - k*s)**2)**(-0.75), 0, t,
                            points=points, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return -val

def m3_table(t, k, eta):
    """closed form of M3 for arrays: -|k|^{-3/2} [G(t - eta/k) + G(eta/k)]"""
    _check_k(k)
    k = np.asarray(k, dtype=float)
    r = eta / k
    return -np.abs(k)**(-1.5) * (gfunc(t - r) + gfunc(r))

def m3_rate(t, k, eta):
    _check_k(k)
    return -(np.square(k) + np.square(eta - k * t))**(-0.75)

def script_M(t, k, eta, params: MultiplierParams):
    """M = exp(K (M1 + M2 + M3)), in [c0, 1]"""
    return np.exp(params.K * (m1(t, k, eta, params) + m2(t, k, eta) + m3_table(t, k, eta)))

def calA(t, k, eta, params: MultiplierParams):
    """A = exp(c nu^{1/3} t) M <k, eta>^s"""
    return (np.exp(params.c * params.nu**(1/3) * t) * script_M(t, k, eta, params)
            * u.bracket(k, eta)**params.s)

def ck_rates(t, k, eta, params: MultiplierParams):
    """(-dM1/dt, -dM2/dt, -dM3/dt), all nonnegative"""
    return -m1_rate(t, k, eta, params), -m2_rate(t, k, eta), -m3_rate(t, k, eta)

# ====================
# N and its time derivative
# ====================

def symbol_N(t, k, eta):
    """|k|^{-1/2} (k^2 + (eta - kt)^2)^{1/4}"""
    _check_k(k)
    return np.abs(k)**(-0.5) * (np.square(k) + np.square(eta - k * t))**0.25

def symbol_Ndot(t, k, eta):
    """d/dt symbol_N = (1/2)(kt - eta) k |k|^{-1/2} (k^2 + (eta - kt)^2)^{-3/4}"""
    _check_k(k)
    return (0.5 * (k * t - eta) * k * np.abs(k)**(-0.5)
            * (np.square(k) + np.square(eta - k * t))**(-0.75))

# ====================
# zero-mode multiplier m
# ====================

@dataclass(frozen=True)
class ResonanceIndex:
    eta: float
    k: int
    interval: Tuple[float, float]

def critical_start(eta: float) -> float:
    """t(eta) = 2|eta| / (2 E(sqrt|eta|) + 1)"""
    return 2 * abs(eta) / (2 * u.floor_sqrt(abs(eta)) + 1)

def resonance_partition(eta: float) -> List[ResonanceIndex]:
    """resonance intervals tiling [t(eta), 2|eta|], in increasing time"""
    if abs(eta) < 3:
        raise ValueError(f"resonance intervals need |eta| >= 3, got {eta}")
    n = u.floor_sqrt(abs(eta))
    sgn = 1 if eta > 0 else -1
    a = abs(eta)
    return [ResonanceIndex(eta, sgn * k, (2 * a / (2 * k + 1), 2 * a / (2 * k - 1)))
            for k in range(n, 0, -1)]

def _resonant_rate(s, k, a):
    return 1.0 / (k**2 * (1 + (s - a / k)**2)**0.75)

@lru_cache(maxsize=None)
def _interval_integrals(a: float) -> Tuple[Tuple[int, float, float, float], ...]:
    """(k, left, right, int_{I_k} rate) for |eta| = a, k = 1, 2, ..."""
    out = []
    for ri in resonance_partition(a):
        k = ri.k
        left, right = ri.interval
        val, _ = integrate.quad(_resonant_rate, left, right, args=(k, a), points=[a / k],
                                epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        out.append((k, left, right, val))
    return tuple(sorted(out))

def m_zero_mode(t: float, eta: float) -> float:
    """zero-mode multiplier m(t, eta) in [M_MIN, 1]

    m = 1 for |eta| < 3 or t >= 2|eta|; on I_{k,eta} it solves
    dm/dt = m / (k^2 (1 + (t - |eta|/k)^2)^{3/4}) with m(2|eta|) = 1, and it
    is frozen at m(t(eta)) for t <= t(eta).
    """
    a = abs(float(eta))
    if a < 3 or t >= 2 * a:
        return 1.0
    t = max(t, critical_start(a))
    total = 0.0
    for k, left, right, full in _interval_integrals(a):
        if t >= right:
            break
        if t <= left:
            total += full
        else:
            part, _ = integrate.quad(_resonant_rate, t, right, args=(k, a),
                                     epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
            total += part
    return float(np.exp(-total))

def m_rate(t: float, eta: float) -> float:
    """dm/dt from the defining equation (zero outside the resonant window)"""
    a = abs(float(eta))
    if a < 3 or t >= 2 * a or t < critical_start(a):
        return 0.0
    for k, left, right, _ in _interval_integrals(a):
        if left <= t < right:
            return m_zero_mode(t, eta) * _resonant_rate(t, k, a)
    return 0.0

def m_table(t: float, eta: np.ndarray) -> np.ndarray:
    return np.array([m_zero_mode(t, e) for e in np.ravel(eta)]).reshape(np.shape(eta))

# ====================
# grid tables
# ====================

def nonzero_tables(t: float, K: np.ndarray, ETA: np.ndarray, params: MultiplierParams):
    """(A, N, Ndot) on a (k, eta) mesh; the k = 0 row is set to zero"""
    nz = K != 0
    Ks = np.where(nz, K, 1)
    A = np.where(nz, calA(t, Ks, ETA, params), 0.0)
    N = np.where(nz, symbol_N(t, Ks, ETA), 0.0)
    Nd = np.where(nz, symbol_Ndot(t, Ks, ETA), 0.0)
    return A, N, Nd

# ====================
# lemma checks
# ====================

def low_bound_margin(nu, k, eta, t, phi: PhiProfile):
    """(1/4)nu(k^2+(eta-kt)^2) + nu^{1/3}|k|^{2/3} phi'(x) - (1/4)nu^{1/3}|k|^{2/3},
    relative to (1/4)nu^{1/3}|k|^{2/3}"""
    _check_k(k)
    ref = 0.25 * nu**(1/3) * np.abs(k)**(2/3)
    lhs = (0.25 * nu * (np.square(k) + np.square(eta - k * t))
           + nu**(1/3) * np.abs(k)**(2/3) * phi.derivative(_x_arg(t, k, eta, nu)))
    return (lhs - ref) / ref

def m_lem_ratio(t, k, eta, xi, params: MultiplierParams):
    """[M <k,eta>^s - M <k,xi>^s] over the commutator bound"""
    s = params.s
    num = (script_M(t, k, eta, params) * u.bracket(k, eta)**s
           - script_M(t, k, xi, params) * u.bracket(k, xi)**s)
    d = np.abs(eta - xi)
    den = (d * (params.nu**(1/3) * np.abs(k)**(-1/3) + 1 / np.abs(k)) * u.bracket(k, xi)**s
           + d * u.bracket(k, eta - xi)**(s - 1))
    return num / den

@dataclass(frozen=True)
class LemmaReport:
    lemma: str
    samples: int
    worst: float
    passed: bool

def _fd_rel_err(fun, rate, t, h, scale=0.0):
    fd = (fun(t + h) - fun(t - h)) / (2 * h)
    r = rate(t)
    return abs(fd - r) / max(abs(r), scale, 1e-300)

def verify_lemmas(samples: int, key: u.PRNGKey, params: MultiplierParams,
                  fd_samples: int = 200) -> List[LemmaReport]:
    """sample every multiplier property and report the worst case of each

    ``samples`` drives the vectorized checks; ``fd_samples`` the quadrature
    based finite-difference and zero-mode checks.
    """
    keys = key.split(12)
    n = int(samples)
    nu = 10**u.uniform(keys[0], -8, -1, n)
    k = _random_k(keys[1], keys[2], 64, n)
    eta = u.uniform(keys[3], -256, 256, n)
    t = u.uniform(keys[4], 0, 500, n)
    reports = []

    margin = low_bound_margin(nu, k, eta, t, params.phi)
    reports.append(LemmaReport("low-bound", n, float(margin.min()), bool(margin.min() >= -1e-12)))

    Mv = script_M(t, k, eta, params)
    ok = (Mv >= params.c0 * (1 - 1e-12)) & (Mv <= 1)
    reports.append(LemmaReport("script-M-range", n, float(Mv.min()), bool(ok.all())))

    A = calA(t, k, eta, params)
    ratio = A / (np.exp(params.c * params.nu**(1/3) * t) * u.bracket(k, eta)**params.s)
    ok = (ratio >= params.c0 * (1 - 1e-12)) & (ratio <= 1 + 1e-12)
    reports.append(LemmaReport("calA-range", n, float(ratio.min()), bool(ok.all())))

    xi = u.uniform(keys[5], -256, 256, n)
    sel = np.abs(xi - eta) > 1e-8
    r = m_lem_ratio(t[sel], k[sel], eta[sel], xi[sel], params)
    reports.append(LemmaReport("M-lem-ratio", int(sel.sum()), float(r.max()), bool(r.max() < 100)))

    nf = int(fd_samples)
    eta_m = u.uniform(keys[6], 3, 400, nf)
    frac = u.uniform(keys[7], 0.0, 1.0, nf)
    mvals = np.array([m_zero_mode(critical_start(e) + f * (2 * e - critical_start(e)), e)
                      for e, f in zip(eta_m, frac)])
    ok = (mvals >= M_MIN * (1 - 1e-6)) & (mvals <= 1)
    reports.append(LemmaReport("m-range", nf, float(mvals.min()), bool(ok.all())))

    # finite differences at moderate wavenumbers, where the rates stay well
    # above the quadrature noise
    h = 1e-3
    p1 = MultiplierParams(nu=1e-2, gamma2=params.gamma2, s=params.s, c=params.c, K=params.K)
    k_fd = _random_k(keys[8], keys[9], 8, nf)
    eta_fd = u.uniform(keys[10], -20, 20, nf)
    t_fd = u.uniform(keys[11], 0.5, 30, nf)
    eta_z = 3 + 57 * frac
    errs = {'m1': 0.0, 'm2': 0.0, 'm3': 0.0, 'm': 0.0}
    quad_err = 0.0
    for ki, ei, ti, ez, fi in zip(k_fd, eta_fd, t_fd, eta_z, frac):
        ki, ei, ti, ez = int(ki), float(ei), float(ti), float(ez)
        scale1 = 0.25 * p1.nu**(1/3) * abs(ki)**(2/3)
        errs['m1'] = max(errs['m1'], _fd_rel_err(lambda x: float(m1(x, ki, ei, p1)),
                                                 lambda x: float(m1_rate(x, ki, ei, p1)), ti, h, scale1))
        errs['m2'] = max(errs['m2'], _fd_rel_err(lambda x: float(m2(x, ki, ei)),
                                                 lambda x: float(m2_rate(x, ki, ei)), ti, h))
        errs['m3'] = max(errs['m3'], _fd_rel_err(lambda x: float(m3_table(x, ki, ei)),
                                                 lambda x: float(m3_rate(x, ki, ei)), ti, h))
        quad_err = max(quad_err, abs(m3(ti, ki, ei) - float(m3_table(ti, ki, ei))))
        tm = _interior_point(ez, float(fi))
        errs['m'] = max(errs['m'], _fd_rel_err(lambda x: m_zero_mode(x, ez),
                                               lambda x: m_rate(x, ez), tm, h))
    for name, err in errs.items():
        reports.append(LemmaReport(f"ode-{name}", nf, err, bool(err < 1e-6)))
    reports.append(LemmaReport("m3-quad", nf, quad_err, bool(quad_err < 1e-10)))

    for rep in reports:
        level = logger.info if rep.passed else logger.warning
        level(f"{rep.lemma}: samples={rep.samples} worst={rep.worst:.6g} passed={rep.passed}")
    return reports

def _random_k(key_mag, key_sign, kmax, n):
    mag = np.minimum(np.floor(u.uniform(key_mag, 1, kmax + 1, n)), kmax)
    return (mag * np.where(u.uniform(key_sign, size=n) < 0.5, -1, 1)).astype(int)

def _interior_point(eta: float, frac: float) -> float:
    """a point well inside one resonance interval of eta"""
    parts = resonance_partition(eta)
    ri = parts[min(int(frac * len(parts)), len(parts) - 1)]
    left, right = ri.interval
    return left + (0.25 + 0.5 * frac) * (right - left)
