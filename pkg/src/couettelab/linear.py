"""Per-mode laboratory for the linearized Boussinesq system around Couette flow.

With Theta = ik theta_hat, a single Fourier mode (k, eta) obeys

    d/dt f     = -nu L(t) f - gamma2 Theta
    d/dt Theta = -nu L(t) Theta + k^2 / L(t) f,      L(t) = k^2 + (eta - kt)^2.

The viscous part is integrated exactly; the 2x2 coupling with classical RK4
in the integrating-factor frame (``if_rk4_step``, shared with the nonlinear
solver).
"""
from __future__ import annotations
from typing import Callable, List, Tuple
from dataclasses import dataclass, replace as dc_replace
import numpy as np
import pandas as pd
import jax.tree_util as tu
from dataclasses_json import dataclass_json

from . import multipliers as mp, spectral as sp, utils as u

logger = u.init_logger(__name__)

@dataclass_json
@dataclass(frozen=True)
class LinearParams:
    """viscosity, Richardson number and the envelope constant c in exp(-c nu k^2 t^3)"""
    nu: float = 0.0
    gamma2: float = 1.0
    c_env: float = 1/12

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"nu should be >= 0, got {self.nu}")
        if not self.gamma2 > 0:
            raise ValueError(f"gamma2 should be > 0, got {self.gamma2}")
        if self.c_env < 0:
            raise ValueError(f"c_env should be >= 0, got {self.c_env}")

    @property
    def sigma(self) -> float:
        self.require_stratified()
        return float(np.sqrt(4 * self.gamma2 - 1))

    @property
    def gamma(self) -> float:
        return float(np.sqrt(self.gamma2))

    def require_stratified(self):
        if not self.gamma2 > 0.25:
            raise ValueError(f"gamma2 = {self.gamma2} violates γ² > 1/4")

@dataclass_json
@dataclass(frozen=True)
class ModeRunConfig:
    """one-mode experiment started from (f_hat, Theta_hat) = (1, 0)"""
    k: int = 1
    eta: float = 0.0
    nu: float = 0.0
    gamma2: float = 1.0
    c_env: float = 1/12
    t_end: float = 2000.0
    dt: float = 0.1

    def __post_init__(self):
        if self.k == 0:
            raise ValueError("k = 0 is pure heat decay and has no linear mode dynamics")
        if not self.t_end > 0:
            raise ValueError(f"t_end should be > 0, got {self.t_end}")
        if not self.dt > 0:
            raise ValueError(f"dt should be > 0, got {self.dt}")
        self.params

    @property
    def params(self) -> LinearParams:
        return LinearParams(nu=self.nu, gamma2=self.gamma2, c_env=self.c_env)

    def initial_state(self) -> "ModeState":
        return ModeState(self.k, self.eta, 1.0 + 0j, 0j)

@dataclass(frozen=True)
class ModeState:
    k: int
    eta: float
    f_hat: complex
    Theta_hat: complex
    t: float = 0.0

    def __post_init__(self):
        if self.k == 0:
            raise ValueError("k = 0 is pure heat decay and has no linear mode dynamics")

    @property
    def critical_time(self) -> float:
        return self.eta / self.k

    def replace(self, **kwargs) -> "ModeState":
        return dc_replace(self, **kwargs)

# ====================
# integrating factor
# ====================

def viscous_integral(k, eta, t0, t1):
    """int_{t0}^{t1} (k^2 + (eta - ks)^2) ds

    Written as (t1 - t0)(k^2 + (a^2 + ab + b^2)/3) with a = eta - k t0,
    b = eta - k t1, which is exact for the quadratic and avoids cancellation
    between large cubic terms.
    """
    a = eta - k * t0
    b = eta - k * t1
    return (t1 - t0) * (np.square(k) + (a * a + a * b + b * b) / 3)

def if_rk4_step(rhs: Callable, t: float, y, h: float, e_half, e_half2):
    """one RK4 step of y' = -a(t) y + rhs(t, y) in the integrating-factor frame

    ``e_half`` and ``e_half2`` are the exact decay factors over [t, t+h/2]
    and [t+h/2, t+h]; they are pytrees matching ``y`` (or scalars for
    tuple states). Any jax pytree of numpy leaves works as state.
    """
    tm = tu.tree_map
    e_full = tm(lambda a, b: a * b, e_half, e_half2)
    k1 = rhs(t, y)
    y2 = tm(lambda e, x, d: e * (x + 0.5 * h * d), e_half, y, k1)
    k2 = rhs(t + 0.5 * h, y2)
    y3 = tm(lambda e, x, d: e * x + 0.5 * h * d, e_half, y, k2)
    k3 = rhs(t + 0.5 * h, y3)
    y4 = tm(lambda e, e2, x, d: e * x + h * e2 * d, e_full, e_half2, y, k3)
    k4 = rhs(t + h, y4)
    return tm(lambda e, e2, x, d1, d2, d3, d4:
              e * x + h / 6 * (e * d1 + 2 * e2 * d2 + 2 * e2 * d3 + d4),
              e_full, e_half2, y, k1, k2, k3, k4)

# ====================
# mode operations
# ====================

def mode_rhs(state: ModeState, params: LinearParams) -> Tuple[complex, complex]:
    k, eta, t = state.k, state.eta, state.t
    if k == 0:
        raise ValueError("mode_rhs needs k != 0")
    L = k**2 + (eta - k * t)**2
    df = -params.nu * L * state.f_hat - params.gamma2 * state.Theta_hat
    dTh = -params.nu * L * state.Theta_hat + k**2 / L * state.f_hat
    return df, dTh

def _coupling(k, eta, gamma2):
    def rhs(t, y):
        f, Th = y
        return (-gamma2 * Th, k**2 / (k**2 + (eta - k * t)**2) * f)
    return rhs

def integrate_mode(state0: ModeState, params: LinearParams, t_end: float,
                   dt: float) -> List[ModeState]:
    """Integrate one mode from state0.t to t_end.

    Steps are dt = min(dt, 0.1 (1 + |t - eta/k|)), shortened to land on t_end.

    Returns
    -------
    trajectory : list of ModeState, starting with state0
    """
    if not dt > 0:
        raise ValueError(f"dt should be > 0, got {dt}")
    if state0.k == 0:
        raise ValueError("integrate_mode needs k != 0")
    k, eta = state0.k, state0.eta
    rhs = _coupling(k, eta, params.gamma2)
    t = state0.t
    y = (complex(state0.f_hat), complex(state0.Theta_hat))
    traj = [state0]
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        h = min(dt, 0.1 * (1 + abs(t - eta / k)), t_end - t)
        e1 = np.exp(-params.nu * viscous_integral(k, eta, t, t + 0.5 * h))
        e2 = np.exp(-params.nu * viscous_integral(k, eta, t + 0.5 * h, t + h))
        y = if_rk4_step(rhs, t, y, h, (e1, e1), (e2, e2))
        t = t + h
        traj.append(ModeState(k, eta, y[0], y[1], t))
    return traj

def trajectory_frame(traj: List[ModeState]) -> pd.DataFrame:
    return pd.DataFrame({
        't': [s.t for s in traj],
        'f_re': [np.real(s.f_hat) for s in traj],
        'f_im': [np.imag(s.f_hat) for s in traj],
        'Theta_re': [np.real(s.Theta_hat) for s in traj],
        'Theta_im': [np.imag(s.Theta_hat) for s in traj],
    })

def decay_envelope(k: int, eta: float, t, nu: float, c: float = 1/12):
    """(growth_f, decay_theta) of the linear estimate

    growth_f    = ((k^2 + (kt - eta)^2) / (k^2 + eta^2))^{1/4} exp(-c nu k^2 t^3)
    decay_theta = ((k^2 + eta^2) / (k^2 + (kt - eta)^2))^{1/4} exp(-c nu k^2 t^3)
    """
    if k == 0:
        raise ValueError("decay_envelope needs k != 0")
    ratio = (k**2 + np.square(k * np.asarray(t) - eta)) / (k**2 + eta**2)
    damp = np.exp(-c * nu * k**2 * np.power(t, 3))
    return ratio**0.25 * damp, ratio**-0.25 * damp

def _form_weight(t, k, eta):
    return np.sqrt(1 + np.square(t - eta / k))

def symmetrized_energy(state: ModeState, params: LinearParams) -> float:
    """w^{-1}|f|^2 + w gamma2 |Theta|^2 + Re(f conj Theta) for t >= eta/k,
    w |f|^2 + w^{-1} gamma2 |Theta|^2 - Re(f conj Theta) before,
    with w = (1 + (t - eta/k)^2)^{1/2}"""
    params.require_stratified()
    w = _form_weight(state.t, state.k, state.eta)
    sgn = 1.0 if state.t >= state.eta / state.k else -1.0
    if sgn < 0: w = 1 / w
    f, Th = state.f_hat, state.Theta_hat
    return float(abs(f)**2 / w + w * params.gamma2 * abs(Th)**2 + sgn * np.real(f * np.conj(Th)))

def min_form_eigenvalue(t: float, k: int, eta: float, gamma2: float) -> float:
    """smallest eigenvalue of the Hermitian form behind symmetrized_energy

    Defined for any gamma2 > 0; negative values mean the form is indefinite.
    """
    w = _form_weight(t, k, eta)
    sgn = 1.0 if t >= eta / k else -1.0
    if sgn < 0: w = 1 / w
    form = np.array([[1 / w, 0.5 * sgn], [0.5 * sgn, w * gamma2]])
    return float(np.linalg.eigvalsh(form)[0])

def mode_envelopes(traj: List[ModeState], params: LinearParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(t, |f| envelope, |theta| envelope) from the symmetrized energy

    The inviscid mode oscillates in log t and f_hat passes through zero, so
    amplitudes are read off E: |f| ~ sqrt(w E) and |theta| ~ sqrt(E / (w gamma2)) / |k|.
    """
    t = np.array([s.t for s in traj])
    E = np.array([symmetrized_energy(s, params) for s in traj])
    k, eta = traj[0].k, traj[0].eta
    w = _form_weight(t, k, eta)
    return t, np.sqrt(w * E), np.sqrt(E / (w * params.gamma2)) / abs(k)

def gronwall_constant(traj: List[ModeState], params: LinearParams) -> float:
    """smallest C' >= 0 with E(t) <= E(t0) exp(C' int <s - eta/k>^{-3/2} ds)"""
    E = np.array([symmetrized_energy(s, params) for s in traj])
    k, eta = traj[0].k, traj[0].eta
    t = np.array([s.t for s in traj])
    r = eta / k
    I = mp.gfunc(t - r) - mp.gfunc(t[0] - r)
    sel = I > 1e-12
    if not np.any(sel): return 0.0
    return float(max(0.0, np.max(np.log(E[sel] / E[0]) / I[sel])))

def dissipation_time(k: int, eta: float, params: LinearParams, level: float = 10.0,
                     dt: float = 0.05, t_max: float = None) -> float:
    """first time the symmetrized energy of the mode started at (1, 0) falls to
    exp(-level) of its initial value"""
    if not params.nu > 0:
        raise ValueError("dissipation_time needs nu > 0")
    params.require_stratified()
    if t_max is None:
        t_max = abs(eta / k) + 10 * (level / (params.nu * k**2))**(1/3)
    rhs = _coupling(k, eta, params.gamma2)
    t = 0.0
    y = (1.0 + 0j, 0j)
    E0 = symmetrized_energy(ModeState(k, eta, y[0], y[1], t), params)
    target = E0 * np.exp(-level)
    while t < t_max:
        h = min(dt, 0.1 * (1 + abs(t - eta / k)))
        e1 = np.exp(-params.nu * viscous_integral(k, eta, t, t + 0.5 * h))
        e2 = np.exp(-params.nu * viscous_integral(k, eta, t + 0.5 * h, t + h))
        y_new = if_rk4_step(rhs, t, y, h, (e1, e1), (e2, e2))
        E_new = symmetrized_energy(ModeState(k, eta, y_new[0], y_new[1], t + h), params)
        if E_new <= target:
            # log-linear interpolation inside the last step
            E_old = symmetrized_energy(ModeState(k, eta, y[0], y[1], t), params)
            frac = np.log(E_old / target) / np.log(E_old / E_new)
            return float(t + frac * h)
        y, t = y_new, t + h
    raise RuntimeError(f"mode (k={k}, eta={eta}) did not dissipate by t_max = {t_max}")

# ====================
# good unknowns
# ====================

def _good_symbols(f: sp.SpectralField, frame: sp.ShearFrame, params: LinearParams):
    params.require_stratified()
    K, ETA = f.grid.wavenumbers()
    nz = K != 0
    Ks = np.where(nz, K, 1)
    N = mp.symbol_N(frame.t, Ks, ETA)
    Nd = mp.symbol_Ndot(frame.t, Ks, ETA)
    return K, nz, N, Nd

def _check_no_zero_mode(*fields):
    for fld in fields:
        if np.any(fld.coeffs[0] != 0):
            raise ValueError("good unknowns are defined for k != 0 modes only; input has k = 0 content")

def to_good_unknowns(f_neq: sp.SpectralField, theta_neq: sp.SpectralField,
                     frame: sp.ShearFrame, params: LinearParams):
    """X1 = N^{-1} f, X2 = (1 - 1/(4 gamma2))^{-1/2} (gamma^{-1} Ndot f + gamma N d_z theta)"""
    _check_no_zero_mode(f_neq, theta_neq)
    K, nz, N, Nd = _good_symbols(f_neq, frame, params)
    g = params.gamma
    scale = (1 - 1 / (4 * params.gamma2))**-0.5
    X1 = np.where(nz, f_neq.coeffs / N, 0)
    X2 = np.where(nz, scale * (Nd * f_neq.coeffs / g + g * N * 1j * K * theta_neq.coeffs), 0)
    return f_neq.replace(coeffs=X1), theta_neq.replace(coeffs=X2)

def from_good_unknowns(X1: sp.SpectralField, X2: sp.SpectralField,
                       frame: sp.ShearFrame, params: LinearParams):
    """f = N X1, theta = gamma^{-1} d_z^{-1} ((1 - 1/(4 gamma2))^{1/2} N^{-1} X2 - gamma^{-1} Ndot X1)"""
    _check_no_zero_mode(X1, X2)
    K, nz, N, Nd = _good_symbols(X1, frame, params)
    g = params.gamma
    scale = (1 - 1 / (4 * params.gamma2))**0.5
    Ks = np.where(nz, K, 1)
    f = np.where(nz, N * X1.coeffs, 0)
    th = np.where(nz, (scale * X2.coeffs / N - Nd * X1.coeffs / g) / (g * 1j * Ks), 0)
    return X1.replace(coeffs=f), X2.replace(coeffs=th)
