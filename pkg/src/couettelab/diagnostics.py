"""Energies, physical norms, rate fits and audits of simulation trajectories."""
from __future__ import annotations
from typing import Dict, List, Optional, Sequence, Tuple, TYPE_CHECKING
from dataclasses import dataclass, asdict, field
import numpy as np
import pandas as pd
from scipy import integrate
from dataclasses_json import dataclass_json

from . import linear as lin, multipliers as mp, spectral as sp, utils as u

if TYPE_CHECKING:
    from .sim import SimConfig, SimState

logger = u.init_logger(__name__)

# column order of the time-series CSV
CSV_COLUMNS = ['t', 'E_neq', 'D', 'ED', 'CK2', 'CK3', 'F0', 'H02', 'V0',
               'u1_neq', 'u2_neq', 'omega_neq', 'theta_neq']

@dataclass_json
@dataclass(frozen=True)
class EnergyLedger:
    """One time slice of the energy functionals.

    The last four fields feed the energy-inequality and theorem audits and
    are not part of the CSV schema.
    """
    t: float
    E_neq: float
    D: float
    ED: float
    CK2: float
    CK3: float
    F0: float
    H02: float
    V0: float
    u1_neq: float
    u2_neq: float
    omega_neq: float
    theta_neq: float
    linear_term: float = 0.0
    theta0_Hs: float = 0.0
    w_Hs: float = 0.0
    th_Hs: float = 0.0

    def row(self) -> List[float]:
        return [getattr(self, c) for c in CSV_COLUMNS]

    @property
    def dissipation(self) -> float:
        """D + ED + CK2 + CK3"""
        return self.D + self.ED + self.CK2 + self.CK3

@dataclass(frozen=True)
class RateFit:
    window: Tuple[float, float]
    power_exponent: float
    exp_rate: float
    residual: float

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError(f"fit window {self.window} is empty")

# ====================
# ledgers
# ====================

def physical_norms(state: SimState) -> Tuple[float, float, float, float]:
    """grid-normalized L2 norms of P_neq u1, P_neq u2, P_neq omega and P_neq theta

    z = x - ty is an L2 isometry, so the sheared-frame coefficients give the
    lab-frame norms by Parseval.
    """
    u1, u2 = sp.biot_savart(state.f_neq, state.frame)
    return (np.sqrt(u1.norm2()), np.sqrt(u2.norm2()),
            np.sqrt(state.f_neq.norm2()), np.sqrt(state.theta_neq.norm2()))

def _weighted_good_unknowns(state: SimState, params: mp.MultiplierParams):
    grid = state.grid
    t = state.t
    K, ETA = grid.wavenumbers()
    A, N, _ = mp.nonzero_tables(t, K, ETA, params)
    lparams = lin.LinearParams(nu=params.nu, gamma2=params.gamma2)
    X1, X2 = lin.to_good_unknowns(state.f_neq, state.theta_neq, state.frame, lparams)
    L = np.where(K != 0, np.square(K) + np.square(ETA - K * t), 1.0)
    return K, ETA, L, A, N, X1.coeffs, X2.coeffs

def compute_ledger(state: SimState, params: mp.MultiplierParams) -> EnergyLedger:
    """Assemble every energy of ``state`` from per-mode symbols.

    Parameters
    ----------
    state : SimState
    params : MultiplierParams
        fixes A, m and the constants K, c, s (requires gamma2 > 1/4)

    Returns
    -------
    EnergyLedger
    """
    grid = state.grid
    K, ETA, L, A, N, X1, X2 = _weighted_good_unknowns(state, params)
    nu, s = params.nu, params.s
    nz = K != 0
    a2 = np.square(A) * (np.abs(X1)**2 + np.abs(X2)**2)

    E = 0.5 * np.sum(a2)
    D = 0.75 * nu * np.sum(L * a2)
    ED = 0.125 * nu**(1/3) * np.sum(np.abs(K)**(2/3) * a2)
    CK2 = params.K * np.sum(np.where(nz, np.square(K) / L, 0) * a2)
    CK3 = params.K * np.sum(np.where(nz, L**-0.75, 0) * a2)
    lin_term = (3 / (2 * params.sigma) * np.sum(
        np.square(A) * np.abs(K)**3 * L**-1.5 * np.abs(X1) * np.abs(X2)))

    eta = grid.eta()
    m = mp.m_table(state.t, eta)
    F0 = sp.hs_norm2_zero(state.f0, grid, s)
    H02 = sp.hs_norm2_zero(state.theta02 / m, grid, s)
    V0 = sp.hs_norm2_zero(state.u0_1, grid, s)
    theta0 = np.sqrt(sp.hs_norm2_zero(state.theta01 + state.theta02, grid, s))

    weight = sp.sobolev_weight(K, ETA, s)
    w_Hs = np.sqrt(np.sum(np.square(weight) * np.abs(X1)**2))
    th_Hs = np.sqrt(np.sum(np.square(weight * np.abs(K) * N) * np.abs(state.theta_neq.coeffs)**2))

    u1n, u2n, wn, thn = physical_norms(state)
    return EnergyLedger(
        t=float(state.t), E_neq=float(E), D=float(D), ED=float(ED), CK2=float(CK2), CK3=float(CK3),
        F0=F0, H02=H02, V0=V0, u1_neq=float(u1n), u2_neq=float(u2n), omega_neq=float(wn),
        theta_neq=float(thn), linear_term=float(lin_term), theta0_Hs=float(theta0),
        w_Hs=float(w_Hs), th_Hs=float(th_Hs),
    )

def physical_ledger(state: SimState) -> EnergyLedger:
    """ledger of a state outside the stratified regime: the multiplier
    energies are undefined there and recorded as NaN"""
    u1n, u2n, wn, thn = physical_norms(state)
    nan = float("nan")
    return EnergyLedger(t=float(state.t), E_neq=nan, D=nan, ED=nan, CK2=nan, CK3=nan,
                        F0=nan, H02=nan, V0=nan, u1_neq=float(u1n), u2_neq=float(u2n),
                        omega_neq=float(wn), theta_neq=float(thn))

def low_bound_margin(state: SimState, params: mp.MultiplierParams) -> np.ndarray:
    """per-mode (1/4)nu L |A X|^2 + (-dM1/dt)|A X|^2 - (1/4)nu^{1/3}|k|^{2/3}|A X|^2

    summed over X1 and X2; nonnegative up to rounding on every state.
    """
    K, ETA, L, A, N, X1, X2 = _weighted_good_unknowns(state, params)
    nz = K != 0
    Ks = np.where(nz, K, 1)
    ck1 = np.where(nz, -mp.m1_rate(state.t, Ks, ETA, params), 0)
    a2 = np.square(A) * (np.abs(X1)**2 + np.abs(X2)**2)
    ed = 0.25 * params.nu**(1/3) * np.abs(K)**(2/3)
    return (0.25 * params.nu * L + ck1 - ed) * a2

def ledger_frame(ledgers: Sequence[EnergyLedger], full: bool = False) -> pd.DataFrame:
    """ledgers as a table; ``full`` keeps the audit-only fields"""
    df = pd.DataFrame([asdict(led) for led in ledgers])
    return df if full else df[CSV_COLUMNS]

# ====================
# rate fits
# ====================

def fit_rates(series, window: Tuple[float, float] = None, nu: float = None) -> RateFit:
    """Least squares of log v = a + p log<t> - r nu^{1/3} t.

    Parameters
    ----------
    series : sequence of (t, value) pairs, or a (t, values) tuple of arrays
    window : (t1, t2); defaults to (10, 0.5 nu^{-1/3}) when nu > 0, otherwise
        the full span of the series
    nu : viscosity; None or 0 fits the power law alone (r = 0)

    Returns
    -------
    RateFit
    """
    if isinstance(series, tuple) and len(series) == 2:
        t, v = (np.asarray(x, dtype=float) for x in series)
    else:
        arr = np.asarray(series, dtype=float)
        t, v = arr[:, 0], arr[:, 1]
    viscous = nu is not None and nu > 0
    if window is None:
        window = (10.0, 0.5 * nu**(-1/3)) if viscous else (float(t.min()), float(t.max()))
    sel = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(sel) < 8:
        raise ValueError(f"fit window {window} holds {np.count_nonzero(sel)} samples, need >= 8")
    t, v = t[sel], v[sel]
    if np.any(v <= 0):
        raise ValueError(f"fit window {window} contains nonpositive values")
    cols = [np.ones_like(t), np.log(u.bracket(t))]
    if viscous: cols.append(-nu**(1/3) * t)
    design = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, np.log(v), rcond=None)
    resid = np.log(v) - design @ coef
    return RateFit(window=(float(window[0]), float(window[1])), power_exponent=float(coef[1]),
                   exp_rate=float(coef[2]) if viscous else 0.0,
                   residual=float(np.sqrt(np.mean(resid**2))))

# ====================
# audits
# ====================

@dataclass
class AuditReport:
    """smallest constants C making each decay inequality hold over a run"""
    constants: Dict[str, float]
    rate: float
    sanity_bound: float = 1e3
    flagged: List[str] = field(default_factory=list)

def _smallest_constant(lhs: np.ndarray, rhs: np.ndarray) -> float:
    ratio = np.where(lhs == 0, 0.0, lhs / np.where(rhs == 0, np.inf, rhs))
    return float(np.max(ratio, initial=0.0))

def theorem_audit(ledgers: Sequence[EnergyLedger], config: SimConfig,
                  sanity_bound: float = 1e3) -> AuditReport:
    """Smallest C in each decay estimate for perturbations of size eps nu^{1/2}:

    u  : |u1| + <t>|u2| + <t>^{-1}|omega| + |theta| <= C eps nu^{1/2} <t>^{-1/2} e^{-c nu^{1/3} t}
    zero: nu^{-1/4} |u0|_{H^s} + |f0|_{H^s} + nu^{-1/4} |theta0|_{H^s} <= C eps nu^{1/4}
    w  : |<k,eta>^s X1| <= C eps nu^{1/2} e^{-c nu^{1/3} t}
    th : |<k,eta>^s |k| N theta_neq| <= C eps nu^{1/2} e^{-c nu^{1/3} t}
    """
    df = ledger_frame(ledgers, full=True)
    t = df['t'].to_numpy()
    nu, eps, c = config.nu, config.epsilon, config.c
    bt = u.bracket(t)
    decay = eps * np.sqrt(nu) * np.exp(-c * nu**(1/3) * t)
    lhs = {
        'u': df['u1_neq'] + bt * df['u2_neq'] + df['omega_neq'] / bt + df['theta_neq'],
        'zero': nu**-0.25 * np.sqrt(df['V0']) + np.sqrt(df['F0']) + nu**-0.25 * df['theta0_Hs'],
        'w': df['w_Hs'],
        'th': df['th_Hs'],
    }
    rhs = {
        'u': decay / np.sqrt(bt),
        'zero': np.full_like(t, eps * nu**0.25),
        'w': decay,
        'th': decay,
    }
    report = AuditReport(constants={}, rate=c, sanity_bound=sanity_bound)
    for name in lhs:
        C = _smallest_constant(np.asarray(lhs[name]), np.asarray(rhs[name]))
        report.constants[name] = C
        if not np.isfinite(C) or C > sanity_bound:
            report.flagged.append(name)
    if report.flagged:
        logger.warning(f"audit constants above {sanity_bound:g}: {report.flagged}")
    return report

def compare_audits(coarse: AuditReport, fine: AuditReport, tol: float = 0.05) -> Dict[str, Tuple[float, float, bool]]:
    """name -> (C_coarse, C_fine, stable) across a refinement"""
    out = {}
    for name, c1 in coarse.constants.items():
        c2 = fine.constants[name]
        scale = max(abs(c1), abs(c2))
        stable = scale == 0 or abs(c1 - c2) <= tol * scale
        out[name] = (c1, c2, bool(stable))
    return out

def bootstrap_ratios(ledgers: Sequence[EnergyLedger], amplitude: float = None) -> pd.DataFrame:
    """Running bootstrap ratios.

    E_ratio = (E_neq(t) + 1/2 int_0^t (D + ED + CK2 + CK3)) / E_neq(0); the
    zero-mode energies F0, V0, H02 are divided by max(initial value,
    amplitude^2), or by their first nonzero value when no amplitude is given.
    """
    df = ledger_frame(ledgers, full=True)
    t = df['t'].to_numpy()
    diss = (df['D'] + df['ED'] + df['CK2'] + df['CK3']).to_numpy()
    out = pd.DataFrame({'t': t})
    E0 = df['E_neq'].iloc[0]
    acc = integrate.cumulative_trapezoid(diss, t, initial=0.0)
    out['E_ratio'] = (df['E_neq'] + 0.5 * acc) / E0 if E0 > 0 else 0.0
    for name in ['F0', 'V0', 'H02']:
        vals = df[name].to_numpy()
        if amplitude is not None:
            ref = max(vals[0], amplitude**2)
        else:
            nonzero = vals[vals > 0]
            ref = nonzero[0] if len(nonzero) else 0.0
        out[f'{name}_ratio'] = vals / ref if ref > 0 else 0.0
    return out

def energy_inequality_audit(ledgers: Sequence[EnergyLedger], slack: float = 0.1) -> pd.DataFrame:
    """Check dE/dt + D + ED + CK2 + CK3 <= |linear term| between outputs.

    Derivatives are forward differences, the other terms trapezoid averages
    over the interval. ``ok`` allows ``slack`` times the larger of the
    dissipation budget and the linear term.
    """
    df = ledger_frame(ledgers, full=True)
    t = df['t'].to_numpy()
    E = df['E_neq'].to_numpy()
    diss = (df['D'] + df['ED'] + df['CK2'] + df['CK3']).to_numpy()
    lt = np.abs(df['linear_term'].to_numpy())
    mid = lambda x: 0.5 * (x[1:] + x[:-1])
    lhs = np.diff(E) / np.diff(t) + mid(diss)
    rhs = mid(lt)
    tol = slack * np.maximum(mid(diss), rhs)
    return pd.DataFrame({'t0': t[:-1], 't1': t[1:], 'lhs': lhs, 'rhs': rhs, 'ok': lhs <= rhs + tol})
