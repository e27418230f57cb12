"""Threshold experiments: the two-mode toy model and epsilon-nu sweeps.

In the toy model X2 (size nu^alpha) and theta_02 (size nu^beta) force each
other through the decaying kernel <t>^{-3/2}:

    X2'      = eps nu^{alpha-3/4} <t>^{-3/2} theta02 - X2
    theta02' = eps nu^{alpha-1/4} <t>^{-3/2} X2      - theta02

after replacing d_y by nu^{-1/2} and nu d_yy by unit damping. It is
integrated in the scaled variables x = X2 / nu^alpha, y = theta02 / nu^beta,
which start at (1, 1).
"""
from __future__ import annotations
from typing import Callable, Dict, List, Optional
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace as dc_replace
from fractions import Fraction
import numpy as np
import pandas as pd
from scipy import integrate
from dataclasses_json import dataclass_json

from . import sim, utils as u

logger = u.init_logger(__name__)

# growth verdict threshold on |X2| relative to its initial size
GROWTH_FACTOR = 10.0
SWEEP_COLUMNS = ['beta', 'epsilon', 'nu', 'verdict', 'max_ratio', 't_of_max']
VERDICTS = ['bounded', 'growth', 'non-finite', 'failed']

@dataclass_json
@dataclass(frozen=True)
class ToyConfig:
    alpha: float
    beta: float
    epsilon: float = 1.0
    nu: float = 1e-40
    t_end: float = 50.0
    method: str = 'DOP853'
    rtol: float = 1e-8

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"toy exponents should be positive, got alpha={self.alpha}, beta={self.beta}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon should be >= 0, got {self.epsilon}")
        if not (0 < self.nu < 1):
            raise ValueError(f"nu = {self.nu} violates 0 < ν < 1")
        if not self.t_end > 0:
            raise ValueError(f"t_end should be > 0, got {self.t_end}")
        if self.method not in ('RK45', 'DOP853'):
            raise ValueError(f"method should be RK45 or DOP853, got {self.method}")

    @property
    def couplings(self):
        """(eps nu^{beta-3/4}, eps nu^{2 alpha-1/4-beta}) of the scaled system"""
        return (self.epsilon * self.nu**(self.beta - 0.75),
                self.epsilon * self.nu**(2 * self.alpha - 0.25 - self.beta))

    def replace(self, **kwargs) -> "ToyConfig":
        return dc_replace(self, **kwargs)

@dataclass
class ToyResult:
    t: np.ndarray
    X2_ratio: np.ndarray
    theta02_ratio: np.ndarray
    bounded: bool
    max_ratio: float
    t_of_max: float

def integrate_toy(config: ToyConfig, n_out: int = 501) -> ToyResult:
    """Integrate the scaled toy system to t_end.

    The integration stops early once |X2| passes GROWTH_FACTOR times its
    initial size. ``bounded`` refers to X2; the theta02 ratio is reported
    alongside.
    """
    a, b = config.couplings

    def rhs(t, z):
        g = (1 + t * t)**-0.75
        return [a * g * z[1] - z[0], b * g * z[0] - z[1]]

    def blowup(t, z):
        return abs(z[0]) - GROWTH_FACTOR
    blowup.terminal = True

    sol = integrate.solve_ivp(rhs, (0.0, config.t_end), [1.0, 1.0], method=config.method,
                              rtol=config.rtol, atol=1e-12,
                              t_eval=np.linspace(0.0, config.t_end, n_out), events=blowup)
    t, x, y = sol.t, np.abs(sol.y[0]), np.abs(sol.y[1])
    # the root finder may land a hair below the threshold
    grew = sol.t_events[0].size > 0
    if grew:
        te = sol.t_events[0][0]
        ze = np.abs(sol.y_events[0][0])
        t, x, y = np.append(t, te), np.append(x, max(ze[0], GROWTH_FACTOR)), np.append(y, ze[1])
    i = int(np.argmax(x))
    return ToyResult(t=t, X2_ratio=x, theta02_ratio=y,
                     bounded=not grew and bool(np.all(x < GROWTH_FACTOR)),
                     max_ratio=float(x[i]), t_of_max=float(t[i]))

def closure_exponents(alpha, beta):
    """exponents of (eps nu^{alpha-3/4} nu^alpha nu^beta, eps nu^{alpha-1/4} nu^alpha nu^beta)
    next to their targets (2 alpha, 2 beta); use Fractions for exact arithmetic"""
    return (alpha - Fraction(3, 4) + alpha + beta, 2 * alpha), (alpha - Fraction(1, 4) + alpha + beta, 2 * beta)

def closure_holds(alpha, beta) -> bool:
    """both forcing terms no larger than the sizes they feed (nu < 1)"""
    (p1, q1), (p2, q2) = closure_exponents(alpha, beta)
    return p1 >= q1 and p2 >= q2

# ====================
# sweeps
# ====================

SWEEPS: Dict[str, Callable] = {}

def sweep_mode(name):
    def decorator(func):
        SWEEPS[name] = func
        return func
    return decorator

def get_sweep(name):
    if name not in SWEEPS:
        raise ValueError(f"unknown sweep mode {name!r}, expected one of {sorted(SWEEPS)}")
    return SWEEPS[name]

@sweep_mode('toy')
def toy_cell(cell: dict, base: Optional[ToyConfig] = None) -> dict:
    config = ToyConfig(**cell) if base is None else base.replace(**cell)
    res = integrate_toy(config)
    return {'alpha': config.alpha, 'beta': config.beta, 'epsilon': config.epsilon, 'nu': config.nu,
            'verdict': 'bounded' if res.bounded else 'growth',
            'max_ratio': res.max_ratio, 't_of_max': res.t_of_max}

@sweep_mode('full')
def full_cell(cell: dict, base: Optional[sim.SimConfig] = None) -> dict:
    """one simulator run; growth means the energy exceeded GROWTH_FACTOR times
    its initial value within t <= 2 nu^{-1/3} (or the base t_end when shorter).

    The energy is E_neq when gamma2 > 1/4; below that the multiplier energies
    are undefined and the physical energy omega_neq^2 + theta_neq^2 is used.
    """
    base = sim.SimConfig() if base is None else base
    config = base.replace(**cell)
    config = config.replace(t_end=min(config.t_end, 2 * config.nu**(-1/3)))
    row = {'amplitude': config.epsilon * np.sqrt(config.nu), 'beta': np.nan,
           'epsilon': config.epsilon, 'nu': config.nu}
    try:
        result = sim.run(config)
    except sim.NumericalAbort as e:
        logger.warning(f"cell {cell}: {e}")
        return {**row, 'verdict': 'non-finite', 'max_ratio': np.inf, 't_of_max': e.t}
    if config.gamma2 > 0.25:
        E = np.array([led.E_neq for led in result.ledgers])
    else:
        E = np.array([led.omega_neq**2 + led.theta_neq**2 for led in result.ledgers])
    t = np.array([led.t for led in result.ledgers])
    ratio = E / E[0] if E[0] > 0 else np.zeros_like(E)
    if not np.all(np.isfinite(ratio)):
        return {**row, 'verdict': 'non-finite', 'max_ratio': np.inf,
                't_of_max': float(t[np.argmin(np.isfinite(ratio))])}
    i = int(np.argmax(ratio))
    verdict = 'growth' if ratio[i] > GROWTH_FACTOR else 'bounded'
    return {**row, 'verdict': verdict, 'max_ratio': float(ratio[i]), 't_of_max': float(t[i])}

def _cell_identity(cell: dict, base, mode: str) -> dict:
    """parameter columns of a cell, filled from the base config where the
    cell does not set them"""
    if base is None and mode == 'full':
        base = sim.SimConfig()
    merged = {**(base.to_dict() if base is not None else {}), **cell}
    row = {key: merged.get(key, np.nan) for key in ['alpha', 'beta', 'epsilon', 'nu']}
    if mode == 'full':
        row['beta'] = np.nan
        row['amplitude'] = row['epsilon'] * np.sqrt(row['nu'])
    return row

def sweep(cells: List[dict], mode: str = 'toy', base=None, workers: int = None) -> pd.DataFrame:
    """Run every cell and collect the verdict table in cell order.

    Parameters
    ----------
    cells : list of dicts of config overrides, e.g. {'alpha': 0.45, 'beta': 0.75}
    mode : registered sweep mode ('toy' or 'full')
    base : base ToyConfig / SimConfig the cells override
    workers : pool size; defaults to COUETTE_LAB_THREADS (or 1)
    """
    func = get_sweep(mode)
    first = 'alpha' if mode == 'toy' else 'amplitude'
    columns = [first] + SWEEP_COLUMNS
    if len(cells) == 0:
        return pd.DataFrame(columns=columns)
    # COUETTE_LAB_THREADS caps an explicit worker count too
    workers = u.num_threads() if workers is None else min(workers, u.num_threads(workers))

    def job(cell):
        try:
            return func(cell, base)
        except Exception as e:
            logger.error(f"sweep cell {cell} failed: {e}")
            return {**_cell_identity(cell, base, mode),
                    'verdict': 'failed', 'max_ratio': np.nan, 't_of_max': np.nan}

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(job, cells))
    for cell, row in zip(cells, rows):
        logger.debug(f"{mode} cell {cell}: {row['verdict']} (max ratio {row['max_ratio']:.3g})")
    return pd.DataFrame(rows, columns=columns)

def exponent_grid(name: str, start: float, stop: float, step: float, **fixed) -> List[dict]:
    """cells stepping one exponent over [start, stop] inclusive, rounded to the step"""
    n = int(round((stop - start) / step))
    digits = max(0, -int(np.floor(np.log10(step)))) + 2
    return [{name: round(start + i * step, digits), **fixed} for i in range(n + 1)]

def flip_point(table: pd.DataFrame, column: str = 'alpha') -> Optional[float]:
    """smallest value from which every larger value is bounded; None when the
    largest value is not bounded"""
    tab = table.sort_values(column)
    bounded = (tab['verdict'] == 'bounded').to_numpy()
    values = tab[column].to_numpy()
    if len(values) == 0 or not bounded[-1]:
        return None
    i = len(values) - 1
    while i > 0 and bounded[i - 1]: i -= 1
    return float(values[i])

def is_monotone(table: pd.DataFrame, column: str = 'alpha') -> bool:
    """no growth verdict above a bounded one"""
    verdicts = table.sort_values(column)['verdict'].to_numpy()
    seen_bounded = False
    for v in verdicts:
        if v == 'bounded': seen_bounded = True
        elif seen_bounded: return False
    return True

def flip_drift(epsilons=(0.1, 1.0, 10.0), column: str = 'alpha', start: float = 0.30,
               stop: float = 0.70, step: float = 0.05, **fixed) -> pd.DataFrame:
    """flip point of a toy exponent sweep for each epsilon"""
    if column == 'alpha': fixed.setdefault('beta', 0.75)
    else: fixed.setdefault('alpha', 0.5)
    rows = []
    for eps in epsilons:
        table = sweep(exponent_grid(column, start, stop, step, epsilon=eps, **fixed), mode='toy')
        rows.append({'epsilon': eps, 'flip': flip_point(table, column)})
        logger.info(f"epsilon = {eps:g}: {column} flips at {rows[-1]['flip']}")
    return pd.DataFrame(rows)
