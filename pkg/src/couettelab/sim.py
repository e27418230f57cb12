"""Nonlinear Boussinesq perturbation of Couette flow in sheared coordinates.

The state keeps the decomposition

    f = f_0 + f_neq,    theta = theta_01 + theta_02 + theta_neq,

plus the zero-mode velocity u0_1. theta_01 carries the initial zero mode of
theta and only diffuses; theta_02 starts at zero and is sourced by the
nonzero-mode interaction (u_neq . grad_L theta_neq)_0. Zero-mode components
are 1-D vectors over eta (the k = 0 row of the spectral array).
"""
from __future__ import annotations
from typing import List, Optional, Tuple
from dataclasses import dataclass, field, replace as dc_replace
import numpy as np
import jax.tree_util as tu
from dataclasses_json import dataclass_json

from . import diagnostics as dg, linear as lin, multipliers as mp, spectral as sp, utils as u

logger = u.init_logger(__name__)

class CFLViolation(ValueError):
    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt

class NumericalAbort(RuntimeError):
    """non-finite value in the state; ``mode`` = (component, k, j)"""
    def __init__(self, t, mode):
        super().__init__(f"non-finite value at t = {t:.6g} in {mode[0]} (k={mode[1]}, j={mode[2]})")
        self.t = t
        self.mode = mode

@dataclass_json
@dataclass(frozen=True)
class SimConfig:
    """Run configuration of the nonlinear solver.

    ``dt = None`` selects min(0.5 dt_CFL, 0.005 nu^{-1/3}). ``output_every``
    is the time between ledger entries.
    """
    n_z: int = 64
    n_y: int = 256
    L_y: float = 4 * np.pi
    nu: float = 1e-3
    gamma2: float = 1.0
    epsilon: float = 0.01
    seed: int = 0
    t_end: float = 10.0
    dt: Optional[float] = None
    dealias: bool = True
    nonlinear: bool = True
    s: float = 6
    K: Optional[float] = None
    c: float = 1/8
    output_every: float = 1.0
    cap_t_end: bool = False

    def __post_init__(self):
        if not (0 < self.nu < 1):
            raise ValueError(f"nu = {self.nu} violates 0 < ν < 1")
        if not self.gamma2 > 0:
            raise ValueError(f"gamma2 should be > 0, got {self.gamma2}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon should be >= 0, got {self.epsilon}")
        if not self.t_end > 0:
            raise ValueError(f"t_end should be > 0, got {self.t_end}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt should be > 0, got {self.dt}")
        if not self.output_every > 0:
            raise ValueError(f"output_every should be > 0, got {self.output_every}")
        if not self.s >= 6:
            raise ValueError(f"s = {self.s} violates s ≥ 6")
        if not (0 < self.c <= 1/8):
            raise ValueError(f"c = {self.c} violates 0 < c ≤ 1/8")
        if self.gamma2 > 0.25 and self.K is not None:
            sigma = np.sqrt(4 * self.gamma2 - 1)
            if not self.K >= 3 / sigma:
                raise ValueError(f"K = {self.K} violates K ≥ 3/σ = {3 / sigma:.6g}")
        # grid validation
        self.grid

    @property
    def grid(self) -> sp.Grid:
        return sp.Grid(self.n_z, self.n_y, self.L_y)

    def multiplier_params(self) -> mp.MultiplierParams:
        return mp.MultiplierParams(nu=self.nu, gamma2=self.gamma2, s=self.s, c=self.c, K=self.K)

    def linear_params(self) -> lin.LinearParams:
        return lin.LinearParams(nu=self.nu, gamma2=self.gamma2)

    def replace(self, **kwargs) -> "SimConfig":
        return dc_replace(self, **kwargs)

# components in the order they are stored and serialized
COMPONENTS = ['f_neq', 'theta_neq', 'f0', 'theta01', 'theta02', 'u0_1']

@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    f_neq: sp.SpectralField
    theta_neq: sp.SpectralField
    f0: np.ndarray
    theta01: np.ndarray
    theta02: np.ndarray
    u0_1: np.ndarray

    @property
    def grid(self) -> sp.Grid:
        return self.f_neq.grid

    @property
    def frame(self) -> sp.ShearFrame:
        return sp.ShearFrame(self.t)

    def f_total(self) -> sp.SpectralField:
        c = self.f_neq.coeffs.copy()
        c[0] = self.f0
        return self.f_neq.replace(coeffs=c)

    def theta_total(self) -> sp.SpectralField:
        c = self.theta_neq.coeffs.copy()
        c[0] = self.theta01 + self.theta02
        return self.theta_neq.replace(coeffs=c)

    def replace(self, **kwargs) -> "SimState":
        return dc_replace(self, **kwargs)

    def __repr__(self):
        return f"SimState(t={self.t:.6g}, grid={self.grid})"

# time is not a leaf: tree maps rebuild states at t = 0 and callers restamp t
tu.register_pytree_node(
    SimState,
    lambda s: (tuple(getattr(s, c) for c in COMPONENTS), None),
    lambda _, children: SimState(0.0, *children),
)

def decompose(f: sp.SpectralField, theta: sp.SpectralField, t: float = 0.0) -> SimState:
    """split full (f, theta) into the solver components, with theta_02 = 0
    and u0_1 recovered from f_0 by d_y^{-1} (mean zero)"""
    grid = f.grid
    eta = grid.eta()
    f0 = f.coeffs[0].copy()
    u0 = np.zeros_like(f0)
    nz = eta != 0
    u0[nz] = 1j * f0[nz] / eta[nz]
    return SimState(
        t=t, f_neq=f.nonzero_part(), theta_neq=theta.nonzero_part(),
        f0=f0, theta01=theta.coeffs[0].copy(), theta02=np.zeros_like(f0), u0_1=u0,
    )

def zero_state(grid: sp.Grid, t: float = 0.0) -> SimState:
    z = sp.zeros(grid)
    return decompose(z, z, t)

# ====================
# initial data
# ====================

def _localized_field(key: u.PRNGKey, grid: sp.Grid) -> sp.SpectralField:
    """Gaussian-enveloped random field band-limited to |k| <= n_z/6, |j| <= n_y/6"""
    band = grid.band_mask(1/6)
    white = sp.forward_transform(u.normal(key, size=grid.shape), grid)
    smooth = white.replace(coeffs=np.where(band, white.coeffs, 0))
    _, y = grid.coords()
    width = grid.L_y / 8
    enveloped = sp.inverse_transform(smooth) * np.exp(-0.5 * (y / width)**2)
    out = sp.forward_transform(enveloped, grid)
    return out.replace(coeffs=np.where(band, out.coeffs, 0))

def initial_norm(f: sp.SpectralField, theta: sp.SpectralField, s: float) -> float:
    """||u||_{H^{s+1}} + ||theta||_{H^{s+2}}, u from f by Biot-Savart at t = 0"""
    u1, u2 = sp.biot_savart(f, sp.ShearFrame(0.0))
    un = np.sqrt(sp.hs_norm2(u1, s + 1) + sp.hs_norm2(u2, s + 1))
    return float(un + np.sqrt(sp.hs_norm2(theta, s + 2)))

def initialize(config: SimConfig) -> SimState:
    grid = config.grid
    if grid.n_z // 6 < 1 or grid.n_y // 6 < 1:
        raise ValueError(f"grid {grid.shape} is too small to band-limit initial data to |k| <= n_z/6")
    if config.epsilon == 0:
        return zero_state(grid)
    k_omega, k_theta = u.PRNGKey(("initialize", config.seed)).split()
    omega = _localized_field(k_omega, grid)
    # zero mean vorticity
    omega.coeffs[0, 0] = 0
    theta = _localized_field(k_theta, grid)
    lam = config.epsilon * np.sqrt(config.nu) / initial_norm(omega, theta, config.s)
    omega = omega.replace(coeffs=lam * omega.coeffs)
    theta = theta.replace(coeffs=lam * theta.coeffs)
    logger.debug(f"initial data scaled by {lam:.6e} to amplitude {config.epsilon * np.sqrt(config.nu):.6e}")
    return decompose(omega, theta)

# ====================
# right-hand side
# ====================

def _velocity(state: SimState, frame: sp.ShearFrame):
    u1, u2 = sp.biot_savart(state.f_neq, frame)
    c1 = u1.coeffs.copy()
    c1[0] = state.u0_1
    return u1.replace(coeffs=c1), u2

def _transport(u1p, u2p, fld: sp.SpectralField, frame: sp.ShearFrame, dealias: bool):
    dz, dyL, _ = sp.grid_symbols(fld.grid, frame)
    gz = sp.inverse_transform(fld.replace(coeffs=dz * fld.coeffs))
    gy = sp.inverse_transform(fld.replace(coeffs=dyL * fld.coeffs))
    out = sp.forward_transform(u1p * gz + u2p * gy, fld.grid)
    return sp.dealias(out) if dealias else out

def nonlinear_term(state: SimState, dealias: bool = True) -> Tuple[sp.SpectralField, sp.SpectralField]:
    """(u . grad_L f, u . grad_L theta) with u = grad_L^perp Delta_L^{-1} f_neq + (u0_1, 0)"""
    frame = state.frame
    u1, u2 = _velocity(state, frame)
    u1p, u2p = sp.inverse_transform(u1), sp.inverse_transform(u2)
    N_f = _transport(u1p, u2p, state.f_total(), frame, dealias)
    N_th = _transport(u1p, u2p, state.theta_total(), frame, dealias)
    return N_f, N_th

def _zero_mode_stress(state: SimState, frame: sp.ShearFrame, dealias: bool) -> np.ndarray:
    """(u2_neq u1_neq)_0"""
    u1, u2 = sp.biot_savart(state.f_neq, frame)
    prod = sp.forward_transform(sp.inverse_transform(u1) * sp.inverse_transform(u2), state.grid)
    if dealias: prod = sp.dealias(prod)
    return prod.coeffs[0]

def _rhs(config: SimConfig, grid: sp.Grid):
    K, ETA = grid.wavenumbers()
    eta = grid.eta()
    nz = K != 0
    Ks = np.where(nz, K, 1)
    gamma2 = config.gamma2

    def rhs(t, y: SimState) -> SimState:
        L = Ks**2 + (ETA - Ks * t)**2
        th = y.theta_neq.coeffs
        f = y.f_neq.coeffs
        df = np.where(nz, -gamma2 * 1j * K * th, 0)
        dth = np.where(nz, -1j * K * f / L, 0)
        zero = np.zeros_like(y.f0)
        df0, dth02, du0 = zero, zero, zero
        if config.nonlinear:
            yt = y.replace(t=t)
            N_f, N_th = nonlinear_term(yt, config.dealias)
            df = df - np.where(nz, N_f.coeffs, 0)
            dth = dth - np.where(nz, N_th.coeffs, 0)
            df0 = -N_f.coeffs[0]
            dth02 = -N_th.coeffs[0]
            du0 = -1j * eta * _zero_mode_stress(yt, yt.frame, config.dealias)
        return SimState(t, y.f_neq.replace(coeffs=df), y.theta_neq.replace(coeffs=dth),
                        df0, zero, dth02, du0)
    return rhs

def _decay_factors(grid: sp.Grid, nu: float, t0: float, t1: float) -> SimState:
    K, ETA = grid.wavenumbers()
    eta = grid.eta()
    e2d = np.exp(-nu * lin.viscous_integral(K, ETA, t0, t1))
    e1d = np.exp(-nu * lin.viscous_integral(0, eta, t0, t1))
    # factors ride in a SimState so they map leaf-by-leaf onto the state
    return SimState(t0, sp.SpectralField(grid, e2d), sp.SpectralField(grid, e2d),
                    e1d, e1d, e1d, e1d)

# ====================
# stepping
# ====================

def cfl_dt(state: SimState) -> float:
    """largest stable dt for the sheared-frame transport
    (speed u1 - t u2 along z, u2 along y)"""
    frame = state.frame
    u1, u2 = _velocity(state, frame)
    u1p, u2p = sp.inverse_transform(u1), sp.inverse_transform(u2)
    grid = state.grid
    speed = max(np.max(np.abs(u1p - state.t * u2p)) / grid.dz, np.max(np.abs(u2p)) / grid.dy)
    return np.inf if speed == 0 else float(1.0 / speed)

def default_dt(state: SimState, config: SimConfig) -> float:
    return float(min(0.5 * cfl_dt(state), 0.005 * config.nu**(-1/3)))

def imex_step(state: SimState, config: SimConfig, dt: float = None) -> SimState:
    """advance all six components by one step of size dt (config.dt by default)"""
    h = dt if dt is not None else config.dt
    if h is None:
        h = default_dt(state, config)
    if config.nonlinear:
        limit = cfl_dt(state)
        if h > limit:
            raise CFLViolation(f"dt = {h:.6g} exceeds the CFL limit {limit:.6g} at t = {state.t:.6g}",
                               suggested_dt=0.5 * limit)
    grid = state.grid
    t = state.t
    e1 = _decay_factors(grid, config.nu, t, t + 0.5 * h)
    e2 = _decay_factors(grid, config.nu, t + 0.5 * h, t + h)
    new = lin.if_rk4_step(_rhs(config, grid), t, state, h, e1, e2)
    new = new.replace(t=t + h)
    if config.dealias:
        new = new.replace(f_neq=sp.dealias(new.f_neq), theta_neq=sp.dealias(new.theta_neq))
    return new

def advance(state: SimState, config: SimConfig, t_next: float) -> SimState:
    """step from state.t to t_next, splitting the step into smaller ones
    whenever the CFL check rejects it"""
    h = t_next - state.t
    while t_next - state.t > 1e-12 * max(1.0, abs(t_next)):
        remaining = t_next - state.t
        h = min(h, remaining)
        try:
            state = imex_step(state, config, h)
        except CFLViolation as e:
            if not e.suggested_dt > 1e-14 * remaining:
                raise
            logger.warning(f"{e}; retrying with dt = {e.suggested_dt:.6g}")
            h = e.suggested_dt
            continue
        check_finite(state)
    return state.replace(t=t_next)

def check_finite(state: SimState):
    for name in COMPONENTS:
        val = getattr(state, name)
        arr = val.coeffs if isinstance(val, sp.SpectralField) else val[None, :]
        bad = ~np.isfinite(arr)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            grid = state.grid
            k = int(grid.k_index()[i]) if arr.shape[0] > 1 else 0
            raise NumericalAbort(state.t, (name, k, int(grid.j_index()[j])))

def resolution_time(grid: sp.Grid) -> float:
    """critical time of the Nyquist corner, pi n_y / (L_y n_z); past it the
    top retained z-modes carry lab-frame y-frequencies beyond the y-Nyquist"""
    return np.pi * grid.n_y / (grid.L_y * grid.n_z)

@dataclass
class RunResult:
    config: SimConfig
    ledgers: List[dg.EnergyLedger] = field(default_factory=list)
    snapshots: List[SimState] = field(default_factory=list)
    final: Optional[SimState] = None
    resolution_time: float = np.inf

def run(config: SimConfig, state0: SimState = None, snapshot_every: int = 0) -> RunResult:
    """Integrate to config.t_end recording an EnergyLedger every output_every.

    Parameters
    ----------
    config : SimConfig
    state0 : optional starting state (e.g. a loaded snapshot); initialize(config) otherwise
    snapshot_every : keep a state snapshot every n-th output (0 = none)

    Raises
    ------
    NumericalAbort when a non-finite value appears
    """
    state = initialize(config) if state0 is None else state0
    grid = state.grid
    t_res = resolution_time(grid)
    t_end = config.t_end
    if t_end > t_res:
        if config.cap_t_end:
            logger.warning(f"t_end = {t_end:.6g} capped at the resolution time {t_res:.6g}")
            t_end = t_res
        else:
            logger.warning(f"t_end = {t_end:.6g} exceeds the resolution time {t_res:.6g} of grid {grid.shape}")
    if t_end <= state.t:
        raise ValueError(f"t_end = {t_end} is not after the start time {state.t}")

    dt = config.dt if config.dt is not None else default_dt(state, config)
    n_steps = int(np.ceil((t_end - state.t) / dt - 1e-9))
    dt = (t_end - state.t) / n_steps
    per_output = max(1, int(round(config.output_every / dt)))
    logger.info(f"run: grid={grid.shape} nu={config.nu:g} gamma2={config.gamma2:g} "
                f"epsilon={config.epsilon:g} dt={dt:.4g} steps={n_steps} nonlinear={config.nonlinear}")
    logger.debug(f"config:\n{u.pformat(config)}")

    if config.gamma2 > 0.25:
        params = config.multiplier_params()
        ledger = lambda s: dg.compute_ledger(s, params)
    else:
        logger.warning(f"gamma2 = {config.gamma2} <= 1/4: multiplier energies are not defined and recorded as NaN")
        ledger = dg.physical_ledger
    result = RunResult(config=config, resolution_time=t_res)
    result.ledgers.append(ledger(state))
    t0 = state.t
    for i in range(1, n_steps + 1):
        state = advance(state, config, t0 + i * dt)
        if i % per_output == 0 or i == n_steps:
            result.ledgers.append(ledger(state))
            n_out = len(result.ledgers) - 1
            if snapshot_every and n_out % snapshot_every == 0:
                result.snapshots.append(state)
            logger.debug(f"t = {state.t:.4f}: E_neq = {result.ledgers[-1].E_neq:.6e}")
    result.final = state
    logger.info(f"run finished at t = {state.t:.6g}")
    return result

# ====================
# snapshots
# ====================
# Layout (little-endian): the header record SNAPSHOT_HEADER, then complex64
# arrays in COMPONENTS order; f_neq and theta_neq are n_z*n_y values in
# C order over (k-index, j-index), the zero-mode vectors n_y values each.

SNAPSHOT_MAGIC = b"CLAB"
SNAPSHOT_VERSION = 1
SNAPSHOT_HEADER = np.dtype([
    ('magic', 'S4'), ('version', '<u4'), ('n_z', '<u4'), ('n_y', '<u4'),
    ('L_y', '<f8'), ('t', '<f8'), ('nu', '<f8'), ('gamma2', '<f8'),
    ('epsilon', '<f8'), ('seed', '<i8'),
])

def save_snapshot(state: SimState, config: SimConfig, path: str):
    grid = state.grid
    header = np.array([(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n_z, grid.n_y, grid.L_y,
                        state.t, config.nu, config.gamma2, config.epsilon, config.seed)],
                      dtype=SNAPSHOT_HEADER)
    with open(path, 'wb') as f:
        f.write(header.tobytes())
        for name in COMPONENTS:
            val = getattr(state, name)
            arr = val.coeffs if isinstance(val, sp.SpectralField) else val
            f.write(np.ascontiguousarray(arr, dtype='<c8').tobytes())

def load_snapshot(path: str):
    """-> (SimState, header dict); arrays come back at complex64 precision"""
    with open(path, 'rb') as f:
        raw = f.read()
    header = np.frombuffer(raw[:SNAPSHOT_HEADER.itemsize], dtype=SNAPSHOT_HEADER)[0]
    if header['magic'] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot file")
    if header['version'] != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {header['version']}")
    grid = sp.Grid(int(header['n_z']), int(header['n_y']), float(header['L_y']))
    offset = SNAPSHOT_HEADER.itemsize
    parts = {}
    for name in COMPONENTS:
        shape = grid.shape if name in ('f_neq', 'theta_neq') else (grid.n_y,)
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype='<c8', count=n, offset=offset).astype(complex).reshape(shape)
        offset += 8 * n
        parts[name] = sp.SpectralField(grid, arr) if len(shape) == 2 else arr
    meta = {key: header[key].item() for key in ('t', 'nu', 'gamma2', 'epsilon', 'seed')}
    return SimState(t=float(header['t']), **parts), meta
