"""Spectral substrate in sheared coordinates z = x - t y.

Coefficients are stored in numpy FFT order on a (k, eta-index) array of shape
(n_z, n_y). The forward transform carries 1/(n_z n_y) so that the (0, 0)
coefficient is the mean and Parseval reads sum |c|^2 = mean(u^2). The y-window
is [-L_y, L_y), hence eta = (pi / L_y) * j for integer j.

"""
from __future__ import annotations
from typing import Dict, Tuple
from dataclasses import dataclass, replace as dc_replace
import numpy as np
import jax.tree_util as tu

from . import utils as u

logger = u.init_logger(__name__)

class CorruptedField(ValueError):
    """spectral data that no longer represents a real physical field"""

# relative tolerance used when validating conjugate symmetry of foreign data
REALITY_RTOL = 1e-10

@dataclass(frozen=True)
class Grid:
    """Periodic strip T x [-L_y, L_y) resolved by n_z x n_y points."""
    n_z: int
    n_y: int
    L_y: float = 4 * np.pi

    def __post_init__(self):
        for name in ['n_z', 'n_y']:
            n = getattr(self, name)
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} should be an even integer >= 4, got {n}")
        if not self.L_y > 0:
            raise ValueError(f"L_y should be positive, got {self.L_y}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_z, self.n_y)

    @property
    def size(self) -> int:
        return self.n_z * self.n_y

    @property
    def d_eta(self) -> float:
        return np.pi / self.L_y

    @property
    def dz(self) -> float:
        return 2 * np.pi / self.n_z

    @property
    def dy(self) -> float:
        return 2 * self.L_y / self.n_y

    @property
    def spacing(self) -> float:
        return min(self.dz, self.dy)

    def k_index(self) -> np.ndarray:
        return np.rint(np.fft.fftfreq(self.n_z, 1 / self.n_z)).astype(int)

    def j_index(self) -> np.ndarray:
        return np.rint(np.fft.fftfreq(self.n_y, 1 / self.n_y)).astype(int)

    def eta(self) -> np.ndarray:
        """1-D eta values of the zero-mode vectors"""
        return self.j_index() * self.d_eta

    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """(k, eta) on the full coefficient array"""
        K, J = np.meshgrid(self.k_index(), self.j_index(), indexing='ij')
        return K, J * self.d_eta

    def mode_indices(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.k_index(), self.j_index(), indexing='ij')

    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        """physical (z, y) collocation points"""
        z = np.arange(self.n_z) * self.dz
        y = -self.L_y + np.arange(self.n_y) * self.dy
        return np.meshgrid(z, y, indexing='ij')

    def nyquist_mask(self) -> np.ndarray:
        K, J = self.mode_indices()
        return (np.abs(K) == self.n_z // 2) | (np.abs(J) == self.n_y // 2)

    def band_mask(self, frac=1/3) -> np.ndarray:
        """modes with |k| <= frac n_z and |j| <= frac n_y"""
        K, J = self.mode_indices()
        return (np.abs(K) <= frac * self.n_z) & (np.abs(J) <= frac * self.n_y)

    def index_of(self, k: int, j: int) -> Tuple[int, int]:
        return (k % self.n_z, j % self.n_y)

@dataclass(frozen=True)
class ShearFrame:
    t: float = 0.0
    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"frame time should be >= 0, got {self.t}")

@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real scalar on the sheared torus."""
    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    def physical(self) -> np.ndarray:
        return inverse_transform(self)
    def dealias(self) -> "SpectralField":
        return dealias(self)
    def zero_row(self) -> np.ndarray:
        return self.coeffs[0].copy()
    def nonzero_part(self) -> "SpectralField":
        c = self.coeffs.copy()
        c[0] = 0
        return self.replace(coeffs=c)
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.coeffs)**2))
    def replace(self, **kwargs) -> "SpectralField":
        return dc_replace(self, **kwargs)
    def __repr__(self):
        return f"SpectralField(grid={self.grid}, max|c|={np.max(np.abs(self.coeffs)):.3e})"

# fields ride through jax.tree_util maps with the grid as static data
tu.register_pytree_node(
    SpectralField,
    lambda f: ((f.coeffs,), f.grid),
    lambda grid, children: SpectralField(grid, children[0]),
)

# ====================
# conjugate symmetry
# ====================

def conj_reflect(coeffs: np.ndarray) -> np.ndarray:
    """conj(c(-k, -eta)) laid out at (k, eta)"""
    axes = tuple(range(coeffs.ndim))
    return np.conj(np.roll(np.flip(coeffs, axes), 1, axes))

def enforce_reality(coeffs: np.ndarray) -> np.ndarray:
    """project onto exactly conjugate-symmetric coefficients"""
    return 0.5 * (coeffs + conj_reflect(coeffs))

def is_real(coeffs: np.ndarray, rtol=REALITY_RTOL) -> bool:
    scale = max(np.max(np.abs(coeffs), initial=0.0), np.finfo(float).tiny)
    return bool(np.max(np.abs(coeffs - conj_reflect(coeffs)), initial=0.0) <= rtol * scale)

def zero_nyquist(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    c = coeffs.copy()
    c[grid.n_z // 2, :] = 0
    c[:, grid.n_y // 2] = 0
    return c

# ====================
# transforms
# ====================

def forward_transform(physical: np.ndarray, grid: Grid) -> SpectralField:
    """real array on the grid -> SpectralField (Nyquist rows dropped)

    Parameters
    ----------
    physical : np.ndarray
        real samples of shape (n_z, n_y) at ``grid.coords()``
    grid : Grid

    Returns
    -------
    field : SpectralField
        exactly conjugate-symmetric coefficients
    """
    physical = np.asarray(physical)
    if physical.shape != grid.shape:
        raise ValueError(f"array shape {physical.shape} does not match grid {grid.shape}")
    if np.iscomplexobj(physical):
        raise ValueError("forward_transform expects a real array")
    coeffs = np.fft.fft2(physical) / grid.size
    coeffs = enforce_reality(zero_nyquist(coeffs, grid))
    return SpectralField(grid, coeffs)

def inverse_transform(field: SpectralField) -> np.ndarray:
    if not is_real(field.coeffs):
        raise CorruptedField("coefficients violate conjugate symmetry; field is not real")
    u_c = np.fft.ifft2(field.coeffs) * field.grid.size
    scale = max(np.max(np.abs(u_c), initial=0.0), np.finfo(float).tiny)
    residue = np.max(np.abs(u_c.imag), initial=0.0)
    if residue > 1e-12 * scale:
        raise CorruptedField(f"inverse transform has imaginary residue {residue:.3e}")
    return u_c.real

def zeros(grid: Grid) -> SpectralField:
    return SpectralField(grid, np.zeros(grid.shape, dtype=complex))

def from_modes(grid: Grid, modes: Dict[Tuple[int, int], complex]) -> SpectralField:
    """build a real field from {(k, j): coeff}; conjugate partners are filled in.

    Each (k, j) pair and its partner (-k, -j) must not both be listed.
    """
    c = np.zeros(grid.shape, dtype=complex)
    for (k, j), val in modes.items():
        if abs(k) >= grid.n_z // 2 or abs(j) >= grid.n_y // 2:
            raise ValueError(f"mode (k={k}, j={j}) is outside the resolved band of {grid}")
        if (k, j) == (0, 0):
            c[0, 0] = np.real(val)
            continue
        c[grid.index_of(k, j)] = val
        c[grid.index_of(-k, -j)] = np.conj(val)
    return SpectralField(grid, c)

# ====================
# sheared-frame symbols
# ====================

def shear_symbols(k, eta, frame: ShearFrame):
    """symbols of (d_z, d_y - t d_z, Delta_L) at (k, eta): (ik, i(eta - kt), -(k^2 + (eta - kt)^2))"""
    shifted = eta - k * frame.t
    dz = 1j * k
    dyL = 1j * shifted
    lapL = -(np.square(k) + np.square(shifted))
    return dz, dyL, lapL

def grid_symbols(grid: Grid, frame: ShearFrame):
    K, ETA = grid.wavenumbers()
    return shear_symbols(K, ETA, frame)

def biot_savart(f: SpectralField, frame: ShearFrame) -> Tuple[SpectralField, SpectralField]:
    """velocity (u1, u2) = grad_L^perp phi with Delta_L phi = f; the (0,0) mode maps to zero"""
    dz, dyL, lapL = grid_symbols(f.grid, frame)
    inv = np.zeros_like(lapL, dtype=float)
    nz = lapL != 0
    inv[nz] = -1.0 / lapL[nz]   # 1 / (k^2 + (eta - kt)^2)
    u1 = dyL * f.coeffs * inv
    u2 = -dz * f.coeffs * inv
    return f.replace(coeffs=u1), f.replace(coeffs=u2)

def dealias(field: SpectralField) -> SpectralField:
    """2/3 rule: zero every mode with |k| > n_z/3 or |j| > n_y/3"""
    return field.replace(coeffs=np.where(field.grid.band_mask(), field.coeffs, 0))

def product(a: SpectralField, b: SpectralField) -> SpectralField:
    """dealiased pseudo-spectral product of two fields"""
    prod = inverse_transform(a) * inverse_transform(b)
    return dealias(forward_transform(prod, a.grid))

# ====================
# norms
# ====================

def sobolev_weight(k, eta, s):
    """<k, eta>^s"""
    return u.bracket(k, eta) ** s

def hs_norm2(field: SpectralField, s: float = 0) -> float:
    """||f||_{H^s}^2 = sum <k,eta>^{2s} |f_hat|^2 (grid-normalized)"""
    K, ETA = field.grid.wavenumbers()
    return float(np.sum(sobolev_weight(K, ETA, 2 * s) * np.abs(field.coeffs)**2))

def hs_norm2_zero(vec: np.ndarray, grid: Grid, s: float = 0) -> float:
    """H^s norm squared of a 1-D zero-mode vector over eta"""
    return float(np.sum(sobolev_weight(0, grid.eta(), 2 * s) * np.abs(vec)**2))
