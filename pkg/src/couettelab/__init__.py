from .spectral import Grid, ShearFrame, SpectralField, CorruptedField
from .linear import LinearParams, ModeState, ModeRunConfig
from .multipliers import MultiplierParams, PhiProfile, ResonanceIndex
from .sim import SimConfig, SimState, CFLViolation, NumericalAbort
from .diagnostics import EnergyLedger, RateFit
from .threshold import ToyConfig
from .config import ConfigError, load_config
from . import _version
__version__ = _version.get_versions()['version']
