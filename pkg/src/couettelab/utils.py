from __future__ import annotations
import os
import zlib
import numpy as np
from contextlib import contextmanager

# environment variable capping the worker pool of sweeps
THREADS_ENV = "COUETTE_LAB_THREADS"

def bracket(*xs):
    """japanese bracket <x1, x2, ...> = sqrt(1 + x1^2 + x2^2 + ...)

    Works elementwise on arrays, e.g. ``bracket(t)`` is <t> and
    ``bracket(k, eta)`` is the Sobolev weight <k, eta>.
    """
    total = 1.0
    for x in xs:
        total = total + np.square(x)
    return np.sqrt(total)

def floor_sqrt(x):
    """E(sqrt(x)): integer part of sqrt(x) without float rounding surprises"""
    n = int(np.floor(np.sqrt(x)))
    # correct for sqrt rounding near perfect squares
    while (n + 1) ** 2 <= x: n += 1
    while n ** 2 > x: n -= 1
    return n

def fmt17(x) -> str:
    """format a float losslessly (17 significant digits)"""
    return f"{float(x):.17g}"

def num_threads(default=1) -> int:
    """worker count, capped by COUETTE_LAB_THREADS when set"""
    val = os.environ.get(THREADS_ENV)
    if val is None: return default
    try:
        n = int(val)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} should be a positive integer, got {val!r}")
    if n < 1:
        raise ValueError(f"{THREADS_ENV} should be a positive integer, got {n}")
    return n

# ====================
# Random utilities
# ====================
# Runs must be reproducible from (config, seed) alone, regardless of what
# else was drawn before in the same process (sweeps run many cells in one
# interpreter). Always draw through these wrappers with an explicit key.

class PRNGKey:
    """same key always produces the same draws and does not disturb other keys"""
    def __init__(self, key):
        self.key = key  # need to be hashable
        self.state = None

    @contextmanager
    def set_state(self):
        old_state = np.random.get_state()
        try:
            if self.state is None:
                seed = zlib.crc32(repr(self.key).encode())
                np.random.seed(seed)
                self.state = np.random.get_state()
            else:
                np.random.set_state(self.state)
            yield
        finally:
            np.random.set_state(old_state)

    def split(self, n=2):
        """split the key into n keys. Used tuple to avoid collisions"""
        return [PRNGKey((self.key, i)) for i in range(n)]

def uniform(key: PRNGKey, low=0.0, high=1.0, size=None):
    with key.set_state():
        return np.random.uniform(low, high, size)

def normal(key: PRNGKey, loc=0.0, scale=1.0, size=None):
    with key.set_state():
        return np.random.normal(loc, scale, size)

def pformat(obj, **kwargs):
    """pretty format configs, ledgers and states (arrays summarized)"""
    from equinox import tree_pformat
    return tree_pformat(obj, **kwargs)

# ------------------
# logging utils
# ------------------

def init_logger(name):
    import logging, sys
    logger = logging.getLogger(name)
    logger.propagate = False
    logger.setLevel(logging.INFO)
    if not logger.handlers:
        ch = logging.StreamHandler(sys.stdout)
        formatter = logging.Formatter('%(asctime)s [%(levelname)s] %(message)s ')
        ch.setFormatter(formatter)
        logger.addHandler(ch)
    return logger

def set_logging_level(level=2):
    import logging
    try:
        level = {
            1: logging.DEBUG,
            2: logging.INFO,
            3: logging.WARNING,
            4: logging.ERROR,
            5: logging.CRITICAL,
            "debug": logging.DEBUG,
            "info": logging.INFO,
            "warning": logging.WARNING,
            "error": logging.ERROR,
            "critical": logging.CRITICAL,
        }[level]
    except KeyError: pass

    for logger_name in logging.Logger.manager.loggerDict:
        if logger_name.startswith("couettelab"):
            logging.getLogger(logger_name).setLevel(level)

def set_verbosity(verbosity=2):
    import logging

    verbosity = {
        0: logging.ERROR,
        1: logging.WARNING,
        2: logging.INFO,
        3: logging.DEBUG,
    }[verbosity]

    for logger_name in logging.Logger.manager.loggerDict:
        if logger_name.startswith("couettelab"):
            logging.getLogger(logger_name).setLevel(verbosity)
