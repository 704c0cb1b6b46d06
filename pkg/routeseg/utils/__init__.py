from .jit_setup import numba_jit
from .logging import configure_logging, set_level
