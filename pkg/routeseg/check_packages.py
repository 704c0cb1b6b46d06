# Define import flags

NUMBA_INSTALLED = True
try:
    import numba
except ModuleNotFoundError:
    NUMBA_INSTALLED = False
