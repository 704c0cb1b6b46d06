import os
from typing import Optional

# environment variable consulted when no explicit seed is given
SEED_ENV_VAR = "SELENE_SEED"


def resolve_seed(seed: Optional[int] = None, default: Optional[int] = None):
    """
    Pick the seed of a run.

    An explicit seed wins; otherwise the ``SELENE_SEED`` environment variable
    is read; otherwise ``default`` is returned (which may be None, meaning
    fresh entropy).

    Parameters
    ----------
    seed : int or None
        Seed given explicitly (e.g. by ``--seed``).
    default : int or None
        Value used when neither ``seed`` nor the environment variable is set.

    Returns
    -------
    int or None
    """
    if seed is not None:
        return int(seed)
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value is not None and env_value.strip() != "":
        try:
            return int(env_value)
        except ValueError:
            raise ValueError(
                f"{SEED_ENV_VAR} must be an integer, got {env_value!r}"
            ) from None
    return default
