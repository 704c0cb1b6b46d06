import numpy as np


def sigmoid_rampup(t, length) -> float:
    """
    Consistency weight ramp-up, exp(-5 (1 - t/length)^2).

    Goes from exp(-5) at t=0 to 1 at t=length and stays at 1 afterwards.
    A ramp of length 0 is always 1.
    """
    if length == 0:
        return 1.0
    current = np.clip(t, 0.0, length)
    phase = 1.0 - current / length
    return float(np.exp(-5.0 * phase * phase))
