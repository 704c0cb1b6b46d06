import shutil
from collections import deque
from timeit import default_timer as timer
from typing import Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

import routeseg

logger = routeseg.logger


class DefaultWriter:
    """
    Default writer used by the trainer to record training scalars
    (losses, learning rate, validation mIoU).

    Values are stored per tag and can be read back as a pandas DataFrame.
    Console logs are throttled: at most one log every ``log_interval`` seconds.

    Parameters
    ----------
    name : str
        Name of the writer (usually the training method).
    print_log : bool, default=True
        If True, print logs to stderr through the routeseg logger.
    style_log: str
        Possible values are "multi_line", "one_line" and "progressbar".
        Define the style of the logs.
    log_interval : int
        Minimum number of seconds between consecutive logs.
    maxlen : Optional[int], default: None
        If given, data stored for each tag is limited to `maxlen` entries.
    """

    def __init__(
        self,
        name: str,
        print_log: bool = True,
        style_log: str = "one_line",
        log_interval: int = 3,
        maxlen: Optional[int] = None,
    ):
        assert style_log in [
            "multi_line",
            "one_line",
            "progressbar",
        ], "Style log for writer unknown."
        self._name = name
        self._print_log = print_log
        self._style_log = style_log
        self._log_interval = log_interval
        self._maxlen = maxlen
        self._pbar = None
        self._pbar_step = 0
        self.reset()

    def reset(self):
        """Clear data."""
        self._data = dict()
        self._initial_time = timer()
        self._time_last_log = timer()

    @property
    def name(self):
        return self._name

    @property
    def data(self):
        """All stored scalars, one row per value, as a pandas DataFrame."""
        frames = [pd.DataFrame(columns=("name", "tag", "value", "global_step"))]
        for tag, record in self._data.items():
            frames.append(
                pd.DataFrame(
                    dict(
                        name=self._name,
                        tag=tag,
                        value=list(record["value"]),
                        global_step=list(record["global_step"]),
                    )
                )
            )
        return pd.concat(frames, ignore_index=True)

    def set_max_global_step(self, max_global_step):
        """Enable the progress bar of the "progressbar" style."""
        if self._style_log == "progressbar" and self._print_log:
            self._pbar = tqdm(total=int(max_global_step), desc=self._name, leave=False)
            self._pbar_step = 0

    def read_tag_value(self, tag, main_tag: str = ""):
        """
        Reads the values for the tag `tag`.
        If a `main_tag` is given, the tag will be a concatenation of
        `main_tag`, underscore and `tag`.

        Returns
        -------
        list of the values written for the tag.
        """
        return list(self._data[_full_tag(main_tag, tag)]["value"])

    def add_scalar(self, tag: str, scalar_value: float, global_step: Optional[int] = None):
        """
        Store a scalar value.

        Parameters
        ----------
        tag : str
            Tag for the scalar.
        scalar_value : float
            Value of the scalar.
        global_step : int
            Iteration where scalar was added. If None, NaN is stored.
        """
        if tag not in self._data:
            self._data[tag] = dict(
                value=deque(maxlen=self._maxlen),
                global_step=deque(maxlen=self._maxlen),
                time_elapsed=deque(maxlen=self._maxlen),
            )
        record = self._data[tag]
        record["value"].append(float(scalar_value))
        record["global_step"].append(np.nan if global_step is None else global_step)
        record["time_elapsed"].append(timer() - self._initial_time)

        if self._print_log:
            self._log()

    def add_scalars(
        self,
        main_tag: str = "",
        tag_scalar_dict: Optional[dict] = None,
        global_step: Optional[int] = None,
    ):
        """
        Behaves as add_scalar, but for a dictionary of scalars.

        Parameters
        ----------
        main_tag : string
            The parent name for the tags.
        tag_scalar_dict : dict
            Key-value pair storing the tag and corresponding values.
        global_step : int
            Iteration where the scalars were added.
        """
        for tag, scalar_value in (tag_scalar_dict or {}).items():
            self.add_scalar(_full_tag(main_tag, tag), scalar_value, global_step)

    def close(self):
        if self._pbar is not None:
            self._pbar.close()
            self._pbar = None

    def _max_global_step(self):
        steps = [
            rec["global_step"][-1]
            for rec in self._data.values()
            if not np.isnan(rec["global_step"][-1])
        ]
        return int(max(steps)) if steps else 0

    def _log(self):
        t_now = timer()
        if t_now - self._time_last_log <= self._log_interval:
            return
        self._time_last_log = t_now
        max_global_step = self._max_global_step()

        if self._style_log == "multi_line":
            size_term = shutil.get_terminal_size().columns
            df = pd.DataFrame({"name": [self._name]})
            for tag, rec in self._data.items():
                df[tag] = [np.around(rec["value"][-1], 4)]
            df["global_step"] = [max_global_step]
            lines = df.to_string(index=False, justify="center").split("\n")
            if max(len(line) for line in lines) < size_term - 14:
                logger.info("\n".join(line.rstrip() for line in lines))
                return
            # too wide for the terminal
            self._style_log = "one_line"

        if self._style_log == "one_line":
            message = " | ".join(
                f"{tag} = {rec['value'][-1]:.5g}" for tag, rec in self._data.items()
            )
            logger.info(f"[{self._name}] | global_step = {max_global_step} | {message}")

        elif self._style_log == "progressbar" and self._pbar is not None:
            postfix = {tag: f"{rec['value'][-1]:.4g}" for tag, rec in self._data.items()}
            self._pbar.set_postfix(postfix, refresh=False)
            self._pbar.update(max_global_step - self._pbar_step)
            self._pbar_step = max_global_step


def _full_tag(main_tag, tag):
    return str(main_tag) + "_" + str(tag) if str(main_tag) else str(tag)
