import re
from dataclasses import fields
from typing import Iterable, Optional, Tuple, Union, get_args, get_origin

import yaml

from routeseg.experiment.run_config import RunConfig
from routeseg.nets import RoutingConfig
from routeseg.training import TrainConfig

_SECTIONS = (("run", RunConfig), ("train", TrainConfig), ("net", RoutingConfig))
_ASSIGNMENT = re.compile(r"^\s*[A-Za-z_]\w*\s*=")


def parse_overrides(assignments: Iterable[str]) -> dict:
    """
    Parse ``key=value`` strings; values follow YAML scalar rules.

    Example: ``["lambda2=100", "method=mean_teacher", "fraction=1/8"]``.
    """
    overrides = {}
    for item in assignments:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"expected key=value, got {item!r}")
        overrides[key] = yaml.safe_load(value) if value.strip() else None
    return overrides


def read_run_file(path) -> dict:
    """
    Read a run config file.

    The file holds one ``key=value`` per line; ``#`` starts a comment and
    blank lines are skipped. A flat YAML mapping (``key: value``) is also
    accepted.
    """
    with open(path) as file:
        text = file.read()
    lines = [line.split("#", 1)[0].strip() for line in text.splitlines()]
    lines = [line for line in lines if line]
    if not lines:
        return {}
    if any(_ASSIGNMENT.match(line) for line in lines):
        bad = [line for line in lines if not _ASSIGNMENT.match(line)]
        if bad:
            raise ValueError(f"{path}: expected key=value, got {bad[0]!r}")
        return parse_overrides(lines)
    config = yaml.safe_load(text)
    if not isinstance(config, dict):
        raise ValueError(f"{path}: expected key=value lines")
    return config

def _scalar_type(annotation):
    """int, float, bool or str behind ``Optional[...]``, else None."""
    if get_origin(annotation) is Union:
        args = [arg for arg in get_args(annotation) if arg is not type(None)]
        annotation = args[0] if len(args) == 1 else None
    return annotation if annotation in (int, float, bool, str) else None


def _coerce(name, value, annotation):
    target = _scalar_type(annotation)
    if value is None or target is None or isinstance(value, target):
        return value
    if target is float and isinstance(value, (int, str)) and not isinstance(value, bool):
        try:
            # YAML reads 1e-4 as a string
            return float(value)
        except ValueError:
            pass
    if target is str:
        return str(value)
    raise ValueError(f"{name}: expected {target.__name__}, got {value!r}")


def parse_run_config(
    path=None, overrides: Optional[dict] = None
) -> Tuple[RunConfig, TrainConfig, RoutingConfig]:
    """
    Build the configurations of a run from a config file.

    Keys are field names of :class:`RunConfig`, :class:`TrainConfig` or
    :class:`RoutingConfig`; unknown keys are rejected. ``overrides`` (e.g.
    from ``--set``) replace file values.

    Example of run config:

    ```run.cfg
        # mean teacher, 1/8 of the labels
        data_dir=data/shapes
        fraction=1/8
        method=mean_teacher
        lambda2=100
        epochs=4
        num_layers=4
        base_channels=8
    ```

    Returns
    -------
    run : RunConfig
    train : TrainConfig
    net : RoutingConfig
    """
    config = {}
    if path is not None:
        config = read_run_file(path)
    config.update(overrides or {})

    kwargs = {section: {} for section, _ in _SECTIONS}
    annotations = {}
    for section, cls in _SECTIONS:
        for f in fields(cls):
            annotations[f.name] = (section, f.type)
    unknown = sorted(set(config) - set(annotations))
    if unknown:
        raise ValueError(f"unknown configuration keys {unknown}")
    for key, value in config.items():
        section, annotation = annotations[key]
        kwargs[section][key] = _coerce(key, value, annotation)

    return RunConfig(**kwargs["run"]), TrainConfig(**kwargs["train"]), RoutingConfig(**kwargs["net"])
