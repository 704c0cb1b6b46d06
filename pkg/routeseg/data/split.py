"""
Labeled / unlabeled partition of a training set.

Split files are named ``split_<a>-<b>_<seed>.txt`` for a labeled fraction
a/b and hold two sections, one id per line::

    labeled:
    00003
    ...
    unlabeled:
    00000
    ...
"""

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Sequence, Union

import routeseg
from routeseg.data.dataset import Sample
from routeseg.seeding import Seeder

logger = routeseg.logger

_FILE_PATTERN = re.compile(r"split_(\d+)-(\d+)_(-?\d+)\.txt$")


def parse_fraction(value) -> Fraction:
    """Accept a Fraction, a number, or a string such as "1/8" or "1-8"; must lie in (0, 1]."""
    if isinstance(value, str):
        value = value.strip().replace("-", "/")
    try:
        fraction = Fraction(value).limit_denominator(1_000_000)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"invalid labeled fraction {value!r}") from None
    if not 0 < fraction <= 1:
        raise ValueError(f"labeled fraction must be in (0, 1], got {fraction}")
    return fraction


@dataclass
class SplitSpec:
    """
    Labeled and unlabeled sample ids of a training set.

    Attributes
    ----------
    fraction : Fraction
    seed : int
    labeled : list of str
    unlabeled : list of str
    """

    fraction: Fraction
    seed: int
    labeled: List[str] = field(default_factory=list)
    unlabeled: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.fraction = parse_fraction(self.fraction)
        common = set(self.labeled) & set(self.unlabeled)
        if common:
            raise ValueError(f"ids both labeled and unlabeled: {sorted(common)[:5]}")

    @property
    def file_name(self) -> str:
        return f"split_{self.fraction.numerator}-{self.fraction.denominator}_{self.seed}.txt"


def num_labeled(total: int, fraction) -> int:
    """round(fraction * total), halves rounded up."""
    return math.floor(parse_fraction(fraction) * total + Fraction(1, 2))


def make_split(dataset: Sequence[Union[Sample, str]], fraction, seed: int) -> SplitSpec:
    """
    Seeded shuffle of the ids, then the first round(fraction * n) are labeled.

    Parameters
    ----------
    dataset : sequence of Sample or of ids
    fraction : Fraction, float or str
    seed : int

    Returns
    -------
    SplitSpec
    """
    ids = [item.id if isinstance(item, Sample) else str(item) for item in dataset]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    fraction = parse_fraction(fraction)
    m = num_labeled(len(ids), fraction)
    if m == 0 and ids:
        logger.warning(f"Fraction {fraction} of {len(ids)} samples leaves no labeled sample.")
    order = Seeder(seed).rng.permutation(len(ids))
    shuffled = [ids[ii] for ii in order]
    return SplitSpec(fraction=fraction, seed=int(seed), labeled=shuffled[:m], unlabeled=shuffled[m:])


def write_split(root, split: SplitSpec) -> Path:
    path = Path(root) / split.file_name
    lines = ["labeled:"] + split.labeled + ["unlabeled:"] + split.unlabeled
    path.write_text("\n".join(lines) + "\n")
    return path


def read_split(path) -> SplitSpec:
    """Read a split file; fraction and seed come from its name."""
    path = Path(path)
    match = _FILE_PATTERN.search(path.name)
    if match is None:
        raise ValueError(f"{path.name}: split files are named split_<a>-<b>_<seed>.txt")
    fraction = Fraction(int(match.group(1)), int(match.group(2)))
    sections = {"labeled:": [], "unlabeled:": []}
    current = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line in sections:
            current = sections[line]
        elif current is None:
            raise ValueError(f"{path}:{lineno}: id {line!r} before any 'labeled:'/'unlabeled:' section")
        else:
            current.append(line)
    return SplitSpec(
        fraction=fraction,
        seed=int(match.group(3)),
        labeled=sections["labeled:"],
        unlabeled=sections["unlabeled:"],
    )
