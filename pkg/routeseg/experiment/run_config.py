from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Optional

from routeseg.data.split import parse_fraction


@dataclass
class RunConfig:
    """
    Paths and data selection of a training run.

    Parameters
    ----------
    data_dir : str, optional
        Dataset root with ``images/`` and ``masks/``. Required by ``train``.
    val_dir : str, optional
        Labeled validation set evaluated at the end of every epoch.
    split_file : str, optional
        Split file selecting the labeled ids of ``data_dir``; the other ids
        are used without their masks.
    fraction : str or Fraction, optional
        Labeled fraction in (0, 1], used to draw a split when no split file
        is given. Without either, every sample of ``data_dir`` is labeled.
    split_seed : int, optional
        Seed of the drawn split; defaults to the training seed.
    out : str, default: "results"
        Output directory.
    resume : str, optional
        Checkpoint to resume from.
    """

    data_dir: Optional[str] = None
    val_dir: Optional[str] = None
    split_file: Optional[str] = None
    fraction: Optional[Fraction] = None
    split_seed: Optional[int] = None
    out: str = "results"
    resume: Optional[str] = None

    def __post_init__(self):
        if self.fraction is not None:
            self.fraction = parse_fraction(self.fraction)
        if self.fraction is not None and self.split_file is not None:
            raise ValueError("give either split_file or fraction, not both")

    def validate(self):
        """Check that every referenced path exists."""
        if self.data_dir is None:
            raise ValueError("data_dir is not set")
        for name in ("data_dir", "val_dir", "split_file", "resume"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise FileNotFoundError(f"{name}: {value} does not exist")
        return self

    def to_dict(self) -> dict:
        config = asdict(self)
        if self.fraction is not None:
            config["fraction"] = str(self.fraction)
        return config

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
