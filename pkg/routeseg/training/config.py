from dataclasses import asdict, dataclass, fields
from typing import Optional

METHODS = ("none", "ssl_only", "mean_teacher", "co_teaching", "full")
STRATEGIES = ("mean_teacher", "co_teaching")
LOSSES = ("ce", "ohem")

# lambda1 / lambda2 defaults of each method; "full" takes lambda2 from its strategy
_LAMBDA1_DEFAULTS = dict(none=0.0, ssl_only=0.1, mean_teacher=0.0, co_teaching=0.0, full=0.1)
_LAMBDA2_DEFAULTS = dict(none=0.0, ssl_only=0.0, mean_teacher=100.0, co_teaching=1.0)


@dataclass
class TrainConfig:
    """
    Training hyperparameters.

    The total loss is ``lambda0 * L_sup + lambda1 * L_ssl + lambda2 * L_ssup``.

    Parameters
    ----------
    method : {"none", "ssl_only", "mean_teacher", "co_teaching", "full"}, default: "none"
        Selects the default weights and the semi-supervised strategy.
        "none" is fully supervised, "ssl_only" adds the jigsaw term, the two
        strategies add the semi-supervised term, "full" adds both.
    strategy : {"mean_teacher", "co_teaching"}, default: "mean_teacher"
        Semi-supervised strategy of the "full" method.
    lambda0 : float, default: 1.0
    lambda1 : float, optional
        Jigsaw weight; 0.1 for "ssl_only" and "full", else 0.
    lambda2 : float, optional
        Semi-supervised weight; 100 for mean teacher, 1.0 for co-teaching.
        A strategy whose weight is 0 is switched off entirely.
    alpha : float, default: 0.99
        EMA coefficient of the mean teacher.
    ema_warmup : bool, default: False
        Use ``min(1 - 1/(t + 1), alpha)`` as EMA coefficient.
    lr0 : float, default: 0.02
    momentum : float, default: 0.9
    poly_power : float, default: 0.9
    epochs : int, default: 1
    iterations_per_epoch : int, optional
        Defaults to the size of the larger training set in use (the labeled
        set alone when no term reads unlabeled images).
    batch_labeled, batch_unlabeled : int, default: 4
    seed : int, optional
    loss : {"ce", "ohem"}, default: "ce"
    ohem_threshold : float, default: 0.7
    ohem_min_kept : int, optional
        Defaults to 1/16 of the valid pixels of the batch.
    crop_size : int, default: 96
        Multiple of 32; of 96 when the jigsaw term is on.
    augment : bool, default: True
    independent_augmentation : bool, default: False
        The second network (teacher or peer b) sees an independently
        flipped view.
    jigsaw_labels : bool, default: False
        Add the segmentation loss of jigsawed labeled images to the jigsaw term.
    rampup_iters : int, default: 0
        Sigmoid ramp-up length of lambda2 in iterations (0: no ramp-up).
    log_interval : int, default: 1
        Iterations between two rows of the metrics file.
    threads : int, default: 1
        1 means deterministic, single-threaded execution.
    """

    method: str = "none"
    strategy: str = "mean_teacher"
    lambda0: float = 1.0
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    alpha: float = 0.99
    ema_warmup: bool = False
    lr0: float = 0.02
    momentum: float = 0.9
    poly_power: float = 0.9
    epochs: int = 1
    iterations_per_epoch: Optional[int] = None
    batch_labeled: int = 4
    batch_unlabeled: int = 4
    seed: Optional[int] = None
    loss: str = "ce"
    ohem_threshold: float = 0.7
    ohem_min_kept: Optional[int] = None
    crop_size: int = 96
    augment: bool = True
    independent_augmentation: bool = False
    jigsaw_labels: bool = False
    rampup_iters: int = 0
    log_interval: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got '{self.method}'")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got '{self.strategy}'")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got '{self.loss}'")
        if self.lambda1 is None:
            self.lambda1 = _LAMBDA1_DEFAULTS[self.method]
        if self.lambda2 is None:
            self.lambda2 = _LAMBDA2_DEFAULTS.get(self.method, _LAMBDA2_DEFAULTS.get(self.strategy))
        for name in ("lambda0", "lambda1", "lambda2"):
            value = float(getattr(self, name))
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")
            setattr(self, name, value)
        if self.lambda2 > 0 and self.method in ("none", "ssl_only"):
            raise ValueError(f"method '{self.method}' has no semi-supervised term, lambda2 must be 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.iterations_per_epoch is not None and self.iterations_per_epoch < 1:
            raise ValueError(f"iterations_per_epoch must be positive, got {self.iterations_per_epoch}")
        if self.lambda0 + self.lambda1 + self.lambda2 == 0:
            raise ValueError("at least one of lambda0, lambda1, lambda2 must be positive")
        if self.batch_labeled < 1 or self.batch_unlabeled < 0:
            raise ValueError(
                f"batch sizes must be >= 1 (labeled) and >= 0 (unlabeled), "
                f"got {self.batch_labeled} and {self.batch_unlabeled}"
            )
        if self.crop_size <= 0 or self.crop_size % 32:
            raise ValueError(f"crop_size must be a positive multiple of 32, got {self.crop_size}")
        if self.uses_jigsaw and self.crop_size % 96:
            raise ValueError(
                f"the jigsaw term needs crop_size to be a multiple of 96, got {self.crop_size}"
            )
        if self.rampup_iters < 0 or self.log_interval < 1 or self.threads < 1:
            raise ValueError("rampup_iters must be >= 0, log_interval and threads >= 1")

    @property
    def semisup_strategy(self) -> Optional[str]:
        """Active semi-supervised strategy, None if lambda2 is 0."""
        if self.lambda2 == 0:
            return None
        return self.strategy if self.method == "full" else self.method

    @property
    def uses_unlabeled(self) -> bool:
        """Whether any loss term reads unlabeled images."""
        return self.uses_jigsaw or self.semisup_strategy is not None

    @property
    def uses_jigsaw(self) -> bool:
        return self.lambda1 > 0

    @property
    def deterministic(self) -> bool:
        return self.threads == 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
