from dataclasses import asdict, dataclass, fields

NUM_LEVELS = 4


@dataclass
class RoutingConfig:
    """
    Shape of the routing network.

    Parameters
    ----------
    num_layers : int, default: 4
        Number of cell columns L in the grid.
    num_levels : int, default: 4
        Number of resolution levels; only 4 is supported.
    base_channels : int, default: 8
        Channels C0 of level 0. Level l carries C0 * 2**l channels at
        stride 4 * 2**l.
    num_classes : int, default: 4
        Classes of the segmentation head (background included).
    num_permutations : int, default: 100
        Classes k of the jigsaw pretext head.
    gate_activation_threshold : float, default: 0.0
        Gate weight tau above which an operation counts as active when
        reporting FLOPs, in [0, 1).
    """

    num_layers: int = 4
    num_levels: int = NUM_LEVELS
    base_channels: int = 8
    num_classes: int = 4
    num_permutations: int = 100
    gate_activation_threshold: float = 0.0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be at least 1, got {self.num_layers}")
        if self.num_levels != NUM_LEVELS:
            raise ValueError(f"num_levels must be {NUM_LEVELS}, got {self.num_levels}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be at least 1, got {self.base_channels}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.num_permutations < 1:
            raise ValueError(f"num_permutations must be at least 1, got {self.num_permutations}")
        if not 0.0 <= self.gate_activation_threshold < 1.0:
            raise ValueError(
                f"gate_activation_threshold must be in [0, 1), got {self.gate_activation_threshold}"
            )

    def channels(self, level: int) -> int:
        return self.base_channels * 2**level

    def stride(self, level: int) -> int:
        return 4 * 2**level

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
