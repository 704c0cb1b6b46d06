"""
Dynamic-routing segmentation network.

A fixed STEM reduces the input to 1/4 resolution; a grid of cells spanning
4 resolution levels and L layers propagates features left to right, each
cell mixing a separable convolution with a skip connection and splitting
its output over up/keep/down transitions with learned soft gates; a decoder
sums the levels from the deepest to the finest before the segmentation
head. A pretext head classifies jigsaw permutations from the deepest level.
"""

import copy
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

import routeseg
from routeseg.autodiff import (
    Tensor,
    bilinear_upsample,
    bilinear_upsample2x,
    conv2d,
    global_avg_pool,
    linear,
    no_grad,
    relu,
    separable_conv3x3,
    softmax,
)
from routeseg.nets.config import RoutingConfig
from routeseg.seeding import Seeder
from routeseg.types import Seed

logger = routeseg.logger

DIRECTIONS = ("up", "keep", "down")
# level offset of the cell receiving each transition
LEVEL_SHIFT = {"up": -1, "keep": 0, "down": 1}
STEM_STRIDES = (2, 2, 1)


def init_weights(shape, rng: np.random.Generator, reset_type: str = "kaiming") -> np.ndarray:
    """
    Initial values of a convolution or linear weight.

    Parameters
    ----------
    shape : tuple
        (out, in, ...) weight shape; fan-in is the product of all but the
        first extent.
    rng : numpy.random.Generator
    reset_type : {"kaiming", "zeros"}
        "kaiming": normal with std sqrt(2 / fan_in).
    """
    if reset_type == "kaiming":
        fan_in = int(np.prod(shape[1:]))
        return rng.normal(scale=np.sqrt(2.0 / fan_in), size=shape)
    elif reset_type == "zeros":
        return np.zeros(shape)
    raise ValueError(f"Unknown reset type {reset_type!r}")


class Cell:
    """
    Grid node at (layer, level): two candidate operations mixed by op gates,
    output split over the existing directions by path gates.

    Parameters
    ----------
    layer : int
    level : int
    base_channels : int
    num_levels : int, default: 4
    rng : numpy.random.Generator, optional
    reset_type : str, default: "kaiming"

    Attributes
    ----------
    depthwise, pointwise : Tensor
        Separable 3x3 convolution (stride 1, padding 1).
    op_gate : Tensor
        Logits over (separable conv, identity).
    path_gate : Tensor
        Logits over ``directions``.
    up, down : Tensor or None
        1x1 transition kernels halving (up) or doubling (down) channels;
        None where the direction does not exist.
    """

    def __init__(self, layer, level, base_channels, num_levels=4, rng=None, reset_type="kaiming"):
        rng = rng or np.random.default_rng()
        self.layer = layer
        self.level = level
        self.channels = C = base_channels * 2**level
        self.directions = tuple(
            d for d in DIRECTIONS if 0 <= level + LEVEL_SHIFT[d] < num_levels
        )
        self.depthwise = Tensor(init_weights((C, 1, 3, 3), rng, reset_type), requires_grad=True)
        self.pointwise = Tensor(init_weights((C, C, 1, 1), rng, reset_type), requires_grad=True)
        self.op_gate = Tensor(np.zeros(2), requires_grad=True)
        self.path_gate = Tensor(np.zeros(len(self.directions)), requires_grad=True)
        self.up = None
        self.down = None
        if "up" in self.directions:
            self.up = Tensor(init_weights((C // 2, C, 1, 1), rng, reset_type), requires_grad=True)
        if "down" in self.directions:
            self.down = Tensor(init_weights((2 * C, C, 1, 1), rng, reset_type), requires_grad=True)

    def named_parameters(self, prefix="") -> Iterator[Tuple[str, Tensor]]:
        for name in ("depthwise", "pointwise", "op_gate", "path_gate", "up", "down"):
            tensor = getattr(self, name)
            if tensor is not None:
                yield prefix + name, tensor

    def parameters(self) -> List[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def op_weights(self) -> Tensor:
        return softmax(self.op_gate, axis=0)

    def path_weights(self) -> Tensor:
        return softmax(self.path_gate, axis=0)

    def forward(self, x: Tensor) -> Tensor:
        """op_weight[0] * sepconv(x) + op_weight[1] * x"""
        if x.shape[1] != self.channels:
            raise ValueError(
                f"cell ({self.layer}, {self.level}) expects {self.channels} channels, "
                f"got input {x.shape}"
            )
        weights = self.op_weights()
        conv = separable_conv3x3(x, self.depthwise, self.pointwise)
        return conv * weights[0] + x * weights[1]

    def transition(self, direction: str, out: Tensor) -> Tensor:
        if direction == "keep":
            return out
        if direction == "down":
            return relu(conv2d(out, self.down, stride=2))
        return bilinear_upsample2x(relu(conv2d(out, self.up)))

    def route(self, out: Tensor) -> Dict[str, Tensor]:
        """Gated contributions of ``out`` to the next layer, keyed by direction."""
        weights = self.path_weights()
        return {
            direction: self.transition(direction, out) * weights[ii]
            for ii, direction in enumerate(self.directions)
        }


class RoutingNet:
    """
    Routing network: STEM, cell grid, decoder, segmentation and pretext heads.

    Parameters
    ----------
    config : RoutingConfig
    seeder : routeseg.seeding.Seeder or int, optional
        Source of the initial weights.
    reset_type : {"kaiming", "zeros"}, default: "kaiming"
        Initialization of every convolution and linear weight. Biases and
        gate logits always start at zero (all routes equally open).

    Examples
    --------
    >>> net = RoutingNet(RoutingConfig(num_layers=2, base_channels=4), seeder=1)
    >>> logits = net.forward(Tensor(np.zeros((1, 3, 64, 64))))
    >>> logits.shape
    (1, 4, 64, 64)
    """

    def __init__(self, config: Optional[RoutingConfig] = None, seeder: Optional[Seed] = None, reset_type="kaiming"):
        self.config = config or RoutingConfig()
        self.seeder = Seeder(seeder)
        rng = self.seeder.rng
        cfg = self.config
        C0 = cfg.base_channels
        self._params: Dict[str, Tensor] = {}

        stem_channels = (3, max(1, C0 // 2), C0, C0)
        for ii in range(3):
            c_in, c_out = stem_channels[ii], stem_channels[ii + 1]
            self._register(f"stem.{ii}.depthwise", init_weights((c_in, 1, 3, 3), rng, reset_type))
            self._register(f"stem.{ii}.pointwise", init_weights((c_out, c_in, 1, 1), rng, reset_type))
            self._register(f"stem.{ii}.bias", np.zeros(c_out))

        self.cells: List[List[Cell]] = []
        for layer in range(cfg.num_layers):
            column = []
            for level in range(cfg.num_levels):
                cell = Cell(layer, level, C0, cfg.num_levels, rng=rng, reset_type=reset_type)
                for name, tensor in cell.named_parameters(prefix=f"grid.{layer}.{level}."):
                    self._register(name, tensor)
                column.append(cell)
            self.cells.append(column)

        # decoder.<l> maps level l onto the channels of level l - 1
        for level in range(cfg.num_levels - 1, 0, -1):
            shape = (cfg.channels(level - 1), cfg.channels(level), 1, 1)
            self._register(f"decoder.{level}", init_weights(shape, rng, reset_type))
        self._register("seg_head.weight", init_weights((cfg.num_classes, C0, 1, 1), rng, reset_type))
        self._register("seg_head.bias", np.zeros(cfg.num_classes))
        deepest = cfg.channels(cfg.num_levels - 1)
        self._register(
            "pretext_head.weight", init_weights((cfg.num_permutations, deepest), rng, reset_type)
        )
        self._register("pretext_head.bias", np.zeros(cfg.num_permutations))

        if cfg.num_layers < cfg.num_levels - 1:
            logger.warning(
                f"With {cfg.num_layers} layer(s) the deepest level is never reached: "
                "the pretext head only sees zero features."
            )

    def _register(self, name, value):
        tensor = value if isinstance(value, Tensor) else Tensor(value, requires_grad=True)
        tensor.name = name
        self._params[name] = tensor

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    #
    # Parameters
    #

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def parameters(self) -> List[Tensor]:
        return list(self._params.values())

    def num_parameters(self) -> int:
        return sum(tensor.size for tensor in self._params.values())

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.zero_grad()

    def set_trainable(self, flag: bool):
        """If False, forwards are not recorded for differentiation and no gradient reaches the weights."""
        for tensor in self._params.values():
            tensor.requires_grad = bool(flag)
            tensor.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise ValueError(
                f"state does not match the network: missing {sorted(missing)}, "
                f"unexpected {sorted(unexpected)}"
            )
        for name, tensor in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ValueError(f"{name}: expected shape {tensor.shape}, got {value.shape}")
            tensor.data[...] = value

    def copy(self) -> "RoutingNet":
        """Independent network with identical weights (and gradients cleared)."""
        clone = copy.deepcopy(self)
        clone.zero_grad()
        return clone

    def gate_weights(self) -> Dict[Tuple[int, int], Dict[str, np.ndarray]]:
        """Normalized gates of every cell: {(layer, level): {"ops": ..., "paths": {direction: w}}}."""
        gates = {}
        for column in self.cells:
            for cell in column:
                paths = cell.path_weights().data
                gates[(cell.layer, cell.level)] = dict(
                    ops=cell.op_weights().data.copy(),
                    paths=dict(zip(cell.directions, paths)),
                )
        return gates

    #
    # Forward passes
    #

    def check_input(self, images: Tensor):
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected images of shape (B, 3, H, W), got {images.shape}")
        H, W = images.shape[2:]
        if H % 32 != 0 or W % 32 != 0 or H == 0 or W == 0:
            raise ValueError(
                f"image height and width must be positive multiples of 32, got {H}x{W}"
            )

    def stem_forward(self, images) -> Tensor:
        """Three separable conv + ReLU layers, strides (2, 2, 1): (B, 3, H, W) -> (B, C0, H/4, W/4)."""
        images = images if isinstance(images, Tensor) else Tensor(images)
        self.check_input(images)
        x = images
        for ii, stride in enumerate(STEM_STRIDES):
            x = separable_conv3x3(
                x, self[f"stem.{ii}.depthwise"], self[f"stem.{ii}.pointwise"], stride=stride
            )
            x = relu(x + self[f"stem.{ii}.bias"].reshape(1, -1, 1, 1))
        return x

    def grid_forward(self, stem_out: Tensor) -> List[Tensor]:
        """
        Propagate the STEM output through the grid.

        Each cell's input is the sum of the gated contributions it receives
        from the previous layer; cells that receive nothing are skipped.
        Returns the routed outputs of the last layer, one per level (zeros
        for a level no path reaches).
        """
        cfg = self.config
        inputs: List[Optional[Tensor]] = [stem_out] + [None] * (cfg.num_levels - 1)
        for column in self.cells:
            received: List[Optional[Tensor]] = [None] * cfg.num_levels
            for cell in column:
                x = inputs[cell.level]
                if x is None:
                    continue
                out = cell.forward(x)
                for direction, contribution in cell.route(out).items():
                    target = cell.level + LEVEL_SHIFT[direction]
                    if received[target] is None:
                        received[target] = contribution
                    else:
                        received[target] = received[target] + contribution
            inputs = received

        B, _, h0, w0 = stem_out.shape
        return [
            feature
            if feature is not None
            else Tensor(np.zeros((B, cfg.channels(level), h0 >> level, w0 >> level)))
            for level, feature in enumerate(inputs)
        ]

    def decoder_forward(self, features: List[Tensor]) -> Tensor:
        """Deepest to finest: d <- upsample2x(relu(conv1x1(d))) + feature, then classify and upsample x4."""
        d = features[-1]
        for level in range(len(features) - 1, 0, -1):
            d = bilinear_upsample2x(relu(conv2d(d, self[f"decoder.{level}"]))) + features[level - 1]
        logits = conv2d(d, self["seg_head.weight"], bias=self["seg_head.bias"])
        return bilinear_upsample(logits, 4)

    def forward(self, images) -> Tensor:
        """Segmentation logits (B, num_classes, H, W)."""
        return self.decoder_forward(self.grid_forward(self.stem_forward(images)))

    def pretext_head(self, deepest: Tensor) -> Tensor:
        pooled = global_avg_pool(deepest)
        return linear(pooled, self["pretext_head.weight"], self["pretext_head.bias"])

    def pretext_forward(self, images) -> Tensor:
        """Jigsaw logits (B, k) from the deepest level of the last layer."""
        features = self.grid_forward(self.stem_forward(images))
        return self.pretext_head(features[-1])

    def predict(self, images) -> np.ndarray:
        """Argmax class map (B, H, W)."""
        with no_grad():
            logits = self.forward(images)
        return np.argmax(logits.data, axis=1)
