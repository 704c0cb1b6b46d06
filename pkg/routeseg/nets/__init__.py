from .config import RoutingConfig
from .routing_net import Cell, RoutingNet, init_weights
from .flops import count_flops
from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_net,
    save_checkpoint,
    save_net,
)
