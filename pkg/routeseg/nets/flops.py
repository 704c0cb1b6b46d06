from typing import Optional, Sequence

from routeseg.nets.routing_net import STEM_STRIDES, RoutingNet


def conv_macs(c_in, c_out, h_out, w_out, kh=1, kw=1, groups=1) -> int:
    """Multiply-adds of a convolution producing a (c_out, h_out, w_out) map."""
    return c_out * h_out * w_out * (c_in // groups) * kh * kw


def _active(weight, tau) -> bool:
    return tau == 0.0 or weight > tau


def count_flops(net: RoutingNet, input_shape: Sequence[int], tau: Optional[float] = None) -> int:
    """
    Multiply-add count of one forward pass.

    Counts every convolution and linear layer of the STEM, the decoder and
    both heads, plus the cell operations and transitions whose normalized
    gate weight exceeds ``tau``; identity, keep, pooling, upsampling and
    elementwise work are free. Only cells reached from the STEM are counted
    (at layer i, levels 0 to i).

    Parameters
    ----------
    net : RoutingNet
    input_shape : sequence of int
        (B, 3, H, W) or (3, H, W).
    tau : float, optional
        Gate activation threshold in [0, 1); defaults to the network's
        ``gate_activation_threshold``. tau = 0 counts everything regardless
        of gate values.

    Returns
    -------
    int
    """
    cfg = net.config
    tau = cfg.gate_activation_threshold if tau is None else float(tau)
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"tau must be in [0, 1), got {tau}")
    shape = tuple(int(s) for s in input_shape)
    if len(shape) == 3:
        shape = (1,) + shape
    if len(shape) != 4 or shape[1] != 3 or shape[2] % 32 or shape[3] % 32:
        raise ValueError(f"input shape must be (B, 3, H, W) with H, W multiples of 32, got {input_shape}")
    B, _, H, W = shape

    macs = 0
    h, w = H, W
    stem_channels = (3, max(1, cfg.base_channels // 2), cfg.base_channels, cfg.base_channels)
    for ii, stride in enumerate(STEM_STRIDES):
        c_in, c_out = stem_channels[ii], stem_channels[ii + 1]
        h, w = h // stride, w // stride
        macs += conv_macs(c_in, c_in, h, w, 3, 3, groups=c_in)
        macs += conv_macs(c_in, c_out, h, w)

    gates = net.gate_weights()
    for column in net.cells:
        for cell in column:
            if cell.level > cell.layer:
                continue
            weights = gates[(cell.layer, cell.level)]
            C = cell.channels
            hl, wl = h >> cell.level, w >> cell.level
            if _active(weights["ops"][0], tau):
                macs += conv_macs(C, C, hl, wl, 3, 3, groups=C) + conv_macs(C, C, hl, wl)
            for direction, weight in weights["paths"].items():
                if not _active(weight, tau):
                    continue
                if direction == "down":
                    macs += conv_macs(C, 2 * C, hl // 2, wl // 2)
                elif direction == "up":
                    macs += conv_macs(C, C // 2, hl, wl)

    for level in range(cfg.num_levels - 1, 0, -1):
        macs += conv_macs(cfg.channels(level), cfg.channels(level - 1), h >> level, w >> level)
    macs += conv_macs(cfg.base_channels, cfg.num_classes, h, w)
    macs += cfg.channels(cfg.num_levels - 1) * cfg.num_permutations
    return B * macs
