"""Attention and multi-scale building blocks.

Every block is a Module taking NCHW tensors.  Attention scales are
sigmoid outputs, so they live strictly inside (0, 1).  The ablation
switches (mkrc_on, tam_on, tag_on) swap a block for its plain
counterpart: MKRC falls back to a single 3x3 conv path, TAM and TAG
become pass-throughs.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, amax, relu, reshape, sigmoid, tmean
from .errors import ConfigurationError
from .kernels import concat_channels, global_avg_pool, global_max_pool, upsample_bilinear2x
from .nn import BatchNorm2d, Conv2d, ConvSpec, Linear, Module, ModuleList


def _bottleneck_width(channels: int, reduction: int) -> int:
    return max(1, channels // reduction)


class SEBlock(Module):
    """Squeeze-and-excitation: global pool, bottleneck MLP, channel scale."""

    def __init__(self, channels: int, rng, reduction: int = 4, dtype=np.float32):
        super().__init__()
        self.channels = channels
        hidden = _bottleneck_width(channels, reduction)
        self.fc1 = Linear(channels, hidden, rng, dtype)
        self.fc2 = Linear(hidden, channels, rng, dtype)

    def scale(self, x: Tensor) -> Tensor:
        s = sigmoid(self.fc2(relu(self.fc1(global_avg_pool(x)))))
        return reshape(s, (x.shape[0], self.channels, 1, 1))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.scale(x)


class ChannelAttention(Module):
    """Avg- and max-pooled descriptors through a shared bottleneck,
    concatenated and projected back to one scale per channel."""

    def __init__(self, channels: int, rng, reduction: int = 4, dtype=np.float32):
        super().__init__()
        self.channels = channels
        hidden = _bottleneck_width(channels, reduction)
        self.fc1 = Linear(channels, hidden, rng, dtype)
        self.fc2 = Linear(hidden, channels, rng, dtype)
        self.proj = Linear(2 * channels, channels, rng, dtype)

    def scale(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        avg = self.fc2(relu(self.fc1(global_avg_pool(x))))
        mx = self.fc2(relu(self.fc1(global_max_pool(x))))
        both = concat_channels([reshape(avg, (n, self.channels, 1, 1)),
                                reshape(mx, (n, self.channels, 1, 1))])
        s = sigmoid(self.proj(reshape(both, (n, 2 * self.channels))))
        return reshape(s, (n, self.channels, 1, 1))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.scale(x)


class SpatialAttention(Module):
    """Channel-wise mean and max maps, 7x7 conv, one scale per pixel."""

    def __init__(self, rng, kernel_size: int = 7, dtype=np.float32):
        super().__init__()
        self.conv = Conv2d(ConvSpec(2, 1, kernel_size), rng, dtype)

    def scale(self, x: Tensor) -> Tensor:
        stats = concat_channels([tmean(x, axis=1, keepdims=True),
                                 amax(x, axis=1, keepdims=True)])
        return sigmoid(self.conv(stats))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.scale(x)


class TAM(Module):
    """Triple attention: channel, spatial, and SE branches in parallel,
    concatenated (3C) and fused by a 1x1 conv + BN + ReLU to out_channels.

    Disabled, it is an identity and therefore requires matching widths.
    """

    def __init__(self, in_channels: int, out_channels: int, rng,
                 enabled: bool = True, reduction: int = 4, dtype=np.float32):
        super().__init__()
        self.enabled = enabled
        if not enabled:
            if in_channels != out_channels:
                raise ConfigurationError(
                    f"disabled TAM is an identity; widths {in_channels} != {out_channels}")
            return
        self.ca = ChannelAttention(in_channels, rng, reduction, dtype)
        self.sa = SpatialAttention(rng, dtype=dtype)
        self.se = SEBlock(in_channels, rng, reduction, dtype)
        self.fuse_conv = Conv2d(ConvSpec(3 * in_channels, out_channels, 1), rng, dtype)
        self.fuse_bn = BatchNorm2d(out_channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if not self.enabled:
            return x
        mixed = concat_channels([self.ca(x), self.sa(x), self.se(x)])
        return relu(self.fuse_bn(self.fuse_conv(mixed)))


class AGResidual(Module):
    """Attention-guided residual block.

    Main path: two 3x3 conv + BN + ReLU at half width.  Shortcut: 1x1
    conv + BN + ReLU at half width.  Halves are concatenated, passed
    through ReLU, then TAM.
    """

    def __init__(self, in_channels: int, out_channels: int, rng,
                 tam_on: bool = True, reduction: int = 4, dtype=np.float32):
        super().__init__()
        if out_channels % 2:
            raise ConfigurationError(
                f"AGResidual out_channels must be even, got {out_channels}")
        half = out_channels // 2
        self.conv1 = Conv2d(ConvSpec(in_channels, half, 3), rng, dtype)
        self.bn1 = BatchNorm2d(half, dtype=dtype)
        self.conv2 = Conv2d(ConvSpec(half, half, 3), rng, dtype)
        self.bn2 = BatchNorm2d(half, dtype=dtype)
        self.sc_conv = Conv2d(ConvSpec(in_channels, half, 1), rng, dtype)
        self.sc_bn = BatchNorm2d(half, dtype=dtype)
        self.tam = TAM(out_channels, out_channels, rng, enabled=tam_on,
                       reduction=reduction, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        main = relu(self.bn1(self.conv1(x)))
        main = relu(self.bn2(self.conv2(main)))
        short = relu(self.sc_bn(self.sc_conv(x)))
        return self.tam(relu(concat_channels([main, short])))


MKRC_KERNELS = (1, 3, 5, 7)


class MKRC(Module):
    """Multi-kernel residual convolution.

    Four parallel convs (1/3/5/7) at quarter width, concatenated and
    fused by 1x1 conv + BN + ReLU to half width; a 1x1 conv + BN
    shortcut (no ReLU) supplies the other half; final ReLU after the
    concat.  Disabled, it is a single 3x3 conv + BN + ReLU.
    """

    def __init__(self, in_channels: int, out_channels: int, rng,
                 enabled: bool = True, dtype=np.float32):
        super().__init__()
        self.enabled = enabled
        if not enabled:
            self.conv = Conv2d(ConvSpec(in_channels, out_channels, 3), rng, dtype)
            self.bn = BatchNorm2d(out_channels, dtype=dtype)
            return
        if out_channels % 4:
            raise ConfigurationError(
                f"MKRC out_channels must be divisible by 4, got {out_channels}")
        quarter = out_channels // 4
        half = out_channels // 2
        self.branch_convs = ModuleList(
            Conv2d(ConvSpec(in_channels, quarter, k), rng, dtype) for k in MKRC_KERNELS)
        self.branch_bns = ModuleList(
            BatchNorm2d(quarter, dtype=dtype) for _ in MKRC_KERNELS)
        self.fuse_conv = Conv2d(ConvSpec(out_channels, half, 1), rng, dtype)
        self.fuse_bn = BatchNorm2d(half, dtype=dtype)
        self.sc_conv = Conv2d(ConvSpec(in_channels, half, 1), rng, dtype)
        self.sc_bn = BatchNorm2d(half, dtype=dtype)

    @property
    def kernels(self) -> tuple:
        return MKRC_KERNELS if self.enabled else (3,)

    def forward(self, x: Tensor) -> Tensor:
        if not self.enabled:
            return relu(self.bn(self.conv(x)))
        branches = [relu(bn(conv(x)))
                    for conv, bn in zip(self.branch_convs, self.branch_bns)]
        fused = relu(self.fuse_bn(self.fuse_conv(concat_channels(branches))))
        short = self.sc_bn(self.sc_conv(x))
        return relu(concat_channels([fused, short]))


SEASPP_DILATIONS = (1, 1, 2, 6, 10, 13, 16)


class _ASPPBranch(Module):
    def __init__(self, in_channels: int, width: int, kernel: int, dilation: int,
                 rng, reduction: int, dtype):
        super().__init__()
        self.conv = Conv2d(ConvSpec(in_channels, width, kernel, dilation=dilation),
                           rng, dtype)
        self.bn = BatchNorm2d(width, dtype=dtype)
        self.se = SEBlock(width, rng, reduction, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.se(relu(self.bn(self.conv(x))))


class SEASPP(Module):
    """Atrous spatial pyramid pooling with SE on every branch.

    Seven branches at quarter width: one 1x1 conv, then 3x3 convs at
    dilations 1, 2, 6, 10, 13, 16; each conv + BN + ReLU + SE.  The
    concatenation is fused by 1x1 conv + BN + ReLU to out_channels.
    """

    def __init__(self, in_channels: int, out_channels: int, rng,
                 reduction: int = 4, dtype=np.float32):
        super().__init__()
        if out_channels % 4:
            raise ConfigurationError(
                f"SEASPP out_channels must be divisible by 4, got {out_channels}")
        width = out_channels // 4
        kernels_ = (1,) + (3,) * 6
        self.branches = ModuleList(
            _ASPPBranch(in_channels, width, k, d, rng, reduction, dtype)
            for k, d in zip(kernels_, SEASPP_DILATIONS))
        self.fuse_conv = Conv2d(ConvSpec(7 * width, out_channels, 1), rng, dtype)
        self.fuse_bn = BatchNorm2d(out_channels, dtype=dtype)

    @property
    def dilations(self) -> tuple:
        return SEASPP_DILATIONS

    def forward(self, x: Tensor) -> Tensor:
        mixed = concat_channels([b(x) for b in self.branches])
        return relu(self.fuse_bn(self.fuse_conv(mixed)))


class GatingSignal(Module):
    """1x1 conv + BN + ReLU projecting decoder state to a gate."""

    def __init__(self, in_channels: int, out_channels: int, rng, dtype=np.float32):
        super().__init__()
        self.conv = Conv2d(ConvSpec(in_channels, out_channels, 1), rng, dtype)
        self.bn = BatchNorm2d(out_channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.bn(self.conv(x)))


class TAG(Module):
    """Triple attention gate on a skip connection.

    The skip is strided down to the gate's grid (1x1 conv, stride 2),
    the gate is projected to the same width, and their ReLU-ed sum runs
    through channel, spatial, and SE attention in parallel.  A 1x1 conv
    collapses the concatenation to one channel; its sigmoid, upsampled
    back to the skip's grid, multiplies the skip.  Disabled, the skip
    passes through untouched.
    """

    def __init__(self, skip_channels: int, gate_channels: int, rng,
                 enabled: bool = True, reduction: int = 4, dtype=np.float32):
        super().__init__()
        self.enabled = enabled
        if not enabled:
            return
        f_int = max(1, skip_channels // 2)
        self.theta_x = Conv2d(ConvSpec(skip_channels, f_int, 1, stride=2), rng, dtype)
        self.theta_g = Conv2d(ConvSpec(gate_channels, f_int, 1), rng, dtype)
        self.ca = ChannelAttention(f_int, rng, reduction, dtype)
        self.sa = SpatialAttention(rng, dtype=dtype)
        self.se = SEBlock(f_int, rng, reduction, dtype)
        self.psi = Conv2d(ConvSpec(3 * f_int, 1, 1), rng, dtype)

    def attention_map(self, skip: Tensor, gate: Tensor) -> Tensor:
        a = relu(self.theta_x(skip) + self.theta_g(gate))
        mixed = concat_channels([self.ca(a), self.sa(a), self.se(a)])
        return upsample_bilinear2x(sigmoid(self.psi(mixed)))

    def forward(self, skip: Tensor, gate: Tensor) -> Tensor:
        if not self.enabled:
            return skip
        return skip * self.attention_map(skip, gate)
