"""Dual attention-gated U-Net composition and checkpoint I/O.

Two structurally identical sub-networks run in sequence.  Each encoder
level is an AG-residual block followed by 2x2 max pooling; the
bottleneck stacks MKRC, SE-ASPP, and TAM; each decoder level computes a
gating signal from the incoming state, attends every skip source with
its own TAG, upsamples, concatenates, and applies an AG-residual block.
Network 2 sees the input multiplied by network 1's mask and receives an
attended skip from both encoders per level (own encoder first in the
concat).  Both heads are 1x1 conv + sigmoid.

Checkpoints are a single binary file: magic ``DUNP``, u32 version,
length-prefixed canonical JSON config, then length-prefixed dotted
names each followed by a tensor record (parameters and batch-norm
running buffers).  Round trips are bit-exact.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict, replace

import numpy as np

from .autodiff import Tensor, sigmoid
from .blocks import AGResidual, GatingSignal, MKRC, SEASPP, TAG, TAM
from .errors import ConfigurationError
from .kernels import concat_channels, maxpool2d, upsample_bilinear2x
from .nn import Conv2d, ConvSpec, Module, ModuleList
from .tensorio import read_tensor, write_tensor

CKPT_MAGIC = b"DUNP"
CKPT_VERSION = 1


@dataclass
class NetworkConfig:
    levels: int = 4
    base_channels: int = 16
    input_size: tuple = (256, 256)
    in_channels: int = 3
    mkrc_on: bool = True
    tam_on: bool = True
    tag_on: bool = True
    deep_supervision_weight: float = 1.0
    seed: int = 0

    def validate(self) -> "NetworkConfig":
        if self.levels < 1:
            raise ConfigurationError(f"levels must be >= 1, got {self.levels}")
        if self.in_channels not in (1, 3):
            raise ConfigurationError(
                f"in_channels must be 1 or 3, got {self.in_channels}")
        if self.base_channels < 2 or self.base_channels % 2:
            raise ConfigurationError(
                f"base_channels must be even and >= 2, got {self.base_channels}")
        if (self.base_channels << self.levels) % 4:
            raise ConfigurationError(
                "bottleneck width must be divisible by 4, got "
                f"{self.base_channels << self.levels}")
        h, w = self.input_size
        if h % (1 << self.levels) or w % (1 << self.levels):
            raise ConfigurationError(
                f"input_size {self.input_size} must be divisible by 2^levels")
        if self.deep_supervision_weight < 0:
            raise ConfigurationError(
                f"deep_supervision_weight must be >= 0, got {self.deep_supervision_weight}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown network config keys: {unknown}")
        d = dict(d)
        if "input_size" in d:
            d["input_size"] = tuple(d["input_size"])
        return cls(**d).validate()

    def with_flags(self, mkrc_on=None, tam_on=None, tag_on=None) -> "NetworkConfig":
        kw = {}
        if mkrc_on is not None:
            kw["mkrc_on"] = mkrc_on
        if tam_on is not None:
            kw["tam_on"] = tam_on
        if tag_on is not None:
            kw["tag_on"] = tag_on
        return replace(self, **kw)


@dataclass
class ModelOutputs:
    mask1: Tensor
    mask2: Tensor
    net2_input: Tensor | None = None


class _SubNet(Module):
    """One U-Net: encoder, bottleneck, decoder with n_skip_sources."""

    def __init__(self, cfg: NetworkConfig, n_skip_sources: int, rng, dtype):
        super().__init__()
        self.levels = cfg.levels
        self.n_skip_sources = n_skip_sources
        widths = [cfg.base_channels << i for i in range(cfg.levels)]
        bottom = cfg.base_channels << cfg.levels

        enc = []
        prev = cfg.in_channels
        for w in widths:
            enc.append(AGResidual(prev, w, rng, tam_on=cfg.tam_on, dtype=dtype))
            prev = w
        self.enc_blocks = ModuleList(enc)
        self.mkrc = MKRC(widths[-1], bottom, rng, enabled=cfg.mkrc_on, dtype=dtype)
        self.aspp = SEASPP(bottom, bottom, rng, dtype=dtype)
        self.btam = TAM(bottom, bottom, rng, enabled=cfg.tam_on, dtype=dtype)

        gates, tags, dec = [], [], []
        d_in = bottom
        for i in range(cfg.levels - 1, -1, -1):
            w = widths[i]
            gates.append(GatingSignal(d_in, w, rng, dtype=dtype))
            tags.append(ModuleList(TAG(w, w, rng, enabled=cfg.tag_on, dtype=dtype)
                                   for _ in range(n_skip_sources)))
            dec.append(AGResidual(d_in + n_skip_sources * w, w, rng,
                                  tam_on=cfg.tam_on, dtype=dtype))
            d_in = w
        self.gates = ModuleList(gates)
        self.tags = ModuleList(tags)
        self.dec_blocks = ModuleList(dec)
        self.head = Conv2d(ConvSpec(widths[0], 1, 1), rng, dtype)

    def encode(self, x: Tensor):
        skips = []
        h = x
        for blk in self.enc_blocks:
            h = blk(h)
            skips.append(h)
            h = maxpool2d(h)
        h = self.btam(self.aspp(self.mkrc(h)))
        return skips, h

    def decode(self, bottom: Tensor, skips_by_source) -> Tensor:
        if len(skips_by_source) != self.n_skip_sources:
            raise ConfigurationError(
                f"decoder expects {self.n_skip_sources} skip sources, "
                f"got {len(skips_by_source)}")
        d = bottom
        for j, i in enumerate(range(self.levels - 1, -1, -1)):
            gate = self.gates[j](d)
            attended = [self.tags[j][s](src[i], gate)
                        for s, src in enumerate(skips_by_source)]
            d = self.dec_blocks[j](
                concat_channels([upsample_bilinear2x(d)] + attended))
        return sigmoid(self.head(d))


class DoubleUNetPlus(Module):
    """Two cascaded attention U-Nets; network 2 refines network 1."""

    def __init__(self, cfg: NetworkConfig, dtype=np.float32):
        super().__init__()
        cfg.validate()
        self.config = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(cfg.seed)
        self.net1 = _SubNet(cfg, 1, rng, dtype)
        self.net2 = _SubNet(cfg, 2, rng, dtype)

    def forward(self, x: Tensor, return_internals: bool = False) -> ModelOutputs:
        if x.ndim != 4:
            raise ConfigurationError(f"model input must be NCHW, got shape {x.shape}")
        if x.shape[1] != self.config.in_channels:
            raise ConfigurationError(
                f"model expects {self.config.in_channels} input channels, "
                f"got {x.shape[1]}")
        div = 1 << self.config.levels
        if x.shape[2] % div or x.shape[3] % div:
            raise ConfigurationError(
                f"input spatial extents {x.shape[2:]} must be divisible by {div}")
        skips1, bottom1 = self.net1.encode(x)
        mask1 = self.net1.decode(bottom1, [skips1])
        x2 = x * mask1
        skips2, bottom2 = self.net2.encode(x2)
        mask2 = self.net2.decode(bottom2, [skips2, skips1])
        return ModelOutputs(mask1, mask2, net2_input=x2 if return_internals else None)

    def summary(self) -> str:
        groups: dict[str, int] = {}
        for name, p in self.named_parameters():
            key = ".".join(name.split(".")[:2])
            groups[key] = groups.get(key, 0) + p.size
        lines = [f"{k:<24} {v:>10,}" for k, v in groups.items()]
        lines.append(f"{'total':<24} {self.param_count():>10,}")
        return "\n".join(lines)


def save_checkpoint(model: DoubleUNetPlus, path) -> None:
    arrays = model.state_arrays()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        cfg = model.config.canonical_json().encode("utf-8")
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            write_tensor(fh, arr)


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ConfigurationError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf


def load_checkpoint(path, dtype=np.float32) -> DoubleUNetPlus:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CKPT_MAGIC:
            raise ConfigurationError(f"not a checkpoint file: {path}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CKPT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4))
        cfg = NetworkConfig.from_dict(json.loads(_read_exact(fh, cfg_len).decode("utf-8")))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            arrays[name] = read_tensor(fh)
    model = DoubleUNetPlus(cfg, dtype=dtype)
    model.load_state_arrays(arrays)
    return model
