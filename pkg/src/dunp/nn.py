"""Minimal module system: parameter registration, conv, batch norm, linear.

Modules register parameters, buffers, and submodules on attribute
assignment, and expose them with dotted names for optimizers and
checkpoints.  Construction consumes a numpy Generator so that building
the same architecture from the same seed reproduces every weight.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Tensor
from .errors import ConfigurationError


class Parameter(Tensor):
    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, np.ndarray):
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, value: np.ndarray):
        setattr(self, name, value)

    def train(self, mode: bool = True):
        object.__setattr__(self, "training", mode)
        for m in self._modules.values():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_arrays(self) -> dict:
        """Dotted name -> array for every parameter and buffer."""
        out = {name: p.data for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            out[name] = b
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        own = self.state_arrays()
        missing = sorted(set(own) - set(arrays))
        extra = sorted(set(arrays) - set(own))
        if missing or extra:
            raise ConfigurationError(
                f"state mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for name, p in self.named_parameters():
            src = arrays[name]
            if src.shape != p.data.shape:
                raise ConfigurationError(
                    f"state shape mismatch at {name}: {src.shape} vs {p.data.shape}")
            p.data = src.astype(p.data.dtype, copy=True)
        for name, b in self.named_buffers():
            src = arrays[name]
            if src.shape != b.shape:
                raise ConfigurationError(
                    f"state shape mismatch at {name}: {src.shape} vs {b.shape}")
            b[...] = src

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        for m in modules:
            self.append(m)

    def append(self, m: Module):
        setattr(self, str(len(self._modules)), m)
        return self

    def __iter__(self):
        return iter(self._modules.values())

    def __len__(self):
        return len(self._modules)

    def __getitem__(self, i):
        return self._modules[str(i)]


@dataclass(frozen=True)
class ConvSpec:
    """Declarative convolution geometry; padding is always "same"."""
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    dilation: int = 1

    def __post_init__(self):
        for field_name in ("in_channels", "out_channels", "kernel_size", "stride", "dilation"):
            v = getattr(self, field_name)
            if not isinstance(v, int) or v < 1:
                raise ConfigurationError(f"ConvSpec.{field_name} must be a positive int, got {v!r}")

    @property
    def effective_extent(self) -> int:
        return self.dilation * (self.kernel_size - 1) + 1


def he_normal(rng, shape, fan_in, dtype) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, spec: ConvSpec, rng, dtype=np.float32):
        super().__init__()
        self.spec = spec
        k = spec.kernel_size
        fan_in = spec.in_channels * k * k
        self.w = Parameter(he_normal(rng, (spec.out_channels, spec.in_channels, k, k),
                                     fan_in, dtype))
        self.b = Parameter(np.zeros(spec.out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return kernels.conv2d(x, self.w, self.b,
                              stride=self.spec.stride, dilation=self.spec.dilation)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return kernels.batch_norm(x, self.gamma, self.beta,
                                  self.running_mean, self.running_var,
                                  training=self.training,
                                  momentum=self.momentum, eps=self.eps)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng, dtype=np.float32):
        super().__init__()
        self.w = Parameter(he_normal(rng, (in_features, out_features), in_features, dtype))
        self.b = Parameter(np.zeros(out_features, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        from .autodiff import add, matmul
        return add(matmul(x, self.w), self.b)
