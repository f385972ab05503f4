from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.app.errors import ShapeError
from src.app.nn import functional as F
from src.app.nn.tensor import Tensor


class Parameter(Tensor):
    def __init__(self, data: np.ndarray, name: Optional[str] = None) -> None:
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Base class: walks attributes to find parameters, buffers and sub-modules."""

    buffer_names: Tuple[str, ...] = ()

    def __init__(self) -> None:
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    # - - - - TREE - - - -

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value
            elif isinstance(value, ModuleList):
                for i, module in enumerate(value):
                    yield f"{key}.{i}", module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{key}", value
        for key, child in self.children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for key in self.buffer_names:
            yield f"{prefix}{key}", getattr(self, key)
        for key, child in self.children():
            yield from child.named_buffers(f"{prefix}{key}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    # - - - - MODES - - - -

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # - - - - STATE - - - -

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: np.array(b, copy=True) for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        expected = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(expected) | set(buffers)) - set(state)
        if missing:
            raise ShapeError(f"state is missing entries: {sorted(missing)[:5]}")
        for name, p in expected.items():
            if state[name].shape != p.shape:
                raise ShapeError(f"shape mismatch for {name}: {state[name].shape} vs {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype, copy=True)
        for name, buffer in buffers.items():
            buffer[...] = state[name]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for module in self.modules():
            for key in module.buffer_names:
                setattr(module, key, getattr(module, key).astype(dtype))
        return self


class ModuleList(list):
    pass


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True) -> None:
        super().__init__()
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(uniform_init(rng, (in_features, out_features), bound))
        self.bias = Parameter(uniform_init(rng, (out_features,), bound)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class BatchNorm1d(Module):
    buffer_names = ('running_mean', 'running_var')

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5) -> None:
        super().__init__()
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class DepthwiseConv1d(Module):
    def __init__(self, channels: int, kernel_size: int, rng: np.random.Generator) -> None:
        super().__init__()
        if kernel_size % 2 == 0:
            raise ShapeError(f"depthwise kernel size must be odd, got {kernel_size}")
        bound = 1.0 / np.sqrt(kernel_size)
        self.weight = Parameter(uniform_init(rng, (kernel_size, channels), bound))
        self.bias = Parameter(uniform_init(rng, (channels,), bound))

    def forward(self, x: Tensor) -> Tensor:
        return F.depthwise_conv1d(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator) -> None:
        super().__init__()
        if kernel_size % 2 == 0:
            raise ShapeError(f"conv kernel size must be odd, got {kernel_size}")
        bound = 1.0 / np.sqrt(in_channels * kernel_size)
        self.weight = Parameter(uniform_init(rng, (out_channels, in_channels, kernel_size), bound))
        self.bias = Parameter(uniform_init(rng, (out_channels,), bound))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias)


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator) -> None:
        super().__init__()
        self.p = p
        self.rng = rng

    @property
    def active(self) -> bool:
        return self.training and self.p > 0

    def forward(self, x: Tensor) -> Tensor:
        return F.dropout(x, self.p, self.training, self.rng)


def has_active_dropout(module: Module) -> bool:
    if isinstance(module, Dropout) and module.active:
        return True
    return any(has_active_dropout(child) for _, child in module.children())
