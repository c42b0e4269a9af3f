"""Parameterized layers on top of :mod:`nn.functional`."""
import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from nn import functional as F
from nn.tensor import Tensor
from utils.errors import ShapeError


def layer_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based stream for one layer's initialization."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), *keys])))


def fan_in_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Container of named parameters and child modules.

    Parameter names are dotted paths (``gru.W_z``) in registration order, which
    fixes the layout of checkpoints and optimizer state.
    """

    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)
        self._parameters: "OrderedDict[str, Tensor]" = OrderedDict()
        self._modules: "OrderedDict[str, Module]" = OrderedDict()

    def add_parameter(self, name: str, value: np.ndarray) -> Tensor:
        tensor = Tensor(value, requires_grad=True, name=name)
        self._parameters[name] = tensor
        return tensor

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self._parameters.items():
            yield prefix + name, tensor
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, t.data.copy()) for name, t in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copy values into the parameters.

        Raises:
            ShapeError: On a missing or unexpected name or a shape mismatch
        """
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ShapeError(f"State mismatch: missing {missing}, unexpected {unexpected}")
        for name, tensor in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ShapeError(f"Parameter {name}: expected shape {tensor.shape}, got {value.shape}")
            tensor.data = value.copy()
            tensor.zero_grad()

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameters())


class Dense(Module):
    """Fully connected layer ``act(x W + b)``."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        act: str = "identity",
        zero_init: bool = False,
    ):
        super().__init__()
        F.activation(act)
        self.act = act
        weight = np.zeros((in_dim, out_dim)) if zero_init else fan_in_uniform(rng, (in_dim, out_dim), in_dim)
        self.weight = self.add_parameter("W", weight)
        self.bias = self.add_parameter("b", np.zeros(out_dim))

    def __call__(self, x) -> Tensor:
        return F.dense_forward(x, self.weight, self.bias, self.act)


class GRUCell(Module):
    """GRU recurrence with gates computed from ``[x, h]``."""

    GATES = ("z", "r", "h")

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.input_dim = input_dim
        self.hidden = hidden
        for gate in self.GATES:
            self.add_parameter(f"W_{gate}", fan_in_uniform(rng, (input_dim + hidden, hidden), input_dim + hidden))
            self.add_parameter(f"b_{gate}", np.zeros(hidden))

    @property
    def params(self) -> Dict[str, Tensor]:
        return dict(self._parameters)

    def __call__(self, x, h) -> Tensor:
        return F.gru_step(x, h, self.params)

    def run(self, sequence: np.ndarray) -> Tensor:
        """Final state over a ``(batch, steps, features)`` sequence."""
        if sequence.ndim != 3 or sequence.shape[2] != self.input_dim:
            raise ShapeError(f"GRU expects (batch, steps, {self.input_dim}), got {sequence.shape}")
        return F.run_gru(sequence, self.params, self.hidden)


class GraphConv(Module):
    """Mean-aggregation graph convolution without bias."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, act: str = "relu"):
        super().__init__()
        F.activation(act)
        self.act = act
        self.weight = self.add_parameter("W", fan_in_uniform(rng, (in_dim, out_dim), in_dim))

    def __call__(self, h, operator: sp.csr_matrix) -> Tensor:
        return F.graph_conv_prepared(h, operator, self.weight, self.act)


class Conv1dReadout(Module):
    """1-D convolution over sort-pooled rows followed by a global max."""

    def __init__(
        self,
        row_dim: int,
        channels: int,
        k: int,
        rng: np.random.Generator,
        width: int = 1,
        act: str = "relu",
    ):
        super().__init__()
        if width > k:
            raise ShapeError(f"Kernel width {width} exceeds K={k}")
        self.k = k
        self.width = width
        self.act = act
        self.weight = self.add_parameter("W", fan_in_uniform(rng, (channels, width * row_dim), width * row_dim))
        self.bias = self.add_parameter("b", np.zeros(channels))

    def __call__(self, rows) -> Tensor:
        return F.conv1d_readout(rows, self.weight, self.bias, self.k, self.width, self.act)


class MLPHead(Module):
    """Hidden dense layers followed by a zero-initialized scalar logit."""

    def __init__(self, in_dim: int, hidden: Tuple[int, ...], rng: np.random.Generator, act: str = "relu"):
        super().__init__()
        self.layers: List[Dense] = []
        width = in_dim
        for i, out_dim in enumerate(hidden):
            self.layers.append(self.add_module(f"fc{i}", Dense(width, out_dim, rng, act)))
            width = out_dim
        self.out = self.add_module("out", Dense(width, 1, rng, "identity", zero_init=True))
        self.width = width

    def features(self, x) -> Tensor:
        """Output of the last hidden layer (the layer feeding the scalar logit)."""
        for layer in self.layers:
            x = layer(x)
        return x

    def __call__(self, x) -> Tensor:
        """Logits of shape ``(batch,)``."""
        return F.reshape(self.out(self.features(x)), (-1,))
