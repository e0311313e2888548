"""Parameter containers and weight initialisation."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Parameter, conv2d, deconv2d, linear


class Module:
    """Holds named parameters and child modules in registration order."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name: str, data) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        p = Parameter(name, data)
        self._params[name] = p
        return p

    def add_child(self, name: str, module: "Module") -> "Module":
        if name in self._children:
            raise ValueError(f"duplicate child module {name!r}")
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(prefix + cname + ".")

    def parameters(self) -> list[Parameter]:
        """All parameters; each one's ``name`` is rewritten to its fully qualified path."""
        out = []
        for full, p in self.named_parameters():
            p.name = full
            out.append(p)
        return out

    def freeze(self, frozen: bool = True) -> None:
        for _, p in self.named_parameters():
            p.frozen = frozen

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())


def uniform_fan_in(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv(Module):
    def __init__(self, rng, c_in: int, c_out: int, k: int, stride: int = 1, pad: int = 0):
        super().__init__()
        fan_in = c_in * k * k
        self.stride, self.pad = stride, pad
        self.weight = self.add_param("weight", uniform_fan_in(rng, (c_out, c_in, k, k), fan_in))
        self.bias = self.add_param("bias", uniform_fan_in(rng, (c_out,), fan_in))

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.pad)


class Deconv(Module):
    def __init__(self, rng, c_in: int, c_out: int, k: int, stride: int = 1, pad: int = 0, out_pad: int = 0):
        super().__init__()
        fan_in = c_in * k * k
        self.stride, self.pad, self.out_pad = stride, pad, out_pad
        self.weight = self.add_param("weight", uniform_fan_in(rng, (c_in, c_out, k, k), fan_in))
        self.bias = self.add_param("bias", uniform_fan_in(rng, (c_out,), fan_in))

    def __call__(self, x):
        return deconv2d(x, self.weight, self.bias, self.stride, self.pad, self.out_pad)


class Linear(Module):
    def __init__(self, rng, n_in: int, n_out: int, bias: bool = True):
        super().__init__()
        self.weight = self.add_param("weight", uniform_fan_in(rng, (n_out, n_in), n_in))
        self.bias = self.add_param("bias", uniform_fan_in(rng, (n_out,), n_in)) if bias else None

    def __call__(self, x):
        return linear(x, self.weight, self.bias)
