"""Flat parameter vectors with a named index map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

QUANTUM = "quantum"


@dataclass(frozen=True)
class ParamLayout:
    """Ordered named blocks partitioning ``0..size-1``."""

    blocks: tuple[tuple[str, tuple[int, ...]], ...]

    @classmethod
    def of(cls, *blocks) -> ParamLayout:
        return cls(tuple((name, tuple(int(s) for s in shape)) for name, shape in blocks))

    @property
    def ranges(self) -> dict[str, slice]:
        out = {}
        start = 0
        for name, shape in self.blocks:
            size = int(np.prod(shape)) if shape else 1
            out[name] = slice(start, start + size)
            start += size
        return out

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        return dict(self.blocks)

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) if s else 1 for _, s in self.blocks)

    def count(self, quantum: bool) -> int:
        return sum(
            int(np.prod(s)) for name, s in self.blocks if (name.startswith(QUANTUM)) == quantum
        )

    def mask(self, names=None, quantum: bool | None = None) -> np.ndarray:
        """Boolean mask over the flat vector selecting blocks."""
        m = np.zeros(self.size, dtype=bool)
        for name, sl in self.ranges.items():
            if names is not None and name not in names:
                continue
            if quantum is not None and name.startswith(QUANTUM) != quantum:
                continue
            m[sl] = True
        return m

    def gather(self, values) -> dict[str, np.ndarray]:
        """Split a flat vector (or a ``(..., d)`` stack) into shaped blocks."""
        values = np.asarray(values)
        if values.shape[-1] != self.size:
            raise ValidationError(f"parameter vector has length {values.shape[-1]}, layout expects {self.size}")
        lead = values.shape[:-1]
        sh = self.shapes
        return {name: values[..., sl].reshape(lead + sh[name]) for name, sl in self.ranges.items()}

    def scatter(self, blocks: dict[str, np.ndarray]) -> np.ndarray:
        """Inverse of :meth:`gather`."""
        parts = []
        for name, shape in self.blocks:
            b = np.asarray(blocks[name], dtype=float)
            lead = b.shape[: b.ndim - len(shape)]
            parts.append(b.reshape(lead + (-1,)))
        return np.concatenate(parts, axis=-1)

    def to_dict(self) -> dict:
        return {name: {"start": sl.start, "stop": sl.stop, "shape": list(self.shapes[name])} for name, sl in self.ranges.items()}


@dataclass
class FlatParams:
    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.layout.size,):
            raise ValidationError(f"expected {self.layout.size} parameters, got shape {self.values.shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.layout.gather(self.values)[name]

    def copy(self) -> FlatParams:
        return FlatParams(self.values.copy(), self.layout)


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ("tanh", "identity"):
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValidationError("dense layer weights/biases have inconsistent shapes")

    def __call__(self, x):
        a = x @ self.weights.T + self.biases
        return np.tanh(a) if self.activation == "tanh" else a


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
