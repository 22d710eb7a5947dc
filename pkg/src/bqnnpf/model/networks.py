"""Hybrid quantum-classical and fully classical power-flow predictors.

Both predictors share one calling convention, which the trainers, the
Bayesian code and the metrics rely on:

* ``predict(params, x, noise)`` maps normalized inputs ``(B, 2n)`` to the
  normalized prediction vector ``(B, 2n + 2 n_branch)``: voltage magnitudes,
  angles, then from-end active and reactive branch flows.
* ``vjp(params, x, cot, noise)`` returns per-sample vector-Jacobian products
  ``cot_i^T d f(x_i) / d params`` as a ``(B, d)`` array.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..powerflow.case import PowerCase
from ..powerflow.scenarios import Normalization
from ..quantum.circuit import CircuitSpec, NoiseSpec, evaluate_batch, shift_jacobians
from .head import FlowHead
from .params import QUANTUM, DenseLayer, FlatParams, ParamLayout, uniform_fan_in


def _values(params) -> np.ndarray:
    return params.values if isinstance(params, FlatParams) else np.asarray(params, dtype=float)


class _FlowModel:
    kind = "abstract"
    layout: ParamLayout

    def __init__(self, case: PowerCase, target_norm: Normalization):
        self.case = case
        self.n = case.n
        self.n_branch = case.n_branch
        k = 2 * case.n + 2 * case.n_branch
        if target_norm.mean.shape != (k,):
            raise ValidationError(f"target normalization has {target_norm.mean.size} columns, case needs {k}")
        self.target_norm = target_norm
        self.head = FlowHead(case, target_norm)

    @property
    def n_inputs(self) -> int:
        return 2 * self.n

    @property
    def n_outputs(self) -> int:
        return 2 * self.n + 2 * self.n_branch

    @property
    def n_params(self) -> int:
        return self.layout.size

    def _check(self, params, x):
        p = _values(params)
        if p.shape != (self.layout.size,):
            raise ValidationError(f"expected {self.layout.size} parameters, got shape {p.shape}")
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ValidationError(f"input must have {self.n_inputs} columns, got shape {x.shape}")
        return p, x

    def core(self, params, x, noise=None) -> np.ndarray:
        """Normalized ``(V, phi)`` outputs, ``(B, 2n)``."""
        raise NotImplementedError

    def _core_vjp(self, p, x, g_o, noise):
        raise NotImplementedError

    def predict(self, params, x, noise: NoiseSpec | None = None) -> np.ndarray:
        p, x = self._check(params, x)
        o = self.core(p, x, noise)
        return np.concatenate([o, self.head.forward(o)], axis=1)

    def vjp(self, params, x, cot, noise: NoiseSpec | None = None) -> np.ndarray:
        p, x = self._check(params, x)
        cot = np.asarray(cot, dtype=float)
        if cot.shape != (x.shape[0], self.n_outputs):
            raise ValidationError(f"cotangent must have shape {(x.shape[0], self.n_outputs)}, got {cot.shape}")
        return self._core_vjp(p, x, cot, noise)

    def _pull_head(self, o, cot):
        n2 = 2 * self.n
        return cot[:, :n2] + self.head.backward(o, cot[:, n2:])


class HybridModel(_FlowModel):
    """Dense tanh pre-net scaled by pi, a variational circuit, and a linear post-net."""

    kind = "hybrid"

    def __init__(self, case: PowerCase, circuit: CircuitSpec, target_norm: Normalization):
        super().__init__(case, target_norm)
        self.circuit = circuit
        m, n2 = circuit.m, 2 * case.n
        self.layout = ParamLayout.of(
            ("pre.w", (2 * m, n2)),
            ("pre.b", (2 * m,)),
            (QUANTUM, (circuit.n_params,)),
            ("post.w", (n2, m)),
            ("post.b", (n2,)),
        )

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        m, n2 = self.circuit.m, 2 * self.n
        return self.layout.scatter(
            {
                "pre.w": uniform_fan_in(rng, (2 * m, n2), n2),
                "pre.b": uniform_fan_in(rng, (2 * m,), n2),
                QUANTUM: rng.uniform(-np.pi, np.pi, self.circuit.n_params),
                "post.w": uniform_fan_in(rng, (n2, m), m),
                "post.b": uniform_fan_in(rng, (n2,), m),
            }
        )

    def layers(self, params) -> tuple[DenseLayer, DenseLayer]:
        b = self.layout.gather(_values(params))
        return DenseLayer(b["pre.w"], b["pre.b"], "tanh"), DenseLayer(b["post.w"], b["post.b"], "identity")

    def encode_features(self, params, x) -> np.ndarray:
        pre, _ = self.layers(params)
        return np.pi * pre(x)

    def core(self, params, x, noise=None):
        b = self.layout.gather(params)
        feats = self.encode_features(params, x)
        z = evaluate_batch(feats, b[QUANTUM], self.circuit, noise)
        return z @ b["post.w"].T + b["post.b"]

    def _core_vjp(self, p, x, cot, noise):
        b = self.layout.gather(p)
        t = np.tanh(x @ b["pre.w"].T + b["pre.b"])
        z, dz_dq, dz_df = shift_jacobians(np.pi * t, b[QUANTUM], self.circuit, noise)
        o = z @ b["post.w"].T + b["post.b"]
        g_o = self._pull_head(o, cot)
        g_z = g_o @ b["post.w"]
        g_a = np.einsum("bm,bmf->bf", g_z, dz_df) * np.pi * (1.0 - t**2)
        return self.layout.scatter(
            {
                "pre.w": g_a[:, :, None] * x[:, None, :],
                "pre.b": g_a,
                QUANTUM: np.einsum("bm,bmp->bp", g_z, dz_dq),
                "post.w": g_o[:, :, None] * z[:, None, :],
                "post.b": g_o,
            }
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "circuit": self.circuit.to_dict()}


class MLPModel(_FlowModel):
    """``2n -> widths... -> 2n`` network with tanh hidden layers and a linear output."""

    kind = "mlp"

    def __init__(self, case: PowerCase, widths, target_norm: Normalization):
        super().__init__(case, target_norm)
        widths = [int(w) for w in widths]
        if not widths or min(widths) < 1:
            raise ValidationError(f"widths must be a nonempty list of positive integers, got {widths}")
        self.widths = widths
        dims = [2 * case.n, *widths, 2 * case.n]
        self.dims = dims
        blocks = []
        for i in range(len(dims) - 1):
            blocks += [(f"layer{i}.w", (dims[i + 1], dims[i])), (f"layer{i}.b", (dims[i + 1],))]
        self.layout = ParamLayout.of(*blocks)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        blocks = {}
        for i in range(len(self.dims) - 1):
            fan = self.dims[i]
            blocks[f"layer{i}.w"] = uniform_fan_in(rng, (self.dims[i + 1], fan), fan)
            blocks[f"layer{i}.b"] = uniform_fan_in(rng, (self.dims[i + 1],), fan)
        return self.layout.scatter(blocks)

    def layers(self, params) -> list[DenseLayer]:
        b = self.layout.gather(_values(params))
        last = len(self.dims) - 2
        return [
            DenseLayer(b[f"layer{i}.w"], b[f"layer{i}.b"], "identity" if i == last else "tanh")
            for i in range(last + 1)
        ]

    def core(self, params, x, noise=None):
        h = x
        for layer in self.layers(params):
            h = layer(h)
        return h

    def _core_vjp(self, p, x, cot, noise):
        layers = self.layers(p)
        acts = [x]
        for layer in layers:
            acts.append(layer(acts[-1]))
        g = self._pull_head(acts[-1], cot)
        blocks = {}
        for i in range(len(layers) - 1, -1, -1):
            if layers[i].activation == "tanh":
                g = g * (1.0 - acts[i + 1] ** 2)
            blocks[f"layer{i}.w"] = g[:, :, None] * acts[i][:, None, :]
            blocks[f"layer{i}.b"] = g
            g = g @ layers[i].weights
        return self.layout.scatter(blocks)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "widths": list(self.widths)}
