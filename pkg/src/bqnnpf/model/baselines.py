"""Comparison models sharing the hybrid model's interface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..powerflow.case import PowerCase
from ..powerflow.scenarios import Normalization
from ..quantum.circuit import CircuitSpec
from .networks import HybridModel, MLPModel

BASELINE_KINDS = ("mlp", "classical_bnn", "plain_qnn")


@dataclass
class BaselineModel:
    """A comparison predictor with its seeded initial parameters.

    ``trainer`` says how it is fitted: ``deterministic`` for the MLP and the
    plain QNN, ``variational`` for the classical Bayesian network.
    """

    kind: str
    model: HybridModel | MLPModel
    init: np.ndarray

    @property
    def trainer(self) -> str:
        return "variational" if self.kind == "classical_bnn" else "deterministic"

    @property
    def n_params(self) -> int:
        return self.model.n_params


def build_baseline(
    kind: str,
    case: PowerCase,
    target_norm: Normalization,
    widths=(16,),
    seed: int = 0,
    m: int = 4,
    layers: int = 2,
) -> BaselineModel:
    if kind not in BASELINE_KINDS:
        raise ValidationError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    if kind == "plain_qnn":
        model = HybridModel(case, CircuitSpec(m, layers), target_norm)
    else:
        if not len(widths):
            raise ValidationError("widths must be nonempty")
        model = MLPModel(case, widths, target_norm)
    return BaselineModel(kind, model, model.init_params(np.random.default_rng(seed)))
