"""Forward pass, loss gradients and deterministic gradient-descent training."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, ValidationError
from ..powerflow.scenarios import Dataset
from ..quantum.circuit import NoiseSpec
from .head import Prediction
from .loss import DEFAULT_WEIGHTS, loss_cotangent, per_sample_loss
from .networks import _values
from .params import FlatParams


def as_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    """Normalized ``(x, y)`` from a :class:`Dataset` or an ``(x, y)`` pair."""
    if isinstance(batch, Dataset):
        return batch.x, batch.y
    x, y = batch
    return np.atleast_2d(np.asarray(x, dtype=float)), np.atleast_2d(np.asarray(y, dtype=float))


def forward(model, x, params, noise: NoiseSpec | None = None) -> Prediction:
    """Prediction for one normalized input ``(2n,)`` or a batch ``(B, 2n)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    vec = model.predict(params, np.atleast_2d(x), noise)
    return Prediction.from_vector(vec[0] if single else vec, model.n)


def dataset_loss(model, params, batch, noise=None, weights=DEFAULT_WEIGHTS) -> float:
    x, y = as_arrays(batch)
    return float(np.mean(per_sample_loss(model.predict(params, x, noise), y, model.n, weights)))


def grad(model, params, batch, noise: NoiseSpec | None = None, weights=DEFAULT_WEIGHTS) -> np.ndarray:
    """Batch-mean gradient of the composite loss w.r.t. the flat parameters."""
    x, y = as_arrays(batch)
    if x.shape[0] == 0:
        raise ValidationError("gradient needs a nonempty batch")
    pred = model.predict(params, x, noise)
    cot = loss_cotangent(pred, y, model.n, weights)
    return model.vjp(params, x, cot, noise).mean(axis=0)


class GradientDescent:
    name = "gd"

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, g: np.ndarray) -> np.ndarray:
        return params - self.lr * g

    def state(self) -> dict:
        return {}

    def load_state(self, state: dict) -> None:
        pass


class Adam:
    """Adam update; an opt-in alternative to plain gradient descent."""

    name = "adam"

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, g):
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1**self.t)
        vh = self.v / (1 - self.b2**self.t)
        return params - self.lr * mh / (np.sqrt(vh) + self.eps)

    def state(self) -> dict:
        if self.m is None:
            return {"t": 0}
        return {"t": self.t, "m": self.m.tolist(), "v": self.v.tolist()}

    def load_state(self, state: dict) -> None:
        self.t = int(state.get("t", 0))
        if "m" in state:
            self.m = np.asarray(state["m"], dtype=float)
            self.v = np.asarray(state["v"], dtype=float)


def make_optimizer(name: str, lr: float):
    if not lr >= 0:
        raise ValidationError(f"lr must be >= 0, got {lr}")
    if name == "gd":
        return GradientDescent(lr)
    if name == "adam":
        return Adam(lr)
    raise ValidationError(f"unknown optimizer {name!r}; expected 'gd' or 'adam'")


@dataclass
class TrainLog:
    """Per-epoch rows plus wall-clock timings.

    Timings are kept apart from the rows so that the rows of two identical
    runs compare equal byte for byte.
    """

    rows: list[dict] = field(default_factory=list)
    wall_seconds: list[float] = field(default_factory=list)
    optimizer_state: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self, path) -> None:
        # sorted so a log restored from a checkpoint writes the same header
        cols = ["epoch"] + sorted({c for r in self.rows for c in r} - {"epoch"})
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> TrainLog:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        cols = lines[0].split(",")
        rows = []
        for ln in lines[1:]:
            vals = ln.split(",")
            rows.append({c: (int(v) if c == "epoch" else float(v)) for c, v in zip(cols, vals)})
        return cls(rows)


def epoch_batches(n_rows: int, batch_size: int | None, rng: np.random.Generator):
    if batch_size is None or batch_size >= n_rows:
        return [np.arange(n_rows)]
    order = rng.permutation(n_rows)
    return [order[i : i + batch_size] for i in range(0, n_rows, batch_size)]


def train_deterministic(
    model,
    data,
    epochs: int,
    lr: float,
    seed: int,
    *,
    test=None,
    batch_size: int | None = None,
    noise: NoiseSpec | None = None,
    optimizer: str = "gd",
    init=None,
    trainable: np.ndarray | None = None,
    start_epoch: int = 0,
    optimizer_state: dict | None = None,
    monitor=None,
) -> tuple[FlatParams, TrainLog]:
    """Minimize the composite loss by (mini-batch) gradient descent.

    Args:
        init: starting parameters; drawn from ``seed`` when omitted.
        trainable: optional boolean mask; other parameters stay fixed.
        start_epoch: number of epochs already completed (for resuming). The
            shuffling stream of epoch ``e`` depends only on ``(seed, e)``, so a
            resumed run follows the uninterrupted one exactly.
        monitor: optional ``fn(epoch, params) -> dict`` whose entries are
            appended to each log row.

    Raises:
        DivergenceError: the loss or gradient became non-finite. The
            exception's ``diagnostics["last_good"]`` holds the last finite
            parameters.
    """
    if not lr >= 0:
        raise ValidationError(f"lr must be >= 0, got {lr}")
    if epochs < 0:
        raise ValidationError(f"epochs must be >= 0, got {epochs}")
    if batch_size is not None and batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    x, y = as_arrays(data)
    if x.shape[0] == 0:
        raise ValidationError("training data is empty")
    params = (
        model.init_params(np.random.default_rng(seed)) if init is None else _values(init).copy()
    )
    opt = make_optimizer(optimizer, lr)
    if optimizer_state:
        opt.load_state(optimizer_state)
    mask = None if trainable is None else np.asarray(trainable, dtype=bool)
    log = TrainLog()
    for epoch in range(start_epoch + 1, start_epoch + epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([seed, epoch])
        last_good = params.copy()
        for idx in epoch_batches(x.shape[0], batch_size, rng):
            g = grad(model, params, (x[idx], y[idx]), noise)
            if mask is not None:
                g = np.where(mask, g, 0.0)
            if not np.all(np.isfinite(g)):
                raise DivergenceError(
                    f"non-finite gradient at epoch {epoch}", epoch=epoch, diagnostics={"last_good": last_good}
                )
            params = opt.step(params, g)
        row = {"epoch": epoch, "train_loss": dataset_loss(model, params, (x, y), noise)}
        if test is not None:
            row["test_loss"] = dataset_loss(model, params, test, noise)
        if not np.isfinite(row["train_loss"]):
            raise DivergenceError(
                f"training loss became non-finite at epoch {epoch}",
                epoch=epoch,
                diagnostics={"last_good": last_good, "row": row},
            )
        if monitor is not None:
            row.update(monitor(epoch, params))
        log.rows.append(row)
        log.wall_seconds.append(time.perf_counter() - t0)
    log.optimizer_state = opt.state()
    return FlatParams(params, model.layout), log
